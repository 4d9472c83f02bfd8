"""Per-frame keypoint/descriptor containers, the ``.lcdf`` file format and
per-dimension descriptor standardization."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import CorruptionError, DimensionError, EmptyCorpusError, FormatError

MAGIC = b"LCDF"
VERSION = 1
HEADER = struct.Struct("<4sIII")
DEFAULT_DIM = 256
STD_FLOOR = 1e-8


class Feature(NamedTuple):
    x: float
    y: float
    score: float
    descriptor: np.ndarray


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    """Features of one frame, stored column-wise.

    ``keypoints`` is ``(N, 2)``, ``scores`` is ``(N,)`` and ``descriptors`` is
    ``(N, D)``, all float32. Producers are expected to order features by
    descending score and to avoid duplicate keypoints; only shapes and
    finiteness are enforced here (see :meth:`check_ordering`).
    """

    frame_id: int
    keypoints: np.ndarray
    scores: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        kp = np.ascontiguousarray(self.keypoints, dtype=np.float32).reshape(-1, 2)
        sc = np.ascontiguousarray(self.scores, dtype=np.float32).reshape(-1)
        desc = np.ascontiguousarray(self.descriptors, dtype=np.float32)
        if desc.ndim != 2:
            raise DimensionError(f"descriptors must be 2-D, got shape {desc.shape}")
        if not (len(kp) == len(sc) == len(desc)):
            raise ValueError(
                f"length mismatch: {len(kp)} keypoints, {len(sc)} scores, {len(desc)} descriptors"
            )
        if not (np.isfinite(kp).all() and np.isfinite(sc).all()):
            raise ValueError("keypoints and scores must be finite")
        if self.frame_id < 0:
            raise ValueError("frame_id must be >= 0")
        for arr in (kp, sc, desc):
            arr.setflags(write=False)
        object.__setattr__(self, "keypoints", kp)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "descriptors", desc)

    @classmethod
    def empty(cls, frame_id: int = 0, dim: int = DEFAULT_DIM) -> "FrameFeatures":
        return cls(frame_id, np.zeros((0, 2)), np.zeros(0), np.zeros((0, dim)))

    @classmethod
    def from_features(cls, frame_id: int, features: Sequence[Feature], dim: int | None = None):
        if not features:
            return cls.empty(frame_id, DEFAULT_DIM if dim is None else dim)
        kp = [(f.x, f.y) for f in features]
        sc = [f.score for f in features]
        desc = np.stack([np.asarray(f.descriptor, dtype=np.float32) for f in features])
        return cls(frame_id, kp, sc, desc)

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self):
        return (self.feature(i) for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, FrameFeatures):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.dim == other.dim
            and np.array_equal(self.keypoints, other.keypoints)
            and np.array_equal(self.scores, other.scores)
            and np.array_equal(self.descriptors, other.descriptors)
        )

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def feature(self, i: int) -> Feature:
        x, y = self.keypoints[i]
        return Feature(float(x), float(y), float(self.scores[i]), self.descriptors[i])

    def with_descriptors(self, descriptors: np.ndarray) -> "FrameFeatures":
        return FrameFeatures(self.frame_id, self.keypoints, self.scores, descriptors)

    def check_ordering(self) -> bool:
        """True when scores are non-increasing and no keypoint repeats."""
        if len(self) < 2:
            return True
        if np.any(np.diff(self.scores) > 0):
            return False
        return len(np.unique(self.keypoints, axis=0)) == len(self)


def frame_filename(index: int) -> str:
    return f"{index:06d}.lcdf"


def save_frame_features(frame: FrameFeatures, path: str | os.PathLike) -> None:
    payload = np.empty((len(frame), 3 + frame.dim), dtype="<f4")
    payload[:, :2] = frame.keypoints
    payload[:, 2] = frame.scores
    payload[:, 3:] = frame.descriptors
    data = HEADER.pack(MAGIC, VERSION, len(frame), frame.dim) + payload.tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write feature file {path}: {exc.strerror}") from exc


def load_frame_features(
    path: str | os.PathLike, expected_dim: int | None = None, frame_id: int | None = None
) -> FrameFeatures:
    """Read one ``.lcdf`` file.

    The frame id is taken from the numeric file stem unless given explicitly.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: file shorter than the {HEADER.size}-byte header")
    magic, version, count, dim = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if expected_dim is not None and dim != expected_dim:
        raise DimensionError(f"{path}: descriptor dim {dim}, expected {expected_dim}")
    need = count * (3 + dim) * 4
    body = data[HEADER.size :]
    if len(body) != need:
        raise CorruptionError(
            f"{path}: header declares {count} features ({need} bytes), payload has {len(body)}"
        )
    arr = np.frombuffer(body, dtype="<f4").reshape(count, 3 + dim)
    if frame_id is None:
        frame_id = int(path.stem) if path.stem.isdigit() else 0
    return FrameFeatures(frame_id, arr[:, :2], arr[:, 2], arr[:, 3:])


def list_frame_files(directory: str | os.PathLike) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"feature directory not found: {directory}")
    files = [p for p in directory.glob("*.lcdf") if p.stem.isdigit()]
    return sorted(files, key=lambda p: int(p.stem))


def load_sequence(directory: str | os.PathLike, expected_dim: int | None = None) -> list[FrameFeatures]:
    return [load_frame_features(p, expected_dim) for p in list_frame_files(directory)]


def save_sequence(frames: Iterable[FrameFeatures], directory: str | os.PathLike) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        save_frame_features(frame, directory / frame_filename(frame.frame_id))


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-dimension standardization ``(d - mean) / stddev``."""

    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float32).reshape(-1)
        std = np.asarray(self.stddev, dtype=np.float32).reshape(-1)
        if mean.shape != std.shape:
            raise DimensionError("mean and stddev lengths differ")
        if np.any(std <= 0):
            raise ValueError("stddev entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", std)

    @property
    def dim(self) -> int:
        return len(self.mean)

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(np.zeros(dim), np.ones(dim))

    def __eq__(self, other):
        if not isinstance(other, Scaler):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.stddev, other.stddev)

    __hash__ = None

    def transform(self, descriptors: np.ndarray) -> np.ndarray:
        descriptors = np.asarray(descriptors)
        if descriptors.shape[-1] != self.dim:
            raise DimensionError(f"descriptor dim {descriptors.shape[-1]}, scaler dim {self.dim}")
        out = (descriptors.astype(np.float64) - self.mean) / self.stddev
        return out.astype(np.float32)


def fit_scaler(frames: Iterable[FrameFeatures]) -> Scaler:
    blocks = [f.descriptors for f in frames if len(f)]
    if not blocks:
        raise EmptyCorpusError("cannot fit a scaler on zero descriptors")
    dims = {b.shape[1] for b in blocks}
    if len(dims) != 1:
        raise DimensionError(f"mixed descriptor dimensions in corpus: {sorted(dims)}")
    data = np.concatenate(blocks).astype(np.float64)
    mean = data.mean(axis=0)
    std = data.std(axis=0)  # population stddev
    std[std < STD_FLOOR] = 1.0
    return Scaler(mean, std)


def apply_scaler(scaler: Scaler, frame: FrameFeatures) -> FrameFeatures:
    if frame.dim != scaler.dim:
        raise DimensionError(f"frame {frame.frame_id}: dim {frame.dim}, scaler dim {scaler.dim}")
    return frame.with_descriptors(scaler.transform(frame.descriptors))
