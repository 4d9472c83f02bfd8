"""Deterministic synthetic feature sequences with known loop closures.

A sequence is a first pass over ``places`` distinct places (each observed for
``frames_per_place`` consecutive frames while the camera drifts under a fixed
per-step planar motion), followed by revisits of selected places that replay
the original viewpoints with fresh noise, followed by perceptual-alias frames
that copy the descriptors of a real frame but scramble its keypoint layout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .features import FrameFeatures

IMAGE_SIZE = (640.0, 480.0)
MARGIN = 40.0


@dataclass(frozen=True)
class SynthConfig:
    places: int = 10
    frames_per_place: int = 10
    revisits: tuple[int, ...] = ()
    noise_sigma: float = 0.05
    jitter_px: float = 0.3
    aliased_frames: int = 0
    outlier_frac: float = 0.2
    descriptor_dim: int = 64
    features_per_frame: int = 120
    motion: str = "planar"
    eta: int = 100

    def __post_init__(self):
        object.__setattr__(self, "revisits", tuple(int(p) for p in self.revisits))
        if self.places < 1:
            raise ConfigError("places must be >= 1")
        if self.frames_per_place < 1:
            raise ConfigError("frames_per_place must be >= 1")
        if any(p < 0 or p >= self.places for p in self.revisits):
            raise ConfigError(f"revisits reference unknown places: {self.revisits}")
        if self.noise_sigma < 0 or self.jitter_px < 0:
            raise ConfigError("noise_sigma and jitter_px must be non-negative")
        if self.aliased_frames < 0:
            raise ConfigError("aliased_frames must be >= 0")
        if not 0.0 <= self.outlier_frac < 1.0:
            raise ConfigError("outlier_frac must lie in [0, 1)")
        if self.descriptor_dim < 1 or self.features_per_frame < 1:
            raise ConfigError("descriptor_dim and features_per_frame must be >= 1")
        if self.motion not in ("identity", "planar"):
            raise ConfigError(f"motion must be identity or planar, got {self.motion!r}")
        if self.eta < 0:
            raise ConfigError("eta must be >= 0")

    @property
    def n_outliers(self) -> int:
        return int(round(self.outlier_frac * self.features_per_frame))

    @property
    def n_landmarks(self) -> int:
        return self.features_per_frame - self.n_outliers

    @property
    def first_pass_length(self) -> int:
        return self.places * self.frames_per_place

    @property
    def sequence_length(self) -> int:
        return (
            self.first_pass_length
            + len(self.revisits) * self.frames_per_place
            + self.aliased_frames
        )


_FIELD_TYPES = {f.name: f.type for f in fields(SynthConfig)}


def parse_config(text: str, source: str | None = None) -> SynthConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}", source, lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}" + (f" in {source}" if source else ""))
        try:
            if key == "revisits":
                values[key] = tuple(int(v) for v in value.split(",") if v.strip())
            elif key == "motion":
                values[key] = value
            elif key in ("noise_sigma", "jitter_px", "outlier_frac"):
                values[key] = float(value)
            else:
                values[key] = int(value)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {value!r}", source, lineno) from exc
    return SynthConfig(**values)


def load_config(path: str | os.PathLike) -> SynthConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def format_config(config: SynthConfig) -> str:
    lines = []
    for f in fields(SynthConfig):
        value = getattr(config, f.name)
        if f.name == "revisits":
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"


def step_homography(motion: str) -> np.ndarray:
    """Per-frame camera motion expressed as an image-plane homography."""
    if motion == "identity":
        return np.eye(3)
    cx, cy = IMAGE_SIZE[0] / 2, IMAGE_SIZE[1] / 2
    theta = np.deg2rad(0.3)
    scale = 1.002
    c, s = scale * np.cos(theta), scale * np.sin(theta)
    to_origin = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    back = np.array([[1, 0, cx + 1.5], [0, 1, cy + 0.8], [0, 0, 1.0]])
    persp = np.array([[1, 0, 0], [0, 1, 0], [2e-6, -1e-6, 1.0]])
    return back @ rot @ to_origin @ persp


def apply_homography(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    hom = np.c_[pts, np.ones(len(pts))] @ H.T
    return hom[:, :2] / hom[:, 2:3]


@dataclass(frozen=True)
class SynthSequence:
    frames: list[FrameFeatures]
    ground_truth: list[tuple[int, int]]
    place_of_frame: list[int]  # -1 for alias frames
    alias_sources: dict[int, int]  # alias frame id -> frame whose descriptors it copies


def synth_generate_sequence(config: SynthConfig, seed: int) -> SynthSequence:
    rng = np.random.default_rng(seed)
    D, L, n_out = config.descriptor_dim, config.n_landmarks, config.n_outliers
    w, h = IMAGE_SIZE

    base_desc = rng.standard_normal((config.places, L, D))
    canon = np.stack(
        [
            rng.uniform(MARGIN, w - MARGIN, (config.places, L)),
            rng.uniform(MARGIN, h - MARGIN, (config.places, L)),
        ],
        axis=-1,
    )
    land_scores = rng.uniform(0.2, 1.0, (config.places, L))
    step = step_homography(config.motion)
    poses = [np.linalg.matrix_power(step, j) for j in range(config.frames_per_place)]

    def observe(frame_id, place, view):
        kp = apply_homography(poses[view], canon[place])
        if config.jitter_px > 0:
            kp = kp + config.jitter_px * rng.standard_normal(kp.shape)
        desc = base_desc[place]
        if config.noise_sigma > 0:
            desc = desc + config.noise_sigma * rng.standard_normal(desc.shape)
        scores = land_scores[place]
        if n_out:
            kp = np.r_[kp, np.c_[rng.uniform(0, w, n_out), rng.uniform(0, h, n_out)]]
            desc = np.r_[desc, rng.standard_normal((n_out, D))]
            scores = np.r_[scores, rng.uniform(0.0, 1.0, n_out)]
        return _sorted_frame(frame_id, kp, scores, desc)

    frames: list[FrameFeatures] = []
    place_of: list[int] = []
    for place in range(config.places):
        for view in range(config.frames_per_place):
            frames.append(observe(len(frames), place, view))
            place_of.append(place)
    for place in config.revisits:
        for view in range(config.frames_per_place):
            frames.append(observe(len(frames), place, view))
            place_of.append(place)

    pool = [i for i in range(config.first_pass_length) if place_of[i] not in config.revisits]
    if not pool:
        pool = list(range(config.first_pass_length))
    alias_sources = {}
    for k in range(config.aliased_frames):
        src = frames[pool[k % len(pool)]]
        perm = rng.permutation(len(src))
        alias_id = len(frames)
        frames.append(FrameFeatures(alias_id, src.keypoints[perm], src.scores, src.descriptors))
        place_of.append(-1)
        alias_sources[alias_id] = src.frame_id

    gt = []
    for q, pq in enumerate(place_of):
        if pq < 0:
            continue
        for m in range(q - config.eta):
            if place_of[m] == pq:
                gt.append((q, m))
    return SynthSequence(frames, gt, place_of, alias_sources)


def _sorted_frame(frame_id, kp, scores, desc):
    order = np.argsort(-np.asarray(scores, dtype=np.float32), kind="stable")
    return FrameFeatures(frame_id, kp[order], scores[order], desc[order])


def write_ground_truth(pairs, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q, m in pairs:
            fh.write(f"{q},{m}\n")


def read_ground_truth(path: str | os.PathLike) -> list[tuple[int, int]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"expected query_id,match_id, got {line!r}", str(path), lineno)
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError as exc:
                raise ParseError(f"non-integer id in {line!r}", str(path), lineno) from exc
    return pairs
