"""Loop-closure detection: drift-aware vocabulary, BoW retrieval and
Delaunay graph verification over sequences of keypoint features."""

from .compact_db import CompactDatabase, CompactGroup, average_radius
from .delaunay import TopoGraph, delaunay
from .errors import (
    ConfigError,
    CorruptionError,
    DegenerateTriangulationError,
    DimensionError,
    EmptyCorpusError,
    FormatError,
    InsufficientPointsError,
    InsufficientSequenceError,
    LcdError,
    ParseError,
    ProjectionAtInfinityError,
    SequenceError,
    StateError,
    ZeroDriftWarning,
)
from .features import (
    Feature,
    FrameFeatures,
    Scaler,
    apply_scaler,
    fit_scaler,
    load_frame_features,
    load_sequence,
    save_frame_features,
    save_sequence,
)
from .kmeans import kmeans
from .matching import (
    Match,
    PlanarTransform,
    RansacParams,
    epipolar_distance,
    fm,
    homography_project,
    mutual_nn_match,
    ransac_fundamental,
    ransac_homography,
    two_step_match,
)
from .pipeline import (
    DetectionRecord,
    Evaluation,
    PrPoint,
    detect,
    evaluate,
    evaluate_records,
    run_detect,
    run_train,
    train_vocabulary,
)
from .retrieval import FrameDatabase, LoopCandidate, add_frame, query_candidate
from .synth import SynthConfig, synth_generate_sequence
from .verification import (
    VerificationResult,
    graph_similarity,
    select_top_matches,
    verify_graph,
    verify_ransac,
)
from .vocabulary import (
    BowVector,
    VocabularyTree,
    bow_vector,
    load_vocabulary,
    save_vocabulary,
    similarity,
    train_auto,
)

__version__ = "0.1.0"
