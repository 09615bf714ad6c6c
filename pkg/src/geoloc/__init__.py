"""Unified indoor/outdoor RSSI fingerprint localization toolkit.

Deterministic end-to-end pipeline: dataset ingest and synthesis,
fingerprint preprocessing, a self-contained feed-forward network engine
with verified gradients, transfer learning across environments, a
two-head unified model, evaluation metrics, and binary model archives.
"""

from .datasets import (
    FingerprintDataset,
    SplitSpec,
    generate_synthetic,
    load_fingerprint_csv,
    load_indoor_csv,
    load_outdoor_csv,
    save_csv,
    split,
)
from .errors import (
    ArchiveError,
    ConfigError,
    DataError,
    GeolocError,
    NumericError,
    ParseError,
    SchemaError,
    ShapeError,
    StateError,
)
from .metrics import (
    EvalReport,
    build_cdf,
    env_accuracy,
    evaluate_positions,
    haversine,
    haversine_mde,
    mde,
    rmse,
)
from .models import (
    BaseSpec,
    EncoderSpec,
    HeadSpec,
    LocalizerModel,
    ModelConfig,
    UmlpModel,
    build_localizer,
    build_umlp,
    swap_base,
)
from .persistence import extract_base, load_model, save_model
from .preprocess import (
    NormalizationParams,
    ProcessedSplits,
    apply_normalization,
    balance_concat,
    denormalize_coords,
    drop_sparse_features,
    fit_normalization,
    normalize_coords,
    normalize_rssi,
    preprocess_environment,
    replace_missing,
)
from .training import (
    EarlyStop,
    LearningCurve,
    TrainConfig,
    TransferComparison,
    compare_transfer_to_scratch,
    epochs_to_reach,
    train_localizer,
    train_umlp,
    train_with_transfer,
)

__version__ = "0.1.0"

__all__ = [
    "ArchiveError",
    "BaseSpec",
    "ConfigError",
    "DataError",
    "EarlyStop",
    "EncoderSpec",
    "EvalReport",
    "FingerprintDataset",
    "GeolocError",
    "HeadSpec",
    "LearningCurve",
    "LocalizerModel",
    "ModelConfig",
    "NormalizationParams",
    "NumericError",
    "ParseError",
    "ProcessedSplits",
    "SchemaError",
    "ShapeError",
    "SplitSpec",
    "StateError",
    "TrainConfig",
    "TransferComparison",
    "UmlpModel",
    "apply_normalization",
    "balance_concat",
    "build_cdf",
    "build_localizer",
    "build_umlp",
    "compare_transfer_to_scratch",
    "denormalize_coords",
    "drop_sparse_features",
    "env_accuracy",
    "epochs_to_reach",
    "evaluate_positions",
    "extract_base",
    "fit_normalization",
    "generate_synthetic",
    "haversine",
    "haversine_mde",
    "load_fingerprint_csv",
    "load_indoor_csv",
    "load_model",
    "load_outdoor_csv",
    "mde",
    "normalize_coords",
    "normalize_rssi",
    "preprocess_environment",
    "replace_missing",
    "rmse",
    "save_csv",
    "save_model",
    "split",
    "swap_base",
    "train_localizer",
    "train_umlp",
    "train_with_transfer",
]
