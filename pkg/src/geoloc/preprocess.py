"""Fingerprint preprocessing: sparse-feature pruning, missing-value
replacement, the bounded MinMax RSSI normalization, and coordinate scaling.

Normalization parameters are always fitted on the training split and then
applied unchanged to validation/test data; the fit/apply API split is the
only way to obtain them, so leakage of val/test statistics is impossible
by construction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .datasets import (
    INDOOR_ENV,
    OUTDOOR_ENV,
    RSSI_CEIL,
    RSSI_FLOOR,
    FingerprintDataset,
    SplitSpec,
    _read_csv_rows,
    _to_float_matrix,
    split,
)
from .errors import ConfigError, DataError, SchemaError, ShapeError

# Column names closing out a processed (normalized) CSV.
PROCESSED_LABEL_COLS = ("X_NORM", "Y_NORM", "ENV")

DEFAULT_MISSING_THRESHOLD = 0.98
DEFAULT_REPLACEMENT_DBM = -128.0
DEFAULT_LOWER_BOUND = 0.1
DEFAULT_UPPER_BOUND = 1.0


@dataclass(frozen=True)
class NormalizationParams:
    """Fitted bounds for RSSI and coordinate MinMax scaling.

    Valid RSSI maps affinely from [rssi_min, rssi_max] onto [a, b];
    masked cells map to exactly 0, so ``a > 0`` keeps "missing"
    distinguishable from the weakest valid signal.
    """

    a: float = DEFAULT_LOWER_BOUND
    b: float = DEFAULT_UPPER_BOUND
    rssi_min: float = RSSI_FLOOR
    rssi_max: float = RSSI_CEIL
    coord_min: tuple[float, float] = (0.0, 0.0)
    coord_max: tuple[float, float] = (1.0, 1.0)
    fit_seed: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.a < self.b):
            raise ConfigError(f"need 0 <= a < b, got a={self.a}, b={self.b}")
        if not self.rssi_min < self.rssi_max:
            raise ConfigError(
                f"need rssi_min < rssi_max, got [{self.rssi_min}, {self.rssi_max}]"
            )
        for lo, hi in zip(self.coord_min, self.coord_max):
            if not lo < hi:
                raise ConfigError(f"degenerate coordinate axis: [{lo}, {hi}]")


def save_norm_params(params: NormalizationParams, path) -> None:
    """Write the params to a JSON sidecar (``*.norm.json``)."""
    payload = {
        "a": params.a,
        "b": params.b,
        "rssi_min": params.rssi_min,
        "rssi_max": params.rssi_max,
        "coord_min": list(params.coord_min),
        "coord_max": list(params.coord_max),
        "fit_seed": params.fit_seed,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_norm_params(path) -> NormalizationParams:
    with open(path) as fh:
        raw = json.load(fh)
    return NormalizationParams(
        a=raw["a"],
        b=raw["b"],
        rssi_min=raw["rssi_min"],
        rssi_max=raw["rssi_max"],
        coord_min=tuple(raw["coord_min"]),
        coord_max=tuple(raw["coord_max"]),
        fit_seed=raw.get("fit_seed"),
    )


def drop_sparse_features(
    dataset: FingerprintDataset, missing_threshold: float = DEFAULT_MISSING_THRESHOLD
) -> tuple[FingerprintDataset, tuple[str, ...]]:
    """Drop features whose missing fraction strictly exceeds the threshold.

    Returns the pruned dataset and the kept feature ids in original order.
    """
    if not (0.0 < missing_threshold <= 1.0):
        raise ConfigError(f"missing_threshold must lie in (0, 1], got {missing_threshold}")
    missing_frac = 1.0 - dataset.mask.mean(axis=0)
    keep = np.flatnonzero(missing_frac <= missing_threshold)
    if keep.size == 0:
        raise DataError("all features exceed the missing threshold; nothing left")
    pruned = dataset.select_features(keep)
    return pruned, pruned.feature_ids


def project_features(
    dataset: FingerprintDataset, feature_ids
) -> FingerprintDataset:
    """Restrict a dataset to a feature-id list fitted on another split."""
    index = {fid: i for i, fid in enumerate(dataset.feature_ids)}
    try:
        cols = [index[fid] for fid in feature_ids]
    except KeyError as exc:
        raise SchemaError(f"feature id {exc.args[0]!r} not present in dataset") from None
    return dataset.select_features(cols)


def replace_missing(
    dataset: FingerprintDataset, replacement: float = DEFAULT_REPLACEMENT_DBM
) -> FingerprintDataset:
    """Fill masked cells with a fixed dBm value; the mask itself is kept."""
    if not (RSSI_FLOOR <= replacement <= RSSI_CEIL):
        raise ConfigError(
            f"replacement must lie in [{RSSI_FLOOR:.0f}, {RSSI_CEIL:.0f}] dBm"
        )
    features = np.where(dataset.mask, dataset.features, replacement)
    return FingerprintDataset(
        features,
        dataset.labels,
        dataset.mask,
        dataset.feature_ids,
        dataset.env_tag,
        dataset.missing_sentinel,
        dict(dataset.meta),
    )


def fit_normalization(
    train: FingerprintDataset,
    a: float = DEFAULT_LOWER_BOUND,
    b: float = DEFAULT_UPPER_BOUND,
    fit_seed: int | None = None,
) -> NormalizationParams:
    """Fit RSSI bounds over valid cells and coordinate bounds per axis."""
    if train.n_samples == 0:
        raise DataError("cannot fit normalization on an empty split")
    valid = train.features[train.mask]
    if valid.size == 0:
        raise DataError("no valid RSSI cell anywhere in the fit split")
    rssi_min, rssi_max = float(valid.min()), float(valid.max())
    if rssi_min == rssi_max:
        raise DataError("all valid RSSI values identical; bounds are degenerate")
    coord_min = train.labels.min(axis=0)
    coord_max = train.labels.max(axis=0)
    return NormalizationParams(
        a=a,
        b=b,
        rssi_min=rssi_min,
        rssi_max=rssi_max,
        coord_min=(float(coord_min[0]), float(coord_min[1])),
        coord_max=(float(coord_max[0]), float(coord_max[1])),
        fit_seed=fit_seed,
    )


def normalize_rssi(values, mask, params: NormalizationParams):
    """Map RSSI onto [a, b]; masked cells go to exactly 0.

    Values outside the fitted bounds are clamped before mapping, so the
    output of valid cells always lies in [a, b].
    """
    v = np.asarray(values, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if v.shape != m.shape:
        raise ShapeError("values and mask must have the same shape")
    clamped = np.clip(v, params.rssi_min, params.rssi_max)
    scale = (params.b - params.a) / (params.rssi_max - params.rssi_min)
    mapped = params.a + (clamped - params.rssi_min) * scale
    out = np.where(m, mapped, 0.0)
    return out if out.ndim else float(out)


def normalize_coords(labels, params: NormalizationParams):
    """MinMax-scale coordinates so the fit split's extremes map to 0 and 1."""
    lo = np.asarray(params.coord_min, dtype=np.float64)
    hi = np.asarray(params.coord_max, dtype=np.float64)
    return (np.asarray(labels, dtype=np.float64) - lo) / (hi - lo)


def denormalize_coords(normalized, params: NormalizationParams):
    """Inverse of :func:`normalize_coords`: back to the native metric frame."""
    lo = np.asarray(params.coord_min, dtype=np.float64)
    hi = np.asarray(params.coord_max, dtype=np.float64)
    return np.asarray(normalized, dtype=np.float64) * (hi - lo) + lo


def apply_normalization(
    dataset: FingerprintDataset, params: NormalizationParams
) -> FingerprintDataset:
    """Normalize features and labels of a whole dataset with fitted params."""
    return FingerprintDataset(
        normalize_rssi(dataset.features, dataset.mask, params),
        normalize_coords(dataset.labels, params),
        dataset.mask,
        dataset.feature_ids,
        dataset.env_tag,
        dataset.missing_sentinel,
        {**dataset.meta, "normalized": True},
    )


def balance_concat(
    indoor: FingerprintDataset, outdoor: FingerprintDataset, seed: int = 0
) -> FingerprintDataset:
    """Build a balanced two-environment set for the unified model.

    Takes ``min(N_indoor, N_outdoor)`` rows from each source (sampled
    without replacement), zero-pads the outdoor feature vector to the
    indoor width (0 doubles as the missing code after normalization), and
    randomly interleaves the rows.  Deterministic per seed.  Coordinate
    labels stay in each environment's own normalized frame.
    """
    if indoor.n_samples == 0 or outdoor.n_samples == 0:
        raise DataError("balance_concat needs two non-empty datasets")
    if outdoor.n_features > indoor.n_features:
        raise ShapeError(
            f"outdoor width {outdoor.n_features} exceeds indoor width "
            f"{indoor.n_features}; zero-padding cannot unify them"
        )
    pad = indoor.n_features - outdoor.n_features
    out_feats = np.pad(outdoor.features, ((0, 0), (0, pad)))
    out_mask = np.pad(outdoor.mask, ((0, 0), (0, pad)))

    rng = np.random.default_rng(seed)
    n = min(indoor.n_samples, outdoor.n_samples)
    idx_in = rng.choice(indoor.n_samples, size=n, replace=False)
    idx_out = rng.choice(outdoor.n_samples, size=n, replace=False)

    features = np.vstack([indoor.features[idx_in], out_feats[idx_out]])
    labels = np.vstack([indoor.labels[idx_in], outdoor.labels[idx_out]])
    mask = np.vstack([indoor.mask[idx_in], out_mask[idx_out]])
    env = np.concatenate(
        [
            np.full(n, INDOOR_ENV, dtype=np.int64),
            np.full(n, OUTDOOR_ENV, dtype=np.int64),
        ]
    )
    perm = rng.permutation(2 * n)
    return FingerprintDataset(
        features[perm],
        labels[perm],
        mask[perm],
        indoor.feature_ids,
        env[perm],
        indoor.missing_sentinel,
        {"balance_seed": seed, "outdoor_width_before_padding": outdoor.n_features},
    )


def save_processed_csv(dataset: FingerprintDataset, path, env_code: int | None = None) -> None:
    """Write a normalized dataset to the processed interchange CSV.

    Columns are the feature ids followed by X_NORM, Y_NORM, ENV.  Missing
    cells are stored as 0, so valid cells must be nonzero (guaranteed when
    the normalization lower bound a > 0); floats use repr and round-trip
    exactly through :func:`load_processed_csv`.
    """
    if dataset.env_tag is not None:
        env = dataset.env_tag
    elif env_code is not None:
        env = np.full(dataset.n_samples, int(env_code), dtype=np.int64)
    else:
        raise ConfigError("dataset has no env_tag; pass env_code explicitly")
    if np.any(dataset.features[dataset.mask] == 0.0):
        raise DataError(
            "valid cells equal to 0 would read back as missing; "
            "normalize with a lower bound a > 0"
        )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_ids) + list(PROCESSED_LABEL_COLS))
        for i in range(dataset.n_samples):
            row = [repr(float(v)) for v in dataset.features[i]]
            row += [repr(float(c)) for c in dataset.labels[i]]
            row.append(str(int(env[i])))
            writer.writerow(row)


def load_processed_csv(path) -> FingerprintDataset:
    """Read a processed interchange CSV back into a dataset.

    The validity mask is reconstructed as ``features != 0``.
    """
    header, rows = _read_csv_rows(path)
    tail = tuple(header[-3:])
    if len(header) < 4 or tail != PROCESSED_LABEL_COLS:
        raise SchemaError(
            f"{path}: processed CSV must end with columns "
            f"{','.join(PROCESSED_LABEL_COLS)}, found {','.join(tail)}"
        )
    matrix = _to_float_matrix(rows, list(range(len(header))), header, len(header))
    features = matrix[:, :-3]
    labels = matrix[:, -3:-1]
    env = matrix[:, -1]
    if not np.all((env == INDOOR_ENV) | (env == OUTDOOR_ENV)):
        raise DataError(f"{path}: ENV column must be 0 or 1")
    return FingerprintDataset(
        features=features,
        labels=labels,
        mask=features != 0.0,
        feature_ids=tuple(header[:-3]),
        env_tag=env.astype(np.int64),
        missing_sentinel=0.0,
        meta={"source": str(path), "processed": True},
    )


@dataclass(frozen=True)
class ProcessedSplits:
    """Output of the single-environment preprocessing pipeline."""

    train: FingerprintDataset
    val: FingerprintDataset
    test: FingerprintDataset
    params: NormalizationParams
    kept_feature_ids: tuple[str, ...]
    raw_feature_count: int


def preprocess_environment(
    raw: FingerprintDataset,
    missing_threshold: float = DEFAULT_MISSING_THRESHOLD,
    replacement: float = DEFAULT_REPLACEMENT_DBM,
    a: float = DEFAULT_LOWER_BOUND,
    b: float = DEFAULT_UPPER_BOUND,
    split_spec: SplitSpec | None = None,
) -> ProcessedSplits:
    """Split, prune, fill, fit, and normalize one environment end to end.

    The sparse-feature rule and the normalization bounds are computed on
    the training split only and projected onto val/test.
    """
    spec = split_spec or SplitSpec()
    train, val, test = split(raw, spec)
    train, kept = drop_sparse_features(train, missing_threshold)
    val = project_features(val, kept)
    test = project_features(test, kept)
    train = replace_missing(train, replacement)
    val = replace_missing(val, replacement)
    test = replace_missing(test, replacement)
    params = fit_normalization(train, a=a, b=b, fit_seed=spec.seed)
    return ProcessedSplits(
        train=apply_normalization(train, params),
        val=apply_normalization(val, params),
        test=apply_normalization(test, params),
        params=params,
        kept_feature_ids=kept,
        raw_feature_count=raw.n_features,
    )
