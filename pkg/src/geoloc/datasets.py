"""Loading, synthesis, and splitting of RSSI fingerprint datasets.

Two raw wire formats are supported: indoor Wi-Fi scans (``WAP*`` columns,
+100 dBm marks a dead cell) and outdoor LoRa gateway scans (``BS*``/``GW*``
columns, -200 dBm marks a dead cell).  Ingest remaps both markers onto an
out-of-band validity mask so downstream code never branches on magic dBm
values.  Column detection is by header-name prefix, not position.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ParseError, SchemaError, ShapeError

INDOOR_ENV = 0
OUTDOOR_ENV = 1
ENV_NAMES = {INDOOR_ENV: "indoor", OUTDOOR_ENV: "outdoor"}

# Raw-file missing markers and the canonical in-matrix value for masked cells.
INDOOR_FILE_MISSING = 100.0
OUTDOOR_FILE_MISSING = -200.0
NOT_RECEIVED = -200.0

RSSI_FLOOR = -200.0
RSSI_CEIL = 0.0

# Log-distance path-loss constants for the synthetic generator.
TX_POWER_DBM = -30.0
REF_DISTANCE_M = 1.0
PATH_LOSS_EXPONENT = {"indoor": 3.0, "outdoor": 2.7}

# Synthetic outdoor labels are WGS-84 degrees around this anchor (Antwerp).
OUTDOOR_ANCHOR_LAT = 51.2
OUTDOOR_ANCHOR_LON = 4.4
METERS_PER_DEG = math.radians(1.0) * 6371.01e3


@dataclass(frozen=True)
class FingerprintDataset:
    """RSSI fingerprint matrix with coordinate labels and a validity mask.

    ``features[i, j]`` is the RSSI in dBm that sample ``i`` observed from
    transmitter ``j``; cells where no signal was received hold
    ``missing_sentinel`` and are ``False`` in ``mask``.  ``labels`` rows are
    (x, y) in the dataset's metric frame indoors and (longitude, latitude)
    degrees outdoors.  Instances are immutable and safe to share.
    """

    features: np.ndarray
    labels: np.ndarray
    mask: np.ndarray
    feature_ids: tuple[str, ...]
    env_tag: np.ndarray | None = None
    missing_sentinel: float = NOT_RECEIVED
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        mask = np.ascontiguousarray(self.mask, dtype=bool)
        if feats.ndim != 2:
            raise ShapeError("features must be a 2-D matrix")
        if labels.ndim != 2 or labels.shape[0] != feats.shape[0]:
            raise ShapeError("labels must have one row per sample")
        if mask.shape != feats.shape:
            raise ShapeError("mask shape must match features")
        ids = tuple(str(f) for f in self.feature_ids)
        if len(ids) != feats.shape[1]:
            raise ShapeError("feature_ids length must equal feature count")
        env = self.env_tag
        if env is not None:
            env = np.ascontiguousarray(env, dtype=np.int64)
            if env.shape != (feats.shape[0],):
                raise ShapeError("env_tag must have one entry per sample")
            env.flags.writeable = False
        for arr in (feats, labels, mask):
            arr.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "feature_ids", ids)
        object.__setattr__(self, "env_tag", env)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "FingerprintDataset":
        """New dataset containing the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.intp)
        return FingerprintDataset(
            self.features[idx],
            self.labels[idx],
            self.mask[idx],
            self.feature_ids,
            None if self.env_tag is None else self.env_tag[idx],
            self.missing_sentinel,
            dict(self.meta),
        )

    def select_features(self, column_indices) -> "FingerprintDataset":
        """New dataset keeping only the given feature columns, in order."""
        idx = np.asarray(column_indices, dtype=np.intp)
        return FingerprintDataset(
            self.features[:, idx],
            self.labels,
            self.mask[:, idx],
            tuple(self.feature_ids[i] for i in idx),
            self.env_tag,
            self.missing_sentinel,
            dict(self.meta),
        )



@dataclass(frozen=True)
class SplitSpec:
    """Train/val/test fractions plus the shuffle seed."""

    train_fraction: float = 0.70
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    seed: int = 42

    def __post_init__(self):
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        for f in fracs:
            if not (0.0 < f < 1.0):
                raise ConfigError(f"split fractions must lie in (0, 1), got {f}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def _read_csv_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Return (header, [(line_number, row), ...]), skipping '#' comments."""
    header = None
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if header is None:
                header = [c.strip() for c in row]
            else:
                rows.append((lineno, row))
    if header is None:
        raise SchemaError(f"{path}: no header row found")
    return header, rows


def _find_column(header: list[str], name: str) -> int:
    matches = [i for i, c in enumerate(header) if c.upper() == name.upper()]
    if not matches:
        raise SchemaError(f"required column {name!r} not found in header")
    return matches[0]


def _to_float_matrix(rows, keep, header, n_columns):
    """Convert the kept cells of every row to float64, naming bad rows."""
    data = []
    for lineno, row in rows:
        if len(row) != n_columns:
            raise ParseError(
                f"row {lineno}: expected {n_columns} columns, got {len(row)}"
            )
        data.append([row[i] for i in keep])
    try:
        return np.asarray(data, dtype=np.float64)
    except ValueError:
        for (lineno, row), cells in zip(rows, data):
            for j, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise ParseError(
                        f"row {lineno}: non-numeric value {cell!r} "
                        f"in column {header[keep[j]]!r}"
                    ) from None
        raise


def _check_rssi_range(values, mask_marker, rows, header, rssi_cols):
    ok = (values == mask_marker) | ((values >= RSSI_FLOOR) & (values <= RSSI_CEIL))
    if not ok.all():
        i, j = np.argwhere(~ok)[0]
        lineno = rows[i][0]
        raise DataError(
            f"row {lineno}: RSSI {values[i, j]} in column {header[rssi_cols[j]]!r} "
            f"outside [{RSSI_FLOOR:.0f}, {RSSI_CEIL:.0f}] dBm"
        )


def load_indoor_csv(path) -> FingerprintDataset:
    """Load an indoor Wi-Fi fingerprint CSV (WAP columns, +100 = missing)."""
    header, rows = _read_csv_rows(path)
    rssi_cols = [i for i, c in enumerate(header) if c.upper().startswith("WAP")]
    if not rssi_cols:
        raise SchemaError(f"{path}: no WAP-prefixed feature columns in header")
    lon_col = _find_column(header, "LONGITUDE")
    lat_col = _find_column(header, "LATITUDE")
    keep = rssi_cols + [lon_col, lat_col]
    matrix = _to_float_matrix(rows, keep, header, len(header))
    rssi = matrix[:, : len(rssi_cols)]
    _check_rssi_range(rssi, INDOOR_FILE_MISSING, rows, header, rssi_cols)
    mask = rssi != INDOOR_FILE_MISSING
    features = np.where(mask, rssi, NOT_RECEIVED)
    return FingerprintDataset(
        features=features,
        labels=matrix[:, len(rssi_cols) :],
        mask=mask,
        feature_ids=tuple(header[i] for i in rssi_cols),
        env_tag=np.full(matrix.shape[0], INDOOR_ENV, dtype=np.int64),
        meta={"source": str(path)},
    )


def load_outdoor_csv(path) -> FingerprintDataset:
    """Load an outdoor LoRa fingerprint CSV (BS/GW columns, -200 = missing)."""
    header, rows = _read_csv_rows(path)
    rssi_cols = [
        i
        for i, c in enumerate(header)
        if c.upper().startswith("BS") or c.upper().startswith("GW")
    ]
    if not rssi_cols:
        raise SchemaError(f"{path}: no BS/GW-prefixed feature columns in header")
    lat_col = _find_column(header, "Latitude")
    lon_col = _find_column(header, "Longitude")
    keep = rssi_cols + [lon_col, lat_col]
    matrix = _to_float_matrix(rows, keep, header, len(header))
    rssi = matrix[:, : len(rssi_cols)]
    _check_rssi_range(rssi, OUTDOOR_FILE_MISSING, rows, header, rssi_cols)
    labels = matrix[:, len(rssi_cols) :]
    lon, lat = labels[:, 0], labels[:, 1]
    if (np.abs(lat) > 90).any() or (np.abs(lon) > 180).any():
        bad = int(np.argmax((np.abs(lat) > 90) | (np.abs(lon) > 180)))
        raise DataError(f"row {rows[bad][0]}: coordinates outside WGS-84 bounds")
    mask = rssi != OUTDOOR_FILE_MISSING
    return FingerprintDataset(
        features=rssi,
        labels=labels,
        mask=mask,
        feature_ids=tuple(header[i] for i in rssi_cols),
        env_tag=np.full(matrix.shape[0], OUTDOOR_ENV, dtype=np.int64),
        meta={"source": str(path)},
    )


def load_fingerprint_csv(path) -> FingerprintDataset:
    """Load either wire format, detecting the schema from header prefixes."""
    header, _ = _read_csv_rows(path)
    if any(c.upper().startswith("WAP") for c in header):
        return load_indoor_csv(path)
    return load_outdoor_csv(path)


def _format_value(x: float) -> str:
    f = float(x)
    return str(int(f)) if f.is_integer() else repr(f)


def save_csv(dataset: FingerprintDataset, path, comment: str | None = None) -> None:
    """Write a dataset back to its environment's wire format.

    Indoor datasets use the WAP schema (+100 for masked cells); outdoor
    datasets use the gateway schema (-200 for masked cells).  Synthetic
    datasets carry their seed as a leading ``# synthetic seed=<s>`` line.
    Valid cells and coordinates round-trip exactly.
    """
    env = _uniform_env(dataset)
    if comment is None and "synthetic_seed" in dataset.meta:
        comment = f"synthetic seed={dataset.meta['synthetic_seed']}"
    if env == OUTDOOR_ENV:
        coord_names = ("Latitude", "Longitude")
        coords = dataset.labels[:, ::-1]
        marker = OUTDOOR_FILE_MISSING
    else:
        coord_names = ("LONGITUDE", "LATITUDE")
        coords = dataset.labels
        marker = INDOOR_FILE_MISSING
    values = np.where(dataset.mask, dataset.features, marker)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(list(dataset.feature_ids) + list(coord_names))
        for i in range(dataset.n_samples):
            writer.writerow(
                [_format_value(v) for v in values[i]]
                + [_format_value(c) for c in coords[i]]
            )


def _uniform_env(dataset: FingerprintDataset) -> int:
    if dataset.env_tag is None:
        return INDOOR_ENV
    tags = np.unique(dataset.env_tag)
    if len(tags) > 1:
        raise ConfigError("cannot write a mixed-environment dataset to one file")
    return int(tags[0])


def log_distance_rssi(distance_m, exponent, tx_power=TX_POWER_DBM, d0=REF_DISTANCE_M):
    """Noise-free log-distance path-loss RSSI; distances are clamped to d0."""
    d = np.maximum(np.asarray(distance_m, dtype=np.float64), d0)
    return tx_power - 10.0 * exponent * np.log10(d / d0)


def generate_synthetic(
    n_samples: int,
    n_transmitters: int,
    area: float,
    env: str = "indoor",
    noise_std: float = 4.0,
    missing_prob: float = 0.0,
    seed: int = 0,
) -> FingerprintDataset:
    """Synthesize a fingerprint dataset from a log-distance path-loss model.

    Transmitters and sample positions are drawn uniformly over an
    ``area`` x ``area`` square (meters).  Each cell is independently masked
    with probability ``missing_prob``.  Deterministic for a fixed seed.
    """
    if env not in PATH_LOSS_EXPONENT:
        raise ConfigError(f"env must be 'indoor' or 'outdoor', got {env!r}")
    if n_samples < 1 or n_transmitters < 1:
        raise ConfigError("n_samples and n_transmitters must be >= 1")
    if area <= 0:
        raise ConfigError(f"area extent must be positive, got {area}")
    if not (0.0 <= missing_prob < 1.0):
        raise ConfigError(f"missing_prob must lie in [0, 1), got {missing_prob}")

    rng = np.random.default_rng(seed)
    tx = rng.uniform(0.0, area, size=(n_transmitters, 2))
    pos = rng.uniform(0.0, area, size=(n_samples, 2))
    dist = np.linalg.norm(pos[:, None, :] - tx[None, :, :], axis=2)
    rssi = log_distance_rssi(dist, PATH_LOSS_EXPONENT[env])
    rssi = rssi + rng.normal(0.0, 1.0, size=rssi.shape) * noise_std
    rssi = np.clip(rssi, RSSI_FLOOR, RSSI_CEIL)
    mask = rng.random(size=rssi.shape) >= missing_prob
    features = np.where(mask, rssi, NOT_RECEIVED)

    if env == "outdoor":
        prefix = "GW"
        lat = OUTDOOR_ANCHOR_LAT + pos[:, 1] / METERS_PER_DEG
        lon = OUTDOOR_ANCHOR_LON + pos[:, 0] / (
            METERS_PER_DEG * math.cos(math.radians(OUTDOOR_ANCHOR_LAT))
        )
        labels = np.column_stack([lon, lat])
        env_code = OUTDOOR_ENV
    else:
        prefix = "WAP"
        labels = pos.copy()
        env_code = INDOOR_ENV

    return FingerprintDataset(
        features=features,
        labels=labels,
        mask=mask,
        feature_ids=tuple(f"{prefix}{i + 1:03d}" for i in range(n_transmitters)),
        env_tag=np.full(n_samples, env_code, dtype=np.int64),
        meta={
            "synthetic_seed": seed,
            "env": env,
            "area_m": float(area),
            "noise_std": float(noise_std),
            "missing_prob": float(missing_prob),
            "tx_positions_m": tx,
            "positions_m": pos,
            "tx_power_dbm": TX_POWER_DBM,
            "path_loss_exponent": PATH_LOSS_EXPONENT[env],
        },
    )


def split(
    dataset: FingerprintDataset, spec: SplitSpec
) -> tuple[FingerprintDataset, FingerprintDataset, FingerprintDataset]:
    """Shuffle rows with ``spec.seed`` and partition them disjointly.

    Sizes are floors of fraction * N; the largest-fraction split absorbs
    the rounding remainder.
    """
    n = dataset.n_samples
    if n < 3:
        raise DataError(f"need at least 3 samples to split, got {n}")
    fracs = (spec.train_fraction, spec.val_fraction, spec.test_fraction)
    sizes = [int(math.floor(f * n)) for f in fracs]
    sizes[int(np.argmax(fracs))] += n - sum(sizes)
    perm = np.random.default_rng(spec.seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = [perm[bounds[k] : bounds[k + 1]] for k in range(3)]
    return tuple(dataset.take(p) for p in parts)
