"""Result reporting: RSSI distribution histograms and the comparison
table against published mean-distance-error figures."""

from __future__ import annotations

import csv

import numpy as np

from .datasets import FingerprintDataset
from .errors import ConfigError, DataError

# Published mean distance errors (meters) used as fixed comparison rows.
REFERENCE_RESULTS = (
    ("indoor", "baseline", 7.90),
    ("indoor", "hadnn", 14.93),
    ("indoor", "ea-cnn", 8.34),
    ("indoor", "encoder-tl", 6.65),
    ("indoor", "unified", 9.61),
    ("outdoor", "baseline", 398.40),
    ("outdoor", "nn", 357.0),
    ("outdoor", "extra-trees", 379.0),
    ("outdoor", "encoder-tl", 361.21),
    ("outdoor", "unified", 341.94),
)


def rssi_histogram(
    dataset: FingerprintDataset, bin_width: float = 1.0
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of valid RSSI cells; returns (bin edges, counts).

    Bins are ``bin_width`` dBm wide and aligned to integer multiples of
    the width, so repeated runs on the same data bin identically.
    """
    if bin_width <= 0.0:
        raise ConfigError(f"bin_width must be positive, got {bin_width}")
    values = dataset.features[dataset.mask]
    if values.size == 0:
        raise DataError("no valid RSSI cells to histogram")
    lo = np.floor(values.min() / bin_width) * bin_width
    hi = np.ceil(values.max() / bin_width) * bin_width
    if hi == lo:
        hi = lo + bin_width
    n_bins = int(round((hi - lo) / bin_width))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        for i, count in enumerate(counts):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(count)])


def comparison_rows(measured=()) -> list[dict]:
    """Fixed published rows plus caller-measured (env, method, mde_m) rows."""
    rows = [
        {"environment": env, "method": method, "mde_m": value, "source": "published"}
        for env, method, value in REFERENCE_RESULTS
    ]
    for env, method, value in measured:
        rows.append(
            {
                "environment": env,
                "method": method,
                "mde_m": float(value),
                "source": "measured",
            }
        )
    return rows


def write_comparison_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["environment", "method", "mde_m", "source"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
