"""Histogram binning and the published-vs-measured comparison table."""

import csv

import numpy as np
import pytest

from geoloc.datasets import FingerprintDataset
from geoloc.errors import ConfigError, DataError
from geoloc.report import (
    REFERENCE_RESULTS,
    comparison_rows,
    rssi_histogram,
    write_comparison_csv,
    write_histogram_csv,
)


def _dataset(values, mask):
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    labels = np.zeros((values.shape[0], 2))
    labels[:, 0] = np.arange(values.shape[0])  # avoid degenerate axes elsewhere
    ids = tuple(f"T{j}" for j in range(values.shape[1]))
    return FingerprintDataset(values, labels, mask, ids)


class TestHistogram:
    def test_counts_only_valid_cells(self):
        data = _dataset(
            [[-50.0, -200.0], [-51.5, -70.0]],
            [[True, False], [True, True]],
        )
        edges, counts = rssi_histogram(data, bin_width=1.0)
        assert counts.sum() == 3  # the masked -200 cell is excluded
        assert edges[0] == -70.0
        assert edges[-1] == -50.0

    def test_edges_align_to_bin_width_multiples(self):
        data = _dataset([[-50.3, -62.7]], [[True, True]])
        edges, counts = rssi_histogram(data, bin_width=5.0)
        assert edges[0] == -65.0
        assert edges[-1] == -50.0
        assert np.all(edges % 5.0 == 0.0)
        assert counts.sum() == 2

    def test_single_value_gets_one_bin(self):
        data = _dataset([[-60.0]], [[True]])
        edges, counts = rssi_histogram(data, bin_width=1.0)
        assert len(counts) == 1
        assert counts[0] == 1

    def test_all_masked_rejected(self):
        data = _dataset([[-200.0]], [[False]])
        with pytest.raises(DataError):
            rssi_histogram(data)

    def test_bad_bin_width(self):
        data = _dataset([[-60.0]], [[True]])
        with pytest.raises(ConfigError):
            rssi_histogram(data, bin_width=0.0)

    def test_csv_output(self, tmp_path):
        data = _dataset([[-60.2, -60.7, -59.1]], [[True, True, True]])
        edges, counts = rssi_histogram(data, bin_width=1.0)
        path = tmp_path / "hist.csv"
        write_histogram_csv(edges, counts, path)
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(counts)
        assert sum(int(r["count"]) for r in rows) == 3
        assert float(rows[0]["bin_left"]) == edges[0]


class TestComparisonTable:
    def test_published_rows_are_fixed(self):
        rows = comparison_rows()
        assert len(rows) == len(REFERENCE_RESULTS) == 10
        assert all(r["source"] == "published" for r in rows)
        by_key = {(r["environment"], r["method"]): r["mde_m"] for r in rows}
        assert by_key[("indoor", "encoder-tl")] == 6.65
        assert by_key[("outdoor", "unified")] == 341.94

    def test_measured_rows_appended(self):
        rows = comparison_rows(measured=[("indoor", "mine", 7.2)])
        assert rows[-1] == {
            "environment": "indoor",
            "method": "mine",
            "mde_m": 7.2,
            "source": "measured",
        }

    def test_csv_round_trip(self, tmp_path):
        rows = comparison_rows(measured=[("outdoor", "mine", 350.5)])
        path = tmp_path / "cmp.csv"
        write_comparison_csv(rows, path)
        with open(path) as fh:
            back = list(csv.DictReader(fh))
        assert len(back) == 11
        assert back[-1]["method"] == "mine"
        assert float(back[-1]["mde_m"]) == 350.5
        assert back[0]["source"] == "published"
