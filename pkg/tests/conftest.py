"""Shared fixtures: small synthetic datasets and the optional real-data probe."""

import os
from pathlib import Path

import numpy as np
import pytest

from geoloc.datasets import FingerprintDataset, generate_synthetic

REPO_ROOT = Path(__file__).resolve().parent.parent


def find_real_indoor_csv():
    """Locate a real indoor fingerprint CSV (520 WAP columns) if present.

    Searched locations: $GEOLOC_DATA_DIR, then <repo>/data, recursively.
    Returns None when no candidate file exists.
    """
    roots = []
    env_dir = os.environ.get("GEOLOC_DATA_DIR")
    if env_dir:
        roots.append(Path(env_dir))
    roots.append(REPO_ROOT / "data")
    for root in roots:
        if not root.is_dir():
            continue
        for path in sorted(root.rglob("*.csv")):
            try:
                with open(path) as fh:
                    header = fh.readline()
            except OSError:
                continue
            if header.count("WAP") >= 500:
                return path
    return None


def find_real_outdoor_csv():
    """Locate a real outdoor gateway CSV (BS/GW columns) if present."""
    roots = []
    env_dir = os.environ.get("GEOLOC_DATA_DIR")
    if env_dir:
        roots.append(Path(env_dir))
    roots.append(REPO_ROOT / "data")
    for root in roots:
        if not root.is_dir():
            continue
        for path in sorted(root.rglob("*.csv")):
            try:
                with open(path) as fh:
                    header = fh.readline()
            except OSError:
                continue
            cols = header.split(",")
            n_gw = sum(1 for c in cols if c.strip().upper().startswith(("BS", "GW")))
            if n_gw >= 50:
                return path
    return None


@pytest.fixture(scope="session")
def tiny_indoor() -> FingerprintDataset:
    return generate_synthetic(
        n_samples=240,
        n_transmitters=10,
        area=60.0,
        env="indoor",
        noise_std=3.0,
        missing_prob=0.25,
        seed=11,
    )


@pytest.fixture(scope="session")
def tiny_outdoor() -> FingerprintDataset:
    return generate_synthetic(
        n_samples=240,
        n_transmitters=8,
        area=1500.0,
        env="outdoor",
        noise_std=3.0,
        missing_prob=0.35,
        seed=12,
    )


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0)
