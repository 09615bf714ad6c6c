#!/usr/bin/env python3
"""Race transfer-initialized training against scratch training.

Builds paired synthetic environments that share transmitter geometry but
differ in path-loss exponent and noise, trains a source model on one,
then fine-tunes its base block on the other.  For every seed the script
reports how many epochs each run needs to reach the scratch run's final
validation level, and writes both learning curves per seed.
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from geoloc.datasets import (
    INDOOR_ENV,
    NOT_RECEIVED,
    FingerprintDataset,
    generate_synthetic,
    log_distance_rssi,
)
from geoloc.models import ModelConfig, build_localizer
from geoloc.preprocess import preprocess_environment
from geoloc.training import TrainConfig, compare_transfer_to_scratch, train_localizer


def build_target_env(src, noise_std, exponent, missing_prob, seed):
    """Same transmitters, new positions, different propagation."""
    rng = np.random.default_rng(seed)
    tx = src.meta["tx_positions_m"]
    area = src.meta["area_m"]
    n = src.n_samples
    pos = rng.uniform(0.0, area, size=(n, 2))
    dist = np.linalg.norm(pos[:, None, :] - tx[None, :, :], axis=2)
    rssi = log_distance_rssi(dist, exponent) + rng.normal(0.0, noise_std, size=dist.shape)
    mask = rng.random(size=rssi.shape) >= missing_prob
    features = np.where(mask, np.clip(rssi, -200.0, 0.0), NOT_RECEIVED)
    return FingerprintDataset(
        features, pos.copy(), mask, src.feature_ids,
        env_tag=np.full(n, INDOOR_ENV, dtype=np.int64),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("tl_comparison"))
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--transmitters", type=int, default=24)
    parser.add_argument("--area", type=float, default=200.0)
    parser.add_argument("--source-noise", type=float, default=2.0)
    parser.add_argument("--target-noise", type=float, default=5.0)
    parser.add_argument("--target-exponent", type=float, default=2.4)
    parser.add_argument("--source-epochs", type=int, default=40)
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--lr", type=float, default=5e-3)
    parser.add_argument("--config", type=Path, help="architecture file (.toml/.json)")
    args = parser.parse_args()

    config = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    wins = 0
    t0 = time.perf_counter()
    for s in range(args.seeds):
        src = generate_synthetic(
            n_samples=args.samples, n_transmitters=args.transmitters,
            area=args.area, env="indoor", noise_std=args.source_noise,
            missing_prob=0.1, seed=100 + s,
        )
        tgt = build_target_env(
            src, args.target_noise, args.target_exponent, 0.1, seed=900 + s
        )
        psrc = preprocess_environment(src)
        ptgt = preprocess_environment(tgt)
        source = build_localizer(psrc.train.n_features, config, seed=s)
        train_localizer(
            source, psrc.train, psrc.val,
            TrainConfig(epochs=args.source_epochs, batch_size=args.batch_size,
                        lr=args.lr, seed=s),
        )
        comp = compare_transfer_to_scratch(
            source, ptgt.train, ptgt.val,
            TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                        lr=args.lr, seed=s),
            model_seed=s,
        )
        comp.scratch.to_csv(args.out_dir / f"seed{s}_scratch.csv")
        comp.transfer.to_csv(args.out_dir / f"seed{s}_transfer.csv")
        wins += comp.transfer_faster
        rows.append({
            "seed": s,
            "threshold": repr(comp.threshold),
            "scratch_epoch": comp.scratch_epoch,
            "transfer_epoch": comp.transfer_epoch,
            "transfer_faster": comp.transfer_faster,
        })
        print(f"seed {s}: scratch={comp.scratch_epoch} transfer={comp.transfer_epoch}"
              f" faster={comp.transfer_faster}")

    summary = args.out_dir / "summary.csv"
    with open(summary, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    print(f"transfer faster in {wins}/{args.seeds} seeds"
          f" ({time.perf_counter() - t0:.1f}s); wrote {summary}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
