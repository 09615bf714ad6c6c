#!/usr/bin/env python3
"""Train the two-head model on a balanced indoor+outdoor mix.

Synthesizes both environments, preprocesses each on its own fitted
bounds, balances and merges the splits, then trains a shared trunk with
a coordinate head and an environment head.  Prints held-out regression
RMSE (normalized frame), environment accuracy, and per-environment mean
distance errors in meters.
"""

import argparse
from pathlib import Path

from geoloc.datasets import generate_synthetic
from geoloc.metrics import env_accuracy, haversine_mde, mde, rmse
from geoloc.models import ModelConfig, build_umlp
from geoloc.preprocess import balance_concat, denormalize_coords, preprocess_environment
from geoloc.training import TrainConfig, train_umlp


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=1200, help="per environment")
    parser.add_argument("--indoor-transmitters", type=int, default=16)
    parser.add_argument("--outdoor-transmitters", type=int, default=8)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--batch-size", type=int, default=256)
    parser.add_argument("--lr", type=float, default=5e-3)
    parser.add_argument("--bce-weight", type=float, default=2.0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=Path, help="architecture file (.toml/.json)")
    parser.add_argument("--curve", type=Path, help="write the learning curve here")
    args = parser.parse_args()

    indoor = generate_synthetic(
        n_samples=args.samples, n_transmitters=args.indoor_transmitters,
        area=60.0, env="indoor", noise_std=3.0, missing_prob=0.2, seed=21,
    )
    outdoor = generate_synthetic(
        n_samples=args.samples, n_transmitters=args.outdoor_transmitters,
        area=1500.0, env="outdoor", noise_std=3.0, missing_prob=0.4, seed=22,
    )
    pin = preprocess_environment(indoor)
    pout = preprocess_environment(outdoor)
    train = balance_concat(pin.train, pout.train, seed=args.seed)
    val = balance_concat(pin.val, pout.val, seed=args.seed + 1)
    test = balance_concat(pin.test, pout.test, seed=args.seed + 2)

    config = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    model = build_umlp(train.n_features, config, seed=args.seed)
    curve = train_umlp(
        model, train, val,
        TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                    seed=args.seed, bce_weight=args.bce_weight),
    )
    if args.curve:
        curve.to_csv(args.curve)

    coords, logits = model.predict(test.features)
    print(f"test rmse (normalized): {rmse(coords, test.labels):.4f}")
    print(f"test env accuracy: {env_accuracy(logits, test.env_tag):.4f}")

    indoor_rows = test.env_tag == 0
    outdoor_rows = test.env_tag == 1
    if indoor_rows.any():
        pred = denormalize_coords(coords[indoor_rows], pin.params)
        true = denormalize_coords(test.labels[indoor_rows], pin.params)
        print(f"indoor mde: {mde(pred, true):.2f} m ({indoor_rows.sum()} samples)")
    if outdoor_rows.any():
        pred = denormalize_coords(coords[outdoor_rows], pout.params)
        true = denormalize_coords(test.labels[outdoor_rows], pout.params)
        print(f"outdoor mde: {haversine_mde(pred, true):.2f} m ({outdoor_rows.sum()} samples)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
