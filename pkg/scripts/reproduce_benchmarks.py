#!/usr/bin/env python3
"""Full-pipeline benchmark runs against the published comparison table.

Point --indoor and/or --outdoor at raw fingerprint CSVs (the indoor one
with WAP columns and +100 missing markers, the outdoor one with BS/GW
columns and -200 markers).  Each environment is preprocessed, a model is
trained at the published architecture, and the held-out mean distance
error lands in a comparison CSV next to the published figures.
"""

import argparse
from pathlib import Path

from geoloc.datasets import load_indoor_csv, load_outdoor_csv
from geoloc.metrics import haversine_mde, mde
from geoloc.models import ModelConfig, build_localizer
from geoloc.preprocess import denormalize_coords, preprocess_environment
from geoloc.report import comparison_rows, write_comparison_csv
from geoloc.training import EarlyStop, TrainConfig, train_localizer


def run_environment(name: str, path: Path, args) -> float:
    loader = load_indoor_csv if name == "indoor" else load_outdoor_csv
    raw = loader(path)
    print(f"{name}: {raw.n_samples} samples, {raw.n_features} transmitters")
    proc = preprocess_environment(raw)
    print(f"{name}: kept {proc.train.n_features} features after pruning")
    config = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    batch = args.batch_size or (512 if name == "outdoor" else 256)
    model = build_localizer(proc.train.n_features, config, seed=args.seed)
    curve = train_localizer(
        model, proc.train, proc.val,
        TrainConfig(epochs=args.epochs, batch_size=batch, lr=args.lr,
                    seed=args.seed, early_stop=EarlyStop(patience=args.patience)),
    )
    print(f"{name}: trained {len(curve.epochs)} epochs,"
          f" best val loss {min(curve.val_loss):.6f}")
    pred = denormalize_coords(model.predict(proc.test.features), proc.params)
    true = denormalize_coords(proc.test.labels, proc.params)
    error = haversine_mde(pred, true) if name == "outdoor" else mde(pred, true)
    print(f"{name}: test mean distance error {error:.2f} m")
    return error


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--indoor", type=Path, help="raw indoor fingerprint CSV")
    parser.add_argument("--outdoor", type=Path, help="raw outdoor fingerprint CSV")
    parser.add_argument("--out", type=Path, default=Path("benchmark_comparison.csv"))
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=5e-4)
    parser.add_argument("--patience", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=Path, help="architecture file (.toml/.json)")
    args = parser.parse_args()

    if not args.indoor and not args.outdoor:
        parser.error("pass --indoor and/or --outdoor raw CSV paths")

    measured = []
    for name, path in (("indoor", args.indoor), ("outdoor", args.outdoor)):
        if path is None:
            continue
        measured.append((name, "this-run", run_environment(name, path, args)))

    rows = comparison_rows(measured)
    write_comparison_csv(rows, args.out)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
