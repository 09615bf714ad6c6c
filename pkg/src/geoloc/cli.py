"""Command-line pipeline runner.

Subcommands: synth, preprocess, train, transfer, eval, report.  Every
command that produces files writes a ``*.manifest.json`` (or a
``manifest.json`` inside its output directory) before the results, so an
aborted run is detectable.  Exit codes: 0 success, 2 usage or config
error, 3 unreadable or invalid input data, 4 numerical failure.

The ``GEOLOC_SEED`` environment variable, when set, overrides any
``--seed`` argument.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

import numpy as np

from .datasets import (
    ENV_NAMES,
    INDOOR_ENV,
    OUTDOOR_ENV,
    SplitSpec,
    generate_synthetic,
    load_fingerprint_csv,
    load_indoor_csv,
    load_outdoor_csv,
    save_csv,
)
from .errors import (
    ArchiveError,
    ConfigError,
    DataError,
    NumericError,
    ParseError,
    SchemaError,
    ShapeError,
)
from .metrics import (
    EvalReport,
    build_cdf,
    env_accuracy,
    euclidean_errors,
    evaluate_positions,
    haversine_errors,
    haversine_mde,
    mde,
    rmse,
)
from .models import ModelConfig, UmlpModel, build_localizer, build_umlp
from .persistence import load_model, save_model
from .preprocess import (
    balance_concat,
    denormalize_coords,
    load_norm_params,
    load_processed_csv,
    preprocess_environment,
    save_norm_params,
    save_processed_csv,
)
from .report import (
    comparison_rows,
    rssi_histogram,
    write_comparison_csv,
    write_histogram_csv,
)
from .training import (
    EarlyStop,
    TrainConfig,
    compare_transfer_to_scratch,
    train_localizer,
    train_umlp,
    train_with_transfer,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# Batch-size defaults by data environment.
DEFAULT_BATCH = {"indoor": 256, "outdoor": 512, "unified": 256}


def _effective_seed(seed: int) -> int:
    raw = os.environ.get("GEOLOC_SEED")
    if raw is None:
        return seed
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"GEOLOC_SEED must be an integer, got {raw!r}") from None


def _write_manifest(path, command: str, details: dict) -> None:
    # timestamps are informational; byte-identical reruns apply to CSV outputs
    payload = {
        "tool": "geoloc",
        "command": command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        **details,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _file_manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _read_data_manifest(data_dir: Path) -> dict:
    path = data_dir / "manifest.json"
    if not path.exists():
        raise DataError(f"{data_dir}: missing manifest.json; not a processed data dir")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None


def _cmd_synth(args) -> int:
    seed = _effective_seed(args.seed)
    dataset = generate_synthetic(
        n_samples=args.samples,
        n_transmitters=args.transmitters,
        area=args.area,
        env=args.env,
        noise_std=args.noise,
        missing_prob=args.missing_prob,
        seed=seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        _file_manifest_path(out),
        "synth",
        {
            "out": str(out),
            "env": args.env,
            "samples": args.samples,
            "transmitters": args.transmitters,
            "area_m": args.area,
            "noise_std": args.noise,
            "missing_prob": args.missing_prob,
            "seed": seed,
        },
    )
    save_csv(dataset, out)
    print(f"wrote {out} samples={dataset.n_samples} transmitters={dataset.n_features} env={args.env}")
    return EXIT_OK


def _split_spec(args, seed: int) -> SplitSpec:
    return SplitSpec(args.train_frac, args.val_frac, args.test_frac, seed=seed)


def _cmd_preprocess(args) -> int:
    unified = args.indoor is not None or args.outdoor is not None
    if unified and (args.indoor is None or args.outdoor is None):
        raise ConfigError("unified mode needs both --indoor and --outdoor")
    if unified and args.in_path is not None:
        raise ConfigError("--in conflicts with --indoor/--outdoor")
    if not unified and args.in_path is None:
        raise ConfigError("either --in or both --indoor and --outdoor are required")

    seed = _effective_seed(args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _split_spec(args, seed)
    common = dict(
        missing_threshold=args.threshold,
        replacement=args.replacement,
        a=args.a,
        b=args.b,
        split_spec=spec,
    )

    if not unified:
        raw = load_fingerprint_csv(args.in_path)
        env_code = int(raw.env_tag[0])
        env_name = ENV_NAMES[env_code]
        _write_manifest(
            out_dir / "manifest.json",
            "preprocess",
            {
                "environment": env_name,
                "data": str(args.in_path),
                "seed": seed,
                "threshold": args.threshold,
                "replacement": args.replacement,
                "a": args.a,
                "b": args.b,
            },
        )
        proc = preprocess_environment(raw, **common)
        save_norm_params(proc.params, out_dir / "norm.json")
        for name, ds in (("train", proc.train), ("val", proc.val), ("test", proc.test)):
            save_processed_csv(ds, out_dir / f"{name}.csv", env_code=env_code)
        print(f"kept_features={len(proc.kept_feature_ids)} of {proc.raw_feature_count}")
        return EXIT_OK

    raw_in = load_indoor_csv(args.indoor)
    raw_out = load_outdoor_csv(args.outdoor)
    _write_manifest(
        out_dir / "manifest.json",
        "preprocess",
        {
            "environment": "unified",
            "indoor": str(args.indoor),
            "outdoor": str(args.outdoor),
            "seed": seed,
            "threshold": args.threshold,
            "replacement": args.replacement,
            "a": args.a,
            "b": args.b,
        },
    )
    proc_in = preprocess_environment(raw_in, **common)
    proc_out = preprocess_environment(raw_out, **common)
    save_norm_params(proc_in.params, out_dir / "norm_indoor.json")
    save_norm_params(proc_out.params, out_dir / "norm_outdoor.json")
    pairs = (
        ("train", proc_in.train, proc_out.train),
        ("val", proc_in.val, proc_out.val),
        ("test", proc_in.test, proc_out.test),
    )
    for offset, (name, ds_in, ds_out) in enumerate(pairs):
        merged = balance_concat(ds_in, ds_out, seed=seed + offset)
        save_processed_csv(merged, out_dir / f"{name}.csv")
    print(
        f"kept_features={len(proc_in.kept_feature_ids)} of {proc_in.raw_feature_count} env=indoor"
    )
    print(
        f"kept_features={len(proc_out.kept_feature_ids)} of {proc_out.raw_feature_count} env=outdoor"
    )
    return EXIT_OK


def _train_config(args, seed: int, environment: str) -> TrainConfig:
    batch = args.batch_size if args.batch_size is not None else DEFAULT_BATCH[environment]
    stopper = EarlyStop(patience=args.patience) if args.patience is not None else None
    return TrainConfig(
        epochs=args.epochs,
        batch_size=batch,
        lr=args.lr,
        beta1=args.beta1,
        beta2=args.beta2,
        seed=seed,
        bce_weight=args.bce_weight,
        early_stop=stopper,
    )


def _load_train_val(data_dir: Path):
    manifest = _read_data_manifest(data_dir)
    environment = manifest.get("environment")
    if environment not in DEFAULT_BATCH:
        raise DataError(f"{data_dir}: manifest has unknown environment {environment!r}")
    train_ds = load_processed_csv(data_dir / "train.csv")
    val_ds = load_processed_csv(data_dir / "val.csv")
    return environment, train_ds, val_ds


def _finish_training(args, model, curve, out: Path) -> int:
    save_model(model, out)
    if args.curve:
        curve.to_csv(args.curve)
    final = repr(curve.val_loss[-1]) if curve.val_loss else "nan"
    print(f"trained epochs={len(curve.epochs)} final_val_loss={final}")
    return EXIT_OK


def _cmd_train(args) -> int:
    seed = _effective_seed(args.seed)
    environment, train_ds, val_ds = _load_train_val(Path(args.data))
    if args.env is not None and args.env != environment:
        raise ConfigError(
            f"--env {args.env} does not match the data dir's environment {environment}"
        )
    config = ModelConfig.from_file(args.config) if args.config else ModelConfig()
    tc = _train_config(args, seed, environment)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        _file_manifest_path(out),
        "train",
        {
            "data": str(args.data),
            "config": args.config,
            "out": str(out),
            "environment": environment,
            "seed": seed,
            "epochs": tc.epochs,
            "batch_size": tc.batch_size,
            "lr": tc.lr,
        },
    )
    if environment == "unified":
        model = build_umlp(train_ds.n_features, config, seed=seed)
        curve = train_umlp(model, train_ds, val_ds, tc, label="unified")
    else:
        model = build_localizer(train_ds.n_features, config, seed=seed)
        curve = train_localizer(model, train_ds, val_ds, tc, label="no TL")
    return _finish_training(args, model, curve, out)


def _scratch_curve_path(curve_path: Path) -> Path:
    return curve_path.with_name(curve_path.stem + ".scratch" + curve_path.suffix)


def _cmd_transfer(args) -> int:
    seed = _effective_seed(args.seed)
    source = load_model(args.source_model)
    if isinstance(source, UmlpModel):
        raise ArchiveError(f"{args.source_model}: transfer requires a localizer archive")
    environment, train_ds, val_ds = _load_train_val(Path(args.target_data))
    if environment == "unified":
        raise ConfigError("transfer targets a single environment, not a unified dir")
    if args.compare_scratch and not args.curve:
        raise ConfigError("--compare-scratch needs --curve to emit both curves")
    tc = _train_config(args, seed, environment)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        _file_manifest_path(out),
        "transfer",
        {
            "source_model": str(args.source_model),
            "target_data": str(args.target_data),
            "out": str(out),
            "environment": environment,
            "seed": seed,
            "epochs": tc.epochs,
            "batch_size": tc.batch_size,
            "lr": tc.lr,
            "compare_scratch": bool(args.compare_scratch),
        },
    )
    if args.compare_scratch:
        comparison = compare_transfer_to_scratch(
            source, train_ds, val_ds, tc, model_seed=seed
        )
        curve_path = Path(args.curve)
        comparison.transfer.to_csv(curve_path)
        comparison.scratch.to_csv(_scratch_curve_path(curve_path))
        save_model(comparison.transfer_model, out)
        print(
            f"threshold={comparison.threshold!r} "
            f"scratch_epoch={comparison.scratch_epoch} "
            f"transfer_epoch={comparison.transfer_epoch}"
        )
        return EXIT_OK
    target, curve = train_with_transfer(source, train_ds, val_ds, tc, model_seed=seed)
    return _finish_training(args, target, curve, out)


def _write_cdf_csv(errors, path) -> None:
    values, probs = build_cdf(errors)
    with open(path, "w", newline="\n") as fh:
        fh.write("error,probability\n")
        for e, p in zip(values, probs):
            fh.write(f"{float(e)!r},{float(p)!r}\n")


def _eval_unified(model, ds, data_dir: Path) -> tuple[EvalReport, np.ndarray]:
    coords, logits = model.predict(ds.features)
    errors = euclidean_errors(coords, ds.labels)
    extras = {
        "model_kind": "umlp",
        "rmse_norm": rmse(coords, ds.labels),
        "cls_accuracy": env_accuracy(logits, ds.env_tag),
    }
    norm_in = data_dir / "norm_indoor.json"
    norm_out = data_dir / "norm_outdoor.json"
    if norm_in.exists() and norm_out.exists():
        for env_code, norm_path, key, meters in (
            (INDOOR_ENV, norm_in, "mde_indoor_m", "euclidean"),
            (OUTDOOR_ENV, norm_out, "mde_outdoor_m", "haversine"),
        ):
            rows = ds.env_tag == env_code
            if not rows.any():
                continue
            params = load_norm_params(norm_path)
            pred = denormalize_coords(coords[rows], params)
            true = denormalize_coords(ds.labels[rows], params)
            extras[key] = mde(pred, true) if meters == "euclidean" else haversine_mde(pred, true)
    sorted_e = np.sort(errors)
    report = EvalReport(
        metric="unified",
        unit="normalized",
        mean_error=float(errors.mean()),
        median_error=float(sorted_e[max(1, int(np.ceil(0.5 * errors.size))) - 1]),
        p90_error=float(sorted_e[max(1, int(np.ceil(0.9 * errors.size))) - 1]),
        n_samples=int(errors.size),
        extras=extras,
    )
    return report, errors


def _cmd_eval(args) -> int:
    model = load_model(args.model)
    data_dir = Path(args.data)
    manifest = _read_data_manifest(data_dir)
    environment = manifest.get("environment")
    ds = load_processed_csv(data_dir / f"{args.split}.csv")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(
        _file_manifest_path(out),
        "eval",
        {
            "model": str(args.model),
            "data": str(args.data),
            "split": args.split,
            "metric": args.metric,
            "out": str(out),
        },
    )
    if isinstance(model, UmlpModel):
        if args.metric != "mde":
            raise ConfigError(
                "unified models report normalized errors plus per-environment "
                "distances; --metric does not apply"
            )
        report, errors = _eval_unified(model, ds, data_dir)
        payload = report.to_dict()
    else:
        params = load_norm_params(data_dir / "norm.json")
        pred = denormalize_coords(model.predict(ds.features), params)
        true = denormalize_coords(ds.labels, params)
        if args.metric in ("haversine", "both") and environment != "outdoor":
            raise DataError("haversine needs degree labels; this data is not outdoor")
        extras = {"model_kind": "localizer", "environment": environment}
        if args.metric == "both":
            # CDF and the summary line follow the meter-valued metric
            report = evaluate_positions(pred, true, metric="haversine", extras=extras)
            payload = {
                "metric": "both",
                "mde": evaluate_positions(pred, true, metric="mde", extras=extras).to_dict(),
                "haversine": report.to_dict(),
            }
            errors = haversine_errors(pred, true)
        else:
            report = evaluate_positions(pred, true, metric=args.metric, extras=extras)
            payload = report.to_dict()
            if args.metric == "haversine":
                errors = haversine_errors(pred, true)
            else:
                errors = euclidean_errors(pred, true)
    with open(out, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.cdf:
        _write_cdf_csv(errors, args.cdf)
    print(f"mean_error={report.mean_error!r} unit={report.unit} n={report.n_samples}")
    return EXIT_OK


def _parse_measured(spec: str) -> tuple[str, str, float]:
    parts = spec.split(":", 2)
    if len(parts) != 3:
        raise ConfigError(f"--measured expects ENV:METHOD:FILE, got {spec!r}")
    env, method, path = parts
    if env not in ("indoor", "outdoor"):
        raise ConfigError(f"--measured environment must be indoor or outdoor, got {env!r}")
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    if "mean_error" not in data:
        raise DataError(f"{path}: no mean_error field")
    unit = data.get("unit")
    if env == "outdoor" and unit != "m":
        raise DataError(
            f"{path}: outdoor results must be meters; re-run eval with --metric haversine"
        )
    return env, method, float(data["mean_error"])


def _cmd_report(args) -> int:
    did_something = False
    if args.histogram_out:
        if not args.histogram_data:
            raise ConfigError("--histogram-out needs --histogram-data")
        dataset = load_fingerprint_csv(args.histogram_data)
        edges, counts = rssi_histogram(dataset, bin_width=args.bin_width)
        write_histogram_csv(edges, counts, args.histogram_out)
        print(f"wrote {args.histogram_out} bins={len(counts)}")
        did_something = True
    if args.comparison_out:
        measured = [_parse_measured(spec) for spec in args.measured]
        rows = comparison_rows(measured)
        write_comparison_csv(rows, args.comparison_out)
        print(f"wrote {args.comparison_out} rows={len(rows)}")
        did_something = True
    if not did_something:
        raise ConfigError("nothing to do: pass --histogram-out and/or --comparison-out")
    return EXIT_OK


def _add_train_options(sub, default_epochs=100) -> None:
    sub.add_argument("--config", help="model architecture file (.toml or .json)")
    sub.add_argument("--epochs", type=int, default=default_epochs)
    sub.add_argument("--batch-size", type=int, default=None,
                     help="default: 256 indoor/unified, 512 outdoor")
    sub.add_argument("--lr", type=float, default=5e-4)
    sub.add_argument("--beta1", type=float, default=0.1)
    sub.add_argument("--beta2", type=float, default=0.99)
    sub.add_argument("--bce-weight", type=float, default=1.0)
    sub.add_argument("--patience", type=int, default=None,
                     help="enable early stopping with this patience")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--curve", help="write the learning curve CSV here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geoloc",
        description="RSSI fingerprint localization pipeline",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    synth = subs.add_parser("synth", help="generate a synthetic fingerprint CSV")
    synth.add_argument("--out", required=True)
    synth.add_argument("--env", choices=("indoor", "outdoor"), default="indoor")
    synth.add_argument("--samples", type=int, default=1000)
    synth.add_argument("--transmitters", type=int, default=20)
    synth.add_argument("--area", type=float, default=100.0, help="square side, meters")
    synth.add_argument("--noise", type=float, default=4.0, help="RSSI noise std, dB")
    synth.add_argument("--missing-prob", type=float, default=0.0)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=_cmd_synth)

    prep = subs.add_parser("preprocess", help="split, prune, and normalize raw data")
    prep.add_argument("--in", dest="in_path",
                      help="one raw CSV (environment auto-detected)")
    prep.add_argument("--indoor", help="indoor raw CSV for a unified dataset")
    prep.add_argument("--outdoor", help="outdoor raw CSV for a unified dataset")
    prep.add_argument("--out", required=True, help="output directory")
    prep.add_argument("--threshold", type=float, default=0.98,
                      help="drop features missing in more than this fraction")
    prep.add_argument("--replacement", type=float, default=-128.0,
                      help="dBm value filled into missing cells before scaling")
    prep.add_argument("--a", type=float, default=0.1, help="lower normalization bound")
    prep.add_argument("--b", type=float, default=1.0, help="upper normalization bound")
    prep.add_argument("--train-frac", type=float, default=0.70)
    prep.add_argument("--val-frac", type=float, default=0.15)
    prep.add_argument("--test-frac", type=float, default=0.15)
    prep.add_argument("--seed", type=int, default=42)
    prep.set_defaults(func=_cmd_preprocess)

    train = subs.add_parser("train", help="train a model on a processed dir")
    train.add_argument("--data", required=True)
    train.add_argument("--env", choices=("indoor", "outdoor", "unified"),
                       help="assert the data dir's environment")
    train.add_argument("--out", required=True, help="model archive (.glmodel)")
    _add_train_options(train)
    train.set_defaults(func=_cmd_train)

    transfer = subs.add_parser(
        "transfer", help="fine-tune a new model around a saved base block"
    )
    transfer.add_argument("--source-model", required=True,
                          help="trained .glmodel archive")
    transfer.add_argument("--target-data", required=True,
                          help="processed dir of the target environment")
    transfer.add_argument("--out", required=True)
    transfer.add_argument("--compare-scratch", action="store_true",
                          help="also train a scratch twin and emit both curves")
    _add_train_options(transfer)
    transfer.set_defaults(func=_cmd_transfer)

    ev = subs.add_parser("eval", help="score a model on a processed split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", choices=("train", "val", "test"), default="test")
    ev.add_argument("--metric", choices=("mde", "haversine", "both"), default="mde")
    ev.add_argument("--out", required=True, help="report JSON path")
    ev.add_argument("--cdf", help="also write an error CDF CSV here")
    ev.set_defaults(func=_cmd_eval)

    rep = subs.add_parser("report", help="histograms and comparison tables")
    rep.add_argument("--histogram-data", help="raw CSV to histogram")
    rep.add_argument("--histogram-out")
    rep.add_argument("--bin-width", type=float, default=1.0)
    rep.add_argument("--comparison-out")
    rep.add_argument("--measured", action="append", default=[],
                     metavar="ENV:METHOD:FILE",
                     help="eval JSON to add as a measured comparison row")
    rep.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SchemaError, DataError, ShapeError, ArchiveError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
