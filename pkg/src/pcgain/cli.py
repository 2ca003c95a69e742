"""Command-line entry point: ``pcgain {mask,impute,benchmark,sweep,gradcheck}``.

Exit codes:

    0  success
    1  unexpected package error
    2  configuration error (bad flag, bad config file, unknown key)
    3  data error (unreadable CSV, schema problems, empty columns)
    4  nothing to impute (input is fully observed)
    5  training diverged (non-finite loss or gradient)
    6  benchmark finished but at least one cell failed
    7  gradient self-check failed

Flags override config-file values, which override built-in defaults. Timing
fields are recorded only with ``--timings`` so that repeated runs produce
byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import datasets
from .config import DEFAULT_WORKERS_ENV, RunConfig, TrainConfig, load_run_config
from .data import MISSING_MARKERS, Dataset, apply_mcar, decode, encode, fit_scaling, load_csv, write_mask_csv
from .errors import ConfigError, NothingToImputeError, PCGainError, StageError
from .evaluation import METHODS, benchmark, column_means, mean_impute, sweep_grid
from .evaluation import write_grid_csv, write_long_csv, write_summary_json
from .gain import impute, train_gain
from .gradcheck import TOLERANCE, run_gradchecks
from .pipeline import fit_pcgain, save_stage_artifacts
from .seeding import derive_seed

log = logging.getLogger("pcgain")

EXIT_OK = 0
EXIT_CELLS_FAILED = 6
EXIT_GRADCHECK = 7

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "alpha": "alpha",
    "beta": "beta",
    "lam": "lam",
    "clusters_k": "clusters_k",
    "hint_rate": "hint_rate",
    "noise_scale": "noise_scale",
    "batch_size": "batch_size",
    "iterations": "iterations",
    "learning_rate": "learning_rate",
    "hidden": "hidden_widths",
    "classifier_iterations": "classifier_iterations",
}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training overrides")
    g.add_argument("--config", help="key = value run configuration file")
    g.add_argument("--seed", type=int, help="root seed (default: config seed, else 0)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--K", dest="clusters_k", type=int)
    g.add_argument("--hint-rate", type=float)
    g.add_argument("--noise-scale", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--iterations", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--hidden", type=_int_list, help="comma-separated G/D hidden widths")
    g.add_argument("--classifier-iterations", type=int)


def _resolve(args) -> RunConfig:
    run = load_run_config(args.config) if getattr(args, "config", None) else RunConfig()
    changes = {field: getattr(args, flag) for flag, field in TRAIN_FLAGS.items() if getattr(args, flag, None) is not None}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    try:
        train = run.train.replace(**changes)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(train, run.dataset, run.label_col, run.output_dir, run.workers)


def _input_path(args, run: RunConfig) -> str:
    path = args.input or run.dataset
    if not path:
        raise ConfigError("no input given (positional argument or 'dataset' in the config file)")
    return path


def _load_table(spec: str) -> tuple[Dataset, str]:
    """A CSV path, or ``builtin:spam`` / ``builtin:wine`` for the bundled tables."""
    if spec.startswith("builtin:"):
        key = spec.split(":", 1)[1]
        if key not in datasets.LOADERS:
            raise ConfigError(f"unknown builtin dataset {key!r}; choose from {sorted(datasets.LOADERS)}")
        return datasets.LOADERS[key](), key
    return load_csv(spec), Path(spec).stem


def _read_raw(path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    return rows[0], [r for r in rows[1:] if r]


def _format(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# ---------------------------------------------------------------- mask


def cmd_mask(args) -> int:
    ds = load_csv(args.input)
    masked = apply_mcar(ds, args.rate, args.seed)
    header, body = _read_raw(args.input)
    keep = masked.mask.astype(bool)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, k in zip(body, keep):
            w.writerow([field if ok else "" for field, ok in zip(row, k)])
    write_mask_csv(masked.mask, header, args.mask_out)
    print(f"masked {int((~keep).sum())} of {keep.size} cells -> {args.out}, {args.mask_out}")
    return EXIT_OK


# ---------------------------------------------------------------- impute


def impute_table(ds: Dataset, method: str, config: TrainConfig, artifacts=None) -> tuple[Dataset, dict]:
    """Fit ``method`` on every row of ``ds`` and return the completed table plus manifest fields."""
    if ds.mask.all():
        raise NothingToImputeError("input has no missing cells; nothing to impute")
    schema = fit_scaling(ds)
    enc = encode(ds, schema)
    info: dict = {}
    if method == "mean":
        matrix = mean_impute(enc, column_means(enc))
    elif method == "gain":
        try:
            model = train_gain(enc, config).model
        except (PCGainError, ValueError, FloatingPointError) as exc:
            raise StageError("gain", exc) from exc
        matrix = impute(model, enc, seed=derive_seed(config.seed, "impute"), noise_scale=config.noise_scale)
        info["stage_hashes"] = {"final_model": model.fingerprint()}
        if artifacts is not None:
            Path(artifacts).mkdir(parents=True, exist_ok=True)
            model.save(Path(artifacts) / "final.ckpt", config)
            info["artifacts"] = ["final.ckpt"]
    else:
        fit = fit_pcgain(enc, config)
        matrix = impute(fit.model, enc, seed=derive_seed(config.seed, "impute"), noise_scale=config.noise_scale)
        info["stage_hashes"] = fit.stage_hashes
        info["entropy_initial"] = fit.stage3.trace.entropy_initial
        info["entropy_final"] = fit.stage3.trace.entropy_final
        info["classifier_train_accuracy"] = fit.classifier.train_accuracy
        if artifacts is not None:
            info["artifacts"] = sorted(Path(p).name for p in save_stage_artifacts(fit, config, artifacts).values())
    decoded = decode(enc.completed(matrix), schema)
    decoded = Dataset(np.where(ds.mask == 1, ds.values, decoded.values), decoded.mask, ds.schema)
    info["imputed_hash"] = hashlib.sha256(np.ascontiguousarray(matrix).tobytes()).hexdigest()
    return decoded, info


def cmd_impute(args) -> int:
    start = time.perf_counter()
    run = _resolve(args)
    path = _input_path(args, run)
    ds = load_csv(path)
    header, body = _read_raw(path)
    exclude = [args.label_col] if args.label_col else ([run.label_col] if run.label_col else [])
    for name in exclude:
        if name not in ds.column_names:
            raise ConfigError(f"label column {name!r} not in input")
    features = ds.drop_columns(exclude)
    artifacts = args.artifacts or run.output_dir
    completed, info = impute_table(features, args.method, run.train, artifacts)

    col_of = {name: j for j, name in enumerate(completed.column_names)}
    markers = set(MISSING_MARKERS)
    with Path(args.out).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, row in enumerate(body):
            out = list(row)
            for j, name in enumerate(header):
                # observed fields are copied verbatim; only missing feature cells are filled
                if name in col_of and row[j].strip() in markers:
                    out[j] = _format(completed.values[k, col_of[name]])
            w.writerow(out)

    manifest = {
        "command": "impute",
        "method": args.method,
        "input": str(path),
        "input_sha256": _sha256(path),
        "output_sha256": _sha256(args.out),
        "label_col": exclude[0] if exclude else None,
        "config": run.train.to_dict() if args.method != "mean" else {},
        "seed": run.train.seed,
        "wall_clock_seconds": time.perf_counter() - start if args.timings else None,
        **info,
    }
    manifest_path = Path(args.manifest or f"{args.out}.manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"imputed {int((features.mask == 0).sum())} cells with {args.method} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- benchmark / sweep


def _workers(args, run: RunConfig) -> int | None:
    w = args.workers if args.workers is not None else run.workers
    if w is not None and w < 1:
        raise ConfigError("--workers must be >= 1")
    return w


def cmd_benchmark(args) -> int:
    run = _resolve(args)
    ds, name = _load_table(_input_path(args, run))
    label = args.label_col or run.label_col
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    outdir = Path(args.outdir or run.output_dir or "benchmark_out")
    res = benchmark(
        ds,
        methods,
        args.rates,
        folds=args.folds,
        repeats=args.repeats,
        base_seed=run.train.seed,
        config=run.train,
        label_col=label,
        accuracy=args.accuracy,
        name=name,
        workers=_workers(args, run),
        timings=args.timings,
    )
    outdir.mkdir(parents=True, exist_ok=True)
    write_long_csv(res.cells, outdir / "report.csv")
    failed = [c for c in res.cells if c.status != "ok"]
    write_summary_json(
        res.reports,
        outdir / "summary.json",
        {"failed_cells": [{"method": c.method, "rate": c.rate, "repeat": c.repeat, "fold": c.fold, "status": c.status}
                          for c in failed]},
    )
    for r in res.reports:
        std = "" if r.rmse_std is None else f" +- {r.rmse_std:.4f}"
        print(f"{r.method:>7} rate={r.missing_rate:g} rmse={r.rmse_mean:.4f}{std} failed={r.failed_cells}")
    return EXIT_CELLS_FAILED if failed else EXIT_OK


def cmd_sweep(args) -> int:
    run = _resolve(args)
    ds, name = _load_table(_input_path(args, run))
    label = args.label_col or run.label_col
    grid = sweep_grid(
        ds,
        args.param,
        [int(v) if args.param == "K" else v for v in args.values],
        run.train,
        missing_rate=args.rate,
        folds=args.folds,
        repeats=args.repeats,
        base_seed=run.train.seed,
        label_col=label,
        name=name,
        workers=_workers(args, run),
    )
    outdir = Path(args.outdir or run.output_dir or "sweep_out")
    outdir.mkdir(parents=True, exist_ok=True)
    write_grid_csv(grid, outdir / f"grid_{args.param}.csv")
    for row in grid:
        print(f"{args.param}={row['value']:g} rmse={row['rmse_mean']:.4f}")
    return EXIT_CELLS_FAILED if any(r["failed_cells"] for r in grid) else EXIT_OK


# ---------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    results = run_gradchecks(args.seed, corrupt=args.inject_fault)
    for r in results:
        print(f"{r.network:<14} {r.objective:<28} max_rel_err={r.error:.3e} {'ok' if r.passed else 'FAIL'}")
    ok = all(r.passed for r in results)
    print(f"gradcheck {'passed' if ok else 'failed'} (tolerance {TOLERANCE:g})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcgain", description="GAIN / PC-GAIN missing-data imputation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="remove cells completely at random")
    p.add_argument("input")
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="masked CSV (missing cells left empty)")
    p.add_argument("--mask-out", required=True, help="0/1 mask CSV")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("impute", help="fill the missing cells of a CSV")
    p.add_argument("input", nargs="?")
    p.add_argument("--method", choices=METHODS, default="pcgain")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--artifacts", help="directory for stage checkpoints and pseudo-labels")
    p.add_argument("--label-col", help="column passed through untouched and not used as a feature")
    p.add_argument("--timings", action="store_true", help="record wall-clock time in the manifest")
    _add_train_flags(p)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("benchmark", help="cross-validated RMSE benchmark")
    p.add_argument("input", nargs="?", help="fully observed CSV, or builtin:spam / builtin:wine")
    p.add_argument("--label-col")
    p.add_argument("--methods", default="mean,gain,pcgain")
    p.add_argument("--rates", type=_float_list, default=[0.5])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--workers", type=int, help=f"parallel cells (default: ${DEFAULT_WORKERS_ENV} or 1)")
    p.add_argument("--accuracy", action="store_true", help="also score post-imputation accuracy")
    p.add_argument("--timings", action="store_true", help="fill the seconds column")
    p.add_argument("--outdir")
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep", help="PC-GAIN RMSE over one hyperparameter")
    p.add_argument("input", nargs="?")
    p.add_argument("--param", choices=["alpha", "beta", "lambda", "K"], required=True)
    p.add_argument("--values", type=_float_list, required=True)
    p.add_argument("--label-col")
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--workers", type=int)
    p.add_argument("--outdir")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of every network and objective")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except PCGainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
