"""Metrics, the mean-imputation control and the cross-validated benchmark protocol.

Protocol for one (rate, repeat) pair: mask the feature table once over all
rows, shuffle rows into ``folds`` folds, and for every fold fit the scaling on
the training rows, train on the training rows, impute the held-out rows and
score ``rmse_missing`` on their missing cells. ``gain`` and ``pcgain`` share
the training seed of a cell so their numbers are paired.

Seeds (all derived from ``base_seed`` with :func:`seeding.derive_seed`)::

    mask      ("mask", rate, repeat)
    folds     ("folds", rate, repeat)
    training  ("train", rate, repeat, fold)
    imputing  ("impute", rate, repeat, fold)
    accuracy  ("accuracy", rate, repeat, fold)
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import DEFAULT_WORKERS_ENV, TrainConfig
from .data import Dataset, EncodedMatrix, apply_mcar, encode, fit_scaling
from .errors import ConfigError, DataError, PCGainError
from .gain import impute, train_gain
from .nn import SIGMOID, forward
from .pipeline import fit_pcgain, train_softmax_classifier
from .seeding import derive_seed

log = logging.getLogger(__name__)

METHODS = ("mean", "gain", "pcgain")
SWEEP_PARAMS = {"alpha": "alpha", "beta": "beta", "lambda": "lam", "K": "clusters_k"}


def rmse_missing(imputed: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """Root mean squared error over the coordinates where ``mask == 0``."""
    imputed, truth, mask = (np.asarray(a, dtype=np.float64) for a in (imputed, truth, mask))
    if not (imputed.shape == truth.shape == mask.shape):
        raise DataError(f"shape mismatch: {imputed.shape}, {truth.shape}, {mask.shape}")
    missing = mask == 0
    if not missing.any():
        raise DataError("rmse_missing is undefined without missing coordinates")
    if not np.isfinite(truth[missing]).all():
        raise DataError("truth must be fully observed on missing coordinates")
    return float(np.sqrt(np.mean((imputed[missing] - truth[missing]) ** 2)))


def column_means(encoded: EncodedMatrix) -> np.ndarray:
    """Observed mean of every encoded column; for a one-hot group this is the category frequency vector."""
    counts = encoded.mask.sum(axis=0)
    if (counts == 0).any():
        bad = sorted(set(encoded.group_map[counts == 0].tolist()))
        raise DataError(f"columns {bad} have no observed entries")
    return (encoded.data * encoded.mask).sum(axis=0) / counts


def mean_impute(encoded: EncodedMatrix, means: np.ndarray | None = None) -> np.ndarray:
    """Fill missing coordinates with column means (fitted on ``encoded`` unless given)."""
    if means is None:
        means = column_means(encoded)
    return np.where(encoded.mask == 1, encoded.data, np.broadcast_to(means, encoded.shape))


def post_imputation_accuracy(
    train_imputed: np.ndarray,
    train_labels,
    test_imputed: np.ndarray,
    test_labels,
    seed: int,
    *,
    iterations: int = 2000,
    hidden: int | None = None,
    batch_size: int = 128,
    learning_rate: float = 1e-3,
    feature_names: Sequence[str] | None = None,
    label_col: str | None = None,
) -> float:
    """Test accuracy of a two-weight-layer Sigmoid/Softmax net trained on imputed rows."""
    if feature_names is not None and label_col is not None and label_col in feature_names:
        raise DataError(f"label column {label_col!r} is among the imputation features")
    train_imputed = np.asarray(train_imputed, dtype=np.float64)
    test_imputed = np.asarray(test_imputed, dtype=np.float64)
    classes, codes = np.unique(np.concatenate([np.asarray(train_labels), np.asarray(test_labels)]), return_inverse=True)
    y_train, y_test = codes[: len(train_labels)], codes[len(train_labels) :]
    width = train_imputed.shape[1]
    net = train_softmax_classifier(
        train_imputed,
        y_train,
        len(classes),
        (hidden or width,),
        SIGMOID,
        iterations,
        batch_size,
        learning_rate,
        seed,
    )
    pred = np.argmax(forward(net, test_imputed)[0], axis=1)
    return float(np.mean(pred == y_test))


@dataclass
class MetricsReport:
    method: str
    dataset: str
    missing_rate: float
    rmse_mean: float
    rmse_std: float | None
    accuracy_mean: float | None
    accuracy_std: float | None
    config: dict
    raw_rmse: list[float]
    raw_accuracy: list[float] = field(default_factory=list)
    seconds: float | None = None
    failed_cells: int = 0
    repeats: int = 0
    folds: int = 0

    def __post_init__(self):
        if self.rmse_std is not None and self.repeats < 2:
            raise ValueError("rmse_std needs at least two repeats")
        if len(self.raw_rmse) + self.failed_cells != self.repeats * self.folds:
            raise ValueError("raw value count must equal repeats x folds")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CellResult:
    method: str
    dataset: str
    rate: float
    repeat: int
    fold: int
    rmse: float | None
    accuracy: float | None = None
    seconds: float | None = None
    status: str = "ok"
    extras: dict = field(default_factory=dict)


@dataclass
class BenchmarkResult:
    reports: list[MetricsReport]
    cells: list[CellResult]

    def report(self, method: str, rate: float | None = None) -> MetricsReport:
        for r in self.reports:
            if r.method == method and (rate is None or r.missing_rate == rate):
                return r
        raise KeyError((method, rate))


def _fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=np.intp)
    ids[perm] = np.arange(n) % folds
    return ids


@dataclass(frozen=True)
class _Job:
    method: str
    dataset_name: str
    rate: float
    repeat: int
    fold: int
    masked: Dataset
    train_rows: np.ndarray
    test_rows: np.ndarray
    labels: np.ndarray | None
    config: TrainConfig
    base_seed: int
    accuracy: bool
    accuracy_iterations: int
    timings: bool


def _fit_predict(job: _Job, train: EncodedMatrix, test: EncodedMatrix) -> tuple[np.ndarray, np.ndarray, dict]:
    cell = (job.rate, job.repeat, job.fold)
    extras: dict[str, Any] = {}
    if job.method == "mean":
        means = column_means(train)
        return mean_impute(train, means), mean_impute(test, means), extras
    cfg = job.config.replace(seed=derive_seed(job.base_seed, "train", *cell))
    if job.method == "gain":
        model = train_gain(train, cfg).model
    else:
        fit = fit_pcgain(train, cfg)
        model = fit.model
        extras = {
            "entropy_initial": fit.stage3.trace.entropy_initial,
            "entropy_final": fit.stage3.trace.entropy_final,
            "classifier_frozen": fit.stage3.classifier_hash_before == fit.stage3.classifier_hash_after,
            "stage_hashes": fit.stage_hashes,
        }
    seed = derive_seed(job.base_seed, "impute", *cell)
    train_out = impute(model, train, seed=derive_seed(seed, "train"), noise_scale=cfg.noise_scale)
    test_out = impute(model, test, seed=seed, noise_scale=cfg.noise_scale)
    return train_out, test_out, extras


def _run_job(job: _Job) -> CellResult:
    start = time.perf_counter()
    base = dict(method=job.method, dataset=job.dataset_name, rate=job.rate, repeat=job.repeat, fold=job.fold)
    try:
        schema = fit_scaling(job.masked, rows=job.train_rows)
        enc = encode(job.masked, schema)
        truth = encode(job.masked, schema, use_truth=True).data
        train, test = enc.take(job.train_rows), enc.take(job.test_rows)
        train_out, test_out, extras = _fit_predict(job, train, test)
        rmse = rmse_missing(test_out, truth[job.test_rows], test.mask)
        acc = None
        if job.accuracy and job.labels is not None:
            acc = post_imputation_accuracy(
                train_out,
                job.labels[job.train_rows],
                test_out,
                job.labels[job.test_rows],
                derive_seed(job.base_seed, "accuracy", job.rate, job.repeat, job.fold),
                iterations=job.accuracy_iterations,
            )
    except (PCGainError, ValueError, FloatingPointError) as exc:
        log.warning("cell %s failed: %s", base, exc)
        return CellResult(**base, rmse=None, status=f"failed: {type(exc).__name__}: {exc}")
    seconds = time.perf_counter() - start if job.timings else None
    return CellResult(**base, rmse=rmse, accuracy=acc, seconds=seconds, extras=extras)


def _cache_key(job: _Job) -> tuple:
    cfg = None if job.method == "mean" else json.dumps(job.config.to_dict(), sort_keys=True)
    return (job.method, job.dataset_name, job.rate, job.repeat, job.fold, job.base_seed, job.accuracy, cfg)


def default_workers() -> int:
    raw = os.environ.get(DEFAULT_WORKERS_ENV)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{DEFAULT_WORKERS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"{DEFAULT_WORKERS_ENV} must be >= 1")
    return value


def _summarise(method, name, rate, cells, config, repeats, folds, timings) -> MetricsReport:
    ok = [c for c in cells if c.status == "ok"]
    raw = [c.rmse for c in ok]
    accs = [c.accuracy for c in ok if c.accuracy is not None]
    # spread is taken over per-repeat means so it reflects repeat-to-repeat variation
    per_repeat = [np.mean([c.rmse for c in ok if c.repeat == r]) for r in range(repeats) if any(c.repeat == r for c in ok)]
    acc_repeat = [
        np.mean([c.accuracy for c in ok if c.repeat == r and c.accuracy is not None])
        for r in range(repeats)
        if any(c.repeat == r and c.accuracy is not None for c in ok)
    ]
    return MetricsReport(
        method=method,
        dataset=name,
        missing_rate=rate,
        rmse_mean=float(np.mean(raw)) if raw else float("nan"),
        rmse_std=float(np.std(per_repeat, ddof=1)) if len(per_repeat) >= 2 else None,
        accuracy_mean=float(np.mean(accs)) if accs else None,
        accuracy_std=float(np.std(acc_repeat, ddof=1)) if len(acc_repeat) >= 2 else None,
        config={} if method == "mean" else config.to_dict(),
        raw_rmse=[float(v) for v in raw],
        raw_accuracy=[float(v) for v in accs],
        seconds=float(sum(c.seconds for c in cells if c.seconds is not None)) if timings else None,
        failed_cells=len(cells) - len(ok),
        repeats=repeats,
        folds=folds,
    )


def benchmark(
    dataset: Dataset,
    methods: Sequence[str],
    missing_rates: Sequence[float],
    folds: int = 5,
    repeats: int = 10,
    base_seed: int = 0,
    *,
    config: TrainConfig | None = None,
    label_col: str | None = None,
    accuracy: bool = False,
    accuracy_iterations: int = 2000,
    name: str = "dataset",
    workers: int | None = None,
    timings: bool = False,
    cache: dict | None = None,
) -> BenchmarkResult:
    """Cross-validated, repeated evaluation of every (method, rate) pair.

    ``dataset`` must be fully observed. ``label_col`` is removed from the
    features before masking and feeds the optional accuracy metric. Failed
    cells are recorded with their error instead of aborting the sweep. Passing
    the same ``cache`` dict to several calls reuses identical cells.
    """
    config = config or TrainConfig()
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; choose from {list(METHODS)}")
    if folds < 2:
        raise ConfigError("folds must be >= 2")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    if not methods or not missing_rates:
        raise ConfigError("methods and missing_rates must be non-empty")
    if not dataset.mask.all():
        raise DataError("benchmark needs a fully observed dataset to mask")
    labels = None
    features = dataset
    if label_col is not None:
        if label_col not in dataset.column_names:
            raise DataError(f"label column {label_col!r} not found")
        labels = np.array(dataset.column(label_col).tolist())
        features = dataset.drop_columns([label_col])
    if accuracy and labels is None:
        raise ConfigError("accuracy needs a label column")
    workers = default_workers() if workers is None else workers

    jobs = []
    for rate in missing_rates:
        rate = float(rate)
        for repeat in range(repeats):
            masked = apply_mcar(features, rate, derive_seed(base_seed, "mask", rate, repeat))
            ids = _fold_ids(features.n_rows, folds, derive_seed(base_seed, "folds", rate, repeat))
            for fold in range(folds):
                train_rows, test_rows = np.flatnonzero(ids != fold), np.flatnonzero(ids == fold)
                for method in methods:
                    jobs.append(
                        _Job(method, name, rate, repeat, fold, masked, train_rows, test_rows, labels, config,
                             base_seed, accuracy, accuracy_iterations, timings)
                    )

    cache = {} if cache is None else cache
    todo = [j for j in jobs if _cache_key(j) not in cache]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_job, todo))
    else:
        done = [_run_job(j) for j in todo]
    for j, c in zip(todo, done):
        cache[_cache_key(j)] = c
    cells = [cache[_cache_key(j)] for j in jobs]

    reports = []
    for rate in missing_rates:
        for method in methods:
            group = [c for c in cells if c.method == method and c.rate == float(rate)]
            reports.append(_summarise(method, name, float(rate), group, config, repeats, folds, timings))
    return BenchmarkResult(reports, cells)


def sweep_grid(
    dataset: Dataset,
    param: str,
    values: Sequence,
    config: TrainConfig | None = None,
    *,
    missing_rate: float = 0.5,
    folds: int = 5,
    repeats: int = 1,
    base_seed: int = 0,
    method: str = "pcgain",
    **kw,
) -> list[dict]:
    """rmse_mean per value of one hyperparameter, every value evaluated on the same seeds."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep param must be one of {sorted(SWEEP_PARAMS)}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    config = config or TrainConfig()
    grid = []
    for v in values:
        cfg = config.replace(**{SWEEP_PARAMS[param]: v})
        res = benchmark(dataset, [method], [missing_rate], folds, repeats, base_seed, config=cfg, **kw)
        rep = res.reports[0]
        grid.append({"param": param, "value": v, "rmse_mean": rep.rmse_mean, "rmse_std": rep.rmse_std,
                     "failed_cells": rep.failed_cells})
    return grid


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


LONG_COLUMNS = ("method", "dataset", "rate", "fold", "repeat", "rmse", "accuracy", "seconds", "status")


def write_long_csv(cells: Sequence[CellResult], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for c in cells:
            w.writerow([_fmt(getattr(c, k)) for k in LONG_COLUMNS])


def write_summary_json(reports: Sequence[MetricsReport], path, extra: dict | None = None) -> None:
    doc = {"reports": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n")


def write_grid_csv(grid: Sequence[dict], path) -> None:
    cols = ("param", "value", "rmse_mean", "rmse_std", "failed_cells")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in grid:
            w.writerow([_fmt(row[k]) for k in cols])
