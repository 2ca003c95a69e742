"""Training hyperparameters and the ``key = value`` run-configuration file."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of the GAIN / PC-GAIN objectives and of the three training stages.

    ``hidden_widths`` and ``classifier_hidden`` default to the encoded width
    when left as ``None``.
    """

    alpha: float = 200.0
    beta: float = 20.0
    lam: float = 0.4
    clusters_k: int = 5
    hint_rate: float = 0.9
    noise_scale: float = 0.01
    batch_size: int = 128
    iterations: int = 10000
    learning_rate: float = 1e-3
    seed: int = 0
    hidden_widths: tuple[int, ...] | None = None
    classifier_hidden: tuple[int, ...] | None = None
    classifier_iterations: int = 2000
    kmeans_max_iters: int = 300
    kmeans_restarts: int = 10
    warm_start: bool = False

    def __post_init__(self):
        for name in ("hidden_widths", "classifier_hidden"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(int(w) for w in v))
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, msg: str):
            if not ok:
                raise ConfigError(msg)

        for name in ("alpha", "beta", "lam", "hint_rate", "noise_scale", "learning_rate"):
            need(math.isfinite(float(getattr(self, name))), f"{name} must be finite")
        need(self.alpha >= 0, "alpha must be >= 0")
        need(self.beta >= 0, "beta must be >= 0")
        need(0 < self.lam <= 1, "lambda must lie in (0, 1]")
        need(self.clusters_k >= 1, "clusters_k must be >= 1")
        need(0 <= self.hint_rate <= 1, "hint_rate must lie in [0, 1]")
        need(self.noise_scale > 0, "noise_scale must be > 0")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.iterations >= 0, "iterations must be >= 0")
        need(self.learning_rate > 0, "learning_rate must be > 0")
        need(self.classifier_iterations >= 0, "classifier_iterations must be >= 0")
        need(self.kmeans_max_iters >= 1, "kmeans_max_iters must be >= 1")
        need(self.kmeans_restarts >= 1, "kmeans_restarts must be >= 1")
        for name in ("hidden_widths", "classifier_hidden"):
            v = getattr(self, name)
            need(v is None or all(w >= 1 for w in v), f"{name} entries must be >= 1")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for name in ("hidden_widths", "classifier_hidden"):
            if d[name] is not None:
                d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        data = {("lam" if k == "lambda" else k): v for k, v in data.items()}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


DEFAULT_WORKERS_ENV = "PCGAIN_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    """Contents of a run configuration file: a :class:`TrainConfig` plus I/O settings."""

    train: TrainConfig = field(default_factory=TrainConfig)
    dataset: str | None = None
    label_col: str | None = None
    output_dir: str | None = None
    workers: int | None = None


_RUN_KEYS = ("dataset", "label_col", "output_dir", "workers")


def _parse_value(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        low = text.lower()
        if low in ("true", "false"):
            return low == "true"
        if low in ("none", "null"):
            return None
        return text


def parse_run_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Values are JSON where possible.

    >>> parse_run_config("alpha = 100\\nlambda = 0.2").train.lam
    0.2
    """
    train: dict[str, Any] = {}
    run: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        parsed = _parse_value(value)
        if key in _RUN_KEYS:
            run[key] = parsed
        else:
            train[key] = parsed
    if run.get("workers") is not None and (not isinstance(run["workers"], int) or run["workers"] < 1):
        raise ConfigError("workers must be a positive integer")
    return RunConfig(TrainConfig.from_dict(train), **run)


def load_run_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_run_config(text)
