"""GAIN and PC-GAIN missing-data imputation with a reproducible benchmark harness."""

from __future__ import annotations

from .config import RunConfig, TrainConfig
from .data import ColumnSpec, Dataset, EncodedMatrix, apply_mcar, decode, encode, fit_scaling, load_csv
from .errors import ConfigError, DataError, DivergenceError, NothingToImputeError, PCGainError, StageError
from .evaluation import benchmark, mean_impute, post_imputation_accuracy, rmse_missing, sweep_grid
from .gain import GainModel, impute, train_gain
from .kmeans import kmeans
from .pipeline import fit_pcgain, run_pipeline, train_pcgain

__version__ = "0.1.0"

__all__ = [
    "ColumnSpec",
    "ConfigError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "EncodedMatrix",
    "GainModel",
    "NothingToImputeError",
    "PCGainError",
    "RunConfig",
    "StageError",
    "TrainConfig",
    "apply_mcar",
    "benchmark",
    "decode",
    "encode",
    "fit_pcgain",
    "fit_scaling",
    "impute",
    "kmeans",
    "load_csv",
    "mean_impute",
    "post_imputation_accuracy",
    "rmse_missing",
    "run_pipeline",
    "sweep_grid",
    "train_gain",
    "train_pcgain",
]
