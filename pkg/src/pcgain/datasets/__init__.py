"""Bundled benchmark tables and the synthetic learnability toy.

``spambase.csv`` (4597 rows, label ``class``) and ``winequality_white.csv``
(4898 rows, label ``quality``) are regenerated by ``scripts/fetch_datasets.py``.
"""

from __future__ import annotations

from importlib import resources

import numpy as np

from ..data import ColumnSpec, Dataset, load_csv

SPAM_LABEL = "class"
WINE_LABEL = "quality"


def data_path(filename: str):
    return resources.files(__name__).joinpath(filename)


def load_spambase() -> Dataset:
    with resources.as_file(data_path("spambase.csv")) as p:
        return load_csv(p)


def load_wine() -> Dataset:
    with resources.as_file(data_path("winequality_white.csv")) as p:
        return load_csv(p)


def toy_dataset(n: int = 1000) -> Dataset:
    """Two columns on an even grid: x in [0, 1] and y = x + 0.05 sin(10 x)."""
    x = np.linspace(0.0, 1.0, n)
    y = x + 0.05 * np.sin(10.0 * x)
    return Dataset.from_values(np.column_stack([x, y]).astype(object), [ColumnSpec("x"), ColumnSpec("y")])


def mask_toy_target(toy: Dataset, rate: float, seed: int) -> Dataset:
    """Remove each ``y`` cell independently with probability ``rate``; ``x`` stays observed."""
    rng = np.random.default_rng(seed)
    keep = np.ones(toy.values.shape, dtype=bool)
    keep[:, 1] = rng.random(toy.n_rows) >= rate
    return Dataset(np.where(keep, toy.values, None), keep.astype(np.uint8), toy.schema, toy.values)


LOADERS = {"spam": load_spambase, "wine": load_wine}
LABELS = {"spam": SPAM_LABEL, "wine": WINE_LABEL}
