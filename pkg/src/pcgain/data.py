"""Tabular datasets: loading, MCAR masking, [0, 1] encoding and pre-train subset selection.

A :class:`Dataset` holds raw cell values (floats for numerical columns,
strings for categorical ones, ``None`` for missing cells) together with the
observation mask. :func:`encode` turns it into the dense network-facing
:class:`EncodedMatrix`; :func:`decode` maps a (completed) encoded matrix back.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

NUMERICAL = "numerical"
CATEGORICAL = "categorical"
MISSING_MARKERS = ("", "NA")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = NUMERICAL
    vocabulary: tuple[str, ...] = ()
    scale_min: float | None = None
    scale_max: float | None = None

    def __post_init__(self):
        if self.kind not in (NUMERICAL, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.vocabulary:
                raise DataError(f"column {self.name!r}: empty categorical vocabulary")
            if len(set(self.vocabulary)) != len(self.vocabulary):
                raise DataError(f"column {self.name!r}: duplicate categories in vocabulary")
        elif self.scale_min is not None and self.scale_max is not None and self.scale_max < self.scale_min:
            raise DataError(f"column {self.name!r}: scale_max < scale_min")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    @property
    def width(self) -> int:
        return len(self.vocabulary) if self.is_categorical else 1

    @property
    def fitted(self) -> bool:
        return self.is_categorical or (self.scale_min is not None and self.scale_max is not None)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Raw N x d table. ``values[k, i] is None`` exactly where ``mask[k, i] == 0``."""

    values: np.ndarray
    mask: np.ndarray
    schema: tuple[ColumnSpec, ...]
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=object)
        mask = np.array(self.mask, dtype=np.uint8)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"dataset must be a non-empty 2-d table, got shape {values.shape}")
        if mask.shape != values.shape:
            raise DataError("mask shape does not match values")
        if len(self.schema) != values.shape[1]:
            raise DataError("schema length does not match number of columns")
        absent = np.frompyfunc(lambda v: v is None, 1, 1)(values).astype(bool)
        if not np.array_equal(absent, mask == 0):
            raise DataError("mask must be 0 exactly where values are absent")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "schema", tuple(self.schema))
        if self.ground_truth is not None:
            truth = np.array(self.ground_truth, dtype=object)
            if truth.shape != values.shape:
                raise DataError("ground_truth shape does not match values")
            if any(v is None for v in truth.ravel()):
                raise DataError("ground_truth may not contain absent cells")
            obs = mask == 1
            if not all(a == b for a, b in zip(truth[obs], values[obs])):
                raise DataError("ground_truth disagrees with observed values")
            object.__setattr__(self, "ground_truth", _frozen(truth))

    @classmethod
    def from_values(cls, values, schema: Sequence[ColumnSpec], ground_truth=None) -> "Dataset":
        values = np.array(values, dtype=object)
        mask = np.frompyfunc(lambda v: v is not None, 1, 1)(values).astype(np.uint8)
        return cls(values, mask, tuple(schema), ground_truth)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.schema]

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        truth = None if self.ground_truth is None else self.ground_truth[rows]
        return Dataset(self.values[rows], self.mask[rows], self.schema, truth)

    def drop_columns(self, names: Iterable[str]) -> "Dataset":
        names = set(names)
        keep = [i for i, c in enumerate(self.schema) if c.name not in names]
        truth = None if self.ground_truth is None else self.ground_truth[:, keep]
        return Dataset(self.values[:, keep], self.mask[:, keep], tuple(self.schema[i] for i in keep), truth)

    def with_schema(self, schema: Sequence[ColumnSpec]) -> "Dataset":
        return replace(self, schema=tuple(schema))

    def column(self, name: str, *, truth: bool = False) -> np.ndarray:
        idx = self.column_names.index(name)
        src = self.ground_truth if truth and self.ground_truth is not None else self.values
        return src[:, idx]


@dataclass(frozen=True, eq=False)
class EncodedMatrix:
    data: np.ndarray
    mask: np.ndarray
    group_map: np.ndarray
    categorical: np.ndarray
    clamped: int = 0
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        mask = np.ascontiguousarray(self.mask, dtype=np.float64)
        if data.ndim != 2 or data.shape != mask.shape:
            raise DataError("encoded data and mask must be equal-shape matrices")
        if len(self.group_map) != data.shape[1] or len(self.categorical) != data.shape[1]:
            raise DataError("group_map / categorical length must equal encoded width")
        object.__setattr__(self, "data", _frozen(data))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "group_map", _frozen(np.asarray(self.group_map, dtype=np.intp)))
        object.__setattr__(self, "categorical", _frozen(np.asarray(self.categorical, dtype=bool)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def raw_mask(self) -> np.ndarray:
        """Per-variable mask (N x d), taken from the first encoded column of each group."""
        _, first = np.unique(self.group_map, return_index=True)
        return self.mask[:, first].astype(np.uint8)

    def take(self, rows) -> "EncodedMatrix":
        rows = np.asarray(rows, dtype=np.intp)
        return replace(self, data=self.data[rows], mask=self.mask[rows], clamped=0, warnings=())

    def completed(self, values: np.ndarray) -> "EncodedMatrix":
        """A fully observed matrix with the same layout, e.g. an imputation result."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.shape:
            raise DataError(f"completed matrix shape {values.shape} != {self.shape}")
        return replace(self, data=values, mask=np.ones_like(values), clamped=0, warnings=())


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_csv(
    path: str | Path,
    schema_hint: Mapping[str, str] | None = None,
    missing_markers: Sequence[str] = MISSING_MARKERS,
) -> Dataset:
    """Read a headed, comma-separated file. Empty fields and ``NA`` are missing cells.

    A column is categorical when any observed field fails to parse as a finite
    float, or when ``schema_hint`` names it ``"categorical"``. Vocabularies are
    sorted. Scale bounds are left unfitted (see :func:`fit_scaling`).
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file (a header row is required)")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no data rows")
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(r)}")
    hint = dict(schema_hint or {})
    unknown = set(hint) - set(header)
    if unknown:
        raise DataError(f"schema_hint names unknown columns: {sorted(unknown)}")

    markers = set(missing_markers)
    n, d = len(body), len(header)
    values = np.empty((n, d), dtype=object)
    schema = []
    for j, name in enumerate(header):
        raw = [r[j].strip() for r in body]
        observed = [k for k in range(n) if raw[k] not in markers]
        if not observed:
            raise DataError(f"column {name!r} has no observed cells")
        parsed = [_parse_float(raw[k]) for k in observed]
        kind = hint.get(name)
        if kind is None:
            kind = CATEGORICAL if any(p is None for p in parsed) else NUMERICAL
        if kind == NUMERICAL:
            if any(p is None for p in parsed):
                raise DataError(f"column {name!r} forced numerical but holds non-numeric fields")
            for k, p in zip(observed, parsed):
                values[k, j] = p
            schema.append(ColumnSpec(name, NUMERICAL))
        else:
            for k in observed:
                values[k, j] = raw[k]
            schema.append(ColumnSpec(name, CATEGORICAL, tuple(sorted({raw[k] for k in observed}))))
    return Dataset.from_values(values, schema)


def write_mask_csv(mask: np.ndarray, columns: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(np.asarray(mask, dtype=int).tolist())


def read_mask_csv(path: str | Path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[int(v) for v in r] for r in rows if r], dtype=np.uint8)


def apply_mcar(dataset: Dataset, rate: float, seed: int) -> Dataset:
    """Remove each cell independently with probability ``rate``.

    The input must be fully observed; its values become the ground truth.
    """
    if not 0.0 <= rate <= 1.0:
        raise DataError(f"missing rate must lie in [0, 1], got {rate}")
    if not dataset.mask.all():
        raise DataError("apply_mcar needs a fully observed dataset (masking twice would corrupt ground truth)")
    rng = np.random.default_rng(seed)
    keep = rng.random(dataset.values.shape) >= rate
    values = np.where(keep, dataset.values, None)
    return Dataset(values, keep.astype(np.uint8), dataset.schema, dataset.values)


def fit_scaling(dataset: Dataset, rows=None) -> tuple[ColumnSpec, ...]:
    """Schema with numerical bounds set to the observed min/max over ``rows`` (default: all)."""
    values = dataset.values if rows is None else dataset.values[np.asarray(rows, dtype=np.intp)]
    mask = dataset.mask if rows is None else dataset.mask[np.asarray(rows, dtype=np.intp)]
    out = []
    for j, spec in enumerate(dataset.schema):
        if spec.is_categorical:
            out.append(spec)
            continue
        obs = mask[:, j] == 1
        if not obs.any():
            raise DataError(f"column {spec.name!r} has no observed cells to fit scaling on")
        col = values[obs, j].astype(np.float64)
        out.append(replace(spec, scale_min=float(col.min()), scale_max=float(col.max())))
    return tuple(out)


def encoded_layout(schema: Sequence[ColumnSpec]) -> tuple[np.ndarray, np.ndarray]:
    group_map = np.concatenate([np.full(s.width, i, dtype=np.intp) for i, s in enumerate(schema)])
    categorical = np.concatenate([np.full(s.width, s.is_categorical) for s in schema])
    return group_map, categorical


def encode(dataset: Dataset, schema: Sequence[ColumnSpec] | None = None, *, use_truth: bool = False) -> EncodedMatrix:
    """Min-max scale numerical columns and one-hot categorical ones.

    ``schema`` supplies the scaling bounds (normally fitted on a training
    fold); when omitted, the dataset's own schema is used and fitted on its
    observed cells if needed. Values falling outside the bounds are clamped
    into [0, 1] and counted in ``clamped``. With ``use_truth`` the ground truth
    is encoded as a fully observed matrix.
    """
    if schema is None:
        schema = dataset.schema if all(s.fitted for s in dataset.schema) else fit_scaling(dataset)
    schema = tuple(schema)
    if len(schema) != dataset.n_cols:
        raise DataError("schema length does not match dataset")
    if use_truth:
        if dataset.ground_truth is None:
            raise DataError("dataset has no ground truth")
        values, mask = dataset.ground_truth, np.ones_like(dataset.mask)
    else:
        values, mask = dataset.values, dataset.mask
    n = dataset.n_rows
    blocks, mblocks = [], []
    clamped = 0
    for j, spec in enumerate(schema):
        obs = mask[:, j] == 1
        if spec.is_categorical:
            block = np.zeros((n, spec.width))
            index = {c: i for i, c in enumerate(spec.vocabulary)}
            for k in np.flatnonzero(obs):
                try:
                    block[k, index[values[k, j]]] = 1.0
                except KeyError:
                    raise DataError(f"column {spec.name!r}: category {values[k, j]!r} not in vocabulary") from None
        else:
            if not spec.fitted:
                raise DataError(f"column {spec.name!r}: scaling bounds not fitted")
            block = np.zeros((n, 1))
            col = values[obs, j].astype(np.float64)
            span = spec.scale_max - spec.scale_min
            scaled = (col - spec.scale_min) / span if span > 0 else np.zeros_like(col)
            outside = (scaled < 0.0) | (scaled > 1.0)
            clamped += int(outside.sum())
            block[obs, 0] = np.clip(scaled, 0.0, 1.0)
        blocks.append(block)
        mblocks.append(np.repeat(obs[:, None].astype(np.float64), spec.width, axis=1))
    group_map, categorical = encoded_layout(schema)
    warnings = (f"{clamped} held-out values fell outside fitted bounds and were clamped",) if clamped else ()
    return EncodedMatrix(np.hstack(blocks), np.hstack(mblocks), group_map, categorical, clamped, warnings)


def decode(encoded: EncodedMatrix, schema: Sequence[ColumnSpec]) -> Dataset:
    """Inverse of :func:`encode`. Cells with encoded mask 0 decode as missing.

    Categorical groups decode to their argmax category (ties go to the lowest
    vocabulary index).
    """
    schema = tuple(schema)
    group_map, _ = encoded_layout(schema)
    if encoded.width != len(group_map) or not np.array_equal(encoded.group_map, group_map):
        raise DataError(f"encoded width {encoded.width} does not match schema width {len(group_map)}")
    n = encoded.n_rows
    values = np.empty((n, len(schema)), dtype=object)
    col = 0
    for j, spec in enumerate(schema):
        block = encoded.data[:, col : col + spec.width]
        obs = encoded.mask[:, col] == 1
        if spec.is_categorical:
            idx = np.argmax(block, axis=1)
            values[:, j] = [spec.vocabulary[i] if o else None for i, o in zip(idx, obs)]
        else:
            if not spec.fitted:
                raise DataError(f"column {spec.name!r}: scaling bounds not fitted")
            raw = block[:, 0] * (spec.scale_max - spec.scale_min) + spec.scale_min
            values[:, j] = [float(v) if o else None for v, o in zip(raw, obs)]
        col += spec.width
    return Dataset.from_values(values, schema)


def missing_rate(mask_row) -> float:
    """Fraction of missing entries (zeros) in one sample's mask."""
    row = np.asarray(mask_row)
    return float(np.count_nonzero(row == 0) / row.size)


def select_pretrain_subset(mask, lam: float) -> np.ndarray:
    """Indices of the ceil(lam * N) rows with the smallest missing fraction.

    ``mask`` is a raw N x d mask or a :class:`Dataset`. Ties keep row order.
    """
    if isinstance(mask, Dataset):
        mask = mask.mask
    mask = np.asarray(mask)
    if not 0.0 < lam <= 1.0:
        raise DataError(f"lambda must lie in (0, 1], got {lam}")
    n = mask.shape[0]
    size = math.ceil(round(lam * n, 9))
    rates = np.count_nonzero(mask == 0, axis=1) / mask.shape[1]
    return np.argsort(rates, kind="stable")[:size]
