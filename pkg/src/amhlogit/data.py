"""Datasets, model specifications and CSV ingestion."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

__all__ = [
    "ModelSpec",
    "Dataset",
    "DataError",
    "ingest_csv",
    "load_trekking",
    "effect_coding",
    "TREKKING_COLUMNS",
]

TREKKING_COLUMNS = ("<2.5", "2.5-5", "5-10", "10-20", ">20")


class DataError(ValueError):
    """Input data cannot be turned into a valid Dataset."""


@dataclass(frozen=True)
class ModelSpec:
    k_levels: int
    x_column: str = "x"
    y_column: str = "y"
    z1_columns: tuple = ()
    z2_columns: tuple = ()
    z_omega_columns: tuple = ()
    weight_column: str | None = None
    random_effects: bool = False
    subject_column: str | None = None
    gh_order: int = 20
    shared: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("z1_columns", "z2_columns", "z_omega_columns"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.k_levels < 2:
            raise ValueError("K must be at least 2")
        if self.random_effects and not self.subject_column:
            raise ValueError("random effects need a subject column")
        if self.gh_order < 1:
            raise ValueError("quadrature order must be positive")


@dataclass(frozen=True)
class Dataset:
    """Rows of (subject, x, y, z1, z2, z_omega, weight).

    ``z_omega`` defaults to a single intercept column, so a dataset without
    association covariates carries one ``zeta`` coefficient.
    """

    x: np.ndarray
    y: np.ndarray
    k_levels: int
    z1: np.ndarray | None = None
    z2: np.ndarray | None = None
    z_omega: np.ndarray | None = None
    weight: np.ndarray | None = None
    subject: np.ndarray | None = None
    z1_names: tuple = ()
    z2_names: tuple = ()
    z_omega_names: tuple = ()
    digest: str = field(default="", compare=False)

    def __post_init__(self):
        default_w = ("(intercept)",) if self.z_omega is None else ()
        x = np.asarray(self.x).astype(int)
        y = np.asarray(self.y).astype(int)
        n = x.shape[0]
        if n == 0:
            raise DataError("no data rows")
        if y.shape != (n,):
            raise DataError("x and y must have equal length")
        if np.any((x != 0) & (x != 1)):
            raise DataError("x must be coded 0/1")
        if np.any((y < 1) | (y > self.k_levels)):
            raise DataError(f"y must be coded 1..{self.k_levels}")
        z1 = _design(self.z1, n)
        z2 = _design(self.z2, n)
        zw = np.ones((n, 1)) if self.z_omega is None else _design(self.z_omega, n)
        w = np.ones(n) if self.weight is None else np.asarray(self.weight, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DataError("weights must be finite and nonnegative")
        for name, arr in (("z1", z1), ("z2", z2), ("z_omega", zw)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} contains non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)
        object.__setattr__(self, "z_omega", zw)
        object.__setattr__(self, "weight", w)
        if self.subject is not None:
            object.__setattr__(self, "subject", np.asarray(self.subject))
        object.__setattr__(self, "z1_names", _names(self.z1_names, z1.shape[1], "z1_"))
        object.__setattr__(self, "z2_names", _names(self.z2_names, z2.shape[1], "z2_"))
        object.__setattr__(
            self, "z_omega_names", _names(self.z_omega_names or default_w, zw.shape[1], "zw_")
        )

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_obs(self) -> float:
        return float(self.weight.sum())

    def counts(self) -> np.ndarray:
        """Weighted 2 x K table of (x, y) frequencies."""
        table = np.zeros((2, self.k_levels))
        np.add.at(table, (self.x, self.y - 1), self.weight)
        return table

    def collapse(self) -> "Dataset":
        """Merge identical rows (within subject) by summing their weights.

        The likelihood is unchanged because weights multiply row
        log-probabilities; this only shrinks the work.
        """
        keep = self.weight > 0
        sub = self.subject if self.subject is not None else np.zeros(self.n_rows)
        codes, sub_idx = np.unique(sub[keep], return_inverse=True)
        key = np.column_stack(
            [sub_idx, self.x[keep], self.y[keep], self.z1[keep], self.z2[keep], self.z_omega[keep]]
        )
        uniq, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.ravel()
        w = np.zeros(uniq.shape[0])
        np.add.at(w, inv, self.weight[keep])
        p1, p2 = self.z1.shape[1], self.z2.shape[1]
        c = 3
        return replace(
            self,
            x=uniq[:, 1],
            y=uniq[:, 2],
            z1=uniq[:, c : c + p1],
            z2=uniq[:, c + p1 : c + p1 + p2],
            z_omega=uniq[:, c + p1 + p2 :],
            weight=w,
            subject=None if self.subject is None else codes[uniq[:, 0].astype(int)],
        )

    def shift_column(self, which: str, j: int, c: float) -> "Dataset":
        arr = getattr(self, which).copy()
        arr[:, j] += c
        return replace(self, **{which: arr})


def _design(arr, n):
    if arr is None:
        return np.zeros((n, 0))
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] != n:
        raise DataError("design matrix row count differs from data")
    return arr


def _names(names, width, prefix):
    names = tuple(names)
    if len(names) == width:
        return names
    return tuple(f"{prefix}{j + 1}" for j in range(width))


def effect_coding(ids, prefix: str = "subj") -> tuple[np.ndarray, tuple]:
    """Sum-to-zero indicator columns for a factor.

    Level j < L gets column j (+1 on its rows); the last level is coded -1 in
    every column, so the implied level effects sum to zero.
    """
    levels, idx = np.unique(np.asarray(ids), return_inverse=True)
    n_lev = len(levels)
    cols = np.zeros((len(idx), n_lev - 1))
    for j in range(n_lev - 1):
        cols[idx == j, j] = 1.0
    cols[idx == n_lev - 1, :] = -1.0
    return cols, tuple(f"{prefix}[{lev}]" for lev in levels[:-1])


def _parse_float(value, column, row_no):
    try:
        out = float(value)
    except ValueError:
        raise DataError(f"row {row_no}: column {column!r} is not numeric: {value!r}") from None
    if not math.isfinite(out):
        raise DataError(f"row {row_no}: column {column!r} is not finite")
    return out


def ingest_csv(path, spec: ModelSpec) -> Dataset:
    """Read a UTF-8 CSV with a header row into a Dataset.

    x must be coded 0/1 and y 1..K.  Missing required fields, unknown
    columns and out-of-range codes raise :class:`DataError` naming the
    offending row (data rows are numbered from 1).
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
        text = raw.decode("utf-8-sig")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    try:
        rows = list(csv.reader(text.splitlines()))
    except csv.Error as exc:
        raise DataError(f"malformed CSV: {exc}") from None
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataError("no data rows")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    if not body:
        raise DataError("no data rows")

    needed = [spec.x_column, spec.y_column, *spec.z1_columns, *spec.z2_columns, *spec.z_omega_columns]
    if spec.weight_column:
        needed.append(spec.weight_column)
    if spec.subject_column:
        needed.append(spec.subject_column)
    for col in needed:
        if col not in header:
            raise DataError(f"unknown column {col!r}; header has {header}")
    pos = {h: i for i, h in enumerate(header)}

    xs, ys, ws, subs = [], [], [], []
    z1, z2 = [], []
    for row_no, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"row {row_no}: expected {len(header)} fields, found {len(row)}")
        get = {col: row[pos[col]].strip() for col in needed}
        for col, val in get.items():
            if val == "":
                raise DataError(f"row {row_no}: missing value in column {col!r}")
        x = _parse_float(get[spec.x_column], spec.x_column, row_no)
        if x not in (0.0, 1.0):
            raise DataError(f"row {row_no}: x must be 0 or 1, got {get[spec.x_column]}")
        y = _parse_float(get[spec.y_column], spec.y_column, row_no)
        if y != int(y) or not 1 <= y <= spec.k_levels:
            raise DataError(f"row {row_no}: y must be an integer in 1..{spec.k_levels}, got {get[spec.y_column]}")
        w = 1.0
        if spec.weight_column:
            w = _parse_float(get[spec.weight_column], spec.weight_column, row_no)
            if w < 0:
                raise DataError(f"row {row_no}: negative weight")
        xs.append(int(x))
        ys.append(int(y))
        ws.append(w)
        z1.append([_parse_float(get[c], c, row_no) for c in spec.z1_columns])
        z2.append([_parse_float(get[c], c, row_no) for c in spec.z2_columns])
        if spec.subject_column:
            subs.append(get[spec.subject_column])

    n = len(xs)
    zw_arr = None
    zw_names = ()
    if spec.z_omega_columns:
        zw_arr, zw_names = _omega_design(body, pos, spec.z_omega_columns)
    return Dataset(
        x=np.asarray(xs),
        y=np.asarray(ys),
        k_levels=spec.k_levels,
        z1=np.asarray(z1, dtype=float).reshape(n, len(spec.z1_columns)),
        z2=np.asarray(z2, dtype=float).reshape(n, len(spec.z2_columns)),
        z_omega=zw_arr,
        weight=np.asarray(ws),
        subject=np.asarray(subs) if spec.subject_column else None,
        z1_names=spec.z1_columns,
        z2_names=spec.z2_columns,
        z_omega_names=zw_names,
        digest=hashlib.sha256(raw).hexdigest(),
    )


def _omega_design(body, pos, columns):
    """Association covariates enter as factors: one indicator per level.

    Indicator columns (no intercept) give one zeta per combination of
    levels, so each omega_level = tanh(zeta_level) is read off directly.
    """
    keys = [tuple(row[pos[c]].strip() for c in columns) for row in body]
    levels = sorted(set(keys), key=lambda k: tuple(_sort_key(v) for v in k))
    idx = {lev: j for j, lev in enumerate(levels)}
    design = np.zeros((len(keys), len(levels)))
    for i, k in enumerate(keys):
        design[i, idx[k]] = 1.0
    names = tuple(",".join(f"{c}={v}" for c, v in zip(columns, lev)) for lev in levels)
    return design, names


def _sort_key(v):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


def load_trekking() -> Dataset:
    """The Norwegian trekking table (365 hikers) as a weighted dataset.

    x = 1 for hikers trekking weekly, y = 1..5 for typical hike length
    ``<2.5, 2.5-5, 5-10, 10-20, >20`` km.
    """
    ref = resources.files("amhlogit") / "data" / "trekking.csv"
    with resources.as_file(ref) as path:
        return ingest_csv(path, ModelSpec(k_levels=5, weight_column="weight"))


def trekking_path() -> Path:
    return Path(str(resources.files("amhlogit") / "data" / "trekking.csv"))
