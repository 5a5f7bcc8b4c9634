"""
Functional data containers, functional scores and the Gram matrices built
from them.

A curve x_i observed on a grid is reduced to its score vector
B_i = int_0^1 x_i(t) B(t) dt, computed with the composite trapezoid rule on
the observation grid. Stacking the scores row-wise gives the design matrix
of the scalar-on-function model.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import BSplineBasis, eval_basis
from .exceptions import IngestionError, ParameterError

__all__ = [
    "FunctionalDataset",
    "DesignMatrix",
    "IngestionSummary",
    "trapezoid_weights",
    "compute_scores",
    "gram_G",
    "gram_Gtau",
    "assemble_Htau",
    "fourier_design",
    "smooth_curves_fourier",
    "read_curves_csv",
    "write_curves_csv",
    "read_responses_csv",
    "write_responses_csv",
    "load_dataset",
]


@dataclass(frozen=True)
class FunctionalDataset:
    """Curves sampled on a common grid over [0, 1], with optional responses.

    Attributes
    ----------
    grid : ndarray, shape (m,)
        Strictly increasing sample points, first 0 and last 1.
    curves : ndarray, shape (n, m)
        Row i holds x_i evaluated on ``grid``.
    responses : ndarray, shape (n,), optional
        Scalar responses y_i.
    ids : tuple of str, optional
        Record identifiers, used by the CSV formats. Defaults to "0".."n-1".
    """

    grid: np.ndarray
    curves: np.ndarray
    responses: np.ndarray = None
    ids: tuple = field(default=None, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        curves = np.asarray(self.curves, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise IngestionError("grid must be one-dimensional with at least 2 points")
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise IngestionError("grid must be finite and strictly increasing")
        if abs(grid[0]) > 1e-12 or abs(grid[-1] - 1.0) > 1e-12:
            raise IngestionError("grid must start at 0 and end at 1")
        grid = grid.copy()
        grid[0], grid[-1] = 0.0, 1.0
        if curves.ndim == 1:
            curves = curves[None, :]
        if curves.ndim != 2 or curves.shape[1] != len(grid):
            raise IngestionError(
                f"curves must have shape (n, {len(grid)}), got {curves.shape}")
        if not np.all(np.isfinite(curves)):
            raise IngestionError("curves contain missing or non-finite values")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)
        n = curves.shape[0]
        if self.responses is not None:
            y = np.asarray(self.responses, dtype=float).ravel()
            if len(y) != n:
                raise IngestionError(f"expected {n} responses, got {len(y)}")
            if not np.all(np.isfinite(y)):
                raise IngestionError("responses contain non-finite values")
            object.__setattr__(self, "responses", y)
        if self.ids is None:
            object.__setattr__(self, "ids", tuple(str(i) for i in range(n)))
        else:
            ids = tuple(str(i) for i in self.ids)
            if len(ids) != n:
                raise IngestionError(f"expected {n} ids, got {len(ids)}")
            object.__setattr__(self, "ids", ids)

    @property
    def n(self):
        return self.curves.shape[0]

    def subset(self, index):
        index = np.asarray(index)
        y = None if self.responses is None else self.responses[index]
        ids = tuple(np.asarray(self.ids, dtype=object)[index])
        return FunctionalDataset(self.grid, self.curves[index], y, ids)

    def with_responses(self, y):
        return FunctionalDataset(self.grid, self.curves, y, self.ids)


@dataclass(frozen=True)
class DesignMatrix:
    """Row i is the functional score vector B_i of curve i."""

    scores: np.ndarray
    basis: BSplineBasis

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def dimension(self):
        return self.scores.shape[1]

    def rows(self, index):
        return DesignMatrix(self.scores[np.asarray(index)], self.basis)


def trapezoid_weights(grid):
    """Weights w with sum_j w_j f(grid_j) equal to the trapezoid rule."""
    h = np.diff(np.asarray(grid, dtype=float))
    w = np.zeros(len(h) + 1)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def compute_scores(dataset, basis):
    """Functional scores B_i = int x_i(t) B(t) dt by trapezoid quadrature."""
    if len(dataset.grid) < 2:
        raise IngestionError("grid must contain at least 2 points")
    Bgrid = eval_basis(basis, dataset.grid)
    scores = dataset.curves @ (trapezoid_weights(dataset.grid)[:, None] * Bgrid)
    return DesignMatrix(scores=scores, basis=basis)


def _scores(design):
    return design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)


def gram_G(design):
    """G = (1/n) sum_i B_i B_i^T."""
    B = _scores(design)
    if B.ndim != 2 or B.shape[0] == 0:
        raise ParameterError("design matrix is empty")
    return B.T @ B / B.shape[0]


def gram_Gtau(design, densities):
    """Density-weighted Gram matrix (1/n) sum_i f_i B_i B_i^T.

    ``densities`` holds the conditional error densities at zero, one per
    row; they must be strictly positive and finite.
    """
    B = _scores(design)
    if B.ndim != 2 or B.shape[0] == 0:
        raise ParameterError("design matrix is empty")
    f = np.broadcast_to(np.asarray(densities, dtype=float), (B.shape[0],))
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ParameterError("densities must be strictly positive and finite")
    return B.T @ (f[:, None] * B) / B.shape[0]


def assemble_Htau(G_tau, lam, n, D_q):
    """H_tau = G_tau + (lam / n) D_q."""
    G_tau = np.asarray(G_tau, dtype=float)
    D = np.asarray(D_q, dtype=float)
    if G_tau.shape != D.shape or G_tau.ndim != 2 or G_tau.shape[0] != G_tau.shape[1]:
        raise ParameterError(f"dimension mismatch: G_tau {G_tau.shape} vs D_q {D.shape}")
    if lam < 0:
        raise ParameterError("smoothing parameter must be non-negative")
    if n < 1:
        raise ParameterError("sample size must be positive")
    if lam == 0:
        return G_tau.copy()
    return G_tau + (lam / n) * D


# -- Fourier smoothing of irregular raw records ------------------------------

@dataclass
class IngestionSummary:
    accepted: list = field(default_factory=list)
    rejected: dict = field(default_factory=dict)

    def __str__(self):
        return f"{len(self.accepted)} records accepted, {len(self.rejected)} rejected"


def fourier_design(t, n_basis):
    """Columns 1, sin(2 pi k t), cos(2 pi k t) for k = 1..(n_basis - 1) / 2."""
    t = np.asarray(t, dtype=float)
    cols = [np.ones_like(t)]
    for k in range(1, (n_basis - 1) // 2 + 1):
        cols.append(np.sin(2 * np.pi * k * t))
        cols.append(np.cos(2 * np.pi * k * t))
    return np.column_stack(cols)


def smooth_curves_fourier(records, n_basis=15, grid=None, time_range=None, jitter=1e-10):
    """Turn raw per-record observations into curves on a common grid.

    Each record is fitted by least squares on a Fourier basis of
    ``n_basis`` functions (period 1) after mapping its time stamps
    affinely onto [0, 1]; the fitted function is then evaluated on ``grid``.

    Parameters
    ----------
    records : mapping or sequence
        ``{id: (times, values)}`` or a sequence of ``(times, values)``.
    n_basis : int
        Odd number of Fourier functions.
    grid : array_like, optional
        Target grid on [0, 1]; defaults to 101 equispaced points.
    time_range : (float, float), optional
        Raw times mapped to 0 and 1. Defaults to the range over all records.

    Returns
    -------
    dataset : FunctionalDataset
        One curve per accepted record.
    summary : IngestionSummary
        Accepted ids and the reason each rejected record was dropped.
    """
    if isinstance(n_basis, bool) or int(n_basis) != n_basis or n_basis < 1 or n_basis % 2 == 0:
        raise ParameterError(f"n_basis must be a positive odd integer, got {n_basis!r}")
    n_basis = int(n_basis)
    if not hasattr(records, "items"):
        records = {str(i): rec for i, rec in enumerate(records)}
    grid = np.linspace(0.0, 1.0, 101) if grid is None else np.asarray(grid, dtype=float)

    parsed = {}
    for key, (times, values) in records.items():
        parsed[str(key)] = (np.asarray(times, dtype=float).ravel(),
                            np.asarray(values, dtype=float).ravel())
    if time_range is None:
        nonempty = [tm for tm, _ in parsed.values() if len(tm)]
        if not nonempty:
            raise IngestionError("no observations in any record")
        lo = min(tm.min() for tm in nonempty)
        hi = max(tm.max() for tm in nonempty)
    else:
        lo, hi = map(float, time_range)
    if not hi > lo:
        raise IngestionError("time range must have positive length")

    summary = IngestionSummary()
    Fgrid = fourier_design(grid, n_basis)
    curves = []
    for key, (times, values) in parsed.items():
        if len(times) != len(values):
            summary.rejected[key] = "times and values differ in length"
            continue
        ok = np.isfinite(times) & np.isfinite(values)
        times, values = times[ok], values[ok]
        if len(times) < n_basis:
            summary.rejected[key] = f"{len(times)} observations for {n_basis} coefficients"
            continue
        X = fourier_design((times - lo) / (hi - lo), n_basis)
        coef = np.linalg.solve(X.T @ X + jitter * np.eye(n_basis), X.T @ values)
        curves.append(Fgrid @ coef)
        summary.accepted.append(key)
    if not curves:
        raise IngestionError(f"every record was rejected ({summary})")
    return FunctionalDataset(grid, np.vstack(curves), ids=summary.accepted), summary


# -- CSV formats -------------------------------------------------------------
#
# curves:    t,<t_1>,...,<t_m>  then one  <id>,<x(t_1)>,...,<x(t_m)>  per record
# responses: id,y  (header optional)

def _fmt(x):
    return repr(float(x))


def _parse_floats(cells, path, lineno):
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise IngestionError(f"{path}:{lineno}: {exc}") from None


def read_curves_csv(path):
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if row]
    if not rows:
        raise IngestionError(f"{path}: empty file")
    lineno, header = rows[0]
    if header[0].strip() != "t":
        raise IngestionError(f"{path}:{lineno}: first line must start with 't'")
    grid = _parse_floats(header[1:], path, lineno)
    if len(grid) < 2:
        raise IngestionError(f"{path}:{lineno}: grid must contain at least 2 points")
    ids, curves = [], []
    for lineno, row in rows[1:]:
        if len(row) != len(grid) + 1:
            raise IngestionError(
                f"{path}:{lineno}: expected {len(grid) + 1} fields, got {len(row)}")
        ids.append(row[0].strip())
        curves.append(_parse_floats(row[1:], path, lineno))
    if not curves:
        raise IngestionError(f"{path}: no curve rows")
    if len(set(ids)) != len(ids):
        raise IngestionError(f"{path}: duplicate record ids")
    return FunctionalDataset(np.array(grid), np.array(curves), ids=ids)


def write_curves_csv(dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [_fmt(t) for t in dataset.grid])
        for key, row in zip(dataset.ids, dataset.curves):
            w.writerow([key] + [_fmt(v) for v in row])


def read_responses_csv(path):
    """Map record id to response. A leading ``id,y`` header is skipped."""
    path = Path(path)
    out = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            if lineno == 1 and [c.strip() for c in row] == ["id", "y"]:
                continue
            key = row[0].strip()
            if key in out:
                raise IngestionError(f"{path}:{lineno}: duplicate id {key!r}")
            out[key] = _parse_floats(row[1:], path, lineno)[0]
    return out


def write_responses_csv(dataset, path):
    if dataset.responses is None:
        raise IngestionError("dataset has no responses")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "y"])
        for key, y in zip(dataset.ids, dataset.responses):
            w.writerow([key, _fmt(y)])


def load_dataset(curves_path, responses_path=None):
    """Read curves and, optionally, responses joined on record id."""
    ds = read_curves_csv(curves_path)
    if responses_path is None:
        return ds
    resp = read_responses_csv(responses_path)
    missing = [k for k in ds.ids if k not in resp]
    if missing:
        raise IngestionError(
            f"{responses_path}: no response for {len(missing)} curve(s), e.g. {missing[0]!r}")
    return ds.with_responses([resp[k] for k in ds.ids])
