"""
Normalized B-spline bases on equispaced knots over [0, 1].

Values are computed with the Cox-de Boor recursion, derivatives with the
usual difference recursion on lower-degree bases. Breakpoints follow the
right-continuous convention, except at t = 1 where the left limit is the
only one available.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "BSplineBasis",
    "PenaltyMatrix",
    "make_basis",
    "eval_basis",
    "eval_basis_deriv",
    "penalty_matrix",
]


@dataclass(frozen=True)
class BSplineBasis:
    """Clamped B-spline basis of degree ``degree`` with ``n_interior`` knots.

    Attributes
    ----------
    degree : int
        Polynomial degree p of each piece.
    n_interior : int
        Number K of equispaced interior knots, t_j = j / (K + 1).
    knots : ndarray
        Full knot vector of length K + 2(p + 1), boundary knots repeated
        p + 1 times.
    """

    degree: int
    n_interior: int
    knots: np.ndarray = field(repr=False)

    @property
    def dimension(self):
        return self.n_interior + self.degree + 1

    @property
    def breakpoints(self):
        """Distinct knots 0 = t_0 < t_1 < ... < t_{K+1} = 1."""
        return self.knots[self.degree:len(self.knots) - self.degree]


@dataclass(frozen=True)
class PenaltyMatrix:
    """Roughness penalty: the Gram matrix of the q-th basis derivatives."""

    order: int
    matrix: np.ndarray

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.matrix
        return self.matrix.astype(dtype)

    @property
    def shape(self):
        return self.matrix.shape


def make_basis(K, p=3):
    """Build the basis with K equispaced interior knots and degree p."""
    if isinstance(K, bool) or int(K) != K or K < 1:
        raise ParameterError(f"number of interior knots must be a positive integer, got {K!r}")
    if isinstance(p, bool) or int(p) != p or p < 0:
        raise ParameterError(f"degree must be a non-negative integer, got {p!r}")
    K, p = int(K), int(p)
    interior = np.arange(1, K + 1) / (K + 1)
    knots = np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])
    knots.setflags(write=False)
    return BSplineBasis(degree=p, n_interior=K, knots=knots)


def _as_points(t):
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if t.ndim != 1:
        raise ParameterError("evaluation points must be a scalar or a 1-D array")
    if not np.all(np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ParameterError("evaluation points must lie in [0, 1]")
    return t, scalar


def _span(knots, p, t):
    # index i with knots[i] <= t < knots[i+1], clamped to non-empty spans
    i = np.searchsorted(knots, t, side="right") - 1
    return np.clip(i, p, len(knots) - p - 2)


def _ratio(num, den):
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _cox_de_boor(knots, degree, t, span):
    """All degree-``degree`` B-splines on ``knots`` at ``t``; shape (m, len(knots) - degree - 1)."""
    m, nk = len(t), len(knots)
    N = np.zeros((m, nk - 1))
    N[np.arange(m), span] = 1.0
    tt = t[:, None]
    for k in range(1, degree + 1):
        i = np.arange(nk - k - 1)
        left = _ratio(tt - knots[i], knots[i + k] - knots[i])
        right = _ratio(knots[i + k + 1] - tt, knots[i + k + 1] - knots[i + 1])
        N = left * N[:, :-1] + right * N[:, 1:]
    return N


def _derivative(knots, degree, q, t, span):
    if q == 0:
        return _cox_de_boor(knots, degree, t, span)
    lower = _derivative(knots, degree - 1, q - 1, t, span)
    i = np.arange(len(knots) - degree - 1)
    a = _ratio(degree, knots[i + degree] - knots[i])
    b = _ratio(degree, knots[i + degree + 1] - knots[i + 1])
    return a * lower[:, :-1] - b * lower[:, 1:]


def eval_basis(basis, t):
    """Evaluate every basis function at ``t``.

    Returns a vector of length ``basis.dimension`` for scalar ``t`` and an
    ``(len(t), dimension)`` matrix otherwise.
    """
    return eval_basis_deriv(basis, t, 0)


def eval_basis_deriv(basis, t, q):
    """q-th derivative of every basis function at ``t`` (right limits at knots)."""
    if isinstance(q, bool) or int(q) != q or q < 0 or q > basis.degree:
        raise ParameterError(f"derivative order must be in [0, {basis.degree}], got {q!r}")
    pts, scalar = _as_points(t)
    span = _span(basis.knots, basis.degree, pts)
    out = _derivative(basis.knots, basis.degree, int(q), pts, span)
    return out[0] if scalar else out


def penalty_matrix(basis, q=2):
    """Exact integral of B^(q)(t) B^(q)(t)^T over [0, 1].

    Uses Gauss-Legendre with p - q + 1 nodes on each knot interval, which
    integrates the degree 2(p - q) piecewise polynomial integrand exactly.
    """
    p = basis.degree
    if isinstance(q, bool) or int(q) != q or q < 0 or q > p:
        raise ParameterError(f"penalty order must be in [0, {p}], got {q!r}")
    q = int(q)
    nodes, weights = np.polynomial.legendre.leggauss(p - q + 1)
    brk = basis.breakpoints
    lo, hi = brk[:-1, None], brk[1:, None]
    half = (hi - lo) / 2
    t = (lo + half * (nodes + 1)).ravel()
    w = (half * weights).ravel()
    V = eval_basis_deriv(basis, t, q)
    D = V.T @ (w[:, None] * V)
    D = (D + D.T) / 2
    D.setflags(write=False)
    return PenaltyMatrix(order=q, matrix=D)
