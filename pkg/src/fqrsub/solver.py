"""
Penalized functional quantile regression.

The estimator minimizes

    sum_i c_i rho_tau(y_i - B_i^T theta) + (lam / 2) theta^T D_q theta

where c_i are case weights (all ones for the full-data fit, R_i / (r pi_i)
for an inverse-probability-weighted subsample). ``fit_pirls`` solves it by
penalized iteratively reweighted least squares; ``fit_oracle_subgradient``
is a slow, independent subgradient method kept for verification.
"""

import logging
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy import linalg

from .basis import BSplineBasis, eval_basis, penalty_matrix
from .design import DesignMatrix, compute_scores
from .exceptions import ParameterError, SolverError

__all__ = [
    "FittedModel",
    "rho_tau",
    "psi_tau",
    "pirls_weights",
    "penalized_objective",
    "fit_pirls",
    "fit_oracle_subgradient",
    "fit_full",
    "fit_subsample",
    "predict",
    "eval_beta",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FittedModel:
    """Spline coefficients of a fitted quantile slope function.

    ``weights`` is the diagonal of the PIRLS weight matrix used in the solve
    that produced ``theta`` (None for the oracle); ``history`` holds the
    true penalized objective at every iterate, starting with the initial
    least-squares fit.
    """

    theta: np.ndarray
    tau: float
    lam: float
    basis: BSplineBasis = field(repr=False)
    iterations: int
    converged: bool
    objective: float
    penalty_order: int = None
    weights: np.ndarray = field(default=None, repr=False)
    history: tuple = field(default=(), repr=False)


def _check_tau(tau):
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1), got {tau!r}")


def rho_tau(u, tau):
    """Check loss u (tau - 1{u < 0})."""
    _check_tau(tau)
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0))


def psi_tau(u, tau):
    """Right subgradient of the check loss: tau - 1{u < 0}, so psi(0) = tau."""
    _check_tau(tau)
    u = np.asarray(u, dtype=float)
    return tau - (u < 0).astype(float)


def pirls_weights(residuals, tau, case_weights=1.0, delta=1e-6):
    """PIRLS weights c_i (tau - 1{r_i < 0}) / (2 r_i).

    Residuals with |r_i| < delta are replaced by delta with the sign of
    r_i (zero counts as positive), so every weight is finite and positive.
    """
    r = np.asarray(residuals, dtype=float)
    guarded = np.where(np.abs(r) < delta, np.where(r < 0, -delta, delta), r)
    return case_weights * psi_tau(r, tau) / (2.0 * guarded)


def penalized_objective(B, y, theta, tau, lam, D, case_weights=None):
    """Weighted check loss plus (lam / 2) theta^T D theta."""
    B = B.scores if isinstance(B, DesignMatrix) else np.asarray(B, dtype=float)
    theta = np.asarray(theta, dtype=float)
    loss = rho_tau(np.asarray(y, dtype=float) - B @ theta, tau)
    if case_weights is not None:
        loss = loss * case_weights
    D = np.asarray(D, dtype=float)
    return float(loss.sum() + 0.5 * lam * theta @ D @ theta)


def _prepare(design, y, tau, lam, D, case_weights):
    _check_tau(tau)
    B = design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2 or B.shape[0] == 0:
        raise ParameterError("design matrix is empty")
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != B.shape[0]:
        raise ParameterError(f"expected {B.shape[0]} responses, got {len(y)}")
    if not np.all(np.isfinite(y)):
        raise ParameterError("responses must be finite")
    if lam < 0 or not np.isfinite(lam):
        raise ParameterError("smoothing parameter must be finite and non-negative")
    D = np.asarray(D, dtype=float)
    if D.shape != (B.shape[1], B.shape[1]):
        raise ParameterError(f"penalty shape {D.shape} does not match {B.shape[1]} coefficients")
    if case_weights is None:
        c = np.ones(len(y))
    else:
        c = np.asarray(case_weights, dtype=float).ravel()
        if len(c) != len(y):
            raise ParameterError(f"expected {len(y)} case weights, got {len(c)}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise ParameterError("case weights must be positive and finite")
    return B, y, D, c


def _spd_solve(A, b, jitter=1e-10):
    try:
        return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), b, check_finite=False)
    except linalg.LinAlgError:
        pass
    ridge = jitter * max(1.0, float(np.mean(np.abs(np.diag(A)))))
    try:
        return linalg.cho_solve(
            linalg.cho_factor(A + ridge * np.eye(len(A)), check_finite=False), b,
            check_finite=False)
    except linalg.LinAlgError:
        raise SolverError("normal matrix is singular even after ridge jitter") from None


def _basis_of(design):
    return design.basis if isinstance(design, DesignMatrix) else None


def fit_pirls(design, y, tau, lam, D, case_weights=None, tol=1e-8, max_iter=200, delta=1e-6):
    """Penalized iteratively reweighted least squares for the check loss.

    Each step solves (B^T W B + (lam / 2) D) theta = B^T W y with W from
    ``pirls_weights`` at the current residuals; the half on the penalty
    makes the fixed point a stationary point of the penalized check loss.
    Starts from the penalized least-squares fit and stops when the largest
    coefficient change is at most ``tol``. Without convergence the
    best-objective iterate is returned with ``converged=False``.
    """
    order = getattr(D, "order", None)
    B, y, D, c = _prepare(design, y, tau, lam, D, case_weights)
    P = 0.5 * lam * D

    theta = _spd_solve(B.T @ (c[:, None] * B) + P, B.T @ (c * y))
    weights = c
    obj = penalized_objective(B, y, theta, tau, lam, D, c)
    history = [obj]
    best = (obj, theta, weights)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = pirls_weights(y - B @ theta, tau, c, delta)
        new = _spd_solve(B.T @ (w[:, None] * B) + P, B.T @ (w * y))
        step = np.max(np.abs(new - theta))
        theta = new
        obj = penalized_objective(B, y, theta, tau, lam, D, c)
        history.append(obj)
        if obj <= best[0]:
            best = (obj, theta, w)
        if step <= tol:
            converged = True
            break
    if not converged:
        log.debug("PIRLS stopped after %d iterations without convergence", it)
    obj, theta, weights = best
    return FittedModel(theta=theta, tau=float(tau), lam=float(lam), basis=_basis_of(design),
                       iterations=it, converged=converged, objective=obj,
                       penalty_order=order, weights=weights, history=tuple(history))


@numba.njit(cache=True)
def _subgradient_descent(B, y, c, tau, lam, D, theta, steps, scale):
    n, d = B.shape
    best = theta.copy()
    best_obj = np.inf
    g = np.empty(d)
    for k in range(1, steps + 1):
        obj = 0.0
        for j in range(d):
            g[j] = 0.0
        for i in range(n):
            fit = 0.0
            for j in range(d):
                fit += B[i, j] * theta[j]
            r = y[i] - fit
            s = tau - 1.0 if r < 0 else tau
            obj += c[i] * r * s
            for j in range(d):
                g[j] -= c[i] * s * B[i, j]
        quad = 0.0
        for a in range(d):
            Dt = 0.0
            for b in range(d):
                Dt += D[a, b] * theta[b]
            quad += theta[a] * Dt
            g[a] += lam * Dt
        obj += 0.5 * lam * quad
        if obj < best_obj:
            best_obj = obj
            best[:] = theta
        gnorm = 0.0
        for j in range(d):
            gnorm += g[j] * g[j]
        gnorm = np.sqrt(gnorm)
        if gnorm == 0.0:
            break
        eta = scale / np.sqrt(k) / gnorm
        for j in range(d):
            theta[j] -= eta * g[j]
    return best, best_obj


def fit_oracle_subgradient(design, y, tau, lam, D, case_weights=None, steps=100_000, scale=None):
    """Normalized subgradient descent on the penalized check loss.

    Step k moves ``scale / sqrt(k)`` along the unit subgradient direction
    and the best iterate seen is returned. Meant for small problems
    (d <= 10, n <= 500); slow by design.
    """
    order = getattr(D, "order", None)
    B, y, D, c = _prepare(design, y, tau, lam, D, case_weights)
    theta0 = np.linalg.lstsq(B, y, rcond=None)[0]
    if scale is None:
        scale = 0.5 * max(1.0, float(np.max(np.abs(theta0))))
    theta, obj = _subgradient_descent(
        np.ascontiguousarray(B), y, c, float(tau), float(lam), np.ascontiguousarray(D),
        theta0.copy(), int(steps), float(scale))
    return FittedModel(theta=theta, tau=float(tau), lam=float(lam), basis=_basis_of(design),
                       iterations=int(steps), converged=True, objective=float(obj),
                       penalty_order=order)


def _design_and_penalty(dataset, basis, q, design):
    if design is None:
        design = compute_scores(dataset, basis)
    D = penalty_matrix(design.basis if design.basis is not None else basis, q)
    return design, D


def fit_full(dataset, basis, tau, lam, q=2, design=None, **opts):
    """Full-data fit: scores, penalty and PIRLS with unit case weights.

    A precomputed ``design`` for ``dataset`` can be passed to skip the
    quadrature. Extra keyword arguments go to ``fit_pirls``.
    """
    if dataset.responses is None:
        raise ParameterError("dataset has no responses")
    if dataset.n == 0:
        raise ParameterError("dataset is empty")
    design, D = _design_and_penalty(dataset, basis, q, design)
    return fit_pirls(design, dataset.responses, tau, lam, D, **opts)


def fit_subsample(dataset, basis, tau, lam, q, plan, design=None, **opts):
    """Fit the inverse-probability-weighted subsample loss of ``plan``.

    Selected rows get case weights R_i / (r pi_i); the penalty is not
    rescaled.
    """
    if dataset.responses is None:
        raise ParameterError("dataset has no responses")
    design, D = _design_and_penalty(dataset, basis, q, design)
    idx = plan.indices
    model = fit_pirls(design.scores[idx], dataset.responses[idx], tau, lam, D,
                      case_weights=plan.case_weights(), **opts)
    return replace(model, basis=design.basis)


def predict(model, design):
    """Fitted conditional quantiles B_i^T theta."""
    B = design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    return B @ model.theta


def eval_beta(model, t):
    """Estimated slope function sum_k theta_k B_k(t)."""
    return eval_basis(model.basis, t) @ model.theta
