"""
Evaluation quantities for subsample estimators.

All integrals over [0, 1] use the trapezoid rule on the evaluation grid.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .design import DesignMatrix, trapezoid_weights
from .exceptions import ParameterError

__all__ = [
    "RepetitionResult",
    "root_ise",
    "imse",
    "eimse",
    "prediction_efficiency",
    "relative_efficiency",
    "v_pi",
    "AsymptoticVariance",
    "asymptotic_variance",
    "Timer",
    "timer",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RepetitionResult:
    method: str
    r: int
    rep: int
    beta: np.ndarray
    seconds: float
    converged: bool


def _curves(estimates, reference, grid):
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    ref = np.asarray(reference, dtype=float)
    if grid is None:
        grid = np.linspace(0.0, 1.0, est.shape[1])
    grid = np.asarray(grid, dtype=float)
    if est.shape[1] != len(grid) or ref.shape != grid.shape:
        raise ParameterError(
            f"grid mismatch: estimates {est.shape}, reference {ref.shape}, grid {grid.shape}")
    if est.shape[0] == 0:
        raise ParameterError("need at least one repetition")
    return est, ref, grid


def root_ise(estimates, reference, grid=None):
    """Per-repetition sqrt(int (estimate - reference)^2 dt)."""
    est, ref, grid = _curves(estimates, reference, grid)
    return np.sqrt(((est - ref) ** 2) @ trapezoid_weights(grid))


def imse(estimates, truth, grid=None):
    """Mean over repetitions of the root integrated squared error.

    ``estimates`` has one row per repetition, evaluated on ``grid``
    (default: equispaced on [0, 1]); ``truth`` is the true curve on the
    same grid.
    """
    return float(root_ise(estimates, truth, grid).mean())


def eimse(estimates, full_estimate, grid=None):
    """IMSE with the full-data estimate as reference."""
    return imse(estimates, full_estimate, grid)


def _pred(theta, design):
    B = design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    return B @ np.asarray(theta, dtype=float)


def prediction_efficiency(design, theta_sub, theta_full, true_signal):
    """sum (s_i - x_i'beta_sub)^2 / sum (s_i - x_i'beta_full)^2 over a test set.

    ``true_signal`` holds s_i = int x_i beta for the test curves and the
    thetas are spline coefficients; predictions are B_i^T theta.
    """
    s = np.asarray(true_signal, dtype=float)
    num = np.sum((s - _pred(theta_sub, design)) ** 2)
    den = np.sum((s - _pred(theta_full, design)) ** 2)
    if den == 0:
        raise ParameterError("full-data predictions are exact; efficiency undefined")
    return float(num / den)


def relative_efficiency(design, theta_sub, theta_full):
    """sum (x_i'beta_sub - x_i'beta_full)^2 / sum (x_i'beta_full)^2."""
    full = _pred(theta_full, design)
    den = np.sum(full**2)
    if den == 0:
        raise ParameterError("full-data predictions are all zero")
    return float(np.sum((_pred(theta_sub, design) - full) ** 2) / den)


def v_pi(design, probs):
    """V_pi = (1/n^2) sum_i B_i B_i^T / pi_i."""
    B = design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    p = np.asarray(probs, dtype=float)
    if len(p) != B.shape[0] or np.any(p <= 0):
        raise ParameterError("probabilities must be positive, one per row")
    n = B.shape[0]
    return B.T @ (B / p[:, None]) / n**2


@dataclass(frozen=True)
class AsymptoticVariance:
    V: np.ndarray
    V_pi: np.ndarray
    trace: float
    trace_V_pi: float


def asymptotic_variance(design, probs, H_tau, r, n=None, tau=0.5, K=None):
    """tau (1 - tau) / K * H^{-1} (V_pi + eta G) H^{-1} with eta = r / n.

    ``K`` defaults to the number of interior knots of ``design.basis``.
    """
    B = design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    n = B.shape[0] if n is None else n
    if K is None:
        if not isinstance(design, DesignMatrix):
            raise ParameterError("K is required when the design carries no basis")
        K = design.basis.n_interior
    H = np.asarray(H_tau, dtype=float)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e14:
        raise ParameterError(f"H_tau is singular (condition number {cond:.3g})")
    Vp = v_pi(B, probs)
    G = B.T @ B / B.shape[0]
    Hinv = linalg.inv(H)
    V = tau * (1 - tau) / K * Hinv @ (Vp + (r / n) * G) @ Hinv
    V = (V + V.T) / 2
    return AsymptoticVariance(V=V, V_pi=Vp, trace=float(np.trace(V)), trace_V_pi=float(np.trace(Vp)))


class Timer:
    """Elapsed wall-clock seconds of a ``with`` block (perf_counter)."""

    def __init__(self, label=""):
        self.label = label
        self.seconds = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self._start
        log.debug("%s: %.6f s", self.label, self.seconds)
        return False


@contextmanager
def timer(label=""):
    """``with timer("fit") as t: ...`` then read ``t.seconds``."""
    t = Timer(label)
    with t:
        yield t
