"""
Subsampling probabilities and with-replacement subsample draws.

Three schemes are provided: uniform, functional L-optimal (proportional to
||B_i||) and functional A-optimal (proportional to ||H_tau^{-1} B_i||).
Draws use Walker's alias method.
"""

import csv
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import linalg

from .basis import penalty_matrix
from .design import DesignMatrix, assemble_Htau, compute_scores, gram_G
from .exceptions import ParameterError
from .solver import fit_subsample, predict

__all__ = [
    "METHODS",
    "SubsamplePlan",
    "AliasTable",
    "prob_uniform",
    "prob_flopt",
    "prob_faopt",
    "estimate_density_at_zero",
    "make_faopt_pipeline",
    "draw_with_replacement",
    "draw_uniform",
    "write_plan_csv",
    "read_plan_csv",
]

METHODS = ("Unif", "FLopt", "FAopt")

PROB_FLOOR = 1e-12
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class SubsamplePlan:
    """A with-replacement subsample of size ``r``.

    ``indices`` lists the distinct selected rows in increasing order,
    ``counts`` how often each was drawn (R_i), and ``probs`` is the full
    length-n probability vector the draws came from.
    """

    method: str
    probs: np.ndarray = field(repr=False)
    indices: np.ndarray
    counts: np.ndarray
    r: int
    seed: object = None

    def case_weights(self):
        """Inverse-probability weights R_i / (r pi_i) for the selected rows."""
        return self.counts / (self.r * self.probs[self.indices])

    @property
    def max_inverse_weight(self):
        """max_i (n pi_i)^{-1}; finite whenever every probability is positive."""
        return float(1.0 / (len(self.probs) * self.probs.min()))


def _normalize(weights):
    w = np.asarray(weights, dtype=float)
    n = len(w)
    p = w / w.sum()
    p = np.maximum(p, PROB_FLOOR / n)
    return p / p.sum()


def _scores(design):
    return design.scores if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)


def prob_uniform(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n!r}")
    return np.full(int(n), 1.0 / n)


def prob_flopt(design):
    """L-optimal probabilities, proportional to the row norms ||B_i||_2.

    Zero rows get a floor of 1e-12 / n before renormalizing.
    """
    norms = np.linalg.norm(_scores(design), axis=1)
    if not np.all(np.isfinite(norms)):
        raise ParameterError("design contains non-finite scores")
    if not np.any(norms > 0):
        raise ParameterError("every row of the design is zero")
    return _normalize(norms)


def prob_faopt(design, H_tau):
    """A-optimal probabilities, proportional to ||H_tau^{-1} B_i||_2.

    One factorization of H_tau, then a solve against all n score vectors:
    O(n d^2) work. Raises ParameterError when H_tau is singular or its
    condition number exceeds 1e12.
    """
    B = _scores(design)
    H = np.asarray(H_tau, dtype=float)
    if H.shape != (B.shape[1], B.shape[1]):
        raise ParameterError(f"H_tau has shape {H.shape}, expected {(B.shape[1],) * 2}")
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ParameterError(f"H_tau is singular or ill-conditioned (condition number {cond:.3g})")
    try:
        factor = linalg.cho_factor(H, check_finite=False)
        X = linalg.cho_solve(factor, B.T, check_finite=False)
    except linalg.LinAlgError:
        X = linalg.lu_solve(linalg.lu_factor(H, check_finite=False), B.T, check_finite=False)
    norms = np.sqrt(np.einsum("ij,ij->j", X, X))
    if not np.any(norms > 0):
        raise ParameterError("every row of the design is zero")
    return _normalize(norms)


def estimate_density_at_zero(residuals, floor=1e-6):
    """Gaussian-kernel density estimate at 0 with Silverman's bandwidth.

    The bandwidth is 1.06 min(sd, IQR / 1.34) m^{-1/5}; falls back to the
    standard deviation when the IQR vanishes. The estimate is floored at
    ``floor``.
    """
    e = np.asarray(residuals, dtype=float).ravel()
    m = len(e)
    if m < 30:
        raise ParameterError(f"need at least 30 residuals for a density estimate, got {m}")
    sd = e.std(ddof=1)
    q75, q25 = np.percentile(e, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    if not spread > 0:
        return float(floor)
    h = 1.06 * spread * m ** (-0.2)
    dens = np.exp(-0.5 * (e / h) ** 2).sum() / (m * h * np.sqrt(2 * np.pi))
    return float(max(dens, floor))


@numba.njit(cache=True)
def _build_alias(p):
    n = len(p)
    prob = np.empty(n)
    alias = np.arange(n)
    scaled = p * n
    small = np.empty(n, dtype=np.int64)
    large = np.empty(n, dtype=np.int64)
    ns = 0
    nl = 0
    for i in range(n):
        if scaled[i] < 1.0:
            small[ns] = i
            ns += 1
        else:
            large[nl] = i
            nl += 1
    while ns > 0 and nl > 0:
        ns -= 1
        s = small[ns]
        g = large[nl - 1]
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        if scaled[g] < 1.0:
            nl -= 1
            small[ns] = g
            ns += 1
    for k in range(nl):
        prob[large[k]] = 1.0
    for k in range(ns):
        prob[small[k]] = 1.0
    return prob, alias


class AliasTable:
    """Walker/Vose alias table: O(n) construction, O(1) per draw."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        _check_probs(p)
        self.prob, self.alias = _build_alias(p)

    def __len__(self):
        return len(self.prob)

    def sample(self, size, rng):
        i = rng.integers(len(self.prob), size=size)
        u = rng.random(size)
        return np.where(u < self.prob[i], i, self.alias[i])


def _check_probs(p):
    if p.ndim != 1 or len(p) == 0:
        raise ParameterError("probabilities must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ParameterError("probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ParameterError(f"probabilities sum to {p.sum()!r}, not 1")


def _check_r(r):
    if isinstance(r, bool) or int(r) != r or r < 1:
        raise ParameterError(f"subsample size must be a positive integer, got {r!r}")
    return int(r)


def _plan(method, probs, draws, r, seed):
    idx, counts = np.unique(draws, return_counts=True)
    return SubsamplePlan(method=method, probs=probs, indices=idx, counts=counts, r=r, seed=seed)


def draw_with_replacement(probs, r, seed=None, method=None):
    """Draw r i.i.d. indices from ``probs`` and aggregate them into a plan."""
    r = _check_r(r)
    probs = np.asarray(probs, dtype=float)
    table = AliasTable(probs)
    draws = table.sample(r, np.random.default_rng(seed))
    return _plan(method, probs, draws, r, seed)


def draw_uniform(n, r, seed=None):
    """Uniform plan without building an alias table (O(r) work)."""
    r = _check_r(r)
    probs = prob_uniform(n)
    draws = np.random.default_rng(seed).integers(n, size=r)
    return _plan("Unif", probs, draws, r, seed)


def make_faopt_pipeline(dataset, basis, tau, lam, q=2, r0=200, seed=None, design=None):
    """A-optimal probabilities with H_tau estimated from a uniform pilot.

    A uniform pilot subsample of size ``r0`` is fitted, the density of the
    pilot residuals at zero is estimated, and H_tau = f(0) G + (lam / n) D_q
    is plugged into ``prob_faopt`` (the i.i.d.-error simplification).
    """
    if r0 < 200:
        raise ParameterError(f"pilot size must be at least 200, got {r0}")
    if dataset.responses is None:
        raise ParameterError("dataset has no responses")
    if design is None:
        design = compute_scores(dataset, basis)
    n = design.n
    D = penalty_matrix(design.basis, q)
    pilot = draw_uniform(n, int(r0), seed)
    model = fit_subsample(dataset, design.basis, tau, lam, q, pilot, design=design)
    idx = pilot.indices
    resid = dataset.responses[idx] - predict(model, design.scores[idx])
    resid = np.repeat(resid, pilot.counts)
    f0 = estimate_density_at_zero(resid)
    H = assemble_Htau(f0 * gram_G(design), lam, n, D)
    return prob_faopt(design, H)


def write_plan_csv(plan, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "count", "prob"])
        for i, c in zip(plan.indices, plan.counts):
            w.writerow([int(i), int(c), repr(float(plan.probs[i]))])


def read_plan_csv(path, n, method=None):
    """Rebuild a plan from its CSV audit file.

    Only the selected rows' probabilities are stored, so the returned
    ``probs`` has zeros elsewhere; ``case_weights`` is unaffected.
    """
    idx, counts, probs = [], [], np.zeros(n)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ParameterError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
        i, c, p = int(row[0]), int(row[1]), float(row[2])
        idx.append(i)
        counts.append(c)
        probs[i] = p
    counts = np.array(counts, dtype=np.int64)
    return SubsamplePlan(method=method, probs=probs, indices=np.array(idx, dtype=np.int64),
                         counts=counts, r=int(counts.sum()))
