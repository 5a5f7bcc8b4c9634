"""
Synthetic scalar-on-function data.

Curves are random combinations x_i(t) = sum_j a_ij B_j(t) of J cubic
B-splines, with coefficient rows drawn from a multivariate normal or
multivariate t law with covariance 0.5^|i-j|. Responses follow
y_i = int x_i(t) beta(t) dt + eps_i with beta(t) = 2 t^2 + 0.25 t + 1.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .basis import eval_basis, make_basis
from .design import FunctionalDataset, trapezoid_weights
from .exceptions import ConfigError

__all__ = [
    "COEFFICIENT_DISTS",
    "ERROR_DISTS",
    "SimulationConfig",
    "true_beta",
    "signal",
    "gen_covariates",
    "gen_responses",
    "simulate",
]

COEFFICIENT_DISTS = ("mvNormal", "mvT3", "mvT2")
ERROR_DISTS = ("Normal", "T1", "Hetero")


@dataclass(frozen=True)
class SimulationConfig:
    n: int = 10_000
    m_test: int = 1000
    coefficient_dist: str = "mvNormal"
    error_dist: str = "Normal"
    generator_basis_size: int = 10
    grid_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"n must be a positive integer, got {self.n!r}")
        if int(self.m_test) != self.m_test or self.m_test < 0:
            raise ConfigError(f"m_test must be a non-negative integer, got {self.m_test!r}")
        if self.coefficient_dist not in COEFFICIENT_DISTS:
            raise ConfigError(f"coefficient_dist must be one of {COEFFICIENT_DISTS}")
        if self.error_dist not in ERROR_DISTS:
            raise ConfigError(f"error_dist must be one of {ERROR_DISTS}")
        if self.generator_basis_size < 4:
            raise ConfigError("generator_basis_size must be at least 4")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be at least 2")

    def to_dict(self):
        return asdict(self)


def true_beta(t):
    t = np.asarray(t, dtype=float)
    return 2 * t**2 + 0.25 * t + 1


def signal(dataset, beta=true_beta):
    """int x_i(t) beta(t) dt by the trapezoid rule on the dataset grid."""
    w = trapezoid_weights(dataset.grid) * beta(dataset.grid)
    return dataset.curves @ w


def _coefficients(dist, n, J, rng):
    idx = np.arange(J)
    cov = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    L = np.linalg.cholesky(cov)
    a = rng.standard_normal((n, J)) @ L.T
    if dist == "mvNormal":
        return a
    nu = {"mvT3": 3, "mvT2": 2}[dist]
    return a / np.sqrt(rng.chisquare(nu, size=n) / nu)[:, None]


def gen_covariates(config, n=None, rng=None):
    """Sample ``n`` curves (default ``config.n``) on a uniform grid."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n = config.n if n is None else n
    J = config.generator_basis_size
    grid = np.linspace(0.0, 1.0, config.grid_size)
    Bgrid = eval_basis(make_basis(J - 4, 3), grid)
    a = _coefficients(config.coefficient_dist, n, J, rng)
    return FunctionalDataset(grid, a @ Bgrid.T)


def gen_responses(dataset, error_dist="Normal", seed=None, noise_scale=1.0, rng=None):
    """Responses with the chosen error law.

    ``noise_scale`` multiplies every error draw; 0 returns the noiseless
    signal.
    """
    if error_dist not in ERROR_DISTS:
        raise ConfigError(f"error_dist must be one of {ERROR_DISTS}")
    rng = np.random.default_rng(seed) if rng is None else rng
    mu = signal(dataset)
    n = dataset.n
    if error_dist == "Normal":
        eps = rng.standard_normal(n)
    elif error_dist == "T1":
        eps = rng.standard_cauchy(n)
    else:
        g = dataset.grid
        scale = np.abs(dataset.curves * (g + 1)) @ trapezoid_weights(g)
        eps = rng.standard_normal(n) * scale
    return mu + noise_scale * eps


def simulate(config):
    """Training and test sets (sizes n and m_test) with responses.

    The two sets come from one seeded stream and share no curves.
    """
    rng = np.random.default_rng(config.seed)
    full = gen_covariates(config, config.n + config.m_test, rng)
    full = full.with_responses(gen_responses(full, config.error_dist, rng=rng))
    idx = np.arange(full.n)
    return full.subset(idx[:config.n]), full.subset(idx[config.n:])
