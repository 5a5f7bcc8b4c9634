"""
Full-data functional quantile regression
========================================

Simulate curves, pick the smoothing parameter by GACV and fit the slope
function at a few quantile levels.
"""

import math

import numpy as np

from fqrsub import (SimulationConfig, compute_scores, eval_beta, fit_full, make_basis,
                    penalty_matrix, predict, select_lambda, simulate, true_beta)

train, test = simulate(SimulationConfig(n=5000, m_test=500, coefficient_dist="mvT3", seed=1))
K = math.ceil(train.n ** 0.25)
basis = make_basis(K, 3)
design = compute_scores(train, basis)
D = penalty_matrix(basis, 2)
print(f"n={train.n}, K={K}, coefficients per fit: {basis.dimension}")

# GACV on the full data; ties go to the smoother fit
lam, table = select_lambda(design, train.responses, 0.5, D)
for row in table[::4]:
    print(f"  lambda {row.lam:9.2e}  gacv {row.gacv:.5f}  df {row.df:5.2f}")
print("selected lambda:", lam)

grid = np.linspace(0, 1, 200)
step = grid[1]
for tau in (0.25, 0.5, 0.75):
    model = fit_full(train, basis, tau, lam, design=design)
    err = eval_beta(model, grid) - true_beta(grid)
    rise = math.sqrt(np.sum(err**2) * step)
    neg = np.mean(train.responses - predict(model, design) < 0)
    print(f"tau={tau}: root ISE vs beta {rise:.4f}, negative residuals {neg:.3f}, "
          f"{model.iterations} PIRLS iterations")

# the model has no intercept and the simulated data are symmetric about 0,
# so the fraction of negative residuals stays near 1/2 whatever tau is
