"""
Uniform versus optimal subsampling
==================================

Repeat subsample fits under the three sampling rules and compare their
root integrated squared error against the true slope.
"""

import math

import numpy as np

from fqrsub import (SimulationConfig, asymptotic_variance, assemble_Htau, compute_scores,
                    draw_uniform, draw_with_replacement, eval_beta, fit_subsample, gram_G, imse,
                    make_basis, make_faopt_pipeline, penalty_matrix, prob_flopt, prob_uniform,
                    simulate, true_beta)

train, _ = simulate(SimulationConfig(n=10_000, m_test=0, coefficient_dist="mvT2", seed=3))
basis = make_basis(math.ceil(train.n ** 0.25), 3)
design = compute_scores(train, basis)
tau, lam, r, reps = 0.5, 0.3, 600, 40
grid = np.linspace(0, 1, 200)

probs = {
    "Unif": prob_uniform(train.n),
    "FLopt": prob_flopt(design),
    "FAopt": make_faopt_pipeline(train, basis, tau, lam, r0=300, seed=0, design=design),
}

# heavy-tailed curves make the optimal probabilities very uneven
for name, p in probs.items():
    print(f"{name:6s} max n*pi = {train.n * p.max():7.2f}")

for name, p in probs.items():
    curves = []
    for rep in range(reps):
        if name == "Unif":
            plan = draw_uniform(train.n, r, seed=rep)
        else:
            plan = draw_with_replacement(p, r, seed=rep, method=name)
        model = fit_subsample(train, basis, tau, lam, 2, plan, design=design)
        curves.append(eval_beta(model, grid))
    print(f"{name:6s} IMSE over {reps} reps: {imse(np.array(curves), true_beta(grid), grid):.4f}")

# the asymptotic variance trace ranks the rules the same way
H = assemble_Htau(0.4 * gram_G(design), lam, train.n, penalty_matrix(basis, 2))
for name, p in probs.items():
    print(f"{name:6s} tr(V) = {asymptotic_variance(design, p, H, r, tau=tau).trace:.4g}")
