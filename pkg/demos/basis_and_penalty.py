"""
B-spline bases and roughness penalties
======================================

A cubic basis on equispaced knots, its partition of unity, and the
second-derivative penalty whose null space holds the straight lines.
"""

import numpy as np

from fqrsub import eval_basis, eval_basis_deriv, make_basis, penalty_matrix

# 5 interior knots and degree 3 give 9 basis functions
basis = make_basis(5, 3)
print("knots:", basis.knots)
print("dimension:", basis.dimension)

# at any t the basis values are non-negative, at most 4 are nonzero, and they sum to 1
t = np.linspace(0, 1, 7)
V = eval_basis(basis, t)
print(np.round(V, 3))
print("row sums:", V.sum(axis=1))

# first derivatives sum to zero because the sum itself is constant
print("derivative row sums:", np.round(eval_basis_deriv(basis, t, 1).sum(axis=1), 12))

# the q=2 penalty integrates products of second derivatives exactly
D = np.asarray(penalty_matrix(basis, 2))
ev = np.linalg.eigvalsh(D)
print("two zero eigenvalues:", np.round(ev[:3], 10))

# coefficients equal to the Greville abscissae reproduce beta(t) = t,
# which the penalty does not charge for
greville = np.array([basis.knots[k + 1:k + 4].mean() for k in range(basis.dimension)])
print("line reproduced:", np.allclose(eval_basis(basis, t) @ greville, t))
print("penalty of a line:", float(greville @ D @ greville))
