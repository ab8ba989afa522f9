"""The generator cone and its exponential.

Cone coordinates are non-negative weights on the basis E_ij - E_ii; any
such point exponentiates to a stochastic matrix with absorbing default.
"""
import numpy as np
import scipy.linalg

from ratingsde import lie

np.set_printoptions(precision=5, suppress=True)

K = 4
print("basis order:", lie.pair_labels(K, "ABCD"))

rng = np.random.default_rng(1)
g = lie.GeneratorElement(K, rng.uniform(0, 0.3, size=lie.n_coords(K)))
L = g.matrix
print("generator:\n", L)
R = lie.exp(g)
print("exp:\n", R)
print("row sums:", R.sum(axis=1))
print("max diff to scipy expm:", np.abs(R - scipy.linalg.expm(L)).max())

# exp is a one-parameter semigroup along a ray, but not a homomorphism in general
h = lie.GeneratorElement(K, rng.uniform(0, 0.3, size=lie.n_coords(K)))
print("exp(g) exp(g) - exp(2g):", np.abs(R @ R - lie.exp(2 * g)).max())
print("exp(g) exp(h) - exp(g + h):", np.abs(R @ lie.exp(h) - lie.exp(g + h)).max())
print("commutator norm:", np.abs(lie.ad(L, h.matrix)).max())

# derivative of exp along h, from the truncated dexp series
eps = 1e-6
fd = (scipy.linalg.expm(L + eps * h.matrix) - scipy.linalg.expm(L - eps * h.matrix)) / (2 * eps)
print("dexp check:", np.abs(fd - R @ lie.dexp_inv(L, h.matrix)).max())
