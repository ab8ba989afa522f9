"""
Generator cone of the stochastic-matrix group and its exponential map.

A rating generator with an absorbing default lives in the cone of
``K x K`` matrices with non-negative off-diagonal entries, zero row sums
and a zero last row.  The cone is spanned by ``E_ij - E_ii`` for
``i = 1..K-1``, ``j = 1..K``, ``j != i`` and is therefore parametrised by
``(K-1)**2`` non-negative coordinates.  Ratings are numbered ``1..K`` in
the public index helpers (matching the usual "From-To" tables); arrays
are 0-based everywhere else.

The exponential uses uniformisation plus scaling and squaring: with
``q = max(-L_ii)`` the shifted matrix ``P = L + q I`` is entrywise
non-negative, so ``exp(L/2^s) = exp(-q/2^s) * T_m(P/2^s)`` is a sum of
non-negative terms and no cancellation can occur.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

CLAMP_TOL = 1e-12
ROW_SUM_TOL = 1e-9
DEXP_ORDER = 12

# scaled norm bound and Taylor truncation target
_THETA_MAX = 0.5
_TAYLOR_TOL = 2.0**-56
_MAX_DEGREE = 24


class InvariantError(RuntimeError):
    """A result violated a mathematical guarantee (signals a bug, not bad input)."""


def n_coords(K: int) -> int:
    """Dimension of the generator cone for ``K`` ratings."""
    if K < 2:
        raise ValueError(f"need at least two ratings, got K={K}")
    return (K - 1) ** 2


def basis_index(K: int, i: int, j: int) -> int:
    """Flat 1-based coordinate index of the basis element ``E_ij - E_ii``.

    Ordering is row-major over ``(i, j)`` with ``j == i`` skipped, so for
    ``K = 4``: ``(1,2) -> 1, (1,3) -> 2, (1,4) -> 3, (2,1) -> 4, ...``.
    """
    n_coords(K)
    if not 1 <= i <= K - 1:
        raise ValueError(f"from-rating {i} outside 1..{K - 1}")
    if not 1 <= j <= K:
        raise ValueError(f"to-rating {j} outside 1..{K}")
    if i == j:
        raise ValueError("diagonal pairs are not basis elements")
    return (i - 1) * (K - 1) + (j - 1 if j < i else j - 2) + 1


def basis_pair(K: int, flat: int) -> tuple[int, int]:
    """Inverse of :func:`basis_index`: 1-based ``(from, to)`` ratings."""
    n = n_coords(K)
    if not 1 <= flat <= n:
        raise ValueError(f"flat index {flat} outside 1..{n}")
    i0, r = divmod(flat - 1, K - 1)
    j0 = r if r < i0 else r + 1
    return i0 + 1, j0 + 1


@lru_cache(maxsize=None)
def _pairs0(K: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = zip(*(basis_pair(K, f) for f in range(1, n_coords(K) + 1)))
    r = np.array(rows) - 1
    c = np.array(cols) - 1
    r.flags.writeable = False
    c.flags.writeable = False
    return r, c


@lru_cache(maxsize=None)
def _flat_slots(K: int) -> tuple[np.ndarray, np.ndarray]:
    # positions of the basis entries and of the diagonal in a flattened K x K matrix
    r, c = _pairs0(K)
    off = r * K + c
    diag = np.arange(K) * (K + 1)
    off.flags.writeable = False
    diag.flags.writeable = False
    return off, diag


def basis_pairs(K: int) -> tuple[np.ndarray, np.ndarray]:
    """0-based row and column arrays of the basis, in flat order."""
    return _pairs0(K)


def pair_labels(K: int, labels=None) -> list[str]:
    """``"i-j"`` strings in flat order, e.g. ``"1-2"`` or ``"A-B"``."""
    rows, cols = basis_pairs(K)
    if labels is None:
        labels = [str(k + 1) for k in range(K)]
    return [f"{labels[i]}-{labels[j]}" for i, j in zip(rows, cols)]


def dim_from_coords(n: int) -> int:
    K = math.isqrt(n) + 1
    if (K - 1) ** 2 != n or n < 1:
        raise ValueError(f"{n} coordinates do not match any (K-1)^2")
    return K


@dataclass(frozen=True)
class GeneratorElement:
    """Point of the generator cone stored by its non-negative coordinates."""

    K: int
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.shape != (n_coords(self.K),):
            raise ValueError(f"expected {n_coords(self.K)} coordinates, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coordinates must be finite")
        if np.any(c < 0):
            raise ValueError("coordinates of the cone must be non-negative")
        c.flags.writeable = False
        object.__setattr__(self, "coords", c)

    @classmethod
    def zero(cls, K: int) -> "GeneratorElement":
        return cls(K, np.zeros(n_coords(K)))

    @property
    def matrix(self) -> np.ndarray:
        return realize(self)

    def __add__(self, other: "GeneratorElement") -> "GeneratorElement":
        return GeneratorElement(self.K, self.coords + other.coords)

    def __mul__(self, c: float) -> "GeneratorElement":
        return GeneratorElement(self.K, c * self.coords)

    __rmul__ = __mul__


def realize(g) -> np.ndarray:
    """Matrix ``sum_i coords_i * (E_{from_i,to_i} - E_{from_i,from_i})``.

    Accepts a :class:`GeneratorElement` or a coordinate array of shape
    ``(..., (K-1)**2)``; batches map to ``(..., K, K)``.
    """
    if isinstance(g, GeneratorElement):
        coords = g.coords
    else:
        coords = np.asarray(g, dtype=float)
    n = coords.shape[-1]
    K = dim_from_coords(n)
    rows, cols = basis_pairs(K)
    batch = coords.shape[:-1]
    out = np.zeros(batch + (K, K))
    out[..., rows, cols] = coords
    # coords of row i form a contiguous block of K-1 entries
    rowsum = coords.reshape(batch + (K - 1, K - 1)).sum(axis=-1)
    idx = np.arange(K - 1)
    out[..., idx, idx] = -rowsum
    return out


def coords_of(L: np.ndarray) -> np.ndarray:
    """Coordinates of a realised cone matrix (inverse of :func:`realize`)."""
    L = np.asarray(L, dtype=float)
    rows, cols = basis_pairs(L.shape[-1])
    return L[..., rows, cols].copy()


def _degree_thresholds() -> np.ndarray:
    # theta_m: largest scaled norm for which degree m meets the target,
    # i.e. theta^(m+1)/(m+1)! * e^theta_max <= tol
    out = []
    for m in range(1, _MAX_DEGREE + 1):
        bound = _TAYLOR_TOL * math.factorial(m + 1) / math.e**_THETA_MAX
        out.append(bound ** (1.0 / (m + 1)))
    return np.array(out)


_THRESHOLDS = _degree_thresholds()


def _taylor_degree(theta: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(_THRESHOLDS, theta, side="left")
    return np.minimum(idx, _MAX_DEGREE - 1) + 1


_INV_FACT = np.array([1.0 / math.factorial(k) for k in range(_MAX_DEGREE + 1)])


def _fold_last(op: np.ufunc, a: np.ndarray) -> np.ndarray:
    # op-reduce over a short last axis; a loop over columns is several
    # times faster than a ufunc reduction for lengths like 3 or 4
    out = a[..., 0].copy()
    for j in range(1, a.shape[-1]):
        op(out, a[..., j], out=out)
    return out


def _taylor(X: np.ndarray, m: np.ndarray) -> np.ndarray:
    # sum_{k<=m} X^k/k! by Paterson-Stockmeyer with blocks of two terms:
    # P <- X^2 P + c_2j+1 X + c_2j I.  Coefficients above each matrix's
    # own degree m are zero, so its leading blocks stay exactly zero and
    # the result does not depend on the other degrees in the batch.
    n, K = len(X), X.shape[-1]
    if len(m) == 0:
        return np.zeros_like(X)
    top, low = int(m.max()), int(m.min())
    X2 = X @ X if top >= 2 else None
    P = None
    tmp = np.empty_like(X)
    for j in range(top // 2, -1, -1):
        k0, k1 = 2 * j, 2 * j + 1
        if P is None:
            P = np.zeros_like(X)
        else:
            P = X2 @ P
        if k1 <= top:
            if k1 <= low:
                np.multiply(X, _INV_FACT[k1], out=tmp)
            else:
                np.multiply(X, np.where(m >= k1, _INV_FACT[k1], 0.0)[:, None, None], out=tmp)
            P += tmp
        diag = P.reshape((n, K * K))[:, :: K + 1]
        if k0 <= low:
            diag += _INV_FACT[k0]
        else:
            diag += np.where(m >= k0, _INV_FACT[k0], 0.0)[:, None]
    return P


def _expm_core(X: np.ndarray, q: np.ndarray, norm: np.ndarray) -> np.ndarray:
    # X = A + qI: (n, K, K), entrywise non-negative; norm = ||X||_inf.
    # X is scaled in place.
    K = X.shape[-1]
    big = norm > _THETA_MAX
    if big.any():
        s = np.zeros(len(X), dtype=int)
        s[big] = np.ceil(np.log2(norm[big] / _THETA_MAX)).astype(int)
        factor = np.ldexp(1.0, -s)
        X *= factor[:, None, None]
        E = _taylor(X, _taylor_degree(norm * factor))
        E *= np.exp(-q * factor)[:, None, None]
        for step in range(int(s.max())):
            sel = s > step
            if sel.all():
                E = E @ E
            else:
                Es = E[sel]
                E[sel] = Es @ Es
    else:
        # exp(-q) is a per-matrix scalar that the row normalisation below
        # cancels exactly, so it is only needed to keep squaring in range
        E = _taylor(X, _taylor_degree(norm))

    lowest = E.min(initial=0.0)
    if lowest < -CLAMP_TOL:
        raise InvariantError(f"exponential produced entry {lowest:.3e}")
    np.maximum(E, 0.0, out=E)
    E /= _fold_last(np.add, E)[:, :, None]
    return E


def expm(L: np.ndarray) -> np.ndarray:
    """Matrix exponential of generator matrices (batched over leading axes).

    ``L`` must have non-negative off-diagonals and zero row sums.  The
    result is a stochastic matrix; rows are renormalised to sum to one
    and entries above ``-CLAMP_TOL`` but below zero are clamped.  Each
    matrix is processed independently, so results do not depend on how
    a batch is partitioned.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim < 2 or L.shape[-1] != L.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {L.shape}")
    K = L.shape[-1]
    batch = L.shape[:-2]
    A = L.reshape((-1, K, K))
    eye = np.eye(K)
    if not np.all(np.isfinite(A)):
        raise ValueError("generator entries must be finite")
    if np.any(A * (1.0 - eye) < 0):
        raise ValueError("generator has negative off-diagonal entries")
    scale = np.maximum(np.abs(A).max(axis=(-2, -1), initial=0.0), 1.0)
    if np.any(np.abs(A.sum(axis=-1)) > ROW_SUM_TOL * K * scale[:, None]):
        raise ValueError("generator rows must sum to zero")
    q = np.maximum(-np.diagonal(A, axis1=-2, axis2=-1).min(axis=-1), 0.0)
    X = A + q[:, None, None] * eye
    return _expm_core(X, q, X.sum(axis=-1).max(axis=-1)).reshape(batch + (K, K))


def exp(g) -> np.ndarray:
    """Stochastic matrix ``exp(realize(g))`` for a cone element or coordinates.

    Coordinate arrays of shape ``(..., (K-1)**2)`` are exponentiated as a
    batch.
    """
    if isinstance(g, GeneratorElement):
        coords = g.coords
    else:
        coords = np.asarray(g, dtype=float)
        if coords.size and not (np.isfinite(coords).all() and coords.min() >= 0):
            raise ValueError("cone coordinates must be finite and non-negative")
    return exp_unchecked(coords)


def exp_unchecked(coords: np.ndarray) -> np.ndarray:
    """:func:`exp` for a float coordinate array the caller knows is finite and non-negative."""
    K = dim_from_coords(coords.shape[-1])
    batch = coords.shape[:-1]
    flat = coords.reshape((-1, coords.shape[-1]))
    # build L + qI directly; its rows sum to q, so q is the infinity norm
    rowsum = _fold_last(np.add, flat.reshape((-1, K - 1, K - 1)))
    q = _fold_last(np.maximum, rowsum)
    off, diag = _flat_slots(K)
    X = np.zeros((len(flat), K * K))
    X[:, off] = flat
    X[:, diag[:-1]] = q[:, None] - rowsum
    X[:, diag[-1]] = q
    return _expm_core(X.reshape((-1, K, K)), q, q).reshape(batch + (K, K))


def expm_series(L: np.ndarray, terms: int = 50) -> np.ndarray:
    """Plain truncated power series ``sum_{k<=terms} L^k / k!``.

    Reference implementation only: accurate for small ``||L||``.
    """
    L = np.asarray(L, dtype=float)
    out = np.eye(L.shape[-1]) + np.zeros_like(L)
    term = out.copy()
    for k in range(1, terms + 1):
        term = term @ L / k
        out = out + term
    return out


def ad(L: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Adjoint action ``[L, H] = LH - HL``."""
    return L @ H - H @ L


def dexp_inv(L: np.ndarray, H: np.ndarray, order: int = DEXP_ORDER) -> np.ndarray:
    """Truncated series ``sum_{k=0}^{order} ad_{-L}^k(H) / (k+1)!``.

    This is the factor in ``d/dL exp(L) H = exp(L) @ dexp_inv(L, H)``.
    """
    if order < 0:
        raise ValueError("truncation order must be non-negative")
    L = np.asarray(L, dtype=float)
    term = np.asarray(H, dtype=float)
    out = term.copy()
    fact = 1.0
    for k in range(1, order + 1):
        term = ad(-L, term)
        fact *= k + 1
        out = out + term / fact
    return out


def check_transition_matrix(R: np.ndarray, tol: float = ROW_SUM_TOL) -> None:
    """Raise :class:`InvariantError` unless ``R`` is stochastic with absorbing last row."""
    R = np.asarray(R)
    K = R.shape[-1]
    if R.shape[-2] != K:
        raise InvariantError(f"not square: {R.shape}")
    if np.any(R < 0) or np.any(R > 1 + tol):
        raise InvariantError("entries outside [0, 1]")
    if np.any(np.abs(R.sum(axis=-1) - 1.0) > tol):
        raise InvariantError("row sums deviate from one")
    last = np.zeros(K)
    last[-1] = 1.0
    if np.any(np.abs(R[..., -1, :] - last) > tol):
        raise InvariantError("last row is not absorbing")
