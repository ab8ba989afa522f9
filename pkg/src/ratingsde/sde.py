"""
Rating-matrix processes driven by decoupled SDEs in the generator cone.

Two families are provided, both with one triple ``(a_i, b_i, sigma_i)``
per cone coordinate:

``cir``  direct exponential mapping ``R_t = exp(L_t)`` where every
         coordinate is a CIR process ``dL = a (b - L) dt + sigma sqrt(L) dW``
         started at zero, discretised by full-truncation Euler.
``gem``  geometric Euler-Maruyama ``R_{k+1} = R_k exp(dL_k)`` with
         ``dL_k = |Y_k|^a dt`` and ``dY = b dt + sigma dW``, ``Y_0 = 0``.
         Increments are non-negative, so every step factor is stochastic.

By default every coordinate of a trajectory is driven by the same scalar
Brownian motion (``driver="common"``), matching a one-dimensional driving
semimartingale; ``driver="independent"`` gives each coordinate its own.
Trajectories are always independent of each other.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import lie, streams
from .rating_data import MatrixSeries, RatingScale

FAMILIES = ("cir", "gem")
STEPS_PER_YEAR = 360
OBS_TIMES = (1 / 12, 3 / 12, 6 / 12, 1.0)
DRIVERS = ("common", "independent")


@dataclass(frozen=True)
class ModelParams:
    """Per-coordinate parameter triples of one model family.

    The stacked vector form is ``[a_1..a_n, b_1..b_n, sigma_1..sigma_n]``
    with ``n = (K-1)**2`` coordinates in basis order.
    """

    family: str
    K: int
    a: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}, expected one of {FAMILIES}")
        n = lie.n_coords(self.K)
        for name in ("a", "b", "sigma"):
            v = np.array(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (n,):
                raise ValueError(f"{name} needs {n} entries, got {v.size}")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"{name} must be finite and non-negative")
            v.flags.writeable = False
            object.__setattr__(self, name, v)

    @property
    def n(self) -> int:
        return lie.n_coords(self.K)

    @classmethod
    def from_vector(cls, family: str, K: int, p) -> "ModelParams":
        p = np.asarray(p, dtype=float)
        n = lie.n_coords(K)
        if p.shape != (3 * n,):
            raise ValueError(f"parameter vector needs {3 * n} entries, got {p.shape}")
        return cls(family, K, p[:n], p[n : 2 * n], p[2 * n :])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.a, self.b, self.sigma])

    def table(self, labels=None) -> list[tuple[str, float, float, float]]:
        """Rows ``(from-to, a, b, sigma)`` in basis order."""
        names = lie.pair_labels(self.K, labels)
        return [
            (nm, float(x), float(y), float(z))
            for nm, x, y, z in zip(names, self.a, self.b, self.sigma)
        ]

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "K": self.K,
            "a": self.a.tolist(),
            "b": self.b.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelParams":
        return cls(obj["family"], int(obj["K"]), obj["a"], obj["b"], obj["sigma"])


@dataclass(frozen=True)
class SimulationGrid:
    """Uniform time grid, observation times, path count and seed.

    Observation times are snapped to the nearest grid point; the horizon
    defaults to the last observation time.  ``driver`` selects one shared
    Brownian motion per trajectory or one per coordinate.
    """

    n_paths: int = 1000
    obs_times: tuple[float, ...] = OBS_TIMES
    steps_per_year: int = STEPS_PER_YEAR
    seed: int = 0
    horizon: float | None = None
    driver: str = "common"

    def __post_init__(self):
        if self.driver not in DRIVERS:
            raise ValueError(f"unknown driver {self.driver!r}, expected one of {DRIVERS}")
        if self.n_paths < 1:
            raise ValueError("need at least one trajectory")
        if self.steps_per_year < 1:
            raise ValueError("steps_per_year must be positive")
        obs = tuple(float(t) for t in self.obs_times)
        if not obs or any(t < 0 for t in obs) or any(b <= a for a, b in zip(obs, obs[1:])):
            raise ValueError("observation times must be non-negative and increasing")
        object.__setattr__(self, "obs_times", obs)
        if self.horizon is None:
            object.__setattr__(self, "horizon", obs[-1])
        if self.obs_index[-1] > self.n_steps:
            raise ValueError("observation time beyond the horizon")
        if len(set(self.obs_index.tolist())) != len(obs):
            raise ValueError("two observation times snap to the same grid point")

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon * self.steps_per_year))

    def noise_dim(self, n_coords: int) -> int:
        """Number of Brownian components per trajectory."""
        return 1 if self.driver == "common" else n_coords

    @property
    def obs_index(self) -> np.ndarray:
        return np.rint(np.asarray(self.obs_times) * self.steps_per_year).astype(int)

    @property
    def times(self) -> np.ndarray:
        """Observation times after snapping to the grid."""
        return self.obs_index / self.steps_per_year


@dataclass
class PathEnsemble:
    """Simulated matrices at the observation times.

    ``matrices`` has shape ``(M, T, K, K)`` and ``coords`` ``(M, T, n)``;
    ``paths`` (optional) holds the coordinate paths on the full grid with
    shape ``(n_steps + 1, M, n)``.
    """

    family: str
    grid: SimulationGrid
    K: int
    matrices: np.ndarray
    coords: np.ndarray
    paths: np.ndarray | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def n_paths(self) -> int:
        return self.matrices.shape[0]

    def to_series(self, scale: RatingScale | None = None) -> MatrixSeries:
        """Export as a matrix series (one sample per trajectory).

        Observation time zero, if present, is dropped.
        """
        if scale is None:
            scale = RatingScale(tuple(str(k + 1) for k in range(self.K)))
        keep = self.times > 0
        return MatrixSeries(scale, self.times[keep], self.matrices[:, keep])


def _map_chunks(fn: Callable[[slice, np.ndarray], None], grid: SimulationGrid, normals, n: int,
                threads: int) -> None:
    """Run ``fn(paths, noise)`` over contiguous runs of whole RNG blocks.

    Each worker simulates its blocks as one batch.  Every per-path
    operation is independent of the rest of its batch, so the result does
    not depend on how blocks are grouped, i.e. on the thread count.
    """
    M = grid.n_paths
    groups = [g for g in np.array_split(np.arange(streams.n_blocks(M)), max(threads, 1)) if len(g)]

    def run(group: np.ndarray) -> None:
        sl = slice(streams.block_slice(group[0], M).start, streams.block_slice(group[-1], M).stop)
        if normals is not None:
            z = normals[:, sl]
        else:
            z = np.empty((grid.n_steps, sl.stop - sl.start, grid.noise_dim(n)))
            for b in group:
                bs = streams.block_slice(b, M)
                z[:, bs.start - sl.start : bs.stop - sl.start] = streams.block_normals(
                    grid.seed, b, bs.stop - bs.start, grid.n_steps, grid.noise_dim(n)
                )
        fn(sl, z)

    if len(groups) == 1:
        run(groups[0])
        return
    with ThreadPoolExecutor(max_workers=len(groups)) as pool:
        list(pool.map(run, groups))


def _check_normals(normals, grid: SimulationGrid, n: int):
    """Accept ``(n_steps, M, d)`` with ``d`` the driver dimension (or ``n``)."""
    if normals is None:
        return None
    normals = np.asarray(normals)
    d = grid.noise_dim(n)
    ok = {(grid.n_steps, grid.n_paths, d), (grid.n_steps, grid.n_paths, n)}
    if normals.shape not in ok:
        want = (grid.n_steps, grid.n_paths, d)
        raise ValueError(f"normals have shape {normals.shape}, expected {want}")
    return normals


def simulate_cir_coords(
    params: ModelParams,
    grid: SimulationGrid,
    *,
    normals: np.ndarray | None = None,
    keep_paths: bool = False,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray | None]:
    """CIR coordinates at the observation times, shape ``(M, T, n)``.

    Full-truncation Euler: the drift and the square root see ``max(L, 0)``
    and the reported path is ``max(L, 0)``, so outputs are non-negative.
    Returns ``(obs, paths)`` with ``paths`` of shape ``(n_steps+1, M, n)``
    when ``keep_paths`` is set.
    """
    if params.family != "cir":
        raise ValueError(f"expected cir parameters, got {params.family!r}")
    n, M = params.n, grid.n_paths
    normals = _check_normals(normals, grid, n)
    dt, sq = grid.dt, np.sqrt(grid.dt)
    a, b, sig = params.a, params.b, params.sigma
    where = {int(k): t for t, k in enumerate(grid.obs_index)}
    obs = np.empty((M, len(where), n))
    paths = np.empty((grid.n_steps + 1, M, n)) if keep_paths else None

    def run(sl: slice, z: np.ndarray) -> None:
        x = np.zeros((sl.stop - sl.start, n))
        if 0 in where:
            obs[sl, where[0]] = 0.0
        if keep_paths:
            paths[0, sl] = 0.0
        for k in range(grid.n_steps):
            xp = np.maximum(x, 0.0)
            x = x + a * (b - xp) * dt + sig * np.sqrt(xp) * sq * z[k]
            t = where.get(k + 1)
            if t is not None:
                obs[sl, t] = np.maximum(x, 0.0)
            if keep_paths:
                paths[k + 1, sl] = np.maximum(x, 0.0)

    _map_chunks(run, grid, normals, n, threads)
    return obs, paths


def simulate_direct(
    params: ModelParams,
    grid: SimulationGrid,
    *,
    normals: np.ndarray | None = None,
    keep_paths: bool = False,
    threads: int = 1,
) -> PathEnsemble:
    """``R_t = exp(L_t)`` with CIR coordinates, evaluated at each observation time.

    Matrices at different times are not chained, so pathwise
    Chapman-Kolmogorov consistency is not implied.
    """
    coords, paths = simulate_cir_coords(
        params, grid, normals=normals, keep_paths=keep_paths, threads=threads
    )
    mats = lie.exp(coords)
    return PathEnsemble("cir", grid, params.K, mats, coords, paths)


def simulate_gem(
    params: ModelParams,
    grid: SimulationGrid,
    *,
    normals: np.ndarray | None = None,
    keep_paths: bool = False,
    threads: int = 1,
) -> PathEnsemble:
    """Geometric Euler-Maruyama: running products of per-step exponentials.

    ``|0|**0`` is taken as 1, i.e. a zero power gives a unit drift in ``L``.
    """
    if params.family != "gem":
        raise ValueError(f"expected gem parameters, got {params.family!r}")
    n, K, M = params.n, params.K, grid.n_paths
    normals = _check_normals(normals, grid, n)
    dt, sq = grid.dt, np.sqrt(grid.dt)
    a, b, sig = params.a, params.b, params.sigma
    where = {int(k): t for t, k in enumerate(grid.obs_index)}
    T = len(where)
    mats = np.empty((M, T, K, K))
    coords = np.empty((M, T, n))
    paths = np.empty((grid.n_steps + 1, M, n)) if keep_paths else None

    drift, vol = b * dt, sig * sq

    def run(sl: slice, z: np.ndarray) -> None:
        m = sl.stop - sl.start
        y = np.zeros((m, n))
        L = np.zeros((m, n))
        R = np.broadcast_to(np.eye(K), (m, K, K)).copy()
        if 0 in where:
            mats[sl, where[0]] = R
            coords[sl, where[0]] = L
        if keep_paths:
            paths[0, sl] = L
        for k in range(grid.n_steps):
            dL = np.abs(y) ** a
            dL *= dt
            R = R @ lie.exp_unchecked(dL)
            L += dL
            y += drift
            y += vol * z[k]
            t = where.get(k + 1)
            if t is not None:
                mats[sl, t] = R
                coords[sl, t] = L
            if keep_paths:
                paths[k + 1, sl] = L

    _map_chunks(run, grid, normals, n, threads)
    return PathEnsemble("gem", grid, K, mats, coords, paths)


def simulate(
    params: ModelParams,
    grid: SimulationGrid,
    *,
    normals: np.ndarray | None = None,
    keep_paths: bool = False,
    threads: int = 1,
) -> PathEnsemble:
    """Dispatch on ``params.family``."""
    fn = simulate_direct if params.family == "cir" else simulate_gem
    return fn(params, grid, normals=normals, keep_paths=keep_paths, threads=threads)


def cir_mean(a, b, t) -> np.ndarray:
    """Exact mean ``b (1 - exp(-a t))`` of a CIR process started at zero."""
    return np.asarray(b) * (1.0 - np.exp(-np.asarray(a) * t))
