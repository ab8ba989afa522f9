"""
Synthetic target series built by recombining historical per-span matrices.

Each sample draws one matrix per span independently and uniformly (with
replacement) from that span's pool, so pools of sizes ``n_1..n_T`` give
``prod(n_t)`` distinct ordered series.  Series written in the
matrix-series JSON format can be swapped in from any external generator.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .moments import MomentSet, estimate_moments
from .rating_data import MatrixSeries, RatingScale
from .sde import OBS_TIMES
from .validator import irs_flags


class BootstrapError(RuntimeError):
    pass


def n_combinations(pool_sizes: Sequence[int]) -> int:
    """Number of distinct ordered series, ``prod(pool_sizes)``."""
    return math.prod(int(n) for n in pool_sizes)


def _pool_arrays(pools) -> tuple[RatingScale | None, list[float], list[np.ndarray]]:
    if isinstance(pools, Mapping):
        items = sorted(pools.items())
        times, arrays, scale = [], [], None
        for span, pool in items:
            if isinstance(pool, MatrixSeries):
                scale = pool.scale
                arrays.append(pool.samples[:, 0])
            else:
                arrays.append(np.asarray(pool, dtype=float))
            times.append(span / 12)
        return scale, times, arrays
    pools = list(pools)
    if not all(isinstance(p, MatrixSeries) and len(p.times) == 1 for p in pools):
        raise TypeError("pools must be a span->matrices mapping or single-time MatrixSeries")
    pools.sort(key=lambda p: p.times[0])
    return pools[0].scale, [float(p.times[0]) for p in pools], [p.samples[:, 0] for p in pools]


def bootstrap_series(
    pools,
    n_samples: int,
    seed: int = 0,
    filter_irs: bool = False,
    max_rounds: int = 1000,
    scale: RatingScale | None = None,
) -> MatrixSeries:
    """Draw ``n_samples`` series, one matrix per span from each pool.

    ``pools`` maps a span in months to an array ``(P, K, K)`` or a
    single-time :class:`MatrixSeries`, or is a list of such series.  With
    ``filter_irs`` any series whose diagonals increase between consecutive
    times is redrawn; after ``max_rounds`` rounds with rejects left a
    :class:`BootstrapError` is raised.
    """
    pool_scale, times, arrays = _pool_arrays(pools)
    scale = scale or pool_scale
    if any(len(a) == 0 for a in arrays):
        raise BootstrapError("every pool must hold at least one matrix")
    K = arrays[0].shape[-1]
    if scale is None:
        scale = RatingScale(tuple(str(k + 1) for k in range(K)))
    rng = np.random.default_rng(seed)
    sizes = [len(a) for a in arrays]
    idx = np.column_stack([rng.integers(0, n, size=n_samples) for n in sizes])

    def assemble(ix: np.ndarray) -> np.ndarray:
        return np.stack([arrays[t][ix[:, t]] for t in range(len(arrays))], axis=1)

    if filter_irs:
        for _ in range(max_rounds):
            bad = ~irs_flags(assemble(idx)).all(axis=1)
            if not bad.any():
                break
            idx[bad] = np.column_stack([rng.integers(0, n, size=int(bad.sum())) for n in sizes])
        else:
            raise BootstrapError(
                f"{int(bad.sum())} series still violate the rating-spread property after "
                f"{max_rounds} rounds"
            )
    return MatrixSeries(scale, times, assemble(idx))


def summarize_targets(series: MatrixSeries, order: int = 4, times: Sequence[float] = OBS_TIMES) -> MomentSet:
    """Moment targets of a series at the standard 1/3/6/12-month times."""
    return estimate_moments(series, order, times)
