"""
Synthetic rating-history fixture.

Agency histories cannot be redistributed, so the package ships a history
simulated from a known four-state chain (A, B, C, D) over 2011-2019.  A
yearly credit-cycle factor scales downgrade intensities (and damps
upgrades) with extra monthly jitter, which gives the per-window matrices
realistic dispersion.  Entities get annual rating confirmations, a
fraction withdraws early and new entities enter over time.

``generate_demo_history`` reproduces the bundled CSV exactly.
"""

from __future__ import annotations

import io
from datetime import date, timedelta
from functools import lru_cache
from importlib import resources

import numpy as np

from .aalen_johansen import estimate_grid
from .rating_data import MatrixSeries, RatingEvent, RatingHistory, RatingScale, parse_history, write_history
from .synth import bootstrap_series

START = date(2011, 1, 1)
END = date(2019, 12, 31)
DEMO_SEED = 20110101
DEMO_FILE = "demo_history.csv"

# yearly intensities; rows A, B, C (default absorbing)
BASE_GENERATOR = np.array(
    [
        [0.0, 0.055, 0.004, 0.0004],
        [0.012, 0.0, 0.030, 0.0020],
        [0.001, 0.060, 0.0, 0.1500],
        [0.0, 0.0, 0.0, 0.0],
    ]
)
_UPPER = np.triu(np.ones((4, 4), dtype=bool), 1)


def _month_generator(factor: float) -> np.ndarray:
    Q = np.where(_UPPER, BASE_GENERATOR * factor, BASE_GENERATOR / np.sqrt(factor))
    Q[-1] = 0.0
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def generate_demo_history(
    seed: int = DEMO_SEED,
    n_initial: int = 3000,
    entrants_per_year: float = 160.0,
    withdrawal_rate: float = 0.04,
) -> RatingHistory:
    rng = np.random.default_rng(seed)
    scale = RatingScale()
    horizon = (END - START).days + 1
    months = [(START.replace(year=START.year + m // 12, month=m % 12 + 1) - START).days for m in range(108)]
    months.append(horizon)
    years = END.year - START.year + 1
    cycle = np.exp(rng.normal(0.0, 0.35, size=years))
    jitter = np.exp(rng.normal(0.0, 0.15, size=108))
    gens = [_month_generator(cycle[m // 12] * jitter[m]) for m in range(108)]

    # entity origin (day offset, may be negative) and initial rating
    init_ratings = rng.choice(3, size=n_initial, p=[0.35, 0.40, 0.25])
    init_days = -rng.integers(1, 366, size=n_initial)
    n_new = rng.poisson(entrants_per_year * years)
    new_days = np.sort(rng.integers(0, horizon, size=n_new))
    new_ratings = rng.choice(3, size=n_new, p=[0.30, 0.45, 0.25])
    origin = np.concatenate([init_days, new_days])
    state0 = np.concatenate([init_ratings, new_ratings])
    N = len(origin)
    exit_day = np.maximum(origin, 0) + rng.exponential(1.0 / withdrawal_rate, size=N) * 365.0

    jumps: list[list[tuple[float, int]]] = [[] for _ in range(N)]
    state = state0.copy()
    for m in range(108):
        lo, hi = months[m], months[m + 1]
        Q = gens[m]
        clock = np.maximum(origin.astype(float), lo)
        active = (origin < hi) & (exit_day > lo) & (state < 3)
        while active.any():
            idx = np.flatnonzero(active)
            rate = -Q[state[idx], state[idx]]
            wait = rng.exponential(1.0, size=len(idx)) / np.maximum(rate, 1e-300) * 365.0
            when = clock[idx] + wait
            hit = (when < hi) & (when < exit_day[idx])
            for e, t in zip(idx[hit], when[hit]):
                i = state[e]
                p = Q[i].clip(min=0.0)
                j = int(rng.choice(4, p=p / p.sum()))
                state[e] = j
                jumps[e].append((t, j))
                clock[e] = t
            active[idx[~hit]] = False
            active &= state < 3

    events = []
    for e in range(N):
        eid = f"E{e:05d}"
        stop = min(exit_day[e], horizon - 1)
        first = int(origin[e])
        rows = {first: int(state0[e])}
        path = jumps[e]
        for t, j in path:
            rows[int(t)] = j
        # annual confirmations and a closing observation while not defaulted
        cur, ptr = int(state0[e]), 0
        checkpoints = [first + 365 * k for k in range(1, 12)] + [int(stop)]
        for day in sorted(set(d for d in checkpoints if first < d <= stop)):
            while ptr < len(path) and path[ptr][0] < day + 1:
                cur = path[ptr][1]
                ptr += 1
            if cur == 3:
                break
            rows.setdefault(day, cur)
        for day in sorted(rows):
            events.append(RatingEvent(eid, START + timedelta(days=day), rows[day] + 1))
    return RatingHistory.from_events(scale, events)


def demo_csv_text(seed: int = DEMO_SEED) -> str:
    buf = io.StringIO()
    write_history(generate_demo_history(seed), buf)
    return buf.getvalue()


@lru_cache(maxsize=1)
def load_demo_history() -> RatingHistory:
    """The bundled synthetic history (2011-2019)."""
    with resources.files("ratingsde").joinpath("data").joinpath(DEMO_FILE).open("rb") as fh:
        return parse_history(fh)


def demo_history_path():
    return resources.files("ratingsde").joinpath("data").joinpath(DEMO_FILE)


@lru_cache(maxsize=1)
def demo_pools() -> dict[int, MatrixSeries]:
    """Per-span Aalen-Johansen pools (1, 3, 6, 12 months) of the demo history."""
    return estimate_grid(load_demo_history(), START)


def demo_targets(n_samples: int = 10000, seed: int = 0) -> MatrixSeries:
    """Bootstrap target series from the demo pools."""
    return bootstrap_series(demo_pools(), n_samples, seed)
