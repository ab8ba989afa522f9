"""
Aalen-Johansen product-limit estimation of rating transition matrices.

For the jump times ``T_k`` in a window ``(s, t]``

    P(s, t) = prod_k (I + dA(T_k)),   dA_ij = dN_ij / Y_i,  dA_ii = -dN_i / Y_i

where ``dN_ij`` counts ``i -> j`` moves on ``T_k`` and ``Y_i`` counts the
entities rated ``i`` just before ``T_k``.  Ratings are right-continuous
step functions; an entity is at risk on ``(first event, last event]``
and drops out of the risk set afterwards (withdrawal or end of data).
"""

from __future__ import annotations

import calendar
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .lie import InvariantError
from .rating_data import MatrixSeries, RatingHistory

DEFAULT_SPANS = (1, 3, 6, 12)


class EstimationError(ValueError):
    """The requested estimation window does not fit the data."""


@dataclass(frozen=True)
class JumpIncrement:
    """Estimated generator increment at one jump date."""

    time: date
    delta_A: np.ndarray
    dN: np.ndarray  # (K, K) transition counts, zero diagonal
    Y: np.ndarray  # (K,) entities at risk per rating just before ``time``


def _increment(when: date, dN: np.ndarray, Y: np.ndarray) -> JumpIncrement:
    K = len(Y)
    out = np.sum(dN, axis=1)
    if np.any(out > Y):
        raise InvariantError(f"{when}: more transitions out of a rating than entities at risk")
    dA = np.zeros((K, K))
    live = Y > 0
    dA[live] = dN[live] / Y[live, None]
    dA[np.arange(K), np.arange(K)] = -dA.sum(axis=1)
    dA[-1] = 0.0
    return JumpIncrement(when, dA, dN, Y)


def jump_increments(history: RatingHistory) -> list[JumpIncrement]:
    """All jump increments of the history in chronological order."""
    K = history.scale.K
    arrivals: dict[date, list[int]] = {}
    moves: dict[date, list[tuple[int, int]]] = {}
    exits: dict[date, list[int]] = {}
    for evs in history.events.values():
        arrivals.setdefault(evs[0].date, []).append(evs[0].rating - 1)
        state = evs[0].rating - 1
        for ev in evs[1:]:
            new = ev.rating - 1
            if new != state:
                moves.setdefault(ev.date, []).append((state, new))
            state = new
        exits.setdefault(evs[-1].date, []).append(state)

    counts = np.zeros(K, dtype=np.int64)
    out: list[JumpIncrement] = []
    for when in sorted(set(arrivals) | set(moves) | set(exits)):
        todays = moves.get(when, ())
        if todays:
            dN = np.zeros((K, K), dtype=np.int64)
            for i, j in todays:
                dN[i, j] += 1
            out.append(_increment(when, dN, counts.copy()))
            for i, j in todays:
                counts[i] -= 1
                counts[j] += 1
        for r in arrivals.get(when, ()):
            counts[r] += 1
        for r in exits.get(when, ()):
            counts[r] -= 1
    return out


def _in_window(incs: Sequence[JumpIncrement], start: date, end: date) -> list[JumpIncrement]:
    if not start < end:
        raise EstimationError(f"window start {start} must precede end {end}")
    return [inc for inc in incs if start < inc.time <= end]


def count_transitions(history: RatingHistory, start: date, end: date) -> list[JumpIncrement]:
    """Jump increments with jump date in ``(start, end]``."""
    return _in_window(jump_increments(history), start, end)


def product_of_increments(incs: Sequence[JumpIncrement], K: int) -> np.ndarray:
    P = np.eye(K)
    for inc in incs:
        P = P @ (np.eye(K) + inc.delta_A)
    return P


def estimate(history: RatingHistory, start: date, end: date) -> np.ndarray:
    """Aalen-Johansen estimate of ``P(start, end)``; identity without jumps."""
    return product_of_increments(count_transitions(history, start, end), history.scale.K)


def add_months(d: date, months: int) -> date:
    m = d.month - 1 + months
    y = d.year + m // 12
    m = m % 12 + 1
    return date(y, m, min(d.day, calendar.monthrange(y, m)[1]))


def months_between(start: date, end: date) -> int:
    """Whole months from ``start`` up to ``end``."""
    n = (end.year - start.year) * 12 + end.month - start.month
    if add_months(start, n) > end:
        n -= 1
    return n


def default_end(history: RatingHistory) -> date:
    """First day of the month after the last event."""
    rng = history.date_range()
    if rng is None:
        raise EstimationError("history has no events")
    last = rng[1]
    return add_months(date(last.year, last.month, 1), 1)


def estimate_grid(
    history: RatingHistory,
    start: date,
    spans: Sequence[int] = DEFAULT_SPANS,
    disjoint: bool = True,
    end: date | None = None,
) -> dict[int, MatrixSeries]:
    """Estimate one pool of matrices per time span (in months).

    With ``disjoint`` the period ``[start, end)`` is tiled by consecutive
    non-overlapping windows of each span; otherwise windows of the span
    start every month.  Each pool is a :class:`MatrixSeries` with a single
    time ``span / 12`` and one sample per window, in window order.
    """
    if not spans:
        raise EstimationError("no spans given")
    if end is None:
        end = default_end(history)
    total = months_between(start, end)
    incs = jump_increments(history)
    K = history.scale.K
    pools: dict[int, MatrixSeries] = {}
    for span in spans:
        span = int(span)
        if span < 1:
            raise EstimationError(f"span must be a positive number of months, got {span}")
        if total < span:
            raise EstimationError(
                f"data period {start}..{end} ({total} months) is shorter than a {span}-month window"
            )
        stride = span if disjoint else 1
        offsets = range(0, total - span + 1, stride)
        mats = [
            product_of_increments(
                _in_window(incs, add_months(start, o), add_months(start, o + span)), K
            )
            for o in offsets
        ]
        pools[span] = MatrixSeries(history.scale, [span / 12], np.stack(mats)[:, None])
    return pools
