"""
Rating scales, rating-history event data and matrix-series files.

Two file formats are handled here:

* history CSV with header ``entity_id,date,rating`` (ISO dates, one
  event per row, labels from the rating scale);
* matrix-series JSON ``{"labels": [...], "times": [...],
  "samples": [[K x K matrix per time] per sample]}`` with times in years.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from datetime import date
from typing import IO, Iterable, Sequence, Union

import numpy as np

Source = Union[str, os.PathLike, IO[bytes], IO[str]]

ROW_SUM_REJECT = 0.01
NEGATIVE_REJECT = -1e-9
# rows already this close to one are left untouched so re-parsing is idempotent
_ROW_EXACT = 1e-12

DEFAULT_LABELS = ("A", "B", "C", "D")


class RatingDataError(ValueError):
    """Malformed or inconsistent rating data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class RatingScale:
    """Ordered rating labels, best first; the last label is default."""

    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if len(labels) < 2:
            raise ValueError("a rating scale needs at least two labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate rating labels in {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def default(self) -> int:
        """1-based index of the default state."""
        return self.K

    def index(self, label: str) -> int:
        """1-based index of ``label``."""
        try:
            return self.labels.index(label) + 1
        except ValueError:
            raise KeyError(label) from None


@dataclass(frozen=True)
class RatingEvent:
    entity_id: str
    date: date
    rating: int  # 1..K


@dataclass(frozen=True)
class RatingHistory:
    """Per-entity, date-sorted rating events on a common scale."""

    scale: RatingScale
    events: dict[str, tuple[RatingEvent, ...]] = field(default_factory=dict)

    def __post_init__(self):
        K = self.scale.K
        for eid, evs in self.events.items():
            for prev, cur in zip(evs, evs[1:]):
                if cur.date <= prev.date:
                    raise RatingDataError(f"entity {eid!r}: dates not strictly increasing")
                if prev.rating == K and cur.rating != K:
                    raise RatingDataError(f"entity {eid!r}: rating after default")
            for ev in evs:
                if not 1 <= ev.rating <= K:
                    raise RatingDataError(f"entity {eid!r}: rating {ev.rating} outside 1..{K}")

    @property
    def n_entities(self) -> int:
        return len(self.events)

    def date_range(self) -> tuple[date, date] | None:
        dates = [ev.date for evs in self.events.values() for ev in evs]
        if not dates:
            return None
        return min(dates), max(dates)

    @classmethod
    def from_events(cls, scale: RatingScale, events: Iterable[RatingEvent]) -> "RatingHistory":
        """Group already-valid events by entity (input order is kept per entity)."""
        grouped: dict[str, list[RatingEvent]] = {}
        for ev in events:
            grouped.setdefault(ev.entity_id, []).append(ev)
        return cls(scale, {k: tuple(v) for k, v in grouped.items()})


def _open_text(source: Source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def parse_history(source: Source, scale: RatingScale = RatingScale()) -> RatingHistory:
    """Read a rating-history CSV.

    Events of one entity must appear in chronological order.  Two rows of
    the same entity on the same date are resolved by file order: the
    later row replaces the earlier one.

    Raises
    ------
    RatingDataError
        On a malformed row, unknown label, decreasing dates, or a
        non-default rating after default.  The message carries the line
        number.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise RatingDataError("empty file, expected header entity_id,date,rating", 1)
        if [h.strip() for h in header] != ["entity_id", "date", "rating"]:
            raise RatingDataError(f"bad header {header!r}", 1)

        grouped: dict[str, list[RatingEvent]] = {}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise RatingDataError(f"expected 3 fields, got {len(row)}", line)
            eid, d, label = (c.strip() for c in row)
            if not eid:
                raise RatingDataError("empty entity_id", line)
            try:
                when = date.fromisoformat(d)
            except ValueError:
                raise RatingDataError(f"bad date {d!r}", line) from None
            try:
                rating = scale.index(label)
            except KeyError:
                raise RatingDataError(f"unknown rating label {label!r}", line) from None

            evs = grouped.setdefault(eid, [])
            if evs and when < evs[-1].date:
                raise RatingDataError(f"entity {eid!r}: date {when} before {evs[-1].date}", line)
            if evs and when == evs[-1].date:
                evs.pop()
            if evs and evs[-1].rating == scale.default and rating != scale.default:
                raise RatingDataError(f"entity {eid!r}: rating after default", line)
            evs.append(RatingEvent(eid, when, rating))
    finally:
        if owned:
            fh.close()
    return RatingHistory(scale, {k: tuple(v) for k, v in grouped.items()})


def write_history(history: RatingHistory, target: Union[str, os.PathLike, IO[str]]) -> None:
    rows = sorted(
        (ev for evs in history.events.values() for ev in evs),
        key=lambda ev: (ev.date, ev.entity_id),
    )
    fh = open(target, "w", encoding="utf-8", newline="") if isinstance(target, (str, os.PathLike)) else target
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["entity_id", "date", "rating"])
        for ev in rows:
            w.writerow([ev.entity_id, ev.date.isoformat(), history.scale.labels[ev.rating - 1]])
    finally:
        if fh is not target:
            fh.close()


@dataclass(frozen=True)
class MatrixSeries:
    """Samples of time-indexed transition matrices.

    ``samples`` has shape ``(M, T, K, K)``; ``times`` are year fractions.
    """

    scale: RatingScale
    times: np.ndarray
    samples: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        samples = np.array(self.samples, dtype=float)
        K = self.scale.K
        if samples.ndim != 4 or samples.shape[1:] != (len(times), K, K):
            raise RatingDataError(
                f"samples shape {samples.shape} does not match (M, {len(times)}, {K}, {K})"
            )
        if len(times) == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
            raise RatingDataError("times must be positive and strictly increasing")
        times.flags.writeable = False
        samples.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def K(self) -> int:
        return self.scale.K

    def to_dict(self) -> dict:
        return {
            "labels": list(self.scale.labels),
            "times": self.times.tolist(),
            "samples": self.samples.tolist(),
        }

    def __eq__(self, other):
        if not isinstance(other, MatrixSeries):
            return NotImplemented
        return (
            self.scale == other.scale
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


def months_to_years(months: int | float) -> float:
    return months / 12


def normalize_matrices(mats: np.ndarray) -> np.ndarray:
    """Validate near-stochastic matrices and renormalise their rows.

    Raises :class:`RatingDataError` when an entry is below ``-1e-9``, a row
    sum misses one by more than 0.01, or the last row is not within 0.01
    of the absorbing unit vector.  Small negatives are clipped to zero;
    rows off by more than ``1e-12`` are divided by their sum; the last row
    is set to the unit vector.
    """
    mats = np.array(mats, dtype=float)
    if mats.ndim < 2 or mats.shape[-1] != mats.shape[-2]:
        raise RatingDataError(f"matrices must be square, got shape {mats.shape}")
    if not np.all(np.isfinite(mats)):
        raise RatingDataError("non-finite matrix entry")
    if mats.min(initial=0.0) < NEGATIVE_REJECT:
        raise RatingDataError(f"negative entry {mats.min():.3e}")
    sums = mats.sum(axis=-1)
    worst = np.abs(sums - 1.0).max(initial=0.0)
    if worst > ROW_SUM_REJECT:
        raise RatingDataError(f"row sum deviates from 1 by {worst:.4f}")
    K = mats.shape[-1]
    unit = np.zeros(K)
    unit[-1] = 1.0
    if np.abs(mats[..., -1, :] - unit).max(initial=0.0) > ROW_SUM_REJECT:
        raise RatingDataError("last row is not the absorbing default row")
    np.maximum(mats, 0.0, out=mats)
    sums = mats.sum(axis=-1, keepdims=True)
    fix = np.abs(sums - 1.0) > _ROW_EXACT
    mats = np.where(fix, mats / sums, mats)
    mats[..., -1, :] = unit
    return mats


def series_from_dict(obj: dict) -> MatrixSeries:
    for key in ("labels", "times", "samples"):
        if key not in obj:
            raise RatingDataError(f"missing key {key!r}")
    scale = RatingScale(tuple(obj["labels"]))
    times = np.asarray(obj["times"], dtype=float)
    try:
        samples = np.asarray(obj["samples"], dtype=float)
    except ValueError:
        raise RatingDataError("ragged samples array") from None
    if samples.ndim != 4 or samples.shape[1:] != (len(times), scale.K, scale.K):
        raise RatingDataError(
            f"samples shape {samples.shape} does not match (M, {len(times)}, {scale.K}, {scale.K})"
        )
    return MatrixSeries(scale, times, normalize_matrices(samples))


def parse_matrix_series(source: Source) -> MatrixSeries:
    """Read and validate a matrix-series JSON document."""
    fh, owned = _open_text(source)
    try:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RatingDataError(f"invalid JSON: {exc}") from None
    finally:
        if owned:
            fh.close()
    if not isinstance(obj, dict):
        raise RatingDataError("top-level JSON value must be an object")
    return series_from_dict(obj)


def dumps_matrix_series(series: MatrixSeries) -> str:
    # float repr round-trips exactly through json
    return json.dumps(series.to_dict(), separators=(",", ":"))


def write_matrix_series(series: MatrixSeries, target: Union[str, os.PathLike, IO[str]]) -> None:
    text = dumps_matrix_series(series)
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        target.write(text)


def stack_series(scale: RatingScale, times: Sequence[float], per_time: Sequence[np.ndarray]) -> MatrixSeries:
    """Build a series from per-time arrays of shape ``(M, K, K)``."""
    return MatrixSeries(scale, np.asarray(times, float), np.stack(per_time, axis=1))
