"""
Entrywise moment estimators for matrix ensembles and the moment-matching
least-squares objective.

For ``M`` samples ``R(w)`` at a time ``t``:

* order 1: sample mean,
* order 2: unbiased variance (divisor ``M - 1``),
* order k >= 3: central moment with divisor ``M``.

Residuals use the first ``K - 1`` rows only; the default row is
deterministic.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import IO, Sequence, Union

import numpy as np

from .rating_data import MatrixSeries

TIME_TOL = 1e-9


class MomentError(ValueError):
    pass


@dataclass(frozen=True)
class MomentSet:
    """``moments[t, k-1]`` is the order-``k`` moment matrix at ``times[t]``."""

    times: np.ndarray
    moments: np.ndarray
    n_samples: int

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        mom = np.array(self.moments, dtype=float)
        if mom.ndim != 4 or mom.shape[0] != len(times) or mom.shape[2] != mom.shape[3]:
            raise MomentError(f"moments shape {mom.shape} does not match {len(times)} times")
        times.flags.writeable = False
        mom.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "moments", mom)

    @property
    def order(self) -> int:
        return self.moments.shape[1]

    @property
    def K(self) -> int:
        return self.moments.shape[-1]

    def at(self, times: Sequence[float]) -> "MomentSet":
        """Restrict to the given times (matched within ``1e-9``)."""
        idx = [_time_index(self.times, t) for t in times]
        return MomentSet(self.times[idx], self.moments[idx], self.n_samples)

    def truncate(self, order: int) -> "MomentSet":
        if order > self.order:
            raise MomentError(f"only {self.order} orders available, {order} requested")
        return MomentSet(self.times, self.moments[:, :order], self.n_samples)

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "order": self.order,
            "n_samples": self.n_samples,
            "moments": self.moments.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MomentSet":
        ms = cls(obj["times"], obj["moments"], int(obj["n_samples"]))
        if "order" in obj and int(obj["order"]) != ms.order:
            raise MomentError("declared order does not match the moments array")
        return ms


def _time_index(times: np.ndarray, t: float) -> int:
    hit = np.flatnonzero(np.abs(times - t) <= TIME_TOL)
    if len(hit) == 0:
        raise MomentError(f"time {t} not available (have {times.tolist()})")
    return int(hit[0])


def write_moments(ms: MomentSet, target: Union[str, os.PathLike, IO[str]]) -> None:
    text = json.dumps(ms.to_dict(), separators=(",", ":"))
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        target.write(text)


def read_moments(source: Union[str, os.PathLike, IO[str]]) -> MomentSet:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return MomentSet.from_dict(json.load(fh))
    return MomentSet.from_dict(json.load(source))


def _sample_array(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, MatrixSeries):
        return data.samples, data.times
    if hasattr(data, "matrices") and hasattr(data, "times"):
        return data.matrices, np.asarray(data.times)
    raise TypeError(f"cannot take moments of {type(data).__name__}")


def moments_of(samples: np.ndarray, order: int) -> np.ndarray:
    """Moments over axis 0 of ``samples``; output shape ``(order,) + samples.shape[1:]``."""
    samples = np.asarray(samples, dtype=float)
    M = samples.shape[0]
    if order < 1:
        raise MomentError("moment order must be at least 1")
    if order >= 2 and M < 2:
        raise MomentError("variance needs at least two samples (M >= 2)")
    mean = samples.mean(axis=0)
    out = [mean]
    if order >= 2:
        dev = samples - mean
        out.append((dev**2).sum(axis=0) / (M - 1))
        for k in range(3, order + 1):
            out.append((dev**k).sum(axis=0) / M)
    return np.stack(out)


def estimate_moments(data, order: int, times: Sequence[float] | None = None) -> MomentSet:
    """Moments of a :class:`MatrixSeries` or simulated ensemble.

    ``data`` may also be a raw ``(M, T, K, K)`` array, in which case
    ``times`` is required.
    """
    if isinstance(data, np.ndarray):
        if times is None:
            raise MomentError("times are required for a raw sample array")
        samples, have = data, np.asarray(times, dtype=float)
    else:
        samples, have = _sample_array(data)
        if times is not None:
            idx = [_time_index(np.asarray(have), t) for t in times]
            samples, have = samples[:, idx], np.asarray(have)[idx]
    mom = moments_of(samples, order)  # (order, T, K, K)
    return MomentSet(have, np.swapaxes(mom, 0, 1), samples.shape[0])


@dataclass(frozen=True)
class ObjectiveConfig:
    """Moment orders, weights, observation times and penalty settings.

    ``reference`` (shape ``(T, K, K)``) is the matrix series the
    penalty term compares every trajectory with.
    """

    order: int = 4
    weights: tuple[float, ...] = (1.0, 10.0, 1.0, 1.0)
    times: tuple[float, ...] = (1.0,)
    lambda1: float = 1.0
    lambda2: float = 0.0
    reference: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        if self.order < 1:
            raise MomentError("order must be at least 1")
        if len(w) != self.order:
            raise MomentError(f"{self.order} weights required, got {len(w)}")
        if any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise MomentError("weights must be non-negative with at least one positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise MomentError("penalty weights must be non-negative")
        if not self.times:
            raise MomentError("at least one observation time required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if self.reference is not None:
            ref = np.asarray(self.reference, dtype=float)
            if ref.ndim != 3 or ref.shape[0] != len(self.times):
                raise MomentError("reference needs one matrix per observation time")
            object.__setattr__(self, "reference", ref)


def residuals(model: MomentSet, target: MomentSet, config: ObjectiveConfig) -> np.ndarray:
    """Stacked ``w_k * vec(mu_k^model - mu_k^target)`` per time, then per order.

    Each block is the column-major vectorisation of the first ``K - 1``
    rows, so the result has ``len(times) * order * (K-1) * K`` entries.
    """
    n = config.order
    if model.K != target.K:
        raise MomentError(f"dimension mismatch: model K={model.K}, target K={target.K}")
    if model.order < n or target.order < n:
        raise MomentError(f"need {n} moment orders, model has {model.order}, target {target.order}")
    mod = model.at(config.times).moments[:, :n, :-1, :]
    tgt = target.at(config.times).moments[:, :n, :-1, :]
    diff = (mod - tgt) * np.asarray(config.weights)[None, :, None, None]
    # column-major vec of each (K-1) x K block
    return np.swapaxes(diff, -1, -2).reshape(-1)


def objective(model: MomentSet, target: MomentSet, config: ObjectiveConfig) -> tuple[np.ndarray, float]:
    """Residual vector and its squared Euclidean norm."""
    r = residuals(model, target, config)
    return r, float(r @ r)


def trajectory_penalty(samples: np.ndarray, reference: np.ndarray) -> float:
    """``(1/M) sum_w sum_t ||R_t(w) - R^H_t||_F^2`` for samples ``(M, T, K, K)``."""
    samples = np.asarray(samples, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if samples.shape[1:] != reference.shape:
        raise MomentError(f"samples {samples.shape[1:]} and reference {reference.shape} differ")
    d = samples - reference[None]
    return float((d * d).sum() / samples.shape[0])


def penalized_objective(
    model_samples: np.ndarray,
    model: MomentSet,
    target: MomentSet,
    config: ObjectiveConfig,
) -> float:
    """``lambda1 * ||f||^2 + lambda2 * trajectory_penalty``.

    ``model_samples`` are the simulated matrices at ``config.times``,
    shape ``(M, T, K, K)``.
    """
    value = config.lambda1 * objective(model, target, config)[1] if config.lambda1 else 0.0
    if config.lambda2:
        if config.reference is None:
            raise MomentError("lambda2 > 0 needs a reference series")
        value += config.lambda2 * trajectory_penalty(model_samples, config.reference)
    return value
