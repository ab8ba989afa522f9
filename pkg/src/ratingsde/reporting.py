"""
Plot data for simulated or bootstrapped matrix ensembles.

Nothing is rendered; every figure is written as CSV: trajectory clouds
per matrix entry, histograms at each observation time with a
method-of-moments beta fit, and the fitted beta densities on a 200-point
grid.  Only the first ``K - 1`` rows are reported, the default row being
deterministic.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .rating_data import MatrixSeries

CURVE_POINTS = 200
DEFAULT_BINS = 30


def beta_moments_fit(mean: float, var: float) -> tuple[float, float]:
    """Method-of-moments beta parameters from a sample mean and variance.

    Returns ``(nan, nan)`` when no beta distribution has these moments,
    i.e. unless ``0 < mean < 1`` and ``0 < var < mean (1 - mean)``.
    """
    mean, var = float(mean), float(var)
    if not (0.0 < mean < 1.0) or not (0.0 < var < mean * (1.0 - mean)):
        return float("nan"), float("nan")
    c = mean * (1.0 - mean) / var - 1.0
    return mean * c, (1.0 - mean) * c


def fit_beta(sample) -> tuple[float, float]:
    """Beta fit of a 1-d sample (unbiased variance)."""
    x = np.asarray(sample, dtype=float).reshape(-1)
    if x.size < 2:
        return float("nan"), float("nan")
    return beta_moments_fit(x.mean(), x.var(ddof=1))


@dataclass(frozen=True)
class EntryHistogram:
    months: float
    entry: str
    edges: np.ndarray
    counts: np.ndarray
    alpha: float
    beta: float


def _entries(K: int, labels) -> list[tuple[int, int, str]]:
    return [(i, j, f"{labels[i]}-{labels[j]}") for i in range(K - 1) for j in range(K)]


def _unpack(data) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    if isinstance(data, MatrixSeries):
        return data.samples, np.asarray(data.times), data.scale.labels
    samples = np.asarray(data.matrices)
    K = samples.shape[-1]
    return samples, np.asarray(data.times), tuple(str(k + 1) for k in range(K))


def _months(t: float) -> float:
    m = 12.0 * t
    return float(round(m)) if abs(m - round(m)) < 1e-9 else m


def histograms(data, bins: int = DEFAULT_BINS) -> list[EntryHistogram]:
    """One histogram per observation time and entry of the first ``K - 1`` rows."""
    samples, times, labels = _unpack(data)
    K = samples.shape[-1]
    out = []
    for t, when in enumerate(times):
        for i, j, name in _entries(K, labels):
            x = samples[:, t, i, j]
            lo, hi = float(x.min()), float(x.max())
            if hi <= lo:
                hi = lo + 1e-12
            counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
            a, b = fit_beta(x)
            out.append(EntryHistogram(_months(when), name, edges, counts, a, b))
    return out


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else repr(float(x))


def histogram_csv(hists: list[EntryHistogram]) -> str:
    """Long format, one row per bin."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["months", "entry", "bin_lo", "bin_hi", "count", "beta_alpha", "beta_beta"])
    for h in hists:
        for lo, hi, c in zip(h.edges[:-1], h.edges[1:], h.counts):
            w.writerow([f"{h.months:g}", h.entry, _fmt(lo), _fmt(hi), int(c), _fmt(h.alpha), _fmt(h.beta)])
    return buf.getvalue()


def beta_curve_csv(hists: list[EntryHistogram], points: int = CURVE_POINTS) -> str:
    """Fitted beta densities sampled at ``points`` points across each histogram range."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["months", "entry", "x", "density"])
    for h in hists:
        if np.isnan(h.alpha):
            continue
        x = np.linspace(h.edges[0], h.edges[-1], points)
        pdf = stats.beta.pdf(x, h.alpha, h.beta)
        for xi, pi in zip(x, pdf):
            w.writerow([f"{h.months:g}", h.entry, _fmt(xi), _fmt(pi)])
    return buf.getvalue()


def trajectory_csvs(data, max_paths: int | None = None) -> dict[str, str]:
    """Per-entry CSV text with columns ``time, mean, w0, w1, ...``.

    Rows are the observation times with a leading ``t = 0`` row at the
    identity.  The mean is over all samples even when only ``max_paths``
    trajectories are written out.
    """
    samples, times, labels = _unpack(data)
    M, _, K, _ = samples.shape
    keep = M if max_paths is None else min(M, max_paths)
    eye = np.eye(K)
    out = {}
    for i, j, name in _entries(K, labels):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "mean"] + [f"w{m}" for m in range(keep)])
        w.writerow(["0", _fmt(eye[i, j])] + [_fmt(eye[i, j])] * keep)
        for t, when in enumerate(times):
            col = samples[:, t, i, j]
            w.writerow([_fmt(when), _fmt(col.mean())] + [_fmt(v) for v in col[:keep]])
        out[name] = buf.getvalue()
    return out
