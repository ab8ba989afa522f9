"""
Qualitative properties of short-term rating matrices.

sDD  strongly diagonal dominant: ``R_ii >= sum_{j != i} R_ij`` for all rows
dML  downgrades more likely: upper-triangle sum >= lower-triangle sum
mDC  monotone default column: ``R_1K <= R_2K <= ... <= R_KK``
iRS  increasing rating spread: diagonals do not increase from one
     observation time to the next; the first time is compared with the
     identity and therefore always passes

All inequalities are non-strict.  A matrix passes a row-wise property
only if every row passes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

PROPERTIES = ("sDD", "dML", "mDC", "iRS")


def matrix_flags(R: np.ndarray) -> np.ndarray:
    """``(..., 3)`` booleans for sDD, dML, mDC of matrices ``(..., K, K)``."""
    R = np.asarray(R, dtype=float)
    K = R.shape[-1]
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    off = R.sum(axis=-1) - diag
    sdd = np.all(diag >= off, axis=-1)
    upper = np.triu(np.ones((K, K), dtype=bool), 1)
    dml = (R * upper).sum(axis=(-2, -1)) >= (R * upper.T).sum(axis=(-2, -1))
    mdc = np.all(np.diff(R[..., :, -1], axis=-1) >= 0, axis=-1)
    return np.stack([sdd, dml, mdc], axis=-1)


def check_matrix(R: np.ndarray) -> dict[str, bool]:
    f = matrix_flags(R)
    return {"sDD": bool(f[0]), "dML": bool(f[1]), "mDC": bool(f[2])}


def irs_flags(series: np.ndarray) -> np.ndarray:
    """iRS per time for series ``(..., T, K, K)``; result ``(..., T)``."""
    series = np.asarray(series, dtype=float)
    diag = np.diagonal(series, axis1=-2, axis2=-1)  # (..., T, K)
    prev = np.concatenate([np.ones_like(diag[..., :1, :]), diag[..., :-1, :]], axis=-2)
    return np.all(prev >= diag, axis=-1)


def series_flags(series: np.ndarray) -> np.ndarray:
    """``(..., T, 4)`` booleans for sDD, dML, mDC, iRS."""
    series = np.asarray(series, dtype=float)
    return np.concatenate([matrix_flags(series), irs_flags(series)[..., None]], axis=-1)


def check_series(series: np.ndarray) -> list[dict[str, bool]]:
    """Per-time property flags of one time series ``(T, K, K)``."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 3 or series.shape[0] < 2:
        raise ValueError("a series needs at least two times")
    return [dict(zip(PROPERTIES, map(bool, row))) for row in series_flags(series)]


@dataclass(frozen=True)
class PropertyReport:
    """Percentage of samples satisfying each property at each time."""

    times: np.ndarray  # years
    percentages: np.ndarray  # (T, 4), columns as PROPERTIES
    row_sums: np.ndarray  # (T,) average row sum
    n_samples: int

    def as_rows(self) -> list[dict]:
        rows = []
        for t, pct, rs in zip(self.times, self.percentages, self.row_sums):
            row = {"months": _months(t)}
            row.update({p: float(v) for p, v in zip(PROPERTIES, pct)})
            row["avg_row_sum"] = float(rs)
            rows.append(row)
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["months", *PROPERTIES, "avg_row_sum"])
        for row in self.as_rows():
            w.writerow(
                [f"{row['months']:g}"]
                + [f"{row[p]:.2f}" for p in PROPERTIES]
                + [f"{row['avg_row_sum']:.4f}"]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'months':>6} " + " ".join(f"{p:>8}" for p in PROPERTIES) + f" {'row sum':>8}"
        lines = [head, "-" * len(head)]
        for row in self.as_rows():
            cells = " ".join(f"{row[p]:7.2f}%" for p in PROPERTIES)
            lines.append(f"{row['months']:>6g} {cells} {row['avg_row_sum']:8.4f}")
        return "\n".join(lines) + "\n"


def _months(t: float) -> float:
    m = t * 12
    return round(m) if abs(m - round(m)) < 1e-9 else m


def report(data) -> PropertyReport:
    """Property table for a :class:`MatrixSeries`, an ensemble, or an array ``(M, T, K, K)``."""
    if hasattr(data, "samples"):
        samples, times = data.samples, np.asarray(data.times)
    elif hasattr(data, "matrices"):
        samples, times = data.matrices, np.asarray(data.times)
    else:
        samples = np.asarray(data, dtype=float)
        times = np.arange(1, samples.shape[1] + 1, dtype=float)
    flags = series_flags(samples)  # (M, T, 4)
    pct = 100.0 * flags.mean(axis=0)
    rs = samples.sum(axis=-1).mean(axis=(0, 2))
    return PropertyReport(times, pct, rs, samples.shape[0])
