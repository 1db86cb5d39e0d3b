"""Trajectory accuracy: arc-length resampling, banded DTW and summary statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_SAMPLES = 50
DEFAULT_DTW_WINDOW = 50


class EvalError(ValueError):
    pass


class LengthMismatch(EvalError):
    pass


class EmptyInput(EvalError):
    pass


def resample(points, samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    """``samples`` points spaced uniformly in arc length along a polyline.

    A polyline of zero length yields its single position repeated.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(p) < 1:
        raise EmptyInput("empty polyline")
    if samples < 2:
        raise EvalError("samples must be >= 2")
    seg = np.hypot(*np.diff(p, axis=0).T) if len(p) > 1 else np.zeros(0)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return np.repeat(p[:1], samples, axis=0)
    keep = np.concatenate([[True], seg > 0])
    s, p = s[keep], p[keep]
    q = np.linspace(0.0, s[-1], samples)
    return np.column_stack([np.interp(q, s, p[:, 0]), np.interp(q, s, p[:, 1])])


def dtw_error(a, b, window: int = DEFAULT_DTW_WINDOW) -> float:
    """Banded DTW cost divided by the length of the optimal warping path.

    Among equal-cost alignments the shortest path is used.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if len(a) != len(b):
        raise LengthMismatch(f"sequences have {len(a)} and {len(b)} points")
    if len(a) == 0:
        raise EmptyInput("empty sequences")
    if window < 1:
        raise EvalError("window must be >= 1")
    n = len(a)
    d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    cost = np.full((n + 1, n + 1), np.inf)
    steps = np.zeros((n + 1, n + 1), dtype=int)
    cost[0, 0] = 0.0
    for i in range(1, n + 1):
        lo, hi = max(1, i - window), min(n, i + window)
        for j in range(lo, hi + 1):
            cands = ((cost[i - 1, j - 1], steps[i - 1, j - 1]),
                     (cost[i - 1, j], steps[i - 1, j]),
                     (cost[i, j - 1], steps[i, j - 1]))
            c, s = min(cands)
            cost[i, j] = c + d[i - 1, j - 1]
            steps[i, j] = s + 1
    return float(cost[n, n] / steps[n, n])


def trajectory_error(pred, truth, samples: int = DEFAULT_SAMPLES, window: int = DEFAULT_DTW_WINDOW) -> float:
    """DTW error between two polylines after resampling both."""
    return dtw_error(resample(pred, samples), resample(truth, samples), window)


def percentile(values, q: float) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise EmptyInput("no values")
    return float(np.percentile(v, q, method="linear"))


@dataclass(frozen=True)
class ErrorReport:
    errors: np.ndarray
    median: float
    p90: float
    cdf: np.ndarray
    groups: dict = field(default_factory=dict)

    def table(self, sep: str = "\t") -> str:
        rows = [sep.join(["group", "count", "median_m", "p90_m"])]
        rows.append(sep.join(["all", str(self.errors.size), f"{self.median:.6f}", f"{self.p90:.6f}"]))
        for key in sorted(self.groups):
            g = self.groups[key]
            rows.append(sep.join([key, str(g["count"]), f"{g['median']:.6f}", f"{g['p90']:.6f}"]))
        return "\n".join(rows) + "\n"


def summarize(errors, groups=None) -> ErrorReport:
    """Median, 90th percentile and CDF (1 % grid) of per-trace errors.

    ``groups`` optionally maps each error to a label (one per error) or is a
    dict of label lists keyed by grouping name.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise EmptyInput("no errors to summarize")
    if np.any(e < 0):
        raise EvalError("errors must be non-negative")
    qs = np.arange(0, 101)
    cdf = np.column_stack([np.percentile(e, qs, method="linear"), qs / 100.0])
    out = {}
    if groups is not None:
        keyed = groups if isinstance(groups, dict) else {"group": groups}
        for name, labels in keyed.items():
            labels = list(labels)
            if len(labels) != e.size:
                raise EvalError(f"group '{name}' has {len(labels)} labels for {e.size} errors")
            for lab in sorted(set(map(str, labels))):
                sel = e[[str(x) == lab for x in labels]]
                out[f"{name}={lab}"] = {"count": int(sel.size), "median": percentile(sel, 50),
                                       "p90": percentile(sel, 90)}
    return ErrorReport(e, percentile(e, 50), percentile(e, 90), cdf, out)
