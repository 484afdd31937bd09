"""Host overload and underload detection.

Static threshold (THR), adaptive thresholds from the median absolute
deviation (MAD) or interquartile range (IQR) of recent utilization, and
one-step-ahead local regression forecasts (LR, robust variant LRR).
"""

from __future__ import annotations

import statistics
from typing import Iterable, Sequence

import numpy as np

from .model import HostState, PolicyConfig

MIN_HISTORY = 10
LR_WINDOW = 10
ROBUST_ITERATIONS = 3


class InsufficientHistory(Exception):
    """Raised by the statistical policies when fewer than MIN_HISTORY points exist."""


def thr_overloaded(host: HostState, threshold: float) -> bool:
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold {threshold} outside (0, 1]")
    return host.utilization > threshold


def _check_history(history: Sequence[float]) -> np.ndarray:
    if len(history) < MIN_HISTORY:
        raise InsufficientHistory(f"{len(history)} < {MIN_HISTORY} samples")
    return np.asarray(history, dtype=float)


def _quantile(ordered: list[float], q: float) -> float:
    # linear interpolation between closest ranks; np.quantile is slow on short series
    pos = q * (len(ordered) - 1)
    lo = int(pos)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (pos - lo)


def mad(values) -> float:
    x = [float(v) for v in values]
    centre = statistics.median(x)
    return float(statistics.median(abs(v - centre) for v in x))


def iqr(values) -> float:
    ordered = sorted(float(v) for v in values)
    return _quantile(ordered, 0.75) - _quantile(ordered, 0.25)


def mad_threshold(history: Sequence[float], safety: float) -> float:
    x = _check_history(history)
    return min(1.0, max(0.0, 1.0 - safety * mad(x)))


def iqr_threshold(history: Sequence[float], safety: float) -> float:
    x = _check_history(history)
    return min(1.0, max(0.0, 1.0 - safety * iqr(x)))


def tricube_weights(n: int) -> np.ndarray:
    """Tricube weights centred on the newest of ``n`` equally spaced points."""
    dist = (n - 1 - np.arange(n)) / n
    return (1 - dist**3) ** 3


def _wls(x, y, w):
    sw = w.sum()
    sx, sy = (w * x).sum(), (w * y).sum()
    sxx, sxy = (w * x * x).sum(), (w * x * y).sum()
    det = sw * sxx - sx * sx
    if sw <= 0 or abs(det) < 1e-12 * max(1.0, sw * sxx):
        raise np.linalg.LinAlgError("singular normal equations")
    slope = (sw * sxy - sx * sy) / det
    return (sy - slope * sx) / sw, slope


def predict_utilization(history: Sequence[float], robust: bool = False) -> float:
    """Local linear regression forecast one step past the end of ``history``.

    Fits the last LR_WINDOW points with tricube weights; ``robust`` adds
    bisquare reweighting of the residuals.
    """
    y = _check_history(history)[-LR_WINDOW:]
    n = len(y)
    x = np.arange(n, dtype=float)
    base = tricube_weights(n)
    try:
        a, b = _wls(x, y, base)
        if robust:
            for _ in range(ROBUST_ITERATIONS):
                resid = y - (a + b * x)
                scale = np.median(np.abs(resid))
                if scale <= 1e-12:
                    break
                u = resid / (6 * scale)
                bisquare = np.where(np.abs(u) < 1, (1 - u**2) ** 2, 0.0)
                a, b = _wls(x, y, base * bisquare)
    except np.linalg.LinAlgError:
        return float(y[-1])
    prediction = a + b * n
    if not np.isfinite(prediction):
        return float(y[-1])
    return float(prediction)


def lr_overloaded(history: Sequence[float], safety: float, robust: bool = False,
                  current: float | None = None) -> bool:
    """True when ``safety`` times the forecast reaches full utilization.

    With too little history this degrades to a THR-1.0 test on ``current``
    (default: the newest history value).
    """
    try:
        predicted = predict_utilization(history, robust)
    except InsufficientHistory:
        if current is None:
            current = history[-1] if len(history) else 0.0
        return current > 1.0
    return safety * predicted >= 1.0


def overload_threshold(policy: PolicyConfig, history: Sequence[float]) -> float:
    """Utilization above which ``policy`` calls a host overloaded.

    For the regression policies this is the flat-forecast equivalent 1/safety.
    """
    try:
        if policy.detection == "THR":
            return min(1.0, policy.safety)
        if policy.detection == "MAD":
            return mad_threshold(history, policy.safety)
        if policy.detection == "IQR":
            return iqr_threshold(history, policy.safety)
        _check_history(history)
        return min(1.0, 1.0 / policy.safety)
    except InsufficientHistory:
        return 1.0


def is_overloaded(policy: PolicyConfig, utilization: float, history: Sequence[float]) -> bool:
    """Apply ``policy`` to a host's current requested utilization and its history."""
    det = policy.detection
    if det in ("LR", "LRR"):
        return lr_overloaded(history, policy.safety, robust=det == "LRR", current=utilization)
    return utilization > overload_threshold(policy, history)


def host_overloaded(policy: PolicyConfig, host: HostState) -> bool:
    if not host.is_active:
        return False
    return is_overloaded(policy, host.utilization, host.utilization_history)


def find_underloaded(hosts: Iterable[HostState], overloaded: Iterable[int] = ()):
    """Id of the least utilized active, non-empty host outside ``overloaded``."""
    skip = set(overloaded)
    best = None
    for host in hosts:
        if not host.is_active or not host.resident_vms or host.id in skip:
            continue
        key = (host.utilization, host.id)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]
