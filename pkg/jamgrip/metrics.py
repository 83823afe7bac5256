"""
Force metrics of a grip test.

push force     highest load seen during the test
holding force  first qualifying valley after the load crosses zero on lift
interlock      last gentle valley before release, if any

Valleys are found on a centred moving average of the trace; reported
values are read from the raw trace around the detected valley. Forces are
reported as magnitudes.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks

from .errors import DomainError, NoHoldDetected
from .rig import ForceTrace, Phase

logger = logging.getLogger(__name__)

DEFAULT_SMOOTHING_WINDOW = 0.02  # s
DEFAULT_GRADIENT_THRESHOLD = 1.0  # N/s
DEFAULT_MIN_PROMINENCE = 0.05  # N


@dataclass(frozen=True)
class ForceMetrics:
    push_force: float
    holding_force: float
    interlock_force: Optional[float]
    zero_crossing_time: Optional[float]
    annotations: Dict[str, int] = field(default_factory=dict)
    holding_detected: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "push_force": self.push_force,
            "holding_force": self.holding_force,
            "interlock_force": self.interlock_force,
            "zero_crossing_time": self.zero_crossing_time,
            "holding_detected": self.holding_detected,
            "annotations": dict(self.annotations),
        }


def _require(trace: ForceTrace) -> None:
    if len(trace) == 0:
        raise DomainError("empty force trace")


def smooth(trace: ForceTrace, window: float) -> np.ndarray:
    """Centred moving average over `window` seconds (odd sample count)."""
    if window <= 0:
        raise DomainError("smoothing_window must be positive")
    period = trace.sample_period
    if period <= 0 and len(trace) > 1:
        period = float(np.median(np.diff(trace.t)))
    size = max(1, int(round(window / period))) if period > 0 else 1
    size |= 1
    return uniform_filter1d(trace.f, size=size, mode="nearest")


def extract_push(trace: ForceTrace) -> float:
    _require(trace)
    return max(0.0, float(trace.f.max()))


@dataclass
class _Landmarks:
    smoothed: np.ndarray
    push_index: int
    crossing_index: Optional[int]
    crossing_time: Optional[float]
    end_index: int
    valleys: np.ndarray
    gradients: np.ndarray
    half_width: int


def _landmarks(
    trace: ForceTrace,
    smoothing_window: float,
    min_prominence: float,
) -> _Landmarks:
    _require(trace)
    s = smooth(trace, smoothing_window)
    t = trace.t
    count = len(trace)
    push_index = int(np.argmax(trace.f))

    start = push_index
    lift = trace.span(Phase.LIFT)
    if lift is not None:
        start = max(start, int(np.searchsorted(t, lift.start)))
    release = trace.span(Phase.RELEASE)
    end = int(np.searchsorted(t, release.start)) if release else count
    end = max(end, start)

    crossing_index = None
    crossing_time = None
    if start < end and s[start] <= 0 and start > push_index:
        crossing_index = start
        crossing_time = float(t[start])
    else:
        for i in range(max(start, 1), end):
            if s[i - 1] > 0 >= s[i]:
                crossing_index = i
                frac = s[i - 1] / (s[i - 1] - s[i])
                crossing_time = float(t[i - 1] + frac * (t[i] - t[i - 1]))
                break

    valleys = np.zeros(0, dtype=int)
    gradients = np.zeros(0)
    if crossing_index is not None:
        found, _ = find_peaks(-s, prominence=min_prominence)
        keep = (found >= crossing_index) & (found < end) & (s[found] < 0)
        valleys = found[keep]
        peaks, _ = find_peaks(s, prominence=min_prominence)
        gradients = np.empty(valleys.shape[0])
        for n, v in enumerate(valleys):
            before = peaks[(peaks < v) & (peaks >= crossing_index)]
            anchor = int(before[-1]) if before.size else crossing_index
            span = t[v] - t[anchor]
            gradients[n] = (
                abs(s[v] - s[anchor]) / span if span > 0 else np.inf
            )

    period = trace.sample_period if trace.sample_period > 0 else 1.0
    half_width = max(1, int(round(smoothing_window / period)))
    return _Landmarks(
        smoothed=s,
        push_index=push_index,
        crossing_index=crossing_index,
        crossing_time=crossing_time,
        end_index=end,
        valleys=valleys,
        gradients=gradients,
        half_width=half_width,
    )


def _valley_value(
    trace: ForceTrace, index: int, half_width: int
) -> Tuple[int, float]:
    lo = max(0, index - half_width)
    hi = min(len(trace), index + half_width + 1)
    local = lo + int(np.argmin(trace.f[lo:hi]))
    return local, abs(float(trace.f[local]))


def _holding(marks: _Landmarks, threshold: float) -> Optional[int]:
    for v, grad in zip(marks.valleys, marks.gradients):
        if grad > threshold:
            return int(v)
    return None


def _interlock(marks: _Landmarks, threshold: float) -> Optional[int]:
    holding = _holding(marks, threshold)
    chosen = None
    for v, grad in zip(marks.valleys, marks.gradients):
        if grad < threshold and (holding is None or v > holding):
            chosen = int(v)
    return chosen


def extract_holding(
    trace: ForceTrace,
    smoothing_window: float = DEFAULT_SMOOTHING_WINDOW,
    gradient_threshold: float = DEFAULT_GRADIENT_THRESHOLD,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
) -> float:
    """
    Magnitude of the first valley after the downward zero crossing whose
    preceding smoothed gradient exceeds `gradient_threshold` (N/s).

    Raises:
        NoHoldDetected: the trace never crosses zero or no valley qualifies
    """
    marks = _landmarks(trace, smoothing_window, min_prominence)
    if marks.crossing_index is None:
        raise NoHoldDetected("force never crosses zero after the push peak")
    valley = _holding(marks, gradient_threshold)
    if valley is None:
        raise NoHoldDetected("no valley with a steep enough approach")
    return _valley_value(trace, valley, marks.half_width)[1]


def extract_interlock(
    trace: ForceTrace,
    smoothing_window: float = DEFAULT_SMOOTHING_WINDOW,
    gradient_threshold: float = DEFAULT_GRADIENT_THRESHOLD,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
) -> Optional[float]:
    """Magnitude of the last gentle valley before release, or None."""
    marks = _landmarks(trace, smoothing_window, min_prominence)
    valley = _interlock(marks, gradient_threshold)
    if valley is None:
        return None
    return _valley_value(trace, valley, marks.half_width)[1]


def extract_metrics(
    trace: ForceTrace,
    smoothing_window: float = DEFAULT_SMOOTHING_WINDOW,
    gradient_threshold: float = DEFAULT_GRADIENT_THRESHOLD,
    min_prominence: float = DEFAULT_MIN_PROMINENCE,
) -> ForceMetrics:
    """All three metrics in one pass. A missing hold is reported as 0 N."""
    marks = _landmarks(trace, smoothing_window, min_prominence)
    annotations = {"push": marks.push_index}
    if marks.crossing_index is not None:
        annotations["zero_crossing"] = marks.crossing_index

    holding_force = 0.0
    detected = False
    valley = (
        _holding(marks, gradient_threshold)
        if marks.crossing_index is not None
        else None
    )
    if valley is not None:
        index, holding_force = _valley_value(trace, valley, marks.half_width)
        annotations["holding"] = index
        detected = True

    interlock_force = None
    valley = _interlock(marks, gradient_threshold)
    if valley is not None:
        index, interlock_force = _valley_value(
            trace, valley, marks.half_width
        )
        annotations["interlock"] = index

    if not detected:
        logger.info("No holding valley detected; recording 0 N")
    return ForceMetrics(
        push_force=max(0.0, float(trace.f[marks.push_index])),
        holding_force=holding_force,
        interlock_force=interlock_force,
        zero_crossing_time=marks.crossing_time,
        annotations=annotations,
        holding_detected=detected,
    )


def metrics_from_config(loader=None) -> Dict[str, float]:
    """Keyword arguments for the extract_* functions from config.json."""
    if loader is None:
        from config_loader import get_config_loader

        loader = get_config_loader()
    cfg = loader.get_metrics_config()
    return {
        "smoothing_window": float(
            cfg.get("smoothing_window", DEFAULT_SMOOTHING_WINDOW)
        ),
        "gradient_threshold": float(
            cfg.get("gradient_threshold", DEFAULT_GRADIENT_THRESHOLD)
        ),
        "min_prominence": float(
            cfg.get("min_prominence", DEFAULT_MIN_PROMINENCE)
        ),
    }
