"""
Deterministic SVG figures: boxplots by condition (push left, holding
right), relaxation against push-down height, and p-value heatmaps.

Output depends only on the input numbers; coordinates are printed with a
fixed precision so reruns are byte-identical.
"""

import logging
import math
import re
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import escape

import numpy as np

from .errors import DomainError
from .harness import TrialRecord, condition_order, summarize
from .stats import ComparisonMatrix

logger = logging.getLogger(__name__)

PANEL_WIDTH = 420
PANEL_HEIGHT = 320
MARGIN = 56
FONT = "font-family=\"sans-serif\" font-size=\"11\""
ARM_COLORS = {"vib": "#d95f02", "silent": "#1b9e77"}
_HEIGHT_ID = re.compile(r"^h(?P<height>[0-9.]+)-(?P<arm>vib|silent)$")


class PlotKind(str, Enum):
    BOX_BY_CONDITION = "BoxByCondition"
    RELAXATION_BY_HEIGHT = "RelaxationByHeight"
    HEATMAP = "Heatmap"


def _n(value: float) -> str:
    return f"{value:.2f}"


def box_stats(values: Sequence[float]) -> Tuple[float, float, float, float, float]:
    """(low whisker, q1, median, q3, high whisker) with 1.5 IQR whiskers."""
    data = np.sort(np.asarray(values, dtype=float))
    if data.size == 0:
        raise DomainError("box of an empty sample")
    q1, median, q3 = np.percentile(data, [25, 50, 75])
    iqr = q3 - q1
    inside = data[(data >= q1 - 1.5 * iqr) & (data <= q3 + 1.5 * iqr)]
    return (
        float(inside.min()),
        float(q1),
        float(median),
        float(q3),
        float(inside.max()),
    )


class _Axis:
    """Linear map from data values to panel pixels (y grows downward)."""

    def __init__(self, low: float, high: float, top: float, bottom: float):
        if not high > low:
            pad = max(1.0, abs(low) * 0.1)
            low, high = low - pad, high + pad
        self.low = low
        self.high = high
        self.top = top
        self.bottom = bottom

    def __call__(self, value: float) -> float:
        frac = (value - self.low) / (self.high - self.low)
        return self.bottom - frac * (self.bottom - self.top)

    def ticks(self, count: int = 5) -> List[float]:
        return list(np.linspace(self.low, self.high, count))


def _frame(x0: float, title: str, ylabel: str, axis: _Axis) -> List[str]:
    left = x0 + MARGIN
    right = x0 + PANEL_WIDTH - 12
    parts = [
        f'<text x="{_n(x0 + PANEL_WIDTH / 2)}" y="20" text-anchor="middle" '
        f'{FONT}>{escape(title)}</text>',
        f'<line x1="{_n(left)}" y1="{_n(axis.top)}" x2="{_n(left)}" '
        f'y2="{_n(axis.bottom)}" stroke="black"/>',
        f'<line x1="{_n(left)}" y1="{_n(axis.bottom)}" x2="{_n(right)}" '
        f'y2="{_n(axis.bottom)}" stroke="black"/>',
        f'<text x="{_n(x0 + 14)}" y="{_n((axis.top + axis.bottom) / 2)}" '
        f'text-anchor="middle" {FONT} transform="rotate(-90 '
        f'{_n(x0 + 14)} {_n((axis.top + axis.bottom) / 2)})">'
        f"{escape(ylabel)}</text>",
    ]
    for tick in axis.ticks():
        y = axis(tick)
        parts.append(
            f'<line x1="{_n(left - 4)}" y1="{_n(y)}" x2="{_n(left)}" '
            f'y2="{_n(y)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_n(left - 6)}" y="{_n(y + 4)}" text-anchor="end" '
            f"{FONT}>{tick:.1f}</text>"
        )
    return parts


def _document(width: float, height: float, body: List[str]) -> str:
    return "\n".join(
        [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
            f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
            '<rect width="100%" height="100%" fill="white"/>',
            *body,
            "</svg>",
            "",
        ]
    )


def _box_panel(
    x0: float,
    title: str,
    labels: List[str],
    groups: List[List[float]],
) -> List[str]:
    values = [v for group in groups for v in group]
    axis = _Axis(
        min(0.0, min(values)), max(values), 36, PANEL_HEIGHT - MARGIN
    )
    parts = _frame(x0, title, "Force (N)", axis)
    left = x0 + MARGIN
    slot = (PANEL_WIDTH - MARGIN - 12) / len(labels)
    half = min(16.0, slot * 0.3)
    for i, (label, group) in enumerate(zip(labels, groups)):
        cx = left + slot * (i + 0.5)
        parts.append(
            f'<text x="{_n(cx)}" y="{_n(axis.bottom + 14)}" '
            f'text-anchor="end" {FONT} transform="rotate(-45 {_n(cx)} '
            f'{_n(axis.bottom + 14)})">{escape(label)}</text>'
        )
        if not group:
            continue
        low, q1, median, q3, high = box_stats(group)
        parts.append(
            f'<line x1="{_n(cx)}" y1="{_n(axis(low))}" x2="{_n(cx)}" '
            f'y2="{_n(axis(high))}" stroke="black"/>'
        )
        parts.append(
            f'<rect x="{_n(cx - half)}" y="{_n(axis(q3))}" '
            f'width="{_n(2 * half)}" height="{_n(axis(q1) - axis(q3))}" '
            f'fill="#9ecae1" stroke="black"/>'
        )
        parts.append(
            f'<line x1="{_n(cx - half)}" y1="{_n(axis(median))}" '
            f'x2="{_n(cx + half)}" y2="{_n(axis(median))}" '
            f'stroke="#d62728" stroke-width="2"/>'
        )
        for outlier in sorted(v for v in group if v < low or v > high):
            parts.append(
                f'<circle cx="{_n(cx)}" cy="{_n(axis(outlier))}" r="2" '
                f'fill="none" stroke="black"/>'
            )
    return parts


def box_by_condition_svg(
    labels: Sequence[str],
    push: Sequence[Sequence[float]],
    holding: Sequence[Sequence[float]],
    title: str = "",
) -> str:
    """Two-panel boxplot: push force (left) and holding force (right)."""
    if not labels or not any(push):
        raise DomainError("boxplot needs at least one non-empty group")
    labels = list(labels)
    body = _box_panel(
        0, f"{title} push force".strip(), labels, [list(g) for g in push]
    )
    body += _box_panel(
        PANEL_WIDTH,
        f"{title} holding force".strip(),
        labels,
        [list(g) for g in holding],
    )
    return _document(2 * PANEL_WIDTH, PANEL_HEIGHT, body)


def _polyline(
    xs: Sequence[float], ys: Sequence[float], color: str
) -> List[str]:
    points = " ".join(f"{_n(x)},{_n(y)}" for x, y in zip(xs, ys))
    parts = [
        f'<polyline points="{points}" fill="none" stroke="{color}" '
        f'stroke-width="1.5"/>'
    ]
    for x, y in zip(xs, ys):
        parts.append(
            f'<circle cx="{_n(x)}" cy="{_n(y)}" r="2.5" fill="{color}"/>'
        )
    return parts


def _line_panel(
    x0: float,
    title: str,
    ylabel: str,
    heights: List[float],
    series: Dict[str, List[float]],
) -> List[str]:
    values = [v for ys in series.values() for v in ys if math.isfinite(v)]
    if not values:
        values = [0.0]
    axis = _Axis(
        min(0.0, min(values)), max(values), 36, PANEL_HEIGHT - MARGIN
    )
    parts = _frame(x0, title, ylabel, axis)
    left = x0 + MARGIN
    width = PANEL_WIDTH - MARGIN - 24
    h_low, h_high = min(heights), max(heights)
    span = h_high - h_low if h_high > h_low else 1.0

    def x_of(h: float) -> float:
        return left + 6 + width * (h - h_low) / span

    for h in sorted(set([h_low, h_high, (h_low + h_high) / 2])):
        parts.append(
            f'<text x="{_n(x_of(h))}" y="{_n(axis.bottom + 14)}" '
            f'text-anchor="middle" {FONT}>{h:g}</text>'
        )
    parts.append(
        f'<text x="{_n(left + width / 2)}" y="{_n(axis.bottom + 34)}" '
        f'text-anchor="middle" {FONT}>Push-down height (mm)</text>'
    )
    for row, (arm, ys) in enumerate(series.items()):
        pts = [(x_of(h), axis(y)) for h, y in zip(heights, ys) if math.isfinite(y)]
        color = ARM_COLORS.get(arm, "#333333")
        parts += _polyline([p[0] for p in pts], [p[1] for p in pts], color)
        parts.append(
            f'<text x="{_n(x0 + PANEL_WIDTH - 16)}" y="{_n(44 + 14 * row)}" '
            f'text-anchor="end" fill="{color}" {FONT}>{escape(arm)}</text>'
        )
    return parts


def relaxation_table(
    records: Sequence[TrialRecord],
) -> Tuple[List[float], Dict[str, Dict[float, Tuple[float, float]]]]:
    """
    Mean (residual before, residual after) per height and arm from
    relaxation records; push_force_n holds the residual after the
    protocol and holding_force_n the residual before it.
    """
    collected: Dict[str, Dict[float, List[Tuple[float, float]]]] = {
        "vib": {},
        "silent": {},
    }
    for record in records:
        match = _HEIGHT_ID.match(record.condition_id)
        if match is None or not record.valid:
            continue
        height = float(match.group("height"))
        collected[match.group("arm")].setdefault(height, []).append(
            (record.holding_force_n, record.push_force_n)
        )
    heights = sorted(set(collected["vib"]) | set(collected["silent"]))
    table: Dict[str, Dict[float, Tuple[float, float]]] = {}
    for arm, by_height in collected.items():
        table[arm] = {
            h: (
                float(np.mean([v[0] for v in values])),
                float(np.mean([v[1] for v in values])),
            )
            for h, values in by_height.items()
        }
    return heights, table


def relaxation_svg(records: Sequence[TrialRecord], title: str = "") -> str:
    """Residual push force (left) and percent relaxation (right) by height."""
    heights, table = relaxation_table(records)
    if not heights:
        raise DomainError("no valid relaxation records")
    absolute: Dict[str, List[float]] = {}
    percent: Dict[str, List[float]] = {}
    for arm in ("vib", "silent"):
        absolute[arm] = [table[arm].get(h, (math.nan,) * 2)[1] for h in heights]
        percent[arm] = []
        for h in heights:
            before, after = table[arm].get(h, (math.nan, math.nan))
            percent[arm].append(
                100.0 * (before - after) / before
                if before > 0
                else math.nan
            )
    body = _line_panel(
        0, f"{title} push force".strip(), "Force (N)", heights, absolute
    )
    body += _line_panel(
        PANEL_WIDTH,
        f"{title} relaxation".strip(),
        "Reduction (%)",
        heights,
        percent,
    )
    return _document(2 * PANEL_WIDTH, PANEL_HEIGHT, body)


def _heat_color(p: float, alpha: float) -> str:
    if not math.isfinite(p):
        return "#eeeeee"
    if p < alpha:
        shade = int(round(80 + 120 * p / alpha))
        return f"#{shade:02x}{shade // 2:02x}{shade // 4:02x}"
    shade = int(round(210 + 40 * min(1.0, p)))
    return f"#{shade:02x}{shade:02x}{shade:02x}"


def heatmap_svg(matrix: ComparisonMatrix, title: str = "") -> str:
    """Grid of pairwise p-values; significant cells in warm colours."""
    k = len(matrix.labels)
    if k == 0:
        raise DomainError("heatmap of an empty matrix")
    cell = max(18.0, min(40.0, 480.0 / k))
    offset = 110.0
    size = offset + cell * k + 20
    body = [
        f'<text x="{_n(size / 2)}" y="18" text-anchor="middle" {FONT}>'
        f"{escape(title or 'Mann-Whitney p-values')}</text>"
    ]
    for i, label in enumerate(matrix.labels):
        y = offset + cell * (i + 0.5) + 4
        body.append(
            f'<text x="{_n(offset - 6)}" y="{_n(y)}" text-anchor="end" '
            f"{FONT}>{escape(label)}</text>"
        )
        x = offset + cell * (i + 0.5)
        body.append(
            f'<text x="{_n(x)}" y="{_n(offset - 6)}" text-anchor="start" '
            f'{FONT} transform="rotate(-60 {_n(x)} {_n(offset - 6)})">'
            f"{escape(label)}</text>"
        )
    values = matrix.p_adjusted
    for i in range(k):
        for j in range(k):
            p = float(values[i, j])
            x = offset + cell * j
            y = offset + cell * i
            body.append(
                f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(cell)}" '
                f'height="{_n(cell)}" fill="{_heat_color(p, matrix.alpha)}" '
                f'stroke="white"/>'
            )
            if math.isfinite(p) and cell >= 28:
                body.append(
                    f'<text x="{_n(x + cell / 2)}" y="{_n(y + cell / 2 + 3)}" '
                    f'text-anchor="middle" font-family="sans-serif" '
                    f'font-size="8">{p:.2f}</text>'
                )
    return _document(size, size, body)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("Wrote %s", path)
    return path


def emit_plots(
    records: Sequence[TrialRecord],
    kind: Union[PlotKind, str],
    out_dir: Union[str, Path],
    labels: Optional[Dict[str, str]] = None,
    metric: str = "holding_force",
    alpha: float = 0.05,
    correction: str = "none",
    sampled_per_condition: int = 0,
    seed: int = 0,
) -> List[Path]:
    """
    Render one kind of figure for a set of trial records.

    Raises:
        DomainError: no records (nothing is written)
    """
    kind = PlotKind(kind)
    if not records:
        raise DomainError("cannot plot an empty record set")
    out_dir = Path(out_dir)
    plan = records[0].plan
    labels = labels or {}

    if kind is PlotKind.RELAXATION_BY_HEIGHT:
        text = relaxation_svg(records, plan)
        return [_write(out_dir / f"{plan}_relaxation.svg", text)]

    if kind is PlotKind.HEATMAP:
        summary = summarize(
            records,
            metric=metric,
            alpha=alpha,
            correction=correction,
            sampled_per_condition=sampled_per_condition,
            seed=seed,
        )
        matrix = summary.matrix
        matrix.labels = [labels.get(c, c) for c in matrix.labels]
        text = heatmap_svg(matrix, f"{plan} {metric.replace('_', ' ')}")
        return [_write(out_dir / f"{plan}_{metric}_heatmap.svg", text)]

    order = condition_order(records)
    push: List[List[float]] = []
    holding: List[List[float]] = []
    for condition_id in order:
        valid = [
            r for r in records if r.condition_id == condition_id and r.valid
        ]
        push.append([r.push_force_n for r in valid])
        holding.append([r.holding_force_n for r in valid])
    text = box_by_condition_svg(
        [labels.get(c, c) for c in order], push, holding, plan
    )
    return [_write(out_dir / f"{plan}_boxplot.svg", text)]
