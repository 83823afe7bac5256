"""
Independent reference implementations used by the tests and the
`validate` suite: planted synthetic force traces, brute-force Mann-Whitney,
closed-form hoop balance of a pressurised ring and O(n^2) overlap search.
"""

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .membrane import MembraneSpec
from .rig import ForceTrace, Phase, PhaseSpan

SAMPLE_PERIOD = 0.001
INTERLOCK_SLOPE = 0.3  # N/s


@dataclass(frozen=True)
class PlantedTrace:
    trace: ForceTrace
    push: float
    holding: float
    interlock: Optional[float]


def _ms(value: float) -> float:
    return round(value / SAMPLE_PERIOD) * SAMPLE_PERIOD


def synthetic_grip_trace(
    rng: np.random.Generator,
    with_interlock: Optional[bool] = None,
    descend: float = 2.333,
    vacuum: float = 2.0,
) -> PlantedTrace:
    """
    Piecewise-linear grip trace with known push, holding and interlock
    values, sampled at 1 kHz with knots on sample times.

    Shape: flat pre-grip, ramp up to the push peak at the end of the
    descent, decline to a positive residual under vacuum, then on lift a
    steep drop to -holding, a partial recovery and, optionally, a gentle
    slide to -interlock before the load returns to zero ahead of release.
    """
    if with_interlock is None:
        with_interlock = bool(rng.integers(0, 2))
    push = float(rng.uniform(20.0, 60.0))
    residual = push * float(rng.uniform(0.05, 0.2))
    holding = float(rng.uniform(8.0, 18.0))
    recovered = holding * float(rng.uniform(0.2, 0.4))
    interlock = (
        recovered + float(rng.uniform(0.3, 0.8)) if with_interlock else None
    )

    pre_end = 0.05
    descend_end = _ms(pre_end + descend)
    dwell_end = _ms(descend_end + 0.05)
    vacuum_end = _ms(dwell_end + vacuum)
    knots: List[Tuple[float, float]] = [
        (0.0, 0.0),
        (pre_end, 0.0),
        (descend_end, push),
        (dwell_end, push),
        (vacuum_end, residual),
    ]
    t = _ms(vacuum_end + rng.uniform(0.3, 0.8))
    knots.append((t, -holding))
    t = _ms(t + 0.2)
    knots.append((t, -recovered))
    if interlock is not None:
        t = _ms(t + (interlock - recovered) / INTERLOCK_SLOPE)
        knots.append((t, -interlock))
    t = _ms(t + 0.2)
    knots.append((t, 0.0))
    lift_end = _ms(t + 0.1)
    release_end = _ms(lift_end + 0.9)
    knots.append((release_end, 0.0))

    times = np.arange(int(round(release_end / SAMPLE_PERIOD)) + 1)
    times = times * SAMPLE_PERIOD
    kt = np.array([k[0] for k in knots])
    kf = np.array([k[1] for k in knots])
    spans = [
        PhaseSpan(Phase.PRE_GRIP, 0.0, pre_end),
        PhaseSpan(Phase.DESCEND, pre_end, descend_end),
        PhaseSpan(Phase.DWELL, descend_end, dwell_end),
        PhaseSpan(Phase.VACUUM, dwell_end, vacuum_end),
        PhaseSpan(Phase.LIFT, vacuum_end, lift_end),
        PhaseSpan(Phase.RELEASE, lift_end, release_end),
    ]
    trace = ForceTrace(
        sample_period=SAMPLE_PERIOD,
        t=times,
        f=np.interp(times, kt, kf),
        phases=spans,
    )
    return PlantedTrace(trace, push, holding, interlock)


def pair_count_u(a: Sequence[float], b: Sequence[float]) -> float:
    """#(a > b) + 0.5 * #(a == b) by direct comparison."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u


def exact_mann_whitney(
    a: Sequence[float], b: Sequence[float]
) -> Tuple[float, float]:
    """
    U by pair counting and the two-sided p-value by enumerating every way
    of splitting the pooled values into groups of |a| and |b|.
    """
    pooled = list(a) + list(b)
    n1 = len(a)
    u = pair_count_u(a, b)
    center = n1 * len(b) / 2.0
    hits = 0
    total = 0
    for chosen in itertools.combinations(range(len(pooled)), n1):
        picked = set(chosen)
        first = [pooled[i] for i in chosen]
        rest = [pooled[i] for i in range(len(pooled)) if i not in picked]
        total += 1
        if abs(pair_count_u(first, rest) - center) >= abs(u - center) - 1e-9:
            hits += 1
    return u, hits / total


def hoop_equilibrium_radius(spec: MembraneSpec, delta_p: float) -> float:
    """
    Radius at which edge compression balances the vacuum load on a free
    regular ring with `spec.node_count` nodes (delta_p in kPa).
    """
    m = spec.node_count
    s = math.sin(math.pi / m)
    rest = 2.0 * spec.radius * s
    k = spec.k_stretch
    length = 2.0 * k * rest * s / (2.0 * k * s + delta_p * 1e-3)
    return length / (2.0 * s)


def brute_force_pairs(
    positions: np.ndarray, radii: np.ndarray
) -> List[Tuple[int, int]]:
    """All overlapping grain pairs (i < j) by checking every pair."""
    out = []
    n = positions.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            gap = math.hypot(
                positions[j, 0] - positions[i, 0],
                positions[j, 1] - positions[i, 1],
            )
            if gap < radii[i] + radii[j]:
                out.append((i, j))
    return out
