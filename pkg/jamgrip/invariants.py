"""
Self-check suite behind `jamgrip validate`.

Each check returns a CheckResult instead of raising so the whole suite
always runs to the end and reports every failure.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .dem_core import (
    Geometry,
    SimConfig,
    build_world,
    make_world,
    neighbor_pairs,
    run_block,
)
from .errors import ConfigurationError, JamGripError, NoHoldDetected
from .membrane import (
    MembraneSpec,
    PressureState,
    make_ring,
    membrane_forces,
    pressure_forces,
)
from .metrics import extract_metrics
from .oracles import (
    brute_force_pairs,
    exact_mann_whitney,
    hoop_equilibrium_radius,
    synthetic_grip_trace,
)
from .rig import GripCycleConfig, Phase, ProtocolTimeline, run_grip_cycle
from .stats import mann_whitney_u
from .waveform import WaveformSpec, sample_many, synthesize

logger = logging.getLogger(__name__)

OVERLAP_LIMIT = 0.3
MOMENTUM_TOLERANCE = 1e-9
METRIC_TOLERANCE = 0.01
TIMING_TOLERANCE = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def small_config(seed: int = 0, grains: int = 80) -> SimConfig:
    """A quick-to-settle pack for self checks."""
    return SimConfig(
        grain_count=grains,
        rng_seed=seed,
        growth_time=0.01,
        settle_max_time=0.05,
    )


def check_determinism(seed: int = 0) -> str:
    base = build_world(small_config(seed))
    runs = []
    for _ in range(2):
        world = base.copy()
        result = run_block(world, np.full(2000, world.mount_y))
        runs.append((world.positions.copy(), world.velocities.copy(), result))
    (p0, v0, r0), (p1, v1, r1) = runs
    if not (
        np.array_equal(p0, p1)
        and np.array_equal(v0, v1)
        and np.array_equal(r0.load, r1.load)
    ):
        raise AssertionError("reruns from the same state differ")
    return "2000 steps bit-identical"


def check_momentum(seed: int = 0, grains: int = 200) -> str:
    rng = np.random.default_rng(seed)
    side = int(math.ceil(math.sqrt(grains)))
    ix, iy = np.divmod(np.arange(grains), side)
    positions = np.column_stack([ix * 1.9, iy * 1.9]).astype(float)
    positions += rng.uniform(-0.05, 0.05, positions.shape)
    radii = rng.uniform(0.9, 1.1, grains)
    velocities = rng.normal(0.0, 50.0, (grains, 2))
    world = make_world(
        positions,
        radii,
        velocities=velocities,
        geometry=Geometry(object_enabled=False, floor_enabled=False),
        gravity=0.0,
        domain=(-10.0, side * 1.9 + 10.0, -10.0, side * 1.9 + 10.0),
    )
    before = (world.masses[:, None] * world.velocities).sum(axis=0)
    run_block(world, np.zeros(1000))
    after = (world.masses[:, None] * world.velocities).sum(axis=0)
    scale = max(1.0, float(np.abs(world.masses[:, None] * velocities).sum()))
    drift = float(np.abs(after - before).max()) / scale
    if drift > MOMENTUM_TOLERANCE:
        raise AssertionError(f"momentum drift {drift:.3e}")
    return f"relative drift {drift:.2e}"


def check_neighbor_grid(seed: int = 0, grains: int = 500) -> str:
    rng = np.random.default_rng(seed)
    positions = rng.uniform((-30.0, 0.0), (30.0, 60.0), (grains, 2))
    radii = rng.uniform(0.8, 1.2, grains)
    world = make_world(positions, radii)
    grid = neighbor_pairs(world)
    brute = brute_force_pairs(positions, radii)
    if grid != brute:
        raise AssertionError(
            f"grid found {len(grid)} pairs, brute force {len(brute)}"
        )
    return f"{len(grid)} overlapping pairs match"


def check_grip_cycle(seed: int = 0) -> str:
    """Short grip cycle: no NaN and overlap below the bound."""
    world = build_world(small_config(seed).with_overrides(mount_height=60.0))
    cfg = GripCycleConfig(
        start_height=60.0,
        push_height=45.0,
        lift_height=55.0,
        axis_speed=150.0,
        vacuum_hold=0.1,
        dwell_duration=0.01,
        release_pulse_count=1,
        release_pulse_duration=0.02,
        pre_grip_duration=0.01,
    )
    trace = run_grip_cycle(
        world,
        cfg,
        WaveformSpec.tone(200.0, 150.0, duration=1.0),
        PressureState(ramp_time=0.05),
    )
    if not np.all(np.isfinite(trace.f)):
        raise AssertionError("non-finite load")
    if world.max_overlap_ratio > OVERLAP_LIMIT:
        raise AssertionError(
            f"overlap ratio {world.max_overlap_ratio:.3f} > {OVERLAP_LIMIT}"
        )
    return f"max overlap ratio {world.max_overlap_ratio:.3f}"


def check_waveforms() -> str:
    tone = WaveformSpec.tone(200.0, 150.0, duration=0.05)
    buffer = synthesize(tone, 8000.0)
    if abs(buffer.samples[0]) > 1e-12:
        raise AssertionError("tone does not start at zero")
    if np.abs(buffer.samples).max() > 0.75 + 1e-9:
        raise AssertionError("tone exceeds its amplitude")
    try:
        synthesize(tone, 400.0)
    except ConfigurationError:
        pass
    else:
        raise AssertionError("undersampled synthesis was accepted")
    pulse = WaveformSpec.pulse_train(100.0, 400.0, segments=3)
    t = np.array([0.25, 1.25, 2.25])
    if not np.allclose(sample_many(pulse, t), sample_many(pulse, t[:1])[0]):
        raise AssertionError("pulse train segments differ")
    return "tone, Nyquist and pulse periodicity ok"


def check_metric_oracle(count: int = 50, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        planted = synthetic_grip_trace(rng)
        metrics = extract_metrics(planted.trace)
        if not metrics.holding_detected:
            raise NoHoldDetected("planted holding valley missed")
        errors = [
            abs(metrics.push_force - planted.push) / planted.push,
            abs(metrics.holding_force - planted.holding) / planted.holding,
        ]
        if planted.interlock is None:
            if metrics.interlock_force is not None:
                raise AssertionError("interlock found where none was planted")
        else:
            if metrics.interlock_force is None:
                raise AssertionError("planted interlock missed")
            errors.append(
                abs(metrics.interlock_force - planted.interlock)
                / planted.interlock
            )
        worst = max(worst, max(errors))
    if worst > METRIC_TOLERANCE:
        raise AssertionError(f"worst relative error {worst:.4f}")
    return f"{count} traces, worst relative error {worst:.2e}"


def check_mann_whitney_oracle(count: int = 200, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n1, n2 = (int(v) for v in rng.integers(1, 7, size=2))
        a = rng.integers(0, 10, n1).astype(float)
        b = rng.integers(0, 10, n2).astype(float)
        u, p = mann_whitney_u(a, b)
        u_ref, p_ref = exact_mann_whitney(a, b)
        if abs(u - u_ref) > 1e-9 or abs(p - p_ref) > 1e-9:
            raise AssertionError(
                f"mismatch for {a.tolist()} vs {b.tolist()}: "
                f"({u}, {p}) != ({u_ref}, {p_ref})"
            )
    return f"{count} samples agree"


def check_protocol_timings() -> str:
    cfg = GripCycleConfig()
    timeline = ProtocolTimeline(cfg)
    descend = timeline.span(Phase.DESCEND)
    vacuum = timeline.span(Phase.VACUUM)
    lift = timeline.span(Phase.LIFT)
    checks = [
        ("descent", descend.duration, 70.0 / 30.0),
        ("vacuum", vacuum.duration, 10.0),
        ("lift height", float(timeline.height_at(lift.end)), 70.0),
    ]
    for name, got, want in checks:
        if abs(got - want) > TIMING_TOLERANCE:
            raise AssertionError(f"{name} {got:.4f} != {want:.4f}")
    return "descent 2.333 s, vacuum 10.000 s, lift to 70 mm"


def check_hoop_balance() -> str:
    spec = MembraneSpec()
    pressure = PressureState(delta_p=40.0, ramp_time=0.0)
    radius = hoop_equilibrium_radius(spec, pressure.delta_p)
    ring = make_ring(spec, (0.0, 0.0), pin_cap=False, radius=radius)
    total = membrane_forces(ring) + pressure_forces(ring, pressure, 0.0)
    residual = float(np.abs(total).max())
    if residual > 1e-9:
        raise AssertionError(f"residual nodal force {residual:.3e} N")
    return f"R_eq = {radius:.4f} mm, residual {residual:.1e} N"


def default_checks() -> List[Tuple[str, Callable[[], str]]]:
    return [
        ("waveforms", check_waveforms),
        ("protocol timings", check_protocol_timings),
        ("hoop balance", check_hoop_balance),
        ("metric oracle", check_metric_oracle),
        ("mann-whitney oracle", check_mann_whitney_oracle),
        ("neighbor grid", check_neighbor_grid),
        ("momentum", check_momentum),
        ("determinism", check_determinism),
        ("grip cycle", check_grip_cycle),
    ]


def run_invariant_suite(
    checks: Optional[List[Tuple[str, Callable[[], str]]]] = None,
) -> List[CheckResult]:
    """Run every check and collect the outcomes."""
    results = []
    for name, check in checks or default_checks():
        started = time.perf_counter()
        try:
            detail = check()
            passed = True
        except (AssertionError, JamGripError, ValueError) as e:
            detail = str(e)
            passed = False
        elapsed = time.perf_counter() - started
        level = logging.INFO if passed else logging.ERROR
        logger.log(
            level,
            "Check %s %s in %.1f s: %s",
            name,
            "passed" if passed else "FAILED",
            elapsed,
            detail,
        )
        results.append(CheckResult(name, passed, detail, elapsed))
    return results
