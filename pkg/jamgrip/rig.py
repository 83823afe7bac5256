"""
Virtual test rig: z-axis kinematics, exciter mount oscillation, the grip
cycle phase machine and load-cell recording.

The mount reference height is the centre of the undeformed membrane ring;
its pinned top arc follows the mount exactly. The load cell reads the net
vertical force the gripper applies to the pinned arc (push positive, pull
negative), tared at the end of the pre-grip shake and block-averaged to
the output rate.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .dem_core import GrainWorld, Probe, run_block
from .errors import ConfigurationError, DomainError
from .membrane import PressureState
from .waveform import (
    DEFAULT_REFERENCE_DISPLACEMENT,
    WaveformSpec,
    sample_many,
    volume_to_amplitude,
)

logger = logging.getLogger(__name__)

TARE_WINDOW = 0.005  # s, one period of the 200 Hz pre-grip shake
RELAXATION_HEIGHT_RANGE = (27.0, 70.0)


class VibrationWindow(str, Enum):
    DURING_DESCENT = "during_descent"
    AFTER_PUSHDOWN = "after_pushdown"
    NONE = "none"


class WaveformTiming(str, Enum):
    REALTIME = "realtime"
    FIT = "fit"


class Phase(str, Enum):
    PRE_GRIP = "PreGrip"
    DESCEND = "Descend"
    DWELL = "Dwell"
    VACUUM = "Vacuum"
    LIFT = "Lift"
    RELEASE = "Release"
    DONE = "Done"


PHASE_ORDER = list(Phase)


@dataclass(frozen=True)
class GripCycleConfig:
    start_height: float = 100.0
    push_height: float = 30.0
    lift_height: float = 70.0
    axis_speed: float = 30.0
    vacuum_hold: float = 10.0
    vibration_window: VibrationWindow = VibrationWindow.DURING_DESCENT
    window_duration: float = 5.0
    dwell_duration: float = 0.05
    release_pulse_count: int = 3
    release_pulse_duration: float = 0.3
    release_vibration_freq: float = 200.0
    release_volume: float = 100.0
    pre_grip_duration: float = 0.05
    pre_grip_freq: float = 200.0
    pre_grip_amplitude: float = 0.1
    output_rate: float = 1000.0
    waveform_timing: WaveformTiming = WaveformTiming.REALTIME

    def __post_init__(self):
        object.__setattr__(
            self, "vibration_window", VibrationWindow(self.vibration_window)
        )
        object.__setattr__(
            self, "waveform_timing", WaveformTiming(self.waveform_timing)
        )
        if not self.push_height < self.lift_height < self.start_height:
            raise ConfigurationError(
                "heights must satisfy push_height < lift_height < start_height"
            )
        if self.axis_speed <= 0:
            raise ConfigurationError("axis_speed must be positive")
        durations = (
            self.vacuum_hold,
            self.window_duration,
            self.dwell_duration,
            self.release_pulse_duration,
            self.pre_grip_duration,
        )
        if any(d <= 0 for d in durations):
            raise ConfigurationError("all durations must be positive")
        if self.release_pulse_count < 1:
            raise ConfigurationError("release_pulse_count must be >= 1")
        if self.output_rate <= 0:
            raise ConfigurationError("output_rate must be positive")

    @property
    def descend_duration(self) -> float:
        return (self.start_height - self.push_height) / self.axis_speed

    @property
    def lift_duration(self) -> float:
        return (self.lift_height - self.push_height) / self.axis_speed

    @property
    def dwell_time(self) -> float:
        if self.vibration_window is VibrationWindow.AFTER_PUSHDOWN:
            return self.window_duration
        return self.dwell_duration

    @property
    def release_duration(self) -> float:
        return self.release_pulse_count * self.release_pulse_duration

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["vibration_window"] = self.vibration_window.value
        data["waveform_timing"] = self.waveform_timing.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GripCycleConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GripCycleConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_config(cls, loader=None) -> "GripCycleConfig":
        if loader is None:
            from config_loader import get_config_loader

            loader = get_config_loader()
        return cls.from_dict(loader.get_grip_cycle_config())

    def with_overrides(self, **overrides: Any) -> "GripCycleConfig":
        return replace(self, **overrides)


@dataclass(frozen=True)
class RelaxationConfig:
    pre_hold: float = 0.5
    vibration_duration: float = 5.0
    vibration_freq: float = 200.0
    vibration_volume: float = 150.0
    post_hold: float = 0.5
    residual_window: float = 0.2

    def __post_init__(self):
        if min(self.pre_hold, self.post_hold, self.vibration_duration) <= 0:
            raise ConfigurationError("relaxation durations must be positive")
        if not 0 < self.residual_window <= min(self.pre_hold, self.post_hold):
            raise ConfigurationError(
                "residual_window must fit inside both holds"
            )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RelaxationConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def from_config(cls, loader=None) -> "RelaxationConfig":
        if loader is None:
            from config_loader import get_config_loader

            loader = get_config_loader()
        return cls.from_dict(loader.get_relaxation_config())


@dataclass(frozen=True)
class PhaseSpan:
    phase: Phase
    start: float
    end: float
    label: str = ""

    @property
    def duration(self) -> float:
        return self.end - self.start

    def to_dict(self) -> Dict[str, Any]:
        return {
            "phase": self.phase.value,
            "start": self.start,
            "end": self.end,
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseSpan":
        return cls(
            Phase(data["phase"]),
            float(data["start"]),
            float(data["end"]),
            data.get("label", ""),
        )


@dataclass
class RigState:
    phase: Phase = Phase.PRE_GRIP
    mount_height: float = 100.0
    mount_oscillation_offset: float = 0.0
    elapsed: float = 0.0
    step_index: int = 0
    conditioning_offset: float = 0.0
    delta_p: float = 0.0

    @property
    def mount_position(self) -> float:
        return (
            self.mount_height
            + self.mount_oscillation_offset
            + self.conditioning_offset
        )


class ProtocolTimeline:
    """
    Analytic schedule of one grip cycle: phase spans, piecewise-linear mount
    height, vibration window, conditioning shakes and vacuum level.
    """

    def __init__(
        self,
        cfg: GripCycleConfig,
        waveform: Optional[WaveformSpec] = None,
        vacuum: Optional[PressureState] = None,
        reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
    ):
        self.cfg = cfg
        self.waveform = waveform
        self.vacuum = vacuum
        self.reference_displacement = reference_displacement

        durations = [
            (Phase.PRE_GRIP, cfg.pre_grip_duration),
            (Phase.DESCEND, cfg.descend_duration),
            (Phase.DWELL, cfg.dwell_time),
            (Phase.VACUUM, cfg.vacuum_hold),
            (Phase.LIFT, cfg.lift_duration),
            (Phase.RELEASE, cfg.release_duration),
        ]
        self.spans: List[PhaseSpan] = []
        clock = 0.0
        for phase, duration in durations:
            self.spans.append(PhaseSpan(phase, clock, clock + duration))
            clock += duration
        self.total_duration = clock
        self._by_phase = {span.phase: span for span in self.spans}

        heights = [
            cfg.start_height,
            cfg.start_height,
            cfg.push_height,
            cfg.push_height,
            cfg.push_height,
            cfg.lift_height,
            cfg.lift_height,
        ]
        self._knot_t = np.array([0.0] + [s.end for s in self.spans])
        self._knot_h = np.array(heights)

    def span(self, phase: Phase) -> PhaseSpan:
        return self._by_phase[phase]

    def phase_at(self, t: float) -> Phase:
        if t < 0:
            raise DomainError(f"negative protocol time {t}")
        for span in self.spans:
            if t < span.end:
                return span.phase
        return Phase.DONE

    def height_at(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return np.interp(t, self._knot_t, self._knot_h)

    def height_rate(self, t: float) -> float:
        index = int(np.searchsorted(self._knot_t, t, side="right")) - 1
        if index < 0 or index >= len(self._knot_t) - 1:
            return 0.0
        dh = self._knot_h[index + 1] - self._knot_h[index]
        dt = self._knot_t[index + 1] - self._knot_t[index]
        return float(dh / dt) if dt > 0 else 0.0

    def vibration_window(self) -> Optional[Tuple[float, float]]:
        window = self.cfg.vibration_window
        if window is VibrationWindow.DURING_DESCENT:
            span = self.span(Phase.DESCEND)
        elif window is VibrationWindow.AFTER_PUSHDOWN:
            span = self.span(Phase.DWELL)
        else:
            return None
        return span.start, span.end

    def oscillation(self, t: np.ndarray) -> np.ndarray:
        """Exciter displacement from the test waveform, mm."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        window = self.vibration_window()
        if self.waveform is None or window is None:
            return out
        start, end = window
        active = (t >= start) & (t < end)
        if not np.any(active):
            return out
        wf = self.waveform
        if self.cfg.waveform_timing is WaveformTiming.FIT:
            tau = (t[active] - start) * wf.total_duration / (end - start)
            playing = np.ones(tau.shape, dtype=bool)
        else:
            tau = t[active] - start
            playing = tau <= wf.total_duration
        values = np.zeros(tau.shape)
        values[playing] = sample_many(
            wf, tau[playing], self.reference_displacement
        )
        out[active] = values
        return out

    def conditioning(self, t: np.ndarray) -> np.ndarray:
        """Pre-grip settle shake and release pulses, mm."""
        cfg = self.cfg
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pre = self.span(Phase.PRE_GRIP)
        active = (t >= pre.start) & (t < pre.end)
        out[active] = cfg.pre_grip_amplitude * np.sin(
            2.0 * np.pi * cfg.pre_grip_freq * (t[active] - pre.start)
        )
        release = self.span(Phase.RELEASE)
        active = (t >= release.start) & (t < release.end)
        tau = np.mod(t[active] - release.start, cfg.release_pulse_duration)
        amplitude = volume_to_amplitude(
            cfg.release_volume, self.reference_displacement
        )
        out[active] = amplitude * np.sin(
            2.0 * np.pi * cfg.release_vibration_freq * tau
        )
        return out

    def pressure(self, t: np.ndarray) -> np.ndarray:
        """Vacuum level in kPa: ramps from the start of Vacuum, off at Release."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.vacuum is None:
            return out
        start = self.span(Phase.VACUUM).start
        stop = self.span(Phase.RELEASE).start
        active = (t >= start) & (t < stop)
        if self.vacuum.ramp_time > 0:
            ramp = np.minimum(1.0, (t[active] - start) / self.vacuum.ramp_time)
        else:
            ramp = np.ones(int(active.sum()))
        out[active] = self.vacuum.delta_p * ramp
        return out

    def state_at(self, t: float, step_index: int = 0) -> RigState:
        times = np.array([t])
        return RigState(
            phase=self.phase_at(t),
            mount_height=float(self.height_at(t)),
            mount_oscillation_offset=float(self.oscillation(times)[0]),
            elapsed=t,
            step_index=step_index,
            conditioning_offset=float(self.conditioning(times)[0]),
            delta_p=float(self.pressure(times)[0]),
        )


def advance(
    state: RigState,
    cfg: GripCycleConfig,
    dt: float,
    waveform: Optional[WaveformSpec] = None,
    vacuum: Optional[PressureState] = None,
    timeline: Optional[ProtocolTimeline] = None,
) -> RigState:
    """
    Next rig state, dt later. Elapsed time is step_index * dt so long runs
    do not accumulate rounding.
    """
    if dt <= 0:
        raise DomainError("dt must be positive")
    if timeline is None:
        timeline = ProtocolTimeline(cfg, waveform, vacuum)
    step_index = state.step_index + 1
    return timeline.state_at(step_index * dt, step_index)


@dataclass
class ForceTrace:
    """Load-cell series: push positive, pull negative."""

    sample_period: float
    t: np.ndarray
    f: np.ndarray
    phases: List[PhaseSpan] = field(default_factory=list)
    heights: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.t.shape != self.f.shape or self.t.ndim != 1:
            raise DomainError("trace time and force must be equal-length 1D")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.f))):
            raise DomainError("trace contains non-finite values")
        if self.t.size > 1 and np.any(np.diff(self.t) <= 0):
            raise DomainError("trace times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.t.shape[0])

    @property
    def entries(self) -> List[Tuple[float, float]]:
        return list(zip(self.t.tolist(), self.f.tolist()))

    def span(self, phase: Phase) -> Optional[PhaseSpan]:
        for span in self.phases:
            if span.phase is phase:
                return span
        return None

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write t_seconds,force_newtons; the phase log goes to a sidecar."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            path,
            np.column_stack([self.t, self.f]),
            delimiter=",",
            header="t_seconds,force_newtons",
            comments="",
            fmt="%.9g",
        )
        if self.phases:
            phase_path(path).write_text(
                json.dumps([s.to_dict() for s in self.phases], indent=2)
            )
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ForceTrace":
        path = Path(path)
        trace = cls.from_csv_text(path.read_text())
        sidecar = phase_path(path)
        if sidecar.exists():
            trace.phases = [
                PhaseSpan.from_dict(d) for d in json.loads(sidecar.read_text())
            ]
        return trace

    @classmethod
    def from_csv_text(cls, text: str) -> "ForceTrace":
        rows = [
            line.split(",")
            for line in text.strip().splitlines()
            if line.strip() and not line.startswith("t_seconds")
        ]
        if not rows:
            raise DomainError("empty trace")
        data = np.array(rows, dtype=float)
        t = data[:, 0]
        period = float(np.median(np.diff(t))) if t.size > 1 else 0.0
        return cls(sample_period=period, t=t, f=data[:, 1])


def phase_path(trace_path: Path) -> Path:
    return trace_path.with_suffix(".phases.json")


class _Recorder:
    """Block-averages per-step load into output samples."""

    def __init__(self):
        self.t: List[float] = []
        self.f: List[float] = []
        self.heights: List[float] = []
        self.offsets: List[float] = []

    def add(self, times, load, heights, offsets):
        self.t.append(float(times.mean()))
        self.f.append(float(load.mean()))
        self.heights.append(float(heights.mean()))
        self.offsets.append(float(offsets.mean()))


def _drive(
    world: GrainWorld,
    timeline: ProtocolTimeline,
    until: float,
    record: _Recorder,
    previous_mount: float,
) -> float:
    """Run the world through the timeline up to `until`, block by block."""
    dt = world.dt
    block = max(1, int(round(1.0 / (timeline.cfg.output_rate * dt))))
    total_steps = int(round(until / dt))
    k = world.step_index
    while k < total_steps:
        count = min(block, total_steps - k)
        times = (np.arange(k, k + count) + 1) * dt
        heights = timeline.height_at(times)
        offsets = timeline.oscillation(times)
        mount = heights + offsets + timeline.conditioning(times)
        velocity = np.diff(np.concatenate([[previous_mount], mount])) / dt
        phase = timeline.phase_at(float(times[0]) - dt)
        result = run_block(
            world,
            mount,
            velocity,
            timeline.pressure(times),
            dt=dt,
            phase=phase.value,
        )
        record.add(times, result.load, heights, offsets)
        previous_mount = float(mount[-1])
        k += count
    return previous_mount


def _tare(record: _Recorder, at: float) -> float:
    t = np.array(record.t)
    f = np.array(record.f)
    window = (t > at - TARE_WINDOW) & (t <= at)
    if not np.any(window):
        return 0.0
    return float(f[window].mean())


def run_grip_cycle(
    world: GrainWorld,
    cfg: GripCycleConfig,
    wf: Optional[WaveformSpec],
    vacuum: PressureState,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
    stop_after: Optional[Phase] = None,
) -> ForceTrace:
    """
    Run one grip test on `world` (mutated in place) and return the tared
    load-cell trace with its phase log and mount kinematics.

    Args:
        world: settled world whose mount sits at cfg.start_height
        cfg: protocol timings, heights and speeds
        wf: excitation waveform played in the vibration window, or None
        vacuum: pressure plateau and ramp applied from the Vacuum phase
        reference_displacement: exciter displacement at 100 % volume, mm
        stop_after: end the run when this phase completes

    Raises:
        ConfigurationError: the world's mount is not at the start height
        NumericalBlowupError: a non-finite state, tagged with the phase
    """
    if abs(world.mount_y - cfg.start_height) > 1e-6:
        raise ConfigurationError(
            f"world mount at {world.mount_y} mm, cycle starts at "
            f"{cfg.start_height} mm"
        )
    timeline = ProtocolTimeline(cfg, wf, vacuum, reference_displacement)
    world.reset_clock()
    spans = list(timeline.spans)
    if stop_after is not None and stop_after is not Phase.DONE:
        spans = spans[: PHASE_ORDER.index(stop_after) + 1]
    until = spans[-1].end

    record = _Recorder()
    pre_end = timeline.span(Phase.PRE_GRIP).end
    mount = _drive(world, timeline, pre_end, record, world.mount_y)
    tare = _tare(record, pre_end)
    _drive(world, timeline, until, record, mount)
    logger.debug(
        "Grip cycle done: %.3f s simulated, tare %.4f N, max overlap %.3f",
        world.time,
        tare,
        world.max_overlap_ratio,
    )
    return ForceTrace(
        sample_period=1.0 / cfg.output_rate,
        t=np.array(record.t),
        f=np.array(record.f) - tare,
        phases=spans,
        heights=np.array(record.heights),
        offsets=np.array(record.offsets),
    )


class _RelaxationTimeline(ProtocolTimeline):
    """Descend, hold, optional 200 Hz tone, hold. No vacuum."""

    def __init__(
        self,
        cfg: GripCycleConfig,
        relax: RelaxationConfig,
        vibrate: bool,
        reference_displacement: float,
    ):
        super().__init__(cfg, None, None, reference_displacement)
        self.relax = relax
        self.vibrate = vibrate
        pre = self.span(Phase.PRE_GRIP)
        descend = self.span(Phase.DESCEND)
        hold0 = descend.end + relax.pre_hold
        hold1 = hold0 + relax.vibration_duration
        hold2 = hold1 + relax.post_hold
        self.spans = [
            pre,
            descend,
            PhaseSpan(Phase.DWELL, descend.end, hold0, "pre_hold"),
            PhaseSpan(Phase.DWELL, hold0, hold1, "vibration"),
            PhaseSpan(Phase.DWELL, hold1, hold2, "post_hold"),
        ]
        self.total_duration = hold2
        self._knot_t = np.array([0.0, pre.end, descend.end, hold2])
        self._knot_h = np.array(
            [cfg.start_height, cfg.start_height, cfg.push_height, cfg.push_height]
        )
        self.vibration_span = (hold0, hold1)

    def oscillation(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if not self.vibrate:
            return out
        start, end = self.vibration_span
        active = (t >= start) & (t < end)
        amplitude = volume_to_amplitude(
            self.relax.vibration_volume, self.reference_displacement
        )
        out[active] = amplitude * np.sin(
            2.0 * np.pi * self.relax.vibration_freq * (t[active] - start)
        )
        return out

    def conditioning(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pre = self.span(Phase.PRE_GRIP)
        active = (t >= pre.start) & (t < pre.end)
        out[active] = self.cfg.pre_grip_amplitude * np.sin(
            2.0 * np.pi * self.cfg.pre_grip_freq * (t[active] - pre.start)
        )
        return out

    def pressure(self, t: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(t, dtype=float))


def relaxation_protocol(
    world: GrainWorld,
    push_height: float,
    vibrate: bool,
    cfg: Optional[GripCycleConfig] = None,
    relax: Optional[RelaxationConfig] = None,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
) -> ForceTrace:
    """
    Stress-relaxation test: descend to push_height, hold, optionally play a
    tone, hold again. The vacuum stays off. Both arms share the same
    timings so their residual forces are comparable.
    """
    low, high = RELAXATION_HEIGHT_RANGE
    if not low <= push_height <= high:
        raise DomainError(
            f"push_height {push_height} outside [{low}, {high}] mm"
        )
    cfg = cfg or GripCycleConfig()
    relax = relax or RelaxationConfig()
    lift = max(cfg.lift_height, push_height + 1.0)
    start = max(cfg.start_height, lift + 1.0)
    cfg = cfg.with_overrides(
        push_height=push_height, lift_height=lift, start_height=start
    )
    if abs(world.mount_y - cfg.start_height) > 1e-6:
        raise ConfigurationError(
            f"world mount at {world.mount_y} mm, protocol starts at "
            f"{cfg.start_height} mm"
        )
    timeline = _RelaxationTimeline(cfg, relax, vibrate, reference_displacement)
    world.reset_clock()
    record = _Recorder()
    pre_end = timeline.span(Phase.PRE_GRIP).end
    mount = _drive(world, timeline, pre_end, record, world.mount_y)
    tare = _tare(record, pre_end)
    _drive(world, timeline, timeline.total_duration, record, mount)
    return ForceTrace(
        sample_period=1.0 / cfg.output_rate,
        t=np.array(record.t),
        f=np.array(record.f) - tare,
        phases=list(timeline.spans),
        heights=np.array(record.heights),
        offsets=np.array(record.offsets),
    )


@dataclass(frozen=True)
class RelaxationResult:
    push_height: float
    vibrated: bool
    residual_before: float
    residual_after: float

    @property
    def reduction(self) -> float:
        return self.residual_before - self.residual_after

    @property
    def percent_reduction(self) -> float:
        if self.residual_before <= 0:
            return 0.0
        return 100.0 * self.reduction / self.residual_before


def relaxation_residuals(
    trace: ForceTrace,
    push_height: float,
    vibrated: bool,
    window: float = 0.2,
) -> RelaxationResult:
    """Mean force over the last `window` s of the pre and post holds."""

    def tail_mean(label: str) -> float:
        span = next(s for s in trace.phases if s.label == label)
        mask = (trace.t > span.end - window) & (trace.t <= span.end)
        return float(trace.f[mask].mean()) if np.any(mask) else 0.0

    return RelaxationResult(
        push_height=push_height,
        vibrated=vibrated,
        residual_before=tail_mean("pre_hold"),
        residual_after=tail_mean("post_hold"),
    )


def first_contact_height(world: GrainWorld) -> float:
    """Mount height at which the hanging gripper first touches the object."""
    if world.membrane is None:
        return -math.inf
    bottom = float(world.membrane.positions[:, 1].min())
    clearance = bottom - world.membrane.thickness - world.geometry.object_top
    return world.mount_y - clearance


@dataclass(frozen=True)
class ContactArea:
    grains: int
    membrane_length: float


def object_contact_count(
    world: GrainWorld, tolerance: float = 0.1
) -> ContactArea:
    """
    Grains pressing the membrane onto the object, and the length of
    membrane lying on the object surface.
    """
    geo = world.geometry
    if not geo.object_enabled:
        return ContactArea(0, 0.0)
    cx, cy = geo.object_center
    radius = geo.object_radius
    thickness = world.membrane.thickness if world.membrane is not None else 0.0
    gap = (
        np.hypot(world.positions[:, 0] - cx, world.positions[:, 1] - cy)
        - radius
        - world.radii
    )
    grains = int(np.count_nonzero(gap <= 2.0 * thickness + tolerance))
    length = 0.0
    if world.membrane is not None:
        nodes = world.membrane.positions
        node_gap = np.hypot(nodes[:, 0] - cx, nodes[:, 1] - cy) - radius
        touching = node_gap <= thickness + tolerance
        both = touching & np.roll(touching, -1)
        length = float(world.membrane.edge_lengths()[both].sum())
    return ContactArea(grains=grains, membrane_length=length)


def indentation_stiffness(
    world: GrainWorld,
    vacuum: Optional[PressureState],
    depth: float = 1.0,
    probe_radius: float = 5.0,
    speed: float = 10.0,
    hold: float = 0.05,
    gap: float = 0.2,
) -> float:
    """
    Force per mm needed to push a probe disk `depth` mm into the bottom of
    the hanging gripper, with the vacuum applied (or not) beforehand.

    Works on a copy of the world with the target object removed.
    """
    if depth <= 0 or speed <= 0:
        raise DomainError("depth and speed must be positive")
    if world.membrane is None:
        raise DomainError("indentation needs a membrane")
    probe_world = world.copy()
    probe_world.geometry = replace(probe_world.geometry, object_enabled=False)
    probe_world.reset_clock()
    dt = probe_world.dt

    def drive(probe_y: np.ndarray, probe_vy: float):
        steps = probe_y.shape[0]
        times = probe_world.time + (np.arange(steps) + 1) * dt
        pressure = (
            vacuum.effective_many(times)
            if vacuum is not None
            else np.zeros(steps)
        )
        return run_block(
            probe_world,
            np.full(steps, probe_world.mount_y),
            delta_p=pressure,
            probe_y=probe_y,
            probe_vy=np.full(steps, probe_vy),
            phase="indent",
        )

    ramp = vacuum.ramp_time if vacuum is not None else 0.0
    drive(np.zeros(int(round((ramp + 0.1) / dt))), 0.0)

    nodes = probe_world.membrane.positions
    below = np.abs(nodes[:, 0]) <= probe_radius
    bottom = float(nodes[below, 1].min() if np.any(below) else nodes[:, 1].min())
    start_y = bottom - probe_world.membrane.thickness - probe_radius - gap
    probe_world.probe = Probe(x=0.0, y=start_y, radius=probe_radius)

    travel = gap + depth
    steps = max(1, int(round(travel / speed / dt)))
    path = start_y + travel * (np.arange(steps) + 1) / steps
    drive(path, speed)
    held = drive(np.full(max(2, int(round(hold / dt))), path[-1]), 0.0)
    tail = held.probe_load[held.probe_load.shape[0] // 2:]
    return float(tail.mean()) / depth
