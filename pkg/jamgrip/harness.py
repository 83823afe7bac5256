"""
Experiment orchestration: condition tables, randomized trial cycles over
gripper batches, incremental result persistence and summaries.

A batch stands for one physical balloon: every trial of a batch starts
from the same settled pack, built from a batch seed with its own jitter on
grain contact and membrane stiffness. Trials within a cycle run each
condition exactly once, in a seeded random order.
"""

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dem_core import GrainWorld, SimConfig, build_world
from .errors import ConfigurationError, DomainError, NumericalBlowupError
from .membrane import PressureState
from .metrics import extract_metrics
from .rig import (
    GripCycleConfig,
    RelaxationConfig,
    relaxation_protocol,
    relaxation_residuals,
    run_grip_cycle,
)
from .stats import ComparisonMatrix, pairwise_matrix
from .waveform import DEFAULT_REFERENCE_DISPLACEMENT, WaveformSpec

logger = logging.getLogger(__name__)

# HeightRelaxation trials reuse the grip columns: push_force_n holds the
# residual force after the vibration window (post-hold), holding_force_n the
# residual before it (pre-hold) and interlock_n stays empty.
RECORD_COLUMNS = [
    "plan",
    "condition_id",
    "batch_id",
    "cycle",
    "seed",
    "push_force_n",
    "holding_force_n",
    "interlock_n",
    "valid",
    "trace_path",
    "wall_s",
]
RECORDS_FILE = "records.csv"
MAIN_PUSH_HEIGHT = 29.0

FREQUENCY_TONES = [10, 25, 50, 100, 150, 200, 300, 400, 500, 600, 700, 800]
FREQUENCY_CHIRPS = [
    (1, 100),
    (100, 1),
    (100, 200),
    (200, 100),
    (100, 400),
    (400, 100),
    (100, 800),
    (800, 100),
]
VOLUME_TONES = [0, 25, 50, 75, 100, 125, 150]
VOLUME_RAMPS = [
    (75, 150),
    (150, 75),
    (0, 150),
    (150, 0),
    (0, 75),
    (75, 0),
]
RELAXATION_HEIGHTS = list(range(27, 70))


class ExperimentKind(str, Enum):
    FREQ_TONE = "FreqTone"
    FREQ_SWEEP = "FreqSweep"
    FREQ_PULSE = "FreqPulse"
    VOL_TONE = "VolTone"
    VOL_SWEEP = "VolSweep"
    VOL_PULSE = "VolPulse"
    HEIGHT_RELAXATION = "HeightRelaxation"

    @property
    def batch_count(self) -> int:
        """Balloons used for the experiment in the study's table."""
        if self is ExperimentKind.FREQ_TONE:
            return 5
        if self is ExperimentKind.HEIGHT_RELAXATION:
            return 1
        return 3

    @property
    def is_relaxation(self) -> bool:
        return self is ExperimentKind.HEIGHT_RELAXATION


@dataclass(frozen=True)
class Condition:
    """One test condition: a waveform or a relaxation arm."""

    condition_id: str
    label: str
    waveform: Optional[WaveformSpec] = None
    relaxation_height: Optional[float] = None
    vibrate: bool = False
    cycle_overrides: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "condition_id": self.condition_id,
            "label": self.label,
            "waveform": (
                self.waveform.to_dict() if self.waveform is not None else None
            ),
            "relaxation_height": self.relaxation_height,
            "vibrate": self.vibrate,
            "cycle_overrides": dict(self.cycle_overrides),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Condition":
        waveform = data.get("waveform")
        return cls(
            condition_id=str(data["condition_id"]),
            label=str(data.get("label", data["condition_id"])),
            waveform=(
                WaveformSpec.from_dict(waveform) if waveform is not None else None
            ),
            relaxation_height=data.get("relaxation_height"),
            vibrate=bool(data.get("vibrate", False)),
            cycle_overrides=dict(data.get("cycle_overrides", {})),
        )


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    kind: ExperimentKind
    conditions: Tuple[Condition, ...]
    replicates: int = 10
    batch_count: int = 3
    jitter: float = 0.1
    rng_seed: int = 0
    output_dir: str = "results"
    sampled_per_condition: int = 20
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT
    sim: SimConfig = field(default_factory=SimConfig)
    grip_cycle: GripCycleConfig = field(default_factory=GripCycleConfig)
    relaxation: RelaxationConfig = field(default_factory=RelaxationConfig)
    vacuum: PressureState = field(default_factory=PressureState)
    metrics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", ExperimentKind(self.kind))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if not self.conditions:
            raise ConfigurationError("a plan needs at least one condition")
        if self.replicates < 1 or self.batch_count < 1:
            raise ConfigurationError("replicates and batch_count must be >= 1")
        if not 0.0 <= self.jitter <= 0.1 + 1e-12:
            raise ConfigurationError("batch jitter must be within +/-10%")
        ids = [c.condition_id for c in self.conditions]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("condition ids must be unique")

    @property
    def trial_count(self) -> int:
        return len(self.conditions) * self.replicates * self.batch_count

    def condition(self, condition_id: str) -> Condition:
        for condition in self.conditions:
            if condition.condition_id == condition_id:
                return condition
        raise DomainError(f"condition {condition_id!r} not in plan {self.name}")

    def condition_index(self, condition_id: str) -> int:
        return [c.condition_id for c in self.conditions].index(
            self.condition(condition_id).condition_id
        )

    @property
    def directory(self) -> Path:
        return Path(self.output_dir) / self.name

    @property
    def records_path(self) -> Path:
        return self.directory / RECORDS_FILE

    def with_overrides(self, **overrides: Any) -> "ExperimentPlan":
        return replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind.value,
            "conditions": [c.to_dict() for c in self.conditions],
            "replicates": self.replicates,
            "batch_count": self.batch_count,
            "jitter": self.jitter,
            "rng_seed": self.rng_seed,
            "output_dir": str(self.output_dir),
            "sampled_per_condition": self.sampled_per_condition,
            "reference_displacement": self.reference_displacement,
            "sim": self.sim.to_dict(),
            "grip_cycle": self.grip_cycle.to_dict(),
            "relaxation": asdict(self.relaxation),
            "vacuum": asdict(self.vacuum),
            "metrics": dict(self.metrics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentPlan":
        return cls(
            name=str(data["name"]),
            kind=ExperimentKind(data["kind"]),
            conditions=tuple(
                Condition.from_dict(c) for c in data["conditions"]
            ),
            replicates=int(data.get("replicates", 10)),
            batch_count=int(data.get("batch_count", 3)),
            jitter=float(data.get("jitter", 0.1)),
            rng_seed=int(data.get("rng_seed", 0)),
            output_dir=str(data.get("output_dir", "results")),
            sampled_per_condition=int(data.get("sampled_per_condition", 20)),
            reference_displacement=float(
                data.get(
                    "reference_displacement", DEFAULT_REFERENCE_DISPLACEMENT
                )
            ),
            sim=SimConfig.from_dict(data.get("sim", {})),
            grip_cycle=GripCycleConfig.from_dict(data.get("grip_cycle", {})),
            relaxation=RelaxationConfig.from_dict(data.get("relaxation", {})),
            vacuum=PressureState.from_dict(data.get("vacuum", {})),
            metrics=dict(data.get("metrics", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TrialRecord:
    """
    One row of records.csv. For relaxation trials push_force_n is the
    residual force after vibration and holding_force_n the residual before.
    """

    plan: str
    condition_id: str
    batch_id: int
    cycle: int
    seed: int
    push_force_n: float
    holding_force_n: float
    interlock_n: Optional[float]
    valid: bool
    trace_path: str
    wall_s: float

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.condition_id, self.batch_id, self.cycle)

    def to_row(self) -> List[str]:
        return [
            self.plan,
            self.condition_id,
            str(self.batch_id),
            str(self.cycle),
            str(self.seed),
            _fmt(self.push_force_n),
            _fmt(self.holding_force_n),
            _fmt(self.interlock_n),
            "1" if self.valid else "0",
            self.trace_path,
            f"{self.wall_s:.3f}",
        ]

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "TrialRecord":
        return cls(
            plan=row["plan"],
            condition_id=row["condition_id"],
            batch_id=int(row["batch_id"]),
            cycle=int(row["cycle"]),
            seed=int(row["seed"]),
            push_force_n=_parse(row["push_force_n"], math.nan),
            holding_force_n=_parse(row["holding_force_n"], math.nan),
            interlock_n=_parse(row["interlock_n"], None),
            valid=row["valid"].strip() in ("1", "true", "True"),
            trace_path=row["trace_path"],
            wall_s=float(row["wall_s"] or 0.0),
        )

    def comparable(self) -> Tuple[Any, ...]:
        """Everything except wall time, for reproducibility checks."""
        return tuple(self.to_row()[:-1])


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.9g}"


def _parse(text: str, missing):
    text = (text or "").strip()
    return float(text) if text else missing


# -- plan construction -------------------------------------------------------


def _tone_conditions(levels: Sequence[float]) -> List[Condition]:
    return [
        Condition(
            condition_id=f"tone-{f:g}Hz",
            label=f"{f:g}Hz",
            waveform=WaveformSpec.tone(float(f), 150.0),
        )
        for f in levels
    ]


def _chirp_conditions(
    levels: Sequence[Tuple[float, float]], pulsed: bool
) -> List[Condition]:
    prefix = "pulse" if pulsed else "sweep"
    out = []
    for a, b in levels:
        spec = (
            WaveformSpec.pulse_train(float(a), float(b))
            if pulsed
            else WaveformSpec.sweep(float(a), float(b))
        )
        out.append(
            Condition(
                condition_id=f"{prefix}-{a:g}-{b:g}Hz",
                label=f"{a:g}-{b:g}Hz",
                waveform=spec,
            )
        )
    return out


def _volume_conditions(levels: Sequence[float]) -> List[Condition]:
    return [
        Condition(
            condition_id=f"vol-{v:g}pct",
            label=f"{v:g}%",
            waveform=WaveformSpec.tone(200.0, float(v)),
        )
        for v in levels
    ]


def _ramp_conditions(
    levels: Sequence[Tuple[float, float]], pulsed: bool
) -> List[Condition]:
    prefix = "volpulse" if pulsed else "volsweep"
    out = []
    for a, b in levels:
        spec = (
            WaveformSpec.volume_pulse_train(float(a), float(b))
            if pulsed
            else WaveformSpec.volume_sweep(float(a), float(b))
        )
        out.append(
            Condition(
                condition_id=f"{prefix}-{a:g}-{b:g}pct",
                label=f"{a:g}-{b:g}%",
                waveform=spec,
            )
        )
    return out


def _relaxation_conditions(heights: Sequence[float]) -> List[Condition]:
    out = []
    for h in heights:
        for vibrate in (True, False):
            arm = "vib" if vibrate else "silent"
            out.append(
                Condition(
                    condition_id=f"h{h:g}-{arm}",
                    label=f"{h:g}mm {arm}",
                    relaxation_height=float(h),
                    vibrate=vibrate,
                )
            )
    return out


def default_levels(kind: ExperimentKind) -> List[Any]:
    return {
        ExperimentKind.FREQ_TONE: FREQUENCY_TONES,
        ExperimentKind.FREQ_SWEEP: FREQUENCY_CHIRPS,
        ExperimentKind.FREQ_PULSE: FREQUENCY_CHIRPS,
        ExperimentKind.VOL_TONE: VOLUME_TONES,
        ExperimentKind.VOL_SWEEP: VOLUME_RAMPS,
        ExperimentKind.VOL_PULSE: VOLUME_RAMPS,
        ExperimentKind.HEIGHT_RELAXATION: RELAXATION_HEIGHTS,
    }[kind]


def _conditions(kind: ExperimentKind, levels: Sequence[Any]) -> List[Condition]:
    if kind is ExperimentKind.FREQ_TONE:
        return _tone_conditions(levels)
    if kind is ExperimentKind.FREQ_SWEEP:
        return _chirp_conditions(levels, pulsed=False)
    if kind is ExperimentKind.FREQ_PULSE:
        return _chirp_conditions(levels, pulsed=True)
    if kind is ExperimentKind.VOL_TONE:
        return _volume_conditions(levels)
    if kind is ExperimentKind.VOL_SWEEP:
        return _ramp_conditions(levels, pulsed=False)
    if kind is ExperimentKind.VOL_PULSE:
        return _ramp_conditions(levels, pulsed=True)
    return _relaxation_conditions(levels)


def build_plan(
    experiment: Union[ExperimentKind, str],
    levels: Optional[Sequence[Any]] = None,
    replicates: Optional[int] = None,
    batch_count: Optional[int] = None,
    rng_seed: int = 0,
    output_dir: Optional[str] = None,
    cycle_overrides: Optional[Dict[str, Any]] = None,
    sim_overrides: Optional[Dict[str, Any]] = None,
    loader=None,
) -> ExperimentPlan:
    """
    Expand an experiment into its condition table.

    Args:
        experiment: one of the ExperimentKind values
        levels: subset of the experiment's levels for mini-plans
            (frequencies, (start, end) pairs, volumes or heights)
        replicates: cycles per batch; defaults to the harness config
            (1 for the height experiment)
        batch_count: batches ("balloons"); defaults to the study's count
        cycle_overrides: GripCycleConfig fields applied to every trial
        sim_overrides: SimConfig fields applied to every batch world
        loader: ConfigLoader supplying defaults; the global one if None

    Returns:
        ExperimentPlan whose expansion depends only on the arguments
    """
    kind = ExperimentKind(experiment)
    if loader is None:
        from config_loader import get_config_loader

        loader = get_config_loader()
    harness = loader.get_harness_config()

    chosen = list(levels) if levels is not None else default_levels(kind)
    if not chosen:
        raise DomainError("a plan needs at least one level")
    if isinstance(chosen[0], (list, tuple)):
        chosen = [tuple(level) for level in chosen]
    conditions = _conditions(kind, chosen)

    grip = GripCycleConfig.from_config(loader)
    if not kind.is_relaxation:
        grip = grip.with_overrides(push_height=MAIN_PUSH_HEIGHT)
    if cycle_overrides:
        grip = grip.with_overrides(**cycle_overrides)
    sim = SimConfig.from_config(loader)
    if sim_overrides:
        sim = sim.with_overrides(**sim_overrides)

    if replicates is None:
        replicates = 1 if kind.is_relaxation else int(harness["replicates"])
    plan = ExperimentPlan(
        name=kind.value,
        kind=kind,
        conditions=tuple(conditions),
        replicates=int(replicates),
        batch_count=int(batch_count or kind.batch_count),
        jitter=float(harness.get("jitter", 0.1)),
        rng_seed=int(rng_seed),
        output_dir=str(output_dir or harness["output_dir"]),
        sampled_per_condition=int(harness.get("sampled_per_condition", 20)),
        reference_displacement=float(
            loader.get_waveform_config().get(
                "reference_displacement", DEFAULT_REFERENCE_DISPLACEMENT
            )
        ),
        sim=sim,
        grip_cycle=grip,
        relaxation=RelaxationConfig.from_config(loader),
        vacuum=PressureState.from_dict(loader.get_vacuum_config()),
        metrics=dict(loader.get_metrics_config()),
    )
    logger.info(
        "Built plan %s: %d conditions x %d replicates x %d batches",
        plan.name,
        len(plan.conditions),
        plan.replicates,
        plan.batch_count,
    )
    return plan


# -- seeds and schedule ------------------------------------------------------


def trial_seed(plan_seed: int, batch: int, cycle: int, condition: int) -> int:
    sequence = np.random.SeedSequence([plan_seed, batch, cycle, condition])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def cycle_order(plan: ExperimentPlan, batch: int, cycle: int) -> List[int]:
    """Condition indices for one cycle; each appears exactly once."""
    rng = np.random.default_rng(
        np.random.SeedSequence([plan.rng_seed, batch, cycle, 0x5EED])
    )
    return [int(i) for i in rng.permutation(len(plan.conditions))]


@dataclass(frozen=True)
class TrialJob:
    batch: int
    cycle: int
    condition_index: int
    condition_id: str
    seed: int


def schedule(plan: ExperimentPlan) -> List[TrialJob]:
    jobs = []
    for batch in range(plan.batch_count):
        for cycle in range(plan.replicates):
            for index in cycle_order(plan, batch, cycle):
                jobs.append(
                    TrialJob(
                        batch=batch,
                        cycle=cycle,
                        condition_index=index,
                        condition_id=plan.conditions[index].condition_id,
                        seed=trial_seed(plan.rng_seed, batch, cycle, index),
                    )
                )
    return jobs


# -- batch worlds ------------------------------------------------------------


def batch_config(plan: ExperimentPlan, batch: int) -> SimConfig:
    """SimConfig of one batch: own pack seed, jittered stiffness."""
    rng = np.random.default_rng(
        np.random.SeedSequence([plan.rng_seed, batch])
    )
    factor = 1.0 + plan.jitter * rng.uniform(-1.0, 1.0)
    pack_seed = int(rng.integers(0, 2**31 - 1))
    sim = plan.sim
    return sim.with_overrides(
        rng_seed=pack_seed,
        contact=sim.contact.scaled(stiffness=factor),
        membrane=sim.membrane.scaled(factor),
        mount_height=plan.grip_cycle.start_height,
    )


_BATCH_WORLDS: Dict[str, GrainWorld] = {}


def batch_world(plan: ExperimentPlan, batch: int) -> GrainWorld:
    """Settled pack of a batch, cached per process."""
    config = batch_config(plan, batch)
    key = json.dumps(config.to_dict(), sort_keys=True)
    world = _BATCH_WORLDS.get(key)
    if world is None:
        if len(_BATCH_WORLDS) >= 4:
            _BATCH_WORLDS.clear()
        logger.info("Building world for plan %s batch %d", plan.name, batch)
        world = build_world(config)
        _BATCH_WORLDS[key] = world
    return world


def clear_batch_cache() -> None:
    _BATCH_WORLDS.clear()


# -- trial execution ---------------------------------------------------------


def trace_relpath(job: TrialJob) -> str:
    return f"traces/b{job.batch}_c{job.cycle}_{job.condition_id}.csv"


def execute_trial(plan: ExperimentPlan, job: TrialJob) -> TrialRecord:
    """
    Run one trial and persist its trace. Numerical failures give an
    invalid record instead of an exception.
    """
    started = time.perf_counter()
    condition = plan.conditions[job.condition_index]
    relpath = trace_relpath(job)
    push = math.nan
    holding = math.nan
    interlock = None
    valid = True
    try:
        world = batch_world(plan, job.batch).copy()
        rng = np.random.default_rng(job.seed)
        noise = plan.sim.trial_velocity_noise
        if noise > 0:
            world.velocities += rng.normal(0.0, noise, world.velocities.shape)
        if condition.relaxation_height is not None:
            trace = relaxation_protocol(
                world,
                condition.relaxation_height,
                condition.vibrate,
                plan.grip_cycle,
                plan.relaxation,
                plan.reference_displacement,
            )
            result = relaxation_residuals(
                trace,
                condition.relaxation_height,
                condition.vibrate,
                plan.relaxation.residual_window,
            )
            push = result.residual_after
            holding = result.residual_before
        else:
            cfg = plan.grip_cycle
            if condition.cycle_overrides:
                cfg = cfg.with_overrides(**condition.cycle_overrides)
            trace = run_grip_cycle(
                world,
                cfg,
                condition.waveform,
                plan.vacuum,
                plan.reference_displacement,
            )
            metrics = extract_metrics(trace, **plan.metrics)
            push = metrics.push_force
            holding = metrics.holding_force
            interlock = metrics.interlock_force
        trace.to_csv(plan.directory / relpath)
    except NumericalBlowupError as e:
        valid = False
        relpath = ""
        logger.warning(
            "Trial %s batch %d cycle %d invalid: %s",
            job.condition_id,
            job.batch,
            job.cycle,
            e,
        )
    record = TrialRecord(
        plan=plan.name,
        condition_id=job.condition_id,
        batch_id=job.batch,
        cycle=job.cycle,
        seed=job.seed,
        push_force_n=push,
        holding_force_n=holding,
        interlock_n=interlock,
        valid=valid,
        trace_path=relpath,
        wall_s=time.perf_counter() - started,
    )
    logger.info(
        "Trial %s b%d c%d done: push %.3f N, hold %.3f N, valid %s",
        job.condition_id,
        job.batch,
        job.cycle,
        push,
        holding,
        valid,
    )
    return record


def run_trial(
    plan: ExperimentPlan, condition_id: str, batch_id: int, cycle: int, seed: int
) -> TrialRecord:
    """Re-run a single trial from the identifiers stored in its record."""
    index = plan.condition_index(condition_id)
    job = TrialJob(batch_id, cycle, index, condition_id, int(seed))
    return execute_trial(plan, job)


_WORKER_PLAN: Optional[ExperimentPlan] = None


def _init_worker(plan: ExperimentPlan) -> None:
    global _WORKER_PLAN
    _WORKER_PLAN = plan


def _worker_trial(job: TrialJob) -> TrialRecord:
    assert _WORKER_PLAN is not None
    return execute_trial(_WORKER_PLAN, job)


# -- persistence -------------------------------------------------------------


def _complete_length(data: bytes) -> int:
    """Byte length of the leading run of newline-terminated rows."""
    if not data or data.endswith(b"\n"):
        return len(data)
    return data.rfind(b"\n") + 1


def _truncate(path: Path, length: int) -> None:
    with open(path, "r+b") as f:
        f.truncate(length)
        f.flush()
        os.fsync(f.fileno())


class RecordWriter:
    """
    Append-only CSV writer; every row is flushed and synced. A partial
    last row left by an interrupted write is cut off before appending.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if self.path.exists():
            data = self.path.read_bytes()
            complete = _complete_length(data)
            if complete != len(data):
                logger.warning(
                    "Cutting a partial row off the end of %s", self.path
                )
                _truncate(self.path, complete)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._file = open(self.path, "a", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        if fresh:
            self._writer.writerow(RECORD_COLUMNS)
            self._sync()

    def _sync(self) -> None:
        self._file.flush()
        os.fsync(self._file.fileno())

    def write(self, record: TrialRecord) -> None:
        self._writer.writerow(record.to_row())
        self._sync()

    def close(self) -> None:
        self._file.close()

    def __enter__(self) -> "RecordWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_records(
    records: Iterable[TrialRecord], path: Union[str, Path]
) -> Path:
    path = Path(path)
    if path.exists():
        path.unlink()
    with RecordWriter(path) as writer:
        for record in records:
            writer.write(record)
    return path


def read_records(
    path: Union[str, Path], repair: bool = False
) -> List[TrialRecord]:
    """
    Trial records from a CSV file.

    The last row is dropped when it has no line end or is short of fields,
    which is what a crash in the middle of a write leaves behind. With
    `repair` the file is also truncated back to the last complete row.

    Raises:
        DomainError: wrong header, or a malformed row before the last one
    """
    path = Path(path)
    if not path.exists():
        return []
    data = path.read_bytes()
    complete = _complete_length(data)
    lines = data[:complete].decode("utf-8").splitlines(keepends=True)
    if lines:
        last = next(csv.reader([lines[-1]]), [])
        if len(lines) > 1 and len(last) != len(RECORD_COLUMNS):
            complete -= len(lines.pop().encode("utf-8"))
    if complete != len(data):
        logger.warning("Dropping a partial last row of %s", path)
        if repair:
            _truncate(path, complete)
    if not lines:
        return []
    header = next(csv.reader([lines[0]]), [])
    if header != RECORD_COLUMNS:
        raise DomainError(f"{path} does not have the record columns")
    records: List[TrialRecord] = []
    for number, line in enumerate(lines[1:], start=2):
        fields = next(csv.reader([line]), [])
        if not fields:
            continue
        if len(fields) != len(RECORD_COLUMNS):
            raise DomainError(
                f"{path} line {number}: expected {len(RECORD_COLUMNS)} "
                f"fields, found {len(fields)}"
            )
        try:
            records.append(
                TrialRecord.from_row(dict(zip(RECORD_COLUMNS, fields)))
            )
        except ValueError as e:
            raise DomainError(
                f"{path} line {number}: malformed record ({e})"
            ) from e
    return records


def run_plan(
    plan: ExperimentPlan,
    workers: Optional[int] = None,
    resume: bool = True,
) -> List[TrialRecord]:
    """
    Execute every trial of the plan and persist records incrementally.

    Records are written in schedule order by a single writer whatever the
    worker count. With `resume`, trials already in the records file are
    kept and not re-run.
    """
    if workers is None:
        from config_loader import get_harness_config

        workers = int(get_harness_config().get("workers", 1))
    workers = max(1, int(workers))

    plan.directory.mkdir(parents=True, exist_ok=True)
    (plan.directory / "plan.json").write_text(plan.to_json())
    existing: Dict[Tuple[str, int, int], TrialRecord] = {}
    if resume:
        existing = {
            r.key: r for r in read_records(plan.records_path, repair=True)
        }
    elif plan.records_path.exists():
        plan.records_path.unlink()

    jobs = schedule(plan)
    pending = [
        job
        for job in jobs
        if (job.condition_id, job.batch, job.cycle) not in existing
    ]
    logger.info(
        "Running plan %s: %d trials, %d already recorded, %d workers",
        plan.name,
        len(jobs),
        len(jobs) - len(pending),
        workers,
    )

    fresh: Dict[Tuple[str, int, int], TrialRecord] = {}
    with RecordWriter(plan.records_path) as writer:
        if workers == 1 or len(pending) <= 1:
            for job in pending:
                record = execute_trial(plan, job)
                writer.write(record)
                fresh[record.key] = record
        else:
            with Pool(
                workers, initializer=_init_worker, initargs=(plan,)
            ) as pool:
                for record in pool.imap(_worker_trial, pending):
                    writer.write(record)
                    fresh[record.key] = record

    merged = {**existing, **fresh}
    records = [
        merged[(job.condition_id, job.batch, job.cycle)] for job in jobs
    ]
    invalid = sum(1 for r in records if not r.valid)
    logger.info(
        "Plan %s finished: %d trials, %d invalid",
        plan.name,
        len(records),
        invalid,
    )
    return records


# -- summaries ---------------------------------------------------------------


@dataclass(frozen=True)
class Quartiles:
    q1: float
    median: float
    q3: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "Quartiles":
        if len(values) == 0:
            return cls(math.nan, math.nan, math.nan)
        q1, median, q3 = np.percentile(np.asarray(values, float), [25, 50, 75])
        return cls(float(q1), float(median), float(q3))


@dataclass(frozen=True)
class ConditionSummary:
    condition_id: str
    n: int
    push: Quartiles
    holding: Quartiles

    def to_dict(self) -> Dict[str, Any]:
        return {
            "condition_id": self.condition_id,
            "n": self.n,
            "push": asdict(self.push),
            "holding": asdict(self.holding),
        }


@dataclass(frozen=True)
class ValidityRow:
    condition_id: str
    planned: int
    executed: int
    valid: int
    sampled: int


@dataclass
class PlanSummary:
    conditions: List[ConditionSummary]
    matrix: ComparisonMatrix
    validity: List[ValidityRow]
    metric: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric,
            "conditions": [c.to_dict() for c in self.conditions],
            "matrix": self.matrix.to_dict(),
            "validity": [asdict(v) for v in self.validity],
        }

    def validity_csv(self) -> str:
        lines = ["condition_id,planned,executed,valid,sampled"]
        for v in self.validity:
            lines.append(
                f"{v.condition_id},{v.planned},{v.executed},{v.valid},"
                f"{v.sampled}"
            )
        return "\n".join(lines) + "\n"


def condition_order(
    records: Sequence[TrialRecord], plan: Optional[ExperimentPlan] = None
) -> List[str]:
    if plan is not None:
        return [c.condition_id for c in plan.conditions]
    order: List[str] = []
    for record in records:
        if record.condition_id not in order:
            order.append(record.condition_id)
    return order


def sample_records(
    records: Sequence[TrialRecord],
    per_condition: int,
    seed: int = 0,
    plan: Optional[ExperimentPlan] = None,
) -> Dict[str, List[TrialRecord]]:
    """Valid records per condition, down-sampled to `per_condition`."""
    rng = np.random.default_rng(seed)
    out: Dict[str, List[TrialRecord]] = {}
    for condition_id in condition_order(records, plan):
        valid = [
            r for r in records if r.condition_id == condition_id and r.valid
        ]
        if per_condition > 0 and len(valid) > per_condition:
            keep = np.sort(
                rng.choice(len(valid), size=per_condition, replace=False)
            )
            valid = [valid[i] for i in keep]
        out[condition_id] = valid
    return out


def summarize(
    records: Sequence[TrialRecord],
    plan: Optional[ExperimentPlan] = None,
    metric: str = "holding_force",
    alpha: float = 0.05,
    correction: str = "none",
    sampled_per_condition: Optional[int] = None,
    seed: int = 0,
) -> PlanSummary:
    """
    Per-condition medians and quartiles plus the pairwise comparison of
    `metric` ("holding_force" or "push_force") between conditions.
    """
    if not records:
        raise DomainError("nothing to summarize")
    if metric not in ("holding_force", "push_force"):
        raise DomainError(f"unknown metric {metric!r}")
    if sampled_per_condition is None:
        sampled_per_condition = (
            plan.sampled_per_condition if plan is not None else 0
        )
    sampled = sample_records(records, sampled_per_condition, seed, plan)

    summaries = []
    validity = []
    groups: Dict[str, List[float]] = {}
    for condition_id, chosen in sampled.items():
        executed = [r for r in records if r.condition_id == condition_id]
        planned = (
            plan.replicates * plan.batch_count
            if plan is not None
            else len(executed)
        )
        validity.append(
            ValidityRow(
                condition_id=condition_id,
                planned=planned,
                executed=len(executed),
                valid=sum(1 for r in executed if r.valid),
                sampled=len(chosen),
            )
        )
        push = [r.push_force_n for r in chosen]
        hold = [r.holding_force_n for r in chosen]
        summaries.append(
            ConditionSummary(
                condition_id, len(chosen), Quartiles.of(push), Quartiles.of(hold)
            )
        )
        if chosen:
            groups[condition_id] = push if metric == "push_force" else hold

    if len(groups) >= 2:
        matrix = pairwise_matrix(groups, alpha=alpha, correction=correction)
    else:
        matrix = ComparisonMatrix.empty(
            list(groups), [len(v) for v in groups.values()], alpha, correction
        )
    return PlanSummary(summaries, matrix, validity, metric)


def write_summary(summary: PlanSummary, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "summary.json").write_text(
        json.dumps(summary.to_dict(), indent=2, default=_json_default)
    )
    summary.matrix.to_csv(directory / f"comparisons_{summary.metric}.csv")
    (directory / "validity.csv").write_text(summary.validity_csv())
    return directory


def _json_default(value: Any) -> Any:
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")
