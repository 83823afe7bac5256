"""
Excitation waveforms fed to the exciter.

Covers constant tones, single linear chirps ("sweeps"), trains of short
chirps ("pulses") and amplitude ramps at a fixed frequency. Volume is the
rig's percent control and maps linearly to exciter plate displacement.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_DISPLACEMENT = 0.5  # mm at 100 %
MAX_VOLUME = 200.0
_PERIOD_TOLERANCE = 1e-9


class WaveformKind(str, Enum):
    TONE = "Tone"
    SWEEP = "Sweep"
    PULSE_TRAIN = "PulseTrain"
    VOLUME_SWEEP = "VolumeSweep"
    VOLUME_PULSE_TRAIN = "VolumePulseTrain"

    @property
    def segmented(self) -> bool:
        return self in (
            WaveformKind.PULSE_TRAIN,
            WaveformKind.VOLUME_PULSE_TRAIN,
        )


@dataclass(frozen=True)
class WaveformSpec:
    """Declarative excitation signal; frequencies in Hz, volumes in %."""

    kind: WaveformKind
    f_start: float
    f_end: float
    volume_start: float
    volume_end: float
    total_duration: float
    segment_duration: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveformKind(self.kind))
        if self.f_start <= 0 or self.f_end <= 0:
            raise DomainError("frequencies must be positive")
        for volume in (self.volume_start, self.volume_end):
            if not 0.0 <= volume <= MAX_VOLUME:
                raise DomainError(
                    f"volume {volume} outside [0, {MAX_VOLUME}] percent"
                )
        if self.total_duration <= 0:
            raise DomainError("total_duration must be positive")
        if self.kind.segmented:
            if self.segment_duration <= 0:
                raise DomainError("pulse trains need a segment_duration")
            ratio = self.total_duration / self.segment_duration
            if abs(ratio - round(ratio)) > _PERIOD_TOLERANCE * max(1, ratio):
                raise DomainError(
                    "total_duration must be an integer multiple of "
                    "segment_duration"
                )
        if self.kind is WaveformKind.TONE and (
            self.f_start != self.f_end
            or self.volume_start != self.volume_end
        ):
            raise DomainError("a Tone has a single frequency and volume")

    # -- constructors matching the condition table ---------------------

    @classmethod
    def tone(
        cls, frequency: float, volume: float, duration: float = 25.0
    ) -> "WaveformSpec":
        return cls(
            WaveformKind.TONE, frequency, frequency, volume, volume, duration
        )

    @classmethod
    def sweep(
        cls,
        f_start: float,
        f_end: float,
        volume: float = 150.0,
        duration: float = 25.0,
    ) -> "WaveformSpec":
        return cls(WaveformKind.SWEEP, f_start, f_end, volume, volume, duration)

    @classmethod
    def pulse_train(
        cls,
        f_start: float,
        f_end: float,
        volume: float = 150.0,
        segments: int = 25,
        segment_duration: float = 1.0,
    ) -> "WaveformSpec":
        return cls(
            WaveformKind.PULSE_TRAIN,
            f_start,
            f_end,
            volume,
            volume,
            segments * segment_duration,
            segment_duration,
        )

    @classmethod
    def volume_sweep(
        cls,
        volume_start: float,
        volume_end: float,
        frequency: float = 200.0,
        duration: float = 25.0,
    ) -> "WaveformSpec":
        return cls(
            WaveformKind.VOLUME_SWEEP,
            frequency,
            frequency,
            volume_start,
            volume_end,
            duration,
        )

    @classmethod
    def volume_pulse_train(
        cls,
        volume_start: float,
        volume_end: float,
        frequency: float = 200.0,
        segments: int = 25,
        segment_duration: float = 1.0,
    ) -> "WaveformSpec":
        return cls(
            WaveformKind.VOLUME_PULSE_TRAIN,
            frequency,
            frequency,
            volume_start,
            volume_end,
            segments * segment_duration,
            segment_duration,
        )

    # -- serialization -------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "WaveformSpec":
        return cls(
            kind=WaveformKind(data["kind"]),
            f_start=float(data["f_start"]),
            f_end=float(data["f_end"]),
            volume_start=float(data["volume_start"]),
            volume_end=float(data["volume_end"]),
            total_duration=float(data["total_duration"]),
            segment_duration=float(data.get("segment_duration", 0.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "WaveformSpec":
        return cls.from_dict(json.loads(text))

    @property
    def max_frequency(self) -> float:
        return max(self.f_start, self.f_end)

    @property
    def envelope_period(self) -> float:
        if self.kind.segmented:
            return self.segment_duration
        return self.total_duration

    @property
    def segment_count(self) -> int:
        return int(round(self.total_duration / self.envelope_period))

    def label(self) -> str:
        """Short human label, e.g. '100-800Hz' or '0-150%'."""
        if self.kind is WaveformKind.TONE:
            return f"{self.f_start:g}Hz@{self.volume_start:g}%"
        if self.kind in (WaveformKind.SWEEP, WaveformKind.PULSE_TRAIN):
            return f"{self.f_start:g}-{self.f_end:g}Hz"
        return f"{self.volume_start:g}-{self.volume_end:g}%"


@dataclass(frozen=True)
class SampleBuffer:
    sample_rate: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(samples)):
            raise DomainError("sample buffer contains non-finite values")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    def times(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    def to_csv(self, path: Union[str, Path]) -> Path:
        """Write two columns: t_seconds, amplitude."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            path,
            np.column_stack([self.times(), self.samples]),
            delimiter=",",
            header="t_seconds,amplitude",
            comments="",
            fmt="%.9g",
        )
        return path


def volume_to_amplitude(
    volume: float,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
) -> float:
    """Map a volume percentage to exciter displacement amplitude (mm)."""
    if volume < 0 or volume > MAX_VOLUME:
        raise DomainError(f"volume {volume} outside [0, {MAX_VOLUME}]")
    return reference_displacement * volume / 100.0


def _local_time(spec: WaveformSpec, t: float) -> float:
    if not spec.kind.segmented:
        return t
    period = spec.segment_duration
    index = math.floor(t / period)
    if index >= spec.segment_count:
        index = spec.segment_count - 1
    return t - index * period


def instantaneous_frequency(spec: WaveformSpec, t: float) -> float:
    """Analytic instantaneous frequency (Hz) at time t."""
    _check_time(spec, t)
    tau = _local_time(spec, t)
    return spec.f_start + (spec.f_end - spec.f_start) * (
        tau / spec.envelope_period
    )


def _check_time(spec: WaveformSpec, t: float) -> None:
    if not 0.0 <= t <= spec.total_duration:
        raise DomainError(
            f"t={t} outside [0, {spec.total_duration}] for {spec.label()}"
        )


def sample(
    spec: WaveformSpec,
    t: float,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
) -> float:
    """Exciter displacement (mm) at time t."""
    _check_time(spec, t)
    tau = _local_time(spec, t)
    period = spec.envelope_period
    phase = 2.0 * math.pi * (
        spec.f_start * tau
        + (spec.f_end - spec.f_start) * tau * tau / (2.0 * period)
    )
    volume = spec.volume_start + (spec.volume_end - spec.volume_start) * (
        tau / period
    )
    return volume_to_amplitude(volume, reference_displacement) * math.sin(
        phase
    )


def synthesize(
    spec: WaveformSpec,
    sample_rate: float,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
) -> SampleBuffer:
    """Discretize a waveform at `sample_rate` Hz."""
    if sample_rate < 4.0 * spec.max_frequency:
        raise ConfigurationError(
            f"sample rate {sample_rate} Hz is below 4x the highest "
            f"frequency ({spec.max_frequency} Hz)"
        )
    count = int(round(spec.total_duration * sample_rate))
    t = np.arange(count) / sample_rate
    logger.debug(
        "Synthesized %s: %d samples at %.0f Hz", spec.label(), count, sample_rate
    )
    return SampleBuffer(
        sample_rate, sample_many(spec, t, reference_displacement)
    )


def sample_many(
    spec: WaveformSpec,
    t: np.ndarray,
    reference_displacement: float = DEFAULT_REFERENCE_DISPLACEMENT,
) -> np.ndarray:
    """Vectorized `sample` over an array of times."""
    t = np.asarray(t, dtype=float)
    if t.size and (t.min() < 0.0 or t.max() > spec.total_duration):
        raise DomainError(
            f"times outside [0, {spec.total_duration}] for {spec.label()}"
        )
    period = spec.envelope_period
    if spec.kind.segmented:
        index = np.minimum(np.floor(t / period), spec.segment_count - 1)
        tau = t - index * period
    else:
        tau = t
    phase = 2.0 * np.pi * (
        spec.f_start * tau
        + (spec.f_end - spec.f_start) * tau * tau / (2.0 * period)
    )
    volume = spec.volume_start + (spec.volume_end - spec.volume_start) * (
        tau / period
    )
    return reference_displacement * volume / 100.0 * np.sin(phase)


def rms(buffer: Union[SampleBuffer, Sequence[float], np.ndarray]) -> float:
    samples = (
        buffer.samples
        if isinstance(buffer, SampleBuffer)
        else np.asarray(buffer, dtype=float)
    )
    if samples.size == 0:
        raise DomainError("rms of an empty buffer")
    return float(np.sqrt(np.mean(samples * samples)))
