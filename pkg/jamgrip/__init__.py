"""
Simulator and analysis pipeline for a vibration-assisted granular jamming
gripper: waveform synthesis, a 2D discrete element pack inside a membrane,
the virtual test rig, force metrics, Mann-Whitney statistics and the
experiment harness.
"""

from .dem_core import GrainWorld, SimConfig, build_world
from .errors import (
    ConfigurationError,
    DomainError,
    InitializationError,
    JamGripError,
    NoHoldDetected,
    NumericalBlowupError,
)
from .harness import ExperimentKind, build_plan, run_plan, summarize
from .metrics import extract_holding, extract_interlock, extract_push
from .rig import GripCycleConfig, relaxation_protocol, run_grip_cycle
from .stats import mann_whitney_u, pairwise_matrix
from .waveform import WaveformKind, WaveformSpec, sample, synthesize

__version__ = "1.0.0"
__author__ = "Jamming Gripper Rig Team"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "ExperimentKind",
    "GrainWorld",
    "GripCycleConfig",
    "InitializationError",
    "JamGripError",
    "NoHoldDetected",
    "NumericalBlowupError",
    "SimConfig",
    "WaveformKind",
    "WaveformSpec",
    "build_plan",
    "build_world",
    "extract_holding",
    "extract_interlock",
    "extract_push",
    "mann_whitney_u",
    "pairwise_matrix",
    "relaxation_protocol",
    "run_grip_cycle",
    "run_plan",
    "sample",
    "summarize",
    "synthesize",
]
