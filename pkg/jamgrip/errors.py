"""Exception hierarchy for the simulator and the analysis pipeline."""

from typing import Optional


class JamGripError(Exception):
    """Base class for every error raised by jamgrip."""


class DomainError(JamGripError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ConfigurationError(JamGripError, ValueError):
    """A configuration object is inconsistent or unsafe to run."""


class InitializationError(JamGripError, RuntimeError):
    """A world could not be built from its configuration."""


class NumericalBlowupError(JamGripError, RuntimeError):
    """Non-finite state detected during integration."""

    def __init__(
        self,
        step_index: int,
        message: str = "non-finite state",
        phase: Optional[str] = None,
    ):
        self.step_index = step_index
        self.phase = phase
        where = f" during {phase}" if phase else ""
        super().__init__(f"{message} at step {step_index}{where}")

    def with_phase(self, phase: str) -> "NumericalBlowupError":
        return NumericalBlowupError(self.step_index, "non-finite state", phase)


class NoHoldDetected(JamGripError, LookupError):
    """The force trace never shows a qualifying pull-off valley."""
