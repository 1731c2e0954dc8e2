"""
Exception hierarchy for the read-window simulator.
"""
from typing import Optional


class SimError(Exception):
    """Base class for every error raised by the simulator."""


class DomainError(SimError, ValueError):
    """A physical quantity is outside the domain of the model (e.g. T <= 0 K)."""


class UsageError(SimError, ValueError):
    """An operation was called with arguments that violate its contract."""


class AccuracyError(SimError):
    """The integrator step is too coarse for the requested trajectory."""


class CalibrationError(SimError):
    """A lookup table cannot be used for the requested operating point."""


class ConfigError(SimError):
    """
    Invalid configuration value or syntax.

    Carries the dotted key path (e.g. ``env.vdd``) and, for file input,
    the 1-based line number.
    """

    def __init__(self, message: str, key_path: Optional[str] = None, line: Optional[int] = None):
        self.key_path = key_path
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key_path:
            prefix += f"{key_path}: "
        super().__init__(prefix + message)
