"""Exception hierarchy shared by every navsim service."""

from typing import Optional


class NavsimError(Exception):
    """Base class for all navsim failures."""


class DegenerateDistance(NavsimError):
    """Spacecraft coincides with (or is too close to) a primary."""


class StepFailure(NavsimError):
    """Adaptive integrator could not meet tolerance at the minimum step."""


class IllPosed(NavsimError):
    """LFT interconnection is not well posed (I - M11*Delta singular)."""


class NearCollinear(NavsimError):
    """Earth, Moon and spacecraft are too close to collinear for range recovery."""

    def __init__(self, conditioning: float, threshold: float):
        super().__init__(f"1 - c^2 = {conditioning:.3e} below threshold {threshold:.1e}")
        self.conditioning = conditioning
        self.threshold = threshold


class NonPositiveRange(NavsimError):
    """Closed-form range reconstruction returned r1 <= 0 or r2 <= 0."""


class Unstable(NavsimError):
    """System matrix is not Hurwitz, so its H-infinity norm is unbounded."""


class NotObservable(NavsimError):
    """(A, C) pair is rank deficient at the nominal parameter."""


class SynthesisFailed(NavsimError):
    """No stabilizing observer gain was found."""


class BoxMismatch(NavsimError):
    """Gain was certified on a parameter box smaller than the scenario's."""


class NumericalFailure(NavsimError):
    """A run produced non-finite values."""


class SchemaError(NavsimError):
    """A run CSV does not follow the expected schema."""


class ScenarioError(NavsimError):
    """Scenario file could not be loaded."""


class ScenarioParseError(ScenarioError):
    """Scenario file is not valid JSON."""

    def __init__(self, path: str, message: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f"{path}:{line}:{column}" if line is not None else path
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line
        self.column = column


class ScenarioValidationError(ScenarioError):
    """Scenario file parsed but a field is invalid."""

    def __init__(self, path: str, field: str, message: str):
        super().__init__(f"{path}: invalid '{field}': {message}")
        self.path = path
        self.field = field
