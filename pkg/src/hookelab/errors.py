"""Exception types raised across the package."""

from __future__ import annotations


class GridMismatchError(ValueError):
    """Array shape does not match the grid it is used with."""


class ZeroModeError(ValueError):
    """Negative power of Lambda applied to a field with a nonzero mean."""


class AdmissibilityError(RuntimeError):
    """The flow map folded: min J dropped below 1/2.

    ``partial`` carries whatever a driver had accumulated before the failure.
    """

    def __init__(self, min_j, location=None, time=None, partial=None):
        self.min_j = float(min_j)
        self.location = location
        self.time = time
        self.partial = partial
        where = f" at grid index {tuple(location)}" if location is not None else ""
        when = f" (t={time:.6g})" if time is not None else ""
        super().__init__(f"min J = {self.min_j:.6g} < 1/2{where}{when}")


class NonFiniteStateError(RuntimeError):
    def __init__(self, time=None, partial=None):
        self.time = time
        self.partial = partial
        when = f" at t={time:.6g}" if time is not None else ""
        super().__init__(f"state became non-finite{when}")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
