"""Exception hierarchy for juliatherm.

Everything raised on purpose derives from ThermError so the CLI can map
domain failures to exit code 1 while genuine bugs propagate.
"""


class ThermError(Exception):
    """Base class for all anticipated failures."""


class RootSolveFailure(ThermError):
    """Simultaneous root iteration did not reach the residual tolerance.

    Carries the worst residual and iteration count for diagnosis.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CombinatorialExplosion(ThermError):
    """A census or word enumeration would exceed the configured budget."""

    def __init__(self, message, needed=None, budget=None):
        super().__init__(message)
        self.needed = needed
        self.budget = budget


class ParseError(ThermError):
    """Potential expression rejected, with position and expectation info."""

    def __init__(self, message, line=1, column=0, expected=()):
        super().__init__(message)
        self.line = line
        self.column = column
        self.expected = tuple(expected)

    def __str__(self):
        base = super().__str__()
        loc = "line %d, column %d" % (self.line, self.column)
        if self.expected:
            return "%s (%s; expected %s)" % (base, loc, " or ".join(self.expected))
        return "%s (%s)" % (base, loc)


class SingularOrbit(ThermError):
    """An evaluation hit a singular point (log 0, division by zero, infinity)
    with clamping disabled."""


class FixedPointInput(ThermError):
    """A construction that needs a non-fixed base point received a fixed one."""


class BranchObstruction(ThermError):
    """Inverse-branch continuation failed (critical value inside the disk,
    or a Newton step left its basin).  `step` is the offending backward step."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class NoSecondPreimage(ThermError):
    """No admissible second branch anchor inside the working disk."""


class DivergentWeights(ThermError):
    """Power-series weights grow super-linearly in the exponent: radius 0."""


class InconsistentCurve(ThermError):
    """A pressure curve does not support the requested reading (multiple
    sign changes beyond noise, or the grid ends before a crossing)."""


class EmptyCells(ThermError):
    """Too many discretization cells received no sample points."""


class Reducible(ThermError):
    """Transfer matrix fails the irreducibility mass check."""


class ConfigError(ThermError):
    """Bad or unknown keys in a run-configuration file."""
