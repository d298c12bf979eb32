"""Exception types with stable machine-readable codes.

Every error the library raises carries a ``code`` string that the CLI prints
as ``error[<code>]: <message>`` so callers can branch on failures without
parsing prose.
"""


class MonotrajError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InvalidInputError(MonotrajError):
    code = "invalid-input"


class DegenerateGeometryError(MonotrajError):
    code = "degenerate-geometry"


class TooFewObservationsError(MonotrajError):
    code = "too-few-observations"

    def __init__(self, message: str, required: int | None = None, got: int | None = None):
        super().__init__(message)
        self.required = required
        self.got = got


class RankDeficientError(MonotrajError):
    code = "rank-deficient"

    def __init__(self, message: str, rank: int | None = None, full_rank: int | None = None):
        super().__init__(message)
        self.rank = rank
        self.full_rank = full_rank


class InsufficientDofError(MonotrajError):
    code = "insufficient-degrees-of-freedom"


class IndeterminateError(MonotrajError):
    code = "indeterminate"


class NumericalError(MonotrajError):
    code = "numerical-failure"


class DegenerateScenarioError(MonotrajError):
    code = "degenerate-scenario"


class SchemaError(MonotrajError):
    code = "schema"


class ConfigError(MonotrajError):
    code = "config"


class TimeMismatchError(MonotrajError):
    code = "time-mismatch"
