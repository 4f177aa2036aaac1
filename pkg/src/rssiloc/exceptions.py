"""Exception hierarchy shared by all rssiloc modules."""


class RssilocError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RssilocError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SaturationError(RssilocError, OverflowError):
    """An unscaled result would overflow double precision."""


class DegenerateWeightError(RssilocError, ArithmeticError):
    """A residual weight is not a finite positive number."""


class SingularityError(RssilocError, ArithmeticError):
    """The estimate coincides with a reported anchor position."""


class SingularGeometryError(RssilocError, ArithmeticError):
    """The Fisher information about the blind node is (numerically) singular."""


class ScenarioError(RssilocError, ValueError):
    """A scenario document failed to parse or validate.

    ``field`` is the dotted path of the offending entry (``None`` for syntax
    errors) and ``line`` is the 1-based line number when it is known.
    """

    def __init__(self, message, field=None, line=None, source=None):
        self.field = field
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.message = message
