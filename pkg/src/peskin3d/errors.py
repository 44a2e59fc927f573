"""Typed exceptions raised across the package."""


class Peskin3DError(Exception):
    """Base class for all package errors."""


class PoleSingular(Peskin3DError):
    """Stereographic inverse requested at the projection pole."""


class IndexOutOfRange(Peskin3DError, IndexError):
    """Chart index outside the atlas."""


class UncoveredPoint(Peskin3DError):
    """No chart bump is positive at the requested point."""


class DegreeOverflow(Peskin3DError):
    """Coefficient degree exceeds what the grid resolves."""


class StretchOutOfRange(Peskin3DError):
    """Stretch factor outside the admissible range of a tension law."""


class OriginSingular(Peskin3DError):
    """Kernel evaluated at (numerically) zero separation."""


class DegenerateDirection(Peskin3DError):
    """Frozen direction A(theta - eta) collapses to zero."""


class CoincidentPoints(Peskin3DError):
    """Difference quotient requested at coincident parameter points."""


class DegenerateState(Peskin3DError):
    """Membrane arc-chord constant below the usable threshold."""


class RankDeficient(Peskin3DError):
    """Frozen matrix A does not have full column rank."""


class ZeroFrequency(Peskin3DError):
    """Symbol evaluated at xi = 0."""


class SingularResolvent(Peskin3DError):
    """z + L_A(xi) is numerically singular."""


class GridTooCoarse(Peskin3DError):
    """FFT grid does not resolve the transformed quantity."""


class ParseError(Peskin3DError):
    """Malformed or unrecognised configuration input."""

    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(Peskin3DError):
    """Configuration parsed but violates one or more constraints."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
