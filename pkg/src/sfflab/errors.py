class SffLabError(Exception):
    """Base class for library errors."""


class ParameterError(SffLabError, ValueError):
    pass


class IncompatibleBasisError(ParameterError):
    pass


class NumericalError(SffLabError, RuntimeError):
    pass


class DegenerateFilterError(NumericalError):
    """Filter weights vanish on every level of the spectrum."""


class ResonanceError(NumericalError):
    """A dressing denominator sits on (or too close to) a pole."""


class GeometryError(ParameterError):
    pass


class ConfigError(SffLabError, ValueError):
    pass
