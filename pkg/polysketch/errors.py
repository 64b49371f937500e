"""
Exception hierarchy for polysketch

The CLI maps these classes onto process exit codes:
ConfigurationError (and DimensionError) -> 2, NumericalError -> 3.
"""


class PolysketchError(Exception):
    """Base class for all polysketch errors"""


class ConfigurationError(PolysketchError):
    """Invalid specification, config file, or input data"""


class DimensionError(ConfigurationError, ValueError):
    """Shape or length mismatch between arrays"""


class NumericalError(PolysketchError):
    """A factorization or normalization could not be carried out"""
