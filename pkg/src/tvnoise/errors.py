"""Exception hierarchy for tvnoise."""


class TVNoiseError(Exception):
    """Base class for all library errors."""


class DimensionError(TVNoiseError, ValueError):
    pass


class NotOnSimplex(TVNoiseError, ValueError):
    pass


class InvalidRate(TVNoiseError, ValueError):
    pass


class RankError(TVNoiseError, ValueError):
    pass


class NoStochasticSolution(TVNoiseError, ValueError):
    pass


class NotEquivalent(TVNoiseError, ValueError):
    pass


class DegeneratePosterior(TVNoiseError, RuntimeError):
    pass


class InvalidSpec(TVNoiseError, ValueError):
    pass


class MissingCleanLabels(TVNoiseError, ValueError):
    pass


class BadMagic(TVNoiseError, ValueError):
    pass


class TruncatedFile(TVNoiseError, ValueError):
    pass


class CountMismatch(TVNoiseError, ValueError):
    pass


class ParseError(TVNoiseError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InvalidArchitecture(TVNoiseError, ValueError):
    pass


class EmptyBatch(TVNoiseError, ValueError):
    pass


class NotSynthetic(TVNoiseError, TypeError):
    pass


class ConfigError(TVNoiseError, ValueError):
    pass


class ShapeMismatch(TVNoiseError, ValueError):
    pass
