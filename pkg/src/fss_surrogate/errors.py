"""Exception hierarchy shared by all modules."""


class FssError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FssError, ValueError):
    pass


class SingularConversionError(FssError, ArithmeticError):
    pass


class CutoffSingularityError(FssError, ValueError):
    """Raised when a frequency sits on (or above) a Floquet harmonic cutoff."""


class DivergedOptimizationError(FssError, ArithmeticError):
    pass


class FormatError(FssError, ValueError):
    """Malformed data file. ``line`` is the 1-based physical line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(FssError, ValueError):
    pass


class PipelineError(FssError, RuntimeError):
    def __init__(self, message, sample_id=None):
        self.sample_id = sample_id
        super().__init__(message)
