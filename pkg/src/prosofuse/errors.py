"""Exception hierarchy shared by all subpackages."""


class ProsofuseError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ProsofuseError, ValueError):
    pass


class NonFiniteError(ProsofuseError, FloatingPointError):
    pass


class ConfigError(ProsofuseError, ValueError):
    pass


class SignalError(ProsofuseError, ValueError):
    pass


class AlignmentError(ProsofuseError, ValueError):
    pass


class MismatchError(AlignmentError):
    """Alignment total differs from the mel frame count by more than the slack."""


class MetricError(ProsofuseError, ValueError):
    pass


class FormatError(ProsofuseError, ValueError):
    pass


class CorruptionError(FormatError):
    pass


class VocabError(ProsofuseError, KeyError):
    pass


class UsageError(ProsofuseError, ValueError):
    pass


class TrainingError(ProsofuseError, RuntimeError):
    pass
