class EpisodeSmithError(Exception):
    """Base class for all toolkit errors"""


class FormatError(EpisodeSmithError):
    """A dataset or checkpoint file does not follow its on-disk format"""


class EmptyClassError(EpisodeSmithError):
    """A declared class has no items"""


class SplitError(EpisodeSmithError):
    """Classes or items cannot be partitioned as requested"""


class SamplingError(EpisodeSmithError):
    """Not enough classes or items to draw an episode or batch"""


class ShapeError(EpisodeSmithError, ValueError):
    """Array or payload dimensions do not match"""


class NumericalError(EpisodeSmithError):
    """A computation produced NaN or Inf"""


class DecodeError(EpisodeSmithError):
    """Episodic decoding cannot proceed"""


class TrainError(EpisodeSmithError):
    """An ensemble candidate cannot be fitted"""


class ArgumentError(EpisodeSmithError, ValueError):
    """An argument is outside its accepted range"""


class ConfigError(EpisodeSmithError):
    """The run configuration is invalid"""
