"""Exception hierarchy shared by all modules."""


class MomentsNetError(Exception):
    pass


class IndexDomainError(MomentsNetError, ValueError):
    """An order index (n, m) outside the family's valid domain."""


class ParameterError(MomentsNetError, ValueError):
    """Invalid family parameter (p, a, b, c, s) or a gamma-function pole."""


class CapacityError(MomentsNetError, ValueError):
    """More filters requested than the family or data can supply."""


class ShapeError(MomentsNetError, ValueError):
    pass


class ConfigError(MomentsNetError, ValueError):
    def __init__(self, message, param=None):
        super().__init__(message)
        self.param = param


class GeometryError(ConfigError):
    pass


class ThresholdSearchError(MomentsNetError, RuntimeError):
    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class TrainingError(MomentsNetError, ValueError):
    pass


class ImageFormatError(MomentsNetError, ValueError):
    """Unsupported image container or pixel layout."""


class CorruptHeaderError(ImageFormatError):
    pass


class DimensionOverflowError(ImageFormatError):
    pass


class ContainerError(MomentsNetError, ValueError):
    """Bad magic, version or truncated payload in a binary container."""
