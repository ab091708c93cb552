"""Exception hierarchy shared by all tilefuse modules."""


class TileFuseError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(TileFuseError, ValueError):
    """Invalid configuration; raised before any compute starts."""


class GeometryError(TileFuseError, ValueError):
    pass


class EmptyAdmissibleSetError(GeometryError):
    """No even divisor of the token grid side satisfies the minimum width."""


class AlignmentError(GeometryError):
    """A window corner falls off the shared token grid, or a token is uncovered."""

    def __init__(self, message, scale=None, corner=None):
        super().__init__(message)
        self.scale = scale
        self.corner = corner


class StitchError(TileFuseError):
    pass


class MissingCanvasError(TileFuseError, KeyError):
    def __init__(self, key):
        super().__init__(key)
        self.key = key

    def __str__(self):
        return f"no canvas for (scale, layer) = {self.key}"


class ShapeError(TileFuseError, ValueError):
    pass


class StageError(TileFuseError):
    """Wraps a module error with the pipeline stage it occurred in."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
