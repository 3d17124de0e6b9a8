"""Exception types shared across the engine."""


class TsmError(Exception):
    """Base class for all engine errors."""


class InvalidShape(TsmError):
    """Tensor extents or axis labels violate an operation's contract."""


class InvalidSpec(TsmError):
    """A shift/layer/network description is internally inconsistent."""


class CacheMismatch(TsmError):
    """A streaming frame does not match the shape of its layer cache."""


class TrainingDiverged(TsmError):
    """Loss became non-finite during training."""


class FormatError(TsmError):
    """A serialized file is malformed. Carries the path and byte offset."""

    def __init__(self, reason: str, path=None, offset: int | None = None):
        self.reason = reason
        self.path = str(path) if path is not None else None
        self.offset = offset
        msg = reason
        if self.path is not None:
            msg = f"{self.path}: {msg}"
        if offset is not None:
            msg = f"{msg} (byte offset {offset})"
        super().__init__(msg)
