"""Exception types shared across file formats, checkpoints, and training."""

from __future__ import annotations


class ParseError(ValueError):
    """A malformed input file; carries the location of the defect."""

    def __init__(self, source: str, message: str, line: int | None = None):
        self.source = source
        self.line = line
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class ConfigError(ValueError):
    """A configuration file with unknown keys or unusable values."""


class CheckpointError(ValueError):
    """Base class for unreadable or inconsistent checkpoints."""


class CheckpointMagicError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; records the optimizer step that produced it."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite loss at optimizer step {step}")
