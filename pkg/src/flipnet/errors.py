"""Exception types shared across the package."""


class FlipnetError(Exception):
    """Base class for all package errors."""


class ShapeError(FlipnetError):
    """Array dimensions do not match what an operation requires."""


class InvalidParameterError(FlipnetError):
    """A scalar parameter is out of its valid range."""


class InvalidInputError(FlipnetError):
    """Input data violates a precondition (non-finite, wrong class, ...)."""


class FormatError(FlipnetError):
    """A file or byte stream does not match the expected format."""


class DependencyError(FlipnetError):
    """A required artifact from an earlier pipeline stage is missing."""

    def __init__(self, missing_path, producing_command):
        self.missing_path = str(missing_path)
        self.producing_command = producing_command
        super().__init__(
            f"missing artifact {missing_path!r}; produce it with `{producing_command}`"
        )


class DegenerateGradientError(FlipnetError):
    """The logit-difference gradient vanished; Taylor direction undefined."""


class TrainingDivergedError(FlipnetError):
    """Loss became non-finite during training."""

    def __init__(self, epoch):
        self.epoch = epoch
        super().__init__(f"training loss became non-finite at epoch {epoch}")
