"""Exception types shared across the toolkit."""


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class CorpusExhaustedError(RuntimeError):
    """Source corpus ran out of utterances before the mixture was filled."""


class CheckpointError(RuntimeError):
    """Missing, malformed, or incompatible model checkpoint."""


class DependencyError(RuntimeError):
    """A pipeline stage was invoked before the stage it depends on."""


class TrainingDivergedError(RuntimeError):
    """Training loss became NaN/inf; the run was aborted."""
