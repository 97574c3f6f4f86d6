"""Errors raised by fetchworld."""


class FetchWorldError(Exception):
    """Base class for all fetchworld errors."""

    error_code = "fetchworld_error"
    exit_code = 1


class ConfigError(FetchWorldError):
    """Configuration could not be parsed or validated."""

    error_code = "config_parse"
    exit_code = 2


class ArchitectureMismatch(FetchWorldError):
    """Policy architecture does not fit the environment."""

    error_code = "architecture_mismatch"
    exit_code = 3


class IoError(FetchWorldError):
    """File could not be read or written."""

    error_code = "io"
    exit_code = 4


class NumericError(FetchWorldError):
    """Numerical failure."""

    error_code = "numeric"
    exit_code = 5


class DegenerateVector(NumericError):
    """Vector too short to normalize."""

    error_code = "degenerate_vector"


class InvalidRange(NumericError):
    """Lower bound is above the upper bound."""

    error_code = "invalid_range"


class NonFiniteLoss(NumericError):
    """Loss evaluated to NaN or infinity."""

    error_code = "non_finite_loss"


class SteppedTerminalEpisode(FetchWorldError):
    """World was stepped after its episode ended."""

    error_code = "stepped_terminal_episode"


class NoTarget(FetchWorldError):
    """No alive collectible to seek."""

    error_code = "no_target"


class SpawnFailed(ConfigError):
    """Rejection sampling could not place an object."""

    error_code = "spawn_failed"


class IndexOutOfRange(FetchWorldError):
    """Discrete action index outside its branch."""

    error_code = "index_out_of_range"


class LengthMismatch(FetchWorldError):
    """Sequences of different lengths were combined."""

    error_code = "length_mismatch"


class ShapeMismatch(ArchitectureMismatch):
    """Observation shape does not match the network."""

    error_code = "shape_mismatch"


class ModelNotInitialized(FetchWorldError):
    """Curiosity model was used before being created."""

    error_code = "model_not_initialized"


class EmptyInput(FetchWorldError):
    """Not enough runs to compare."""

    error_code = "empty_input"


class CorruptCheckpoint(IoError):
    """Checkpoint header and payload disagree."""

    error_code = "corrupt_checkpoint"


class VersionMismatch(IoError):
    """Checkpoint was written by an unknown format version."""

    error_code = "version_mismatch"


class TrainingAborted(FetchWorldError):
    """An environment failed during training."""

    error_code = "training_aborted"
