"""
Exception hierarchy shared by the laboratory.

Each class carries the process exit code that main.py reports for it; anything
that is neither a bad config nor a missing input counts as a stage failure.
"""


class GCRLError(Exception):
    """Base class for all errors raised by the laboratory."""
    exit_code = 4


class ConfigError(GCRLError, ValueError):
    """
    An experiment configuration value violates its contract.

    Args:
        field (str): Flat key path of the offending field, e.g. ``train.rho``
        message (str): What is wrong with it
    """
    exit_code = 2

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class MissingArtifactError(GCRLError, FileNotFoundError):
    """A required input artifact does not exist on disk."""
    exit_code = 3

    def __init__(self, path, what="artifact"):
        self.path = str(path)
        super().__init__(f"missing {what}: {self.path}")


class StageError(GCRLError):
    """A pipeline stage failed; artifacts of earlier stages are kept."""
    exit_code = 4

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class DatasetParseError(GCRLError, ValueError):
    """
    A dataset file is malformed.

    Args:
        path (str): File being parsed
        line (int): 1-based line number
        field (str): Name of the field that failed to parse
        message (str): Description of the problem
    """

    def __init__(self, path, line, field, message):
        self.path = str(path)
        self.line = line
        self.field = field
        super().__init__(f"{self.path}:{line}: field '{field}': {message}")


class EmptyBufferError(GCRLError, ValueError):
    """Sampling was requested from a buffer with no items."""


class QRangeError(GCRLError, ValueError):
    """A Q-value fell outside the clipped range [-H_max, 0]."""
