"""Exception types shared across the package.

Everything that signals bad caller input derives from ``ValueError`` so plain
``except ValueError`` keeps working for callers that do not care about the
finer distinction.
"""


class UnsupportedFormat(ValueError):
    """Input is well formed but uses a feature we do not handle (e.g. GEO weights)."""


class MalformedInput(ValueError):
    """Input text could not be parsed."""


class SizeLimitError(ValueError):
    """Instance is too large for an exact solver."""


class InsufficientData(ValueError):
    """Not enough samples/instances to carry out the request."""


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class FormatError(ValueError):
    """Checkpoint or tour file does not match what the caller expects."""


class ContractViolation(RuntimeError):
    """Internal precondition broken (a bug in the caller, not bad user input)."""
