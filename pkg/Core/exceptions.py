"""Exception hierarchy for the ShuffleFME framework."""

class ShuffleFMEError(Exception):
    """Base class for framework errors."""

class ConfigError(ShuffleFMEError, ValueError):
    """Invalid experiment configuration."""

class CalibrationError(ShuffleFMEError, ValueError):
    """No dummy distribution satisfies the requested budget."""

class DatasetError(ShuffleFMEError, ValueError):
    """Unreadable or invalid dataset, or an empty user sample."""

class DecryptionError(ShuffleFMEError):
    """Ciphertext could not be opened with the given key."""

class LayerError(ShuffleFMEError):
    """Layer count outside the supported range."""

class TransportError(ShuffleFMEError):
    """Message fabric misuse."""

class RoundViolation(ShuffleFMEError, AssertionError):
    """A user was contacted more than once in a one-round protocol."""
