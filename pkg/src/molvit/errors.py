"""Exception hierarchy shared by every molvit module."""


class MolvitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(MolvitError, ValueError):
    """Tensor dimensions are incompatible for the requested operation."""


class ConfigError(MolvitError, ValueError):
    """A model, training or CLI configuration is inconsistent."""


class ContractError(MolvitError, ValueError):
    """An operation precondition was violated (fully masked row, non-scalar loss, ...)."""


class TokenizerError(MolvitError, ValueError):
    pass


class OutOfVocabularyError(TokenizerError):
    def __init__(self, token: str, offset: int):
        super().__init__(f"token {token!r} at offset {offset} is not in the vocabulary")
        self.token = token
        self.offset = offset


class DataError(MolvitError):
    """Bad manifest, unreadable image, or a label that cannot be used for training."""


class CheckpointError(MolvitError):
    pass


class CacheInvariantError(MolvitError, RuntimeError):
    """Decode cache layers went out of sync."""


class EngineMismatchError(MolvitError, RuntimeError):
    """Naive and cached decoding emitted different tokens."""
