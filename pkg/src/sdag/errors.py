"""Exception types shared across the package."""

from __future__ import annotations


class SdagError(Exception):
    """Base class for all package-specific errors."""


class UnknownSubject(SdagError):
    """A token does not name any subject in the closed taxonomy."""

    def __init__(self, name: str):
        super().__init__(f"unknown subject: {name!r}")
        self.name = name


class EmptyAfterThreshold(SdagError):
    """Every annotated subject fell below the relevance threshold."""


class ParseFailure(SdagError):
    """An annotation reply contained no usable subject/weight groups."""


class InvalidWeight(SdagError):
    """A parsed subject weight lies outside [0, 1]."""


class NoConsensus(SdagError):
    """No subject appeared in all three annotation rounds."""


class DimensionMismatch(SdagError):
    """Tensor shapes are inconsistent with the configured dimensions."""


class NonFiniteLoss(SdagError):
    """The training loss became NaN or infinite (learning rate too high?)."""


class VersionMismatch(SdagError):
    """A persisted artifact carries an unsupported format version."""


class CorruptCheckpoint(SdagError):
    """A router checkpoint file is truncated or structurally invalid."""


class CorruptProfileStore(SdagError):
    """A capability profile file is truncated or structurally invalid."""


class EmptyPool(SdagError):
    """Model selection was attempted against an empty model pool."""


class EmptySplit(SdagError):
    """Profiling was attempted on an empty question split."""


class TransportError(SdagError):
    """A backend call failed after exhausting its retry budget."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class Timeout(TransportError):
    """A backend call exceeded its configured deadline on every attempt."""


class AuthError(SdagError):
    """A backend rejected credentials, or no credential is configured."""


class NoRuleMatched(SdagError):
    """A mock backend script has no rule matching the request and no default."""


class RoleInputMismatch(SdagError):
    """Upstream content contradicts the agent role being rendered."""
