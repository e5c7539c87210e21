"""Exception hierarchy shared across the framework."""

from __future__ import annotations


class AeChainError(Exception):
    """Base class for all framework errors."""


# --- PE parsing / serialization ---


class MalformedHeader(AeChainError):
    """Input bytes do not form a parseable executable header."""


class TruncatedSection(AeChainError):
    """A section's raw extent points beyond the end of the file."""


class LayoutOverflow(AeChainError):
    """Section extents overlap or collide with the header region."""


# --- transforms ---


class InapplicableAction(AeChainError):
    """Action cannot be applied to this image (callers skip and log)."""


# --- detectors ---


class DegenerateCorpus(AeChainError):
    """Training corpus contains fewer than two classes."""


class PositionOutOfRange(AeChainError):
    """Requested gradient position lies beyond the truncation window."""


# --- generators ---


class SkippedOutOfWindow(AeChainError):
    """Sample too large for the payload to fit inside the truncation window."""


# --- chain / metrics ---


class EmptyAfterScreening(AeChainError):
    """Every sample was already mispredicted in genuine form."""


class ZeroTotal(AeChainError):
    """Evasion rate undefined: no samples in the denominator."""


class ZeroBaseline(AeChainError):
    """Relative improvement undefined for a zero baseline rate."""


# --- corpus ---


class DigestMismatch(AeChainError):
    """Stored file content does not match the manifest digest."""


class MissingFile(AeChainError):
    """Manifest references a file that does not exist."""


# --- harness ---


class MissingArtifacts(AeChainError):
    """Report generation requires artifacts that are not present."""


class ConfigError(AeChainError):
    """Experiment configuration is invalid or unresolvable."""


# --- scan service client ---


class Unreachable(AeChainError):
    """Scan service did not respond after the retry budget."""


class ProtocolError(AeChainError):
    """Scan service returned a response the client cannot interpret."""
