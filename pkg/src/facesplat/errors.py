"""Shared exception types."""


class ParseError(ValueError):
    """Malformed input file; message carries the offending line/record."""


class InvariantError(ValueError):
    """A domain-type invariant does not hold."""


class FormatVersionError(ValueError):
    """Bad magic bytes or unsupported version in a binary header."""


class ChecksumError(ValueError):
    """Trailing CRC32 does not match the file contents."""


class OptimizationDiverged(RuntimeError):
    """NaN loss during fitting; message carries iteration and field stats."""
