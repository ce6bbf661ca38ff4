"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, OSError -> 3,
InvariantError (and subclasses) -> 4.
"""

from __future__ import annotations


class MemcoderError(Exception):
    """Base class for all engine errors."""


class ConfigError(MemcoderError):
    """Bad configuration: missing flags, unusable paths, invalid parameter ranges."""


class InvariantError(MemcoderError):
    """A stored-data invariant was violated."""


class SnapshotError(InvariantError):
    """A memory snapshot failed to parse or violated store invariants on load."""


class UnknownApiError(InvariantError):
    """An operation addressed an API name absent from the library catalog."""


class UnknownGuidelineError(InvariantError):
    """An operation addressed a guideline id that does not exist."""


class BenchmarkFormatError(MemcoderError):
    """A benchmark record is structurally invalid (empty tests, duplicate ids, ...)."""


class GatewayError(MemcoderError):
    """LLM gateway failure. Degrades to a Failure sample inside the loop."""


class FixtureMissError(GatewayError):
    """The scripted backend has no canned response for a request fingerprint."""


class TransportError(GatewayError):
    """The HTTP backend exhausted its retries."""


class RunnerError(ConfigError):
    """The sandbox runner could not be invoked at all (missing binary, bad path)."""
