"""Exception types shared across the crashlens modules."""


class CrashlensError(Exception):
    """Base class for all crashlens-specific errors."""


class MalformedTraceError(CrashlensError):
    """Raised when no line of a raw stack trace matches the frame grammar.

    Signals an unusable crash record; ingestion counts and skips these in
    lenient mode.
    """


class FormatError(CrashlensError):
    """A corpus record does not conform to the input format (strict mode)."""


class DuplicateIdError(CrashlensError):
    """Two corpus records share the same crash_id (strict mode)."""


class ConfigError(CrashlensError):
    """The run configuration is missing, unreadable, or invalid."""


class InvalidLevelError(CrashlensError):
    """Requested grouping level is outside 1..4."""


class FileUnseenError(CrashlensError):
    """A file queried for bucket frequency occurs in no group."""


class NoCandidatesError(CrashlensError):
    """A crash group contains no application frames to rank.

    Typically an infrastructure-only crash (all frames belong to framework
    or JDK packages).
    """


class MissingRankingError(CrashlensError):
    """A ground-truth task references a group with no computed ranking."""


class EmptyTaskSetError(CrashlensError):
    """A metric over ground-truth tasks was requested for an empty task set."""
