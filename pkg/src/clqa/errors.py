"""Exception hierarchy shared by every pipeline stage.

The CLI maps these onto exit codes: :class:`UsageError` -> 1,
:class:`DataError` -> 2, :class:`InvariantError` -> 3.
"""

from __future__ import annotations


class ClqaError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(ClqaError):
    """Bad arguments or configuration supplied by the caller."""


class ConfigurationError(UsageError):
    """Unsupported language, unknown option value, or invalid config file."""


class ArgumentError(UsageError, ValueError):
    """An argument violates an operation's precondition."""


class DataError(ClqaError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")


class ConflictError(DataError):
    """Duplicate identifier inside a collection."""


class SizeError(DataError):
    """Not enough records to satisfy a requested split or sample."""


class FormatError(DataError):
    """Binary or JSONL payload does not follow its documented layout."""


class ShapeError(DataError, ValueError):
    """Vector dimensions disagree."""


class NormalizationError(DataError, ValueError):
    """A vector that must be (or become) unit-norm cannot be."""


class DegenerateMixError(NormalizationError):
    """The convex mixture of a positive and a negative vanished."""


class EmptyIndexError(DataError):
    pass


class LanguageMismatchError(DataError):
    pass


class DetectionError(DataError):
    """No script evidence to detect a language from."""


class ExhaustionError(DataError):
    def __init__(self, message: str, deficit: int):
        self.deficit = deficit
        super().__init__(message)


class MissingReferenceError(DataError):
    """A record refers to an id that does not exist."""


class CoverageError(DataError):
    """A language has no scored questions."""


class TranslationError(DataError):
    pass


class GenerationError(DataError):
    pass


class InvariantError(ClqaError):
    """An internal consistency check failed."""
