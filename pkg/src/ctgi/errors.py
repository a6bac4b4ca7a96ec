"""Exception hierarchy shared across the package.

Every domain failure raises a subclass of CtgiError so the CLI can map
them to exit code 1 with the error name on stderr.
"""


class CtgiError(Exception):
    """Base class for all domain errors."""


class ZeroVectorError(CtgiError):
    """A vector with no nonzero entry was used where a direction is required."""


class DimMismatchError(CtgiError):
    """Two vectors (or a vector and a gallery) disagree on dimension."""


class EmptyGalleryError(CtgiError):
    """Ranking requested against a gallery with no items."""


class MissingRelevanceError(CtgiError):
    """A ranking's query_id has no entry in the relevance map."""


class OutOfRangeError(CtgiError):
    """Position argument outside the valid 1-based range."""


class RowMismatchError(CtgiError):
    """Positional-embedding matrix row count does not match the stretch spec."""


class ParseError(CtgiError):
    """Malformed input file; message carries the offending line number."""


class DimInconsistentError(CtgiError):
    """File header and body disagree on matrix shape."""


class BackendUnreachableError(CtgiError):
    """Chat backend failed after retries, or returned a non-success status."""


class ScriptExhaustedError(CtgiError):
    """Scripted/replay backend has no reply for the current request."""


class ReplayMismatchError(CtgiError):
    """Replayed request differs from the recorded one at some exchange index."""


class EmptyReplyError(CtgiError):
    """Backend returned an empty reply where content is required."""


class NoKeptTurnsError(CtgiError):
    """Enrichment called with no kept QA turns."""


class ItemSetMismatchError(CtgiError):
    """Score fusion over rankings that do not cover the same item set."""


class UnknownImageError(CtgiError):
    """Oracle backend asked about an image id not present in the world."""


class SchemaTooSmallError(CtgiError):
    """Requested identity count exceeds the schema's distinct combinations."""


class IdMismatchError(CtgiError):
    """Evaluation inputs reference ids missing from the truth file."""
