"""Exception types shared across the pipeline."""


class CyberkgError(Exception):
    """Base class for all pipeline errors."""


# --- ingest ---------------------------------------------------------------

class MissingColumnError(CyberkgError):
    """A schema-mapped column name is absent from the CSV header."""


class MalformedCsvError(CyberkgError):
    """The CSV could not be parsed structurally."""


class EmptyAfterCleaningError(CyberkgError):
    """Nothing but boilerplate survived text cleaning."""


class FetchDeniedError(CyberkgError):
    """robots.txt disallows fetching the URL."""


class FetchTimeoutError(CyberkgError):
    """The remote host did not answer within the configured timeout."""


class FixtureMissingError(CyberkgError):
    """No stored response exists for this request in the fixture store."""


class FormatError(CyberkgError):
    """Structural problem in an enriched CoNLL-U file (column count, bad int)."""


class InvariantError(CyberkgError):
    """A parsed document violates a ParsedDocument invariant."""


# --- extraction -----------------------------------------------------------

class OverlappingPhrasesError(CyberkgError):
    """Phrase spans handed to the coarse-tree builder overlap."""


class UnknownSeedError(CyberkgError):
    """Attack-lexicon seed missing from the inflection table and not regular."""


class NoEntitiesError(CyberkgError):
    """The document contains no named entities to rank."""


class EmptyCorpusError(CyberkgError):
    """Ranking evaluation was given an empty corpus."""


# --- linking --------------------------------------------------------------

class ServiceUnavailableError(CyberkgError):
    """Annotation or SPARQL endpoint unreachable after retries."""


class MalformedResponseError(CyberkgError):
    """Service response did not match the documented JSON shape."""


# --- graph ----------------------------------------------------------------

class KindConflictError(CyberkgError):
    """A node was used in a role requiring an incompatible kind."""


# --- risk -----------------------------------------------------------------

class DateOutOfRangeError(CyberkgError):
    """An attack edge is dated outside the calendar range."""


class CentralEntityError(CyberkgError):
    """Entity risk was requested for a central (country/industry) node."""


class EmptyCalendarError(CyberkgError):
    """Sample assembly needs at least one recorded attack."""


class TooFewSamplesError(CyberkgError):
    """Standardization needs at least two samples."""


# --- analysis -------------------------------------------------------------

class DegenerateInputError(CyberkgError):
    """Covariance matrix has no variance to decompose."""


class SingleClassSplitError(CyberkgError):
    """Train or test split ended up with a single class."""


# --- cli ------------------------------------------------------------------

class ConfigError(CyberkgError):
    """Pipeline configuration is missing, unreadable, or out of range."""


class StageInputMissingError(CyberkgError):
    """A stage's declared input artifact does not exist yet."""
