"""Exception types shared across the package."""

from __future__ import annotations


class KmReviewError(Exception):
    """Base class for all package-specific errors."""


class DatasetParseError(KmReviewError):
    """A dataset line could not be decoded."""

    def __init__(self, message: str, line_number: int | None = None):
        super().__init__(message)
        self.line_number = line_number


class DatasetValidationError(KmReviewError):
    """A dataset record or operation argument violates its contract."""


class CannotBalanceError(KmReviewError):
    """Oversampling requires at least one sample of each class."""


class CatalogError(KmReviewError):
    """A rule catalog file violates the catalog invariants."""


class SourceParseError(KmReviewError):
    """Source text could not be tokenized even for tolerant analysis."""


class ExemplarSelectionError(KmReviewError):
    """The exemplar pool cannot supply a label-balanced draw."""


class PromptBudgetError(KmReviewError):
    """A prompt cannot fit the character budget even with no exemplars."""


class BackendUnavailableError(KmReviewError):
    """Transport to the backend failed after all retries."""


class ProtocolError(KmReviewError):
    """The backend answered outside the wire protocol."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class VerdictParseError(KmReviewError):
    """A completion could not be mapped to a buggy/clean label."""


class CannedLookupError(KmReviewError):
    """A canned-completion file has no entry for the requested sample."""


class GoldUnavailableError(KmReviewError):
    """A gold-echoing mock was used without bound gold labels."""


class EmptyRunError(KmReviewError):
    """Metrics or runs over zero samples are undefined."""


class UndefinedBaselineError(KmReviewError):
    """Relative improvement against a zero baseline is undefined."""


class IncomparableRunsError(KmReviewError):
    """Run records over different dataset digests cannot be compared."""


class RunAbortedError(KmReviewError):
    """A scenario run stopped early; carries the partial record."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record
