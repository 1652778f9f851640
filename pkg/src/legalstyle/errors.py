"""Exception hierarchy shared across the pipeline."""


class LegalStyleError(Exception):
    """Base class for all package errors."""


class EmptyText(LegalStyleError):
    """An operation received empty or whitespace-only text."""


class SectionSplitError(LegalStyleError):
    """No reasoning marker could be located in a document."""

    def __init__(self, message: str, unmatched_text: str = ""):
        super().__init__(message)
        self.unmatched_text = unmatched_text


class InsufficientData(LegalStyleError):
    """Not enough samples to fit a statistic."""


class CatalogMismatch(LegalStyleError):
    """Feature catalog versions disagree between artifacts."""


class DegenerateLabels(LegalStyleError):
    """Training data contains only one class."""


class InvalidK(LegalStyleError):
    """Requested top-k exceeds the catalog size."""


class BackendUnavailable(LegalStyleError):
    """All retry attempts against a chat/embedding backend failed."""


class ProtocolError(LegalStyleError):
    """A backend replied with a payload that does not match the wire schema."""


class DegradationRejected(LegalStyleError):
    """Degraded text failed entity/numeral preservation after all attempts."""


class RestorationRejected(LegalStyleError):
    """Restored text failed entity/numeral preservation after all attempts."""


class SynthesisFailed(LegalStyleError):
    """A synthesis run produced zero usable contrastive pairs."""


class InvalidEmphasis(LegalStyleError):
    """Unknown emphasis tag for variant generation."""


class IdentifyParseError(LegalStyleError):
    """Issue-identification output stayed unparseable after reprompting."""


class EmptyPools(LegalStyleError):
    """Experience-pool construction yielded no exemplars."""


class IndexBuildError(LegalStyleError):
    """Vector index construction failed (empty pools or ragged dimensions)."""


class ZeroVector(LegalStyleError):
    """Cosine similarity is undefined for a zero-norm vector."""


class MissingPair(LegalStyleError):
    """A pair id was requested that does not exist in the pools."""


class JudgeParseError(LegalStyleError):
    """Judge output had no parseable score after reprompting."""


class InvalidScore(LegalStyleError):
    """A score lies outside its documented range."""


class VersionMismatch(LegalStyleError):
    """Model, pools, or catalog fingerprints disagree."""


class UndefinedCorrelation(LegalStyleError):
    """Correlation is undefined (constant series or no variation in ranks)."""


class UndefinedAgreement(LegalStyleError):
    """Agreement is undefined (no unit was rated by two or more raters)."""


class UndefinedCV(LegalStyleError):
    """Coefficient of variation is undefined for zero-mean data."""


class AlignmentError(LegalStyleError):
    """System and human score sets cover different document ids."""


class ConfigError(LegalStyleError):
    """Pipeline configuration violates an invariant."""


class LockError(LegalStyleError):
    """Another command already holds the output-directory lock."""
