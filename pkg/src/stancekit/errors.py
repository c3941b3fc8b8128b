"""Exception types shared across the toolkit."""


class StanceKitError(Exception):
    """Base class for all toolkit errors."""


# --- corpus ---------------------------------------------------------------

class EmptyTopic(StanceKitError):
    """Topic normalization left no tokens."""


class OutOfRange(StanceKitError):
    """Raw stance value outside the 5-point scale."""


class NoValidTopic(StanceKitError):
    """No pool topic passes the lexical-overlap check for a document."""


class TooFewDocuments(StanceKitError):
    """A requested split partition would be empty."""


class InsufficientData(StanceKitError):
    """Not enough rated items to compute an agreement statistic."""


class MalformedRecord(StanceKitError):
    """A serialized record could not be parsed; message names the line."""


# --- parse trees ----------------------------------------------------------

class UnbalancedParens(StanceKitError):
    """Bracketed parse has mismatched parentheses."""


class EmptyInput(StanceKitError):
    """Bracketed parse input contains no tree."""


# --- embeddings -----------------------------------------------------------

class EmptyCorpus(StanceKitError):
    """tf-idf fit called with no documents."""


class EmptySequence(StanceKitError):
    """Pooling requested over a zero-token sequence."""


class DimMismatch(StanceKitError):
    """Vector or matrix dimensions disagree."""


class BadMagic(StanceKitError):
    """Binary file does not start with the expected magic bytes."""


class VersionMismatch(StanceKitError):
    """Binary file version is unsupported."""


class TruncatedFile(StanceKitError):
    """Binary file ends before its declared payload."""


class NoVocabOverlap(StanceKitError):
    """No topic token is covered by the word-vector table."""


class ZeroVector(StanceKitError):
    """Cosine similarity requested against a zero vector."""


# --- clustering -----------------------------------------------------------

class BadK(StanceKitError):
    """Requested cluster count outside [1, N]."""


class BadRange(StanceKitError):
    """Cluster-count sampling range is invalid for the data."""


class UnassignedExample(StanceKitError):
    """An example has no cluster assignment."""


# --- model ----------------------------------------------------------------

class EmptyDocument(StanceKitError):
    """Forward pass called with a zero-token document."""


class BadLabel(StanceKitError):
    """Label index outside {0, 1, 2}."""


class StaleCache(StanceKitError):
    """Forward cache does not match the inputs passed to backward."""


class ShapeMismatch(StanceKitError):
    """Gradient shapes do not match parameter shapes."""


class MissingEmbedding(StanceKitError):
    """The embedding store lacks an entry required by the pipeline."""


class EmptyTrainSet(StanceKitError):
    """Training requested on an empty example list."""


class ModeUnavailable(StanceKitError):
    """The embedding store lacks the requested encoding mode."""


class EmptySpace(StanceKitError):
    """Hyperparameter search called with no dimensions."""


class EmptyScores(StanceKitError):
    """Expected-validation-performance called with no trial scores."""


# --- evaluation -----------------------------------------------------------

class LengthMismatch(StanceKitError):
    """Gold and predicted label sequences differ in length (or are empty)."""


class MissingPrediction(StanceKitError):
    """An evaluation example has no prediction."""


class CannotFlip(StanceKitError):
    """Sentiment-swap exhausted replaceable words before the majority flipped."""


class NoClusters(StanceKitError):
    """Cluster comparison called with no clusters."""
