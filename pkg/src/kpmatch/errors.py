"""Exception types shared across the toolkit.

Every error raised by kpmatch derives from :class:`KpmatchError` so callers
(and the CLI exit-code mapping) can distinguish toolkit failures from bugs.
"""


class KpmatchError(Exception):
    """Base class for all kpmatch errors."""


# --- dataset loading / splitting -----------------------------------------

class CorpusFormatError(KpmatchError):
    """Input file does not match the declared format."""


class MissingColumn(CorpusFormatError):
    pass


class BadStanceValue(CorpusFormatError):
    pass


class BadLabelValue(CorpusFormatError):
    pass


class EmptyField(CorpusFormatError):
    pass


class DuplicatePairId(CorpusFormatError):
    pass


class EmptyText(KpmatchError):
    pass


class TopicCountMismatch(KpmatchError):
    pass


class UnknownTopicInAssignment(KpmatchError):
    pass


class BadRatios(KpmatchError):
    pass


# --- prompt templates ------------------------------------------------------

class UnknownSlot(KpmatchError):
    pass


class DuplicateAnswerSlot(KpmatchError):
    pass


class MissingAnswerSlot(KpmatchError):
    pass


class DanglingShareId(KpmatchError):
    pass


class MissingBinding(KpmatchError):
    pass


class UnexpectedBinding(KpmatchError):
    pass


class MissingWordScore(KpmatchError):
    pass


# --- model runtime ----------------------------------------------------------

class RuntimeUnavailable(KpmatchError):
    """The requested runtime cannot run in this environment."""


class IncompatibleTask(KpmatchError):
    pass


class ResourceExhausted(KpmatchError):
    pass


class DivergedLoss(KpmatchError):
    pass


class NoMaskFound(KpmatchError):
    pass


class UnknownTask(KpmatchError):
    pass


class EmptyGeneration(KpmatchError):
    pass


# --- matchers / generation / triple classifiers -----------------------------

class EmptySplit(KpmatchError):
    pass


class SpecInvalid(KpmatchError):
    pass


class KindMismatch(KpmatchError):
    pass


class MissingLabelInTrainPhase(KpmatchError):
    pass


class WrongModelFamily(KpmatchError):
    pass


class SingleClassTraining(KpmatchError):
    pass


class EmptyVocabulary(KpmatchError):
    pass


class NotFitted(KpmatchError):
    pass


# --- evaluation ---------------------------------------------------------------

class MissingGold(KpmatchError):
    pass


class EmptyInput(KpmatchError):
    pass


class MissingProbability(KpmatchError):
    pass


# --- experiment runner ---------------------------------------------------------

class ConfigInvalid(KpmatchError):
    pass


class MissingSplit(KpmatchError):
    pass
