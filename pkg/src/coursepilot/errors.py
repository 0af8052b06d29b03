"""Exception hierarchy shared across the engine."""


class CoursePilotError(Exception):
    """Base class for all engine errors."""


class EmptyCorpusError(CoursePilotError):
    """No input files matched the ingest globs."""


class EmptyKBError(CoursePilotError):
    """A knowledge base was built from, or queried with, zero sections."""


class EmptyTestsetError(CoursePilotError):
    """An evaluation run was started with no test cases."""


class EmptyTextError(CoursePilotError, ValueError):
    """An operation that requires non-empty text received an empty string."""


class DimsMismatchError(CoursePilotError, ValueError):
    """Two vectors with different dimensionality were combined."""


class DegenerateVectorError(CoursePilotError, ValueError):
    """A zero vector reached an operation that requires direction."""


class ContractViolationError(CoursePilotError, ValueError):
    """A caller broke a documented precondition (e.g. unsorted probabilities)."""


class ProviderContractError(CoursePilotError):
    """A remote provider returned a response that violates its wire contract."""


class RetriableProviderError(CoursePilotError):
    """A remote provider was unreachable after the configured retries."""


class IncompatibleKBError(CoursePilotError):
    """A persisted knowledge base has an unsupported format version."""


class ChecksumError(CoursePilotError):
    """A persisted knowledge base is truncated or fails its CRC check."""


class QuestionTooLongError(CoursePilotError):
    """A question alone exceeds the generator's context budget."""


class EmptyAnswerError(CoursePilotError):
    """A generator returned an empty completion."""


class NoStatementsError(CoursePilotError):
    """Factual scoring was attempted with zero judged statements."""


class NoSentencesError(CoursePilotError):
    """Context recall was attempted on a ground truth with no sentences."""


class NoClaimsError(CoursePilotError):
    """Faithfulness was attempted on an answer with no extractable claims."""


class JudgeParseError(CoursePilotError):
    """An LLM judge reply could not be parsed after a retry."""
