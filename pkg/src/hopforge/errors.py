"""Shared exception hierarchy."""


class HopforgeError(Exception):
    """Base class for all errors raised by this package."""


class CorpusError(HopforgeError):
    pass


class MalformedRecordError(CorpusError):
    """A corpus line failed to parse or violated the record schema."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class GatewayError(HopforgeError):
    """Model gateway failed permanently (bad template, provider exhaustion, ...)."""


class ProviderError(GatewayError):
    """The underlying provider rejected the request."""


class ProviderTransientError(ProviderError):
    """Retryable provider failure (rate limit, 5xx, network)."""


class JudgeParseError(GatewayError):
    """Judge model output could not be mapped to correct/incorrect."""


class SynthesisError(HopforgeError):
    pass


class ComposeError(SynthesisError):
    """Merge/extension prompt output was unusable or violated a precondition."""


class VerificationUndetermined(HopforgeError):
    """A verification stage could not complete (gateway failure); item is quarantined."""

    def __init__(self, stage: str, message: str = ""):
        super().__init__(f"stage {stage} undetermined: {message}")
        self.stage = stage


class ReviewError(HopforgeError):
    pass


class ConfigError(HopforgeError):
    pass


class PipelineError(HopforgeError):
    pass
