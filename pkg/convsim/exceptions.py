"""
convsim exceptions
"""


class SimError(Exception):
    """Base exception for all convsim errors"""
    pass


class ConfigurationError(SimError):
    """Missing credential, bad config value or empty design grid"""
    pass


class SchemaError(SimError):
    """Parameter document does not match the schema"""

    def __init__(self, message, paths=None):
        super().__init__(message)
        self.paths = list(paths or [])


class ParseError(SimError):
    """Structured text could not be parsed"""

    def __init__(self, message, raw=None, location=None):
        super().__init__(message)
        self.raw = raw
        self.location = location


class ValidationRefused(SimError):
    """Operation refused because parameters do not validate"""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConstraintError(SimError):
    """Randomization constraints are unknown or contradictory"""
    pass


class ProviderError(SimError):
    """LLM, embedding or NER backend failure"""

    def __init__(self, message, status=None, provider=None):
        super().__init__(message)
        self.status = status
        self.provider = provider


class InputError(SimError):
    """Metric or embedding input violates a precondition"""
    pass


class UndefinedSimilarityError(InputError):
    """Cosine similarity with a zero vector"""
    pass


class ManifestError(SimError):
    """Run directory manifest is missing or does not match its config"""
    pass
