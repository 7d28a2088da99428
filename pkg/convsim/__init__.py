"""
convsim - parameterized LLM conversation generation and evaluation
"""

__version__ = "0.1.0"
__license__ = "MIT"

from .schema import (
    ConversationParameters,
    ValidationReport,
    parse_parameters,
    randomize_parameters,
    serialize_parameters,
    validate,
)
from .persona import EntrepreneurProfile, baseline_profile, generate_profiles
from .prompt import PromptBundle, compile_baseline, compile_parameterized
from .session import ProviderConfig, load_provider
from .transcript import Transcript, parse_output
from .judge import InferredParameters
from .gateway import GatewayClient, generate_conversation, judge_infer_parameters
from .embed import EmbeddingConfig, cosine_similarity, embed_sentences
from .metrics import (
    blend_judgments,
    cluster_topics,
    embedding_diversity,
    revisit_rate,
    stability_score,
    topic_drift_series,
    topic_entropy,
)
from .runner import ExperimentConfig, ExperimentResult, load_preset, report, resume, run_experiment
from .exceptions import (
    SimError,
    ConfigurationError,
    SchemaError,
    ParseError,
    ValidationRefused,
    ConstraintError,
    ProviderError,
    InputError,
    UndefinedSimilarityError,
    ManifestError,
)

__all__ = [
    "ConversationParameters",
    "ValidationReport",
    "parse_parameters",
    "randomize_parameters",
    "serialize_parameters",
    "validate",
    "EntrepreneurProfile",
    "baseline_profile",
    "generate_profiles",
    "PromptBundle",
    "compile_baseline",
    "compile_parameterized",
    "ProviderConfig",
    "load_provider",
    "Transcript",
    "parse_output",
    "InferredParameters",
    "GatewayClient",
    "generate_conversation",
    "judge_infer_parameters",
    "EmbeddingConfig",
    "cosine_similarity",
    "embed_sentences",
    "blend_judgments",
    "cluster_topics",
    "embedding_diversity",
    "revisit_rate",
    "stability_score",
    "topic_drift_series",
    "topic_entropy",
    "ExperimentConfig",
    "ExperimentResult",
    "load_preset",
    "report",
    "resume",
    "run_experiment",
    "SimError",
    "ConfigurationError",
    "SchemaError",
    "ParseError",
    "ValidationRefused",
    "ConstraintError",
    "ProviderError",
    "InputError",
    "UndefinedSimilarityError",
    "ManifestError",
]
