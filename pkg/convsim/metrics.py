"""
Evaluation metrics: topic diversity, topic drift, parameter adherence,
character stability and entity revisit rate
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .embed import EmbeddingConfig, cosine_similarity, embed_sentences, similarity_matrix
from .exceptions import ConfigurationError, InputError
from .judge import DEFAULT_JUDGED, InferredParameters
from .lexical import ScoringConfig, default_scoring, formality_score, technical_score
from .schema import PARAMETER_PATHS, ConversationParameters, LEVEL_MAX, LEVEL_MIN
from .transcript import Transcript

logger = logging.getLogger(__name__)

DEFAULT_CLUSTER_THRESHOLD = 0.85


# =============================================================================
# Topic diversity
# =============================================================================


@dataclass
class TopicCluster:
    representative: str
    members: List[str] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.members)

    def to_dict(self) -> Dict:
        return {'representative': self.representative, 'members': self.members, 'count': self.count}


@dataclass
class TopicClusterSet:
    """Near-duplicate topics merged into clusters; every topic sits in exactly one"""
    clusters: List[TopicCluster]
    threshold: float

    def __len__(self) -> int:
        return len(self.clusters)

    def counts(self) -> List[int]:
        return [c.count for c in self.clusters]

    def to_dict(self) -> Dict:
        return {'threshold': self.threshold, 'clusters': [c.to_dict() for c in self.clusters]}


def cluster_topics(topics: Sequence[str], threshold: float = DEFAULT_CLUSTER_THRESHOLD,
                   model: Optional[EmbeddingConfig] = None) -> TopicClusterSet:
    """
    Greedy threshold clustering of topic strings.

    Each topic joins the first existing cluster whose representative has
    cosine similarity >= threshold, else founds a new cluster. The result
    depends on input order only.

    Raises:
        InputError: threshold outside (0, 1)
    """
    if not 0 < threshold < 1:
        raise InputError(f"Cluster threshold must be in (0, 1) (got {threshold})")
    result = TopicClusterSet(clusters=[], threshold=threshold)
    if not topics:
        return result

    vectors = [v.array for v in embed_sentences(list(topics), model)]
    representatives: List[np.ndarray] = []
    for topic, vector in zip(topics, vectors):
        for cluster, rep in zip(result.clusters, representatives):
            if cosine_similarity(vector, rep) >= threshold:
                cluster.members.append(topic)
                break
        else:
            result.clusters.append(TopicCluster(representative=topic, members=[topic]))
            representatives.append(vector)
    return result


def topic_entropy(counts: Sequence[float]) -> float:
    """
    Shannon entropy in bits of a count distribution.

    Example:
        >>> topic_entropy([2, 1, 1])
        1.5

    Raises:
        InputError: Empty counts or a count <= 0
    """
    if len(counts) == 0:
        raise InputError("Entropy needs at least one count")
    values = np.asarray(counts, dtype=float)
    if np.any(values <= 0):
        raise InputError("Entropy counts must all be positive")
    p = values / values.sum()
    return float(max(0.0, -np.sum(p * np.log2(p))))


def embedding_diversity(texts: Sequence[str], model: Optional[EmbeddingConfig] = None) -> float:
    """
    Mean pairwise cosine distance (1 - cos) over all unordered pairs.

    Raises:
        InputError: Fewer than two texts
    """
    if len(texts) < 2:
        raise InputError("Embedding diversity needs at least two texts")
    sims = similarity_matrix(embed_sentences(list(texts), model))
    upper = sims[np.triu_indices(len(texts), k=1)]
    return float(np.mean(1.0 - upper))


# =============================================================================
# Topic drift and coherence
# =============================================================================


@dataclass
class DriftSeries:
    """Per user turn similarity to the opening topic; drift is 1 - similarity"""
    points: List[Tuple[int, float]]

    @property
    def turns(self) -> List[int]:
        return [turn for turn, _ in self.points]

    @property
    def similarities(self) -> List[float]:
        return [sim for _, sim in self.points]

    @property
    def drifts(self) -> List[float]:
        return [1.0 - sim for _, sim in self.points]

    def to_dict(self) -> Dict:
        return {'turns': self.turns, 'similarity': self.similarities, 'drift': self.drifts}


def topic_drift_series(transcript: Transcript, opening_topic: str,
                       model: Optional[EmbeddingConfig] = None) -> DriftSeries:
    """
    Similarity of each entrepreneur utterance to the opening business topic.

    Raises:
        InputError: No user turns or empty opening topic
    """
    user_turns = transcript.user_turns()
    if not user_turns:
        raise InputError("Transcript has no user turns")
    if not opening_topic or not opening_topic.strip():
        raise InputError("Opening topic is empty")
    vectors = embed_sentences([opening_topic] + [t.content for t in user_turns], model)
    anchor = vectors[0]
    return DriftSeries(points=[(turn.turn, cosine_similarity(vector, anchor))
                               for turn, vector in zip(user_turns, vectors[1:])])


def topic_coherence(transcript: Transcript, model: Optional[EmbeddingConfig] = None) -> float:
    """
    Mean cosine similarity of adjacent turns.

    Raises:
        InputError: Fewer than two turns
    """
    if transcript.total_turns < 2:
        raise InputError("Coherence needs at least two turns")
    vectors = embed_sentences([t.content for t in transcript.turns], model)
    return float(np.mean([cosine_similarity(a, b) for a, b in zip(vectors, vectors[1:])]))


# =============================================================================
# Parameter adherence
# =============================================================================


@dataclass
class AdherenceScore:
    """
    Per-parameter MSE (numeric) and accuracy (categorical).

    weights records (human, llm) shares when the score is a blend.
    """
    numeric_mse: Dict[str, float] = field(default_factory=dict)
    categorical_accuracy: Dict[str, float] = field(default_factory=dict)
    weights: Tuple[float, float] = (0.0, 1.0)
    scored: Dict[str, int] = field(default_factory=dict)
    excluded: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        human, llm = self.weights
        if human < 0 or llm < 0 or not math.isclose(human + llm, 1.0):
            raise InputError(f"Blend weights must be non-negative and sum to 1 (got {self.weights})")

    @property
    def empty(self) -> bool:
        return not self.numeric_mse and not self.categorical_accuracy

    def to_dict(self) -> Dict:
        return {
            'numericMse': self.numeric_mse,
            'categoricalAccuracy': self.categorical_accuracy,
            'weights': list(self.weights),
            'scored': self.scored,
            'excluded': self.excluded,
        }


def _as_series(values: Any) -> List[Any]:
    if isinstance(values, (list, tuple)):
        return list(values)
    return [values]


def _paired(set_values: Mapping[str, Any], inferred: Mapping[str, Any]):
    unknown = sorted(set(inferred) - set(set_values))
    if unknown:
        raise InputError(f"Inferred parameters not in the set values: {', '.join(unknown)}")
    for path, judged in inferred.items():
        truth, guess = _as_series(set_values[path]), _as_series(judged)
        if len(truth) != len(guess):
            raise InputError(f"{path}: {len(truth)} set values vs {len(guess)} inferred values")
        yield path, list(zip(truth, guess))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def adherence_numeric(set_values: Mapping[str, Any], inferred: Mapping[str, Any]) -> Dict[str, float]:
    """
    Mean squared error per parameter over conversations.

    Values are scalars (one conversation) or equal-length sequences;
    None in inferred marks an unanswered or rejected judgment and is
    skipped. Paths with nothing scored are left out.

    Example:
        >>> adherence_numeric({'focus': 3, 'kgl': 5}, {'focus': 1, 'kgl': 5})
        {'focus': 4.0, 'kgl': 0.0}

    Raises:
        InputError: Unknown inferred path, length mismatch, or a label where a number belongs
    """
    result: Dict[str, float] = {}
    for path, pairs in _paired(set_values, inferred):
        errors = []
        for truth, guess in pairs:
            if guess is None:
                continue
            if not _is_number(truth) or not _is_number(guess):
                raise InputError(f"{path}: scale mismatch ({truth!r} vs {guess!r})")
            errors.append((float(truth) - float(guess)) ** 2)
        if errors:
            result[path] = float(np.mean(errors))
        else:
            logger.warning("No scored judgments for %s", path)
    return result


def adherence_categorical(set_values: Mapping[str, Any], inferred: Mapping[str, Any]) -> Dict[str, float]:
    """
    Classification accuracy per parameter; None judgments leave the denominator.

    Raises:
        InputError: Unknown inferred path, length mismatch, or a number where a label belongs
    """
    result: Dict[str, float] = {}
    for path, pairs in _paired(set_values, inferred):
        correct = total = 0
        for truth, guess in pairs:
            if guess is None:
                continue
            if not isinstance(truth, str) or not isinstance(guess, str):
                raise InputError(f"{path}: scale mismatch ({truth!r} vs {guess!r})")
            total += 1
            correct += truth == guess
        if total:
            result[path] = correct / total
        else:
            logger.warning("No scored judgments for %s", path)
    return result


def score_adherence(pairs: Sequence[Tuple[ConversationParameters, InferredParameters]],
                    paths: Sequence[str] = DEFAULT_JUDGED) -> AdherenceScore:
    """
    Adherence of a set of judged conversations.

    Args:
        pairs: (generating parameters, judge output) per conversation
        paths: Parameters to score
    """
    truth: Dict[str, List[Any]] = {p: [] for p in paths}
    judged: Dict[str, List[Any]] = {p: [] for p in paths}
    excluded: Dict[str, int] = {}
    for params, inferred in pairs:
        for path in paths:
            truth[path].append(params.value(path))
            judged[path].append(inferred.value(path))
            if path in inferred.invalid:
                excluded[path] = excluded.get(path, 0) + 1

    numeric = [p for p in paths if PARAMETER_PATHS[p].is_numeric]
    categorical = [p for p in paths if PARAMETER_PATHS[p].is_categorical]
    return AdherenceScore(
        numeric_mse=adherence_numeric({p: truth[p] for p in numeric}, {p: judged[p] for p in numeric}),
        categorical_accuracy=adherence_categorical({p: truth[p] for p in categorical},
                                                   {p: judged[p] for p in categorical}),
        scored={p: sum(v is not None for v in judged[p]) for p in paths},
        excluded=excluded,
    )


def blend_judgments(human: Optional[AdherenceScore], llm: AdherenceScore,
                    agreement: Tuple[float, float] = (0.5, 0.5)) -> AdherenceScore:
    """
    Weighted mean of human and LLM adherence, weights from agreement levels.

    Without human scores the LLM scores pass through with weights (0, 1).
    A parameter scored by only one side keeps that side's value.

    Raises:
        ConfigurationError: Negative agreement, or both agreements zero
    """
    human_agreement, llm_agreement = agreement
    if human_agreement < 0 or llm_agreement < 0:
        raise ConfigurationError(f"Agreement levels must be >= 0 (got {agreement})")
    if human is None or human.empty:
        return AdherenceScore(numeric_mse=dict(llm.numeric_mse),
                              categorical_accuracy=dict(llm.categorical_accuracy),
                              weights=(0.0, 1.0), scored=dict(llm.scored), excluded=dict(llm.excluded))
    total = human_agreement + llm_agreement
    if total == 0:
        raise ConfigurationError("Both agreement levels are zero; blend weights undefined")
    wh, wl = human_agreement / total, llm_agreement / total

    def mix(a: Dict[str, float], b: Dict[str, float]) -> Dict[str, float]:
        mixed = {}
        for path in list(dict.fromkeys(list(a) + list(b))):
            if path in a and path in b:
                mixed[path] = wh * a[path] + wl * b[path]
            else:
                mixed[path] = a.get(path, b.get(path))  # type: ignore[assignment]
        return mixed

    return AdherenceScore(
        numeric_mse=mix(human.numeric_mse, llm.numeric_mse),
        categorical_accuracy=mix(human.categorical_accuracy, llm.categorical_accuracy),
        weights=(wh, 1.0 - wh),
        scored={p: human.scored.get(p, 0) + llm.scored.get(p, 0)
                for p in dict.fromkeys(list(human.scored) + list(llm.scored))},
    )


def _value_agreement(path: str, a: Any, b: Any) -> float:
    spec = PARAMETER_PATHS[path]
    if spec.kind == 'level':
        return 1.0 - abs(float(a) - float(b)) / (LEVEL_MAX - LEVEL_MIN)
    if spec.kind == 'unit':
        return 1.0 - abs(float(a) - float(b))
    return 1.0 if a == b else 0.0


def _record_agreement(a: InferredParameters, b: InferredParameters) -> Optional[float]:
    shared = [p for p in list(a.numeric) + list(a.categorical) if b.value(p) is not None]
    if not shared:
        return None
    return float(np.mean([_value_agreement(p, a.value(p), b.value(p)) for p in shared]))


def agreement_levels(human: Sequence[InferredParameters],
                     llm: Sequence[InferredParameters]) -> Tuple[float, float]:
    """
    (human, llm) agreement levels on conversations both judged.

    LLM agreement is the mean LLM-human agreement. Human agreement is the
    mean pairwise inter-annotator agreement, or the LLM-human agreement when
    no conversation has two annotators. (0.5, 0.5) without shared data.
    Numeric values agree by one minus their normalized distance;
    categorical values agree when equal.
    """
    by_conversation: Dict[str, List[InferredParameters]] = {}
    for record in human:
        by_conversation.setdefault(str(record.conversation_id), []).append(record)

    llm_scores = []
    for record in llm:
        for label in by_conversation.get(str(record.conversation_id), []):
            score = _record_agreement(record, label)
            if score is not None:
                llm_scores.append(score)
    if not llm_scores:
        return 0.5, 0.5

    human_scores = []
    for labels in by_conversation.values():
        for a, b in combinations(labels, 2):
            score = _record_agreement(a, b)
            if score is not None:
                human_scores.append(score)
    llm_level = float(np.mean(llm_scores))
    human_level = float(np.mean(human_scores)) if human_scores else llm_level
    return human_level, llm_level


# =============================================================================
# Character stability
# =============================================================================


@dataclass
class StabilityScore:
    formality_error: float
    technical_error: float
    stability: float
    measured_formality: Optional[float] = None
    measured_technical: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'formalityError': self.formality_error,
            'technicalError': self.technical_error,
            'stability': self.stability,
            'measuredFormality': self.measured_formality,
            'measuredTechnical': self.measured_technical,
        }


def stability_from_errors(formality_error: float, technical_error: float) -> float:
    """
    1 - 0.5 (eF + eT)

    Raises:
        InputError: An error outside [0, 1]
    """
    for name, value in (('formality', formality_error), ('technical', technical_error)):
        if not 0.0 <= value <= 1.0:
            raise InputError(f"{name} error must be in [0, 1] (got {value})")
    return 1 - 0.5 * (formality_error + technical_error)


def stability_score(transcript: Transcript, params: ConversationParameters,
                    scoring: Optional[ScoringConfig] = None) -> StabilityScore:
    """
    Distance of the entrepreneur's measured register from its targets.

    Each user turn is scored on its own; the turn scores are averaged and
    compared with the formality and technical-language targets.

    Raises:
        InputError: Transcript has no user turns
    """
    user_turns = transcript.user_turns()
    if not user_turns:
        raise InputError("Transcript has no user turns")
    scoring = scoring or default_scoring()
    formality = float(np.mean([formality_score(t.content, scoring) for t in user_turns]))
    technical = float(np.mean([technical_score(t.content, scoring) for t in user_turns]))
    e_f = abs(formality - params.dynamics.formality)
    e_t = abs(technical - params.linguistic.technical_language_level)
    return StabilityScore(
        formality_error=e_f,
        technical_error=e_t,
        stability=stability_from_errors(e_f, e_t),
        measured_formality=formality,
        measured_technical=technical,
    )


# =============================================================================
# Entity revisit rate
# =============================================================================


@dataclass
class RevisitResult:
    """
    Per-turn share of a turn's entities already seen earlier.

    per_turn[0] is always None (turn 1 has no history); later entries are
    None when the turn has no entities and are skipped in the mean.
    raw_count is the unnormalized mean overlap count over turns 2..T.
    """
    per_turn: List[Optional[float]]
    rate: float
    raw_count: float
    entity_sets: List[FrozenSet[str]]

    @property
    def skipped(self) -> int:
        return sum(1 for v in self.per_turn[1:] if v is None)

    def to_dict(self) -> Dict:
        return {
            'perTurn': self.per_turn,
            'rate': self.rate,
            'rawCount': self.raw_count,
            'skipped': self.skipped,
            'entities': [sorted(s) for s in self.entity_sets],
        }


def revisit_rate(entity_sets: Sequence[FrozenSet[str]]) -> RevisitResult:
    """
    Entity revisit rate of a conversation.

    Raises:
        InputError: Fewer than two turns
    """
    if len(entity_sets) < 2:
        raise InputError("Revisit rate needs at least two turns")
    sets = [frozenset(s) for s in entity_sets]
    seen = set(sets[0])
    per_turn: List[Optional[float]] = [None]
    overlap_total = 0
    for current in sets[1:]:
        overlap = len(current & seen)
        overlap_total += overlap
        per_turn.append(overlap / len(current) if current else None)
        seen |= current
    fractions = [v for v in per_turn[1:] if v is not None]
    return RevisitResult(
        per_turn=per_turn,
        rate=float(np.mean(fractions)) if fractions else 0.0,
        raw_count=overlap_total / (len(sets) - 1),
        entity_sets=sets,
    )
