"""
Entity and core-concept extraction per transcript turn.

spaCy NER is used when installed and requested; otherwise a deterministic
rule-based extractor matches concept-lexicon phrases and capitalized spans.
"""

import logging
import re
import threading
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from .config import load_data
from .exceptions import ConfigurationError, ProviderError
from .transcript import Transcript

logger = logging.getLogger(__name__)

try:
    import spacy

    SPACY_AVAILABLE = True
except ImportError:
    spacy = None  # type: ignore[assignment]
    SPACY_AVAILABLE = False
    logger.debug("spaCy not installed; rule-based entity extraction only")

BACKEND_RULES = 'rules'
BACKEND_SPACY = 'spacy'

SPACY_LABELS = ('ORG', 'PERSON', 'GPE', 'LOC', 'PRODUCT', 'FAC', 'NORP', 'LAW', 'EVENT')

_SENTENCE_RE = re.compile(r"[.!?;:]+(?:\s|$)")
_TOKEN_RE = re.compile(r"[A-Za-z0-9]+(?:['&-][A-Za-z0-9]+)*")

# Capitalized words that never found an entity on their own
_STOPWORDS = frozenset("""
i i'm i've i'd i'll me my we our you your he she it they them their this that these those
a an the and or but so if then yes no ok okay hi hello hey thanks thank great good sure well
what when where why how who which can could should would will shall may might must do does did
is are was were be been let let's maybe also just first next finally
""".split())


@dataclass(frozen=True)
class ExtractionConfig:
    """
    Entity extraction settings.

    Args:
        backend: 'rules' or 'spacy'
        model: spaCy pipeline name
        fallback: Use the rules when spaCy is requested but unavailable
        concepts: Concept lexicon (bundled lexicon when empty)
    """
    backend: str = BACKEND_RULES
    model: str = 'en_core_web_sm'
    fallback: bool = True
    concepts: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.backend not in (BACKEND_RULES, BACKEND_SPACY):
            raise ConfigurationError(f"Unknown extraction backend: {self.backend}")

    def concept_lexicon(self) -> Tuple[str, ...]:
        return self.concepts or tuple(load_data('lexicons.json')['concepts'])

    def to_dict(self) -> Dict:
        return {'backend': self.backend, 'model': self.model, 'fallback': self.fallback}

    @classmethod
    def from_dict(cls, data: Optional[Dict]) -> 'ExtractionConfig':
        data = data or {}
        return cls(
            backend=data.get('backend', BACKEND_RULES),
            model=data.get('model', 'en_core_web_sm'),
            fallback=data.get('fallback', True),
            concepts=tuple(data.get('concepts') or ()),
        )


def _singular(word: str) -> str:
    if len(word) > 3 and word.endswith('ies'):
        return word[:-3] + 'y'
    if len(word) > 3 and word.endswith('s') and not word.endswith('ss'):
        return word[:-1]
    return word


def _match_concepts(lower: List[str], consumed: List[bool], concepts: Tuple[str, ...]) -> List[str]:
    found = []
    phrases = sorted({tuple(c.lower().split()) for c in concepts}, key=lambda p: (-len(p), p))
    for phrase in phrases:
        k = len(phrase)
        for i in range(len(lower) - k + 1):
            if any(consumed[i:i + k]):
                continue
            window = lower[i:i + k]
            if window[:-1] == list(phrase[:-1]) and _singular(window[-1]) == _singular(phrase[-1]):
                found.append(' '.join(phrase[:-1] + (_singular(phrase[-1]),)))
                for j in range(i, i + k):
                    consumed[j] = True
    return found


def _capitalized_spans(tokens: List[str], consumed: List[bool]) -> List[str]:
    def candidate(k: int) -> bool:
        return not consumed[k] and tokens[k][0].isupper() and tokens[k].lower() not in _STOPWORDS

    found = []
    i = 0
    while i < len(tokens):
        if not candidate(i):
            i += 1
            continue
        j = i
        while j < len(tokens) and candidate(j):
            j += 1
        span = tokens[i:j]
        word = span[0]
        if len(span) > 1 or i > 0 or (word.isupper() and len(word) > 1):
            found.append(' '.join(span).lower())
        i = j
    return found


def rule_entities(text: str, concepts: Tuple[str, ...]) -> FrozenSet[str]:
    """
    Rule-based extraction.

    Per sentence: concept-lexicon phrases match first (longest first,
    trailing plural folded to the singular) and consume their tokens; runs
    of capitalized non-function words among the rest become entities. A
    lone capitalized word opening the sentence is dropped unless it is an
    acronym.
    """
    entities: List[str] = []
    for sentence in _SENTENCE_RE.split(text):
        tokens = _TOKEN_RE.findall(sentence)
        if not tokens:
            continue
        lower = [t.lower() for t in tokens]
        consumed = [False] * len(tokens)
        entities.extend(_match_concepts(lower, consumed, concepts))
        entities.extend(_capitalized_spans(tokens, consumed))
    return frozenset(entities)


class EntityExtractor:
    """Extracts canonical entity sets, loading spaCy at most once"""

    def __init__(self, cfg: Optional[ExtractionConfig] = None):
        self.cfg = cfg or ExtractionConfig()
        self.concepts = self.cfg.concept_lexicon()
        self.nlp: Optional[Any] = None
        self._lock = threading.Lock()
        if self.cfg.backend == BACKEND_SPACY:
            self.nlp = self._load_spacy()

    def _load_spacy(self) -> Optional[Any]:
        reason = None
        if not SPACY_AVAILABLE:
            reason = "spaCy is not installed (pip install convsim[ner])"
        else:
            try:
                nlp = spacy.load(self.cfg.model)
                logger.info("Entity extraction with spaCy model %s", self.cfg.model)
                return nlp
            except OSError:
                reason = f"spaCy model '{self.cfg.model}' not found (python -m spacy download {self.cfg.model})"
        if not self.cfg.fallback:
            raise ProviderError(reason, provider='spacy')
        logger.warning("%s; using rule-based extraction", reason)
        return None

    def _spacy_entities(self, text: str) -> FrozenSet[str]:
        with self._lock:
            doc = self.nlp(text)  # type: ignore[misc]
        found = set(rule_entities(text, self.concepts))
        for ent in doc.ents:
            if ent.label_ in SPACY_LABELS:
                lemma = ' '.join(t.lemma_ for t in ent if not t.is_punct).lower().strip()
                if lemma and lemma not in _STOPWORDS:
                    found.add(lemma)
        return frozenset(found)

    def extract(self, text: str) -> FrozenSet[str]:
        if self.nlp is not None:
            return self._spacy_entities(text)
        return rule_entities(text, self.concepts)


def extract_entities(transcript: Transcript, ner: Optional[ExtractionConfig] = None) -> List[FrozenSet[str]]:
    """
    Canonical entity set for every turn, in turn order.

    Raises:
        ProviderError: spaCy requested, unavailable, and fallback disabled
    """
    extractor = EntityExtractor(ner)
    return [extractor.extract(turn.content) for turn in transcript.turns]
