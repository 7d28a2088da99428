"""
Lexical scorers for register stability: formality and technical level.

Each score is the equal-weight mean of three sub-scores, each a raw text
feature mapped linearly onto [0, 1] between calibration bounds and clamped.
All features are ratios, so duplicating a text leaves its score unchanged.

Sentences and words come from nltk. The reading grade comes from textstat
when it is installed, else from the same Flesch-Kincaid formula over a
vowel-group syllable estimate.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from nltk.tokenize import PunktSentenceTokenizer, TreebankWordTokenizer

from .config import load_data
from .exceptions import InputError

logger = logging.getLogger(__name__)

try:
    import textstat
    TEXTSTAT_AVAILABLE = True
except ImportError:
    textstat = None  # type: ignore[assignment]
    TEXTSTAT_AVAILABLE = False
    logger.debug("textstat not installed; reading grade uses the built-in syllable estimate")

# Untrained punkt needs no model download and splits the same everywhere
_SENTENCES = PunktSentenceTokenizer()
_WORDS = TreebankWordTokenizer()
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")

BOUND_NAMES = ('wordLength', 'typeTokenRatio', 'sentenceLength', 'pronounRate',
               'termDensity', 'grade', 'jargonPerSentence')


@dataclass(frozen=True)
class ScoringConfig:
    """Lexicons and calibration bounds (measurement instruments, not ground truth)"""
    domain_terms: Tuple[str, ...]
    jargon: Tuple[str, ...]
    pronouns: FrozenSet[str]
    bounds: Dict[str, Tuple[float, float]] = field(hash=False)

    def __post_init__(self):
        for name in BOUND_NAMES:
            low, high = self.bounds.get(name, (None, None))
            if low is None or high is None or high <= low:
                raise InputError(f"Calibration bound {name} must be [low, high] with low < high")

    @classmethod
    def from_dict(cls, data: Dict) -> 'ScoringConfig':
        return cls(
            domain_terms=tuple(t.lower() for t in data.get('domainTerms', [])),
            jargon=tuple(t.lower() for t in data.get('jargon', [])),
            pronouns=frozenset(p.lower() for p in data.get('pronouns', [])),
            bounds={k: (float(v[0]), float(v[1])) for k, v in (data.get('bounds') or {}).items()},
        )

    def to_dict(self) -> Dict:
        return {
            'domainTerms': list(self.domain_terms),
            'jargon': list(self.jargon),
            'pronouns': sorted(self.pronouns),
            'bounds': {k: list(v) for k, v in self.bounds.items()},
        }


def default_scoring() -> ScoringConfig:
    """Scoring config from the bundled lexicons.json"""
    return ScoringConfig.from_dict(load_data('lexicons.json'))


def _scale(value: float, bounds: Tuple[float, float]) -> float:
    low, high = bounds
    return float(np.clip((value - low) / (high - low), 0.0, 1.0))


def tokenize(text: str) -> List[str]:
    """Lowercased word tokens; punctuation tokens are dropped"""
    return [t for t in _WORDS.tokenize(text.lower()) if any(ch.isalnum() for ch in t)]


def split_sentences(text: str) -> List[List[str]]:
    """Sentences as token lists; fragments without words are dropped"""
    sentences = [tokenize(part) for part in _SENTENCES.tokenize(text)]
    return [s for s in sentences if s]


def count_syllables(word: str) -> int:
    """Vowel-group estimate used when textstat is not installed"""
    return max(1, len(_VOWEL_GROUP_RE.findall(word)))


def count_phrases(tokens: List[str], phrases: Tuple[str, ...]) -> int:
    """
    Occurrences of lexicon phrases in a token stream.

    Longer phrases match first and consume their tokens; a trailing plural
    's' is tolerated.
    """
    text = f" {' '.join(tokens)} "
    hits = 0
    for phrase in sorted(phrases, key=len, reverse=True):
        pattern = re.compile(r" " + re.escape(' '.join(tokenize(phrase))) + r"s? ")
        while True:
            text, n = pattern.subn('  ', text)
            if not n:
                break
            hits += n
    return hits


def _words(text: str) -> Tuple[List[str], List[List[str]]]:
    sentences = split_sentences(text)
    tokens = [t for s in sentences for t in s]
    if not tokens:
        raise InputError("Text has no words to score")
    return tokens, sentences


def formality_features(text: str, scoring: Optional[ScoringConfig] = None) -> Dict[str, float]:
    """Raw features and sub-scores behind formality_score"""
    scoring = scoring or default_scoring()
    tokens, sentences = _words(text)
    bounds = scoring.bounds

    word_length = float(np.mean([len(t) for t in tokens]))
    # Per-sentence TTR keeps the ratio independent of text length
    ttr = float(np.mean([len(set(s)) / len(s) for s in sentences]))
    sentence_length = len(tokens) / len(sentences)
    pronoun_rate = sum(1 for t in tokens if t in scoring.pronouns) / len(tokens)

    vocabulary = (_scale(word_length, bounds['wordLength']) + _scale(ttr, bounds['typeTokenRatio'])) / 2
    structure = _scale(sentence_length, bounds['sentenceLength'])
    pronouns = 1.0 - _scale(pronoun_rate, bounds['pronounRate'])
    return {
        'wordLength': word_length,
        'typeTokenRatio': ttr,
        'sentenceLength': sentence_length,
        'pronounRate': pronoun_rate,
        'vocabulary': vocabulary,
        'structure': structure,
        'pronouns': pronouns,
        'score': (vocabulary + structure + pronouns) / 3,
    }


def formality_score(text: str, scoring: Optional[ScoringConfig] = None) -> float:
    """
    Formality of a text in [0, 1].

    Mean of vocabulary sophistication (word length and type-token ratio),
    sentence structure (words per sentence) and pronoun usage (one minus the
    first/second-person pronoun rate).

    Raises:
        InputError: Text has no words
    """
    return formality_features(text, scoring)['score']


def grade_level(text: str, tokens: List[str], sentences: List[List[str]]) -> float:
    """Flesch-Kincaid grade of a text"""
    if TEXTSTAT_AVAILABLE:
        return float(textstat.flesch_kincaid_grade(text))
    syllables = sum(count_syllables(t) for t in tokens)
    return 0.39 * len(tokens) / len(sentences) + 11.8 * syllables / len(tokens) - 15.59


def technical_features(text: str, scoring: Optional[ScoringConfig] = None) -> Dict[str, float]:
    """Raw features and sub-scores behind technical_score"""
    scoring = scoring or default_scoring()
    if not scoring.domain_terms or not scoring.jargon:
        raise InputError("Technical scoring needs non-empty domain term and jargon lexicons")
    tokens, sentences = _words(text)
    bounds = scoring.bounds

    density = count_phrases(tokens, scoring.domain_terms) / len(tokens)
    grade = grade_level(text, tokens, sentences)
    jargon_rate = count_phrases(tokens, scoring.jargon) / len(sentences)

    terms = _scale(density, bounds['termDensity'])
    complexity = _scale(grade, bounds['grade'])
    jargon = _scale(jargon_rate, bounds['jargonPerSentence'])
    return {
        'termDensity': density,
        'grade': grade,
        'jargonPerSentence': jargon_rate,
        'terms': terms,
        'complexity': complexity,
        'jargon': jargon,
        'score': (terms + complexity + jargon) / 3,
    }


def technical_score(text: str, scoring: Optional[ScoringConfig] = None) -> float:
    """
    Technical level of a text in [0, 1].

    Mean of domain-term density (lexicon hits per token), concept
    complexity (reading grade) and jargon usage (jargon hits per sentence).

    Raises:
        InputError: Text has no words or the lexicons are empty
    """
    return technical_features(text, scoring)['score']
