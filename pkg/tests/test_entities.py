"""
Tests for entity extraction
"""

import json
from unittest.mock import patch

import pytest

from convsim.entities import (
    BACKEND_SPACY,
    EntityExtractor,
    ExtractionConfig,
    extract_entities,
    rule_entities,
)
from convsim.exceptions import ConfigurationError, ProviderError
from convsim.transcript import parse_output

CONCEPTS = ExtractionConfig().concept_lexicon()


def _transcript(*contents):
    return parse_output(json.dumps({'conversation': [
        {'turn': i + 1, 'speaker': 'user' if i % 2 == 0 else 'assistant', 'content': c}
        for i, c in enumerate(contents)
    ]}))


def test_fallback_example():
    """Test organizations and lexicon concepts are canonicalized"""
    assert rule_entities('I met Acme Corp about SBA loans', CONCEPTS) == {'acme corp', 'sba loan'}


def test_sentence_initial_words():
    """Test lone sentence openers are dropped but multi-word names are kept"""
    found = rule_entities('Harbor Bank offered a line of credit. Should I call SCORE?', CONCEPTS)

    assert found == {'harbor bank', 'line of credit', 'score'}


def test_plural_concepts_fold():
    """Test plural lexicon hits map to the singular form"""
    found = rule_entities('Our suppliers raised prices, so check the supplier contracts and permits.',
                          CONCEPTS)

    assert {'supplier contract', 'permit'} <= found
    assert 'our' not in found


def test_extract_per_turn_deterministic():
    """Test one set per turn and identical results on repeat"""
    transcript = _transcript('I met Acme Corp about SBA loans.',
                             'Acme Corp works with many bakeries on cash flow.',
                             'What about my gross margin?')

    first = extract_entities(transcript)
    second = extract_entities(transcript)

    assert first == second
    assert len(first) == 3
    assert first[1] == {'acme corp', 'cash flow'}
    assert first[2] == {'gross margin'}


def test_custom_concepts():
    """Test a config lexicon replaces the bundled one"""
    cfg = ExtractionConfig(concepts=('sourdough starter',))

    sets = extract_entities(_transcript('Feed the sourdough starters daily.'), cfg)

    assert sets == [frozenset({'sourdough starter'})]


@patch('convsim.entities.SPACY_AVAILABLE', False)
def test_spacy_missing_without_fallback():
    """Test requesting spaCy without fallback fails when it is missing"""
    with pytest.raises(ProviderError, match='spaCy'):
        EntityExtractor(ExtractionConfig(backend=BACKEND_SPACY, fallback=False))


@patch('convsim.entities.SPACY_AVAILABLE', False)
def test_spacy_missing_with_fallback(caplog):
    """Test the rule extractor takes over with a warning"""
    extractor = EntityExtractor(ExtractionConfig(backend=BACKEND_SPACY))

    assert extractor.nlp is None
    assert extractor.extract('I met Acme Corp about SBA loans') == {'acme corp', 'sba loan'}
    assert 'rule-based' in caplog.text


def test_unknown_backend():
    """Test only known backends are accepted"""
    with pytest.raises(ConfigurationError):
        ExtractionConfig(backend='regex-magic')
