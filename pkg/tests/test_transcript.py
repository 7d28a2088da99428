"""
Tests for transcript parsing
"""

import json

import pytest

from convsim.exceptions import ParseError
from convsim.transcript import (
    FLAG_TOTAL_CORRECTED,
    Provenance,
    Transcript,
    load_transcript,
    parse_output,
    repair_json_text,
    save_transcript,
)


def _document(turns=4, initiator='user', total=None):
    other = 'assistant' if initiator == 'user' else 'user'
    return {
        'metadata': {
            'participantRoles': {'user': 'entrepreneur', 'assistant': 'advisor'},
            'conversationArc': 'problem-solution',
            'totalTurns': turns if total is None else total,
            'initiator': initiator,
        },
        'conversation': [
            {
                'turn': i + 1,
                'speaker': initiator if i % 2 == 0 else other,
                'content': f"Message number {i + 1}.",
                'emotionalState': 'curiosity',
                'complexityLevel': 0.5,
            }
            for i in range(turns)
        ],
    }


def test_parse_strict_json():
    """Test a well-formed document parses"""
    transcript = parse_output(json.dumps(_document(6)))

    assert transcript.total_turns == 6
    assert transcript.initiator == 'user'
    assert transcript.arc == 'problem-solution'
    assert [t.speaker for t in transcript.turns[:2]] == ['user', 'assistant']
    assert transcript.turns[0].emotional_state == 'curiosity'
    assert len(transcript.user_turns()) == 3
    assert transcript.quality_flags == []


def test_parse_repairs_code_fences():
    """Test fenced output with surrounding prose is recovered"""
    raw = "Here is the conversation:\n```json\n" + json.dumps(_document(4)) + "\n```\nEnjoy!"

    transcript = parse_output(raw)

    assert transcript.total_turns == 4


def test_repair_json_text_outermost_object():
    """Test repair keeps the outermost braces"""
    assert repair_json_text('noise {"a": {"b": 1}} trailing') == '{"a": {"b": 1}}'
    assert repair_json_text('no json at all') is None


def test_parse_prose_keeps_raw():
    """Test unparseable output raises with the raw text attached"""
    raw = "Sorry, I cannot produce that conversation."

    with pytest.raises(ParseError) as exc_info:
        parse_output(raw)

    assert exc_info.value.raw == raw


def test_parse_broken_json_after_repair():
    """Test output that stays invalid after repair raises with a location"""
    raw = "```json\n{\"conversation\": [1, }\n```"

    with pytest.raises(ParseError) as exc_info:
        parse_output(raw)

    assert exc_info.value.location.startswith('line ')


def test_turn_gap_rejected():
    """Test turn indices must be 1..N"""
    document = _document(4)
    document['conversation'][2]['turn'] = 5

    with pytest.raises(ParseError, match='non-contiguous turn indices'):
        parse_output(json.dumps(document))


def test_speakers_must_alternate():
    """Test two consecutive turns by one speaker are rejected"""
    document = _document(4)
    document['conversation'][1]['speaker'] = 'user'

    with pytest.raises(ParseError, match='alternate'):
        parse_output(json.dumps(document))


def test_first_speaker_must_be_initiator():
    """Test the declared initiator opens the conversation"""
    document = _document(4, initiator='assistant')
    document['metadata']['initiator'] = 'user'

    with pytest.raises(ParseError, match='initiator'):
        parse_output(json.dumps(document))


def test_empty_content_rejected():
    """Test blank utterances are rejected"""
    document = _document(2)
    document['conversation'][1]['content'] = '   '

    with pytest.raises(ParseError, match='content is empty'):
        parse_output(json.dumps(document))


def test_missing_conversation_rejected():
    """Test a document without turns is rejected"""
    with pytest.raises(ParseError, match='no conversation turns'):
        parse_output('{"metadata": {}}')


def test_total_turns_corrected(caplog):
    """Test a wrong metadata total is corrected and flagged"""
    transcript = parse_output(json.dumps(_document(4, total=7)))

    assert transcript.total_turns == 4
    assert transcript.to_dict()['metadata']['totalTurns'] == 4
    assert FLAG_TOTAL_CORRECTED in transcript.quality_flags
    assert 'corrected' in caplog.text


def test_to_dict_round_trip():
    """Test serialized transcripts parse back to the same document"""
    transcript = parse_output(json.dumps(_document(6)))
    transcript.provenance = Provenance(prompt_hash='ab' * 32, provider_id='mock',
                                       model_id='mock-1', seed=3)

    again = Transcript.from_dict(json.loads(transcript.to_json()))

    assert again.to_dict() == transcript.to_dict()
    assert again.provenance.seed == 3


def test_filename_is_content_addressed():
    """Test file names combine the prompt hash prefix and model id"""
    transcript = parse_output(json.dumps(_document(2)))
    transcript.provenance = Provenance(prompt_hash='0123456789abcdef' * 4, model_id='llama3.1:70b')

    assert transcript.filename() == '0123456789abcdef__llama3.1-70b.json'


def test_save_and_load(tmp_path):
    """Test transcripts survive a trip through disk"""
    transcript = parse_output(json.dumps(_document(4)))
    transcript.provenance = Provenance(prompt_hash='f' * 64, model_id='gpt-4.1')

    path = save_transcript(transcript, tmp_path)
    loaded = load_transcript(path)

    assert path.parent == tmp_path
    assert loaded.to_dict() == transcript.to_dict()
