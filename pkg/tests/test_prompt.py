"""
Tests for prompt compilation
"""

import json
from pathlib import Path

import pytest

from convsim.exceptions import InputError, ValidationRefused
from convsim.persona import generate_profiles
from convsim.prompt import (
    MODE_BASELINE,
    MODE_PARAMETERIZED,
    PromptBundle,
    compile_baseline,
    compile_parameterized,
    render_parameter_definitions,
    template_version,
)
from convsim.schema import PARAMETER_PATHS, parse_parameters, randomize_parameters, serialize_parameters, set_path

SNAPSHOTS = Path(__file__).parent / 'snapshots'


def _snapshot(name):
    return (SNAPSHOTS / name).read_text(encoding='utf-8')


def test_serialized_appendix_matches_snapshot(appendix_params):
    """Test canonical parameter text is stable"""
    assert serialize_parameters(appendix_params) == _snapshot('appendix_parameters.json')


def test_parameterized_prompt_matches_snapshot(profile, appendix_params):
    """Test the compiled parameterized prompt is stable"""
    bundle = compile_parameterized(profile, appendix_params)

    assert bundle.instruction_text + '\n' == _snapshot('parameterized_prompt.txt')
    assert bundle.mode == MODE_PARAMETERIZED
    assert bundle.target_turns == 12
    assert bundle.template_version == template_version()


def test_baseline_prompt_matches_snapshot(profile):
    """Test the compiled baseline prompt is stable"""
    bundle = compile_baseline(profile, 10)

    assert bundle.instruction_text + '\n' == _snapshot('baseline_prompt.txt')
    assert bundle.instruction_text.startswith('Create a 10-turn conversation')


def test_parameter_block_contains_values(profile, appendix_params):
    """Test the value block carries the serialized parameters"""
    bundle = compile_parameterized(profile, appendix_params)

    assert '"knowledgeGapLevel": 3' in bundle.parameter_block
    assert bundle.parameter_block in bundle.instruction_text + '\n'


def test_section_order(profile, appendix_params):
    """Test scenario, definitions, values and output contract appear in order"""
    text = compile_parameterized(profile, appendix_params).instruction_text
    positions = [text.index(marker) for marker in (
        'Entrepreneur background:', 'Parameter definitions:', 'Conversation parameters:',
        'Output format:', 'exactly 12 turns')]

    assert positions == sorted(positions)


def test_every_parameter_appears_once():
    """Test each leaf path appears exactly once in the value block"""
    params = randomize_parameters(9)
    block = json.loads(compile_parameterized(generate_profiles(1, 1)[0], params).parameter_block)
    root = block['conversationParameters']

    for path in PARAMETER_PATHS:
        node = root
        parts = path.split('.')
        for part in parts[:-1]:
            node = node[part]
        assert list(node.keys()).count(parts[-1]) == 1


def test_parameterized_deterministic(profile, appendix_params):
    """Test identical inputs give an identical hash"""
    a = compile_parameterized(profile, appendix_params)
    b = compile_parameterized(profile, appendix_params)

    assert a.content_hash == b.content_hash
    assert a == b


def test_parameterized_refuses_invalid(profile, appendix_document):
    """Test invalid parameters are refused"""
    set_path(appendix_document['conversationParameters'], 'participants.knowledgeGapLevel', 7)
    params = parse_parameters(json.dumps(appendix_document))

    with pytest.raises(ValidationRefused):
        compile_parameterized(profile, params)


def test_omit_drops_parameters(profile, appendix_params):
    """Test omitted paths are left out of the value block"""
    bundle = compile_parameterized(profile, appendix_params, omit=['technicalLanguageLevel'])
    block = json.loads(bundle.parameter_block)['conversationParameters']

    assert 'technicalLanguageLevel' not in block['linguisticPatterns']
    assert block['conversationDynamics']['formality'] == 0.7
    assert bundle.content_hash != compile_parameterized(profile, appendix_params).content_hash


def test_baseline_has_no_definitions(profile):
    """Test the baseline prompt relies on the model alone"""
    bundle = compile_baseline(profile, 10)

    assert bundle.mode == MODE_BASELINE
    assert bundle.parameter_block is None
    assert 'Parameter definitions:' not in bundle.instruction_text
    assert 'knowledgeGapLevel' not in bundle.instruction_text
    assert 'Small Business Development Corporation' in bundle.instruction_text


def test_baseline_single_turn(profile):
    """Test one turn is a valid baseline"""
    bundle = compile_baseline(profile, 1)

    assert bundle.target_turns == 1
    assert bundle.instruction_text.startswith('Create a 1-turn conversation')


def test_baseline_rejects_zero_turns(profile):
    """Test turns must be positive"""
    with pytest.raises(InputError):
        compile_baseline(profile, 0)


def test_baseline_deterministic(profile):
    """Test identical baseline inputs give an identical hash"""
    assert compile_baseline(profile, 10).content_hash == compile_baseline(profile, 10).content_hash
    assert compile_baseline(profile, 10).content_hash != compile_baseline(profile, 11).content_hash


def test_definitions_contain_glosses():
    """Test the definition catalog includes level and grade glosses"""
    text = render_parameter_definitions()

    assert 'Laser-focused on specific details of implementation' in text
    assert 'Complete novice with minimal business knowledge' in text
    assert 'A: Perfectly flowing conversation with logical transitions' in text
    assert 'F: Highly disjointed with random topic jumping' in text
    assert render_parameter_definitions() == text


def test_bundle_dict_round_trip(profile, appendix_params):
    """Test stored bundles reproduce their hash"""
    bundle = compile_parameterized(profile, appendix_params)
    restored = PromptBundle.from_dict(json.loads(json.dumps(bundle.to_dict())))

    assert restored == bundle
    assert restored.content_hash == bundle.content_hash


def test_baseline_bundle_rejects_parameter_block():
    """Test baseline bundles cannot carry parameters"""
    with pytest.raises(InputError):
        PromptBundle(system_text='s', instruction_text='i', parameter_block='{}',
                     target_turns=1, mode=MODE_BASELINE, template_version='1')

