"""
Tests for experiment runs, resumption and reports
"""

import json
import logging
import math
from unittest.mock import patch

import pandas as pd
import pytest

from convsim.exceptions import ConfigurationError, InputError, ManifestError
from convsim.gateway import GatewayClient
from convsim.runner import (
    TABLE_COLUMNS,
    ExperimentConfig,
    ExperimentResult,
    cell_seed,
    design_grid,
    load_preset,
    load_result,
    report,
    resume,
    run_experiment,
    with_overrides,
)
from convsim.schema import ROOT_KEY
from convsim.transcript import load_transcript, parse_output


def _small(kind, tmp_path, name='run', **kwargs):
    kwargs.setdefault('profiles', 2)
    kwargs.setdefault('turns', (6,))
    return ExperimentConfig(kind=kind, providers=('mock',), judge='mock',
                            output_dir=str(tmp_path / name), **kwargs)


def _read(path):
    return [json.loads(line) for line in path.read_text(encoding='utf-8').splitlines() if line]


def test_drift_preset_grid():
    """Test the drift preset covers A, F and baseline with 200 profiles each"""
    config = load_preset('paper-drift')

    grid = design_grid(config)

    assert len(grid) == 600
    assert {cell.arm for cell in grid} == {'A', 'F', 'baseline'}
    assert {cell.turns for cell in grid} == {20}


def test_scaled_mock_drift_grid():
    """Test a 1/50 scale drift run has 12 cells on the mock provider"""
    config = with_overrides(load_preset('paper-drift'), scale=0.02, mock=True)

    grid = design_grid(config)

    assert config.profiles == 4
    assert len(grid) == 12
    assert {cell.provider_id for cell in grid} == {'mock'}


def test_mock_override_uses_stub_embeddings():
    """Test mock runs swap the preset embedding model for the offline stub"""
    preset = load_preset('paper-drift')
    assert preset.embedding.backend == 'sentence-transformers'

    config = with_overrides(preset, mock=True)

    assert config.embedding.backend == 'stub'
    assert config.judge == 'mock'


def test_scale_never_below_one():
    """Test scaling keeps at least one profile and rejects non-positive factors"""
    config = load_preset('paper-revisit')

    assert config.scaled(0.0001).profiles == 1
    with pytest.raises(ConfigurationError):
        config.scaled(0)


def test_empty_grid_rejected():
    """Test a design without profiles or providers is a configuration error"""
    with pytest.raises(ConfigurationError):
        design_grid(ExperimentConfig(kind='drift', profiles=0, providers=('mock',)))
    with pytest.raises(ConfigurationError):
        design_grid(ExperimentConfig(kind='drift', providers=()))


def test_config_validation():
    """Test unknown kinds, foreign arms and bad levels are refused"""
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind='vibes')
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind='adherence', arms=('baseline',))
    with pytest.raises(ConfigurationError):
        ExperimentConfig(kind='revisit', levels=(0, 6))


def test_config_hash_ignores_execution_settings(tmp_path):
    """Test output directory and workers do not change the config hash"""
    config = _small('drift', tmp_path)
    moved = ExperimentConfig.from_dict(config.to_dict())
    moved.workers = 1

    assert moved.config_hash() == config.config_hash()
    assert with_overrides(config, scale=2).config_hash() != config.config_hash()


def test_arms_share_parameter_seed():
    """Test the arms of one profile draw the same parameters"""
    config = ExperimentConfig(kind='drift', profiles=1, turns=(8,), providers=('mock',))
    a, f, baseline = design_grid(config)

    assert cell_seed(config, a) == cell_seed(config, f) == cell_seed(config, baseline)


def test_offline_drift_run(tmp_path):
    """Test a scaled mock drift run end to end, then a rerun without provider calls"""
    config = with_overrides(load_preset('paper-drift'), scale=0.02, mock=True,
                            output_dir=str(tmp_path / 'drift'))

    result = run_experiment(config, progress=False)

    assert len(result.records) == 12
    assert result.failures == []
    assert result.stats['providerCalls'] == 12
    for record in result.records:
        transcript = load_transcript(result.run_dir / record['transcript'])
        assert transcript.total_turns == 20
        assert parse_output(transcript.to_json()).to_dict() == transcript.to_dict()
        assert record['metrics']['drift']['similarity'][0] == pytest.approx(1.0)

    paths = report(result, 'csv')
    header = paths[0].read_text(encoding='utf-8').splitlines()[0]
    assert paths[0].name == 'drift_series.csv'
    assert header == 'model,arm,turn,similarity,drift,conversations'
    series = pd.read_csv(paths[0])
    assert set(series['arm']) == {'A', 'F', 'baseline'}
    assert (series['drift'] - (1 - series['similarity'])).abs().max() < 1e-12

    records_file = result.run_dir / 'metrics' / 'records.jsonl'
    before = records_file.read_bytes()
    again = run_experiment(config, client=GatewayClient(), progress=False)

    assert again.stats['providerCalls'] == 0
    assert again.stats['cellsReplayed'] == 12
    assert records_file.read_bytes() == before


def test_baseline_bundles_have_no_parameters(tmp_path):
    """Test stored baseline bundles carry no parameter block"""
    result = run_experiment(_small('drift', tmp_path), progress=False)

    for record in result.records:
        bundle = json.loads((result.run_dir / record['bundle']).read_text(encoding='utf-8'))
        if record['arm'] == 'baseline':
            assert bundle['mode'] == 'baseline'
            assert bundle['parameterBlock'] is None
            assert record['parameters'] is None
        else:
            assert bundle['parameterBlock'] is not None
            assert record['parameters']['conversationDynamics']['smoothnessFactor'] == record['arm']


def test_identical_configs_identical_outputs(tmp_path):
    """Test two mock runs of one config write byte-identical records and aggregates"""
    first = run_experiment(_small('drift', tmp_path, name='one'), client=GatewayClient(use_cache=False),
                           progress=False)
    second = run_experiment(_small('drift', tmp_path, name='two'), client=GatewayClient(use_cache=False),
                            progress=False)

    for name in ('records.jsonl', 'aggregates.jsonl'):
        assert (first.run_dir / 'metrics' / name).read_bytes() == \
            (second.run_dir / 'metrics' / name).read_bytes()


def test_new_run_dir_replays_cache(tmp_path):
    """Test a second run directory is filled from the response cache"""
    run_experiment(_small('drift', tmp_path, name='one'), progress=False)

    again = run_experiment(_small('drift', tmp_path, name='two'), progress=False)

    assert again.stats['providerCalls'] == 0
    assert again.stats['cellsCompleted'] == 6


def test_resume_finishes_missing_cells(tmp_path):
    """Test resume runs only the cells missing from the records"""
    config = _small('drift', tmp_path, profiles=4)
    full = run_experiment(config, progress=False)
    records_file = full.run_dir / 'metrics' / 'records.jsonl'
    complete = records_file.read_bytes()
    lines = complete.decode('utf-8').splitlines(keepends=True)
    records_file.write_text(''.join(lines[:6]) + '{"cellId": "torn', encoding='utf-8')

    resumed = resume(full.run_dir, client=GatewayClient(use_cache=False), progress=False)

    assert resumed.stats['cellsReplayed'] == 6
    assert resumed.stats['cellsCompleted'] == 6
    assert resumed.stats['providerCalls'] == 6
    assert records_file.read_bytes() == complete


def test_resume_complete_run_is_noop(tmp_path):
    """Test resuming a finished run issues nothing"""
    result = run_experiment(_small('drift', tmp_path), progress=False)

    again = resume(result.run_dir, client=GatewayClient(use_cache=False), progress=False)

    assert again.stats == {'providerCalls': 0, 'cellsCompleted': 0, 'cellsReplayed': 6, 'cellsFailed': 0}


def test_resume_refuses_edited_manifest(tmp_path):
    """Test a manifest whose config no longer matches its hash is refused"""
    result = run_experiment(_small('drift', tmp_path), progress=False)
    manifest_path = result.run_dir / 'manifest.json'
    manifest = json.loads(manifest_path.read_text(encoding='utf-8'))
    manifest['config']['profiles'] = 5
    manifest_path.write_text(json.dumps(manifest), encoding='utf-8')

    with pytest.raises(ManifestError):
        resume(result.run_dir, progress=False)


def test_resume_without_manifest(tmp_path):
    """Test a directory without a manifest cannot be resumed"""
    with pytest.raises(ManifestError):
        resume(tmp_path, progress=False)


def test_run_dir_of_other_config_refused(tmp_path):
    """Test a run directory is tied to one config"""
    run_experiment(_small('drift', tmp_path), progress=False)

    with pytest.raises(ManifestError):
        run_experiment(_small('drift', tmp_path, seed=9), progress=False)


def test_failed_cells_are_data(tmp_path, monkeypatch):
    """Test provider failures become failure records and the run continues"""
    monkeypatch.delenv('CONVSIM_TEST_MISSING_KEY', raising=False)
    broken = {'providerId': 'broken', 'model': 'm', 'kind': 'openai',
              'credentialEnv': 'CONVSIM_TEST_MISSING_KEY'}
    config = ExperimentConfig(kind='drift', profiles=2, turns=(6,), providers=('mock', broken),
                              output_dir=str(tmp_path / 'run'), workers=1)

    result = run_experiment(config, progress=False)

    assert len(result.records) == 6
    assert len(result.failures) == 6
    assert len(result.records) == len(design_grid(config)) - len(result.failures)
    assert {f['error'] for f in result.failures} == {'ConfigurationError'}
    assert {f['provider'] for f in result.failures} == {'broken'}
    assert len(_read(result.run_dir / 'metrics' / 'failures.jsonl')) == 6
    assert not result.complete


def test_unexpected_cell_errors_are_data(tmp_path, caplog):
    """Test an error outside the package hierarchy fails its cell, not the run"""
    config = _small('drift', tmp_path, workers=1)

    with patch('convsim.runner.topic_drift_series', side_effect=ValueError('bad vector')):
        with caplog.at_level(logging.ERROR, logger='convsim.runner'):
            result = run_experiment(config, progress=False)

    assert result.records == []
    assert len(result.failures) == len(design_grid(config))
    assert {f['error'] for f in result.failures} == {'ValueError'}
    assert {f['message'] for f in result.failures} == {'bad vector'}
    assert 'failed unexpectedly' in caplog.text


def test_diversity_run(tmp_path):
    """Test diversity aggregates: clusters, entropy bound and frequency table"""
    result = run_experiment(_small('diversity', tmp_path, profiles=10, turns=(4,)), progress=False)

    row = result.table('diversity').iloc[0]
    frequencies = result.table('topic_frequencies')

    assert list(result.table('diversity').columns) == TABLE_COLUMNS['diversity']
    assert row['model'] == 'mock'
    assert row['conversations'] == 10
    assert 1 <= row['topic_diversity'] <= 10
    assert row['topic_entropy'] <= math.log2(row['topic_diversity']) + 1e-9
    assert 0 <= row['embedding_diversity'] <= 2
    assert frequencies['count'].sum() == 10
    assert list(frequencies['rank']) == list(range(1, len(frequencies) + 1))


def test_adherence_run_blends_labels(tmp_path):
    """Test human labels shift blend weights off the LLM-only default"""
    labels = tmp_path / 'labels.jsonl'
    rows = [
        {'conversation_id': 'mock/parameterized/t4/p0000', 'annotator_id': 'a1',
         'parameter_path': 'focusLevel', 'value': 3},
        {'conversation_id': 'mock/parameterized/t4/p0000', 'annotator_id': 'a2',
         'parameter_path': 'focusLevel', 'value': 3},
    ]
    labels.write_text(''.join(json.dumps(r) + '\n' for r in rows), encoding='utf-8')
    config = _small('adherence', tmp_path, profiles=3, turns=(4,), labels=str(labels))

    result = run_experiment(config, progress=False)

    numeric = result.table('adherence_numeric')
    categorical = result.table('adherence_categorical')
    assert set(numeric['parameter']) == {'knowledgeGapLevel', 'focusLevel', 'priorKnowledgeLevel'}
    assert set(categorical['parameter']) == {'decisionMakingStyle', 'feedbackReception', 'smoothnessFactor'}
    assert (numeric['mse'] >= 0).all()
    assert categorical['accuracy'].between(0, 1).all()
    weights = numeric.iloc[0]
    assert 0 < weights['human_weight'] < 1
    assert weights['human_weight'] + weights['llm_weight'] == pytest.approx(1.0)
    coherence = result.table('coherence_by_focus')
    assert coherence['conversations'].sum() == 3
    assert coherence['coherence'].between(-1, 1).all()


def test_adherence_without_labels_is_llm_only(tmp_path):
    """Test LLM judgments pass through with weights (0, 1)"""
    result = run_experiment(_small('adherence', tmp_path, turns=(4,)), progress=False)

    numeric = result.table('adherence_numeric')
    assert (numeric['human_weight'] == 0).all()
    assert (numeric['llm_weight'] == 1).all()
    assert (numeric['scored'] == 2).all()


def test_stability_run_checkpoints_and_arms(tmp_path):
    """Test ablation arms drop one target and errors are reported per checkpoint"""
    result = run_experiment(_small('stability', tmp_path, turns=(10,), checkpoints=(4, 10, 30)),
                            progress=False)

    table = result.table('stability')
    assert len(result.records) == 6
    assert set(table['turns']) == {4, 10}
    assert set(table['arm']) == {'full', 'formality-only', 'technical-only'}
    assert ((table['stability'] - (1 - table['mean_error'])).abs() < 1e-12).all()

    for record in result.records:
        bundle = json.loads((result.run_dir / record['bundle']).read_text(encoding='utf-8'))
        block = json.loads(bundle['parameterBlock'])[ROOT_KEY]
        if record['arm'] == 'formality-only':
            assert 'technicalLanguageLevel' not in block['linguisticPatterns']
            assert 'formality' in block['conversationDynamics']
        elif record['arm'] == 'technical-only':
            assert 'formality' not in block['conversationDynamics']
            assert 'technicalLanguageLevel' in block['linguisticPatterns']


def test_revisit_run_by_level(tmp_path):
    """Test revisit cells fix the knowledge gap level and aggregate by it"""
    result = run_experiment(_small('revisit', tmp_path, profiles=1, levels=(1, 5)), progress=False)

    table = result.table('revisit')
    assert [r['parameters']['participants']['knowledgeGapLevel'] for r in result.records] == [1, 5]
    assert list(table['knowledge_gap_level']) == [1, 5]
    assert table['revisit_rate'].between(0, 1).all()


def test_report_unknown_format(tmp_path):
    """Test only csv, jsonl and markdown reports exist"""
    result = ExperimentResult(config=ExperimentConfig(kind='drift'), run_dir=tmp_path)

    with pytest.raises(InputError):
        report(result, 'xlsx')


def test_report_empty_result_headers_only(tmp_path):
    """Test an empty result writes header-only CSV files"""
    result = ExperimentResult(config=ExperimentConfig(kind='diversity'), run_dir=tmp_path)

    paths = report(result, 'csv')

    assert [p.name for p in paths] == ['diversity.csv', 'topic_frequencies.csv']
    assert paths[0].read_text(encoding='utf-8') == \
        'model,arm,conversations,topic_diversity,topic_entropy,embedding_diversity\n'


def test_markdown_and_jsonl_reports(tmp_path):
    """Test the markdown report names the config hash and JSONL mirrors records"""
    result = run_experiment(_small('revisit', tmp_path, profiles=1, levels=(2,)), progress=False)

    markdown = report(result, 'markdown')[0].read_text(encoding='utf-8')
    records, aggregates = report(result, 'jsonl')

    assert result.manifest['configHash'] in markdown
    assert '## revisit' in markdown
    assert len(_read(records)) == len(result.records)
    assert {row['table'] for row in _read(aggregates)} == {'revisit'}


def test_load_result_reads_run_dir(tmp_path):
    """Test a run directory loads back with its records and tables"""
    result = run_experiment(_small('drift', tmp_path), progress=False)

    loaded = load_result(result.run_dir)

    assert [r['cellId'] for r in loaded.records] == [r['cellId'] for r in result.records]
    assert loaded.table('drift_series').shape == result.table('drift_series').shape
    assert loaded.manifest['configHash'] == result.manifest['configHash']
