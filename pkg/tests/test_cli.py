"""
Tests for the sim command line
"""

import json

from convsim.cli import main


def _write(path, data):
    path.write_text(json.dumps(data), encoding='utf-8')
    return str(path)


def test_validate_clean(tmp_path, appendix_document, capsys):
    """Test the published example validates"""
    path = _write(tmp_path / 'params.json', appendix_document)

    assert main(['validate', path]) == 0
    assert 'ok' in capsys.readouterr().out


def test_validate_violation(tmp_path, appendix_document, capsys):
    """Test a rule violation exits 1 and names the path"""
    appendix_document['conversationParameters']['participants']['knowledgeGapLevel'] = 9
    path = _write(tmp_path / 'params.json', appendix_document)

    assert main(['validate', '--json', path]) == 1
    report = json.loads(capsys.readouterr().out)
    assert report['ok'] is False
    assert report['violations'][0]['path'] == 'participants.knowledgeGapLevel'


def test_validate_malformed(tmp_path):
    """Test unreadable documents exit 2"""
    path = tmp_path / 'params.json'
    path.write_text('{"conversationParameters": ', encoding='utf-8')

    assert main(['validate', str(path)]) == 2
    assert main(['validate', str(tmp_path / 'missing.json')]) == 2


def test_profiles_stdout(capsys):
    """Test profiles print as JSONL"""
    assert main(['profiles', '--seed', '3', '--count', '4']) == 0

    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4
    assert len({json.loads(line)['id'] for line in lines}) == 4


def test_profiles_file(tmp_path):
    """Test profiles can be written to a file"""
    out = tmp_path / 'profiles.jsonl'

    assert main(['profiles', '--count', '2', '--baseline', '-o', str(out)]) == 0
    assert len(out.read_text(encoding='utf-8').splitlines()) == 2


def test_prompt_compile(tmp_path, appendix_document, capsys):
    """Test parameterized and baseline prompts compile from the command line"""
    path = _write(tmp_path / 'params.json', appendix_document)

    assert main(['prompt', 'compile', path]) == 0
    parameterized = capsys.readouterr().out
    assert main(['prompt', 'compile', '--baseline', '--turns', '6']) == 0
    baseline = capsys.readouterr().out

    assert 'Conversation parameters:' in parameterized
    assert 'exactly 12 turns' in parameterized
    assert 'Conversation parameters:' not in baseline
    assert 'exactly 6 turns' in baseline


def test_prompt_compile_needs_params():
    """Test a parameterized compile without a parameter file fails cleanly"""
    assert main(['prompt', 'compile']) == 2


def test_run_report_resume_offline(tmp_path, capsys):
    """Test the scaled mock drift preset runs, reports and resumes offline"""
    run_dir = tmp_path / 'drift'

    assert main(['-q', 'run', 'paper-drift', '--scale', '0.02', '--mock',
                 '--output-dir', str(run_dir), '--no-progress']) == 0
    assert '12 conversations recorded' in capsys.readouterr().out
    assert (run_dir / 'reports' / 'drift_series.csv').is_file()
    assert (run_dir / 'reports' / 'report.md').is_file()

    assert main(['report', str(run_dir), '--format', 'jsonl']) == 0
    assert (run_dir / 'reports' / 'records.jsonl').is_file()
    assert main(['report', str(run_dir), '--format', 'xml']) == 2

    assert main(['-q', 'resume', str(run_dir), '--no-progress']) == 0
    assert '0 provider calls' in capsys.readouterr().out


def test_run_unknown_preset():
    """Test an unknown preset is a configuration error"""
    assert main(['run', 'paper-nothing', '--mock']) == 2


def test_labels_import(tmp_path, capsys):
    """Test label import reports accepted records and rejected rows"""
    path = tmp_path / 'labels.jsonl'
    rows = [
        {'conversation_id': 'c1', 'annotator_id': 'a1', 'parameter_path': 'focusLevel', 'value': 3},
        {'conversation_id': 'c1', 'annotator_id': 'a2', 'parameter_path': 'focusLevel', 'value': 4},
    ]
    path.write_text(''.join(json.dumps(r) + '\n' for r in rows) + 'not json\n', encoding='utf-8')

    assert main(['labels', 'import', str(path)]) == 1
    out = capsys.readouterr().out
    assert '2 label records from 2 annotator(s) over 1 conversation(s); 1 row(s) rejected' in out
    assert 'line 3' in out
