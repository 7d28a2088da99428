"""
Tests for provider sessions and the gateway client
"""

import json
from unittest.mock import MagicMock, patch

import pytest
import requests

from convsim.cache import LOCK_STRIPES, ResponseCache
from convsim.exceptions import ConfigurationError, ProviderError
from convsim.gateway import GatewayClient, generate_conversation
from convsim.prompt import compile_baseline, compile_parameterized
from convsim.session import ProviderConfig, ProviderSession, TokenBucket, load_provider
from convsim.transcript import FLAG_TURN_MISMATCH


def _response(status, payload=None, text=''):
    response = MagicMock()
    response.status_code = status
    response.text = text or json.dumps(payload or {})
    response.json.return_value = payload or {}
    return response


def _openai_reply(content):
    return {'choices': [{'message': {'content': content}}]}


@pytest.fixture
def openai_cfg(monkeypatch):
    monkeypatch.setenv('TEST_API_KEY', 'sk-test')
    return ProviderConfig(provider_id='test-openai', model='test-model', kind='openai',
                          credential_env='TEST_API_KEY', max_retries=2, backoff_seconds=1.0)


def test_mock_generation_honors_turns(profile, appendix_params):
    """Test the mock provider produces a valid transcript of the requested length"""
    bundle = compile_parameterized(profile, appendix_params)

    with GatewayClient() as client:
        transcript = client.generate(bundle, load_provider('mock'), seed=4)

    assert transcript.total_turns == 12
    assert transcript.turns[0].speaker == 'user'
    assert transcript.provenance.prompt_hash == bundle.content_hash
    assert transcript.provenance.model_id == 'mock-1'
    assert transcript.provenance.seed == 4
    assert FLAG_TURN_MISMATCH not in transcript.quality_flags


def test_mock_generation_is_deterministic(profile):
    """Test the same prompt yields the same mock transcript without a cache"""
    bundle = compile_baseline(profile, 6)
    cfg = load_provider('mock')

    first = GatewayClient(use_cache=False).generate(bundle, cfg)
    second = GatewayClient(use_cache=False).generate(bundle, cfg)

    assert [t.content for t in first.turns] == [t.content for t in second.turns]


def test_turn_mismatch_flagged(tmp_path, profile, caplog):
    """Test a fixture with the wrong turn count is flagged, not rejected"""
    bundle = compile_baseline(profile, 10)
    recorded = {
        'metadata': {'totalTurns': 9},
        'conversation': [
            {'turn': i + 1, 'speaker': 'user' if i % 2 == 0 else 'assistant', 'content': f"line {i}"}
            for i in range(9)
        ],
    }
    (tmp_path / f"{bundle.content_hash}.json").write_text(json.dumps(recorded), encoding='utf-8')
    cfg = ProviderConfig(provider_id='replay', model='mock-1', kind='mock', endpoint=str(tmp_path))

    transcript = GatewayClient().generate(bundle, cfg)

    assert transcript.total_turns == 9
    assert FLAG_TURN_MISMATCH in transcript.quality_flags
    assert 'Requested 10 turns' in caplog.text


def test_cache_hit_skips_provider(profile):
    """Test a cached request never reaches the provider again"""
    bundle = compile_baseline(profile, 6)
    cfg = load_provider('mock')
    client = GatewayClient()

    first = client.generate(bundle, cfg)
    second = client.generate(bundle, cfg)

    assert client.calls == 1
    assert client.cache.hits == 1
    assert second.to_dict() == first.to_dict()


def test_cache_shared_across_clients(tmp_path, profile):
    """Test a second client replays the first client's response byte for byte"""
    bundle = compile_baseline(profile, 6)
    cfg = load_provider('mock')
    cache_root = tmp_path / 'responses'

    first = GatewayClient(cache=ResponseCache(cache_root)).generate(bundle, cfg)
    replay_client = GatewayClient(cache=ResponseCache(cache_root))
    second = replay_client.generate(bundle, cfg)

    assert replay_client.calls == 0
    assert second.to_json() == first.to_json()


def test_cache_locks_are_bounded(tmp_path):
    """Test one key always maps to one lock and the pool never grows"""
    cache = ResponseCache(tmp_path / 'responses')
    keys = [ResponseCache.key(f'{n:064x}', load_provider('mock')) for n in range(500)]

    locks = {id(cache.lock(key)) for key in keys}

    assert cache.lock(keys[0]) is cache.lock(keys[0])
    assert len(locks) <= LOCK_STRIPES
    assert len(cache._locks) == LOCK_STRIPES


def test_missing_credential_raises(monkeypatch, profile):
    """Test a cache miss without credentials raises before any network call"""
    monkeypatch.delenv('TEST_MISSING_KEY', raising=False)
    cfg = ProviderConfig(provider_id='needs-key', model='m', kind='openai',
                         credential_env='TEST_MISSING_KEY')

    with pytest.raises(ConfigurationError, match='TEST_MISSING_KEY'):
        generate_conversation(compile_baseline(profile, 4), cfg, client=GatewayClient())


@patch('convsim.session.time.sleep')
def test_retry_then_success(mock_sleep, openai_cfg):
    """Test 503 responses are retried with exponential backoff"""
    http = MagicMock()
    http.headers = {}
    http.post.side_effect = [
        _response(503, text='unavailable'),
        _response(503, text='unavailable'),
        _response(200, _openai_reply('hello')),
    ]
    session = ProviderSession(openai_cfg, http=http)

    assert session.complete('system', 'prompt') == 'hello'
    assert session.calls == 3
    assert [c.args[0] for c in mock_sleep.call_args_list] == [1.0, 2.0]
    assert http.headers['Authorization'] == 'Bearer sk-test'


@patch('convsim.session.time.sleep')
def test_retries_exhausted(mock_sleep, openai_cfg, caplog):
    """Test the last retryable error is raised once attempts run out"""
    http = MagicMock()
    http.headers = {}
    http.post.return_value = _response(429, text='slow down')
    session = ProviderSession(openai_cfg, http=http)

    with pytest.raises(ProviderError) as exc_info:
        session.complete('system', 'prompt')

    assert exc_info.value.status == 429
    assert http.post.call_count == 3
    assert 'HTTP 429' in caplog.text


@patch('convsim.session.time.sleep')
def test_client_error_not_retried(mock_sleep, openai_cfg):
    """Test a 4xx other than 429 fails immediately"""
    http = MagicMock()
    http.headers = {}
    http.post.return_value = _response(400, text='bad request')
    session = ProviderSession(openai_cfg, http=http)

    with pytest.raises(ProviderError) as exc_info:
        session.complete('system', 'prompt')

    assert exc_info.value.status == 400
    assert http.post.call_count == 1
    mock_sleep.assert_not_called()


@patch('convsim.session.time.sleep')
def test_transport_error_retried(mock_sleep, openai_cfg):
    """Test connection errors count as retryable"""
    http = MagicMock()
    http.headers = {}
    http.post.side_effect = [requests.exceptions.ConnectionError('reset'),
                             _response(200, _openai_reply('ok'))]
    session = ProviderSession(openai_cfg, http=http)

    assert session.complete('system', 'prompt') == 'ok'
    assert mock_sleep.call_count == 1


def test_anthropic_request_shape(monkeypatch):
    """Test the messages API body and text extraction"""
    monkeypatch.setenv('TEST_ANTHROPIC_KEY', 'key')
    cfg = ProviderConfig(provider_id='a', model='claude', kind='anthropic',
                         credential_env='TEST_ANTHROPIC_KEY', temperature=0.2)
    http = MagicMock()
    http.headers = {}
    http.post.return_value = _response(200, {'content': [{'type': 'text', 'text': 'hi'}]})
    session = ProviderSession(cfg, http=http)

    assert session.complete('sys', 'prompt') == 'hi'
    url = http.post.call_args.args[0]
    body = http.post.call_args.kwargs['json']
    assert url == 'https://api.anthropic.com/v1/messages'
    assert body['system'] == 'sys'
    assert body['temperature'] == 0.2
    assert http.headers['x-api-key'] == 'key'


def test_token_bucket_waits_when_empty():
    """Test the bucket sleeps until a token refills"""
    now = [0.0]
    slept = []

    def sleep(seconds):
        slept.append(seconds)
        now[0] += seconds

    bucket = TokenBucket(60, capacity=1, clock=lambda: now[0], sleep=sleep)

    assert bucket.acquire() == 0.0
    assert bucket.acquire() == pytest.approx(1.0)
    assert slept == [pytest.approx(1.0)]


def test_provider_config_validation():
    """Test bad provider settings are rejected"""
    with pytest.raises(ConfigurationError):
        ProviderConfig(provider_id='x', model='m', kind='carrier-pigeon')
    with pytest.raises(ConfigurationError):
        ProviderConfig(provider_id='x', model='m', max_retries=-1)
    with pytest.raises(ConfigurationError, match='Unknown provider'):
        load_provider('no-such-provider')


def test_provider_catalog_entry():
    """Test catalog ids resolve to configs"""
    cfg = load_provider('deepseek-r1')

    assert cfg.base_url == 'https://api.deepseek.com'
    assert ProviderConfig.from_dict(cfg.to_dict()) == cfg
