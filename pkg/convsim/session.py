"""
Provider configuration and HTTP sessions for chat-completion APIs
"""

import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import requests

from .config import load_data, read_json
from .exceptions import ConfigurationError, ProviderError

logger = logging.getLogger(__name__)

PROVIDER_KINDS = ('openai', 'anthropic', 'gemini', 'mock')

DEFAULT_ENDPOINTS = {
    'openai': 'https://api.openai.com/v1',
    'anthropic': 'https://api.anthropic.com',
    'gemini': 'https://generativelanguage.googleapis.com',
}

ANTHROPIC_VERSION = '2023-06-01'
ANTHROPIC_DEFAULT_MAX_TOKENS = 8192
RETRYABLE_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class ProviderConfig:
    """
    One model behind one provider API.

    Temperature None means the provider default is used. Credentials are
    referenced by environment variable name only.
    """
    provider_id: str
    model: str
    kind: str = 'openai'
    endpoint: Optional[str] = None
    credential_env: Optional[str] = None
    temperature: Optional[float] = None
    timeout: float = 120.0
    max_retries: int = 2
    backoff_seconds: float = 2.0
    requests_per_minute: Optional[float] = None
    max_tokens: Optional[int] = None

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigurationError(f"Unknown provider kind: {self.kind}")
        if self.max_retries < 0:
            raise ConfigurationError(f"maxRetries must be >= 0 (got {self.max_retries})")
        if self.timeout <= 0:
            raise ConfigurationError(f"timeout must be > 0 (got {self.timeout})")
        if self.requests_per_minute is not None and self.requests_per_minute <= 0:
            raise ConfigurationError("requestsPerMinute must be > 0")

    @property
    def is_mock(self) -> bool:
        return self.kind == 'mock'

    @property
    def base_url(self) -> str:
        return (self.endpoint or DEFAULT_ENDPOINTS.get(self.kind, '')).rstrip('/')

    def identity(self) -> Dict:
        """Fields that change provider output (cache key material)"""
        return {
            'kind': self.kind,
            'model': self.model,
            'endpoint': self.base_url,
            'temperature': self.temperature,
            'maxTokens': self.max_tokens,
        }

    def credential(self) -> Optional[str]:
        """
        Resolve the API key from the environment.

        Raises:
            ConfigurationError: If the named variable is unset or empty
        """
        if not self.credential_env:
            return None
        value = os.environ.get(self.credential_env)
        if not value:
            raise ConfigurationError(
                f"Credential for provider {self.provider_id} missing: set {self.credential_env}")
        return value

    def to_dict(self) -> Dict:
        result: Dict[str, Any] = {
            'providerId': self.provider_id,
            'model': self.model,
            'kind': self.kind,
            'timeout': self.timeout,
            'maxRetries': self.max_retries,
            'backoffSeconds': self.backoff_seconds,
        }
        if self.endpoint:
            result['endpoint'] = self.endpoint
        if self.credential_env:
            result['credentialEnv'] = self.credential_env
        if self.temperature is not None:
            result['temperature'] = self.temperature
        if self.requests_per_minute is not None:
            result['requestsPerMinute'] = self.requests_per_minute
        if self.max_tokens is not None:
            result['maxTokens'] = self.max_tokens
        return result

    @classmethod
    def from_dict(cls, data: Dict) -> 'ProviderConfig':
        try:
            return cls(
                provider_id=data['providerId'],
                model=data['model'],
                kind=data.get('kind', 'openai'),
                endpoint=data.get('endpoint'),
                credential_env=data.get('credentialEnv'),
                temperature=data.get('temperature'),
                timeout=data.get('timeout', 120.0),
                max_retries=data.get('maxRetries', 2),
                backoff_seconds=data.get('backoffSeconds', 2.0),
                requests_per_minute=data.get('requestsPerMinute'),
                max_tokens=data.get('maxTokens'),
            )
        except KeyError as e:
            raise ConfigurationError(f"Provider config missing field: {e.args[0]}")


def provider_catalog() -> Dict[str, ProviderConfig]:
    """Built-in provider configs by id"""
    return {entry['providerId']: ProviderConfig.from_dict(entry)
            for entry in load_data('providers.json')}


def load_provider(ref: Union[str, Dict, Path]) -> ProviderConfig:
    """
    Resolve a provider reference.

    Args:
        ref: Catalog id, path to a JSON provider file, or a config dict
    """
    if isinstance(ref, dict):
        return ProviderConfig.from_dict(ref)
    catalog = provider_catalog()
    if str(ref) in catalog:
        return catalog[str(ref)]
    path = Path(ref)
    if path.is_file():
        return ProviderConfig.from_dict(read_json(path))
    raise ConfigurationError(f"Unknown provider: {ref} (known: {', '.join(sorted(catalog))})")


class TokenBucket:
    """Thread-safe token bucket; one token per request"""

    def __init__(self, requests_per_minute: float, capacity: Optional[float] = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.rate = requests_per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, requests_per_minute / 60.0)
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Block until a token is available; returns seconds waited"""
        waited = 0.0
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return waited
                delay = (1.0 - self.tokens) / self.rate
            self._sleep(delay)
            waited += delay


_buckets: Dict[str, TokenBucket] = {}
_buckets_lock = threading.Lock()


def bucket_for(cfg: ProviderConfig) -> Optional[TokenBucket]:
    """Shared bucket per provider id, so limits hold across workers"""
    if cfg.requests_per_minute is None:
        return None
    with _buckets_lock:
        bucket = _buckets.get(cfg.provider_id)
        if bucket is None or bucket.rate != cfg.requests_per_minute / 60.0:
            bucket = TokenBucket(cfg.requests_per_minute)
            _buckets[cfg.provider_id] = bucket
        return bucket


class ProviderSession:
    """
    HTTP session for one provider config.

    Speaks the OpenAI-compatible chat completions API, the Anthropic
    messages API and the Gemini generateContent API. Retries on 429, 5xx
    and transport errors with exponential backoff.

    Example:
        >>> session = ProviderSession(load_provider('gpt-4o-mini'))
        >>> text = session.complete('You write JSON.', 'Create a 5-turn conversation...')
    """

    def __init__(self, cfg: ProviderConfig, http: Optional[requests.Session] = None):
        if cfg.is_mock:
            raise ConfigurationError("Mock providers do not use an HTTP session")
        self.cfg = cfg
        self.session = http or requests.Session()
        self.session.headers.update({
            'Content-Type': 'application/json',
            'Accept': 'application/json',
        })
        key = cfg.credential()
        if key and cfg.kind == 'openai':
            self.session.headers['Authorization'] = f'Bearer {key}'
        elif key and cfg.kind == 'anthropic':
            self.session.headers['x-api-key'] = key
            self.session.headers['anthropic-version'] = ANTHROPIC_VERSION
        elif key and cfg.kind == 'gemini':
            self.session.headers['x-goog-api-key'] = key
        self.calls = 0
        self._calls_lock = threading.Lock()

    def _request(self, system: str, prompt: str):
        cfg = self.cfg
        if cfg.kind == 'anthropic':
            url = f"{cfg.base_url}/v1/messages"
            body: Dict[str, Any] = {
                'model': cfg.model,
                'system': system,
                'messages': [{'role': 'user', 'content': prompt}],
                'max_tokens': cfg.max_tokens or ANTHROPIC_DEFAULT_MAX_TOKENS,
            }
            if cfg.temperature is not None:
                body['temperature'] = cfg.temperature
        elif cfg.kind == 'gemini':
            url = f"{cfg.base_url}/v1beta/models/{cfg.model}:generateContent"
            generation: Dict[str, Any] = {}
            if cfg.temperature is not None:
                generation['temperature'] = cfg.temperature
            if cfg.max_tokens is not None:
                generation['maxOutputTokens'] = cfg.max_tokens
            body = {
                'systemInstruction': {'parts': [{'text': system}]},
                'contents': [{'role': 'user', 'parts': [{'text': prompt}]}],
            }
            if generation:
                body['generationConfig'] = generation
        else:
            url = f"{cfg.base_url}/chat/completions"
            body = {
                'model': cfg.model,
                'messages': [
                    {'role': 'system', 'content': system},
                    {'role': 'user', 'content': prompt},
                ],
            }
            if cfg.temperature is not None:
                body['temperature'] = cfg.temperature
            if cfg.max_tokens is not None:
                body['max_tokens'] = cfg.max_tokens
        return url, body

    def _extract_text(self, data: Dict) -> str:
        try:
            if self.cfg.kind == 'anthropic':
                parts: List[str] = [block['text'] for block in data['content'] if block.get('type') == 'text']
                return ''.join(parts)
            if self.cfg.kind == 'gemini':
                return ''.join(part.get('text', '') for part in data['candidates'][0]['content']['parts'])
            return data['choices'][0]['message']['content']
        except (KeyError, IndexError, TypeError) as e:
            raise ProviderError(f"Unexpected response shape from {self.cfg.provider_id}: {e}",
                                provider=self.cfg.provider_id)

    def complete(self, system: str, prompt: str) -> str:
        """
        Send one system + user prompt and return the model's text.

        Raises:
            ProviderError: Non-retryable HTTP error, or retries exhausted
        """
        cfg = self.cfg
        url, body = self._request(system, prompt)
        attempts = cfg.max_retries + 1
        last_error: Optional[ProviderError] = None

        for attempt in range(attempts):
            bucket = bucket_for(cfg)
            if bucket is not None:
                bucket.acquire()
            with self._calls_lock:
                self.calls += 1
            logger.debug("POST %s model=%s attempt %d/%d", url, cfg.model, attempt + 1, attempts)
            try:
                response = self.session.post(url, json=body, timeout=cfg.timeout)
            except requests.exceptions.RequestException as e:
                logger.warning("Transport error from %s on attempt %d/%d: %s",
                               cfg.provider_id, attempt + 1, attempts, e)
                last_error = ProviderError(f"Transport error: {e}", provider=cfg.provider_id)
            else:
                if response.status_code in RETRYABLE_STATUS:
                    logger.warning("HTTP %d from %s on attempt %d/%d: %s", response.status_code,
                                   cfg.provider_id, attempt + 1, attempts, response.text[:200])
                    last_error = ProviderError(
                        f"HTTP {response.status_code} from {cfg.provider_id}: {response.text[:200]}",
                        status=response.status_code, provider=cfg.provider_id)
                elif response.status_code >= 400:
                    raise ProviderError(
                        f"HTTP {response.status_code} from {cfg.provider_id}: {response.text[:500]}",
                        status=response.status_code, provider=cfg.provider_id)
                else:
                    try:
                        data = response.json()
                    except ValueError as e:
                        raise ProviderError(f"Invalid JSON response: {e}", provider=cfg.provider_id)
                    return self._extract_text(data)

            if attempt < attempts - 1:
                delay = cfg.backoff_seconds * (2 ** attempt)
                logger.debug("Sleeping %.1fs before retry", delay)
                time.sleep(delay)

        raise last_error  # type: ignore[misc]

    def close(self):
        """Close the HTTP session"""
        self.session.close()
