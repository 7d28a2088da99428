"""
Gateway client - generation and judging through cached provider calls
"""

import hashlib
import logging
import threading
from datetime import datetime, timezone
from typing import Dict, Optional, Sequence

from .cache import ResponseCache
from .judge import DEFAULT_JUDGED, InferredParameters, build_judge_prompt, parse_judgment
from .mock import MockProvider
from .prompt import PromptBundle, load_template, template_version
from .session import ProviderConfig, ProviderSession
from .transcript import FLAG_TURN_MISMATCH, Provenance, Transcript, parse_output

logger = logging.getLogger(__name__)


class GatewayClient:
    """
    Main entry point for provider traffic.

    Every call goes through the response cache: a cached (prompt hash,
    provider identity) pair never reaches the network again.

    Example:
        >>> client = GatewayClient()
        >>> transcript = client.generate(bundle, load_provider('mock'))
        >>> inferred = client.judge(transcript, load_provider('mock'))
        >>> client.calls
        2
    """

    def __init__(self, cache: Optional[ResponseCache] = None, use_cache: bool = True):
        """
        Initialize gateway client.

        Args:
            cache: Response cache (one under the cache root when None)
            use_cache: Disable to always call the provider
        """
        self.cache = cache if cache is not None else ResponseCache(enabled=use_cache)
        self.calls = 0
        self._sessions: Dict[str, ProviderSession] = {}
        self._mocks: Dict[str, MockProvider] = {}
        self._lock = threading.Lock()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self) -> None:
        """Close all provider sessions"""
        with self._lock:
            for session in self._sessions.values():
                session.close()
            self._sessions.clear()

    def _session(self, cfg: ProviderConfig) -> ProviderSession:
        with self._lock:
            session = self._sessions.get(cfg.provider_id)
            if session is None or session.cfg != cfg:
                session = ProviderSession(cfg)
                self._sessions[cfg.provider_id] = session
            return session

    def _mock(self, cfg: ProviderConfig) -> MockProvider:
        with self._lock:
            mock = self._mocks.get(cfg.provider_id)
            if mock is None:
                mock = MockProvider(cfg.endpoint)
                self._mocks[cfg.provider_id] = mock
            return mock

    def _complete(self, system: str, prompt: str, prompt_hash: str, cfg: ProviderConfig) -> Dict:
        key = ResponseCache.key(prompt_hash, cfg)
        with self.cache.lock(key):
            entry = self.cache.get(key)
            if entry is not None:
                logger.debug("Cache hit %s for %s", key[:12], cfg.provider_id)
                return entry
            if cfg.is_mock:
                raw = self._mock(cfg).complete(system, prompt, prompt_hash)
            else:
                raw = self._session(cfg).complete(system, prompt)
            with self._lock:
                self.calls += 1
            entry = {
                'raw': raw,
                'providerId': cfg.provider_id,
                'model': cfg.model,
                'promptHash': prompt_hash,
                'timestamp': datetime.now(timezone.utc).isoformat(timespec='seconds'),
            }
            self.cache.put(key, **entry)
            return entry

    def generate(self, bundle: PromptBundle, cfg: ProviderConfig,
                 seed: Optional[int] = None) -> Transcript:
        """
        Generate one conversation.

        Args:
            bundle: Compiled prompt
            cfg: Provider to use
            seed: Recorded in provenance

        Returns:
            Transcript with provenance; a turn count differing from
            bundle.target_turns is flagged, not raised

        Raises:
            ConfigurationError: Credential missing
            ProviderError: Transport failure after retries
            ParseError: Output unparseable after the repair pass
        """
        entry = self._complete(bundle.system_text, bundle.instruction_text, bundle.content_hash, cfg)
        transcript = parse_output(entry['raw'])
        transcript.provenance = Provenance(
            prompt_hash=bundle.content_hash,
            provider_id=cfg.provider_id,
            model_id=cfg.model,
            timestamp=entry.get('timestamp'),
            seed=seed,
        )
        if transcript.total_turns != bundle.target_turns:
            logger.warning("Requested %d turns, %s returned %d", bundle.target_turns,
                           cfg.provider_id, transcript.total_turns)
            transcript.flag(FLAG_TURN_MISMATCH)
        return transcript

    def judge(self, transcript: Transcript, cfg: ProviderConfig,
              requested: Sequence[str] = DEFAULT_JUDGED,
              conversation_id: Optional[str] = None) -> InferredParameters:
        """
        Ask a judge model to infer parameters from the transcript alone.

        Raises:
            ParseError: Judge answer is not a JSON object
        """
        system = load_template('system.txt')
        prompt = build_judge_prompt(transcript, requested)
        digest = hashlib.sha256(f"judge:{template_version()}\n{prompt}".encode('utf-8')).hexdigest()
        entry = self._complete(system, prompt, digest, cfg)
        return parse_judgment(entry['raw'], requested, conversation_id=conversation_id)


_default_client: Optional[GatewayClient] = None
_default_lock = threading.Lock()


def _client(client: Optional[GatewayClient]) -> GatewayClient:
    global _default_client
    if client is not None:
        return client
    with _default_lock:
        if _default_client is None:
            _default_client = GatewayClient()
        return _default_client


def generate_conversation(bundle: PromptBundle, cfg: ProviderConfig,
                          client: Optional[GatewayClient] = None,
                          seed: Optional[int] = None) -> Transcript:
    """Generate a conversation through the shared (or given) gateway client"""
    return _client(client).generate(bundle, cfg, seed=seed)


def judge_infer_parameters(transcript: Transcript, cfg: ProviderConfig,
                           client: Optional[GatewayClient] = None,
                           requested: Sequence[str] = DEFAULT_JUDGED) -> InferredParameters:
    """Run the blinded judge through the shared (or given) gateway client"""
    return _client(client).judge(transcript, cfg, requested=requested)
