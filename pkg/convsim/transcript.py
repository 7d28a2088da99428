"""
Transcript models and provider-output parsing
"""

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .config import write_json
from .exceptions import ParseError

logger = logging.getLogger(__name__)

SPEAKERS = ('user', 'assistant')

FLAG_TURN_MISMATCH = 'turn-count-mismatch'
FLAG_TOTAL_CORRECTED = 'metadata-total-corrected'

_FENCE_RE = re.compile(r"```[a-zA-Z]*\s*(.*?)```", re.DOTALL)


@dataclass
class TranscriptTurn:
    """One utterance"""
    turn: int
    speaker: str  # 'user' or 'assistant'
    content: str
    emotional_state: Optional[str] = None
    complexity_level: Optional[float] = None

    def to_dict(self) -> Dict:
        result: Dict[str, Any] = {
            'turn': self.turn,
            'speaker': self.speaker,
            'content': self.content,
        }
        if self.emotional_state is not None:
            result['emotionalState'] = self.emotional_state
        if self.complexity_level is not None:
            result['complexityLevel'] = self.complexity_level
        return result

    @classmethod
    def from_dict(cls, data: Dict) -> 'TranscriptTurn':
        return cls(
            turn=data['turn'],
            speaker=data['speaker'],
            content=data['content'],
            emotional_state=data.get('emotionalState'),
            complexity_level=data.get('complexityLevel'),
        )


@dataclass
class Provenance:
    """Where a transcript came from"""
    prompt_hash: Optional[str] = None
    provider_id: Optional[str] = None
    model_id: Optional[str] = None
    timestamp: Optional[str] = None
    seed: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            'promptHash': self.prompt_hash,
            'providerId': self.provider_id,
            'modelId': self.model_id,
            'timestamp': self.timestamp,
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Provenance':
        return cls(
            prompt_hash=data.get('promptHash'),
            provider_id=data.get('providerId'),
            model_id=data.get('modelId'),
            timestamp=data.get('timestamp'),
            seed=data.get('seed'),
        )


@dataclass
class Transcript:
    """
    Generated conversation in the published output format.

    Turns are numbered 1..N and alternate speakers starting with the
    initiator. An optional analysis block is stored but never scored.
    """
    turns: List[TranscriptTurn]
    participant_roles: Dict[str, Any] = field(default_factory=dict)
    arc: Optional[str] = None
    initiator: Optional[str] = None
    provenance: Optional[Provenance] = None
    analysis: Optional[Dict[str, Any]] = None
    quality_flags: List[str] = field(default_factory=list)

    @property
    def total_turns(self) -> int:
        return len(self.turns)

    def user_turns(self) -> List[TranscriptTurn]:
        return [t for t in self.turns if t.speaker == 'user']

    def flag(self, name: str) -> None:
        if name not in self.quality_flags:
            self.quality_flags.append(name)

    def to_dict(self) -> Dict:
        metadata: Dict[str, Any] = {
            'participantRoles': self.participant_roles,
            'conversationArc': self.arc,
            'totalTurns': self.total_turns,
        }
        if self.initiator is not None:
            metadata['initiator'] = self.initiator
        result: Dict[str, Any] = {
            'metadata': metadata,
            'conversation': [t.to_dict() for t in self.turns],
        }
        if self.analysis is not None:
            result['analysis'] = self.analysis
        if self.provenance is not None:
            result['provenance'] = self.provenance.to_dict()
        if self.quality_flags:
            result['qualityFlags'] = list(self.quality_flags)
        return result

    @classmethod
    def from_dict(cls, data: Any) -> 'Transcript':
        """
        Build a transcript, enforcing turn invariants.

        Raises:
            ParseError: Missing conversation, bad turns, gaps or speaker breaks
        """
        return _build_transcript(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + '\n'

    def filename(self) -> str:
        """Content-addressed file name (prompt hash + model id)"""
        prov = self.provenance or Provenance()
        prompt = (prov.prompt_hash or 'unhashed')[:16]
        model = re.sub(r'[^A-Za-z0-9._-]+', '-', prov.model_id or 'unknown')
        return f"{prompt}__{model}.json"


def _build_transcript(data: Any, raw: Optional[str] = None) -> Transcript:
    def fail(message: str) -> ParseError:
        return ParseError(message, raw=raw)

    if not isinstance(data, dict):
        raise fail("Transcript document must be an object")
    entries = data.get('conversation')
    if not isinstance(entries, list) or not entries:
        raise fail("Transcript has no conversation turns")

    turns = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise fail(f"conversation[{i}] is not an object")
        index = entry.get('turn')
        speaker = entry.get('speaker')
        content = entry.get('content')
        if not isinstance(index, int) or isinstance(index, bool):
            raise fail(f"conversation[{i}].turn is not an integer")
        if speaker not in SPEAKERS:
            raise fail(f"conversation[{i}].speaker {speaker!r} not user or assistant")
        if not isinstance(content, str) or not content.strip():
            raise fail(f"conversation[{i}].content is empty")
        complexity = entry.get('complexityLevel')
        if complexity is not None and not isinstance(complexity, (int, float)):
            complexity = None
        turns.append(TranscriptTurn(
            turn=index,
            speaker=speaker,
            content=content,
            emotional_state=entry.get('emotionalState'),
            complexity_level=complexity,
        ))

    if [t.turn for t in turns] != list(range(1, len(turns) + 1)):
        raise fail("non-contiguous turn indices")

    metadata = data.get('metadata') or {}
    initiator = metadata.get('initiator')
    if initiator is not None and initiator not in SPEAKERS:
        raise fail(f"metadata.initiator {initiator!r} not user or assistant")
    if initiator is not None and turns[0].speaker != initiator:
        raise fail(f"first speaker {turns[0].speaker} is not the initiator {initiator}")
    for prev, cur in zip(turns, turns[1:]):
        if prev.speaker == cur.speaker:
            raise fail(f"speakers do not alternate at turn {cur.turn}")

    transcript = Transcript(
        turns=turns,
        participant_roles=metadata.get('participantRoles') or {},
        arc=metadata.get('conversationArc'),
        initiator=initiator,
        provenance=Provenance.from_dict(data['provenance']) if data.get('provenance') else None,
        analysis=data.get('analysis'),
        quality_flags=list(data.get('qualityFlags') or []),
    )
    declared = metadata.get('totalTurns')
    if declared is not None and declared != len(turns):
        logger.warning("Metadata declares %s turns but conversation has %d; corrected",
                       declared, len(turns))
        transcript.flag(FLAG_TOTAL_CORRECTED)
    return transcript


def repair_json_text(raw: str) -> Optional[str]:
    """Strip code fences and keep the outermost {...} block"""
    text = raw
    fence = _FENCE_RE.search(text)
    if fence:
        text = fence.group(1)
    start, end = text.find('{'), text.rfind('}')
    if start == -1 or end <= start:
        return None
    return text[start:end + 1]


def parse_output(raw: str) -> Transcript:
    """
    Parse provider output into a Transcript.

    A strict parse is tried first; on failure one repair pass strips code
    fences and extracts the outermost object, then parses strictly again.

    Raises:
        ParseError: Both passes fail or a turn invariant is broken (raw kept)
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError:
        repaired = repair_json_text(raw)
        if repaired is None:
            raise ParseError("Provider output contains no JSON document", raw=raw)
        logger.warning("Provider output is not strict JSON; applying repair pass")
        try:
            data = json.loads(repaired)
        except json.JSONDecodeError as e:
            raise ParseError(f"Provider output unparseable after repair: {e.msg}", raw=raw,
                             location=f"line {e.lineno} column {e.colno}")
    return _build_transcript(data, raw=raw)


def save_transcript(transcript: Transcript, directory: Union[str, Path]) -> Path:
    """Write a transcript under its content-addressed name"""
    path = Path(directory) / transcript.filename()
    write_json(path, transcript.to_dict())
    return path


def load_transcript(path: Union[str, Path]) -> Transcript:
    return parse_output(Path(path).read_text(encoding='utf-8'))
