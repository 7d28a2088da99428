"""
Deterministic offline provider.

Plays back recorded fixtures keyed by prompt hash when a fixture directory
is configured; otherwise synthesizes a well-formed transcript (or judge
answer) seeded by the prompt hash.
"""

import json
import logging
import random
import re
from pathlib import Path
from typing import Dict, List, Optional

from .schema import PARAMETER_PATHS, resolve_path

logger = logging.getLogger(__name__)

JUDGE_MARKER = 'Infer these parameters:'

_TURNS_RE = re.compile(r"exactly (\d+) turns")
_IDEA_RE = re.compile(r"(?:Business idea: (.+)|with a focus on (.+?)\.$)", re.MULTILINE)
_INITIATOR_RE = re.compile(r'"initiator": "(user|assistant)"')
_REQUESTED_RE = re.compile(JUDGE_MARKER + r" (.+)\.$", re.MULTILINE)

_TOPICS = ['pricing', 'cash flow', 'marketing plan', 'supplier contracts', 'hiring',
           'business plan', 'permits', 'customer acquisition', 'bookkeeping', 'branding']
_ORGS = ['Acme Corp', 'Harbor Bank', 'City Council', 'Main Street Alliance',
         'Northside Credit Union', 'Greenleaf Suppliers', 'SCORE', 'Chamber of Commerce']
_TERMS = ['SBA loan', 'break-even point', 'gross margin', 'cash flow forecast', 'LLC',
          'working capital', 'unit economics', 'customer acquisition cost', 'line of credit']
_EMOTIONS = ['uncertainty', 'curiosity', 'confusion', 'understanding', 'confidence', 'relief']

_USER_LINES = [
    "I am working on {idea} and I keep worrying about {topic}.",
    "Should I talk to {org} about a {term} before I commit?",
    "My {topic} numbers look thin. What would you check first?",
    "I met {org} last week about {topic}, but I still feel unsure.",
    "How do I know if a {term} makes sense for {idea}?",
    "Can we go back to {topic}? I want to get that right.",
]
_ASSISTANT_LINES = [
    "Let's start with your {topic}. A simple {term} will show where the risk sits.",
    "{org} runs a program for owners at your stage, and they can review your {topic}.",
    "Before you commit, estimate your {term} and compare it with the quotes from {org}.",
    "That is a common concern. Tie your {topic} decisions to a monthly {term}.",
    "Good question. Track your {term} for three months, then revisit {topic} with real data.",
]


def _parse_idea(prompt: str) -> str:
    match = _IDEA_RE.search(prompt)
    if not match:
        return 'my business idea'
    idea = (match.group(1) or match.group(2)).strip()
    return idea.split(': ', 1)[-1]


def synthetic_transcript(prompt: str, seed_text: str) -> str:
    """Build a valid transcript document honoring the requested turn count"""
    rng = random.Random(seed_text)
    turns_match = _TURNS_RE.search(prompt)
    turns = int(turns_match.group(1)) if turns_match else 10
    initiator_match = _INITIATOR_RE.search(prompt)
    initiator = initiator_match.group(1) if initiator_match else 'user'
    other = 'assistant' if initiator == 'user' else 'user'
    idea = _parse_idea(prompt)

    orgs = rng.sample(_ORGS, 3)
    terms = rng.sample(_TERMS, 4)
    topics = rng.sample(_TOPICS, 4)
    conversation: List[Dict] = []
    for i in range(turns):
        speaker = initiator if i % 2 == 0 else other
        lines = _USER_LINES if speaker == 'user' else _ASSISTANT_LINES
        content = rng.choice(lines).format(idea=idea, topic=rng.choice(topics),
                                           org=rng.choice(orgs), term=rng.choice(terms))
        conversation.append({
            'turn': i + 1,
            'speaker': speaker,
            'content': content,
            'emotionalState': _EMOTIONS[min(i * len(_EMOTIONS) // max(turns, 1), len(_EMOTIONS) - 1)],
            'complexityLevel': round(0.2 + 0.6 * i / max(turns - 1, 1), 2),
        })
    document = {
        'metadata': {
            'participantRoles': {'user': 'entrepreneur', 'assistant': 'business adviser'},
            'conversationArc': 'problem-solution',
            'totalTurns': turns,
        },
        'conversation': conversation,
        'analysis': {'parameterAdherence': {}, 'learningObjectivesMet': [],
                     'stakeholderPerspectivesCovered': []},
    }
    return json.dumps(document, indent=2)


def synthetic_judgment(prompt: str, seed_text: str) -> str:
    """Answer a judge prompt with in-range values for every requested parameter"""
    rng = random.Random(seed_text)
    match = _REQUESTED_RE.search(prompt)
    names = [n.strip() for n in match.group(1).split(',')] if match else []
    answer: Dict[str, object] = {}
    for name in names:
        try:
            spec = PARAMETER_PATHS[resolve_path(name)]
        except KeyError:
            continue
        if spec.choices:
            answer[name] = rng.choice(spec.choices)
        elif spec.kind == 'level':
            answer[name] = rng.randint(1, 5)
        elif spec.kind == 'unit':
            answer[name] = rng.randint(0, 10) / 10
    return json.dumps(answer)


class MockProvider:
    """
    Offline stand-in for an LLM provider.

    Args:
        fixture_dir: Directory of recorded outputs named <prompt hash>.json
            or <prompt hash>.txt, checked before synthesis
    """

    def __init__(self, fixture_dir: Optional[str] = None):
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.calls = 0

    def _fixture(self, prompt_hash: str) -> Optional[str]:
        if self.fixture_dir is None:
            return None
        for suffix in ('.json', '.txt'):
            path = self.fixture_dir / f"{prompt_hash}{suffix}"
            if path.is_file():
                logger.debug("Playing back fixture %s", path)
                return path.read_text(encoding='utf-8')
        return None

    def complete(self, system: str, prompt: str, prompt_hash: str) -> str:
        self.calls += 1
        recorded = self._fixture(prompt_hash)
        if recorded is not None:
            return recorded
        if JUDGE_MARKER in prompt:
            return synthetic_judgment(prompt, prompt_hash)
        return synthetic_transcript(prompt, prompt_hash)
