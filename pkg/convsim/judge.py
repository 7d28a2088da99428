"""
Judge protocol: blinded judge prompts, answer parsing and human label import
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .exceptions import ParseError
from .prompt import load_template, render_parameter_definitions, render_template
from .schema import PARAMETER_PATHS, SMOOTHNESS_GRADES, resolve_path, short_name
from .transcript import Transcript, repair_json_text

logger = logging.getLogger(__name__)

JUDGE_LLM = 'llm'
JUDGE_HUMAN = 'human'

JUDGED_NUMERIC = (
    'participants.knowledgeGapLevel',
    'participants.user.focusLevel',
    'participants.user.priorKnowledgeLevel',
)
JUDGED_CATEGORICAL = (
    'participants.user.decisionMakingStyle',
    'participants.user.feedbackReception',
    'conversationDynamics.smoothnessFactor',
)
DEFAULT_JUDGED = JUDGED_NUMERIC + JUDGED_CATEGORICAL

LABEL_FIELDS = ('conversation_id', 'annotator_id', 'parameter_path', 'value')


@dataclass
class InferredParameters:
    """
    A judge's reconstruction of parameters from a transcript alone.

    Out-of-range answers are kept in invalid and never scored.
    """
    numeric: Dict[str, float] = field(default_factory=dict)
    categorical: Dict[str, str] = field(default_factory=dict)
    judge: str = JUDGE_LLM
    raw: Optional[str] = None
    conversation_id: Optional[str] = None
    annotator_id: Optional[str] = None
    invalid: Dict[str, Any] = field(default_factory=dict)
    missing: List[str] = field(default_factory=list)

    def value(self, path: str) -> Any:
        path = resolve_path(path)
        if path in self.numeric:
            return self.numeric[path]
        return self.categorical.get(path)

    def to_dict(self) -> Dict:
        return {
            'numeric': self.numeric,
            'categorical': self.categorical,
            'judge': self.judge,
            'raw': self.raw,
            'conversationId': self.conversation_id,
            'annotatorId': self.annotator_id,
            'invalid': self.invalid,
            'missing': self.missing,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'InferredParameters':
        return cls(
            numeric=dict(data.get('numeric', {})),
            categorical=dict(data.get('categorical', {})),
            judge=data.get('judge', JUDGE_LLM),
            raw=data.get('raw'),
            conversation_id=data.get('conversationId'),
            annotator_id=data.get('annotatorId'),
            invalid=dict(data.get('invalid', {})),
            missing=list(data.get('missing', [])),
        )


def check_value(path: str, value: Any) -> Tuple[bool, Any]:
    """
    Check a judged value against its parameter's domain.

    Returns:
        (ok, normalized value)
    """
    spec = PARAMETER_PATHS[path]
    if spec.kind in ('level', 'count', 'unit'):
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                return False, value
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            return False, value
        if spec.kind == 'unit':
            return 0.0 <= value <= 1.0, float(value)
        if not float(value).is_integer():
            return False, value
        if spec.kind == 'level':
            return 1 <= value <= 5, int(value)
        return value >= 1, int(value)
    if spec.kind == 'enum' and isinstance(value, str):
        label = value.strip()
        label = label.upper() if spec.choices == SMOOTHNESS_GRADES else label.lower()
        return label in spec.choices, label
    return False, value


def _flatten(answer: Mapping, prefix: str = '') -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in answer.items():
        name = f"{prefix}.{key}" if prefix else key
        try:
            resolve_path(name)
            known = True
        except KeyError:
            known = False
        if isinstance(value, Mapping) and not known:
            if name == 'conversationParameters':
                name = ''
            flat.update(_flatten(value, name))
        else:
            flat[name] = value
    return flat


def _record(result: InferredParameters, path: str, value: Any) -> bool:
    ok, normalized = check_value(path, value)
    if not ok:
        result.invalid[path] = value
        return False
    if PARAMETER_PATHS[path].is_numeric:
        result.numeric[path] = normalized
    else:
        result.categorical[path] = normalized
    return True


def build_judge_prompt(transcript: Transcript, requested: Sequence[str] = DEFAULT_JUDGED) -> str:
    """
    Judge prompt holding the definitions and the transcript only.

    The generating parameters are never part of this text.
    """
    lines = [f"Turn {t.turn} ({t.speaker}): {t.content}" for t in transcript.turns]
    names = ', '.join(short_name(resolve_path(p)) for p in requested)
    return render_template(load_template('judge.txt'), requested=names,
                           definitions=render_parameter_definitions(),
                           transcript='\n'.join(lines))


def parse_judgment(raw: str, requested: Sequence[str] = DEFAULT_JUDGED,
                   conversation_id: Optional[str] = None) -> InferredParameters:
    """
    Parse a judge's structured answer.

    Values outside their parameter's domain are recorded as invalid and
    excluded; requested parameters absent from the answer are listed in
    missing. Both cases log a warning.

    Raises:
        ParseError: If no JSON object can be recovered from raw
    """
    try:
        answer = json.loads(raw)
    except json.JSONDecodeError:
        repaired = repair_json_text(raw)
        try:
            answer = json.loads(repaired) if repaired else None
        except json.JSONDecodeError:
            answer = None
    if not isinstance(answer, dict):
        raise ParseError("Judge answer is not a JSON object", raw=raw)

    result = InferredParameters(judge=JUDGE_LLM, raw=raw, conversation_id=conversation_id)
    for name, value in _flatten(answer).items():
        try:
            path = resolve_path(name)
        except KeyError:
            logger.warning("Judge answered unknown parameter %s; ignored", name)
            continue
        if not _record(result, path, value):
            logger.warning("Judge value %s=%r outside its domain; excluded", path, value)

    wanted = [resolve_path(p) for p in requested]
    result.missing = [p for p in wanted
                      if p not in result.numeric and p not in result.categorical and p not in result.invalid]
    if result.missing:
        logger.warning("Judge answer missing %s", ', '.join(result.missing))
    return result


@dataclass
class LabelRowError:
    line: int
    message: str


@dataclass
class LabelImportReport:
    """Human label import outcome; bad rows never block good ones"""
    records: List[InferredParameters] = field(default_factory=list)
    errors: List[LabelRowError] = field(default_factory=list)


def load_human_labels(path: Union[str, Path]) -> LabelImportReport:
    """
    Read a JSONL human label file.

    Each row holds conversation_id, annotator_id, parameter_path and value.
    Rows are grouped into one InferredParameters per (annotator,
    conversation), in first-seen order.
    """
    report = LabelImportReport()
    grouped: Dict[Tuple[str, str], InferredParameters] = {}

    def reject(line_no: int, message: str) -> None:
        logger.warning("Label row %d rejected: %s", line_no, message)
        report.errors.append(LabelRowError(line_no, message))

    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                reject(line_no, f"malformed JSON: {e.msg}")
                continue
            if not isinstance(row, dict) or any(k not in row for k in LABEL_FIELDS):
                reject(line_no, f"row needs fields {', '.join(LABEL_FIELDS)}")
                continue
            try:
                param_path = resolve_path(str(row['parameter_path']))
            except KeyError:
                reject(line_no, f"unknown parameter path {row['parameter_path']}")
                continue
            ok, _ = check_value(param_path, row['value'])
            if not ok:
                reject(line_no, f"value {row['value']!r} invalid for {param_path}")
                continue

            key = (str(row['annotator_id']), str(row['conversation_id']))
            record = grouped.get(key)
            if record is None:
                record = InferredParameters(judge=JUDGE_HUMAN, annotator_id=key[0],
                                            conversation_id=key[1])
                grouped[key] = record
                report.records.append(record)
            _record(record, param_path, row['value'])
    return report


def import_human_labels(path: Union[str, Path]) -> List[InferredParameters]:
    """Human label records (judge = human); rejected rows are logged and skipped"""
    return load_human_labels(path).records
