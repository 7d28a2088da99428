"""
Conversation parameter models, validation, serialization and randomization.

The parameter bundle is organized into six sections (fundamentals,
participants, learning approach, conversation dynamics, linguistic patterns,
content attributes). Documents use the camelCase key names of the published
parameter format, optionally wrapped in a ``conversationParameters`` root.

Section models check structure and types only. Value rules (ranges, sums,
enums) are reported by validate() as data.
"""

import json
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Mapping, Optional, Tuple, Union

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    StrictFloat,
    StrictInt,
    StrictStr,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic.alias_generators import to_camel

from .exceptions import ConstraintError, ParseError, SchemaError, ValidationRefused
from .facets import load_facets

logger = logging.getLogger(__name__)

ROOT_KEY = 'conversationParameters'

PURPOSES = ('advisory', 'educational', 'exploratory', 'evaluative')
ARCS = ('problem-solution', 'exploration-conclusion', 'question-answer', 'build-refine')
INITIATORS = ('user', 'assistant')
DECISION_STYLES = ('analytical', 'intuitive', 'consultative', 'risk-averse', 'impulsive')
FEEDBACK_RECEPTIONS = ('receptive', 'balanced', 'skeptical', 'resistant')
FRAMEWORKS = ('socratic', 'didactic', 'collaborative', 'experiential')
DISAGREEMENT_STYLES = ('diplomatic', 'direct', 'avoidant', 'collaborative')
SMOOTHNESS_GRADES = ('A', 'B', 'C', 'D', 'E', 'F')
QUESTION_TYPES = ('closed', 'open', 'rhetorical', 'clarifying')
RESPONSE_STYLE_KEYS = ('conciseness', 'directness', 'formality')

LEVEL_MIN, LEVEL_MAX = 1, 5
SUM_TOLERANCE = 1e-6
# Bounded domain for randomized turn counts; spans the studied lengths
RANDOM_TURN_RANGE = (5, 20)

# Validation rule ids
RULE_UNIT_RANGE = 'range.unit-interval'
RULE_LEVEL_RANGE = 'range.level'
RULE_TURNS = 'range.turns'
RULE_QUESTION_SUM = 'question-types.sum'
RULE_TURN_BALANCE = 'turn-balance.consistency'
RULE_COMPLEXITY = 'complexity-progression.advancement'
RULE_ENUM = 'enum.membership'
RULE_REQUIRED = 'required.non-empty'
RULE_STAKEHOLDERS = 'stakeholders.relevance'

RULES = {
    RULE_UNIT_RANGE: 'All numerical parameters fall within 0.0-1.0',
    RULE_LEVEL_RANGE: 'Knowledge gap, focus and prior knowledge levels are integers 1-5',
    RULE_TURNS: 'Turn count is a positive integer',
    RULE_QUESTION_SUM: 'Question type distributions sum to 1.0',
    RULE_TURN_BALANCE: 'Turn balance ratios are positive and sum to 100',
    RULE_COMPLEXITY: 'Complexity progression shows logical (non-decreasing) advancement',
    RULE_ENUM: 'Categorical parameters take one of their defined values',
    RULE_REQUIRED: 'Text and list parameters are non-empty',
    RULE_STAKEHOLDERS: 'Stakeholder perspectives are relevant to the industry context (warning)',
}


# =============================================================================
# Models
# =============================================================================

_SECTION_CONFIG = ConfigDict(
    extra='forbid',
    frozen=True,
    alias_generator=to_camel,
    populate_by_name=True,
)

_RATIO_RE = re.compile(r'^\s*(\d+(?:\.\d+)?)\s*:\s*(\d+(?:\.\d+)?)\s*$')


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _number(value: Any) -> Any:
    if not _is_number(value):
        raise ValueError('expected a number')
    return float(value)


# Integers and floats, never booleans or numeric strings
Number = Annotated[float, BeforeValidator(_number)]


def _format_share(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def unit_to_level(value: float) -> int:
    """Map a unit-interval value onto the 1-5 scale as round(1 + 4x), halves up"""
    return int(math.floor(1 + 4 * value + 0.5))


class Fundamentals(BaseModel):
    """Core structural parameters"""
    model_config = _SECTION_CONFIG

    purpose: StrictStr
    turns: StrictInt
    turn_balance: Tuple[float, float]
    arc: StrictStr
    initiator: StrictStr
    topic_scope: Tuple[StrictStr, ...]

    @field_validator('turn_balance', mode='before')
    @classmethod
    def _parse_ratio(cls, value: Any) -> Any:
        if isinstance(value, tuple):
            return value
        match = _RATIO_RE.match(value) if isinstance(value, str) else None
        if not match:
            raise ValueError('expected a ratio string like "55:45"')
        return (float(match.group(1)), float(match.group(2)))

    def to_dict(self) -> Dict:
        return {
            'purpose': self.purpose,
            'turns': self.turns,
            'turnBalance': f"{_format_share(self.turn_balance[0])}:{_format_share(self.turn_balance[1])}",
            'arc': self.arc,
            'initiator': self.initiator,
            'topicScope': list(self.topic_scope),
        }


class AssistantSpec(BaseModel):
    """Advisor identity and role consistency"""
    model_config = _SECTION_CONFIG

    identity: StrictStr
    consistency_level: Number

    def to_dict(self) -> Dict:
        return {'identity': self.identity, 'consistencyLevel': self.consistency_level}


class UserSpec(BaseModel):
    """Entrepreneur traits"""
    model_config = _SECTION_CONFIG

    identity: StrictStr
    focus_level: StrictInt
    prior_knowledge_level: Union[StrictInt, StrictFloat]
    decision_making_style: StrictStr
    feedback_reception: StrictStr

    @field_validator('prior_knowledge_level', mode='before')
    @classmethod
    def _map_unit_level(cls, value: Any) -> Any:
        # Older documents give prior knowledge on the unit interval
        if not isinstance(value, float):
            return value
        if 0.0 <= value <= 1.0:
            level = unit_to_level(value)
            logger.warning("Mapped unit-interval participants.user.priorKnowledgeLevel=%s to level %d",
                           value, level)
            return level
        if value.is_integer():
            return int(value)
        return value

    def to_dict(self) -> Dict:
        return {
            'identity': self.identity,
            'focusLevel': self.focus_level,
            'priorKnowledgeLevel': self.prior_knowledge_level,
            'decisionMakingStyle': self.decision_making_style,
            'feedbackReception': self.feedback_reception,
        }


class Participants(BaseModel):
    """
    Participant characteristics.

    knowledge_gap_level runs from 1 (expert) to 5 (complete novice).
    """
    model_config = _SECTION_CONFIG

    knowledge_gap_level: StrictInt
    assistant: AssistantSpec
    user: UserSpec

    def to_dict(self) -> Dict:
        return {
            'knowledgeGapLevel': self.knowledge_gap_level,
            'assistant': self.assistant.to_dict(),
            'user': self.user.to_dict(),
        }


class LearningApproach(BaseModel):
    """How knowledge is delivered"""
    model_config = _SECTION_CONFIG

    framework: StrictStr
    practical_theoretical_balance: Number
    complexity_progression: Tuple[Number, ...]
    industry_context: StrictStr

    def to_dict(self) -> Dict:
        return {
            'framework': self.framework,
            'practicalTheoreticalBalance': self.practical_theoretical_balance,
            'complexityProgression': list(self.complexity_progression),
            'industryContext': self.industry_context,
        }


class EmotionPoint(BaseModel):
    """One step of the emotional journey, written as {emotion: intensity}"""
    model_config = ConfigDict(extra='forbid', frozen=True)

    emotion: StrictStr
    intensity: Number

    @model_validator(mode='before')
    @classmethod
    def _from_pair(cls, value: Any) -> Any:
        if not isinstance(value, dict) or set(value) == {'emotion', 'intensity'}:
            return value
        if len(value) != 1:
            raise ValueError('expected a single {emotion: intensity} pair')
        (emotion, intensity), = value.items()
        return {'emotion': emotion, 'intensity': intensity}

    def to_dict(self) -> Dict:
        return {self.emotion: self.intensity}


class ConversationDynamics(BaseModel):
    """Interpersonal interaction and flow"""
    model_config = _SECTION_CONFIG

    formality: Number
    emotional_journey: Tuple[EmotionPoint, ...]
    relationship_development: Number
    disagreement_handling: StrictStr
    smoothness_factor: StrictStr = 'A'

    def to_dict(self) -> Dict:
        return {
            'formality': self.formality,
            'emotionalJourney': [point.to_dict() for point in self.emotional_journey],
            'relationshipDevelopment': self.relationship_development,
            'disagreementHandling': self.disagreement_handling,
            'smoothnessFactor': self.smoothness_factor,
        }


class QuestionTypes(BaseModel):
    """Distribution of inquiry styles; sums to 1.0"""
    model_config = _SECTION_CONFIG

    closed: Number
    open: Number
    rhetorical: Number
    clarifying: Number

    def to_dict(self) -> Dict:
        return {
            'closed': self.closed,
            'open': self.open,
            'rhetorical': self.rhetorical,
            'clarifying': self.clarifying,
        }

    def total(self) -> float:
        return self.closed + self.open + self.rhetorical + self.clarifying


class ResponseStyle(BaseModel):
    model_config = _SECTION_CONFIG

    conciseness: Number
    directness: Number
    formality: Number

    def to_dict(self) -> Dict:
        return {
            'conciseness': self.conciseness,
            'directness': self.directness,
            'formality': self.formality,
        }


class LinguisticPatterns(BaseModel):
    """Language use and communication style"""
    model_config = _SECTION_CONFIG

    technical_language_level: Number
    question_types: QuestionTypes
    response_style: ResponseStyle

    def to_dict(self) -> Dict:
        return {
            'technicalLanguageLevel': self.technical_language_level,
            'questionTypes': self.question_types.to_dict(),
            'responseStyle': self.response_style.to_dict(),
        }


class ContentAttributes(BaseModel):
    """Quality and comprehensiveness of content"""
    model_config = _SECTION_CONFIG

    factual_accuracy: Number
    example_specificity: Number
    stakeholder_perspectives: Tuple[StrictStr, ...]

    def to_dict(self) -> Dict:
        return {
            'factualAccuracy': self.factual_accuracy,
            'exampleSpecificity': self.example_specificity,
            'stakeholderPerspectives': list(self.stakeholder_perspectives),
        }


def _error_path(loc: Tuple[Union[str, int], ...]) -> str:
    """Dotted camelCase path from a pydantic error location"""
    path = ''
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path = _join(path, part)
    return path


def _error_message(error: Mapping) -> str:
    if error['type'] == 'missing':
        return 'missing field'
    if error['type'] == 'extra_forbidden':
        return 'unknown field'
    return error['msg']


class ConversationParameters(BaseModel):
    """
    The six-section parameter bundle driving one generation.

    Example:
        >>> params = parse_parameters(open('params.json').read())
        >>> validate(params).ok
        True
        >>> params.fundamentals.turns
        12
    """
    model_config = _SECTION_CONFIG

    fundamentals: Fundamentals
    participants: Participants
    learning_approach: LearningApproach
    dynamics: ConversationDynamics = Field(alias='conversationDynamics')
    linguistic: LinguisticPatterns = Field(alias='linguisticPatterns')
    content: ContentAttributes = Field(alias='contentAttributes')

    def to_dict(self) -> Dict:
        """Convert to the camelCase document form (without root wrapper)"""
        return {
            'fundamentals': self.fundamentals.to_dict(),
            'participants': self.participants.to_dict(),
            'learningApproach': self.learning_approach.to_dict(),
            'conversationDynamics': self.dynamics.to_dict(),
            'linguisticPatterns': self.linguistic.to_dict(),
            'contentAttributes': self.content.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Any) -> 'ConversationParameters':
        """
        Build parameters from a document dictionary.

        Args:
            data: Document with or without the conversationParameters root

        Raises:
            SchemaError: Listing every missing, unknown or mistyped path
        """
        problems: List[Tuple[str, str]] = []
        if isinstance(data, Mapping) and ROOT_KEY in data:
            problems.extend((key, 'unknown field') for key in data if key != ROOT_KEY)
            data = data[ROOT_KEY]
        if isinstance(data, Mapping):
            data = dict(data)
        try:
            params = cls.model_validate(data)
        except ValidationError as e:
            problems.extend((_error_path(err['loc']), _error_message(err)) for err in e.errors())
        if problems:
            details = '; '.join(f"{path or '<root>'}: {message}" for path, message in problems)
            raise SchemaError(f"Invalid parameter document: {details}",
                              paths=[path for path, _ in problems])
        return params

    def value(self, path: str) -> Any:
        """Get a leaf value by dotted camelCase path or alias"""
        return get_path(self.to_dict(), resolve_path(path))


# =============================================================================
# Path catalog
# =============================================================================


@dataclass(frozen=True)
class FieldSpec:
    """Kind and legal values of one leaf parameter"""
    kind: str  # unit, level, count, ratio, enum, text, list, progression, journey
    choices: Tuple[str, ...] = ()

    @property
    def is_numeric(self) -> bool:
        return self.kind in ('unit', 'level', 'count')

    @property
    def is_categorical(self) -> bool:
        return self.kind == 'enum'


PARAMETER_PATHS: Dict[str, FieldSpec] = {
    'fundamentals.purpose': FieldSpec('enum', PURPOSES),
    'fundamentals.turns': FieldSpec('count'),
    'fundamentals.turnBalance': FieldSpec('ratio'),
    'fundamentals.arc': FieldSpec('enum', ARCS),
    'fundamentals.initiator': FieldSpec('enum', INITIATORS),
    'fundamentals.topicScope': FieldSpec('list'),
    'participants.knowledgeGapLevel': FieldSpec('level'),
    'participants.assistant.identity': FieldSpec('text'),
    'participants.assistant.consistencyLevel': FieldSpec('unit'),
    'participants.user.identity': FieldSpec('text'),
    'participants.user.focusLevel': FieldSpec('level'),
    'participants.user.priorKnowledgeLevel': FieldSpec('level'),
    'participants.user.decisionMakingStyle': FieldSpec('enum', DECISION_STYLES),
    'participants.user.feedbackReception': FieldSpec('enum', FEEDBACK_RECEPTIONS),
    'learningApproach.framework': FieldSpec('enum', FRAMEWORKS),
    'learningApproach.practicalTheoreticalBalance': FieldSpec('unit'),
    'learningApproach.complexityProgression': FieldSpec('progression'),
    'learningApproach.industryContext': FieldSpec('text'),
    'conversationDynamics.formality': FieldSpec('unit'),
    'conversationDynamics.emotionalJourney': FieldSpec('journey'),
    'conversationDynamics.relationshipDevelopment': FieldSpec('unit'),
    'conversationDynamics.disagreementHandling': FieldSpec('enum', DISAGREEMENT_STYLES),
    'conversationDynamics.smoothnessFactor': FieldSpec('enum', SMOOTHNESS_GRADES),
    'linguisticPatterns.technicalLanguageLevel': FieldSpec('unit'),
    'linguisticPatterns.questionTypes.closed': FieldSpec('unit'),
    'linguisticPatterns.questionTypes.open': FieldSpec('unit'),
    'linguisticPatterns.questionTypes.rhetorical': FieldSpec('unit'),
    'linguisticPatterns.questionTypes.clarifying': FieldSpec('unit'),
    'linguisticPatterns.responseStyle.conciseness': FieldSpec('unit'),
    'linguisticPatterns.responseStyle.directness': FieldSpec('unit'),
    'linguisticPatterns.responseStyle.formality': FieldSpec('unit'),
    'contentAttributes.factualAccuracy': FieldSpec('unit'),
    'contentAttributes.exampleSpecificity': FieldSpec('unit'),
    'contentAttributes.stakeholderPerspectives': FieldSpec('list'),
}

# Short names for the nine dominant parameters (plus the other judged traits)
PATH_ALIASES: Dict[str, str] = {
    'turns': 'fundamentals.turns',
    'industryContext': 'learningApproach.industryContext',
    'knowledgeGapLevel': 'participants.knowledgeGapLevel',
    'smoothnessFactor': 'conversationDynamics.smoothnessFactor',
    'focusLevel': 'participants.user.focusLevel',
    'identity': 'participants.user.identity',
    'technicalLanguageLevel': 'linguisticPatterns.technicalLanguageLevel',
    'formality': 'conversationDynamics.formality',
    'decisionMakingStyle': 'participants.user.decisionMakingStyle',
    'priorKnowledgeLevel': 'participants.user.priorKnowledgeLevel',
    'feedbackReception': 'participants.user.feedbackReception',
}

_QUESTION_TYPE_PATHS = tuple(f'linguisticPatterns.questionTypes.{key}' for key in QUESTION_TYPES)


def resolve_path(name: str) -> str:
    """
    Resolve an alias or dotted path to a catalog path.

    Raises:
        KeyError: If the name is not a known parameter
    """
    path = PATH_ALIASES.get(name, name)
    if path not in PARAMETER_PATHS:
        raise KeyError(name)
    return path


def short_name(path: str) -> str:
    """Last path segment (e.g. 'focusLevel')"""
    return path.rsplit('.', 1)[-1]


def get_path(document: Mapping, path: str) -> Any:
    """Read a dotted path from a nested dictionary"""
    node: Any = document
    for part in path.split('.'):
        node = node[part]
    return node


def set_path(document: Dict, path: str, value: Any) -> None:
    """Write a dotted path into a nested dictionary"""
    parts = path.split('.')
    node = document
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def delete_path(document: Dict, path: str) -> None:
    """Remove a dotted path from a nested dictionary if present"""
    parts = path.split('.')
    node = document
    for part in parts[:-1]:
        node = node.get(part)
        if not isinstance(node, dict):
            return
    node.pop(parts[-1], None)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


# =============================================================================
# Validation
# =============================================================================


@dataclass(frozen=True)
class Violation:
    """One failed rule"""
    path: str
    rule: str
    message: str

    def to_dict(self) -> Dict:
        return {'path': self.path, 'rule': self.rule, 'message': self.message}


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(); ok iff there are no violations"""
    violations: Tuple[Violation, ...] = ()
    warnings: Tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> List[str]:
        """Rule ids of all violations, in report order"""
        return [v.rule for v in self.violations]

    def to_dict(self) -> Dict:
        return {
            'ok': self.ok,
            'violations': [v.to_dict() for v in self.violations],
            'warnings': [w.to_dict() for w in self.warnings],
        }

    def __str__(self) -> str:
        if self.ok:
            return 'ok'
        return '; '.join(f"{v.path}: {v.message} [{v.rule}]" for v in self.violations)


class _Checker:
    def __init__(self):
        self.violations: List[Violation] = []
        self.warnings: List[Violation] = []

    def add(self, path, rule, message):
        self.violations.append(Violation(path, rule, message))

    def unit(self, path: str, value: Any) -> None:
        if not (_is_number(value) and 0.0 <= value <= 1.0):
            self.add(path, RULE_UNIT_RANGE, f"{short_name(path)} {value!r} outside 0.0-1.0")

    def level(self, path: str, value: Any, label: str) -> None:
        if not (isinstance(value, int) and not isinstance(value, bool)
                and LEVEL_MIN <= value <= LEVEL_MAX):
            self.add(path, RULE_LEVEL_RANGE, f"{label} out of range 1–5 (got {value!r})")

    def enum(self, path: str, value: Any, choices: Tuple[str, ...]) -> None:
        if value not in choices:
            self.add(path, RULE_ENUM, f"{short_name(path)} {value!r} not one of {', '.join(choices)}")

    def text(self, path: str, value: Any) -> None:
        if not isinstance(value, str) or not value.strip():
            self.add(path, RULE_REQUIRED, f"{short_name(path)} must be non-empty")

    def text_list(self, path: str, values: Any, allow_empty: bool = False) -> None:
        if not values:
            if not allow_empty:
                self.add(path, RULE_REQUIRED, f"{short_name(path)} must be non-empty")
            return
        for i, item in enumerate(values):
            self.text(f"{path}[{i}]", item)


def validate(params: ConversationParameters) -> ValidationReport:
    """
    Check every parameter rule.

    Violations are returned as data; this never raises for invalid values.

    Args:
        params: Structurally complete parameters

    Returns:
        ValidationReport listing every violated rule
    """
    c = _Checker()

    fu = params.fundamentals
    c.enum('fundamentals.purpose', fu.purpose, PURPOSES)
    if not (isinstance(fu.turns, int) and not isinstance(fu.turns, bool) and fu.turns >= 1):
        c.add('fundamentals.turns', RULE_TURNS, f"turns must be a positive integer (got {fu.turns!r})")
    balance = tuple(fu.turn_balance or ())
    if (len(balance) != 2 or not all(_is_number(x) and x > 0 for x in balance)
            or abs(sum(balance) - 100.0) > SUM_TOLERANCE):
        c.add('fundamentals.turnBalance', RULE_TURN_BALANCE,
              f"turn balance {balance!r} must be two positive shares summing to 100")
    c.enum('fundamentals.arc', fu.arc, ARCS)
    c.enum('fundamentals.initiator', fu.initiator, INITIATORS)
    c.text_list('fundamentals.topicScope', fu.topic_scope)

    pa = params.participants
    c.level('participants.knowledgeGapLevel', pa.knowledge_gap_level, 'KGL')
    c.text('participants.assistant.identity', pa.assistant.identity)
    c.unit('participants.assistant.consistencyLevel', pa.assistant.consistency_level)
    c.text('participants.user.identity', pa.user.identity)
    c.level('participants.user.focusLevel', pa.user.focus_level, 'focus level')
    c.level('participants.user.priorKnowledgeLevel', pa.user.prior_knowledge_level, 'prior knowledge level')
    c.enum('participants.user.decisionMakingStyle', pa.user.decision_making_style, DECISION_STYLES)
    c.enum('participants.user.feedbackReception', pa.user.feedback_reception, FEEDBACK_RECEPTIONS)

    la = params.learning_approach
    c.enum('learningApproach.framework', la.framework, FRAMEWORKS)
    c.unit('learningApproach.practicalTheoreticalBalance', la.practical_theoretical_balance)
    progression = tuple(la.complexity_progression or ())
    if not progression:
        c.add('learningApproach.complexityProgression', RULE_REQUIRED, 'complexityProgression must be non-empty')
    for i, value in enumerate(progression):
        c.unit(f'learningApproach.complexityProgression[{i}]', value)
    for i in range(1, len(progression)):
        if _is_number(progression[i]) and _is_number(progression[i - 1]) and progression[i] < progression[i - 1]:
            c.add(f'learningApproach.complexityProgression[{i}]', RULE_COMPLEXITY,
                  f"complexity decreases from {progression[i - 1]} to {progression[i]}")
    c.text('learningApproach.industryContext', la.industry_context)

    cd = params.dynamics
    c.unit('conversationDynamics.formality', cd.formality)
    for i, point in enumerate(cd.emotional_journey or ()):
        c.text(f'conversationDynamics.emotionalJourney[{i}]', point.emotion)
        c.unit(f'conversationDynamics.emotionalJourney[{i}]', point.intensity)
    c.unit('conversationDynamics.relationshipDevelopment', cd.relationship_development)
    c.enum('conversationDynamics.disagreementHandling', cd.disagreement_handling, DISAGREEMENT_STYLES)
    c.enum('conversationDynamics.smoothnessFactor', cd.smoothness_factor, SMOOTHNESS_GRADES)

    lp = params.linguistic
    c.unit('linguisticPatterns.technicalLanguageLevel', lp.technical_language_level)
    qt_values = [getattr(lp.question_types, key) for key in QUESTION_TYPES]
    for key, value in zip(QUESTION_TYPES, qt_values):
        c.unit(f'linguisticPatterns.questionTypes.{key}', value)
    if all(_is_number(v) for v in qt_values):
        total = math.fsum(qt_values)
        if abs(total - 1.0) > SUM_TOLERANCE:
            c.add('linguisticPatterns.questionTypes', RULE_QUESTION_SUM,
                  f"question types sum {total:g} ≠ 1.0")
    for key in RESPONSE_STYLE_KEYS:
        c.unit(f'linguisticPatterns.responseStyle.{key}', getattr(lp.response_style, key))

    ca = params.content
    c.unit('contentAttributes.factualAccuracy', ca.factual_accuracy)
    c.unit('contentAttributes.exampleSpecificity', ca.example_specificity)
    c.text_list('contentAttributes.stakeholderPerspectives', ca.stakeholder_perspectives, allow_empty=True)
    if not ca.stakeholder_perspectives:
        c.warnings.append(Violation(
            'contentAttributes.stakeholderPerspectives', RULE_STAKEHOLDERS,
            f"no stakeholder perspectives for {fu.purpose} conversation in {la.industry_context}"))

    return ValidationReport(violations=tuple(c.violations), warnings=tuple(c.warnings))


# =============================================================================
# Parse / serialize
# =============================================================================


def parse_parameters(document: str) -> ConversationParameters:
    """
    Parse a JSON parameter document.

    Args:
        document: UTF-8 JSON text; blank text is read as an empty object

    Returns:
        ConversationParameters (not yet validated)

    Raises:
        ParseError: Malformed JSON, with line/column location
        SchemaError: Missing, unknown or mistyped fields, with paths
    """
    if not document.strip():
        data: Any = {}
    else:
        try:
            data = json.loads(document)
        except json.JSONDecodeError as e:
            location = f"line {e.lineno} column {e.colno}"
            raise ParseError(f"Malformed parameter document at {location}: {e.msg}",
                             raw=document, location=location)
    return ConversationParameters.from_dict(data)


def serialize_parameters(params: ConversationParameters) -> str:
    """
    Serialize parameters to canonical JSON.

    Keys follow the document order of the parameter format; identical
    parameters always produce identical text.

    Raises:
        ValidationRefused: If params do not validate
    """
    report = validate(params)
    if not report.ok:
        raise ValidationRefused(f"Refusing to serialize invalid parameters: {report}", report=report)
    return canonical_json({ROOT_KEY: params.to_dict()})


def canonical_json(document: Any) -> str:
    """Stable JSON text used for parameter documents and hashes"""
    return json.dumps(document, indent=2, ensure_ascii=False) + '\n'


def read_parameters(path: Union[str, Path]) -> ConversationParameters:
    """Parse a parameter file"""
    return parse_parameters(Path(path).read_text(encoding='utf-8'))


def write_parameters(params: ConversationParameters, path: Union[str, Path]) -> None:
    """Write canonical JSON to a parameter file"""
    Path(path).write_text(serialize_parameters(params), encoding='utf-8')


# =============================================================================
# Randomization
# =============================================================================


def _random_document(rng: random.Random, facets: Mapping) -> Dict:
    """Draw every field uniformly from its domain, in a fixed order"""
    user_share = rng.randint(1, 99)
    fundamentals = {
        'purpose': rng.choice(PURPOSES),
        'turns': rng.randint(*RANDOM_TURN_RANGE),
        'turnBalance': f"{user_share}:{100 - user_share}",
        'arc': rng.choice(ARCS),
        'initiator': rng.choice(INITIATORS),
        'topicScope': rng.sample(facets['topics'], rng.randint(1, 4)),
    }
    participants = {
        'knowledgeGapLevel': rng.randint(LEVEL_MIN, LEVEL_MAX),
        'assistant': {
            'identity': rng.choice(facets['assistantIdentities']),
            'consistencyLevel': rng.random(),
        },
        'user': {
            'identity': rng.choice(facets['userIdentities']),
            'focusLevel': rng.randint(LEVEL_MIN, LEVEL_MAX),
            'priorKnowledgeLevel': rng.randint(LEVEL_MIN, LEVEL_MAX),
            'decisionMakingStyle': rng.choice(DECISION_STYLES),
            'feedbackReception': rng.choice(FEEDBACK_RECEPTIONS),
        },
    }
    learning = {
        'framework': rng.choice(FRAMEWORKS),
        'practicalTheoreticalBalance': rng.random(),
        'complexityProgression': sorted(rng.random() for _ in range(rng.randint(2, 6))),
        'industryContext': rng.choice(facets['industryContexts']),
    }
    journey_emotions = rng.sample(facets['emotions'], rng.randint(2, 5))
    dynamics = {
        'formality': rng.random(),
        'emotionalJourney': [{emotion: rng.random()} for emotion in journey_emotions],
        'relationshipDevelopment': rng.random(),
        'disagreementHandling': rng.choice(DISAGREEMENT_STYLES),
        'smoothnessFactor': rng.choice(SMOOTHNESS_GRADES),
    }
    # Sorted uniform cuts give a uniform point on the simplex
    cuts = sorted(rng.random() for _ in range(3))
    shares = [cuts[0], cuts[1] - cuts[0], cuts[2] - cuts[1], 1.0 - cuts[2]]
    linguistic = {
        'technicalLanguageLevel': rng.random(),
        'questionTypes': dict(zip(QUESTION_TYPES, shares)),
        'responseStyle': {key: rng.random() for key in RESPONSE_STYLE_KEYS},
    }
    content = {
        'factualAccuracy': rng.random(),
        'exampleSpecificity': rng.random(),
        'stakeholderPerspectives': rng.sample(facets['stakeholders'], rng.randint(1, 4)),
    }
    return {
        'fundamentals': fundamentals,
        'participants': participants,
        'learningApproach': learning,
        'conversationDynamics': dynamics,
        'linguisticPatterns': linguistic,
        'contentAttributes': content,
    }


def _flatten_constraints(constraints: Mapping, prefix: str = '') -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in constraints.items():
        name = _join(prefix, key)
        known = name in PARAMETER_PATHS or name in PATH_ALIASES
        if isinstance(value, Mapping) and not known:
            flat.update(_flatten_constraints(value, name))
        else:
            flat[name] = value
    return flat


def _apply_question_constraints(document: Dict, fixed: Dict[str, Any]) -> None:
    for path, value in fixed.items():
        if not _is_number(value) or not 0.0 <= value <= 1.0:
            raise ConstraintError(f"{path} must be a number in 0.0-1.0 (got {value!r})")
    fixed_total = math.fsum(fixed.values())
    free = [p for p in _QUESTION_TYPE_PATHS if p not in fixed]
    if fixed_total > 1.0 + SUM_TOLERANCE:
        raise ConstraintError(f"Fixed question types sum {fixed_total:g} > 1.0")
    if not free:
        if abs(fixed_total - 1.0) > SUM_TOLERANCE:
            raise ConstraintError(f"Fixed question types sum {fixed_total:g} ≠ 1.0")
    else:
        remaining = max(0.0, 1.0 - fixed_total)
        drawn = [get_path(document, p) for p in free]
        drawn_total = math.fsum(drawn)
        for path, value in zip(free, drawn):
            share = value / drawn_total if drawn_total > 0 else 1.0 / len(free)
            set_path(document, path, remaining * share)
    for path, value in fixed.items():
        set_path(document, path, float(value))


def randomize_parameters(seed: int, constraints: Optional[Mapping[str, Any]] = None,
                         facets: Optional[Mapping] = None) -> ConversationParameters:
    """
    Draw a random valid parameter bundle.

    Args:
        seed: RNG seed; same seed and constraints give identical output
        constraints: Fixed values by dotted path or alias, or as a nested
            partial document (e.g. {'turns': 20, 'smoothnessFactor': 'A'})
        facets: Pools for text fields (bundled facets when None)

    Returns:
        ConversationParameters that validate clean

    Raises:
        ConstraintError: Unknown paths or contradictory constraints
    """
    facets = facets or load_facets()
    rng = random.Random(seed)
    document = _random_document(rng, facets)

    question_fixed: Dict[str, Any] = {}
    for name, value in _flatten_constraints(constraints or {}).items():
        try:
            path = resolve_path(name)
        except KeyError:
            raise ConstraintError(f"Unknown parameter path in constraints: {name}")
        if path in _QUESTION_TYPE_PATHS:
            question_fixed[path] = value
            continue
        if path == 'fundamentals.turnBalance' and isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ConstraintError(f"turnBalance needs two shares (got {value!r})")
            value = f"{_format_share(value[0])}:{_format_share(value[1])}"
        if isinstance(value, tuple):
            value = list(value)
        set_path(document, path, value)
    if question_fixed:
        _apply_question_constraints(document, question_fixed)

    try:
        params = ConversationParameters.from_dict(document)
    except SchemaError as e:
        raise ConstraintError(f"Constraints do not fit the schema: {e}")
    report = validate(params)
    if not report.ok:
        raise ConstraintError(f"Constraints are not satisfiable: {report}")
    return params
