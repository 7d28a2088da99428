"""
Prompt compilation: profile + parameters (or baseline inputs) into provider prompt text
"""

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterable, Optional

from .config import TEMPLATE_DIR
from .exceptions import InputError, ValidationRefused
from .persona import EntrepreneurProfile
from .schema import ConversationParameters, ROOT_KEY, canonical_json, delete_path, resolve_path, validate

MODE_PARAMETERIZED = 'parameterized'
MODE_BASELINE = 'baseline'

TURN_CONTRACT = "The conversation must contain exactly {turns} turns."


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Read a template file, without its trailing newline"""
    return (TEMPLATE_DIR / name).read_text(encoding='utf-8').rstrip('\n')


def template_version() -> str:
    return load_template('VERSION').strip()


def render_template(template: str, **kwargs: str) -> str:
    """Render a template string, leaving unresolved vars as-is."""
    result = template
    for key, value in kwargs.items():
        result = result.replace(f"{{{key}}}", value)
    return result


@dataclass(frozen=True)
class PromptBundle:
    """
    Exact prompt texts sent to a provider.

    content_hash is derived from every other field (template version
    included) and keys the response cache.
    """
    system_text: str
    instruction_text: str
    parameter_block: Optional[str]
    target_turns: int
    mode: str
    template_version: str
    content_hash: str = field(init=False)

    def __post_init__(self):
        if self.mode == MODE_BASELINE and self.parameter_block is not None:
            raise InputError("Baseline prompts carry no parameter block")
        payload = json.dumps({
            'system': self.system_text,
            'instruction': self.instruction_text,
            'parameters': self.parameter_block,
            'turns': self.target_turns,
            'mode': self.mode,
            'templateVersion': self.template_version,
        }, sort_keys=True, ensure_ascii=False)
        object.__setattr__(self, 'content_hash', hashlib.sha256(payload.encode('utf-8')).hexdigest())

    def to_dict(self) -> Dict:
        return {
            'systemText': self.system_text,
            'instructionText': self.instruction_text,
            'parameterBlock': self.parameter_block,
            'targetTurns': self.target_turns,
            'mode': self.mode,
            'templateVersion': self.template_version,
            'contentHash': self.content_hash,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'PromptBundle':
        return cls(
            system_text=data['systemText'],
            instruction_text=data['instructionText'],
            parameter_block=data.get('parameterBlock'),
            target_turns=data['targetTurns'],
            mode=data['mode'],
            template_version=data['templateVersion'],
        )


def render_parameter_definitions() -> str:
    """
    Human-readable catalog of every parameter and its level glosses.

    Shared by generation prompts and judge prompts.
    """
    return load_template('definitions.txt')


def _profile_fields(profile: EntrepreneurProfile) -> Dict[str, str]:
    return {
        'name': profile.name,
        'demographic': profile.demographic,
        'industry': profile.industry,
        'business_idea': profile.business_idea,
        'background': profile.background,
        'prior_experience': profile.prior_experience,
        'traits': ', '.join(profile.traits) if profile.traits else 'none',
    }


def compile_parameterized(profile: EntrepreneurProfile, params: ConversationParameters,
                          omit: Iterable[str] = ()) -> PromptBundle:
    """
    Compile a parameterized generation prompt.

    Sections are ordered scenario, definitions, parameter values, output
    contract, turn contract.

    Args:
        profile: Entrepreneur background
        params: Parameters; must validate clean
        omit: Parameter paths or aliases left out of the value block

    Returns:
        PromptBundle in parameterized mode

    Raises:
        ValidationRefused: If params do not validate
    """
    report = validate(params)
    if not report.ok:
        raise ValidationRefused(f"Refusing to compile invalid parameters: {report}", report=report)

    document = params.to_dict()
    for name in omit:
        delete_path(document, resolve_path(name))
    parameter_block = canonical_json({ROOT_KEY: document})

    turns = params.fundamentals.turns
    sections = [
        render_template(load_template('scenario.txt'), **_profile_fields(profile)),
        render_parameter_definitions(),
        "Conversation parameters:\n" + parameter_block.rstrip('\n'),
        load_template('output_format.txt'),
        TURN_CONTRACT.format(turns=turns),
    ]
    return PromptBundle(
        system_text=load_template('system.txt'),
        instruction_text='\n\n'.join(sections),
        parameter_block=parameter_block,
        target_turns=turns,
        mode=MODE_PARAMETERIZED,
        template_version=template_version(),
    )


def compile_baseline(profile: EntrepreneurProfile, turns: int) -> PromptBundle:
    """
    Compile the raw baseline prompt.

    No parameter definitions or values are included; only the turn count and
    the profile's industry, demographic and idea.
    """
    if turns < 1:
        raise InputError(f"Baseline turns must be >= 1 (got {turns})")
    raw = render_template(load_template('baseline.txt'), turns=str(turns),
                          industry=profile.industry, demographic=profile.demographic,
                          business_idea=profile.business_idea)
    sections = [raw, load_template('output_format.txt'), TURN_CONTRACT.format(turns=turns)]
    return PromptBundle(
        system_text=load_template('system.txt'),
        instruction_text='\n\n'.join(sections),
        parameter_block=None,
        target_turns=turns,
        mode=MODE_BASELINE,
        template_version=template_version(),
    )
