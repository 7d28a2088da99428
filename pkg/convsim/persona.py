"""
Seeded entrepreneur background profiles
"""

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .exceptions import ConfigurationError
from .facets import load_facets


@dataclass(frozen=True)
class EntrepreneurProfile:
    """
    Entrepreneur background used to seed one conversation.

    Baseline profiles carry no traits; everything else is always populated.
    """
    id: str
    name: str
    demographic: str
    industry: str
    business_idea: str
    prior_experience: str
    background: str
    traits: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        return {
            'id': self.id,
            'name': self.name,
            'demographic': self.demographic,
            'industry': self.industry,
            'businessIdea': self.business_idea,
            'priorExperience': self.prior_experience,
            'background': self.background,
            'traits': list(self.traits),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'EntrepreneurProfile':
        return cls(
            id=data['id'],
            name=data['name'],
            demographic=data['demographic'],
            industry=data['industry'],
            business_idea=data['businessIdea'],
            prior_experience=data['priorExperience'],
            background=data['background'],
            traits=tuple(data.get('traits', [])),
        )

    def describe(self) -> str:
        """One-line description used in prompts"""
        return f"{self.name}, {self.background}, {self.demographic}"


def _draw_profile(rng: random.Random, profile_id: str, industry: str,
                  facets: Mapping, with_traits: bool) -> EntrepreneurProfile:
    stems = facets['industries'].get(industry) or {}
    ideas = stems.get('ideas') or [f"a {industry} business"]
    markets = stems.get('markets') or ['local customers']
    brand = f"{rng.choice(facets['brandWordsA'])} {rng.choice(facets['brandWordsB'])}"
    demographic = (f"{rng.choice(facets['ageBands'])} {rng.choice(facets['genders'])} "
                   f"from {rng.choice(facets['locales'])}")
    return EntrepreneurProfile(
        id=profile_id,
        name=f"{rng.choice(facets['firstNames'])} {rng.choice(facets['lastNames'])}",
        demographic=demographic,
        industry=industry,
        business_idea=f"{brand}: {rng.choice(ideas)} for {rng.choice(markets)}",
        prior_experience=rng.choice(facets['experiences']),
        background=rng.choice(facets['backgrounds']),
        traits=tuple(sorted(rng.sample(facets['traits'], 2))) if with_traits else (),
    )


def generate_profiles(seed: int, n: int, industry_pool: Optional[Sequence[str]] = None,
                      facets: Optional[Mapping] = None) -> List[EntrepreneurProfile]:
    """
    Generate a batch of entrepreneur profiles.

    Each profile draws from its own RNG stream keyed by (seed, index), so the
    first k profiles of a batch never depend on the batch size.

    Args:
        seed: Batch seed
        n: Number of profiles (>= 0)
        industry_pool: Industries to draw from (all curated industries when None)
        facets: Facet lists (bundled facets when None)

    Returns:
        List of n profiles with ids unique within the batch

    Raises:
        ConfigurationError: Empty pool with n > 0, or negative n

    Example:
        >>> profiles = generate_profiles(7, 800)
        >>> len({p.id for p in profiles})
        800
    """
    if n < 0:
        raise ConfigurationError(f"Profile count must be >= 0 (got {n})")
    if n == 0:
        return []
    facets = facets or load_facets()
    pool = list(industry_pool) if industry_pool is not None else sorted(facets['industries'])
    if not pool:
        raise ConfigurationError("Industry pool is empty")

    profiles = []
    for i in range(n):
        rng = random.Random(f"{seed}:{i}")
        industry = rng.choice(pool)
        profiles.append(_draw_profile(rng, f"E{seed}-{i:04d}", industry, facets, with_traits=True))
    return profiles


def baseline_profile(seed: int, facets: Optional[Mapping] = None) -> EntrepreneurProfile:
    """
    Random brief character setting for baseline prompts.

    Only background, prior experience and the idea it implies are drawn; no
    parameter-linked traits.
    """
    facets = facets or load_facets()
    rng = random.Random(f"baseline:{seed}")
    industry = rng.choice(sorted(facets['industries']))
    return _draw_profile(rng, f"B{seed}", industry, facets, with_traits=False)


def write_profiles(profiles: Sequence[EntrepreneurProfile], path: Union[str, Path]) -> None:
    """Write profiles as JSONL, one per line"""
    with open(path, 'w', encoding='utf-8') as f:
        for profile in profiles:
            f.write(json.dumps(profile.to_dict(), ensure_ascii=False) + '\n')


def read_profiles(path: Union[str, Path]) -> List[EntrepreneurProfile]:
    """Read a JSONL profile batch"""
    with open(path, 'r', encoding='utf-8') as f:
        return [EntrepreneurProfile.from_dict(json.loads(line)) for line in f if line.strip()]
