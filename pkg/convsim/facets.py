"""
Curated facet lists shared by persona generation and parameter randomization
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .config import load_data, read_json
from .exceptions import ConfigurationError

REQUIRED_KEYS = (
    'firstNames', 'lastNames', 'ageBands', 'genders', 'locales', 'backgrounds',
    'experiences', 'traits', 'brandWordsA', 'brandWordsB', 'industries',
    'userIdentities', 'assistantIdentities', 'industryContexts', 'topics',
    'stakeholders', 'emotions',
)


def load_facets(path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    Load facet lists.

    Args:
        path: Researcher-supplied facet file; the bundled file when None

    Returns:
        Facet dictionary

    Raises:
        ConfigurationError: If a required list is missing or empty
    """
    facets = load_data('facets.json') if path is None else read_json(path)
    missing = [key for key in REQUIRED_KEYS if not facets.get(key)]
    if missing:
        raise ConfigurationError(f"Facet file missing or empty lists: {', '.join(missing)}")
    return facets


def default_industries() -> List[str]:
    """Industries that have curated idea stems"""
    return sorted(load_facets()['industries'].keys())
