"""
Experiment orchestration: design grids, cached generation, metrics,
resumable run directories and reports.

A run directory holds:

    manifest.json           config, config hash, template version, timestamps
    bundles/                compiled prompts by content hash
    transcripts/<provider>/ generated conversations
    metrics/                records.jsonl, failures.jsonl, aggregates.jsonl
    reports/                CSV, JSONL and markdown reports
"""

import hashlib
import json
import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import __version__
from .config import load_data, read_json, write_json
from .embed import EmbeddingConfig
from .entities import EntityExtractor, ExtractionConfig
from .exceptions import ConfigurationError, InputError, ManifestError, SimError
from .gateway import GatewayClient
from .judge import DEFAULT_JUDGED, InferredParameters, import_human_labels
from .lexical import ScoringConfig, default_scoring
from .metrics import (
    DEFAULT_CLUSTER_THRESHOLD,
    agreement_levels,
    blend_judgments,
    cluster_topics,
    embedding_diversity,
    revisit_rate,
    score_adherence,
    stability_score,
    topic_coherence,
    topic_drift_series,
    topic_entropy,
)
from .persona import EntrepreneurProfile, baseline_profile, generate_profiles
from .prompt import PromptBundle, compile_baseline, compile_parameterized, template_version
from .schema import (
    LEVEL_MAX,
    LEVEL_MIN,
    SMOOTHNESS_GRADES,
    ConversationParameters,
    randomize_parameters,
    short_name,
)
from .session import ProviderConfig, load_provider
from .transcript import Transcript, save_transcript

logger = logging.getLogger(__name__)

KIND_DIVERSITY = 'diversity'
KIND_ADHERENCE = 'adherence'
KIND_DRIFT = 'drift'
KIND_STABILITY = 'stability'
KIND_REVISIT = 'revisit'
KINDS = (KIND_DIVERSITY, KIND_ADHERENCE, KIND_DRIFT, KIND_STABILITY, KIND_REVISIT)

ARM_PARAMETERIZED = 'parameterized'
ARM_BASELINE = 'baseline'
ARM_FULL = 'full'
ARM_FORMALITY_ONLY = 'formality-only'
ARM_TECHNICAL_ONLY = 'technical-only'

KIND_ARMS: Dict[str, Tuple[str, ...]] = {
    KIND_DIVERSITY: (ARM_PARAMETERIZED, ARM_BASELINE),
    KIND_ADHERENCE: (ARM_PARAMETERIZED,),
    KIND_DRIFT: SMOOTHNESS_GRADES + (ARM_BASELINE,),
    KIND_STABILITY: (ARM_FULL, ARM_FORMALITY_ONLY, ARM_TECHNICAL_ONLY),
    KIND_REVISIT: (ARM_PARAMETERIZED,),
}
DEFAULT_ARMS: Dict[str, Tuple[str, ...]] = {
    KIND_DIVERSITY: (ARM_PARAMETERIZED,),
    KIND_ADHERENCE: (ARM_PARAMETERIZED,),
    KIND_DRIFT: ('A', 'F', ARM_BASELINE),
    KIND_STABILITY: (ARM_FULL, ARM_FORMALITY_ONLY, ARM_TECHNICAL_ONLY),
    KIND_REVISIT: (ARM_PARAMETERIZED,),
}

# Each ablation arm keeps one register target in the prompt
STABILITY_OMIT: Dict[str, Tuple[str, ...]] = {
    ARM_FULL: (),
    ARM_FORMALITY_ONLY: ('technicalLanguageLevel',),
    ARM_TECHNICAL_ONLY: ('formality',),
}

TABLE_COLUMNS: Dict[str, List[str]] = {
    'diversity': ['model', 'arm', 'conversations', 'topic_diversity', 'topic_entropy',
                  'embedding_diversity'],
    'topic_frequencies': ['model', 'arm', 'rank', 'representative', 'count'],
    'drift_series': ['model', 'arm', 'turn', 'similarity', 'drift', 'conversations'],
    'adherence_numeric': ['model', 'turns', 'parameter', 'mse', 'scored', 'excluded',
                          'human_weight', 'llm_weight'],
    'adherence_categorical': ['model', 'turns', 'parameter', 'accuracy', 'scored', 'excluded',
                              'human_weight', 'llm_weight'],
    'coherence_by_focus': ['model', 'focus_level', 'coherence', 'conversations'],
    'stability': ['model', 'arm', 'turns', 'formality_error', 'technical_error', 'mean_error',
                  'stability', 'conversations'],
    'revisit': ['model', 'knowledge_gap_level', 'turns', 'revisit_rate', 'raw_count',
                'conversations'],
}
KIND_TABLES: Dict[str, Tuple[str, ...]] = {
    KIND_DIVERSITY: ('diversity', 'topic_frequencies'),
    KIND_ADHERENCE: ('adherence_numeric', 'adherence_categorical', 'coherence_by_focus'),
    KIND_DRIFT: ('drift_series',),
    KIND_STABILITY: ('stability',),
    KIND_REVISIT: ('revisit',),
}

FORMAT_CSV = 'csv'
FORMAT_JSONL = 'jsonl'
FORMAT_MARKDOWN = 'markdown'
REPORT_FORMATS = (FORMAT_CSV, FORMAT_JSONL, FORMAT_MARKDOWN)

MANIFEST_FILE = 'manifest.json'
RECORDS_FILE = 'records.jsonl'
FAILURES_FILE = 'failures.jsonl'
AGGREGATES_FILE = 'aggregates.jsonl'

DEFAULT_RUNS_DIR = 'runs'
DEFAULT_JUDGE = 'claude-3.7-sonnet'


# =============================================================================
# Configuration
# =============================================================================


@dataclass
class ExperimentConfig:
    """
    One experiment design.

    output_dir and workers only change where and how fast a run executes;
    they are left out of to_dict and so out of the config hash.
    """
    kind: str
    name: str = 'custom'
    profiles: int = 10
    turns: Tuple[int, ...] = (10,)
    arms: Tuple[str, ...] = ()
    levels: Tuple[int, ...] = ()
    repetitions: int = 1
    providers: Tuple[Union[str, Dict], ...] = ('mock',)
    judge: Union[str, Dict] = DEFAULT_JUDGE
    seed: int = 0
    checkpoints: Tuple[int, ...] = ()
    cluster_threshold: float = DEFAULT_CLUSTER_THRESHOLD
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    scoring: Optional[Dict] = None
    labels: Optional[str] = None
    output_dir: Optional[str] = None
    workers: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"Unknown experiment kind: {self.kind} (known: {', '.join(KINDS)})")
        self.turns = tuple(self.turns)
        self.arms = tuple(self.arms) or DEFAULT_ARMS[self.kind]
        self.levels = tuple(self.levels)
        self.providers = tuple(self.providers)
        self.checkpoints = tuple(self.checkpoints)

        if self.kind == KIND_REVISIT and not self.levels:
            self.levels = tuple(range(LEVEL_MIN, LEVEL_MAX + 1))
        unknown = [a for a in self.arms if a not in KIND_ARMS[self.kind]]
        if unknown:
            raise ConfigurationError(f"Arms {unknown} not available for {self.kind} runs")
        if self.profiles < 0:
            raise ConfigurationError(f"profiles must be >= 0 (got {self.profiles})")
        if self.repetitions < 1:
            raise ConfigurationError(f"repetitions must be >= 1 (got {self.repetitions})")
        if any(t < 1 for t in self.turns) or any(c < 1 for c in self.checkpoints):
            raise ConfigurationError("Turn lengths and checkpoints must be >= 1")
        if any(not LEVEL_MIN <= level <= LEVEL_MAX for level in self.levels):
            raise ConfigurationError(f"Knowledge gap levels must be in {LEVEL_MIN}..{LEVEL_MAX}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1 (got {self.workers})")
        if self.scoring is not None:
            self.scoring_config()

    def scoring_config(self) -> ScoringConfig:
        if self.scoring is None:
            return default_scoring()
        merged = default_scoring().to_dict()
        merged.update(self.scoring)
        try:
            return ScoringConfig.from_dict(merged)
        except InputError as e:
            raise ConfigurationError(f"Bad scoring config: {e}")

    def scaled(self, factor: float) -> 'ExperimentConfig':
        """Copy with the profile count multiplied by factor (never below 1)"""
        if factor <= 0:
            raise ConfigurationError(f"Scale must be > 0 (got {factor})")
        return replace(self, profiles=max(1, int(round(self.profiles * factor))))

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind,
            'name': self.name,
            'profiles': self.profiles,
            'turns': list(self.turns),
            'arms': list(self.arms),
            'levels': list(self.levels),
            'repetitions': self.repetitions,
            'providers': list(self.providers),
            'judge': self.judge,
            'seed': self.seed,
            'checkpoints': list(self.checkpoints),
            'clusterThreshold': self.cluster_threshold,
            'embedding': self.embedding.to_dict(),
            'extraction': self.extraction.to_dict(),
            'scoring': self.scoring,
            'labels': self.labels,
        }

    @classmethod
    def from_dict(cls, data: Dict, name: Optional[str] = None) -> 'ExperimentConfig':
        if 'kind' not in data:
            raise ConfigurationError("Experiment config needs a kind")
        return cls(
            kind=data['kind'],
            name=name or data.get('name', 'custom'),
            profiles=data.get('profiles', 10),
            turns=tuple(data.get('turns', (10,))),
            arms=tuple(data.get('arms', ())),
            levels=tuple(data.get('levels', ())),
            repetitions=data.get('repetitions', 1),
            providers=tuple(data.get('providers', ('mock',))),
            judge=data.get('judge', DEFAULT_JUDGE),
            seed=data.get('seed', 0),
            checkpoints=tuple(data.get('checkpoints', ())),
            cluster_threshold=data.get('clusterThreshold', DEFAULT_CLUSTER_THRESHOLD),
            embedding=EmbeddingConfig.from_dict(data.get('embedding')),
            extraction=ExtractionConfig.from_dict(data.get('extraction')),
            scoring=data.get('scoring'),
            labels=data.get('labels'),
            output_dir=data.get('outputDir'),
            workers=data.get('workers', 4),
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()

    def run_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(DEFAULT_RUNS_DIR) / f"{self.name}-{self.config_hash()[:8]}"


def preset_names() -> List[str]:
    return sorted(load_data('presets.json'))


def load_preset(name: str) -> ExperimentConfig:
    """
    Named experiment design (e.g. 'paper-drift').

    Raises:
        ConfigurationError: Unknown preset
    """
    presets = load_data('presets.json')
    if name not in presets:
        raise ConfigurationError(f"Unknown preset: {name} (known: {', '.join(sorted(presets))})")
    return ExperimentConfig.from_dict(presets[name], name=name)


def load_experiment(ref: Union[str, Path]) -> ExperimentConfig:
    """Preset name or path to a JSON experiment config"""
    if str(ref) in load_data('presets.json'):
        return load_preset(str(ref))
    path = Path(ref)
    if not path.is_file():
        raise ConfigurationError(f"No preset or config file named {ref}")
    try:
        data = read_json(path)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Experiment config {path} is not valid JSON: {e.msg}")
    return ExperimentConfig.from_dict(data, name=data.get('name') or path.stem)


def with_overrides(config: ExperimentConfig, scale: Optional[float] = None,
                   provider: Optional[str] = None, mock: bool = False,
                   output_dir: Optional[str] = None, workers: Optional[int] = None) -> ExperimentConfig:
    """
    Apply command-line overrides.

    mock replaces every provider and the judge with the mock provider and
    the embedding model with the stub, so the run needs no network.
    """
    if scale is not None:
        config = config.scaled(scale)
    if provider:
        config = replace(config, providers=(provider,))
    if mock:
        config = replace(config, providers=('mock',), judge='mock', embedding=EmbeddingConfig())
    if output_dir:
        config = replace(config, output_dir=output_dir)
    if workers:
        config = replace(config, workers=workers)
    return config


# =============================================================================
# Design grid
# =============================================================================


@dataclass(frozen=True)
class Cell:
    """One conversation of the design grid"""
    provider_id: str
    arm: str
    turns: int
    profile_index: int
    repetition: int = 0
    level: Optional[int] = None

    @property
    def cell_id(self) -> str:
        parts = [self.provider_id, self.arm, f"t{self.turns}"]
        if self.level is not None:
            parts.append(f"kgl{self.level}")
        parts.append(f"p{self.profile_index:04d}")
        if self.repetition:
            parts.append(f"r{self.repetition}")
        return '/'.join(parts)

    def to_dict(self) -> Dict:
        return {
            'cellId': self.cell_id,
            'provider': self.provider_id,
            'arm': self.arm,
            'turns': self.turns,
            'level': self.level,
            'profileIndex': self.profile_index,
            'repetition': self.repetition,
        }


def resolve_providers(config: ExperimentConfig) -> Dict[str, ProviderConfig]:
    """Provider configs by id, in config order"""
    resolved: Dict[str, ProviderConfig] = {}
    for ref in config.providers:
        cfg = load_provider(ref)
        resolved[cfg.provider_id] = cfg
    return resolved


def design_grid(config: ExperimentConfig,
                providers: Optional[Dict[str, ProviderConfig]] = None) -> List[Cell]:
    """
    Every cell of the experiment, in a fixed order.

    Raises:
        ConfigurationError: The grid is empty
    """
    providers = providers if providers is not None else resolve_providers(config)
    levels: Sequence[Optional[int]] = config.levels if config.kind == KIND_REVISIT else (None,)
    cells = [
        Cell(provider_id=provider_id, arm=arm, turns=turns, profile_index=index,
             repetition=rep, level=level)
        for provider_id in providers
        for arm in config.arms
        for level in levels
        for turns in config.turns
        for index in range(config.profiles)
        for rep in range(config.repetitions)
    ]
    if not cells:
        raise ConfigurationError(f"Design grid of {config.name} is empty")
    return cells


def cell_seed(config: ExperimentConfig, cell: Cell) -> int:
    """
    Parameter seed of a cell.

    Provider and arm are left out so arms and models of the same profile
    share every parameter the arm does not fix.
    """
    key = f"{config.seed}:{cell.profile_index}:{cell.repetition}:{cell.turns}:{cell.level}"
    return int(hashlib.sha256(key.encode('utf-8')).hexdigest()[:12], 16)


def cell_constraints(config: ExperimentConfig, cell: Cell) -> Dict[str, Any]:
    constraints: Dict[str, Any] = {'turns': cell.turns}
    if config.kind == KIND_DRIFT and cell.arm in SMOOTHNESS_GRADES:
        constraints['smoothnessFactor'] = cell.arm
    if cell.level is not None:
        constraints['knowledgeGapLevel'] = cell.level
    return constraints


# =============================================================================
# Results
# =============================================================================


@dataclass
class ExperimentResult:
    """Records, failures and aggregates of one run directory"""
    config: ExperimentConfig
    run_dir: Path
    records: List[Dict] = field(default_factory=list)
    failures: List[Dict] = field(default_factory=list)
    aggregates: Dict[str, pd.DataFrame] = field(default_factory=dict)
    manifest: Dict = field(default_factory=dict)
    stats: Dict[str, int] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return not self.failures and len(self.records) == self.manifest.get('gridSize', len(self.records))

    def table(self, name: str) -> pd.DataFrame:
        if name in self.aggregates:
            return self.aggregates[name]
        return pd.DataFrame(columns=TABLE_COLUMNS[name])


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    raise TypeError(f"Not JSON serializable: {type(value).__name__}")


def _dumps(record: Dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, default=_json_default)


def read_jsonl(path: Path) -> List[Dict]:
    """Read a JSONL file; a torn last line from an interrupted run is skipped"""
    if not path.is_file():
        return []
    rows = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError:
                logger.warning("Skipping unreadable line %d of %s", line_no, path)
    return rows


def write_jsonl(path: Path, rows: Sequence[Dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, 'w', encoding='utf-8') as f:
        for row in rows:
            f.write(_dumps(row) + '\n')
    tmp.replace(path)


def _table_rows(df: pd.DataFrame) -> List[Dict]:
    clean = df.astype(object).where(df.notna(), None)
    return clean.to_dict(orient='records')


# =============================================================================
# Running
# =============================================================================


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


def _safe_name(text: str) -> str:
    return re.sub(r'[^A-Za-z0-9._-]+', '-', text)


def _open_manifest(run_dir: Path, config: ExperimentConfig, grid_size: int) -> Dict:
    path = run_dir / MANIFEST_FILE
    if path.is_file():
        manifest = _read_manifest(run_dir)
        verify_manifest(manifest, config)
        return manifest
    manifest = {
        'name': config.name,
        'kind': config.kind,
        'configHash': config.config_hash(),
        'templateVersion': template_version(),
        'convsimVersion': __version__,
        'config': config.to_dict(),
        'gridSize': grid_size,
        'createdAt': _now(),
    }
    write_json(path, manifest)
    return manifest


def verify_manifest(manifest: Dict, config: ExperimentConfig) -> None:
    """
    Refuse a run directory that belongs to a different design.

    Raises:
        ManifestError: Config hash or template version differ
    """
    expected = config.config_hash()
    if manifest.get('configHash') != expected:
        raise ManifestError(
            f"Run directory holds config {str(manifest.get('configHash'))[:12]}, "
            f"this run is {expected[:12]}; use a new output directory")
    try:
        stored = ExperimentConfig.from_dict(manifest.get('config') or {})
    except ConfigurationError as e:
        raise ManifestError(f"Manifest config is invalid: {e}")
    if stored.config_hash() != expected:
        raise ManifestError("Manifest config does not match its recorded hash")
    if manifest.get('templateVersion') != template_version():
        raise ManifestError(
            f"Run used templates {manifest.get('templateVersion')}, installed templates are "
            f"{template_version()}")


def opening_topic(transcript: Transcript) -> str:
    """The entrepreneur's first utterance (first turn when the user never speaks)"""
    user_turns = transcript.user_turns()
    return (user_turns[0] if user_turns else transcript.turns[0]).content


class _Runner:
    """Executes grid cells for one run directory"""

    def __init__(self, config: ExperimentConfig, run_dir: Path, client: GatewayClient,
                 providers: Dict[str, ProviderConfig]):
        self.config = config
        self.run_dir = run_dir
        self.client = client
        self.providers = providers
        self.judge = load_provider(config.judge) if config.kind == KIND_ADHERENCE else None
        self.scoring = config.scoring_config()
        self.extractor = EntityExtractor(config.extraction) if config.kind == KIND_REVISIT else None
        self.profiles = generate_profiles(config.seed, config.profiles)
        self._write_lock = threading.Lock()

    def _profile(self, cell: Cell, seed: int) -> EntrepreneurProfile:
        if cell.arm == ARM_BASELINE:
            return baseline_profile(seed)
        return self.profiles[cell.profile_index]

    def _compile(self, cell: Cell, seed: int) -> Tuple[PromptBundle, Optional[ConversationParameters]]:
        profile = self._profile(cell, seed)
        if cell.arm == ARM_BASELINE:
            return compile_baseline(profile, cell.turns), None
        params = randomize_parameters(seed, cell_constraints(self.config, cell))
        omit = STABILITY_OMIT.get(cell.arm, ()) if self.config.kind == KIND_STABILITY else ()
        return compile_parameterized(profile, params, omit=omit), params

    def _store_bundle(self, bundle: PromptBundle) -> str:
        relative = f"bundles/{bundle.content_hash[:16]}.json"
        path = self.run_dir / relative
        if not path.exists():
            write_json(path, bundle.to_dict())
        return relative

    def _measure(self, cell: Cell, transcript: Transcript,
                 params: Optional[ConversationParameters]) -> Dict[str, Any]:
        kind = self.config.kind
        embedding = self.config.embedding
        if kind == KIND_DIVERSITY:
            return {'topic': opening_topic(transcript)}
        if kind == KIND_DRIFT:
            return {'drift': topic_drift_series(transcript, opening_topic(transcript), embedding).to_dict()}
        if kind == KIND_ADHERENCE:
            assert params is not None and self.judge is not None
            inferred = self.client.judge(transcript, self.judge, DEFAULT_JUDGED, conversation_id=cell.cell_id)
            judgment = inferred.to_dict()
            judgment.pop('raw', None)
            return {
                'judgment': judgment,
                'focusLevel': params.participants.user.focus_level,
                'coherence': topic_coherence(transcript, embedding),
            }
        if kind == KIND_STABILITY:
            assert params is not None
            checkpoints = [c for c in self.config.checkpoints if c <= transcript.total_turns]
            if not checkpoints:
                checkpoints = [transcript.total_turns]
            by_turns = {}
            for k in checkpoints:
                prefix = replace(transcript, turns=transcript.turns[:k])
                by_turns[str(k)] = stability_score(prefix, params, self.scoring).to_dict()
            return {'stability': by_turns}
        assert self.extractor is not None
        sets = [self.extractor.extract(turn.content) for turn in transcript.turns]
        return {'revisit': revisit_rate(sets).to_dict()}

    def run_cell(self, cell: Cell) -> Dict:
        """
        Generate (or replay) one conversation and measure it.

        Raises:
            SimError: Any provider, parse or metric failure of this cell
        """
        seed = cell_seed(self.config, cell)
        cfg = self.providers[cell.provider_id]
        bundle, params = self._compile(cell, seed)
        transcript = self.client.generate(bundle, cfg, seed=seed)
        path = save_transcript(transcript, self.run_dir / 'transcripts' / _safe_name(cell.provider_id))
        record = cell.to_dict()
        record.update({
            'model': cfg.model,
            'seed': seed,
            'profileId': self._profile(cell, seed).id,
            'promptHash': bundle.content_hash,
            'mode': bundle.mode,
            'bundle': self._store_bundle(bundle),
            'transcript': path.relative_to(self.run_dir).as_posix(),
            'turnsReturned': transcript.total_turns,
            'qualityFlags': list(transcript.quality_flags),
            'parameters': params.to_dict() if params is not None else None,
            'metrics': self._measure(cell, transcript, params),
        })
        return record

    def append(self, name: str, row: Dict) -> None:
        with self._write_lock:
            path = self.run_dir / 'metrics' / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'a', encoding='utf-8') as f:
                f.write(_dumps(row) + '\n')


def _failure(cell: Cell, error: Exception) -> Dict:
    row = cell.to_dict()
    row.update({'error': type(error).__name__, 'message': str(error)})
    return row


def run_experiment(config: ExperimentConfig, client: Optional[GatewayClient] = None,
                   progress: bool = True) -> ExperimentResult:
    """
    Run (or finish) an experiment.

    Cells already recorded in the run directory are skipped; every other
    cell is generated through the response cache and measured. A failing
    cell becomes a failure record and the run continues.

    Args:
        config: Experiment design
        client: Gateway client (a fresh one over the default cache when None)
        progress: Show a tqdm progress bar

    Returns:
        ExperimentResult with records in grid order

    Raises:
        ConfigurationError: Bad config or empty design grid
        ManifestError: The run directory belongs to another config
    """
    providers = resolve_providers(config)
    grid = design_grid(config, providers)
    run_dir = config.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = _open_manifest(run_dir, config, len(grid))

    grid_ids = {cell.cell_id for cell in grid}
    done = {r['cellId']: r for r in read_jsonl(run_dir / 'metrics' / RECORDS_FILE) if r.get('cellId') in grid_ids}
    pending = [cell for cell in grid if cell.cell_id not in done]
    logger.info("Run %s (%s): %d cells, %d recorded, %d to run", config.name, config.kind,
                len(grid), len(done), len(pending))

    own_client = client is None
    client = client or GatewayClient()
    calls_before = client.calls
    failures: List[Dict] = []
    completed = 0
    try:
        runner = _Runner(config, run_dir, client, providers)
        with tqdm(total=len(pending), desc=config.name, unit='conv', disable=not progress) as pbar:
            with ThreadPoolExecutor(max_workers=config.workers) as executor:
                futures = {executor.submit(runner.run_cell, cell): cell for cell in pending}
                for future in as_completed(futures):
                    cell = futures[future]
                    try:
                        record = future.result()
                    except SimError as e:
                        logger.warning("Cell %s failed: %s", cell.cell_id, e)
                        failures.append(_failure(cell, e))
                    except Exception as e:
                        logger.exception("Cell %s failed unexpectedly", cell.cell_id)
                        failures.append(_failure(cell, e))
                    else:
                        runner.append(RECORDS_FILE, record)
                        done[cell.cell_id] = record
                        completed += 1
                    pbar.update(1)
    finally:
        if own_client:
            client.close()

    order = {cell.cell_id: i for i, cell in enumerate(grid)}
    records = sorted(done.values(), key=lambda r: order[r['cellId']])
    failures.sort(key=lambda r: order[r['cellId']])
    write_jsonl(run_dir / 'metrics' / RECORDS_FILE, records)
    write_jsonl(run_dir / 'metrics' / FAILURES_FILE, failures)

    aggregates = aggregate(config, records)
    write_jsonl(run_dir / 'metrics' / AGGREGATES_FILE, [
        dict(row, table=name) for name, df in aggregates.items() for row in _table_rows(df)])

    manifest.update({'updatedAt': _now(), 'completed': len(records), 'failed': len(failures)})
    write_json(run_dir / MANIFEST_FILE, manifest)

    stats = {
        'providerCalls': client.calls - calls_before,
        'cellsCompleted': completed,
        'cellsReplayed': len(grid) - len(pending),
        'cellsFailed': len(failures),
    }
    logger.info("Run %s finished: %d recorded, %d failed, %d provider calls", config.name,
                len(records), len(failures), stats['providerCalls'])
    return ExperimentResult(config=config, run_dir=run_dir, records=records, failures=failures,
                            aggregates=aggregates, manifest=manifest, stats=stats)


def _read_manifest(run_dir: Path) -> Dict:
    path = run_dir / MANIFEST_FILE
    if not path.is_file():
        raise ManifestError(f"No manifest in {run_dir}")
    try:
        manifest = read_json(path)
    except json.JSONDecodeError as e:
        raise ManifestError(f"Manifest in {run_dir} is not valid JSON: {e.msg}")
    if not isinstance(manifest, dict) or 'config' not in manifest:
        raise ManifestError(f"Manifest in {run_dir} has no config")
    return manifest


def _manifest_config(manifest: Dict, run_dir: Path) -> ExperimentConfig:
    try:
        config = ExperimentConfig.from_dict(manifest['config'])
    except ConfigurationError as e:
        raise ManifestError(f"Manifest config is invalid: {e}")
    return replace(config, output_dir=str(run_dir))


def resume(run_dir: Union[str, Path], client: Optional[GatewayClient] = None,
           progress: bool = True, workers: Optional[int] = None) -> ExperimentResult:
    """
    Finish the missing cells of a run directory.

    Raises:
        ManifestError: Manifest missing, edited, or from other templates
    """
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    config = _manifest_config(manifest, run_dir)
    if workers:
        config = replace(config, workers=workers)
    verify_manifest(manifest, config)
    return run_experiment(config, client=client, progress=progress)


def load_result(run_dir: Union[str, Path]) -> ExperimentResult:
    """Read a run directory without running anything"""
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    config = _manifest_config(manifest, run_dir)
    records = read_jsonl(run_dir / 'metrics' / RECORDS_FILE)
    failures = read_jsonl(run_dir / 'metrics' / FAILURES_FILE)
    rows = read_jsonl(run_dir / 'metrics' / AGGREGATES_FILE)
    if rows or not records:
        aggregates = {}
        for name in KIND_TABLES[config.kind]:
            table = [{k: v for k, v in row.items() if k != 'table'} for row in rows if row.get('table') == name]
            aggregates[name] = pd.DataFrame(table, columns=TABLE_COLUMNS[name])
    else:
        aggregates = aggregate(config, records)
    return ExperimentResult(config=config, run_dir=run_dir, records=records, failures=failures,
                            aggregates=aggregates, manifest=manifest)


# =============================================================================
# Aggregation
# =============================================================================


def _frame(name: str, rows: List[Dict]) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=TABLE_COLUMNS[name])


def _groups(records: Sequence[Dict], *keys: str) -> Dict[Tuple, List[Dict]]:
    grouped: Dict[Tuple, List[Dict]] = {}
    for record in records:
        grouped.setdefault(tuple(record[k] for k in keys), []).append(record)
    return grouped


def _aggregate_diversity(config: ExperimentConfig, records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    summary, frequencies = [], []
    for (model, arm), group in _groups(records, 'provider', 'arm').items():
        topics = [r['metrics']['topic'] for r in group]
        clusters = cluster_topics(topics, config.cluster_threshold, config.embedding)
        summary.append({
            'model': model,
            'arm': arm,
            'conversations': len(topics),
            'topic_diversity': len(clusters),
            'topic_entropy': topic_entropy(clusters.counts()),
            'embedding_diversity': embedding_diversity(topics, config.embedding) if len(topics) > 1 else None,
        })
        ranked = sorted(clusters.clusters, key=lambda c: -c.count)
        for rank, cluster in enumerate(ranked, 1):
            frequencies.append({'model': model, 'arm': arm, 'rank': rank,
                                'representative': cluster.representative, 'count': cluster.count})
    return {'diversity': _frame('diversity', summary),
            'topic_frequencies': _frame('topic_frequencies', frequencies)}


def _aggregate_drift(records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    points = [
        {'model': r['provider'], 'arm': r['arm'], 'turn': turn, 'similarity': sim}
        for r in records
        for turn, sim in zip(r['metrics']['drift']['turns'], r['metrics']['drift']['similarity'])
    ]
    if not points:
        return {'drift_series': _frame('drift_series', [])}
    df = pd.DataFrame(points)
    series = (df.groupby(['model', 'arm', 'turn'], sort=False)
                .agg(similarity=('similarity', 'mean'), conversations=('similarity', 'size'))
                .reset_index())
    series['drift'] = 1.0 - series['similarity']
    series = series.sort_values(['model', 'arm', 'turn'], kind='stable')
    return {'drift_series': series[TABLE_COLUMNS['drift_series']].reset_index(drop=True)}


def _aggregate_adherence(config: ExperimentConfig, records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    labels: Dict[str, List[InferredParameters]] = {}
    if config.labels:
        for label in import_human_labels(config.labels):
            labels.setdefault(str(label.conversation_id), []).append(label)

    numeric, categorical = [], []
    for (model, turns), group in _groups(records, 'provider', 'turns').items():
        pairs, human_pairs, llm, human = [], [], [], []
        for record in group:
            params = ConversationParameters.from_dict(record['parameters'])
            inferred = InferredParameters.from_dict(record['metrics']['judgment'])
            pairs.append((params, inferred))
            llm.append(inferred)
            for label in labels.get(record['cellId'], []):
                human_pairs.append((params, label))
                human.append(label)
        llm_score = score_adherence(pairs)
        human_score = score_adherence(human_pairs) if human_pairs else None
        blended = blend_judgments(human_score, llm_score, agreement_levels(human, llm))
        human_weight, llm_weight = blended.weights
        for path in DEFAULT_JUDGED:
            row = {'model': model, 'turns': turns, 'parameter': short_name(path),
                   'scored': blended.scored.get(path, 0), 'excluded': blended.excluded.get(path, 0),
                   'human_weight': human_weight, 'llm_weight': llm_weight}
            if path in blended.numeric_mse:
                numeric.append(dict(row, mse=blended.numeric_mse[path]))
            elif path in blended.categorical_accuracy:
                categorical.append(dict(row, accuracy=blended.categorical_accuracy[path]))

    by_focus = _groups([dict(r, focusLevel=r['metrics']['focusLevel']) for r in records],
                       'provider', 'focusLevel')
    coherence = [
        {'model': model, 'focus_level': level, 'conversations': len(group),
         'coherence': float(np.mean([r['metrics']['coherence'] for r in group]))}
        for (model, level), group in sorted(by_focus.items(), key=lambda item: item[0])
    ]
    return {'adherence_numeric': _frame('adherence_numeric', numeric),
            'adherence_categorical': _frame('adherence_categorical', categorical),
            'coherence_by_focus': _frame('coherence_by_focus', coherence)}


def _aggregate_stability(records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    points = [
        {'model': r['provider'], 'arm': r['arm'], 'turns': int(k),
         'formality_error': s['formalityError'], 'technical_error': s['technicalError'],
         'mean_error': 0.5 * (s['formalityError'] + s['technicalError']), 'stability': s['stability']}
        for r in records
        for k, s in r['metrics']['stability'].items()
    ]
    if not points:
        return {'stability': _frame('stability', [])}
    df = pd.DataFrame(points)
    table = (df.groupby(['model', 'arm', 'turns'], sort=False)
               .agg(formality_error=('formality_error', 'mean'),
                    technical_error=('technical_error', 'mean'),
                    mean_error=('mean_error', 'mean'),
                    stability=('stability', 'mean'),
                    conversations=('stability', 'size'))
               .reset_index()
               .sort_values(['model', 'arm', 'turns'], kind='stable'))
    return {'stability': table[TABLE_COLUMNS['stability']].reset_index(drop=True)}


def _aggregate_revisit(records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    rows = [
        {'model': r['provider'], 'knowledge_gap_level': r['level'], 'turns': r['turns'],
         'revisit_rate': r['metrics']['revisit']['rate'], 'raw_count': r['metrics']['revisit']['rawCount']}
        for r in records
    ]
    if not rows:
        return {'revisit': _frame('revisit', [])}
    df = pd.DataFrame(rows)
    table = (df.groupby(['model', 'knowledge_gap_level', 'turns'], sort=False)
               .agg(revisit_rate=('revisit_rate', 'mean'), raw_count=('raw_count', 'mean'),
                    conversations=('revisit_rate', 'size'))
               .reset_index()
               .sort_values(['model', 'knowledge_gap_level', 'turns'], kind='stable'))
    return {'revisit': table[TABLE_COLUMNS['revisit']].reset_index(drop=True)}


def aggregate(config: ExperimentConfig, records: Sequence[Dict]) -> Dict[str, pd.DataFrame]:
    """Report tables of the experiment kind, computed from records alone"""
    aggregators: Dict[str, Callable[[], Dict[str, pd.DataFrame]]] = {
        KIND_DIVERSITY: lambda: _aggregate_diversity(config, records),
        KIND_ADHERENCE: lambda: _aggregate_adherence(config, records),
        KIND_DRIFT: lambda: _aggregate_drift(records),
        KIND_STABILITY: lambda: _aggregate_stability(records),
        KIND_REVISIT: lambda: _aggregate_revisit(records),
    }
    return aggregators[config.kind]()


# =============================================================================
# Reports
# =============================================================================


def _markdown(result: ExperimentResult) -> str:
    manifest = result.manifest
    lines = [
        f"# {result.config.name} ({result.config.kind})",
        '',
        f"- Config hash: `{manifest.get('configHash', result.config.config_hash())}`",
        f"- Template version: `{manifest.get('templateVersion', template_version())}`",
        f"- Conversations: {len(result.records)} recorded, {len(result.failures)} failed",
        '',
    ]
    for name in KIND_TABLES[result.config.kind]:
        lines.extend([f"## {name}", '', result.table(name).to_markdown(index=False), ''])
    return '\n'.join(lines)


def report(result: ExperimentResult, fmt: str = FORMAT_CSV,
           out_dir: Optional[Union[str, Path]] = None) -> List[Path]:
    """
    Write report files for a (possibly partial) result.

    Args:
        result: Experiment result
        fmt: 'csv', 'jsonl' or 'markdown'
        out_dir: Target directory (run_dir/reports when None)

    Returns:
        Paths written

    Raises:
        InputError: Unknown format
    """
    if fmt not in REPORT_FORMATS:
        raise InputError(f"Unknown report format: {fmt} (known: {', '.join(REPORT_FORMATS)})")
    out = Path(out_dir) if out_dir else result.run_dir / 'reports'
    out.mkdir(parents=True, exist_ok=True)

    written = []
    if fmt == FORMAT_CSV:
        for name in KIND_TABLES[result.config.kind]:
            path = out / f"{name}.csv"
            result.table(name).to_csv(path, index=False)
            written.append(path)
    elif fmt == FORMAT_JSONL:
        write_jsonl(out / RECORDS_FILE, result.records)
        write_jsonl(out / AGGREGATES_FILE, [
            dict(row, table=name)
            for name in KIND_TABLES[result.config.kind]
            for row in _table_rows(result.table(name))])
        written.extend([out / RECORDS_FILE, out / AGGREGATES_FILE])
    else:
        path = out / 'report.md'
        path.write_text(_markdown(result), encoding='utf-8')
        written.append(path)
    logger.info("Wrote %d %s report file(s) to %s", len(written), fmt, out)
    return written
