"""
Experiment Configuration Module
Loads named experiments (YAML) merged over the base configuration
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import yaml

from ..adaptivity.adaptive import AdaptiveConfig
from ..fields.permeability import GENERATORS

logger = logging.getLogger(__name__)

OUT_ENV = 'GMSDG_OUT'
SOURCE_KINDS = ('constant', 'two_region', 'file', 'sparse_modes')
BOUNDARY_KINDS = ('zero', 'bilinear', 'file')


@dataclass
class GridSpec:
    """Coarse/fine resolution and the square domain"""
    Nc: int = 16
    nf: int = 32
    domain: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.0, 1.0])

    @property
    def n_cells(self) -> int:
        return self.Nc * self.nf


@dataclass
class FieldSpec:
    """Permeability, source and Dirichlet data sections"""
    kappa: Dict[str, Any] = field(default_factory=lambda: {'kind': 'constant', 'value': 1.0})
    source: Dict[str, Any] = field(default_factory=lambda: {'kind': 'constant', 'value': 1.0})
    boundary: Dict[str, Any] = field(default_factory=lambda: {'kind': 'zero'})


@dataclass
class SolverSpec:
    gamma: Union[float, str] = 16.0
    gamma_alpha: float = 2.0
    fine_method: str = 'auto'


@dataclass
class OfflineSpec:
    oversampling: bool = False
    halo: int = 1
    n_pod: int = 40
    snapshot_reference: bool = False


@dataclass
class OutputSpec:
    directory: str = 'results'
    save_offline: bool = False
    save_solutions: bool = True
    save_indicators: bool = True


@dataclass
class ExperimentConfig:
    """Complete experiment configuration"""
    name: str
    description: str
    grid: GridSpec
    fields: FieldSpec
    solver: SolverSpec
    offline: OfflineSpec
    adaptive: AdaptiveConfig
    output: OutputSpec
    logging_config: Dict[str, Any]
    raw_config: Dict[str, Any]

    @property
    def output_dir(self) -> Path:
        return Path(self.output.directory) / self.name

    def problem_signature(self) -> Dict[str, Any]:
        """What two runs must share to be comparable"""
        return {
            'grid': asdict(self.grid),
            'kappa': self.fields.kappa,
            'source': self.fields.source,
            'boundary': self.fields.boundary,
        }


# ---------------------------------------------------------------------------
# Merging and overrides
# ---------------------------------------------------------------------------

def merge_configs(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive merge; dictionaries merge, everything else is replaced"""
    merged = dict(base)
    for key, value in (override or {}).items():
        if key in merged and isinstance(merged[key], dict) and isinstance(value, dict):
            merged[key] = merge_configs(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_scalar(raw: str) -> Any:
    """YAML scalar, with exponent forms such as 1e4 read as floats"""
    value = yaml.safe_load(raw)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
    return value


def parse_override(text: str) -> Dict[str, Any]:
    """
    'grid.Nc=8' -> {'grid': {'Nc': 8}}

    The value is read with YAML scalar rules, so numbers, booleans and
    inline lists work as they would in a file.
    """
    if '=' not in text:
        raise ValueError(f"Override '{text}' is not of the form key=value")
    key, raw = text.split('=', 1)
    parts = [p for p in key.strip().split('.') if p]
    if not parts:
        raise ValueError(f"Override '{text}' has an empty key")
    value = parse_scalar(raw) if raw.strip() else None
    for part in reversed(parts):
        value = {part: value}
    return value


def apply_overrides(config: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for text in overrides or ():
        config = merge_configs(config, parse_override(text))
        logger.debug(f"Applied override {text}")
    return config


def _adaptive_config(section: Dict[str, Any]) -> AdaptiveConfig:
    section = dict(section or {})
    known = set(AdaptiveConfig.__dataclass_fields__)
    unknown = sorted(set(section) - known)
    if unknown:
        raise ValueError(f"Unknown adaptive settings {unknown}")
    if 'families' in section:
        section['families'] = tuple(section['families'])
    return AdaptiveConfig(**section)


def _section(cls, raw: Optional[Dict[str, Any]], name: str):
    raw = dict(raw or {})
    unknown = sorted(set(raw) - set(cls.__dataclass_fields__))
    if unknown:
        raise ValueError(f"Unknown {name} settings {unknown}")
    return cls(**raw)


def parse_experiment(config: Dict[str, Any], name: str) -> ExperimentConfig:
    """Merged raw dictionary -> ExperimentConfig"""
    experiment = config.get('experiment', {}) or {}
    fields_section = config.get('fields', {}) or {}
    return ExperimentConfig(
        name=experiment.get('name', name),
        description=experiment.get('description', ''),
        grid=_section(GridSpec, config.get('grid'), 'grid'),
        fields=FieldSpec(
            kappa=dict(fields_section.get('kappa') or FieldSpec().kappa),
            source=dict(fields_section.get('source') or FieldSpec().source),
            boundary=dict(fields_section.get('boundary') or FieldSpec().boundary),
        ),
        solver=_section(SolverSpec, config.get('solver'), 'solver'),
        offline=_section(OfflineSpec, config.get('offline'), 'offline'),
        adaptive=_adaptive_config(config.get('adaptive')),
        output=_section(OutputSpec, config.get('output'), 'output'),
        logging_config=dict(config.get('logging', {}) or {}),
        raw_config=config,
    )


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_experiment(config: ExperimentConfig) -> Dict[str, Any]:
    """
    Validate an experiment configuration

    Returns:
        {'valid', 'errors', 'warnings', 'experiment'}
    """
    errors: List[str] = []
    warnings: List[str] = []

    grid = config.grid
    if grid.Nc < 1:
        errors.append(f"grid.Nc must be >= 1, got {grid.Nc}")
    if grid.nf < 2:
        errors.append(f"grid.nf must be >= 2, got {grid.nf}")
    if len(grid.domain) != 4:
        errors.append(f"grid.domain must be [x0, y0, x1, y1], got {grid.domain}")

    kappa = config.fields.kappa
    kind = kappa.get('kind', 'constant')
    if kind == 'file':
        if not Path(str(kappa.get('path', ''))).exists():
            errors.append(f"Permeability file not found: {kappa.get('path')}")
    elif kind not in GENERATORS:
        errors.append(f"Unknown permeability generator '{kind}'")
    for key in ('contrast', 'value'):
        if key in kappa and float(kappa[key]) < 1:
            errors.append(f"fields.kappa.{key} must be >= 1, got {kappa[key]}")

    source = config.fields.source
    if source.get('kind', 'constant') not in SOURCE_KINDS:
        errors.append(f"Unknown source kind '{source.get('kind')}'")
    elif source.get('kind') == 'file' and not Path(str(source.get('path', ''))).exists():
        errors.append(f"Source file not found: {source.get('path')}")

    boundary = config.fields.boundary
    if boundary.get('kind', 'zero') not in BOUNDARY_KINDS:
        errors.append(f"Unknown boundary kind '{boundary.get('kind')}'")
    elif boundary.get('kind') == 'file' and not Path(str(boundary.get('path', ''))).exists():
        errors.append(f"Boundary file not found: {boundary.get('path')}")

    gamma = config.solver.gamma
    if gamma != 'auto':
        try:
            if float(gamma) <= 0:
                errors.append(f"solver.gamma must be positive or 'auto', got {gamma}")
        except (TypeError, ValueError):
            errors.append(f"solver.gamma must be a number or 'auto', got {gamma!r}")

    try:
        config.adaptive.validate()
    except ValueError as e:
        errors.append(str(e))

    if grid.nf >= 2:
        interior = (grid.nf - 1) ** 2
        if config.adaptive.needs_family2 and config.adaptive.m_max > interior:
            warnings.append(f"m_max={config.adaptive.m_max} exceeds {interior} interior nodes "
                            f"per block and will be clamped")
        if config.offline.oversampling:
            span = min(grid.Nc, 2 * config.offline.halo + 1) * grid.nf
            if config.offline.n_pod > 4 * span:
                warnings.append(f"n_pod={config.offline.n_pod} exceeds the oversampled boundary "
                                f"count {4 * span} and will be clamped")
            if gamma == 'auto':
                warnings.append("Automatic penalty uses the oversampled snapshot eigenvalues")

    if source.get('kind') == 'sparse_modes' and config.offline.snapshot_reference:
        warnings.append("Snapshot reference with a manufactured load equals the fine reference")

    return {
        'valid': not errors,
        'errors': errors,
        'warnings': warnings,
        'experiment': config.name,
    }


# ---------------------------------------------------------------------------
# Loader
# ---------------------------------------------------------------------------

class ConfigLoader:
    """
    Discovers experiments under config/experiments and loads them merged
    over config/base_config.yaml
    """

    def __init__(self, config_dir: Union[str, Path] = 'config'):
        self.config_dir = Path(config_dir)
        self.experiments_dir = self.config_dir / 'experiments'
        self.base_config_path = self.config_dir / 'base_config.yaml'

        self.base_config: Dict[str, Any] = {}
        self.available_experiments: Dict[str, Path] = {}

        self._load_base_config()
        self._discover_experiments()

    def _load_base_config(self) -> None:
        if self.base_config_path.exists():
            with open(self.base_config_path, 'r') as f:
                self.base_config = yaml.safe_load(f) or {}
            logger.debug(f"Loaded base configuration from {self.base_config_path}")
        else:
            logger.warning(f"Base configuration not found at {self.base_config_path}")

    def _discover_experiments(self) -> None:
        if not self.experiments_dir.exists():
            logger.warning(f"Experiments directory not found: {self.experiments_dir}")
            return
        for config_file in sorted(self.experiments_dir.glob('*.yaml')):
            self.available_experiments[config_file.stem] = config_file
        logger.debug(f"Found {len(self.available_experiments)} experiment(s): "
                     f"{list(self.available_experiments)}")

    def list_experiments(self) -> List[str]:
        return list(self.available_experiments)

    def describe(self, name: str) -> str:
        with open(self.available_experiments[name], 'r') as f:
            raw = yaml.safe_load(f) or {}
        return (raw.get('experiment') or {}).get('description', '')

    def resolve(self, name_or_path: Union[str, Path]) -> Path:
        """Experiment name or YAML path -> file"""
        if str(name_or_path) in self.available_experiments:
            return self.available_experiments[str(name_or_path)]
        path = Path(name_or_path)
        if path.suffix in ('.yaml', '.yml') and path.exists():
            return path
        raise ValueError(f"Experiment '{name_or_path}' not found. "
                         f"Available: {self.list_experiments()}")

    def load_raw(self, name_or_path: Union[str, Path],
                 overrides: Sequence[str] = ()) -> Dict[str, Any]:
        path = self.resolve(name_or_path)
        with open(path, 'r') as f:
            experiment = yaml.safe_load(f) or {}
        merged = merge_configs(self.base_config, experiment)
        merged = apply_overrides(merged, overrides)

        out = os.getenv(OUT_ENV)
        if out:
            merged = merge_configs(merged, {'output': {'directory': out}})
            logger.debug(f"{OUT_ENV} sets output directory to {out}")
        return merged

    def load_experiment(self, name_or_path: Union[str, Path],
                        overrides: Sequence[str] = ()) -> ExperimentConfig:
        """
        Load one experiment

        Args:
            name_or_path: Discovered experiment name or a YAML file
            overrides: Dotted key=value strings applied after merging

        Raises:
            ValueError: Unknown experiment or malformed settings
        """
        merged = self.load_raw(name_or_path, overrides)
        config = parse_experiment(merged, Path(str(name_or_path)).stem)
        logger.info(f"Loaded experiment: {config.name}")
        return config

    def results_directory(self) -> Path:
        """Where runs land when no --out is given: GMSDG_OUT, then output.directory"""
        out = os.getenv(OUT_ENV)
        if out:
            return Path(out)
        return Path((self.base_config.get('output') or {}).get('directory', OutputSpec.directory))


def export_config(config: ExperimentConfig, output_path: Union[str, Path],
                  format: str = 'yaml') -> Path:
    """Write the merged configuration a run was started with"""
    output_path = Path(output_path)
    if format not in ('yaml', 'json'):
        raise ValueError(f"Unsupported format: {format}")
    output_path.parent.mkdir(parents=True, exist_ok=True)
    with open(output_path, 'w') as f:
        if format == 'json':
            json.dump(config.raw_config, f, indent=2)
        else:
            yaml.safe_dump(config.raw_config, f, default_flow_style=False, sort_keys=True)
    logger.debug(f"Exported configuration to {output_path}")
    return output_path


def summary(config: ExperimentConfig) -> str:
    """Short human-readable description of an experiment"""
    a = config.adaptive
    text = f"""
Experiment: {config.name}
Description: {config.description}
Grid: {config.grid.Nc}x{config.grid.Nc} blocks, {config.grid.nf}x{config.grid.nf} cells each
Permeability: {config.fields.kappa.get('kind')}
Source: {config.fields.source.get('kind')}  Boundary: {config.fields.boundary.get('kind')}
Strategy: {a.strategy} (theta={a.theta}, families={list(a.families)}, l1={a.l1}, l2={a.l2})
Oversampling: {'on' if config.offline.oversampling else 'off'}
    """
    return text.strip()
