"""
Konfiguráció kezelő modul
"""
import copy
import yaml
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from src.core.errors import ConfigError
from src.utils.logger import get_logger

logger = get_logger()

PRESET_DIR = Path(__file__).resolve().parent.parent.parent / "presets"

DEFAULT_CONFIG: Dict[str, Any] = {
    'domain': {
        'x_min': 0.0,
        'x_max': 1.0,
        'y_min': 0.0,
        'y_max': 1.0
    },
    'grid': {
        'nodes': 256,
        'margin': 0.3
    },
    'k': 2,
    'problem': {
        'name': 'constant_conformal',
        'params': {}
    },
    'stage': {
        'l': 0.1,
        'lambdas': [40.0, 80.0, 160.0],
        'M': 1.0,
        'gamma': 0.1,
        'beta': 1.0,
        'r0': None,
        'guard_retries': 8
    },
    'nk': {
        'mode': 'practical',
        'iterations': 4,
        'l0': None,
        'l_ratio': 0.5,
        'lambda_ratio': None,
        'lambda_l': 4.0,
        'constant_C': 2.0,
        'target': 0.0
    },
    'flex': {
        'epsilon': 0.05,
        'rho': 0.1,
        'frequency_growth': 8.0,
        'target': None
    },
    'verify': {
        'fields_dir': None
    },
    'alpha': [0.2, 0.5],
    'output': {
        'dir': 'data/runs',
        'formats': ['csv', 'json', 'grid']
    },
    'seed': 0,
    'threads': 1,
    'logging': {
        'level': 'INFO',
        'file_path': None,
        'max_file_size': 10485760,
        'backup_count': 5
    },
    'assertions': {
        'enforce': False,
        'rate_tolerance': 0.25,
        'deficit_reduction': 1e-2
    }
}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """
    Rekurzív összefésülés (override nyer), új dictionary-t ad vissza

    Args:
        base: alap
        override: felülíró értékek

    Returns:
        Összefésült dictionary
    """
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def preset_path(name: str) -> Path:
    """Preset fájl elérési útja név alapján"""
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        available = sorted(p.stem for p in PRESET_DIR.glob("*.yaml")) if PRESET_DIR.exists() else []
        raise ConfigError(f"Ismeretlen preset: {name} (elérhető: {available})")
    return path


class ConfigManager:
    """YAML konfiguráció kezelő"""

    def __init__(self, config_path: Optional[str] = None, defaults: Optional[Dict[str, Any]] = None):
        """
        Args:
            config_path: Konfig fájl elérési útja (None: csak alapértelmezések)
            defaults: Alapértelmezett értékek (None: DEFAULT_CONFIG)
        """
        self.config_path = Path(config_path) if config_path else None
        self.defaults = defaults if defaults is not None else DEFAULT_CONFIG
        self.config: Dict[str, Any] = {}
        self._load_config()

    @classmethod
    def from_preset(cls, name: str) -> 'ConfigManager':
        """Konfiguráció betöltése a presets/ mappából"""
        return cls(str(preset_path(name)))

    def _load_config(self):
        """Konfiguráció betöltése fájlból, az alapértelmezésekre fésülve"""
        if self.config_path is None:
            self.config = copy.deepcopy(self.defaults)
            return

        if not self.config_path.exists():
            raise ConfigError(f"Config fájl nem található: {self.config_path}")

        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Hibás YAML ({self.config_path}): {e}") from e

        if not isinstance(loaded, dict):
            raise ConfigError(f"A config gyökere nem mapping: {self.config_path}")

        self.config = deep_merge(self.defaults, loaded)
        logger.info(f"Konfiguráció betöltve: {self.config_path}")

    def get(self, key: str, default: Any = None) -> Any:
        """
        Konfiguráció érték lekérése

        Args:
            key: Kulcs (pont szeparált, pl. 'stage.l')
            default: Alapértelmezett érték

        Returns:
            Konfig érték vagy default
        """
        keys = key.split('.')
        value = self.config

        for k in keys:
            if isinstance(value, dict):
                value = value.get(k)
            else:
                return default

            if value is None:
                return default

        return value

    def set(self, key: str, value: Any):
        """
        Konfiguráció érték beállítása

        Args:
            key: Kulcs (pont szeparált)
            value: Új érték
        """
        keys = key.split('.')
        config = self.config

        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]

        config[keys[-1]] = value
        logger.debug(f"Config beállítva: {key} = {value}")

    def save(self, path: Optional[str] = None):
        """Konfiguráció mentése fájlba (a futás mellé, reprodukálhatósághoz)"""
        target = Path(path) if path else self.config_path
        if target is None:
            raise ConfigError("Nincs megadva mentési útvonal")
        target.parent.mkdir(parents=True, exist_ok=True)

        with open(target, 'w', encoding='utf-8') as f:
            yaml.dump(self.config, f, default_flow_style=False, allow_unicode=True, sort_keys=True)

        logger.info(f"Konfiguráció mentve: {target}")

    def reload(self):
        """Konfiguráció újratöltése"""
        self._load_config()

    def get_all(self) -> Dict[str, Any]:
        """Teljes konfiguráció dictionary lekérése"""
        return copy.deepcopy(self.config)


@dataclass
class ExperimentConfig:
    """Egy kísérlet összes paramétere, típusosan"""
    domain: Tuple[float, float, float, float]
    nodes: int
    margin: float
    k: int
    problem: str
    problem_params: Dict[str, Any] = field(default_factory=dict)
    stage: Dict[str, Any] = field(default_factory=dict)
    nk: Dict[str, Any] = field(default_factory=dict)
    flex: Dict[str, Any] = field(default_factory=dict)
    verify: Dict[str, Any] = field(default_factory=dict)
    alpha: List[float] = field(default_factory=list)
    output_dir: str = "data/runs"
    formats: List[str] = field(default_factory=list)
    seed: int = 0
    threads: int = 1
    enforce: bool = False
    rate_tolerance: float = 0.25
    deficit_reduction: Optional[float] = 1e-2

    @classmethod
    def from_manager(cls, config: ConfigManager) -> 'ExperimentConfig':
        """
        ExperimentConfig építése és validálása

        Raises:
            ConfigError: hiányzó vagy érvénytelen érték
        """
        from src.utils.validators import validate_experiment_config

        raw = config.get_all()
        valid, error = validate_experiment_config(raw)
        if not valid:
            raise ConfigError(error)

        domain = raw['domain']
        return cls(
            domain=(
                float(domain['x_min']), float(domain['x_max']),
                float(domain['y_min']), float(domain['y_max'])
            ),
            nodes=int(raw['grid']['nodes']),
            margin=float(raw['grid']['margin']),
            k=int(raw['k']),
            problem=raw['problem']['name'],
            problem_params=dict(raw['problem'].get('params') or {}),
            stage=dict(raw['stage']),
            nk=dict(raw['nk']),
            flex=dict(raw['flex']),
            verify=dict(raw.get('verify') or {}),
            alpha=[float(a) for a in raw['alpha']],
            output_dir=str(raw['output']['dir']),
            formats=list(raw['output']['formats']),
            seed=int(raw['seed']),
            threads=int(raw['threads']),
            enforce=bool(raw['assertions']['enforce']),
            rate_tolerance=float(raw['assertions']['rate_tolerance']),
            deficit_reduction=None if raw['assertions'].get('deficit_reduction') is None
            else float(raw['assertions']['deficit_reduction'])
        )
