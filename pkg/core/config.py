# core/config.py
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigurationError
from data.models import GeneratorSpec, IdpsoConfig, KernelParams, SplitCounts, StrategyKind

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level knobs. Priority: environment variable > .env file > default."""

    LOG_LEVEL: str = "INFO"
    MAX_WORKERS: int = Field(default=4, ge=1)   # concurrent fitness evaluations
    OUTPUT_ROOT: str = "runs"
    CSV_FLOAT_FORMAT: str = ".10g"

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()


# ===== EXPERIMENT CONFIG =====

class TrainingPairs(BaseModel):
    """Questioned signatures per writer when building dissimilarity training samples."""

    model_config = ConfigDict(frozen=True)

    genuine_per_writer: int = Field(default=10, ge=1)
    random_forgeries_per_writer: int = Field(default=10, ge=0)


class QueryCounts(BaseModel):
    """Questioned signatures per writer for optimization, selection and exploitation queries."""

    model_config = ConfigDict(frozen=True)

    genuine_q: int = Field(default=10, ge=1)
    skilled_q: int = Field(default=10, ge=1)
    random_q: int = Field(default=0, ge=0)


class TransferTarget(BaseModel):
    """A dataset evaluated only at exploitation time; every writer is an exploitation writer."""

    model_config = ConfigDict(frozen=True)

    name: str
    dataset: Path
    queries: QueryCounts = QueryCounts()


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dataset: Path
    manifest: Optional[Path] = None
    split: SplitCounts = SplitCounts()
    idpso: IdpsoConfig = IdpsoConfig()
    kernel: KernelParams = KernelParams()
    references: int = Field(default=12, ge=1)
    training: TrainingPairs = TrainingPairs()
    queries: QueryCounts = QueryCounts()
    replications: int = Field(default=5, ge=1)
    strategies: List[StrategyKind] = Field(default_factory=lambda: [StrategyKind.NV, StrategyKind.PV, StrategyKind.GV])
    output_dir: Path = Path(settings.OUTPUT_ROOT) / "experiment"
    seed: int = Field(default=0, ge=0)
    targets: List[TransferTarget] = Field(default_factory=list)

    @field_validator("strategies")
    @classmethod
    def _unique_strategies(cls, v: List[StrategyKind]) -> List[StrategyKind]:
        if not v:
            raise ValueError("at least one strategy is required")
        return list(dict.fromkeys(v))

    @property
    def manifest_path(self) -> Path:
        return self.manifest or self.dataset.with_name("manifest.json")

    def replication_seed(self, replication: int) -> int:
        return self.seed + replication

    def check_paths(self) -> None:
        missing = [p for p in [self.dataset, *[t.dataset for t in self.targets]] if not p.exists()]
        if missing:
            raise ConfigurationError(f"Referenced files do not exist: {', '.join(str(p) for p in missing)}")


def load_toml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigurationError(f"Config file {path} is not valid TOML: {e}")


def _resolve(base: Path, value: Any) -> Any:
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_experiment_config(path: Path, overrides: Optional[Dict[str, Any]] = None,
                           require_files: bool = True) -> ExperimentConfig:
    """
    Load an experiment config with priority:
    1. Explicit overrides (CLI flags)
    2. TOML file
    3. Model defaults

    Relative paths in the file are resolved against the file's directory.
    """
    path = Path(path)
    raw = load_toml(path)
    base = path.parent

    for key in ("dataset", "manifest", "output_dir"):
        if key in raw:
            raw[key] = _resolve(base, raw[key])
    for target in raw.get("targets", []):
        if "dataset" in target:
            target["dataset"] = _resolve(base, target["dataset"])

    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid experiment config {path}: {e}")

    if require_files:
        config.check_paths()
    logger.debug(f"[CONFIG] Loaded {path} (dataset={config.dataset}, replications={config.replications})")
    return config


def load_generator_spec(path: Path, overrides: Optional[Dict[str, Any]] = None) -> GeneratorSpec:
    raw = load_toml(Path(path))
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return GeneratorSpec.model_validate(raw)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid generator spec {path}: {e}")
