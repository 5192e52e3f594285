"""Configuration management for cstdoa."""

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from pydantic_settings import BaseSettings

from cstdoa.exceptions import ConfigError
from cstdoa.models import RunConfig

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables."""

    # Logging
    LOG_LEVEL: str = "INFO"

    # Storage
    DATA_DIR: Path = Path("./data")
    OUTPUT_DIR: Optional[Path] = None  # None -> DATA_DIR/runs
    PRESETS_DIR: Path = Path(__file__).parent / "presets"

    # Processing
    WORKERS: int = 1

    # Output format
    CSV_SCHEMA_VERSION: int = 1

    @property
    def runs_dir(self) -> Path:
        """Where runs without an explicit output directory are written."""
        return self.OUTPUT_DIR or self.DATA_DIR / "runs"

    class Config:
        env_file = ".env"
        case_sensitive = True


settings = Settings()


def available_presets() -> List[str]:
    """Names of the run presets shipped with the package."""
    return sorted(p.stem for p in settings.PRESETS_DIR.glob("*.toml"))


def _format_validation_error(source: str, exc: ValidationError) -> str:
    lines = [f"Invalid configuration in {source}:"]
    for err in exc.errors():
        path = ".".join(str(part) for part in err["loc"]) or "<root>"
        lines.append(f"  {path}: {err['msg']}")
    return "\n".join(lines)


def parse_run_config(data: Dict[str, Any], source: str = "<config>") -> RunConfig:
    """Validate a raw config mapping into a RunConfig."""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(source, e)) from e


def load_run_config(
    path: Optional[Path] = None,
    preset: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunConfig:
    """
    Load a run configuration from a TOML file or a named preset.

    Args:
        path: TOML config file
        preset: Preset name (used when path is not given)
        overrides: Top-level fields replacing file values (seed, output_dir, workers)

    Returns:
        Validated RunConfig
    """
    if path is None and preset is None:
        raise ConfigError("Either a config file or --preset is required")

    if path is None:
        path = settings.PRESETS_DIR / f"{preset}.toml"
        if not path.exists():
            raise ConfigError(
                f"Unknown preset '{preset}' (available: {', '.join(available_presets())})"
            )
        logger.info(f"Loading preset {preset}")

    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Failed to parse {path}: {e}") from e

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    return parse_run_config(data, source=str(path))
