"""
Run settings resolved from command-line flags, a key = value file and defaults
"""

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

import click
from click.core import ParameterSource
from dotenv import dotenv_values

from ..errors import ArgumentError, DatasetIOError
from .profiles import DEFAULT_PROFILE, get_ablation_profiles

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Fully resolved settings of one command-line run"""

    command: str = ""
    data: Optional[str] = None
    extra_data: Tuple[str, ...] = ()
    test_data: Optional[str] = None
    pred: Optional[str] = None
    gt: Optional[str] = None
    checkpoint: Optional[str] = None
    out: Optional[str] = None
    bank_cache: Optional[str] = None
    profile: str = DEFAULT_PROFILE
    seed: int = 0
    # None: use the model's own reference count
    n_refs: Optional[int] = None
    resolution: int = 64
    widths: Tuple[int, ...] = (16, 32, 64, 96, 128)
    steps: int = 200
    batch_size: int = 2
    log_every: int = 10
    n_videos: int = 20
    length: int = 16
    difficulty: float = 0.5
    grid: Tuple[str, ...] = ("I", "II", "III", "IV")
    seeds: int = 3
    repeats: int = 50
    jobs: int = 1

    def validate(self) -> None:
        """Reject out-of-range values before any work starts"""
        if self.n_refs is not None and self.n_refs < 1:
            raise ArgumentError(f"n-refs must be >= 1, got {self.n_refs}")
        positive = ("steps", "batch_size", "log_every", "n_videos", "length", "seeds", "repeats", "jobs")
        for name in positive:
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name.replace('_', '-')} must be >= 1, got {getattr(self, name)}")
        if self.resolution < 16 or self.resolution % 16:
            raise ArgumentError(f"resolution must be a positive multiple of 16, got {self.resolution}")
        if len(self.widths) != 5 or min(self.widths) < 1:
            raise ArgumentError(f"widths must be five positive integers, got {self.widths}")
        if not 0.0 <= self.difficulty <= 1.0:
            raise ArgumentError(f"difficulty must lie in [0, 1], got {self.difficulty}")
        profiles = get_ablation_profiles()
        for row in (self.profile, *self.grid):
            if row.upper() not in profiles:
                raise ArgumentError(f"unknown profile {row!r}; choose from {', '.join(profiles)}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _parse_list(raw: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in raw.replace(";", ",").split(",") if part.strip())


def coerce(name: str, raw: Any) -> Any:
    """Convert a string (config file) or click value to the RunConfig field type"""
    if raw is None:
        return None
    if name == "widths":
        items = _parse_list(raw) if isinstance(raw, str) else raw
        try:
            return tuple(int(w) for w in items)
        except ValueError as exc:
            raise ArgumentError(f"widths must be integers, got {raw!r}") from exc
    if name == "n_refs":
        try:
            return int(raw)
        except ValueError as exc:
            raise ArgumentError(f"n_refs expects an integer, got {raw!r}") from exc
    if name in ("grid", "extra_data"):
        return _parse_list(raw) if isinstance(raw, str) else tuple(raw)
    default = next(f.default for f in fields(RunConfig) if f.name == name)
    try:
        if isinstance(default, bool):
            return str(raw).lower() in ("1", "true", "yes", "on")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ArgumentError(f"{name} expects a number, got {raw!r}") from exc
    return str(raw)


def load_config_file(path: str) -> Dict[str, str]:
    """Read `key = value` lines; keys may use dashes or underscores"""
    file_path = Path(path)
    if not file_path.exists():
        raise DatasetIOError(file_path, "config file not found")
    values = dotenv_values(file_path)
    known = {f.name for f in fields(RunConfig)} - {"command"}
    parsed: Dict[str, str] = {}
    for key, value in values.items():
        name = key.strip().lower().replace("-", "_")
        if name not in known:
            raise ArgumentError(f"unknown setting {key!r} in {file_path}")
        if value is not None:
            parsed[name] = value
    return parsed


def resolve_settings(ctx: click.Context, command: str, params: Mapping[str, Any]) -> RunConfig:
    """
    Build the RunConfig of a command.

    Precedence per field: a flag given on the command line, then the
    --config file, then the RunConfig default.
    """
    params = dict(params)
    config_path = params.pop("config", None)
    from_file = load_config_file(config_path) if config_path else {}

    values: Dict[str, Any] = {"command": command}
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        source = ctx.get_parameter_source(f.name) if f.name in params else None
        if source in (ParameterSource.COMMANDLINE, ParameterSource.ENVIRONMENT) and params[f.name] is not None:
            values[f.name] = coerce(f.name, params[f.name])
        elif f.name in from_file:
            values[f.name] = coerce(f.name, from_file[f.name])
        elif f.name in params and params[f.name] not in (None, ()):
            values[f.name] = coerce(f.name, params[f.name])

    settings = RunConfig(**values)
    settings.validate()
    logger.info("Resolved settings: %s", settings.to_dict())
    return settings
