"""
Run configuration: one `key = value` file plus command-line overrides,
resolved into the network, training, path and bench records.

Every key belongs to exactly one record; unknown keys are errors. Precedence
is file < `--set key=value` < dedicated flags (`--k`, `--seed`, ...).
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from FLAVR.exceptions import FlavrConfigError
from vfi_bench.services.models import BenchConfig
from vfi_net.services.models import FlavrConfig
from vfi_net.utils import parse_key_values, to_lines
from vfi_training.services.models import TrainConfig

from ..exceptions import MissingConfigValueError, UnknownConfigKeyError

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.txt"


class PathConfig(BaseModel):
    """Locations a run reads from and writes to"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    dataset_root: Optional[Path] = Field(None, description="Clip directories to train or evaluate on")
    val_root: Optional[Path] = Field(None, description="Validation clip directories")
    input_dir: Optional[Path] = Field(None, description="Frame directory to interpolate")
    checkpoint: Optional[Path] = Field(None, description="Checkpoint to load")
    out_dir: Optional[Path] = Field(None, description="Output directory")

    @field_validator("*", mode="before")
    @classmethod
    def parse_none(cls, v: Any) -> Any:
        if isinstance(v, str) and v.strip().lower() in ("", "none"):
            return None
        return v

    @classmethod
    def from_mapping(cls, values) -> "PathConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise FlavrConfigError(f"invalid path config: {e}")


SECTIONS = {
    "network": FlavrConfig,
    "train": TrainConfig,
    "paths": PathConfig,
    "bench": BenchConfig,
}


class RunConfig(BaseModel):
    """Fully resolved settings of one command invocation"""
    model_config = ConfigDict(frozen=True)

    network: FlavrConfig = Field(default_factory=FlavrConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    paths: PathConfig = Field(default_factory=PathConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
    threads: int = Field(1, ge=1, description="Kernel worker threads")

    @classmethod
    def from_values(cls, values: Mapping[str, Any], source: str = "run config") -> "RunConfig":
        """Split flat key/value pairs into the section records"""
        sections: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
        threads = 1
        for key, value in values.items():
            if key == "threads":
                try:
                    threads = int(value)
                except (TypeError, ValueError):
                    raise FlavrConfigError(f"{source}: threads must be an integer, got '{value}'")
                if threads < 1:
                    raise FlavrConfigError(f"{source}: threads must be >= 1, got {threads}")
                continue
            owner = next((name for name, model in SECTIONS.items() if key in model.model_fields), None)
            if owner is None:
                raise UnknownConfigKeyError(key, source)
            sections[owner][key] = value
        return cls(
            network=FlavrConfig.from_mapping(sections["network"]),
            train=TrainConfig.from_mapping(sections["train"]),
            paths=PathConfig.from_mapping(sections["paths"]),
            bench=BenchConfig.from_mapping(sections["bench"]),
            threads=threads,
        )

    @classmethod
    def resolve(
        cls,
        config_path: Optional[Union[str, Path]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "RunConfig":
        """
        Read the config file (if any) and apply overrides on top.

        Args:
            config_path: `key = value` file
            overrides: Values from `--set` and dedicated flags, already merged

        Returns:
            The resolved RunConfig
        """
        values: Dict[str, Any] = {}
        source = "run config"
        if config_path is not None:
            path = Path(config_path)
            try:
                lines = path.read_text(encoding="utf-8").splitlines()
            except OSError as e:
                raise MissingConfigValueError("--config", f"cannot be read ({e})")
            values.update(parse_key_values(lines, str(path)))
            source = str(path)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        config = cls.from_values(values, source)
        logger.debug(f"Resolved run config from {source} with {len(overrides or {})} override(s)")
        return config

    def to_lines(self) -> List[str]:
        lines = []
        for name in SECTIONS:
            record = getattr(self, name)
            lines.append(f"# {name}")
            lines.extend(to_lines({k: ("none" if v is None else v) for k, v in record.model_dump().items()}))
        lines.extend(["# runtime", f"threads = {self.threads}"])
        return lines

    def echo(self, out_dir: Union[str, Path]) -> Path:
        """Write the resolved config next to a run's outputs, in the input format"""
        path = Path(out_dir) / RESOLVED_CONFIG
        path.write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")
        return path

    def require_path(self, key: str, must_exist: bool = True) -> Path:
        value = getattr(self.paths, key)
        if value is None:
            raise MissingConfigValueError(key)
        if must_exist and not value.exists():
            raise MissingConfigValueError(key, f"points to {value}, which does not exist")
        return value


def parse_overrides(items: Optional[List[str]]) -> Dict[str, str]:
    """`--set key=value` items as a mapping"""
    overrides: Dict[str, str] = {}
    for item in items or []:
        if "=" not in item:
            raise FlavrConfigError(f"--set expects key=value, got '{item}'")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    return overrides
