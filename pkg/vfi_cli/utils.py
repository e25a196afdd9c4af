"""
Shared plumbing of the management commands: common flags, run-config
resolution and the translation of domain errors into exit codes.
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from FLAVR.exceptions import FlavrError
from vfi_tensor.services.parallel import set_num_workers

from .services.run_config import RunConfig, parse_overrides

logger = logging.getLogger(__name__)

# Dedicated flags and the config keys they override
FLAG_KEYS = {
    "seed": "seed",
    "k": "k",
    "context": "context",
    "threads": "threads",
    "out": "out_dir",
}


def success_response(command: BaseCommand, message: str, data: Optional[Dict[str, Any]] = None) -> None:
    """
    Write a standardized success message to the command's stdout

    Args:
        command: Running command
        message: Main success message
        data: Additional `key: value` lines
    """
    command.stdout.write(command.style.SUCCESS(message))
    for key, value in (data or {}).items():
        command.stdout.write(f"  {key}: {value}")


def error_response(message: str, error: Optional[Exception] = None, returncode: int = 1) -> CommandError:
    """
    Build the CommandError a command raises to exit with returncode

    Args:
        message: Main error message
        error: Underlying exception, appended to the message
        returncode: Process exit status (1 runtime failure, 2 usage/config error)
    """
    if error is not None:
        message = f"{message}: {error}"
    return CommandError(message, returncode=returncode)


class FlavrCommand(BaseCommand):
    """Base class: subclasses implement run(**options)"""
    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument("--config", help="key = value run config file")
        parser.add_argument("--seed", type=int, help="Seed of initialization, data order and augmentation")
        parser.add_argument("--out", help="Output directory")
        parser.add_argument("--threads", type=int, help="Kernel worker threads")
        parser.add_argument("--k", type=int, help="Interpolation factor")
        parser.add_argument("--context", type=int, help="Context frames on each side of the gap")
        parser.add_argument(
            "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
            help="Override any config key (repeatable)",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def resolve_run_config(self, options: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Merge --config, --set, command-specific values and dedicated flags"""
        overrides = parse_overrides(options.get("overrides"))
        overrides.update({k: v for k, v in (extra or {}).items() if v is not None})
        for flag, key in FLAG_KEYS.items():
            if options.get(flag) is not None:
                overrides[key] = options[flag]
        config = RunConfig.resolve(options.get("config"), overrides)
        set_num_workers(config.threads)
        return config

    def output_dir(self, config: RunConfig) -> Path:
        out = config.paths.out_dir or Path(settings.FLAVR_OUTPUT_ROOT) / self.command_name
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def run(self, **options):
        raise NotImplementedError

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except FlavrError as e:
            logger.error(f"{self.command_name} failed: {e.message}")
            raise error_response(f"{self.command_name} failed", e, e.exit_code)
        except CommandError:
            raise
        except Exception as e:
            logger.error(f"Unexpected error in {self.command_name}: {str(e)}", exc_info=True)
            raise error_response(f"{self.command_name} failed unexpectedly", e, 1)
