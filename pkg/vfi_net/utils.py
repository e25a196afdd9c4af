"""
Line-oriented `key = value` records.

Used for run config files, the resolved config echo and the config blob
embedded in checkpoints. Tuples are written comma-separated.
"""
from enum import Enum
from typing import Any, Dict, Iterable, List

from FLAVR.exceptions import FlavrConfigError


def format_value(value: Any) -> str:
    """Render a config value the way parse_key_values reads it back"""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value) if value else "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_key_values(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """
    Parse `key = value` lines; `#` starts a comment, blank lines are skipped.

    Args:
        lines: Raw lines
        source: Name used in error messages

    Returns:
        Mapping of key to raw string value, in file order
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FlavrConfigError(f"{source}:{number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise FlavrConfigError(f"{source}:{number}: missing key")
        if key in values:
            raise FlavrConfigError(f"{source}:{number}: duplicate key '{key}'")
        values[key] = value
    return values


def to_lines(values: Dict[str, Any]) -> List[str]:
    return [f"{key} = {format_value(value)}" for key, value in values.items()]


def split_list(value: Any) -> Any:
    """Before-validator helper: turn '1,2,3' into ['1', '2', '3']; 'none' into []"""
    if isinstance(value, str):
        text = value.strip()
        if text.lower() in ("", "none"):
            return []
        return [part.strip() for part in text.split(",") if part.strip()]
    return value
