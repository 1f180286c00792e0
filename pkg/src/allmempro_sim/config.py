"""Simulator configuration knobs and their text encoding."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass

_TIME_RE = re.compile(r"^(\d{1,2}):(\d{2}):(\d{2})(?:\.(\d{1,3}))?$")


def parse_hex(text: str) -> int:
    """Hex number with optional ``0x`` prefix, any case, any leading zeroes."""
    digits = text[2:] if text[:2].lower() == "0x" else text
    if not digits or any(c not in "0123456789abcdefABCDEF" for c in digits):
        raise ValueError(f"not a hex number: {text!r}")
    return int(digits, 16)


def parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_clock(text: str) -> int:
    """``HH:MM:SS[.mmm]`` to milliseconds after midnight."""
    m = _TIME_RE.match(text)
    if not m:
        raise ValueError(f"not a HH:MM:SS.mmm time: {text!r}")
    h, mi, s = int(m[1]), int(m[2]), int(m[3])
    ms = int((m[4] or "0").ljust(3, "0"))
    if h > 23 or mi > 59 or s > 59:
        raise ValueError(f"time out of range: {text!r}")
    return ((h * 60 + mi) * 60 + s) * 1000 + ms


def format_clock(ms: int) -> str:
    ms %= 24 * 3600 * 1000
    s, milli = divmod(ms, 1000)
    m, sec = divmod(s, 60)
    h, mi = divmod(m, 60)
    return f"{h:02d}:{mi:02d}:{sec:02d}.{milli:03d}"


@dataclass(frozen=True)
class SimConfig:
    # allocator
    pool_base: int = 0xFFFFA400AC479000
    # policy
    protect_module_image: bool = False
    # runner
    continue_on_error: bool = False
    # cost model, TSC ticks per single access
    cached_unprotected: int = 7
    uncached_unprotected: int = 10_000
    mediated: int = 50_000
    # trace clock
    epoch_ms: int = parse_clock("22:34:47.000")
    ticks_per_ms: int = 1000
    # default trace context
    cpu: int = 0
    pid: int = 4
    tid: int = 7732
    process: str = "System"


_HEX_KEYS = {"pool_base"}
_BOOL_KEYS = {"protect_module_image", "continue_on_error"}
_INT_KEYS = {
    "cached_unprotected", "uncached_unprotected", "mediated",
    "ticks_per_ms", "cpu", "pid", "tid",
}
_POSITIVE_KEYS = {"cached_unprotected", "uncached_unprotected", "mediated", "ticks_per_ms"}
CONFIG_KEYS = frozenset(f.name for f in dataclasses.fields(SimConfig)) | {"epoch"}


def _parse_value(key: str, value: str) -> object:
    if key not in CONFIG_KEYS:
        raise ValueError(f"unknown config key {key!r}")
    if key in _HEX_KEYS:
        return parse_hex(value)
    if key in _BOOL_KEYS:
        return parse_bool(value)
    if key in _INT_KEYS:
        n = int(value, 0)
        if key in _POSITIVE_KEYS and n <= 0:
            raise ValueError(f"{key} must be positive")
        return n
    if key in ("epoch", "epoch_ms"):
        return parse_clock(value) if ":" in value else int(value)
    if not value:
        raise ValueError(f"{key} must not be empty")
    return value


def config_field(key: str) -> str:
    """Map a user-facing key to the dataclass field name."""
    return "epoch_ms" if key == "epoch" else key


def validate_key_value(key: str, value: str) -> None:
    _parse_value(key, value)


def apply_overrides(config: SimConfig, pairs: list[tuple[str, str]]) -> SimConfig:
    changes: dict[str, object] = {}
    for key, value in pairs:
        changes[config_field(key)] = _parse_value(key, value)
    return dataclasses.replace(config, **changes)
