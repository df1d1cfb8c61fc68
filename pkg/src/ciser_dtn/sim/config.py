"""Simulation scenario description and its ``key = value`` file format."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Mapping

Policy = Literal["sir", "ciser"]

KIB = 1024
MIB = 1024 * 1024
KMH = 1000.0 / 3600.0


class ConfigInvalid(ValueError):
    """Raised with one diagnostic per offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class SimConfig:
    """Full DTN scenario. Defaults follow the 160-node, 12 h synthetic setup.

    Sizes are bytes, durations seconds, distances metres, energy mAh.
    ``scan_interval`` defaults to 10 s for RWP and 120 s for trace replay.
    """

    n_nodes: int = 160
    area: tuple[float, float] = (8000.0, 8000.0)
    sim_duration: float = 43200.0
    tx_range: float = 100.0
    tx_speed: float = 250_000 / 8  # 250 kbit/s
    node_speed: tuple[float, float] = (4 * KMH, 10 * KMH)
    wait_time: tuple[float, float] = (10.0, 30.0)
    buffer_capacity: int = 2 * MIB
    message_size: tuple[int, int] = (500 * KIB, 1024 * KIB)
    message_interval: tuple[float, float] = (25.0, 30.0)
    ttl: float = 300 * 60.0
    energy_initial: float = 4800.0
    energy_scan: float = 1.0
    energy_tx: float = 4.0
    energy_rx: float = 4.0
    energy_dead_threshold: float = 5.0
    scan_interval: float | None = None
    policy: Policy = "ciser"
    rho: float = 0.95
    seed: int = 0
    connectivity: str = "rwp"
    contact_miss: float = 0.0
    tracked_messages: int = 10

    def __post_init__(self) -> None:
        if self.scan_interval is None:
            default = 120.0 if self.is_trace else 10.0
            object.__setattr__(self, "scan_interval", default)
        problems = validate(self)
        if problems:
            raise ConfigInvalid(problems)

    @property
    def is_trace(self) -> bool:
        return self.connectivity.startswith("trace:")

    @property
    def trace_path(self) -> str | None:
        return self.connectivity[len("trace:") :] if self.is_trace else None

    def replace(self, **changes: object) -> SimConfig:
        return dataclasses.replace(self, **changes)


def validate(cfg: SimConfig) -> list[str]:
    problems: list[str] = []

    def positive(name: str) -> None:
        value = getattr(cfg, name)
        if not value > 0:
            problems.append(f"{name}: must be positive, got {value!r}")

    def non_negative(name: str) -> None:
        value = getattr(cfg, name)
        if not value >= 0:
            problems.append(f"{name}: must be non-negative, got {value!r}")

    def ordered_range(name: str) -> None:
        lo, hi = getattr(cfg, name)
        if not (lo > 0 and hi > 0):
            problems.append(f"{name}: bounds must be positive, got {(lo, hi)!r}")
        elif lo > hi:
            problems.append(f"{name}: min {lo!r} exceeds max {hi!r}")

    for name in ("n_nodes", "sim_duration", "tx_range", "tx_speed", "buffer_capacity", "ttl"):
        positive(name)
    positive("scan_interval")
    positive("energy_initial")
    for name in ("energy_scan", "energy_tx", "energy_rx", "energy_dead_threshold"):
        non_negative(name)
    non_negative("tracked_messages")
    for name in ("node_speed", "wait_time", "message_size", "message_interval"):
        ordered_range(name)
    w, h = cfg.area
    if not (w > 0 and h > 0):
        problems.append(f"area: dimensions must be positive, got {cfg.area!r}")
    elif not cfg.is_trace and cfg.tx_range >= min(w, h):
        problems.append(f"tx_range: {cfg.tx_range!r} must be below min(area) {min(w, h)!r}")
    if cfg.message_size[1] > cfg.buffer_capacity:
        problems.append("message_size: largest message exceeds buffer_capacity")
    if cfg.policy not in ("sir", "ciser"):
        problems.append(f"policy: expected sir or ciser, got {cfg.policy!r}")
    if not 0.0 <= cfg.rho <= 1.0:
        problems.append(f"rho: must lie in [0, 1], got {cfg.rho!r}")
    if not 0.0 <= cfg.contact_miss < 1.0:
        problems.append(f"contact_miss: must lie in [0, 1), got {cfg.contact_miss!r}")
    if not 0 <= cfg.seed < 2**64:
        problems.append(f"seed: must be an unsigned 64-bit integer, got {cfg.seed!r}")
    if cfg.connectivity != "rwp" and not cfg.is_trace:
        problems.append(f"connectivity: expected 'rwp' or 'trace:<path>', got {cfg.connectivity!r}")
    if cfg.is_trace and not cfg.trace_path:
        problems.append("connectivity: trace path is empty")
    return problems


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}
_INT_FIELDS = {"n_nodes", "buffer_capacity", "seed", "tracked_messages"}
_RANGE_FIELDS = {"area", "node_speed", "wait_time", "message_size", "message_interval"}
_INT_RANGES = {"message_size"}
_STR_FIELDS = {"policy", "connectivity"}


def _parse_number(text: str, integer: bool) -> float | int:
    if integer:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    return float(text)


def parse_value(key: str, text: str) -> object:
    """Convert one config value; ranges are written ``lo,hi`` (or ``WxH`` for area)."""
    text = text.strip()
    if key in _STR_FIELDS:
        return text.lower() if key == "policy" else text
    if key in _RANGE_FIELDS:
        parts = text.replace("x", ",").split(",") if key == "area" else text.split(",")
        parts = [p.strip() for p in parts if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"expected 'min,max', got {text!r}")
        integer = key in _INT_RANGES
        return tuple(_parse_number(p, integer) for p in parts)
    if key == "scan_interval" and text.lower() in ("", "auto", "default"):
        return None
    return _parse_number(text, key in _INT_FIELDS)


def read_key_values(lines: Iterable[str], source: str = "<config>") -> list[tuple[int, str, str]]:
    """Split ``key = value`` lines; ``#`` starts a comment."""
    out = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid([f"{source}:{lineno}: expected 'key = value'"])
        key, value = line.split("=", 1)
        out.append((lineno, key.strip(), value.strip()))
    return out


def config_from_mapping(
    values: Mapping[str, str], base: SimConfig | None = None, source: str = "<config>"
) -> SimConfig:
    problems = []
    parsed: dict[str, object] = {}
    for key, text in values.items():
        if key not in _FIELDS:
            problems.append(f"{source}: unknown key {key!r}")
            continue
        try:
            parsed[key] = parse_value(key, text)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigInvalid(problems)
    if base is None:
        # re-resolve scan_interval unless given explicitly
        return SimConfig(**parsed)  # type: ignore[arg-type]
    return base.replace(**parsed)


def load_config(
    path: str | Path, overrides: Mapping[str, str] | None = None
) -> SimConfig:
    """Read a config file; ``overrides`` (e.g. from CLI flags) win over file keys."""
    path = Path(path)
    entries = read_key_values(path.read_text(encoding="utf-8").splitlines(), str(path))
    values: dict[str, str] = {}
    problems = []
    for lineno, key, value in entries:
        if key in values:
            problems.append(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    if problems:
        raise ConfigInvalid(problems)
    values.update(overrides or {})
    return config_from_mapping(values, source=str(path))


def _format_value(value: object) -> str:
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: SimConfig) -> str:
    """Canonical text form; loading it back yields an equal config."""
    lines = [f"{f} = {_format_value(getattr(cfg, f))}" for f in _FIELDS]
    return "\n".join(lines) + "\n"


HASH_EXCLUDED = ("seed", "policy")


def config_hash(cfg: SimConfig) -> str:
    """Short digest of the scenario, ignoring seed and policy so paired runs match."""
    text = "\n".join(
        f"{f} = {_format_value(getattr(cfg, f))}" for f in _FIELDS if f not in HASH_EXCLUDED
    )
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
