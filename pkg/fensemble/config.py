"""Run configuration: defaults, key=value files, validation."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from fensemble.errors import ConfigError

DEFAULT_SIEVE_LIMIT = 10**8
DEFAULT_CEILING = 10**13
DEFAULT_INTERVAL_BOUND = 10**9
DEFAULT_RTOL = 1e-10


def default_threads() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs besides its own arguments."""

    sieve_limit: int = DEFAULT_SIEVE_LIMIT
    ceiling: int = DEFAULT_CEILING
    interval_bound: int = DEFAULT_INTERVAL_BOUND
    rtol: float = DEFAULT_RTOL
    threads: int = field(default_factory=default_threads)
    cache_dir: Path | None = None
    output_dir: Path = Path(".")
    limit_exponents: bool = False
    include_squares: bool = True
    seedless: bool = False

    def validate(self) -> RunConfig:
        for name in ("sieve_limit", "ceiling", "interval_bound", "threads"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.rtol > 0:
            raise ConfigError(f"rtol must be positive, got {self.rtol}")
        if self.sieve_limit > self.ceiling:
            raise ConfigError("sieve_limit cannot exceed ceiling")
        self.output_dir.mkdir(parents=True, exist_ok=True)
        if not os.access(self.output_dir, os.W_OK):
            raise ConfigError(f"output directory not writable: {self.output_dir}")
        return self


CONFIG_KEYS = frozenset(f.name for f in fields(RunConfig))


def load_config_file(path: Path) -> dict[str, str]:
    """Read a ``key=value`` file. Keys are normalized to snake_case.

    Values stay strings; click converts them with each option's type.
    """
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_").lower()] = value
    return values
