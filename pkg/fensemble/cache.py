"""On-disk caches: packed sieve tables and enumerated ensembles."""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
import xxhash

from fensemble import __version__
from fensemble.primes import PrimeTable

logger = logging.getLogger(__name__)

SIEVE_MAGIC = b"FENSIEVE"
SIEVE_FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQQ")  # magic, version, limit, payload bytes


class SieveCache:
    """One versioned binary file ``sieve.bin`` holding the largest table built.

    A stored table answers any request up to its own limit; a larger table
    replaces it.
    """

    FILENAME = "sieve.bin"

    def __init__(self, cache_dir: Path):
        self.cache_dir = Path(cache_dir)

    @property
    def path(self) -> Path:
        return self.cache_dir / self.FILENAME

    def load(self, limit: int) -> PrimeTable | None:
        """The cached table if it covers ``limit``."""
        if not self.path.exists():
            return None
        data = self.path.read_bytes()
        if len(data) < _HEADER.size:
            return None
        magic, version, stored_limit, n_bytes = _HEADER.unpack_from(data)
        if (
            magic != SIEVE_MAGIC
            or version != SIEVE_FORMAT_VERSION
            or len(data) - _HEADER.size != n_bytes
        ):
            logger.warning("ignoring stale sieve cache %s", self.path)
            return None
        if stored_limit < limit:
            return None
        bits = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).copy()
        return PrimeTable(stored_limit, bits=bits)

    def store(self, table: PrimeTable) -> Path:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        header = _HEADER.pack(SIEVE_MAGIC, SIEVE_FORMAT_VERSION, table.limit, len(table.bits))
        self.path.write_bytes(header + table.bits.tobytes())
        return self.path


def ensemble_key(n: int, include_squares: bool) -> str:
    """Cache key for an ensemble: (N, code version, square convention)."""
    return xxhash.xxh64(f"{n}:{__version__}:{int(include_squares)}".encode()).hexdigest()


class EnsembleCache:
    """``ensemble-<key>.npz`` files with the rank-ordered integer columns."""

    COLUMNS = ("n_sigma", "x", "pi_x", "pi_y")

    def __init__(self, cache_dir: Path):
        self.cache_dir = Path(cache_dir)

    def path_for(self, n: int, include_squares: bool) -> Path:
        return self.cache_dir / f"ensemble-{ensemble_key(n, include_squares)}.npz"

    def load(self, n: int, include_squares: bool) -> dict[str, np.ndarray] | None:
        path = self.path_for(n, include_squares)
        if not path.exists():
            return None
        with np.load(path) as data:
            if set(data.files) != set(self.COLUMNS):
                logger.warning("ignoring malformed ensemble cache %s", path)
                return None
            return {name: data[name] for name in self.COLUMNS}

    def store(self, n: int, include_squares: bool, columns: dict[str, np.ndarray]) -> Path:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        path = self.path_for(n, include_squares)
        np.savez(path, **{name: columns[name] for name in self.COLUMNS})
        return path
