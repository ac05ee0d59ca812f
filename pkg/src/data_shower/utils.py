import os
import zlib
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

THREADS_ENV = "DATASHOWER_THREADS"
BUNDLED_PREFIX = "bundled:"


@lru_cache(maxsize=1024)
def db_to_linear(value_db: float) -> float:
    """Convert a power ratio in dB to a linear ratio."""
    return float(10.0 ** (value_db / 10.0))


@lru_cache(maxsize=1024)
def dbm_to_watts(power_dbm: float) -> float:
    """Convert a power in dBm to watts."""
    return float(10.0 ** ((power_dbm - 30.0) / 10.0))


def kmh_to_ms(speed_kmh: float) -> float:
    return speed_kmh / 3.6


def spawn_generator(master_seed: int, name: str, index: int = 0) -> np.random.Generator:
    """
    Derive an independent random generator for one named run.

    The stream depends only on the master seed, the stream name and the run index, so runs can execute
    in any order or on any worker and still draw the same numbers.
    """
    key = (zlib.crc32(name.encode("utf-8")), index)
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=key))


def n_jobs() -> int:
    """Number of joblib workers: DATASHOWER_THREADS when set, otherwise all cores (-1)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return -1
    try:
        value = int(raw)
    except ValueError:
        return -1
    return value if value >= 1 else -1


def bundled_path(name: str) -> Path:
    """Path of a file shipped in the package's data directory."""
    return Path(str(resources.files("data_shower") / "data" / name))


def resolve_path(reference: str, base_dir: Path) -> Path:
    """Resolve a file reference from a scenario: `bundled:` names, absolute paths, or paths relative to base_dir."""
    if reference.startswith(BUNDLED_PREFIX):
        return bundled_path(reference[len(BUNDLED_PREFIX) :])
    path = Path(reference)
    return path if path.is_absolute() else base_dir / path
