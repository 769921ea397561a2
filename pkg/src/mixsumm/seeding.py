"""Named RNG substreams derived from one root seed."""
from __future__ import annotations

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for stage ``name``; stable across runs and Python versions."""
    return np.random.default_rng([int(seed), stream_key(name)])
