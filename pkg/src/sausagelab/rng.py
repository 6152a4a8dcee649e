"""Counter-based random streams.

Every random quantity in the package is a pure function of
``(master seed, label, index)``.  Two derivations are exposed:

* :func:`seed_stream` returns a :class:`numpy.random.Generator` backed by
  Philox keyed with a BLAKE2b digest of the triple.  Used for obstacle
  fields, random graphs and other vectorised sampling.
* :func:`stream_key` returns a 64-bit key for the walk kernels, which run
  their own SplitMix64 counter generator (one sub-stream per path, see
  :func:`path_key`).

The derivation rule is part of the public contract; changing it changes
every result table.
"""
from __future__ import annotations

import hashlib

import numpy as np

LABELS = ("path", "field", "graph", "sample", "domain", "test")
MAX_INDEX = 2**63 - 1

_MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DERIVATION_RULE = (
    "key = BLAKE2b-128('sausagelab/v1:{seed}:{label}:{index}'); "
    "numpy streams use Philox(key); walk kernels use SplitMix64 with "
    "path key mix64(key64 + (i+1)*0x9E3779B97F4A7C15)"
)


def _digest(master_seed: int, label: str, index: int) -> bytes:
    if label not in LABELS:
        raise ValueError(f"unknown stream label {label!r}; expected one of {LABELS}")
    if not 0 <= index <= MAX_INDEX:
        raise OverflowError(f"stream index {index} outside [0, 2**63-1]")
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    msg = f"sausagelab/v1:{int(master_seed)}:{label}:{int(index)}".encode()
    return hashlib.blake2b(msg, digest_size=16).digest()


def seed_stream(master_seed: int, label: str, index: int) -> np.random.Generator:
    """Independent Philox generator for ``(master_seed, label, index)``."""
    d = _digest(master_seed, label, index)
    key = np.frombuffer(d, dtype="<u8").copy()
    return np.random.Generator(np.random.Philox(key=key))


def stream_key(master_seed: int, label: str, index: int) -> int:
    """64-bit base key for the walk kernels."""
    return int.from_bytes(_digest(master_seed, label, index)[:8], "little")


def mix64(z: int) -> int:
    """SplitMix64 output function."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def path_key(base_key: int, index: int) -> int:
    """Key of path ``index`` within the stream ``base_key``."""
    return mix64(base_key + (index + 1) * GOLDEN_GAMMA)


def uniform(key: int, counter: int) -> float:
    """The ``counter``-th uniform in (0, 1) of the SplitMix64 stream ``key``."""
    z = mix64(key + (counter + 1) * GOLDEN_GAMMA)
    return ((z >> 11) + 0.5) * (1.0 / 9007199254740992.0)
