"""Seed splitting helpers.

Reproducibility rule used across the package: independent streams are
derived from a master seed by ``spawn_seed``, the splitmix64 sequence
of the master, so stream ``index`` is a pure function of
``(master, index)`` and results do not depend on how work is scheduled
across workers.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """Bijective 64-bit finalizer (splitmix64 variant)."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def spawn_seed(master: int, index: int) -> int:
    """Derive the seed of stream ``index`` from a master seed.

    Defined as ``mix64(master + (index + 1) * gamma)`` with the
    splitmix64 increment; unlike an xor of master and index, this is not
    symmetric in its arguments, so the streams of two masters never
    coincide as sets.
    """
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return mix64((int(master) + (int(index) + 1) * _GAMMA) & _MASK64)
