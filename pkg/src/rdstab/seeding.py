"""Deterministic seed derivation for sweep cells and Monte-Carlo grid cells.

A cell seed is ``splitmix64`` folded over the base seed and the cell
coordinates::

    s = splitmix64(base)
    for c in coords:
        s = splitmix64(s ^ c)

Streams are then drawn from numpy's PCG64 seeded with ``s``.
"""
from __future__ import annotations

MASK = (1 << 64) - 1
RNG_ALGORITHM = "PCG64"
SEED_MIXER = "splitmix64-fold"


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def cell_seed(base: int, *coords: int) -> int:
    s = splitmix64(base & MASK)
    for c in coords:
        s = splitmix64(s ^ (c & MASK))
    return s
