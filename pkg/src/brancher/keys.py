"""Pure-Python mirror of the per-vertex key hashing in the compiled kernels.

Slow, but independent of numba: tests walk the same trees through both
implementations and require identical results.
"""
from __future__ import annotations

from . import _kernels as _k

MASK = (1 << 64) - 1
_M1 = int(_k._M1)
_M2 = int(_k._M2)
_GOLDEN = int(_k._GOLDEN)
SALT_COUNT = int(_k.SALT_COUNT)
SALT_STEP = int(_k.SALT_STEP)
SALT_SPECIAL = int(_k.SALT_SPECIAL)
SALT_ROOT = int(_k.SALT_ROOT)
SALT_SPINE = int(_k.SALT_SPINE)


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * _M1) & MASK
    z = ((z ^ (z >> 27)) * _M2) & MASK
    return z ^ (z >> 31)


def child_key(parent: int, index: int) -> int:
    return mix64(parent ^ mix64(((index + 1) * _GOLDEN) & MASK))


def spine_key(key: int, i: int) -> int:
    return mix64(key ^ mix64((i * _GOLDEN + SALT_SPINE) & MASK))


def root_key(key: int) -> int:
    return mix64(key ^ SALT_ROOT)


def uniform(key: int, salt: int) -> float:
    return (mix64(key ^ salt) >> 11) * (1.0 / 9007199254740992.0)


def draw(cdf, u: float) -> int:
    k = 0
    n = len(cdf)
    while k < n - 1 and u >= cdf[k]:
        k += 1
    return k


def step_index(key: int, d: int) -> int:
    return min(int(uniform(key, SALT_STEP) * 2 * d), 2 * d - 1)


def step_vector(key: int, d: int) -> tuple[int, ...]:
    si = step_index(key, d)
    v = [0] * d
    v[si // 2] = 1 if si % 2 == 0 else -1
    return tuple(v)


def spine_split(key: int, cdf_sb) -> tuple[int, int]:
    k = max(draw(cdf_sb, uniform(key, SALT_COUNT)), 1)
    j = min(int(uniform(key, SALT_SPECIAL) * k) + 1, k)
    return j - 1, k - j
