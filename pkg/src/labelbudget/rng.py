"""Deterministic, language-portable randomness.

All sampling decisions in this package (test split, volume/slice sampling,
epoch ordering, derived seeds) go through splitmix64 plus Fisher-Yates,
keyed by a 64-bit FNV-1a hash of string/integer parts. No global state,
no dependence on Python's hash randomization or numpy version.
"""

from __future__ import annotations

from typing import Iterable, Sequence, TypeVar

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

T = TypeVar("T")


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def hash_key(*parts: str | int) -> int:
    """64-bit hash of a mixed string/integer key.

    Strings are fed as UTF-8 with an 's' tag, integers as 8-byte
    little-endian two's complement with an 'i' tag; parts are separated
    by 0x1F so ("ab", 1) and ("a", "b1") cannot collide.
    """
    buf = bytearray()
    for part in parts:
        if isinstance(part, bool):  # bool is an int subclass; reject
            raise TypeError("bool is not a valid key part")
        if isinstance(part, str):
            buf.append(ord("s"))
            buf.extend(part.encode("utf-8"))
        elif isinstance(part, int):
            buf.append(ord("i"))
            buf.extend((part & _MASK64).to_bytes(8, "little"))
        else:
            raise TypeError(f"unsupported key part type: {type(part)!r}")
        buf.append(0x1F)
    return fnv1a64(bytes(buf))


class SplitMix64:
    """splitmix64 sequence generator (Steele, Lea & Flood constants)."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def next_below(self, bound: int) -> int:
        """Draw from [0, bound) by modulo; bias is negligible for the
        list sizes used here and the rule stays trivial to re-derive."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound


def shuffled(items: Sequence[T], key: int) -> list[T]:
    """Fisher-Yates shuffle of ``items`` driven by splitmix64(key).

    Walks i from n-1 down to 1, swapping i with j = next() mod (i+1).
    Pure: returns a new list.
    """
    out = list(items)
    gen = SplitMix64(key)
    for i in range(len(out) - 1, 0, -1):
        j = gen.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def derive_seed(*parts: str | int) -> int:
    """Stable non-negative sub-seed for nested deterministic processes."""
    return hash_key(*parts) & 0x7FFFFFFFFFFFFFFF


def stable_choice_order(items: Iterable[str], key: int) -> list[str]:
    return shuffled(sorted(items), key)
