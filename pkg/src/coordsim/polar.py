"""Polar transform ``G_n = R F^{(x)n}`` over GF(2) and index-set bookkeeping.

``F = [[1, 0], [1, 1]]`` and ``R`` is the bit-reversal permutation. Words
are row vectors, so ``x = u G_n``; for ``n = 1`` this is
``(u1 ^ u2, u2)``. ``G_n`` is an involution over GF(2).

Index positions are 0-based throughout the package.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterable

import numpy as np

MAX_N = 20


def _log2_len(length: int) -> int:
    n = length.bit_length() - 1
    if length < 1 or (1 << n) != length:
        raise ValueError(f"word length {length} is not a power of two")
    if n > MAX_N:
        raise ValueError(f"n = {n} exceeds the supported maximum {MAX_N}")
    return n


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    rev = np.zeros_like(idx)
    for b in range(n):
        rev |= ((idx >> b) & 1) << (n - 1 - b)
    rev.setflags(write=False)
    return rev


def bit_reversal_perm(n: int) -> tuple[int, ...]:
    """Permutation sending ``i`` to the integer with reversed ``n``-bit digits."""
    if n < 0 or n > MAX_N:
        raise ValueError(f"n must be in [0, {MAX_N}], got {n}")
    return tuple(int(v) for v in _bit_reversal(n))


def _butterfly(w: np.ndarray, q: int) -> np.ndarray:
    # w: (..., N) integer array, transformed in place by F^{(x)n}
    N = w.shape[-1]
    lead = w.shape[:-1]
    half = N // 2
    while half >= 1:
        v = w.reshape(*lead, N // (2 * half), 2, half)
        if q == 2:
            v[..., 0, :] ^= v[..., 1, :]
        else:
            v[..., 0, :] = (v[..., 0, :] + v[..., 1, :]) % q
        half //= 2
    return w


def polar_transform(v) -> np.ndarray:
    """Return ``v G_n`` over GF(2); batches along leading axes."""
    arr = np.asarray(v)
    n = _log2_len(arr.shape[-1])
    if arr.dtype != bool and (np.any(arr > 1) or np.any(arr < 0)):
        raise ValueError("polar_transform expects binary words")
    w = np.array(arr, dtype=np.uint8)
    _butterfly(w, 2)
    return w[..., _bit_reversal(n)]


def _is_prime(q: int) -> bool:
    if q < 2:
        return False
    f = 2
    while f * f <= q:
        if q % f == 0:
            return False
        f += 1
    return True


def qary_transform(v, q: int) -> np.ndarray:
    """Same butterfly as :func:`polar_transform` with addition mod ``q``."""
    if not _is_prime(q):
        raise ValueError(f"alphabet size {q} is not prime")
    arr = np.asarray(v)
    n = _log2_len(arr.shape[-1])
    if np.any(arr < 0) or np.any(arr >= q):
        raise ValueError(f"symbols must lie in [0, {q})")
    w = np.array(arr, dtype=np.int64)
    _butterfly(w, q)
    return w[..., _bit_reversal(n)].astype(np.uint8 if q <= 256 else np.int64)


def dense_generator(n: int) -> np.ndarray:
    """Explicit ``R F^{(x)n}`` matrix; only meant for small ``n``."""
    F = np.array([[1, 0], [1, 1]], dtype=np.int64)
    Fn = np.ones((1, 1), dtype=np.int64)
    for _ in range(n):
        Fn = np.kron(Fn, F)
    R = np.eye(1 << n, dtype=np.int64)[list(_bit_reversal(n))]
    return (R @ Fn) % 2


class IndexSet:
    """Immutable subset of ``range(N)`` backed by an integer bitmask."""

    __slots__ = ("_mask", "_N")

    def __init__(self, members: Iterable[int] = (), N: int = 0, *, mask: int | None = None):
        if N < 0:
            raise ValueError("N must be non-negative")
        if mask is None:
            mask = 0
            for i in members:
                i = int(i)
                if not 0 <= i < N:
                    raise ValueError(f"index {i} outside [0, {N})")
                mask |= 1 << i
        elif mask >> N:
            raise ValueError("mask has bits beyond N")
        self._mask = mask
        self._N = N

    @classmethod
    def from_bool(cls, flags) -> "IndexSet":
        flags = np.asarray(flags, dtype=bool)
        return cls(np.flatnonzero(flags), flags.size)

    @classmethod
    def full(cls, N: int) -> "IndexSet":
        return cls(N=N, mask=(1 << N) - 1)

    @property
    def N(self) -> int:
        return self._N

    @property
    def mask(self) -> int:
        return self._mask

    def members(self) -> np.ndarray:
        """Sorted member positions."""
        return np.array([i for i in range(self._N) if self._mask >> i & 1], dtype=np.int64)

    def to_bool(self) -> np.ndarray:
        out = np.zeros(self._N, dtype=bool)
        out[self.members()] = True
        return out

    def _other(self, other: "IndexSet") -> int:
        if not isinstance(other, IndexSet):
            return NotImplemented
        if other._N != self._N:
            raise ValueError(f"index sets over different lengths {self._N} and {other._N}")
        return other._mask

    def __or__(self, other):
        return IndexSet(N=self._N, mask=self._mask | self._other(other))

    def __and__(self, other):
        return IndexSet(N=self._N, mask=self._mask & self._other(other))

    def __sub__(self, other):
        return IndexSet(N=self._N, mask=self._mask & ~self._other(other))

    def __xor__(self, other):
        return IndexSet(N=self._N, mask=self._mask ^ self._other(other))

    def complement(self) -> "IndexSet":
        return IndexSet(N=self._N, mask=((1 << self._N) - 1) & ~self._mask)

    def __le__(self, other) -> bool:
        return self._mask & ~self._other(other) == 0

    def isdisjoint(self, other) -> bool:
        return self._mask & self._other(other) == 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexSet):
            return NotImplemented
        return self._N == other._N and self._mask == other._mask

    def __hash__(self) -> int:
        return hash((self._N, self._mask))

    def __len__(self) -> int:
        return bin(self._mask).count("1")

    def __contains__(self, i) -> bool:
        return 0 <= int(i) < self._N and bool(self._mask >> int(i) & 1)

    def __iter__(self):
        return iter(int(i) for i in self.members())

    def lowest(self, count: int) -> "IndexSet":
        """The ``count`` smallest members."""
        if count > len(self):
            raise ValueError(f"asked for {count} members of a set of size {len(self)}")
        return IndexSet(self.members()[:count], self._N)

    def __repr__(self) -> str:
        mem = self.members().tolist()
        shown = mem if len(mem) <= 12 else mem[:12] + ["..."]
        return f"IndexSet(N={self._N}, size={len(mem)}, {shown})"
