"""Subsets of {1, ..., d} encoded as bit masks and downward closed families."""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Iterable, Iterator

from .errors import CapabilityError, InputError

MAX_DIM = 62
MAX_ENUM_DIM = 24


@dataclass(frozen=True, order=False)
class SubsetMask:
    """A subset u of {1, ..., d}; bit j-1 is set iff j is in u."""

    bits: int
    d: int

    def __post_init__(self):
        if not 1 <= self.d <= MAX_DIM:
            raise InputError(f"dimension must be in [1, {MAX_DIM}], got {self.d}")
        if self.bits < 0 or self.bits >> self.d:
            raise InputError(f"mask {self.bits:#x} has bits outside dimension {self.d}")

    @classmethod
    def from_indices(cls, indices: Iterable[int], d: int) -> "SubsetMask":
        """Build from 1-based coordinate indices."""
        bits = 0
        for j in indices:
            if not 1 <= j <= d:
                raise InputError(f"index {j} outside 1..{d}")
            bits |= 1 << (j - 1)
        return cls(bits, d)

    @classmethod
    def empty(cls, d: int) -> "SubsetMask":
        return cls(0, d)

    @classmethod
    def full(cls, d: int) -> "SubsetMask":
        return cls((1 << d) - 1, d)

    @property
    def card(self) -> int:
        return self.bits.bit_count()

    @property
    def indices(self) -> tuple[int, ...]:
        """0-based coordinate positions in increasing order."""
        return tuple(j for j in range(self.d) if self.bits >> j & 1)

    def __len__(self) -> int:
        return self.card

    def __contains__(self, j: int) -> bool:
        # 1-based, matching the textual notation
        return 1 <= j <= self.d and bool(self.bits >> (j - 1) & 1)

    def issubset(self, other: "SubsetMask") -> bool:
        return self.bits & ~other.bits == 0

    def subsets(self) -> Iterator["SubsetMask"]:
        """All v with v a subset of u, each exactly once, ascending mask value."""
        return (SubsetMask(b, self.d) for b in iter_submasks(self.bits))

    def sort_key(self) -> tuple[int, int]:
        return (self.card, self.bits)

    def __str__(self) -> str:
        return format_subset(self)


def iter_submasks(bits: int) -> Iterator[int]:
    """Enumerate the 2**popcount(bits) submasks of ``bits`` in increasing order."""
    sub = 0
    while True:
        yield sub
        if sub == bits:
            return
        sub = (sub - bits) & bits


def format_subset(u: SubsetMask) -> str:
    return "{" + ",".join(str(j + 1) for j in u.indices) + "}"


_SUBSET_RE = re.compile(r"^\s*\{\s*([0-9,\s]*)\}\s*$")


def parse_subset(text: str, d: int) -> SubsetMask:
    """Parse the 1-based notation ``"{1,3}"``; ``"{}"`` is the empty set."""
    m = _SUBSET_RE.match(text)
    if m is None:
        raise InputError(f"cannot parse subset {text!r}; expected e.g. '{{1,3}}'")
    body = m.group(1).strip()
    if not body:
        return SubsetMask.empty(d)
    try:
        idx = [int(tok) for tok in body.split(",")]
    except ValueError:
        raise InputError(f"cannot parse subset {text!r}") from None
    return SubsetMask.from_indices(idx, d)


def _check_masks(masks: Iterable[SubsetMask], d: int) -> list[SubsetMask]:
    out = []
    for u in masks:
        if u.d != d or u.bits >> d:
            raise InputError(f"mask {u} is not valid for dimension {d}")
        out.append(u)
    return out


def is_downward_closed(masks: Iterable[SubsetMask], d: int) -> bool:
    """True iff every subset of every member is itself a member.

    Removing one element at a time suffices: by induction all subsets
    are reached.
    """
    members = {u.bits for u in _check_masks(masks, d)}
    for bits in members:
        rest = bits
        while rest:
            low = rest & -rest
            if bits ^ low not in members:
                return False
            rest ^= low
    return True


@dataclass(frozen=True)
class DownwardClosedFamily:
    """An explicit downward closed set of subsets, in canonical order."""

    d: int
    members: tuple[SubsetMask, ...]

    def __post_init__(self):
        members = sorted(set(_check_masks(self.members, self.d)), key=SubsetMask.sort_key)
        object.__setattr__(self, "members", tuple(members))
        if not is_downward_closed(members, self.d):
            raise InputError("family is not downward closed")

    @classmethod
    def from_masks(cls, masks: Iterable[SubsetMask], d: int) -> "DownwardClosedFamily":
        return cls(d, tuple(masks))

    @classmethod
    def closure(cls, masks: Iterable[SubsetMask], d: int) -> "DownwardClosedFamily":
        """Smallest downward closed family containing ``masks``."""
        bits = set()
        for u in _check_masks(masks, d):
            bits.update(iter_submasks(u.bits))
        return cls(d, tuple(SubsetMask(b, d) for b in bits))

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self) -> Iterator[SubsetMask]:
        return iter(self.members)

    def __contains__(self, u: SubsetMask) -> bool:
        return u in self._lookup

    @property
    def _lookup(self) -> frozenset:
        # cached lazily; frozen dataclass so go through __dict__
        cached = self.__dict__.get("_lookup_cache")
        if cached is None:
            cached = frozenset(self.members)
            object.__setattr__(self, "_lookup_cache", cached)
        return cached

    @property
    def max_order(self) -> int:
        return max((u.card for u in self.members), default=-1)

    def index(self, u: SubsetMask) -> int:
        return self.members.index(u)


def order_family(d: int, n: int) -> DownwardClosedFamily:
    """All subsets of {1..d} with at most ``n`` elements."""
    if not 1 <= d <= MAX_DIM:
        raise InputError(f"dimension must be in [1, {MAX_DIM}], got {d}")
    if not 0 <= n <= d:
        raise InputError(f"order n={n} must satisfy 0 <= n <= d={d}")
    total = sum(comb(d, k) for k in range(n + 1))
    if total > 10_000_000:
        raise CapabilityError(f"order family with {total} members is too large")
    members = []
    for k in range(n + 1):
        for idx in combinations(range(d), k):
            members.append(SubsetMask(sum(1 << j for j in idx), d))
    return DownwardClosedFamily(d, tuple(members))


def check_enumerable(d: int) -> None:
    if d > MAX_ENUM_DIM:
        raise CapabilityError(
            f"enumerating all 2^{d} subsets is capped at d={MAX_ENUM_DIM}"
        )


def complement_members(family: DownwardClosedFamily) -> list[SubsetMask]:
    """All subsets of {1..d} outside ``family``, in canonical order."""
    d = family.d
    check_enumerable(d)
    inside = {u.bits for u in family}
    out = [SubsetMask(b, d) for b in range(1 << d) if b not in inside]
    out.sort(key=SubsetMask.sort_key)
    return out
