"""Torus lattice arithmetic and the translation-invariant clique-type algebra.

A clique type is the equivalence class of node sets under torus translation.
It is stored as its canonical representative: the lexicographically smallest
sorted offset list among all translates.  Canonical forms depend on the
lattice dimensions, so a type must be re-canonicalized before it is used on
a lattice of another size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from typing import Iterable

Node = tuple[int, int]

#: default side length of the offset window bounding the support of the prior
DEFAULT_WINDOW = 5


@dataclass(frozen=True)
class Dims:
    m: int
    n: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"lattice dimensions must be positive, got {self.m}x{self.n}")

    @property
    def size(self) -> int:
        return self.m * self.n

    def __iter__(self):
        return iter((self.m, self.n))


@dataclass(frozen=True)
class CliqueType:
    """Canonical offset set of a translation class of node sets."""

    offsets: tuple[Node, ...] = ()

    @property
    def order(self) -> int:
        return len(self.offsets)

    def sort_key(self):
        return (len(self.offsets), self.offsets)

    def __lt__(self, other: "CliqueType") -> bool:
        return self.sort_key() < other.sort_key()

    def to_list(self) -> list[list[int]]:
        return [[i, j] for i, j in self.offsets]

    def to_text(self) -> str:
        return json.dumps(self.to_list(), separators=(",", ":"))

    def __repr__(self) -> str:
        return f"CliqueType({self.to_text()})"


EMPTY = CliqueType(())
SINGLE = CliqueType(((0, 0),))


def translate(node: Node, shift: Node, dims: Dims) -> Node:
    return ((node[0] + shift[0]) % dims.m, (node[1] + shift[1]) % dims.n)


def translate_set(nodes: Iterable[Node], shift: Node, dims: Dims) -> frozenset[Node]:
    return frozenset(translate(v, shift, dims) for v in nodes)


def canonicalize(nodes: Iterable[Node], dims: Dims) -> CliqueType:
    m, n = dims.m, dims.n
    pts = {(i % m, j % n) for i, j in nodes}
    if not pts:
        return EMPTY
    # The minimum always contains (0, 0), so only translates moving a node
    # to the origin need to be compared.
    best = None
    for ai, aj in pts:
        cand = tuple(sorted(((i - ai) % m, (j - aj) % n) for i, j in pts))
        if best is None or cand < best:
            best = cand
    return CliqueType(best)


def clique_type(offsets: Iterable[Iterable[int]], dims: Dims) -> CliqueType:
    """Build a type from any (possibly signed, non-canonical) offset list."""
    return canonicalize([(int(a), int(b)) for a, b in offsets], dims)


def parse_type(text: str, dims: Dims) -> CliqueType:
    return clique_type(json.loads(text), dims)


def order(ct: CliqueType) -> int:
    return ct.order


@lru_cache(maxsize=None)
def stabilizer_size(ct: CliqueType, dims: Dims) -> int:
    """Number of shifts mapping the offset set onto itself."""
    if ct.order == 0:
        return dims.size
    pts = frozenset(ct.offsets)
    first = ct.offsets[0]
    count = 0
    for v in ct.offsets:
        shift = (v[0] - first[0], v[1] - first[1])
        if translate_set(pts, shift, dims) == pts:
            count += 1
    return count


def instances(ct: CliqueType, dims: Dims) -> list[frozenset[Node]]:
    if ct.order == 0:
        return [frozenset()]
    seen = []
    found = set()
    for t in range(dims.m):
        for u in range(dims.n):
            inst = translate_set(ct.offsets, (t, u), dims)
            if inst not in found:
                found.add(inst)
                seen.append(inst)
    return seen


@lru_cache(maxsize=None)
def sub_type_counts(ct: CliqueType, dims: Dims) -> dict[CliqueType, int]:
    """Map each type with an instance strictly inside ``ct`` to N(ct, type)."""
    counts: dict[CliqueType, int] = {}
    pts = ct.offsets
    for r in range(len(pts)):
        for sub in combinations(pts, r):
            key = canonicalize(sub, dims)
            counts[key] = counts.get(key, 0) + 1
    return counts


def subset_count(big: CliqueType, small: CliqueType, dims: Dims) -> int:
    return sub_type_counts(big, dims).get(small, 0)


def precedes(small: CliqueType, big: CliqueType, dims: Dims) -> bool:
    return subset_count(big, small, dims) > 0


def predecessors(ct: CliqueType, dims: Dims) -> list[CliqueType]:
    return sorted(sub_type_counts(ct, dims))


def is_dense(types: Iterable[CliqueType], dims: Dims) -> bool:
    members = set(types)
    for ct in members:
        for sub in sub_type_counts(ct, dims):
            if sub not in members:
                return False
    return True


def _circular_span(values: Iterable[int], period: int) -> int:
    pts = sorted(set(values))
    if len(pts) <= 1:
        return 0
    gaps = [b - a for a, b in zip(pts, pts[1:])]
    gaps.append(pts[0] + period - pts[-1])
    return period - max(gaps)


def extent(ct: CliqueType, dims: Dims) -> tuple[int, int]:
    """Height and width of the smallest box holding one instance."""
    if ct.order == 0:
        return (0, 0)
    return (
        _circular_span((i for i, _ in ct.offsets), dims.m) + 1,
        _circular_span((j for _, j in ct.offsets), dims.n) + 1,
    )


def in_window(ct: CliqueType, dims: Dims, window: int | None) -> bool:
    if window is None:
        return True
    h, w = extent(ct, dims)
    return h <= window and w <= window


def signed_offset(a: int, period: int) -> int:
    """Representative of ``a`` mod ``period`` closest to zero."""
    a %= period
    return a - period if a > period // 2 else a


def pair_distance(ct: CliqueType, dims: Dims) -> float:
    if ct.order != 2:
        raise ValueError(f"pair_distance needs an order-2 type, got order {ct.order}")
    (i0, j0), (i1, j1) = ct.offsets
    a = (i1 - i0) % dims.m
    b = (j1 - j0) % dims.n
    return math.hypot(min(a, dims.m - a), min(b, dims.n - b))


@lru_cache(maxsize=None)
def pair_types(dims: Dims, window: int | None = DEFAULT_WINDOW) -> tuple[CliqueType, ...]:
    """All order-2 types whose instances fit in the offset window."""
    found = set()
    for a in range(dims.m):
        for b in range(dims.n):
            if (a, b) == (0, 0):
                continue
            ct = canonicalize([(0, 0), (a, b)], dims)
            if ct.order == 2 and in_window(ct, dims, window):
                found.add(ct)
    return tuple(sorted(found))


def layer(types: Iterable[CliqueType], k: int) -> set[CliqueType]:
    return {ct for ct in types if ct.order == k}


def upsilon(types: Iterable[CliqueType], k: int, dims: Dims,
            window: int | None = DEFAULT_WINDOW) -> set[CliqueType]:
    """Order-k types all of whose order-(k-1) predecessors are in the set.

    Only meaningful for ``k >= 3``; members of ``types`` are included.
    """
    if k < 3:
        raise ValueError("upsilon is defined for k >= 3")
    members = set(types)
    lower = layer(members, k - 1)
    steps = set()
    for p in layer(members, 2):
        (i0, j0), (i1, j1) = p.offsets
        steps.add((i1 - i0, j1 - j0))
        steps.add((i0 - i1, j0 - j1))
    out = set()
    for base in lower:
        pts = set(base.offsets)
        for oi, oj in base.offsets:
            for di, dj in steps:
                new = ((oi + di) % dims.m, (oj + dj) % dims.n)
                if new in pts:
                    continue
                cand = canonicalize(pts | {new}, dims)
                if cand in out or cand.order != k or not in_window(cand, dims, window):
                    continue
                subs = sub_type_counts(cand, dims)
                if all(s in lower for s in subs if s.order == k - 1):
                    out.add(cand)
    return out


def extensions(types: Iterable[CliqueType], k: int, dims: Dims,
               window: int | None = DEFAULT_WINDOW) -> set[CliqueType]:
    """Order-k types that could be switched on without breaking denseness."""
    members = set(types)
    return upsilon(members, k, dims, window) - members


def dag_edges(types: Iterable[CliqueType], dims: Dims) -> list[tuple[CliqueType, CliqueType]]:
    """Edges (lower, upper) of the covering DAG of a dense set."""
    members = sorted(set(types))
    edges = []
    for big in members:
        for small in sub_type_counts(big, dims):
            if small.order == big.order - 1 and small in members:
                edges.append((small, big))
    return sorted(edges, key=lambda e: (e[1].sort_key(), e[0].sort_key()))


def named_types(dims: Dims) -> dict[str, CliqueType]:
    """Small catalogue of commonly used types (row offset first, down is +)."""
    mk = lambda offs: clique_type(offs, dims)  # noqa: E731
    return {
        "empty": EMPTY,
        "single": SINGLE,
        "vpair": mk([(0, 0), (1, 0)]),
        "hpair": mk([(0, 0), (0, 1)]),
        "diag": mk([(0, 0), (1, 1)]),
        "antidiag": mk([(0, 1), (1, 0)]),
        "triple_nw": mk([(0, 0), (0, 1), (1, 0)]),
        "triple_ne": mk([(0, 0), (0, 1), (1, 1)]),
        "triple_sw": mk([(0, 0), (1, 0), (1, 1)]),
        "triple_se": mk([(0, 1), (1, 0), (1, 1)]),
        "square": mk([(0, 0), (0, 1), (1, 0), (1, 1)]),
    }
