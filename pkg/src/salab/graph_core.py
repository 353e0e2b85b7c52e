"""k-partite graphs, the block random model, tuples and rectangles.

Vertices are global integers ``0 .. k*n - 1`` and vertex ``v`` lives in block
``v // n``.  Adjacency is kept as one Python int bitset per vertex.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import ceil, prod
from typing import Iterable, Sequence

import numpy as np

from .rational import fmt_q, parse_q

_TWO64 = 1 << 64


def block_of(v: int, n: int) -> int:
    return v // n


@dataclass(frozen=True, eq=False)
class BlockGraph:
    k: int
    n: int
    adj: tuple[int, ...]
    p_meta: Fraction | None = None

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be positive")
        if len(self.adj) != self.k * self.n:
            raise ValueError("adjacency has wrong length")
        for v, row in enumerate(self.adj):
            if row & self.block_mask(v // self.n):
                raise ValueError(f"vertex {v} has a neighbour inside its own block")
            nb = row
            while nb:
                low = nb & -nb
                u = low.bit_length() - 1
                if not (self.adj[u] >> v) & 1:
                    raise ValueError("adjacency is not symmetric")
                nb ^= low

    # construction ---------------------------------------------------------

    @classmethod
    def from_edges(cls, k: int, n: int, edges: Iterable[Sequence[int]], p=None) -> "BlockGraph":
        rows = [0] * (k * n)
        for u, v in edges:
            if not (0 <= u < k * n and 0 <= v < k * n):
                raise ValueError(f"vertex out of range in edge {(u, v)}")
            if u // n == v // n:
                raise ValueError(f"edge {(u, v)} lies inside block {u // n}")
            rows[u] |= 1 << v
            rows[v] |= 1 << u
        return cls(k, n, tuple(rows), None if p is None else Fraction(p))

    @classmethod
    def complete(cls, k: int, n: int, p=None) -> "BlockGraph":
        full = (1 << (k * n)) - 1
        rows = []
        for v in range(k * n):
            b = v // n
            rows.append(full & ~(((1 << n) - 1) << (b * n)))
        return cls(k, n, tuple(rows), None if p is None else Fraction(p))

    @classmethod
    def empty(cls, k: int, n: int, p=None) -> "BlockGraph":
        return cls(k, n, (0,) * (k * n), None if p is None else Fraction(p))

    # basic queries --------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return self.k * self.n

    def block(self, i: int) -> range:
        return range(i * self.n, (i + 1) * self.n)

    def block_mask(self, i: int) -> int:
        return ((1 << self.n) - 1) << (i * self.n)

    def adjacent(self, u: int, v: int) -> bool:
        return bool((self.adj[int(u)] >> int(v)) & 1)

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for u, row in enumerate(self.adj):
            for v in iter_bits(row >> (u + 1)):
                out.append((u, u + 1 + v))
        return out

    def edge_count(self) -> int:
        return sum(row.bit_count() for row in self.adj) // 2

    def cross_pairs(self) -> list[tuple[int, int]]:
        """All cross-block vertex pairs ``(u, v)`` with ``u < v`` in lex order."""
        N, n = self.num_vertices, self.n
        return [(u, v) for u in range(N) for v in range((u // n + 1) * n, N)]

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (uint8)."""
        N = self.num_vertices
        m = np.zeros((N, N), dtype=np.uint8)
        for u, v in self.edges():
            m[u, v] = m[v, u] = 1
        return m

    def __eq__(self, other):
        return (isinstance(other, BlockGraph) and (self.k, self.n, self.adj)
                == (other.k, other.n, other.adj))

    def __hash__(self):
        return hash((self.k, self.n, self.adj))

    # serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "p": None if self.p_meta is None else fmt_q(self.p_meta),
            "edges": [list(e) for e in self.edges()],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockGraph":
        k, n = int(obj["k"]), int(obj["n"])
        p = obj.get("p")
        edges = [tuple(e) for e in obj["edges"]]
        for u, v in edges:
            if u >= v:
                raise ValueError(f"edge {[u, v]} not written with u < v")
        if edges != sorted(edges):
            raise ValueError("edge list is not sorted")
        return cls.from_edges(k, n, edges, None if p is None else parse_q(p))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BlockGraph":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(vertices: Iterable[int]) -> int:
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


def sample_block_model(n: int, k: int, p, seed: int) -> BlockGraph:
    """Sample G(n, k, p).

    Each cross-block pair, in lexicographic order, consumes one uniform 64-bit
    draw from a PCG64 stream and is present iff the draw is below
    ``ceil(p * 2**64)``.
    """
    if n < 1 or k < 1:
        raise ValueError("n and k must be positive")
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"edge probability {p} outside [0, 1]")
    g = BlockGraph.empty(k, n)
    pairs = g.cross_pairs()
    rng = np.random.Generator(np.random.PCG64(seed % _TWO64))
    draws = rng.integers(0, _TWO64, size=len(pairs), dtype=np.uint64, endpoint=False)
    cut = ceil(p * _TWO64)
    if cut >= _TWO64:
        present = np.ones(len(pairs), dtype=bool)
    else:
        present = draws < np.uint64(cut)
    chosen = [pr for pr, keep in zip(pairs, present) if keep]
    return BlockGraph.from_edges(k, n, chosen, p)


# tuples -------------------------------------------------------------------

def check_tuple(t: Sequence[int], n: int) -> None:
    blocks = [v // n for v in t]
    if len(set(blocks)) != len(blocks):
        raise ValueError(f"tuple {tuple(t)} repeats a block")


def tuple_blocks(t: Sequence[int], n: int) -> tuple[int, ...]:
    return tuple(v // n for v in t)


def common_neighborhood(G: BlockGraph, t: Sequence[int], target: Iterable[int]) -> frozenset[int]:
    if len(t) == 0:
        raise ValueError("common neighbourhood of an empty tuple is undefined")
    m = mask_of(target)
    for u in t:
        m &= G.adj[u]
    return frozenset(iter_bits(m))


def common_neighborhood_mask(G: BlockGraph, t: Sequence[int], target_mask: int) -> int:
    m = target_mask
    for u in t:
        m &= G.adj[u]
    return m


def is_clique(G: BlockGraph, t: Sequence[int]) -> bool:
    for a in range(len(t)):
        row = G.adj[t[a]]
        for b in range(a + 1, len(t)):
            if not (row >> t[b]) & 1:
                return False
    return True


# rectangles ---------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """Product of per-block vertex sets over a declared, sorted block set."""

    n: int
    sides: tuple[tuple[int, frozenset[int]], ...] = field(default=())

    def __post_init__(self):
        blocks = [b for b, _ in self.sides]
        if blocks != sorted(set(blocks)):
            raise ValueError("rectangle blocks must be distinct and sorted")
        for b, side in self.sides:
            for v in side:
                if v // self.n != b:
                    raise ValueError(f"vertex {v} is not in block {b}")

    @classmethod
    def of(cls, n: int, sides: dict[int, Iterable[int]]) -> "Rectangle":
        return cls(n, tuple((b, frozenset(sides[b])) for b in sorted(sides)))

    @classmethod
    def full(cls, k: int, n: int) -> "Rectangle":
        return cls(n, tuple((i, frozenset(range(i * n, (i + 1) * n))) for i in range(k)))

    @property
    def blocks(self) -> tuple[int, ...]:
        return tuple(b for b, _ in self.sides)

    def side(self, i: int) -> frozenset[int]:
        for b, s in self.sides:
            if b == i:
                return s
        raise KeyError(f"block {i} not in rectangle")

    def side_list(self) -> list[list[int]]:
        return [sorted(s) for _, s in self.sides]

    def cardinality(self) -> int:
        return prod(len(s) for _, s in self.sides)

    def is_empty(self) -> bool:
        return any(len(s) == 0 for _, s in self.sides)

    def project(self, S: Iterable[int]) -> "Rectangle":
        S = set(S)
        missing = S - set(self.blocks)
        if missing:
            raise ValueError(f"blocks {sorted(missing)} not in rectangle")
        return Rectangle(self.n, tuple((b, s) for b, s in self.sides if b in S))

    def replace(self, i: int, side: Iterable[int]) -> "Rectangle":
        side = frozenset(side)
        return Rectangle(self.n, tuple((b, side if b == i else s) for b, s in self.sides))

    def contains(self, t: Sequence[int]) -> bool:
        if len(t) != len(self.sides):
            return False
        return all(v in s for v, (_, s) in zip(t, self.sides))

    def tuples(self):
        from itertools import product
        return product(*(sorted(s) for _, s in self.sides))

    def to_json(self) -> dict:
        return {"n": self.n, "sides": {str(b): sorted(s) for b, s in self.sides}}

    @classmethod
    def from_json(cls, obj: dict) -> "Rectangle":
        return cls.of(int(obj["n"]), {int(b): v for b, v in obj["sides"].items()})
