"""Pattern graphs on the block labels, exact vertex cover, and the core map.

A pattern graph lives on labels ``0..k-1`` and stores its edge set as a
triangular bitmask.  ``core_of`` realises the three-stage construction
(lex-first minimum cover ``W``, then two lex-first maximal sets matched into
``W``) and also computes the optional-edge set ``Estar`` whose subsets, added
to the core, make up the whole fibre of the core map.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import ceil, comb
from typing import Iterable, Iterator

MAX_LABELS = 16
ALL_HD_GUARD = 7  # all_Hd enumerates every graph on k labels only up to this k
FIBER_GUARD = 6


def _guard(default: int) -> int:
    return max(default, int(os.environ.get("SA_LAB_GUARD", default)))


def pair_index(i: int, j: int, k: int) -> int:
    if i > j:
        i, j = j, i
    return i * k - i * (i + 1) // 2 + (j - i - 1)


@lru_cache(maxsize=None)
def _pairs(k: int) -> tuple[tuple[int, int], ...]:
    return tuple(combinations(range(k), 2))


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class PatternGraph:
    k: int
    mask: int = 0

    def __post_init__(self):
        if not 0 <= self.k <= MAX_LABELS:
            raise ValueError(f"pattern graphs support at most {MAX_LABELS} labels")
        if self.mask >> comb(self.k, 2):
            raise ValueError("edge mask has bits beyond the label pairs")

    @classmethod
    def from_edges(cls, k: int, edges: Iterable[tuple[int, int]]) -> "PatternGraph":
        m = 0
        for i, j in edges:
            if i == j or not (0 <= i < k and 0 <= j < k):
                raise ValueError(f"bad pattern edge {(i, j)}")
            m |= 1 << pair_index(i, j, k)
        return cls(k, m)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        pairs = _pairs(self.k)
        return tuple(pairs[b] for b in _bits(self.mask))

    @property
    def num_edges(self) -> int:
        return self.mask.bit_count()

    @property
    def adj(self) -> tuple[int, ...]:
        return _adjacency(self.k, self.mask)

    def has_edge(self, i: int, j: int) -> bool:
        return bool((self.mask >> pair_index(i, j, self.k)) & 1)

    def support(self) -> frozenset[int]:
        """V(E(H)): labels touched by some edge."""
        return frozenset(v for e in self.edges for v in e)

    def with_edges(self, edges: Iterable[tuple[int, int]]) -> "PatternGraph":
        m = self.mask
        for i, j in edges:
            m |= 1 << pair_index(i, j, self.k)
        return PatternGraph(self.k, m)

    def without_edges(self, edges: Iterable[tuple[int, int]]) -> "PatternGraph":
        m = self.mask
        for i, j in edges:
            m &= ~(1 << pair_index(i, j, self.k))
        return PatternGraph(self.k, m)

    def induced(self, labels: Iterable[int]) -> "PatternGraph":
        keep = set(labels)
        return PatternGraph.from_edges(self.k, [e for e in self.edges if e[0] in keep and e[1] in keep])

    def issubgraph(self, other: "PatternGraph") -> bool:
        return self.k == other.k and self.mask & ~other.mask == 0

    def to_json(self) -> dict:
        return {"k": self.k, "edges": [list(e) for e in self.edges]}

    def __repr__(self):
        return f"PatternGraph(k={self.k}, edges={list(self.edges)})"


@lru_cache(maxsize=1 << 16)
def _adjacency(k: int, mask: int) -> tuple[int, ...]:
    adj = [0] * k
    pairs = _pairs(k)
    for b in _bits(mask):
        i, j = pairs[b]
        adj[i] |= 1 << j
        adj[j] |= 1 << i
    return tuple(adj)


def edge_mask(k: int, edges: Iterable[tuple[int, int]]) -> int:
    return PatternGraph.from_edges(k, edges).mask


# vertex cover ---------------------------------------------------------------

@lru_cache(maxsize=1 << 18)
def _vc(adj: tuple[int, ...], alive: int) -> int:
    # pick the live vertex of largest live degree
    best, bdeg = -1, 0
    for v in _bits(alive):
        d = (adj[v] & alive).bit_count()
        if d > bdeg:
            best, bdeg = v, d
    if bdeg == 0:
        return 0
    if bdeg <= 2:
        # paths and cycles: solve by brute force on the remaining component structure
        return _vc_low_degree(adj, alive)
    v = best
    take = 1 + _vc(adj, alive & ~(1 << v))
    nb = adj[v] & alive
    if nb.bit_count() >= take:
        return take
    skip = nb.bit_count() + _vc(adj, alive & ~(1 << v) & ~nb)
    return min(take, skip)


def _vc_low_degree(adj, alive) -> int:
    # max degree <= 2: components are paths or cycles
    seen = 0
    total = 0
    for s in _bits(alive):
        if seen >> s & 1:
            continue
        comp = 0
        stack = [s]
        while stack:
            u = stack.pop()
            if comp >> u & 1:
                continue
            comp |= 1 << u
            stack.extend(_bits(adj[u] & alive & ~comp))
        seen |= comp
        size = comp.bit_count()
        edges = sum((adj[u] & alive).bit_count() for u in _bits(comp)) // 2
        if edges == 0:
            continue
        total += size // 2 if edges == size - 1 else (size + 1) // 2
    return total


def _vc_constrained(adj, k: int, forced_in: int, forced_out: int) -> float:
    """Minimum cover containing forced_in and avoiding forced_out (inf if none)."""
    for v in _bits(forced_out):
        if adj[v] & forced_out:
            return float("inf")
    need = forced_in
    for v in _bits(forced_out):
        need |= adj[v]
    if need & forced_out:
        return float("inf")
    alive = ((1 << k) - 1) & ~need & ~forced_out
    return need.bit_count() + _vc(adj, alive)


def vc_number(H: PatternGraph) -> int:
    return _vc(H.adj, (1 << H.k) - 1)


def lex_first_min_vc(H: PatternGraph) -> frozenset[int]:
    """Lexicographically first minimum vertex cover.

    Ascending greedy: keep label v iff some minimum cover consistent with the
    decisions so far contains it.
    """
    adj, k = H.adj, H.k
    target = vc_number(H)
    inside = outside = 0
    for v in range(k):
        if _vc_constrained(adj, k, inside | (1 << v), outside) == target:
            inside |= 1 << v
        else:
            outside |= 1 << v
    assert inside.bit_count() == target
    return frozenset(_bits(inside))


def is_vertex_cover(H: PatternGraph, C: Iterable[int]) -> bool:
    C = set(C)
    return all(i in C or j in C for i, j in H.edges)


def lex_less(A: Iterable[int], B: Iterable[int]) -> bool:
    """A precedes B iff the smallest element of their symmetric difference lies in A."""
    diff = set(A) ^ set(B)
    return bool(diff) and min(diff) in set(A)


# matchings ------------------------------------------------------------------

def bipartite_matching(adj, left: Iterable[int], right: int) -> dict[int, int]:
    """Maximum matching from ``left`` labels into the label mask ``right`` (augmenting paths)."""
    match_r: dict[int, int] = {}

    def augment(u, visited):
        for w in _bits(adj[u] & right):
            if w in visited:
                continue
            visited.add(w)
            if w not in match_r or augment(match_r[w], visited):
                match_r[w] = u
                return True
        return False

    for u in left:
        augment(u, set())
    return {u: w for w, u in match_r.items()}


def _lex_first_matchable(adj, candidates: list[int], W: int) -> tuple[frozenset[int], dict[int, int]]:
    chosen: list[int] = []
    match: dict[int, int] = {}
    for u in candidates:
        trial = bipartite_matching(adj, chosen + [u], W)
        if len(trial) == len(chosen) + 1:
            chosen.append(u)
            match = trial
    return frozenset(chosen), match


def maximal_matching(H: PatternGraph) -> list[tuple[int, int]]:
    used = 0
    out = []
    for i, j in H.edges:
        if not (used >> i & 1) and not (used >> j & 1):
            out.append((i, j))
            used |= (1 << i) | (1 << j)
    return out


# the core map -----------------------------------------------------------------

@dataclass(frozen=True)
class CoreInfo:
    F: PatternGraph
    W: frozenset[int]
    U1: frozenset[int]
    U2: frozenset[int]
    M1: dict
    M2: dict
    Estar: frozenset[tuple[int, int]]

    def to_json(self) -> dict:
        return {
            "F": self.F.to_json(),
            "W": sorted(self.W), "U1": sorted(self.U1), "U2": sorted(self.U2),
            "M1": sorted([u, w] for u, w in self.M1.items()),
            "M2": sorted([u, w] for u, w in self.M2.items()),
            "Estar": sorted(list(e) for e in self.Estar),
        }


def _a_set(adj, W: frozenset[int], U: list[int]) -> frozenset[int]:
    """Labels w of W such that U still matches completely into W minus w."""
    wmask = sum(1 << w for w in W)
    return frozenset(w for w in W
                     if len(bipartite_matching(adj, U, wmask & ~(1 << w))) == len(U))


def _estar_from(F: PatternGraph, W, U1, U2) -> frozenset[tuple[int, int]]:
    adj = F.adj
    used = set(W) | set(U1) | set(U2)
    out = set()
    for v in range(F.k):
        if v in used:
            continue
        a1 = _a_set(adj, W, sorted(u for u in U1 if u < v))
        a2 = _a_set(adj, W, sorted(u for u in U2 if u < v))
        for w in W:
            if w not in a1 and w not in a2:
                out.add((min(v, w), max(v, w)))
    return frozenset(out)


def _core_parts(H: PatternGraph):
    adj, k = H.adj, H.k
    W = lex_first_min_vc(H)
    wmask = sum(1 << w for w in W)
    rest = [v for v in range(k) if v not in W]
    U1, M1 = _lex_first_matchable(adj, rest, wmask)
    rest2 = [v for v in rest if v not in U1]
    U2, M2 = _lex_first_matchable(adj, rest2, wmask)
    F = H.induced(W | U1 | U2)
    return F, W, U1, U2, M1, M2


@lru_cache(maxsize=1 << 16)
def _core_cached(k: int, mask: int) -> CoreInfo:
    F, W, U1, U2, M1, M2 = _core_parts(PatternGraph(k, mask))
    return CoreInfo(F, W, U1, U2, M1, M2, _estar_from(F, W, U1, U2))


def core_of(H: PatternGraph) -> CoreInfo:
    return _core_cached(H.k, H.mask)


def is_core(F: PatternGraph) -> bool:
    return core_of(F).F == F


def estar_explicit(F: PatternGraph) -> frozenset[tuple[int, int]]:
    info = core_of(F)
    if info.F != F:
        raise ValueError("graph is not a fixed point of the core map")
    return info.Estar


def estar_implicit(F: PatternGraph) -> frozenset[tuple[int, int]]:
    """Union of H minus F over every supergraph H of F whose core is F."""
    k = F.k
    if k > _guard(FIBER_GUARD):
        raise ValueError(f"k={k} exceeds the fibre-enumeration guard")
    if core_of(F).F != F:
        raise ValueError("graph is not a fixed point of the core map")
    free = [b for b in range(comb(k, 2)) if not (F.mask >> b) & 1]
    out = 0
    for r in range(1 << len(free)):
        extra = 0
        for idx, b in enumerate(free):
            if r >> idx & 1:
                extra |= 1 << b
        H = PatternGraph(k, F.mask | extra)
        if core_of(H).F == F:
            out |= extra
    pairs = _pairs(k)
    return frozenset(pairs[b] for b in _bits(out))


def fiber(F: PatternGraph, estar=None) -> Iterator[PatternGraph]:
    """All graphs F plus a subset of E*_F."""
    estar = sorted(estar_explicit(F) if estar is None else estar)
    for r in range(1 << len(estar)):
        yield F.with_edges(e for i, e in enumerate(estar) if r >> i & 1)


def in_boundary(H: PatternGraph, e: tuple[int, int], i: int) -> bool:
    return vc_number(H) == i and vc_number(H.with_edges([e])) == i + 1


# enumeration ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _hd_masks(k: int, d: int) -> tuple[int, ...]:
    """All edge masks on k labels with vertex cover at most d, sorted."""
    d = min(d, k)
    out = set()
    for W in combinations(range(k), d):
        allowed = [pair_index(i, j, k) for i, j in _pairs(k) if i in W or j in W]
        for r in range(1 << len(allowed)):
            m = 0
            for idx, b in enumerate(allowed):
                if r >> idx & 1:
                    m |= 1 << b
            out.add(m)
    return tuple(sorted(out))


@lru_cache(maxsize=None)
def _core_masks(k: int, d: int) -> tuple[int, ...]:
    out = []
    for m in _hd_masks(k, d):
        H = PatternGraph(k, m)
        if len(H.support()) <= 3 * d and core_of(H).F == H:
            out.append(m)
    return tuple(out)


def enumerate_patterns(k: int, d: int, mode: str = "all_Hd") -> list[PatternGraph]:
    """The family of graphs with cover number at most d, or its core fixed points.

    Graphs are generated as subsets of the pairs touching a d-set of labels,
    which reaches every graph with a cover of size at most d exactly once after
    deduplication; output is sorted by edge mask.
    """
    if mode not in ("all_Hd", "cores_only"):
        raise ValueError(f"unknown enumeration mode {mode!r}")
    if d < 0:
        raise ValueError("d must be nonnegative")
    width = comb(min(d, k), 2) + min(d, k) * (k - min(d, k))
    if k > MAX_LABELS or comb(k, min(d, k)) * (1 << width) > (1 << 22) * max(1, _guard(1)):
        raise ValueError(f"enumeration of k={k}, d={d} exceeds the guard (raise SA_LAB_GUARD)")
    masks = _hd_masks(k, d) if mode == "all_Hd" else _core_masks(k, d)
    return [PatternGraph(k, m) for m in masks]


def all_graphs(k: int) -> Iterator[PatternGraph]:
    if k > _guard(ALL_HD_GUARD):
        raise ValueError(f"k={k} exceeds the exhaustive-enumeration guard")
    for m in range(1 << comb(k, 2)):
        yield PatternGraph(k, m)


# stars ----------------------------------------------------------------------

def star(k: int, center: int, cutoff: int | None = None, order: list[int] | None = None):
    """Edges of the star with the given centre and leaves among the first ``cutoff`` labels.

    Positions are 1-based into ``order`` (default identity), so ``cutoff=None``
    gives the full star on all k labels.
    """
    order = list(range(k)) if order is None else order
    cutoff = k if cutoff is None else cutoff
    c = order[center - 1]
    return {(min(c, order[j - 1]), max(c, order[j - 1])) for j in range(1, cutoff + 1) if j != center}


def star_union(k: int, centers: Iterable[int], order: list[int] | None = None):
    out = set()
    for i in centers:
        out |= star(k, i, None, order)
    return out


# counting audit -------------------------------------------------------------

@dataclass(frozen=True)
class AuditRow:
    b: int
    c: int
    count: int
    log2_bound: float
    passed: bool

    @property
    def bound(self) -> float:
        return 2.0 ** self.log2_bound


def counting_audit(k: int) -> list[AuditRow]:
    """Exact counts of graphs with cover number b and support at most c against the counting bound.

    The comparison count <= k^c * 2^(b(c - (b+1)/2)) is done in integers.
    """
    if k > 5:
        raise ValueError("counting audit is exhaustive and limited to k <= 5")
    from math import log2

    table: dict[tuple[int, int], int] = {}
    for H in all_graphs(k):
        table[(vc_number(H), len(H.support()))] = table.get((vc_number(H), len(H.support())), 0) + 1
    rows = []
    for b in range(k + 1):
        for c in range(k + 1):
            count = sum(v for (bb, cc), v in table.items() if bb == b and cc <= c)
            expo = b * c - b * (b + 1) // 2
            if expo >= 0:
                ok = count <= k ** c * 2 ** expo
            else:
                ok = count * 2 ** (-expo) <= k ** c
            rows.append(AuditRow(b, c, count, c * log2(k) + expo, ok))
    return rows


def write_audit_csv(rows: list[AuditRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["b", "c", "count", "bound"])
        for r in rows:
            w.writerow([r.b, r.c, r.count, repr(r.bound)])


def boundary_lower_matching_bound(H: PatternGraph) -> bool:
    return len(maximal_matching(H)) >= ceil(vc_number(H) / 2)
