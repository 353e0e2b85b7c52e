"""Characters, character sums over rectangles, the truncated measure and its split.

Two arithmetic modes.  With a rational ``p = a/b`` every character is an
integer multiple of ``1/a`` (present edge ``(b-a)/a``, absent ``-a/a``), so
sums are accumulated as Python integers and divided once at the end.  With a
float ``p`` everything is binary64 and reductions across patterns use
``math.fsum``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .graph_core import BlockGraph, Rectangle
from .pattern_cores import (PatternGraph, core_of, enumerate_patterns, in_boundary,
                            lex_first_min_vc, star, star_union)

NAIVE_GUARD = 10**7
FLOAT_EXACT = 2**53  # integers below this survive float64 sums exactly

# Callbacks run after every mu_d evaluation: f(G, Q, params, value).
OBSERVERS: list[Callable] = []


@dataclass(frozen=True)
class MeasureParams:
    d: int
    p: Fraction | float
    D: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("d must be nonnegative")
        if not 0 < self.p <= 1:
            raise ValueError("characters need 0 < p <= 1")

    @classmethod
    def from_D(cls, n: int, D: float, eta: float) -> "MeasureParams":
        """p = n^(-2/D) as a float and d = floor(eta * D)."""
        return cls(int(math.floor(eta * D)), float(n) ** (-2.0 / D), D, eta)

    @property
    def exact(self) -> bool:
        return isinstance(self.p, (Fraction, int))

    @property
    def mode(self) -> str:
        return "exact" if self.exact else "binary64"


def _is_exact(p) -> bool:
    return isinstance(p, (Fraction, int))


def chi(G: BlockGraph, E: Iterable[tuple[int, int]], p):
    """Product over vertex pairs of (1-p)/p (edge present) or -1 (absent)."""
    p = Fraction(p) if _is_exact(p) else float(p)
    up = (1 - p) / p
    out = Fraction(1) if _is_exact(p) else 1.0
    for u, v in E:
        if u // G.n == v // G.n:
            raise ValueError(f"pair {(u, v)} lies inside a block")
        out *= up if G.adjacent(u, v) else -1
    return out


def map_pattern(H: PatternGraph, t) -> set[tuple[int, int]]:
    """Edge set H(t).  ``t`` maps block labels to vertices (a dict, or a full tuple)."""
    lookup = t if isinstance(t, Mapping) else dict(enumerate(t))
    out = set()
    for i, j in H.edges:
        if i not in lookup or j not in lookup:
            raise ValueError(f"tuple has no vertex in block {i if i not in lookup else j}")
        u, v = lookup[i], lookup[j]
        out.add((min(u, v), max(u, v)))
    return out


def _components(k: int, edges: Sequence[tuple[int, int]]) -> list[set[int]]:
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        parent[find(i)] = find(j)
    groups: dict[int, set[int]] = {}
    for i, j in edges:
        groups.setdefault(find(i), set()).update((i, j))
    return sorted(groups.values(), key=min)


class Evaluator:
    """Character sums of one (G, Q, p), caching per-block-pair matrices."""

    def __init__(self, G: BlockGraph, Q: Rectangle, p):
        if Q.blocks != tuple(range(G.k)):
            raise ValueError("character sums need a full rectangle over all k blocks")
        self.G, self.Q = G, Q
        self.k, self.n = G.k, G.n
        self.exact = _is_exact(p)
        if self.exact:
            p = Fraction(p)
            self.a, self.b = p.numerator, p.denominator
        self.p = p
        self.sides = [np.array(sorted(s), dtype=np.int64) for _, s in Q.sides]
        self.size = Q.cardinality()
        self._chi: dict = {}
        self._ind: dict = {}

    # building blocks ---------------------------------------------------

    def _adj(self, i, j):
        A = self.G.matrix
        return A[np.ix_(self.sides[i], self.sides[j])]

    def chi_matrix(self, i, j, wide: bool = True):
        """Character values on Q_i x Q_j; in exact mode scaled by the denominator of p.

        ``wide`` selects Python-integer entries; otherwise exact entries are
        integer-valued float64, so contractions run through BLAS.
        """
        key = (i, j, wide)
        if key not in self._chi:
            A = self._adj(i, j).astype(bool)
            if self.exact:
                M = np.where(A, self.b - self.a, -self.a).astype(object if wide else np.float64)
            else:
                M = np.where(A, (1.0 - self.p) / self.p, -1.0)
            self._chi[key] = M
        return self._chi[key]

    def ind_matrix(self, i, j, wide: bool = True):
        key = (i, j, wide)
        if key not in self._ind:
            A = self._adj(i, j)
            if self.exact:
                self._ind[key] = A.astype(object if wide else np.float64)
            else:
                self._ind[key] = A.astype(np.float64)
        return self._ind[key]

    def _needs_wide(self, n_chi: int) -> bool:
        # every partial contraction is bounded by |Q| * max|entry|^n_chi
        if not self.exact:
            return False
        return self.size * max(abs(self.b - self.a), self.a, 1) ** n_chi >= FLOAT_EXACT

    def _scale(self, raw, n_chi: int, n_ind: int):
        if self.exact:
            return Fraction(int(raw) * self.b ** n_ind, self.a ** (n_chi + n_ind))
        return float(raw) * self.p ** (-n_ind)

    # strategies ------------------------------------------------------------

    def naive(self, chi_edges, ind_edges=()):
        """Enumerate every tuple of Q (vectorised over tuples)."""
        if self.size > NAIVE_GUARD:
            raise ValueError(f"|Q| = {self.size} exceeds the naive guard {NAIVE_GUARD}")
        if self.size == 0:
            return self._scale(0, 0, 0)
        grids = np.meshgrid(*self.sides, indexing="ij")
        cols = [g.reshape(-1) for g in grids]
        A = self.G.matrix
        if self.exact:
            acc = np.ones(self.size, dtype=object)
        else:
            acc = np.ones(self.size, dtype=np.float64)
        for i, j in chi_edges:
            present = A[cols[i], cols[j]].astype(bool)
            if self.exact:
                acc = acc * np.where(present, self.b - self.a, -self.a).astype(object)
            else:
                acc = acc * np.where(present, (1.0 - self.p) / self.p, -1.0)
        for i, j in ind_edges:
            present = A[cols[i], cols[j]]
            acc = acc * (present.astype(object) if self.exact else present)
        raw = sum(acc.tolist()) if self.exact else math.fsum(acc)
        return self._scale(raw, len(chi_edges), len(ind_edges))

    def factorized(self, chi_edges, ind_edges=(), cover=None):
        """Per-component contraction over the assignments of a vertex cover.

        Every label outside the cover only touches cover labels, so its sum
        factors into a tensor over its cover neighbours; the component sum is
        then one contraction over the cover's axes.
        """
        if self.size == 0:
            return self._scale(0, 0, 0)
        chi_edges, ind_edges = list(chi_edges), list(ind_edges)
        kinds = {tuple(sorted(e)): "chi" for e in chi_edges}
        for e in ind_edges:
            kinds[tuple(sorted(e))] = "ind"
        every = list(kinds)
        if cover is None:
            cover = lex_first_min_vc(PatternGraph.from_edges(self.k, every))
        wide = self._needs_wide(len(chi_edges))
        touched = set()
        raw = 1
        for comp in _components(self.k, every):
            touched |= comp
            raw = raw * self._component(comp, kinds, set(cover) & comp, wide)
        for i in range(self.k):
            if i not in touched:
                raw = raw * len(self.sides[i])
        return self._scale(raw, len(chi_edges), len(ind_edges))

    def _mat(self, kind, i, j, wide=True):
        # matrix indexed [Q_i, Q_j]
        get = self.chi_matrix if kind == "chi" else self.ind_matrix
        return get(i, j, wide) if i < j else get(j, i, wide).T

    def _component(self, comp, kinds, cover, wide=True):
        operands = []
        for (i, j), kind in kinds.items():
            if i in comp and i in cover and j in cover:
                operands += [self._mat(kind, i, j, wide), [i, j]]
        for u in sorted(comp - cover):
            nbrs = sorted(w for (i, j) in kinds for w in (i, j)
                          if u in (i, j) and w != u)
            assert set(nbrs) <= cover, "cover does not cover the component"
            ops = []
            for w in nbrs:
                key = (min(u, w), max(u, w))
                ops += [self._mat(kinds[key], u, w, wide), [u, w]]
            T = np.einsum(*ops, nbrs, optimize=True)
            operands += [T, nbrs]
        val = np.einsum(*operands, [], optimize=True)
        return int(val) if self.exact else float(val)

    def grouped(self, F: PatternGraph, estar=None):
        """Sum over the whole fibre of F: chi_F(t) * p^-|E*| * [E*(t) in G]."""
        info = core_of(F)
        if info.F != F:
            raise ValueError("grouped evaluation needs a core fixed point")
        estar = info.Estar if estar is None else estar
        return self.factorized(F.edges, sorted(estar), cover=info.W)

    def char_sum(self, H: PatternGraph, strategy: str = "factorized"):
        if strategy == "naive":
            return self.naive(H.edges)
        if strategy == "factorized":
            return self.factorized(H.edges)
        raise ValueError(f"unknown strategy {strategy!r}")


def char_sum(G: BlockGraph, Q: Rectangle, H: PatternGraph, p, strategy: str = "factorized",
             estar=None):
    """Sum over t in Q of chi_{H(t)}; for ``grouped`` H is read as a core F
    and the whole fibre {F + E : E subset of E*_F} is summed."""
    ev = Evaluator(G, Q, p)
    if strategy == "grouped":
        return ev.grouped(H, estar)
    return ev.char_sum(H, strategy)


def _total(values, exact):
    if exact:
        return sum(values, Fraction(0))
    return math.fsum(values)


def raw_sum_Hd(G: BlockGraph, Q: Rectangle, params: MeasureParams, strategy: str = "grouped",
               ev: Evaluator | None = None):
    """Sum over t in Q and H with cover number <= d of chi_{H(t)} (no n^-k)."""
    ev = ev or Evaluator(G, Q, params.p)
    k = G.k
    if strategy == "grouped":
        vals = [ev.grouped(F) for F in enumerate_patterns(k, params.d, "cores_only")]
    else:
        vals = [ev.char_sum(H, strategy) for H in enumerate_patterns(k, params.d, "all_Hd")]
    return _total(vals, ev.exact)


def mu_d(G: BlockGraph, Q: Rectangle, params: MeasureParams, strategy: str = "grouped"):
    """n^-k times the sum over t in Q and H with cover number <= d of chi_{H(t)}."""
    raw = raw_sum_Hd(G, Q, params, strategy)
    if params.exact:
        value = raw / Fraction(G.n) ** G.k
    else:
        value = raw / float(G.n) ** G.k
    for obs in OBSERVERS:
        obs(G, Q, params, value)
    return value


def rect_small_bound(Q: Rectangle, params: MeasureParams, k: int, n: int):
    """|Q| n^-k sum_{i<=d} C(k,i) * base^(ik), base = 1/p (or 2 once p > 1/2)."""
    if params.exact:
        p = Fraction(params.p)
        base = max(1 / p, Fraction(2))
        return Fraction(Q.cardinality(), n ** k) * sum(comb(k, i) * base ** (i * k)
                                                      for i in range(min(params.d, k) + 1))
    base = max(1.0 / params.p, 2.0)
    return Q.cardinality() / float(n) ** k * math.fsum(comb(k, i) * base ** (i * k)
                                                       for i in range(min(params.d, k) + 1))


# the main/boundary split -------------------------------------------------------

@dataclass
class SplitResult:
    main: Fraction | float
    boundary: list[tuple[int, int, Fraction | float, int]]  # (i, j, value, family size)
    order: list[int]
    total: Fraction | float

    def check(self) -> bool:
        vals = [self.main] + [b[2] for b in self.boundary]
        return _total(vals, isinstance(self.main, Fraction)) == self.total


def check_singleton_clique(G: BlockGraph, Q: Rectangle, R: Sequence[int]) -> str | None:
    """None if the blocks R are singletons forming a clique adjacent to all of Q."""
    verts = []
    for i in R:
        side = Q.side(i)
        if len(side) != 1:
            return f"block {i} is not a singleton"
        verts.append(next(iter(side)))
    for i, v in zip(R, verts):
        for j, side in Q.sides:
            if j == i:
                continue
            missing = [u for u in side if not G.adjacent(v, u)]
            if missing:
                return f"vertex {v} of block {i} is not adjacent to {missing[0]} in block {j}"
    return None


def split_main_boundary(G: BlockGraph, Q: Rectangle, ell: int, params: MeasureParams,
                        R: Sequence[int] | None = None, strategy: str = "factorized",
                        with_total: bool = True) -> SplitResult:
    """Split the full sum into the main term and the boundary terms.

    Blocks are relabelled so that R (default: the first ell blocks) comes first,
    in the given order, followed by the remaining blocks ascending.  Positions
    i, j in the returned boundary list are 1-based in that order.
    """
    k, d = G.k, params.d
    R = list(range(ell)) if R is None else list(R)
    if len(R) != ell:
        raise ValueError("R must list exactly ell blocks")
    why = check_singleton_clique(G, Q, R)
    if why:
        raise ValueError(f"precondition violated: {why}")
    order = R + [b for b in range(k) if b not in R]
    ev = Evaluator(G, Q, params.p)
    family = enumerate_patterns(k, d, "all_Hd")
    if params.exact:
        pinv = 1 / Fraction(params.p)
    else:
        pinv = 1.0 / params.p

    def term(S, keep):
        Smask = PatternGraph.from_edges(k, S).mask
        hits = [H for H in family if H.mask & Smask == Smask and keep(H)]
        vals = [ev.char_sum(PatternGraph(k, H.mask & ~Smask), strategy) for H in hits]
        return pinv ** len(S) * _total(vals, ev.exact), len(hits)

    S_all = star_union(k, range(1, ell + 1), order)
    main, _ = term(S_all, lambda H: True)
    boundary = []
    for i in range(1, ell + 1):
        for j in range(i + 1, k + 1):
            S = star_union(k, range(1, i), order) | star(k, i, j - 1, order)
            e = (min(order[i - 1], order[j - 1]), max(order[i - 1], order[j - 1]))
            val, count = term(S, lambda H, e=e: in_boundary(H, e, d))
            boundary.append((i, j, val, count))
    total = raw_sum_Hd(G, Q, params, "naive" if ev.size <= NAIVE_GUARD else "grouped") \
        if with_total else None
    return SplitResult(main, boundary, order, total)


def star_size(k: int, ell: int) -> int:
    """|S_[ell]| = ell * (k - (ell + 1) / 2) (always an integer)."""
    return ell * (2 * k - ell - 1) // 2
