"""Pseudorandomness checks on block graphs and the rectangle decomposition.

Common-neighbourhood counts are computed in bulk: for a set of source blocks
the indicator rows of all but the last block are multiplied out into a
prefix matrix, and a single matrix product against the last block gives the
count for every tuple at once.  Interval tests compare integer counts against
integer cut-offs, so they are exact whenever ``p`` is rational.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb, prod
from typing import Iterable, Sequence

import numpy as np

from .graph_core import BlockGraph, Rectangle
from .measure import Evaluator, check_singleton_clique
from .pattern_cores import PatternGraph, core_of, vc_number

log = logging.getLogger(__name__)

TUPLE_GUARD = 10**7
PARTITION_RETRIES = 64


def _tuple_guard() -> int:
    return max(TUPLE_GUARD, int(os.environ.get("SA_LAB_GUARD", TUPLE_GUARD)))


def _exact(p) -> bool:
    return isinstance(p, (Fraction, int))


def _num(p):
    return Fraction(p) if _exact(p) else float(p)


# parameter bundles -------------------------------------------------------------

@dataclass(frozen=True)
class WellBehavedSpec:
    beta: Fraction | float
    s: float
    w: float
    lam: float
    Lambda: float
    gamma: Fraction | float
    C: float = 324
    epsilon: float = 0.1
    tight_constant: float = 60

    def __post_init__(self):
        for name in ("beta", "s", "w", "lam", "Lambda", "gamma", "C", "epsilon", "tight_constant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_graph(cls, k: int, n: int, p, ell: int, C: float = 324, **overrides) -> "WellBehavedSpec":
        """Defaults tied to (k, n, p): beta = 1/k, gamma = 1/(3k), s from the
        error-set regime, lam just below 1 - log k / log n."""
        s = error_set_regime(k, n, p, ell, C)
        lam = 0.99 * (1 - math.log(k) / math.log(n)) if n > k else 0.5
        base = dict(beta=Fraction(1, k), s=s, w=s, lam=lam,
                    Lambda=20 * k * math.log2(n), gamma=Fraction(1, 3 * k), C=C)
        base.update(overrides)
        return cls(**base)

    def to_json(self) -> dict:
        return {f: (str(v) if isinstance(v, Fraction) else v) for f, v in self.__dict__.items()}

    @classmethod
    def from_json(cls, obj: dict) -> "WellBehavedSpec":
        conv = {}
        for key, val in obj.items():
            conv[key] = Fraction(val) if isinstance(val, str) else val
        return cls(**conv)


@dataclass(frozen=True)
class GoodRectSpec:
    R: tuple[int, ...]
    s: float
    beta: Fraction | float
    p: Fraction | float
    d: int


def error_set_regime(k: int, n: int, p, ell: int, C: float = 324) -> float:
    """C k^4 ell ln n / p^(2 ell): the smallest block-size scale with bounded error sets."""
    return C * k ** 4 * ell * math.log(n) / float(p) ** (2 * ell)


def error_set_size_bound(n: int, p, ell: int, gamma) -> float:
    """12 ell ln n / (p^ell gamma^2): the size bound for one greedy error set."""
    return 12 * ell * math.log(n) / (float(p) ** ell * float(gamma) ** 2)


# bulk neighbourhood counts -----------------------------------------------------

def _neighbour_counts(M: np.ndarray, sides: Sequence[np.ndarray], target: np.ndarray) -> np.ndarray:
    """|N(t) cap target| for every t in the product of ``sides`` (lex order)."""
    shape = [len(s) for s in sides]
    if len(target) == 0 or 0 in shape:
        return np.zeros(shape, dtype=np.int64)
    if prod(shape[:-1]) * len(target) > _tuple_guard():
        raise ValueError(f"neighbourhood scan of shape {shape} x {len(target)} exceeds the guard")
    rows = [M[np.ix_(s, target)].astype(np.float64) for s in sides]
    prefix = np.ones((1, len(target)))
    for R in rows[:-1]:
        prefix = (prefix[:, None, :] * R[None, :, :]).reshape(-1, len(target))
    counts = prefix @ rows[-1].T
    return np.rint(counts).astype(np.int64).reshape(shape)


def _cutoffs(expected, beta) -> tuple[int, int]:
    """Integer range [lo, hi] of counts inside (1 +- beta) * expected."""
    lo = math.ceil((1 - beta) * expected)
    hi = math.floor((1 + beta) * expected)
    return lo, hi


@dataclass
class Witness:
    tuple: tuple[int, ...]
    target_block: int
    count: int
    expected: Fraction | float

    def to_json(self) -> dict:
        return {"tuple": list(self.tuple), "target_block": self.target_block,
                "count": self.count, "expected": str(self.expected)}


@dataclass
class NeighbourhoodReport:
    beta: Fraction | float
    worst_deviation: Fraction | float
    witness: Witness | None
    tuples_checked: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0

    @property
    def worst_slack(self) -> float:
        return float(self.beta) - float(self.worst_deviation)

    def to_json(self) -> dict:
        return {"beta": str(self.beta), "worst_deviation": str(self.worst_deviation),
                "worst_slack": self.worst_slack, "tuples_checked": self.tuples_checked,
                "violations": self.violations, "passed": self.passed,
                "witness": self.witness.to_json() if self.witness else None}


def neighbourhood_scan(G: BlockGraph, sides: dict[int, Iterable[int]], pairs, beta, p) -> NeighbourhoodReport:
    """Scan every (source block set B, target block i) in ``pairs``.

    ``sides`` maps each block to the vertex set used both as a source of
    tuples and as a target.  A tuple t in the product over B passes when
    |N(t) cap side_i| lies in (1 +- beta) p^|t| |side_i|.
    """
    beta, p = _num(beta), _num(p)
    arr = {b: np.array(sorted(s), dtype=np.int64) for b, s in sides.items()}
    M = G.matrix
    worst = Fraction(0) if _exact(p) and _exact(beta) else 0.0
    witness = None
    checked = violations = 0
    for B, i in pairs:
        T = arr[i]
        srcs = [arr[b] for b in B]
        counts = _neighbour_counts(M, srcs, T)
        if counts.size == 0:
            continue
        checked += counts.size
        expected = p ** len(B) * len(T)
        lo, hi = _cutoffs(expected, beta)
        violations += int(np.count_nonzero((counts < lo) | (counts > hi)))
        if expected == 0:
            continue
        flat = counts.reshape(-1)
        cmin, cmax = int(flat.min()), int(flat.max())
        far = cmin if expected - cmin >= cmax - expected else cmax
        dev = abs(far - expected) / expected
        if dev > worst or witness is None:
            idx = np.unravel_index(int(np.argmax(flat == far)), counts.shape)
            t = tuple(int(srcs[a][idx[a]]) for a in range(len(B)))
            worst = dev
            witness = Witness(t, i, far, expected)
    return NeighbourhoodReport(beta, worst, witness, checked, violations)


def _pairs_within(blocks: Sequence[int], max_size: int, targets: Sequence[int]):
    for size in range(1, max_size + 1):
        for B in combinations(sorted(blocks), size):
            for i in targets:
                if i not in B:
                    yield B, i


def check_common_neighborhoods(G: BlockGraph, beta, p, d_cap: int) -> NeighbourhoodReport:
    """Bounded common neighbourhoods in every block, over all source sets of size <= d_cap."""
    k, n = G.k, G.n
    d_cap = min(d_cap, k - 1)
    work = sum(comb(k * n, i) for i in range(d_cap + 1))
    if work > _tuple_guard():
        raise ValueError(f"{work} tuples exceeds the guard {_tuple_guard()}")
    sides = {i: G.block(i) for i in range(k)}
    return neighbourhood_scan(G, sides, _pairs_within(range(k), d_cap, range(k)), beta, p)


# error sets --------------------------------------------------------------------

def _violating_tuples(G, pool_sides: dict[int, np.ndarray], target: np.ndarray, size: int, gamma, p):
    """All tuples of ``size`` distinct pool blocks whose count into ``target`` is off; lex order."""
    M = G.matrix
    expected = _num(p) ** size * len(target)
    lo, hi = _cutoffs(expected, _num(gamma))
    out = []
    for B in combinations(sorted(pool_sides), size):
        srcs = [pool_sides[b] for b in B]
        counts = _neighbour_counts(M, srcs, target)
        bad = np.argwhere((counts < lo) | (counts > hi))
        out.extend(tuple(int(srcs[a][row[a]]) for a in range(size)) for row in bad)
    out.sort()
    return out


def _pool_sides(G: BlockGraph, pool: Iterable[int], skip_block: int, removed=frozenset()):
    by_block: dict[int, list[int]] = {}
    for v in pool:
        b = v // G.n
        if b != skip_block and v not in removed:
            by_block.setdefault(b, []).append(v)
    return {b: np.array(sorted(vs), dtype=np.int64) for b, vs in by_block.items() if vs}


def build_error_set(G: BlockGraph, S: Iterable[int], ell: int, gamma, p,
                    pool: Iterable[int] | None = None) -> frozenset[int]:
    """Greedy union of maximal packings of disjoint off-count tuples, sizes 1..ell.

    Tuples use distinct blocks, avoid the block of S, and draw vertices from
    ``pool`` (default: every vertex outside that block).  For each size the
    off-count tuples are scanned in lexicographic order and kept when
    disjoint from those kept so far.  Afterwards every tuple of size <= ell
    avoiding the result is re-scanned and must have its count into S inside
    (1 +- gamma) p^|t| |S|.
    """
    S = sorted(set(S))
    if not S:
        return frozenset()
    block = S[0] // G.n
    if any(v // G.n != block for v in S):
        raise ValueError("S must lie inside a single block")
    if pool is None:
        pool = range(G.k * G.n)
    pool = list(pool)
    target = np.array(S, dtype=np.int64)
    sides = _pool_sides(G, pool, block)
    W: set[int] = set()
    for size in range(1, min(ell, len(sides)) + 1):
        used: set[int] = set()
        for t in _violating_tuples(G, sides, target, size, gamma, p):
            if used.isdisjoint(t):
                used.update(t)
        W |= used
    # post-scan over the pool with W removed
    rest = _pool_sides(G, pool, block, frozenset(W))
    for size in range(1, min(ell, len(rest)) + 1):
        left = _violating_tuples(G, rest, target, size, gamma, p)
        assert not left, f"error set misses off-count tuple {left[0]}"
    bound = error_set_size_bound(G.n, p, ell, gamma)
    log.debug("error set for block %d: |W|=%d, size bound %.1f", block, len(W), bound)
    return frozenset(W)


@dataclass
class ErrorSetCase:
    rectangle: Rectangle
    admissible: bool
    reason: str | None
    w: float = 0.0
    W: frozenset[int] = frozenset()
    scan: NeighbourhoodReport | None = None
    removal_ratio: float = 0.0  # max_j |W cap Q_j| / |Q_j|
    removal_limit: float = 0.0  # min(gamma/2, gamma p^ell)

    @property
    def size_ok(self) -> bool:
        return not self.admissible or len(self.W) <= self.w

    @property
    def passed(self) -> bool:
        if not self.admissible:
            return True
        return self.size_ok and self.scan.passed

    def to_json(self) -> dict:
        return {"rectangle": self.rectangle.to_json(), "admissible": self.admissible,
                "reason": self.reason, "W_size": len(self.W), "w": self.w,
                "size_ok": self.size_ok,
                "scan": self.scan.to_json() if self.scan else None,
                "removal_ratio": self.removal_ratio, "removal_limit": self.removal_limit,
                "passed": self.passed}


@dataclass
class ErrorSetReport:
    cases: list[ErrorSetCase]
    s: float
    ell: int
    regime_ok: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def worst_slack(self) -> float:
        slacks = [c.scan.worst_slack for c in self.cases if c.scan is not None]
        return min(slacks) if slacks else math.inf

    def to_json(self) -> dict:
        return {"s": self.s, "ell": self.ell, "regime_ok": self.regime_ok,
                "passed": self.passed, "cases": [c.to_json() for c in self.cases]}


def check_error_sets(G: BlockGraph, spec: WellBehavedSpec, rectangles: Iterable[Rectangle],
                     p, ell: int) -> ErrorSetReport:
    """Bounded error sets with block threshold 2s, error budget s and slack 1/k.

    For each admissible rectangle (every block of size >= 2s or empty) an
    error set is built per block against the other blocks of the rectangle,
    with slack ``spec.gamma``; the union W must have |W| <= s and the
    rectangle with W removed must pass the neighbourhood scan at 1/k.
    """
    k = G.k
    s = spec.s
    beta = Fraction(1, k) if _exact(p) else 1.0 / k
    cases = []
    for Q in rectangles:
        if Q.blocks != tuple(range(k)):
            raise ValueError("error-set checks need full rectangles")
        small = [i for i, side in Q.sides if 0 < len(side) < 2 * s]
        if small:
            cases.append(ErrorSetCase(Q, False, f"block {small[0]} has {len(Q.side(small[0]))} "
                                              f"vertices, below 2s = {2 * s:g} and nonzero"))
            continue
        W: set[int] = set()
        for i, side in Q.sides:
            pool = [v for j, other in Q.sides if j != i for v in other]
            W |= build_error_set(G, side, ell, spec.gamma, p, pool)
        trimmed = {i: set(side) - W for i, side in Q.sides}
        scan = neighbourhood_scan(G, trimmed, _pairs_within(range(k), min(ell, k - 1), range(k)),
                                  beta, p)
        ratio = max((len(W & side) / len(side) for _, side in Q.sides if side), default=0.0)
        limit = min(float(spec.gamma) / 2, float(spec.gamma) * float(p) ** ell)
        cases.append(ErrorSetCase(Q, True, None, spec.w, frozenset(W), scan, ratio, limit))
    regime = s >= error_set_regime(k, G.n, p, ell, spec.C)
    return ErrorSetReport(cases, s, ell, regime)


def removal_stability(U: int, S: int, S_minus_T: int, U_minus_T: int, T: int, b, gamma) -> tuple[bool, bool]:
    """Premise and conclusion of the set-removal estimate, from set sizes.

    Premise: |S|/|U| in (1 +- gamma) b and |T|/|U| <= min(gamma/2, b gamma).
    Conclusion: |S - T| / |U - T| in (1 +- 3 gamma) b.
    """
    b, gamma = Fraction(b), Fraction(gamma)
    ratio = Fraction(S, U)
    premise = ((1 - gamma) * b <= ratio <= (1 + gamma) * b
               and Fraction(T, U) <= min(gamma / 2, b * gamma))
    if U_minus_T == 0:
        return premise, False
    after = Fraction(S_minus_T, U_minus_T)
    conclusion = (1 - 3 * gamma) * b <= after <= (1 + 3 * gamma) * b
    return premise, conclusion


# character-sum bounds ---------------------------------------------------------

@dataclass
class CharBoundReport:
    mode: str
    value: Fraction | float
    threshold: float
    trivial: bool
    notes: list[str] = field(default_factory=list)
    neighbourhoods: NeighbourhoodReport | None = None

    @property
    def passed(self) -> bool:
        return abs(float(self.value)) <= self.threshold

    @property
    def worst_slack(self) -> float:
        return self.threshold - abs(float(self.value))

    def to_json(self) -> dict:
        return {"mode": self.mode, "value": str(self.value), "threshold": self.threshold,
                "trivial": self.trivial, "passed": self.passed, "notes": self.notes,
                "neighbourhoods": self.neighbourhoods.to_json() if self.neighbourhoods else None}


def _labels_of_edges(F: PatternGraph) -> list[int]:
    return sorted({v for e in F.edges for v in e})


def check_char_bounds(G: BlockGraph, F: PatternGraph, Q: Rectangle, p, mode: str = "general",
                      lam: float | None = None, Lambda: float | None = None,
                      B: Iterable[int] | None = None, tight_constant: float = 60) -> CharBoundReport:
    """Compare the fibre-grouped character sum of core F over Q with its threshold.

    ``general``: every block touched by an edge of F must have more than
    n/2 vertices in Q; threshold 6 p^-|E(F)| n^(k - lam vc(F)/4) with
    lam < 1 - log k / log n.

    ``tight``: the sum runs over Q_B with F and its optional edges restricted
    to B; blocks of B must have sizes in (Lambda, 4 Lambda], and common
    neighbourhoods from Q_A (A = B cap labels of E(F)) into every other
    block of B must be bounded with slack 3/k.  Threshold
    tight_constant * p^-|E(F[B])| * (Lambda / (10 k log2 n))^(-vc(F[B])/4) * |Q_B|.
    """
    k, n = G.k, G.n
    info = core_of(F)
    if info.F != F:
        raise ValueError("F must be a fixed point of the core map")
    if Q.blocks != tuple(range(k)):
        raise ValueError("character bounds need a full rectangle")
    notes: list[str] = []
    if mode == "general":
        if lam is None:
            raise ValueError("general mode needs lam")
        if not lam < 1 - math.log(k) / math.log(n):
            raise ValueError(f"lam = {lam} must be below 1 - log k / log n")
        short = [i for i in _labels_of_edges(F) if 2 * len(Q.side(i)) <= n]
        if short:
            raise ValueError(f"block {short[0]} of Q has at most n/2 vertices")
        value = Evaluator(G, Q, p).grouped(F)
        threshold = 6 * float(p) ** (-F.num_edges) * float(n) ** (k - lam * vc_number(F) / 4)
        return CharBoundReport(mode, value, threshold, F.num_edges == 0, notes)
    if mode != "tight":
        raise ValueError(f"unknown mode {mode!r}")
    if Lambda is None or B is None:
        raise ValueError("tight mode needs Lambda and B")
    B = sorted(set(B))
    if Lambda < 20 * k * math.log2(n):
        notes.append(f"Lambda = {Lambda:g} is below 20 k log2 n = {20 * k * math.log2(n):.1f}")
    for i in B:
        size = len(Q.side(i))
        if size > 4 * Lambda:
            raise ValueError(f"block {i} has {size} > 4 Lambda vertices")
        if size <= Lambda:
            raise ValueError(f"block {i} has {size} <= Lambda vertices")
    FB = F.induced(B)
    A = [i for i in _labels_of_edges(F) if i in B]
    sides = {i: Q.side(i) for i in B}
    beta = Fraction(3, k) if _exact(p) else 3.0 / k
    scan = neighbourhood_scan(G, sides, _pairs_within(A, len(A), [i for i in B if i not in A]),
                              beta, p)
    if not scan.passed:
        raise ValueError(f"neighbourhoods from Q_A are not (3/k)-bounded: {scan.witness}")
    # blocks outside B collapse to one vertex: no restricted edge touches them
    narrowed = Rectangle.of(n, {i: (Q.side(i) if i in B else [i * n]) for i in range(k)})
    estar = sorted(e for e in info.Estar if e[0] in B and e[1] in B)
    value = Evaluator(G, narrowed, p).factorized(FB.edges, estar)
    size_B = prod(len(Q.side(i)) for i in B)
    threshold = (tight_constant * float(p) ** (-FB.num_edges)
                 * (Lambda / (10 * k * math.log2(n))) ** (-vc_number(FB) / 4) * size_B)
    return CharBoundReport(mode, value, threshold, FB.num_edges == 0, notes, scan)


# good rectangles --------------------------------------------------------------

@dataclass
class GoodVerdict:
    good: bool
    item: int | None = None
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.good


def is_good_rectangle(G: BlockGraph, Q: Rectangle, spec: GoodRectSpec) -> GoodVerdict:
    """Check the three good-rectangle items in order; the verdict names the first failure."""
    k = G.k
    if Q.blocks != tuple(range(k)):
        return GoodVerdict(False, 1, "rectangle does not cover every block")
    R = sorted(spec.R)
    for i, side in Q.sides:
        if i in R and len(side) != 1:
            return GoodVerdict(False, 1, f"block {i} is in R but has {len(side)} vertices")
        if i not in R and len(side) < spec.s:
            return GoodVerdict(False, 1, f"block {i} has {len(side)} < s vertices")
    why = check_singleton_clique(G, Q, R)
    if why:
        return GoodVerdict(False, 2, why)
    free = [i for i in range(k) if i not in R]
    sides = {i: Q.side(i) for i in free}
    scan = neighbourhood_scan(G, sides, _pairs_within(free, min(spec.d, len(free)), free),
                              spec.beta, spec.p)
    if not scan.passed:
        return GoodVerdict(False, 3, f"tuple {scan.witness.tuple} has {scan.witness.count} "
                                     f"neighbours in block {scan.witness.target_block}, "
                                     f"expected {float(scan.witness.expected):.3f}")
    return GoodVerdict(True)


# the decomposition ------------------------------------------------------------

@dataclass(frozen=True)
class Part:
    rect: Rectangle
    label: str  # small | axiom_sub | good
    detail: dict


@dataclass
class Decomposition:
    parts: list[Part]
    s: float
    d: int
    size_bound: int
    regime_ok: bool

    @property
    def within_bound(self) -> bool:
        return len(self.parts) <= self.size_bound

    def cardinality(self) -> int:
        return sum(part.rect.cardinality() for part in self.parts)

    def locate(self, t: Sequence[int]) -> list[int]:
        return [idx for idx, part in enumerate(self.parts) if part.rect.contains(t)]


def small_threshold(n: int, p, d: int, k: int):
    """(n p^d)^(k - d), taken with constant 1."""
    return (n * _num(p) ** d) ** (k - d)


def _singletons(Q: Rectangle) -> list[int]:
    return [i for i, side in Q.sides if len(side) == 1]


def _axiom_pair(G: BlockGraph, Q: Rectangle, singles: list[int]):
    verts = [next(iter(Q.side(i))) for i in singles]
    for a, b in combinations(verts, 2):
        if not G.adjacent(a, b):
            return a, b
    return None


def _classify(G, Q, s, p, d, beta):
    k, n = G.k, G.n
    singles = _singletons(Q)
    thr = small_threshold(n, p, d, k)
    size = Q.cardinality()
    if size <= thr:
        return Part(Q, "small", {"ratio": float(Fraction(size) / thr) if thr else math.inf})
    pair = _axiom_pair(G, Q, singles)
    if pair:
        return Part(Q, "axiom_sub", {"non_edge": pair})
    clique = check_singleton_clique(G, Q, singles) is None
    if clique and len(singles) >= d:
        return Part(Q, "small", {"ratio": float(Fraction(size) / thr) if thr else math.inf,
                                 "singleton_clique": singles[:d]})
    if clique and len(singles) < d and is_good_rectangle(G, Q, GoodRectSpec(tuple(singles), s, beta, p, d)):
        return Part(Q, "good", {"R": singles})
    return None


def _peel(Q: Rectangle, vertices: Iterable[int]):
    """Split off, one vertex at a time, every tuple through each listed vertex."""
    pieces = []
    rest = Q
    for u in sorted(vertices):
        j = u // Q.n
        if u not in rest.side(j):
            continue
        pieces.append(rest.replace(j, [u]))
        rest = rest.replace(j, rest.side(j) - {u})
    return pieces, rest


def decompose_rectangle(G: BlockGraph, Q: Rectangle, s: float, p, d: int,
                        beta=None, gamma=None, C: float = 324) -> Decomposition:
    """Partition Q into small rectangles, edge-axiom subrectangles and good rectangles.

    Empty pieces are dropped.  Large blocks are cleaned with greedy error
    sets, first at slack ``gamma`` and then, while the remainder is not yet
    good, at slack ``beta``; every peeled vertex becomes a singleton piece
    that is decomposed further.
    """
    k, n = G.k, G.n
    if Q.blocks != tuple(range(k)):
        raise ValueError("decomposition needs a full rectangle")
    exact = _exact(p)
    if beta is None:
        beta = Fraction(1, k) if exact else 1.0 / k
    if gamma is None:
        gamma = Fraction(1, 3 * k) if exact else 1.0 / (3 * k)
    regime = s >= error_set_regime(k, n, p, d, C)
    if not regime:
        log.warning("s = %g is below C k^4 d ln n / p^(2d) = %g", s, error_set_regime(k, n, p, d, C))
    start_singles = len(_singletons(Q))
    parts: list[Part] = []
    work = [Q]
    while work:
        cur = work.pop()
        if cur.is_empty():
            continue
        part = _classify(G, cur, s, p, d, beta)
        if part is not None:
            parts.append(part)
            continue
        singles = _singletons(cur)
        # a singleton with non-neighbours: peel them off
        bad = None
        for i in singles:
            v = next(iter(cur.side(i)))
            missing = [u for j, side in cur.sides if j != i for u in side if not G.adjacent(v, u)]
            if missing:
                bad = missing
                break
        if bad is not None:
            pieces, rest = _peel(cur, bad)
            work.append(rest)
            for piece in reversed(pieces):
                if not piece.is_empty():
                    found = _classify(G, piece, s, p, d, beta)
                    assert found is not None and found.label != "good"
                    parts.append(found)
            continue
        assert len(singles) - start_singles < d, "singleton count exceeded d"
        # a medium block: split into singletons
        medium = [i for i, side in cur.sides if 1 < len(side) <= 2 * s]
        if medium:
            i = medium[0]
            for v in sorted(cur.side(i), reverse=True):
                work.append(cur.replace(i, [v]))
            continue
        # every other block exceeds 2s: remove an error set
        large = [i for i, side in cur.sides if len(side) > 2 * s]
        rest = cur
        slack = gamma
        spec = GoodRectSpec(tuple(singles), s, beta, p, d)
        while True:
            W: set[int] = set()
            for i in large:
                pool = [v for j in large if j != i for v in rest.side(j)]
                W |= build_error_set(G, rest.side(i), d, slack, p, pool)
            pieces, rest = _peel(rest, W)
            work.extend(reversed(pieces))
            if is_good_rectangle(G, rest, spec):
                parts.append(Part(rest, "good", {"R": singles}))
                break
            if not W or any(len(rest.side(i)) <= 2 * s for i in large):
                work.append(rest)
                break
            slack = beta
    bound = 2 * k * n * math.ceil(2 * s) ** d
    return Decomposition(parts, s, d, bound, regime)


def verify_part(G: BlockGraph, part: Part, s: float, p, d: int, beta) -> bool:
    """Independent re-check of a part's label."""
    Q = part.rect
    if part.label == "small":
        if Q.cardinality() <= small_threshold(G.n, p, d, G.k):
            return True
        singles = part.detail.get("singleton_clique")
        return bool(singles) and len(singles) >= d and all(len(Q.side(i)) == 1 for i in singles) \
            and check_singleton_clique(G, Q, singles) is None
    if part.label == "axiom_sub":
        u, v = part.detail["non_edge"]
        return (not G.adjacent(u, v) and Q.side(u // G.n) == {u} and Q.side(v // G.n) == {v})
    if part.label == "good":
        R = tuple(part.detail["R"])
        return len(R) < d and bool(is_good_rectangle(G, Q, GoodRectSpec(R, s, beta, p, d)))
    return False


# balanced partition -------------------------------------------------------------

@dataclass
class BalancedPartition:
    parts: list[frozenset]
    retries: int


def balanced_partition(U: Iterable, family: Sequence[Iterable], a: int, gamma,
                       seed: int = 0, check_hypotheses: bool = True) -> BalancedPartition:
    """Random colouring of U into a classes, retried until both balance conditions hold.

    Class sizes must lie in [b/2, 3b/2] with b = |U|/a, and each member F of
    the family must meet every class in (1 +- gamma)|F|/a elements.
    """
    U = list(U)
    family = [set(F) for F in family]
    if a < 1:
        raise ValueError("a must be positive")
    if len(U) % a:
        raise ValueError(f"|U| = {len(U)} is not a multiple of a = {a}")
    b = len(U) // a
    if a == 1:
        return BalancedPartition([frozenset(U)], 0)
    f = len(family)
    if check_hypotheses:
        if not b > 12 * math.log(4 * a):
            raise ValueError(f"b = {b} must exceed 12 ln(4a) = {12 * math.log(4 * a):.2f}")
        if f:
            c = min(len(F) for F in family)
            low = math.sqrt(3 * a * math.log(4 * a * f) / c) if c else math.inf
            if not low < float(gamma) < 1:
                raise ValueError(f"gamma must lie in ({low:.4f}, 1)")
    rng = np.random.default_rng(seed)
    index = {u: pos for pos, u in enumerate(U)}
    members = [np.array([index[x] for x in F], dtype=np.int64) for F in family]
    g = Fraction(gamma) if isinstance(gamma, (Fraction, int)) else gamma
    for attempt in range(PARTITION_RETRIES):
        colour = rng.integers(0, a, size=len(U))
        sizes = np.bincount(colour, minlength=a)
        if sizes.min() * 2 < b or sizes.max() * 2 > 3 * b:
            continue
        ok = True
        for F, idx in zip(family, members):
            hits = np.bincount(colour[idx], minlength=a)
            lo, hi = _cutoffs(Fraction(len(F), a) if not isinstance(g, float) else len(F) / a, g)
            if hits.min() < lo or hits.max() > hi:
                ok = False
                break
        if ok:
            log.debug("balanced partition found after %d retries", attempt)
            parts = [frozenset(U[pos] for pos in np.flatnonzero(colour == c)) for c in range(a)]
            return BalancedPartition(parts, attempt)
    raise RuntimeError(f"no balanced partition after {PARTITION_RETRIES} colourings")


# tail probe ------------------------------------------------------------------

@dataclass
class TailProbe:
    F: PatternGraph
    M: list[tuple[int, int]]
    Q: Rectangle
    m: int
    r: float
    xi: np.ndarray  # weights indexed like Q's tuples, shape = side sizes

    def __post_init__(self):
        if self.m <= 0 or self.m % 2:
            raise ValueError("m must be a positive even integer")
        if not self.F.edges:
            raise ValueError("F needs at least one edge")
        edges = set(self.F.edges)
        used: set[int] = set()
        for u, v in self.M:
            if (min(u, v), max(u, v)) not in edges:
                raise ValueError(f"matching edge {(u, v)} is not in F")
            if u in used or v in used:
                raise ValueError("M is not a matching")
            used |= {u, v}
        shape = tuple(len(side) for _, side in self.Q.sides)
        if self.xi.shape != shape:
            raise ValueError(f"xi has shape {self.xi.shape}, expected {shape}")
        if np.abs(self.xi).max(initial=0) > self.r:
            raise ValueError("xi exceeds r in magnitude")
        if self.m > self.kappa:
            raise ValueError(f"m = {self.m} exceeds kappa = {self.kappa}")

    @property
    def kappa(self) -> int:
        return min(len(self.Q.side(u)) * len(self.Q.side(v)) for u, v in self.M)

    def bound(self, p: float, s: float) -> float:
        if s <= 0:
            return math.inf
        base = (self.r * p ** (-self.F.num_edges) * (self.m / self.kappa) ** (len(self.M) / 2)
                * self.Q.cardinality() / s)
        return base ** self.m


@dataclass
class TailRow:
    s: float
    empirical: float
    bound: float
    stderr: float

    @property
    def passed(self) -> bool:
        return self.empirical <= self.bound + 3 * self.stderr


@dataclass
class TailReport:
    rows: list[TailRow]
    trials: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _sample_sums(probe: TailProbe, p: float, trials: int, rng) -> np.ndarray:
    sides = [len(side) for _, side in probe.Q.sides]
    letters = "abcdefghijklmnopqrstuvwxy"
    operands = []
    for i, j in probe.F.edges:
        present = rng.random((trials, sides[i], sides[j])) < p
        operands += [np.where(present, (1 - p) / p, -1.0), ["z", letters[i], letters[j]]]
    spec = ",".join("".join(ix) for ix in operands[1::2]) + "," + letters[:len(sides)] + "->z"
    return np.einsum(spec, *operands[0::2], probe.xi, optimize=True)


def tail_probe(probe: TailProbe, p: float, s_grid: Sequence[float], trials: int,
               seed: int = 0, batch: int = 2000) -> TailReport:
    """Monte Carlo tail of |sum_t chi_F(t) xi(t)| against the high-moment bound."""
    rng = np.random.default_rng(seed)
    p = float(p)
    sums = []
    left = trials
    while left:
        size = min(batch, left)
        sums.append(np.abs(_sample_sums(probe, p, size, rng)))
        left -= size
    mags = np.concatenate(sums) if sums else np.zeros(0)
    rows = []
    for s in s_grid:
        emp = float(np.mean(mags > s)) if trials else 0.0
        b = probe.bound(p, s)
        q = min(b, 1.0)  # inf bound: q = 1, stderr 0
        rows.append(TailRow(float(s), emp, b, math.sqrt(q * (1 - q) / trials) if trials else 0.0))
    return TailReport(rows, trials)


# sampling helpers -------------------------------------------------------------

def sample_rectangle(G: BlockGraph, rng, min_side: int, max_side: int | None = None) -> Rectangle:
    """Uniform side sizes in [min_side, max_side], uniform subsets of each block."""
    n = G.n
    max_side = n if max_side is None else max_side
    sides = {}
    for i in range(G.k):
        size = int(rng.integers(min_side, max_side + 1))
        sides[i] = (rng.choice(n, size=size, replace=False) + i * n).tolist()
    return Rectangle.of(n, sides)
