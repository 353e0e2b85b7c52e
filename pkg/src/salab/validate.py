"""Invariant suites run by ``salab validate``.

Each suite returns a list of ``Check`` rows; a suite passes when every row
does.  Checks here recompute quantities by brute force where that is cheap,
so they double as a smoke test of an installation.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .clique_formula import build_clique_formula
from .graph_core import BlockGraph, Rectangle, sample_block_model
from .lp_duality import (MonomialIndex, build_dual, build_primal, check_pseudo_measure,
                         extract_solutions, solve_exact)
from .measure import Evaluator, MeasureParams, mu_d
from .pattern_cores import (PatternGraph, all_graphs, boundary_lower_matching_bound, core_of,
                            counting_audit, enumerate_patterns, estar_implicit, fiber,
                            in_boundary, is_vertex_cover, star_union, vc_number)
from .sa_proof import verify_canonical, verify_truth_table

SUITES = ("cores", "duality", "measure")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


def _min_covers(F: PatternGraph):
    b = vc_number(F)
    return [set(W) for W in combinations(range(F.k), b) if is_vertex_cover(F, W)]


def suite_cores(k: int = 4, d: int | None = None) -> list[Check]:
    """Exhaustive core-map checks over every graph on k labels."""
    d = k if d is None else d
    graphs = list(all_graphs(k))
    failures: dict[str, str] = {}

    def fail(name, msg):
        failures.setdefault(name, msg)

    by_core: dict[PatternGraph, set[int]] = {}
    for H in graphs:
        info = core_of(H)
        F = info.F
        by_core.setdefault(F, set()).add(H.mask)
        if F != H.induced(F.support() | info.W | info.U1 | info.U2):
            fail("induced", repr(H))
        if any(not is_vertex_cover(H, W) for W in _min_covers(F)):
            fail("core_definition", repr(H))
        if len(F.support()) > 3 * vc_number(F):
            fail("support_3vc", repr(H))
        if vc_number(F) != vc_number(H):
            fail("vc_preserved", repr(H))
        if core_of(F).F != F:
            fail("fixed_point", repr(H))
        i = vc_number(H)
        for e in combinations(range(k), 2):
            if in_boundary(F, e, i) != in_boundary(H, e, i):
                fail("boundary_equivalence", f"{H!r} e={e}")
        if not boundary_lower_matching_bound(H):
            fail("matching_vs_vc", repr(H))
        for ell in range(1, k):
            S = star_union(k, range(1, ell + 1))
            if PatternGraph.from_edges(k, S).issubgraph(H):
                if vc_number(H.without_edges(S)) != vc_number(H) - ell:
                    fail("vc_star", f"{H!r} ell={ell}")
    for F, masks in by_core.items():
        if estar_implicit(F) != core_of(F).Estar:
            fail("estar_equal", repr(F))
        if {G.mask for G in fiber(F)} != masks:
            fail("fiber_law", repr(F))
    for dd in range(0, d + 1):
        hd = {H.mask for H in enumerate_patterns(k, dd, "all_Hd")}
        union: list[int] = []
        for F in enumerate_patterns(k, dd, "cores_only"):
            union.extend(G.mask for G in fiber(F))
        if len(union) != len(set(union)) or set(union) != hd:
            fail("hd_partition", f"d={dd}")
    audit_ok = all(r.passed for r in counting_audit(k)) if k <= 5 else True
    names = ["induced", "core_definition", "support_3vc", "vc_preserved", "fixed_point",
             "boundary_equivalence", "matching_vs_vc", "vc_star", "estar_equal", "fiber_law",
             "hd_partition"]
    out = [Check(n, n not in failures, failures.get(n, f"{len(graphs)} graphs")) for n in names]
    out.append(Check("counting_audit", audit_ok, f"k={k}"))
    return out


def _cliqueless(rng: random.Random, k: int, n: int, p=Fraction(1, 2), tries: int = 1000) -> BlockGraph:
    from itertools import product
    for _ in range(tries):
        G = sample_block_model(n, k, p, rng.getrandbits(63))
        blocks = [G.block(i) for i in range(k)]
        if not any(_is_clique(G, t) for t in product(*blocks)):
            return G
    raise RuntimeError("no cliqueless graph found")


def _is_clique(G, t):
    return all(G.adjacent(u, v) for u, v in combinations(t, 2))


def suite_duality(count: int = 5, seed: int = 0) -> list[Check]:
    """Primal and dual optima agree; extracted objects pass both checkers."""
    rng = random.Random(seed)
    shapes = [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2)]
    rows = []
    for trial in range(count):
        k, n = shapes[trial % len(shapes)]
        G = _cliqueless(rng, k, n)
        P = build_clique_formula(G)
        idx = MonomialIndex.build(P.num_vars)
        primal = build_primal(P, idx)
        dual = build_dual(P, idx)
        rp, rd = solve_exact(primal), solve_exact(dual)
        ok = rp.status == rd.status == "optimal" and rp.optimum == rd.optimum
        detail = f"k={k} n={n} primal={rp.optimum} dual={rd.optimum}"
        if ok:
            pi, mu = extract_solutions(primal, rp, P, idx)
            ok = verify_canonical(P, pi) and verify_truth_table(P, pi)
            ok = ok and check_pseudo_measure(mu, P, 1 / rp.optimum, idx).passed
        rows.append(Check(f"duality[{trial}]", ok, detail))
    return rows


def suite_measure(count: int = 20, seed: int = 0) -> list[Check]:
    """Naive, factorized and grouped evaluation agree exactly."""
    rng = random.Random(seed)
    rows = []
    for trial in range(count):
        k = rng.randint(2, 4)
        n = rng.randint(1, 4)
        d = rng.randint(0, 2)
        p = Fraction(rng.randint(1, 3), 4)
        G = sample_block_model(n, k, p, rng.getrandbits(63))
        Q = Rectangle.of(n, {i: [v for v in G.block(i) if rng.random() < 0.8] or [i * n]
                             for i in range(k)})
        params = MeasureParams(d, p)
        vals = {s: mu_d(G, Q, params, s) for s in ("naive", "factorized", "grouped")}
        ev = Evaluator(G, Q, p)
        H = PatternGraph(k, rng.getrandbits(k * (k - 1) // 2))
        sums = {ev.naive(H.edges), ev.factorized(H.edges)}
        ok = len(set(vals.values())) == 1 and len(sums) == 1
        rows.append(Check(f"measure[{trial}]", ok, f"k={k} n={n} d={d} p={p} mu={vals['naive']}"))
    return rows


def run_suite(name: str, k: int = 4, count: int | None = None, seed: int = 0) -> list[Check]:
    if name == "cores":
        return suite_cores(k)
    if name == "duality":
        return suite_duality(count or 5, seed)
    if name == "measure":
        return suite_measure(count or 20, seed)
    if name == "all":
        return suite_cores(k) + suite_duality(count or 5, seed) + suite_measure(count or 20, seed)
    raise ValueError(f"unknown suite {name!r}")
