from functools import lru_cache
from itertools import combinations
from math import ceil

import pytest

import oracles
from salab.pattern_cores import (PatternGraph, all_graphs, core_of, counting_audit,
                                 enumerate_patterns, estar_explicit, estar_implicit, fiber,
                                 in_boundary, is_core, lex_first_min_vc, maximal_matching,
                                 star_union, vc_number, write_audit_csv)

KS = [1, 2, 3, 4, 5]


def G(k, *edges):
    return PatternGraph.from_edges(k, edges)


@lru_cache(maxsize=None)
def graphs(k):
    return list(all_graphs(k))


@lru_cache(maxsize=None)
def oracle_core(k, mask):
    H = PatternGraph(k, mask)
    return oracles.core(k, frozenset(H.edges))


# vertex cover ---------------------------------------------------------------

def test_vc_small_cases():
    assert vc_number(G(4)) == 0
    assert vc_number(G(3, (0, 1), (1, 2), (0, 2))) == 2


@pytest.mark.parametrize("k", KS)
def test_vc_matches_subset_oracle(k):
    for H in graphs(k):
        assert vc_number(H) == oracles.vc(k, H.edges)


def test_lex_first_cover_examples():
    assert lex_first_min_vc(G(3, (0, 1))) == {0}
    assert lex_first_min_vc(G(3, (0, 1), (1, 2))) == {1}


@pytest.mark.parametrize("k", KS)
def test_lex_first_cover_matches_enumeration(k):
    for H in graphs(k):
        W = lex_first_min_vc(H)
        assert W == oracles.lex_first(oracles.min_covers(k, H.edges))
        b = vc_number(H)
        deg = [sum(1 for e in H.edges if v in e) for v in range(k)]
        assert all(v in W for v in range(k) if deg[v] >= b + 1)


# the core map ---------------------------------------------------------------

def test_core_of_path():
    info = core_of(G(3, (0, 1), (1, 2)))
    assert info.F == G(3, (0, 1), (1, 2))
    assert (info.W, info.U1, info.U2) == ({1}, {0}, {2})


def test_core_of_empty():
    info = core_of(G(4))
    assert info.F == G(4) and not (info.W or info.U1 or info.U2 or info.Estar)


@pytest.mark.parametrize("k", KS)
def test_core_matches_brute_force_construction(k):
    for H in graphs(k):
        info = core_of(H)
        F, W, U1, U2 = oracle_core(k, H.mask)
        assert set(info.F.edges) == F
        assert (info.W, info.U1, info.U2) == (W, U1, U2)


@pytest.mark.parametrize("k", KS)
def test_core_definition_and_support_bound(k):
    for H in graphs(k):
        F = core_of(H).F
        for C in oracles.min_covers(k, F.edges):
            assert oracles.covers(H.edges, C)
        assert len(F.support()) <= 3 * oracles.vc(k, F.edges)
        assert oracles.vc(k, F.edges) == oracles.vc(k, H.edges)
        assert core_of(F).F == F
        assert is_core(F)


@pytest.mark.parametrize("k", KS)
def test_core_matchings_are_valid(k):
    for H in graphs(k):
        info = core_of(H)
        for M, U in ((info.M1, info.U1), (info.M2, info.U2)):
            assert set(M) == set(U)
            assert len(set(M.values())) == len(M)
            assert all(w in info.W and H.has_edge(u, w) for u, w in M.items())


# E* ------------------------------------------------------------------------------

def test_estar_examples():
    assert estar_implicit(G(3)) == frozenset() == estar_explicit(G(3))
    edge = G(3, (0, 1))
    assert estar_implicit(edge) == frozenset() == estar_explicit(edge)
    path = G(4, (0, 1), (1, 2))
    assert estar_implicit(path) == estar_explicit(path)


def test_estar_of_single_edge_by_fiber_enumeration():
    edge = frozenset({(0, 1)})
    fib = [E for E in oracles.all_edge_sets(3) if oracle_core(3, PatternGraph.from_edges(3, E).mask)[0] == edge]
    assert fib == [edge]


@pytest.mark.parametrize("k", KS + [pytest.param(6, marks=pytest.mark.slow)])
def test_estar_two_routes_and_fiber_law(k):
    images: dict = {}
    for H in graphs(k):
        images.setdefault(core_of(H).F, set()).add(H.mask)
    for F, masks in images.items():
        assert estar_implicit(F) == estar_explicit(F)
        Estar = estar_explicit(F)
        support = F.support()
        assert all((a in support) != (b in support) for a, b in Estar)
        assert {H.mask for H in fiber(F)} == masks


@pytest.mark.parametrize("k", [3, 4, 5])
def test_fiber_law_against_oracle(k):
    images: dict = {}
    for E in oracles.all_edge_sets(k):
        H = PatternGraph.from_edges(k, E)
        images.setdefault(oracle_core(k, H.mask)[0], set()).add(E)
    for F_edges, members in images.items():
        F = PatternGraph.from_edges(k, F_edges)
        extra = estar_explicit(F)
        expected = {F_edges | frozenset(S) for r in range(len(extra) + 1)
                    for S in combinations(sorted(extra), r)}
        assert members == expected


def test_estar_rejects_non_core():
    with pytest.raises(ValueError):
        estar_implicit(G(4, (0, 1), (0, 2), (0, 3)))
    with pytest.raises(ValueError):
        estar_explicit(G(4, (0, 1), (0, 2), (0, 3)))


# boundaries ------------------------------------------------------------------------

def test_boundary_examples():
    assert in_boundary(G(3), (0, 1), 0)
    assert not in_boundary(G(3, (0, 1)), (0, 2), 1)


@pytest.mark.parametrize("k", KS)
def test_boundary_equivalence_with_core(k):
    for H in graphs(k):
        F = core_of(H).F
        i = oracles.vc(k, H.edges)
        for e in combinations(range(k), 2):
            direct = (oracles.vc(k, H.edges) == i and oracles.vc(k, set(H.edges) | {e}) == i + 1)
            assert in_boundary(H, e, i) == direct
            assert in_boundary(H, e, i) == in_boundary(F, e, i)


# enumeration ------------------------------------------------------------------------

def test_enumeration_examples():
    assert enumerate_patterns(2, 0) == [G(2)]
    assert len(enumerate_patterns(3, 1)) == 7 == len(oracles.hd(3, 1))


@pytest.mark.parametrize("k", KS)
def test_enumeration_against_oracle(k):
    for d in range(k + 1):
        hd = enumerate_patterns(k, d, "all_Hd")
        assert len({H.mask for H in hd}) == len(hd)
        assert {frozenset(H.edges) for H in hd} == set(oracles.hd(k, d))
        cores = enumerate_patterns(k, d, "cores_only")
        assert len({F.mask for F in cores}) == len(cores)
        image = {oracle_core(k, PatternGraph.from_edges(k, E).mask)[0] for E in oracles.hd(k, d)}
        assert {frozenset(F.edges) for F in cores} == image
        union = [H.mask for F in cores for H in fiber(F)]
        assert len(union) == len(set(union))
        assert set(union) == {H.mask for H in hd}


def test_enumeration_is_deterministic():
    assert enumerate_patterns(4, 2, "cores_only") == enumerate_patterns(4, 2, "cores_only")


# matchings, stars and counting ---------------------------------------------------

def test_maximal_matching_examples():
    assert maximal_matching(G(3)) == []
    assert len(maximal_matching(G(3, (0, 1), (1, 2), (0, 2)))) == 1


@pytest.mark.parametrize("k", KS)
def test_maximal_matching_bound(k):
    for H in graphs(k):
        M = maximal_matching(H)
        used = {v for e in M for v in e}
        assert len(used) == 2 * len(M)
        assert all(a in used or b in used for a, b in H.edges)
        assert len(M) >= ceil(oracles.vc(k, H.edges) / 2)


@pytest.mark.parametrize("k", KS)
def test_removing_leading_stars_drops_cover_number(k):
    for ell in range(1, k):
        S = star_union(k, range(1, ell + 1))
        assert len(S) == ell * (2 * k - ell - 1) // 2
        for H in graphs(k):
            if S <= set(H.edges):
                rest = set(H.edges) - S
                assert oracles.vc(k, rest) == oracles.vc(k, H.edges) - ell


def test_counting_audit_rows():
    rows = {(r.b, r.c): r for r in counting_audit(3)}
    assert rows[(0, 0)].count == 1 and rows[(0, 0)].bound == 1
    assert rows[(1, 3)].count == 6 and rows[(1, 3)].passed


@pytest.mark.parametrize("k", KS)
def test_counting_audit_against_oracle(k):
    for r in counting_audit(k):
        count = sum(1 for E in oracles.all_edge_sets(k)
                    if oracles.vc(k, E) == r.b and len({v for e in E for v in e}) <= r.c)
        assert r.count == count
        assert r.passed
        assert count <= k ** r.c * 2 ** (r.b * (r.c - (r.b + 1) / 2)) + 1e-9


def test_counting_audit_guard_and_csv(tmp_path):
    with pytest.raises(ValueError):
        counting_audit(6)
    write_audit_csv(counting_audit(3), tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "b,c,count,bound" and len(lines) == 1 + 16
