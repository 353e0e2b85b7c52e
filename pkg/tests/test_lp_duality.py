import random
from fractions import Fraction
from itertools import product

import highspy
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from salab import data_path
from salab.clique_formula import Axiom, Polynomial, PolynomialSystem, build_clique_formula
from salab.graph_core import BlockGraph, sample_block_model
from salab.lp_duality import (MonomialIndex, PseudoMeasure, build_dual, build_primal,
                              check_pseudo_measure, export_lp, extract_solutions, result_bundle,
                              solve_exact)
from salab.sa_proof import Refutation, size_report, verify_canonical, verify_truth_table


def one_equals_zero():
    return PolynomialSystem(0, [Axiom(("const",), Polynomial.const(1))])


def k2n1():
    return PolynomialSystem.load(data_path("k2n1_formula.json"))


def solve(P, builder, max_degree=None):
    idx = MonomialIndex.build(P.num_vars, max_degree)
    lp = builder(P, idx)
    return lp, solve_exact(lp), idx


def test_index_sizes():
    assert len(MonomialIndex.build(3)) == 27
    assert MonomialIndex.build(3).monomials[0].is_one()
    assert MonomialIndex.build(3, 1).capped


def test_trivial_system():
    lp, res, _ = solve(one_equals_zero(), build_primal)
    assert len(lp.rows) == 1 and res.optimum == 1
    _, dres, _ = solve(one_equals_zero(), build_dual)
    assert dres.optimum == 1


def test_trivial_system_extracts_unit_refutation():
    P = one_equals_zero()
    lp, res, idx = solve(P, build_primal)
    pi, _ = extract_solutions(lp, res, P, idx)
    assert pi.multipliers == [Polynomial.const(1)] and pi.f0.is_zero()


def test_non_edge_primal_optimum_is_three():
    lp, res, _ = solve(k2n1(), build_primal)
    assert len(lp.rows) == 4
    assert res.status == "optimal" and res.optimum == 3


def test_non_edge_dual_optimum_and_witness_match_vertex_enumeration():
    rows, rhs = oracles.k2n1_dual_rows()
    best, argmax = oracles.inequality_vertices_max(rows, rhs, [1, 1, 1, 1])
    assert best == 3 and argmax == [[0, 1, 1, 1]]
    lp, res, _ = solve(k2n1(), build_dual)
    assert res.optimum == best
    assert list(res.primal) == argmax[0]


def test_non_edge_extraction():
    P = k2n1()
    lp, res, idx = solve(P, build_primal)
    pi, mu = extract_solutions(lp, res, P, idx)
    assert verify_canonical(P, pi) and verify_truth_table(P, pi)
    assert size_report(pi, P).lp_objective == 3
    assert mu.delta == Fraction(1, 3)
    rep = check_pseudo_measure(mu, P, mu.delta, idx)
    assert rep.passed and rep.mu_one == 1


def test_dual_route_extraction_agrees():
    P = k2n1()
    lp, res, idx = solve(P, build_dual)
    pi, mu = extract_solutions(lp, res, P, idx)
    assert verify_canonical(P, pi)
    assert size_report(pi, P).lp_objective == 3
    assert check_pseudo_measure(mu, P, Fraction(1, 3), idx).passed


def test_perturbed_witness_fails_with_named_constraint():
    P = k2n1()
    lp, res, idx = solve(P, build_primal)
    _, mu = extract_solutions(lp, res, P, idx)
    bad = PseudoMeasure(mu.num_vars, [mu.values[0] + 1] + mu.values[1:], mu.delta)
    rep = check_pseudo_measure(bad, P, mu.delta, idx)
    assert not rep.passed
    assert any("mu(1)" in v for v in rep.violations)
    assert any("p_" in v for v in rep.violations)


def test_clique_graph_primal_infeasible_dual_unbounded():
    P = build_clique_formula(BlockGraph.complete(2, 1))
    assert solve(P, build_primal)[1].status == "infeasible"
    assert solve(P, build_dual)[1].status == "unbounded"


def test_point_mass_on_clique_is_exact_pseudo_measure():
    G = BlockGraph.complete(2, 2)
    P = build_clique_formula(G)
    idx = MonomialIndex.build(P.num_vars)
    values = [Fraction(0)] * 16
    values[(1 << 0) | (1 << 2)] = Fraction(1)
    rep = check_pseudo_measure(PseudoMeasure(4, values), P, 0, idx)
    assert rep.passed


def test_export_reimported_by_external_solver(tmp_path):
    for P, expected in [(k2n1(), 3), (one_equals_zero(), 1)]:
        for builder in (build_primal, build_dual):
            lp, res, _ = solve(P, builder)
            path = tmp_path / f"{lp.kind}.lp"
            export_lp(lp, path)
            h = highspy.Highs()
            h.setOptionValue("output_flag", False)
            h.readModel(str(path))
            h.run()
            assert abs(h.getInfo().objective_function_value - expected) <= 1e-6


def test_trivial_export_has_one_constraint(tmp_path):
    lp, _, _ = solve(one_equals_zero(), build_primal)
    export_lp(lp, tmp_path / "t.lp")
    text = (tmp_path / "t.lp").read_text()
    block = text.split("Subject To")[1].split("Bounds")[0]
    assert len([ln for ln in block.splitlines() if ln.strip()]) == 1


def test_empty_system_rejected():
    with pytest.raises(ValueError):
        build_primal(PolynomialSystem(0, []), MonomialIndex.build(0))


def test_guard():
    with pytest.raises(ValueError):
        MonomialIndex.build(12)


def test_result_bundle_fields():
    P = k2n1()
    lp, res, idx = solve(P, build_primal)
    pi, mu = extract_solutions(lp, res, P, idx)
    bundle = result_bundle(res, pi, mu)
    assert bundle["status"] == "optimal" and bundle["optimum"] == "3"
    assert Refutation.from_json(bundle["refutation"], 3).multipliers == pi.multipliers


def _cliqueless(k, n, seed):
    rng = random.Random(seed)
    while True:
        G = sample_block_model(n, k, Fraction(1, 3), rng.getrandbits(32))
        edges = oracles.edge_set(G)
        if not any(oracles.is_clique(edges, t) for t in product(*[G.block(i) for i in range(k)])):
            return G


SHAPES = [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2), (4, 1)]


@settings(max_examples=12, deadline=None)
@given(shape=st.sampled_from(SHAPES), seed=st.integers(0, 2**16))
def test_strong_duality(shape, seed):
    P = build_clique_formula(_cliqueless(*shape, seed))
    _, rp, _ = solve(P, build_primal)
    _, rd, _ = solve(P, build_dual)
    assert rp.status == rd.status == "optimal"
    assert rp.optimum == rd.optimum


@settings(max_examples=15, deadline=None)
@given(shape=st.sampled_from([(2, 1), (2, 2), (3, 1), (4, 1)]), seed=st.integers(0, 2**16))
def test_degree_cap_monotone(shape, seed):
    P = build_clique_formula(_cliqueless(*shape, seed))
    previous = None
    for deg in range(P.num_vars + 1):
        _, res, _ = solve(P, build_primal, deg)
        value = res.optimum if res.status == "optimal" else None
        if previous is not None:
            assert value is not None and value <= previous
        previous = value if value is not None else previous
    assert previous is not None


def _null_move(rng, P, pi):
    a, b = rng.sample(range(len(P.axioms)), 2)
    h = Polynomial.const(Fraction(rng.randint(1, 3), rng.randint(1, 3)))
    mults = list(pi.multipliers)
    mults[a] = mults[a] + h * P.axioms[b].poly
    mults[b] = mults[b] - h * P.axioms[a].poly
    return Refutation(mults, pi.f0, pi.M)


@settings(max_examples=15, deadline=None)
@given(shape=st.sampled_from([(2, 1), (2, 2), (3, 1)]), seed=st.integers(0, 2**16))
def test_pseudo_measure_gates_every_accepted_certificate(shape, seed):
    rng = random.Random(seed)
    P = build_clique_formula(_cliqueless(*shape, seed))
    lp, res, idx = solve(P, build_primal)
    pi, mu = extract_solutions(lp, res, P, idx)
    assert check_pseudo_measure(mu, P, mu.delta, idx).passed
    longest = max(sum(abs(c) for c in a.poly.terms.values()) for a in P.axioms)
    for _ in range(20):
        pi = _null_move(rng, P, pi)
        assert verify_canonical(P, pi)
        rep = size_report(pi, P)
        assert rep.lp_objective >= 1 / mu.delta
        assert rep.coefficient_size <= rep.lp_objective * longest
