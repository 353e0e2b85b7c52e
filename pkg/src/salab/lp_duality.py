"""The minimum-coefficient refutation LP, its dual, exact solving and extraction.

Rows of the primal are indexed by assignments in {0,1}^N (bitmasks), columns
by f0 coefficients alpha(m) and split multiplier coefficients beta+/beta-(j, m).
The dual has one free variable mu_rho per assignment.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .clique_formula import Monomial, Polynomial, PolynomialSystem, all_monomials
from .rational import fmt_q
from .sa_proof import Refutation
from .simplex import solve_standard

DEFAULT_VAR_GUARD = 8


def _var_guard() -> int:
    return int(os.environ.get("SA_LAB_GUARD", DEFAULT_VAR_GUARD))


@dataclass
class MonomialIndex:
    num_vars: int
    monomials: list[Monomial]
    max_degree: int | None = None

    @classmethod
    def build(cls, num_vars: int, max_degree: int | None = None) -> "MonomialIndex":
        if num_vars > _var_guard():
            raise ValueError(f"{num_vars} variables exceeds the LP guard {_var_guard()} (SA_LAB_GUARD)")
        return cls(num_vars, list(all_monomials(num_vars, max_degree)), max_degree)

    @property
    def capped(self) -> bool:
        return self.max_degree is not None and self.max_degree < self.num_vars

    def __len__(self):
        return len(self.monomials)


@dataclass
class Row:
    coefs: dict[int, Fraction]
    sense: str  # "=", "<=", ">="
    rhs: Fraction
    name: str = ""


@dataclass
class LPInstance:
    """A general-form LP: variables are >= 0 (lower bound 0) or free (None)."""

    sense: str  # "min" | "max"
    objective: list[Fraction]
    lower: list[int | None]
    rows: list[Row]
    var_names: list[str]
    kind: str = "generic"
    var_labels: list = field(default_factory=list)
    row_labels: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def num_vars(self) -> int:
        return len(self.objective)


@dataclass
class LPResult:
    status: str
    optimum: Fraction | None
    primal: list[Fraction] | None
    dual: list[Fraction] | None
    iterations: int = 0
    route: str = "direct"


# truth-table vectors ------------------------------------------------------

def _assignments_of(m: Monomial, N: int):
    free = ((1 << N) - 1) & ~(m.pos | m.neg)
    sub = free
    while True:
        yield m.pos | sub
        if sub == 0:
            break
        sub = (sub - 1) & free


def _vector(poly_terms, N: int) -> dict[int, int | Fraction]:
    vec: dict[int, Fraction] = {}
    for m, c in poly_terms:
        if m is None:
            continue
        for rho in _assignments_of(m, N):
            vec[rho] = vec.get(rho, 0) + c
    return {r: v for r, v in vec.items() if v != 0}


def _product_terms(m: Monomial, poly: Polynomial):
    for m2, c in poly.terms.items():
        yield m * m2, c


def _key(vec: dict) -> tuple:
    return tuple(sorted(vec.items()))


# builders -----------------------------------------------------------------

def build_primal(P: PolynomialSystem, idx: MonomialIndex, dedupe: bool = True) -> LPInstance:
    """min sum alpha + sum (beta+ + beta-)  s.t.  sum beta*(m p_j) - sum alpha*m = 1.

    Columns whose truth-table vector (with equal cost) repeats an earlier one,
    or is identically zero, are dropped when ``dedupe`` is set; neither changes
    the optimum.
    """
    N = P.num_vars
    if not P.axioms:
        raise ValueError("empty polynomial system has no refutation")
    if N != idx.num_vars:
        raise ValueError("monomial index does not match the system's variables")
    cols: list[dict] = []
    names, labels = [], []
    seen = set()

    def add(vec, name, label):
        if dedupe:
            if not vec:
                return
            key = _key(vec)
            if key in seen:
                return
            seen.add(key)
        cols.append(vec)
        names.append(name)
        labels.append(label)

    for a, m in enumerate(idx.monomials):
        add({r: -1 for r in _assignments_of(m, N)}, f"a{a}", ("alpha", None, a))
    for j, ax in enumerate(P.axioms):
        for a, m in enumerate(idx.monomials):
            vec = _vector(_product_terms(m, ax.poly), N)
            add(vec, f"bp{j}_{a}", ("beta", j, a, 1))
            add({r: -v for r, v in vec.items()}, f"bm{j}_{a}", ("beta", j, a, -1))

    rows = [Row({}, "=", Fraction(1), f"r{rho}") for rho in range(1 << N)]
    for ci, vec in enumerate(cols):
        for r, v in vec.items():
            rows[r].coefs[ci] = Fraction(v)
    return LPInstance("min", [Fraction(1)] * len(cols), [0] * len(cols), rows, names,
                      kind="primal", var_labels=labels, row_labels=list(range(1 << N)),
                      meta={"num_vars": N, "capped": idx.capped})


def build_dual(P: PolynomialSystem, idx: MonomialIndex, dedupe: bool = True) -> LPInstance:
    """max mu(1)  s.t.  mu(m) >= -1,  -1 <= mu(m p_j) <= 1,  mu free."""
    N = P.num_vars
    if not P.axioms:
        raise ValueError("empty polynomial system has no refutation")
    if N != idx.num_vars:
        raise ValueError("monomial index does not match the system's variables")
    rows: list[Row] = []
    labels = []
    seen = set()

    def add(vec, sense, rhs, name, label):
        if dedupe:
            if not vec:
                return
            key = (_key(vec), sense, rhs)
            if key in seen:
                return
            seen.add(key)
        rows.append(Row({r: Fraction(v) for r, v in vec.items()}, sense, Fraction(rhs), name))
        labels.append(label)

    for a, m in enumerate(idx.monomials):
        add({r: 1 for r in _assignments_of(m, N)}, ">=", -1, f"pos{a}", ("monomial", None, a))
    for j, ax in enumerate(P.axioms):
        for a, m in enumerate(idx.monomials):
            vec = _vector(_product_terms(m, ax.poly), N)
            s = 1
            if dedupe and vec and vec[min(vec)] < 0:
                # |v.mu| <= 1 and |(-v).mu| <= 1 are the same pair of rows
                s = -1
                vec = {r: -v for r, v in vec.items()}
            add(vec, "<=", 1, f"up{j}_{a}", ("axiom", j, a, s))
            add(vec, ">=", -1, f"lo{j}_{a}", ("axiom", j, a, s))
    nv = 1 << N
    return LPInstance("max", [Fraction(1)] * nv, [None] * nv, rows,
                      [f"mu{r}" for r in range(nv)], kind="dual",
                      var_labels=list(range(nv)), row_labels=labels,
                      meta={"num_vars": N, "capped": idx.capped})


# solving ------------------------------------------------------------------

def _negated(lp: LPInstance) -> LPInstance:
    return LPInstance("min" if lp.sense == "max" else "max", [-c for c in lp.objective],
                      lp.lower, lp.rows, lp.var_names, lp.kind, lp.var_labels, lp.row_labels, lp.meta)


def _solve_min_direct(lp: LPInstance, max_iter: int) -> LPResult:
    assert lp.sense == "min"
    # variable columns, splitting free variables
    cols: list[dict] = []
    cost: list[Fraction] = []
    owner: list[tuple[int, int]] = []
    percol: list[dict] = [dict() for _ in range(lp.num_vars)]
    for r, row in enumerate(lp.rows):
        for j, a in row.coefs.items():
            percol[j][r] = a
    for j in range(lp.num_vars):
        cols.append(percol[j])
        cost.append(lp.objective[j])
        owner.append((j, 1))
        if lp.lower[j] is None:
            cols.append({r: -a for r, a in percol[j].items()})
            cost.append(-lp.objective[j])
            owner.append((j, -1))
    for r, row in enumerate(lp.rows):
        if row.sense == "<=":
            cols.append({r: 1})
        elif row.sense == ">=":
            cols.append({r: -1})
        else:
            continue
        cost.append(Fraction(0))
        owner.append((-1, 0))
    res = solve_standard(cols, [row.rhs for row in lp.rows], cost, max_iter)
    if res.status != "optimal":
        return LPResult(res.status, None, None, None, res.iterations)
    x = [Fraction(0)] * lp.num_vars
    for (j, s), v in zip(owner, res.x):
        if j >= 0 and v:
            x[j] += s * v
    return LPResult("optimal", res.objective, x, res.y, res.iterations)


def dualize(lp: LPInstance) -> LPInstance:
    """Mechanical LP dual of a min problem.

    Row r with sense >= (<=, =) gets a dual variable y_r >= 0 (<= 0, free); a
    <= row is represented through z_r = -y_r >= 0.  Each primal variable gives
    a dual row: <= c_j if it is nonnegative, = c_j if it is free.
    """
    assert lp.sense == "min"
    flip = [(-1 if row.sense == "<=" else 1) for row in lp.rows]
    lower = [None if row.sense == "=" else 0 for row in lp.rows]
    obj = [f * row.rhs for f, row in zip(flip, lp.rows)]
    drows = [Row({}, "<=" if lp.lower[j] == 0 else "=", lp.objective[j], f"d{j}")
             for j in range(lp.num_vars)]
    for r, row in enumerate(lp.rows):
        for j, a in row.coefs.items():
            drows[j].coefs[r] = flip[r] * a
    return LPInstance("max", obj, lower, drows, [f"y{r}" for r in range(len(lp.rows))],
                      kind="mechanical-dual", meta={"flip": flip})


def _solve_min(lp: LPInstance, max_iter: int) -> LPResult:
    nstd = lp.num_vars + sum(1 for v in lp.lower if v is None)
    if len(lp.rows) <= nstd:
        return _solve_min_direct(lp, max_iter)
    # many rows, few variables: solve the dual, whose basis is much smaller
    D = dualize(lp)
    flip = D.meta["flip"]
    res = _solve_min_direct(_negated(D), max_iter)
    if res.status == "optimal":
        y = [f * v for f, v in zip(flip, res.primal)]
        x = [-v for v in res.dual]
        return LPResult("optimal", -res.optimum, x, y, res.iterations, route="dualized")
    if res.status == "unbounded":
        return LPResult("infeasible", None, None, None, res.iterations, route="dualized")
    # dual infeasible: the primal is unbounded or infeasible; test feasibility
    origin_ok = all({"=": 0 == row.rhs, "<=": 0 <= row.rhs, ">=": 0 >= row.rhs}[row.sense]
                    for row in lp.rows)
    if origin_ok:
        return LPResult("unbounded", None, None, None, res.iterations, route="dualized")
    zero =LPInstance("min", [Fraction(0)] * lp.num_vars, lp.lower, lp.rows, lp.var_names)
    probe = _solve_min_direct(_negated(dualize(zero)), max_iter)
    status = "unbounded" if probe.status == "optimal" else "infeasible"
    return LPResult(status, None, None, None, res.iterations + probe.iterations, route="dualized")


def _check_optimal(lp: LPInstance, res: LPResult) -> None:
    """Exact feasibility of both points and equality of objectives."""
    x, y = res.primal, res.dual
    for j, lo in enumerate(lp.lower):
        assert lo is None or x[j] >= 0, "primal bound violated"
    reduced = list(lp.objective)
    for r, row in enumerate(lp.rows):
        lhs = sum((a * x[j] for j, a in row.coefs.items()), Fraction(0))
        ok = {"=": lhs == row.rhs, "<=": lhs <= row.rhs, ">=": lhs >= row.rhs}[row.sense]
        assert ok, f"primal row {r} violated"
        if y[r]:
            for j, a in row.coefs.items():
                reduced[j] -= a * y[r]
        sgn = 1 if lp.sense == "min" else -1
        if row.sense == ">=":
            assert sgn * y[r] >= 0, "dual sign violated"
        elif row.sense == "<=":
            assert sgn * y[r] <= 0, "dual sign violated"
    sgn = 1 if lp.sense == "min" else -1
    for j, lo in enumerate(lp.lower):
        if lo is None:
            assert reduced[j] == 0, "dual equality violated"
        else:
            assert sgn * reduced[j] >= 0, "dual inequality violated"
    cx = sum((c * v for c, v in zip(lp.objective, x)), Fraction(0))
    by = sum((row.rhs * v for row, v in zip(lp.rows, y)), Fraction(0))
    assert cx == by == res.optimum, "strong duality failed"


def solve_exact(lp: LPInstance, max_iter: int = 1_000_000) -> LPResult:
    """Exact optimum plus primal and dual points (dual: one multiplier per row).

    At optimality the objective equals sum_r rhs_r * dual_r, and both points
    are checked for exact feasibility before returning.
    """
    if lp.sense == "min":
        res = _solve_min(lp, max_iter)
    else:
        res = _solve_min(_negated(lp), max_iter)
        if res.status == "optimal":
            res = LPResult("optimal", -res.optimum, res.primal, [-v for v in res.dual],
                           res.iterations, res.route)
    if res.status == "optimal":
        _check_optimal(lp, res)
    return res


# extraction and Def. of pseudo-measures --------------------------------------

@dataclass
class PseudoMeasure:
    num_vars: int
    values: list[Fraction]  # indexed by assignment bitmask
    delta: Fraction | None = None

    def of(self, m: Monomial | None, _cache: dict | None = None) -> Fraction:
        if m is None:
            return Fraction(0)
        if _cache is not None and m in _cache:
            return _cache[m]
        v = sum((self.values[r] for r in _assignments_of(m, self.num_vars)), Fraction(0))
        if _cache is not None:
            _cache[m] = v
        return v

    def to_json(self) -> dict:
        return {"num_vars": self.num_vars, "values": [fmt_q(v) for v in self.values],
                "delta": None if self.delta is None else fmt_q(self.delta)}


def extract_solutions(lp: LPInstance, res: LPResult, P: PolynomialSystem,
                      idx: MonomialIndex) -> tuple[Refutation, PseudoMeasure]:
    """Read a refutation and a normalised pseudo-measure off an optimal result."""
    if res.status != "optimal":
        raise ValueError(f"cannot extract from a {res.status} result")
    mults = [Polynomial() for _ in P.axioms]
    f0 = Polynomial()
    if lp.kind == "primal":
        for label, v in zip(lp.var_labels, res.primal):
            if not v:
                continue
            m = idx.monomials[label[2]]
            if label[0] == "alpha":
                f0.add_term(m, v)
            else:
                mults[label[1]].add_term(m, label[3] * v)
        mu = list(res.dual)
    elif lp.kind == "dual":
        # Row multipliers of the max problem: monomial rows carry -alpha(m);
        # an axiom row with vector s*(m p_j) contributes s*y to g_j's m-coefficient.
        for label, v in zip(lp.row_labels, res.dual):
            if not v:
                continue
            m = idx.monomials[label[2]]
            if label[0] == "monomial":
                f0.add_term(m, -v)
            else:
                mults[label[1]].add_term(m, label[3] * v)
        mu = list(res.primal)
    else:
        raise ValueError("extraction needs an LP built by build_primal or build_dual")
    total = sum(mu, Fraction(0))
    measure = PseudoMeasure(P.num_vars, [v / total for v in mu], 1 / res.optimum)
    return Refutation(mults, f0, 1), measure


@dataclass
class PseudoMeasureReport:
    mu_one: Fraction
    max_axiom_abs: Fraction
    worst_axiom: tuple | None
    min_monomial: Fraction
    worst_monomial: Monomial | None
    delta: Fraction
    passed: bool
    violations: list[str]

    def to_json(self) -> dict:
        return {
            "mu_one": fmt_q(self.mu_one),
            "max_axiom_abs": fmt_q(self.max_axiom_abs),
            "worst_axiom": None if self.worst_axiom is None else
            [self.worst_axiom[0], repr(self.worst_axiom[1])],
            "min_monomial": fmt_q(self.min_monomial),
            "worst_monomial": repr(self.worst_monomial),
            "delta": fmt_q(self.delta),
            "passed": self.passed,
            "violations": self.violations,
        }


def check_pseudo_measure(mu: PseudoMeasure, P: PolynomialSystem, delta,
                         idx: MonomialIndex) -> PseudoMeasureReport:
    delta = Fraction(delta)
    cache: dict = {}
    one = mu.of(Monomial(), cache)
    worst_ax, worst_ax_at = Fraction(0), None
    worst_m, worst_m_at = None, None
    for m in idx.monomials:
        val = mu.of(m, cache)
        if worst_m is None or val < worst_m:
            worst_m, worst_m_at = val, m
        for j, ax in enumerate(P.axioms):
            s = sum((c * mu.of(mm, cache) for mm, c in _product_terms(m, ax.poly)), Fraction(0))
            if abs(s) > worst_ax or worst_ax_at is None:
                worst_ax, worst_ax_at = abs(s), (j, m)
    violations = []
    if one != 1:
        violations.append(f"mu(1) = {one} != 1")
    if worst_ax > delta:
        violations.append(f"|mu(m*p_{worst_ax_at[0]})| = {worst_ax} > {delta} at m = {worst_ax_at[1]!r}")
    if worst_m is not None and worst_m < -delta:
        violations.append(f"mu({worst_m_at!r}) = {worst_m} < -{delta}")
    return PseudoMeasureReport(one, worst_ax, worst_ax_at, worst_m, worst_m_at, delta,
                               not violations, violations)


# export -------------------------------------------------------------------

def _num(q: Fraction) -> str:
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    return repr(float(q))


def _expr(coefs: Sequence[tuple[str, Fraction]]) -> str:
    parts = []
    for name, c in coefs:
        if c == 0:
            continue
        sgn = "-" if c < 0 else "+"
        mag = abs(c)
        term = name if mag == 1 else f"{_num(mag)} {name}"
        parts.append(f"{sgn} {term}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp(lp: LPInstance, path) -> None:
    """Write the LP in CPLEX LP text format."""
    names = lp.var_names
    lines = [f"\\ {lp.kind} LP, {lp.num_vars} variables, {len(lp.rows)} constraints"]
    lines.append("Minimize" if lp.sense == "min" else "Maximize")
    obj = _expr([(names[j], c) for j, c in enumerate(lp.objective)])
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    op = {"=": "=", "<=": "<=", ">=": ">="}
    for r, row in enumerate(lp.rows):
        body = _expr([(names[j], row.coefs[j]) for j in sorted(row.coefs)])
        if body == "0":
            body = f"0 {names[0]}"
        lines.append(f" c{r}: {body} {op[row.sense]} {_num(row.rhs)}")
    lines.append("Bounds")
    for j, lo in enumerate(lp.lower):
        if lo is None:
            lines.append(f" {names[j]} free")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def result_bundle(res: LPResult, refutation: Refutation | None = None,
                  measure: PseudoMeasure | None = None) -> dict:
    return {
        "status": res.status,
        "optimum": None if res.optimum is None else fmt_q(res.optimum),
        "refutation": None if refutation is None else refutation.to_json(),
        "pseudo_measure": None if measure is None else measure.to_json(),
    }


def write_bundle(path, bundle: dict) -> None:
    with open(path, "w") as fh:
        json.dump(bundle, fh, indent=1)
        fh.write("\n")
