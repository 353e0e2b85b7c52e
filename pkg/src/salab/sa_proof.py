"""Semantic Sherali-Adams refutations: representation, two verifiers, size measures.

Two sign conventions meet here.  Certificate files use the textbook form

    sum_j g_j * p_j + f0 == -M          (mod the Boolean ideal)

while a ``Refutation`` object stores the multipliers negated, so that

    sum_j g_j * p_j - f0 - M == 0

which is exactly the vector identity checked over truth tables and the
equality constraint of the minimum-coefficient LP.  ``to_json``/``from_json``
and ``from_textbook`` perform the negation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .clique_formula import Monomial, Polynomial, PolynomialSystem
from .rational import bit_length_q, fmt_q

TRUTH_TABLE_GUARD = 24


@dataclass
class Refutation:
    multipliers: list[Polynomial]
    f0: Polynomial = field(default_factory=Polynomial)
    M: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("target must be a negative integer -M with M >= 1")
        for m, c in self.f0.terms.items():
            if c < 0:
                raise ValueError(f"f0 coefficient {c} of {m} is negative")

    @classmethod
    def from_textbook(cls, multipliers, f0=None, M: int = 1) -> "Refutation":
        """Build from multipliers g_j with sum g_j p_j + f0 == -M."""
        return cls([-g for g in multipliers], f0 or Polynomial(), M)

    def textbook_multipliers(self) -> list[Polynomial]:
        return [-g for g in self.multipliers]

    def scaled(self, c) -> "Refutation":
        return Refutation([g.scale(c) for g in self.multipliers], self.f0.scale(c), self.M)

    def expanded_terms(self, P: PolynomialSystem):
        """Uncancelled terms of sum_j g_j p_j - f0, as (coef, monomial-or-None)."""
        for g, ax in zip(self.multipliers, P.axioms):
            for m1, c1 in g.terms.items():
                for m2, c2 in ax.poly.terms.items():
                    yield c1 * c2, m1 * m2
        for m, c in self.f0.terms.items():
            yield -c, m

    def to_json(self) -> dict:
        return {
            "axiom_multipliers": [
                {"axiom": j, "poly": g.to_json()}
                for j, g in enumerate(self.textbook_multipliers()) if not g.is_zero()
            ],
            "f0": self.f0.to_json(),
            "target_M": self.M,
        }

    @classmethod
    def from_json(cls, obj: dict, num_axioms: int) -> "Refutation":
        mults = [Polynomial() for _ in range(num_axioms)]
        for entry in obj["axiom_multipliers"]:
            j = int(entry["axiom"])
            if not 0 <= j < num_axioms:
                raise ValueError(f"axiom index {j} out of range")
            mults[j] = mults[j] + Polynomial.from_json(entry["poly"])
        return cls.from_textbook(mults, Polynomial.from_json(obj.get("f0", [])), int(obj.get("target_M", 1)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path, num_axioms: int) -> "Refutation":
        with open(path) as fh:
            return cls.from_json(json.load(fh), num_axioms)


def _check_shape(P: PolynomialSystem, pi: Refutation) -> None:
    if len(pi.multipliers) != len(P.axioms):
        raise ValueError(f"{len(pi.multipliers)} multipliers for {len(P.axioms)} axioms")


def _overlap_count(a: Monomial, b: Monomial, N: int) -> int:
    """Inner product of the indicator vectors of a and b over {0,1}^N."""
    if (a.pos | b.pos) & (a.neg | b.neg):
        return 0
    fixed = (a.pos | b.pos | a.neg | b.neg).bit_count()
    return 1 << (N - fixed)


def verify_truth_table(P: PolynomialSystem, pi: Refutation) -> bool:
    """Accept iff the vector sum_j g_j p_j - f0 - M has squared norm zero.

    The squared norm is expanded into pairwise inner products of indicator
    vectors, each of which is a count of satisfying assignments.
    """
    N = P.num_vars
    if N > TRUTH_TABLE_GUARD:
        raise ValueError(f"{N} variables exceeds the truth-table guard {TRUTH_TABLE_GUARD}")
    _check_shape(P, pi)
    # Collect the three parts separately, as in the expansion of <pi, pi>.
    prods: dict[Monomial, Fraction] = {}
    for c, m in pi.expanded_terms(P):
        if m is None:
            continue
        prods[m] = prods.get(m, 0) + c
    prods = {m: c for m, c in prods.items() if c != 0}
    one = Monomial()
    items = list(prods.items()) + [(one, Fraction(-pi.M))]
    total = Fraction(0)
    for a, (ma, ca) in enumerate(items):
        total += ca * ca * _overlap_count(ma, ma, N)
        for mb, cb in items[a + 1:]:
            total += 2 * ca * cb * _overlap_count(ma, mb, N)
    return total == 0


def _to_plain(m: Monomial) -> dict[int, int]:
    """Expand a monomial with negated literals into +-1 multiples of plain monomials."""
    out = {m.pos: 1}
    neg = m.neg
    while neg:
        low = neg & -neg
        nxt = {}
        for mask, c in out.items():
            nxt[mask] = nxt.get(mask, 0) + c
            nxt[mask | low] = nxt.get(mask | low, 0) - c
        out = nxt
        neg ^= low
    return out


def multilinear_normal_form(terms) -> dict[int, Fraction]:
    acc: dict[int, Fraction] = {}
    for c, m in terms:
        if m is None or c == 0:
            continue
        for mask, s in _to_plain(m).items():
            acc[mask] = acc.get(mask, 0) + c * s
    return {k: v for k, v in acc.items() if v != 0}


def verify_canonical(P: PolynomialSystem, pi: Refutation) -> bool:
    """Accept iff sum_j g_j p_j - f0 reduces to the constant M in the plain multilinear basis."""
    _check_shape(P, pi)
    return multilinear_normal_form(pi.expanded_terms(P)) == {0: Fraction(pi.M)}


@dataclass(frozen=True)
class SizeReport:
    monomial_count: int
    bit_size: int
    coefficient_size: Fraction
    lp_objective: Fraction
    max_abs_coefficient: Fraction

    def to_json(self) -> dict:
        return {
            "monomial_count": self.monomial_count,
            "bit_size": self.bit_size,
            "coefficient_size": fmt_q(self.coefficient_size),
            "lp_objective": fmt_q(self.lp_objective),
            "max_abs_coefficient": fmt_q(self.max_abs_coefficient),
        }


def size_report(pi: Refutation, P: PolynomialSystem) -> SizeReport:
    """Size measures of a refutation.

    ``monomial_count``, ``coefficient_size`` and ``max_abs_coefficient`` are
    taken over the expanded products g_j * p_j and f0 without cancellation.
    ``bit_size`` adds, per expanded term, the coefficient's encoding length and
    one variable index per literal.  ``lp_objective`` sums absolute multiplier
    coefficients plus f0 coefficients.
    """
    _check_shape(P, pi)
    var_bits = max(1, (P.num_vars - 1).bit_length())
    count = 0
    bits = 0
    csize = Fraction(0)
    cmax = Fraction(0)
    for c, m in pi.expanded_terms(P):
        if m is None or c == 0:
            continue
        count += 1
        csize += abs(c)
        cmax = max(cmax, abs(c))
        bits += bit_length_q(c) + m.degree * (var_bits + 1)
    lp = sum((abs(c) for g in pi.multipliers for c in g.terms.values()), Fraction(0))
    lp += sum(pi.f0.terms.values(), Fraction(0))
    return SizeReport(count, bits, csize, lp, cmax)


def _is_unary(pi: Refutation) -> bool:
    coefs = [c for g in pi.multipliers for c in g.terms.values()] + list(pi.f0.terms.values())
    return all(abs(c) == 1 for c in coefs)


def normalize_unary(pi: Refutation) -> Refutation:
    """Turn a +-1-coefficient refutation of -M into one of -1 by dividing by M."""
    if not _is_unary(pi):
        raise ValueError("refutation is not unary (some coefficient is not +-1)")
    if pi.M == 1:
        return pi
    out = pi.scaled(Fraction(1, pi.M))
    return Refutation(out.multipliers, out.f0, 1)


def is_f_bounded(pi: Refutation, f, P: PolynomialSystem | None = None) -> bool:
    """True iff every coefficient has magnitude at most f.

    Without a system the stored multiplier and f0 coefficients are checked;
    with one, the expanded products are (identical for unit-coefficient axioms).
    """
    f = Fraction(f)
    if P is not None:
        return size_report(pi, P).max_abs_coefficient <= f
    coefs = [c for g in pi.multipliers for c in g.terms.values()] + list(pi.f0.terms.values())
    return all(abs(c) <= f for c in coefs)
