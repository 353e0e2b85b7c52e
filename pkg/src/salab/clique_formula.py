"""The k-clique polynomial system and the monomial/rectangle bridge.

Variables are the graph's vertices.  A monomial is a pair of disjoint vertex
sets (positive literals ``x_v`` and negated literals ``1 - x_v``); all algebra
happens modulo the Boolean ideal, so variables are idempotent and a monomial
holding both ``x_v`` and its negation is the zero marker ``None``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

from .graph_core import BlockGraph, Rectangle, iter_bits, mask_of
from .rational import fmt_q, parse_q


@dataclass(frozen=True, slots=True)
class Monomial:
    pos: int = 0  # bitmask of positive literals
    neg: int = 0  # bitmask of negated literals

    @classmethod
    def make(cls, pos: Iterable[int] = (), neg: Iterable[int] = ()) -> "Monomial | None":
        pm, nm = mask_of(pos), mask_of(neg)
        if pm & nm:
            return None
        return cls(pm, nm)

    @property
    def pos_set(self) -> frozenset[int]:
        return frozenset(iter_bits(self.pos))

    @property
    def neg_set(self) -> frozenset[int]:
        return frozenset(iter_bits(self.neg))

    @property
    def degree(self) -> int:
        return self.pos.bit_count() + self.neg.bit_count()

    def is_one(self) -> bool:
        return self.pos == 0 and self.neg == 0

    def __mul__(self, other: "Monomial") -> "Monomial | None":
        pos, neg = self.pos | other.pos, self.neg | other.neg
        if pos & neg:
            return None
        return Monomial(pos, neg)

    def holds(self, assignment: int) -> bool:
        """Value (0/1) of the monomial at an assignment given as a bitmask of true variables."""
        return (assignment & self.pos) == self.pos and not (assignment & self.neg)

    def sort_key(self):
        return (self.degree, sorted(iter_bits(self.pos)), sorted(iter_bits(self.neg)))

    def to_json(self) -> dict:
        return {"pos": sorted(iter_bits(self.pos)), "neg": sorted(iter_bits(self.neg))}

    def __repr__(self):
        if self.is_one():
            return "1"
        lits = [f"x{v}" for v in iter_bits(self.pos)] + [f"~x{v}" for v in iter_bits(self.neg)]
        return "*".join(lits)


ONE = Monomial()


class Polynomial:
    """Sparse map from canonical monomials to nonzero rationals."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms: dict[Monomial, Fraction] = {}
        if terms:
            items = terms.items() if isinstance(terms, dict) else terms
            for m, c in items:
                self.add_term(m, c)

    @classmethod
    def const(cls, c) -> "Polynomial":
        return cls({ONE: Fraction(c)})

    def add_term(self, m: Monomial | None, c) -> None:
        if m is None:
            return
        c = Fraction(c)
        if c == 0:
            return
        new = self.terms.get(m, 0) + c
        if new == 0:
            self.terms.pop(m, None)
        else:
            self.terms[m] = new

    def copy(self) -> "Polynomial":
        p = Polynomial()
        p.terms = dict(self.terms)
        return p

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = self.copy()
        for m, c in other.terms.items():
            out.add_term(m, c)
        return out

    def __neg__(self) -> "Polynomial":
        p = Polynomial()
        p.terms = {m: -c for m, c in self.terms.items()}
        return p

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def scale(self, c) -> "Polynomial":
        c = Fraction(c)
        if c == 0:
            return Polynomial()
        p = Polynomial()
        p.terms = {m: v * c for m, v in self.terms.items()}
        return p

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out = Polynomial()
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                out.add_term(m1 * m2, c1 * c2)
        return out

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def items(self) -> list[tuple[Monomial, Fraction]]:
        return sorted(self.terms.items(), key=lambda kv: kv[0].sort_key())

    def evaluate(self, assignment: int) -> Fraction:
        return sum((c for m, c in self.terms.items() if m.holds(assignment)), Fraction(0))

    def to_json(self) -> list[dict]:
        return [dict(m.to_json(), coef=fmt_q(c)) for m, c in self.items()]

    @classmethod
    def from_json(cls, rows: list[dict]) -> "Polynomial":
        p = cls()
        for row in rows:
            m = Monomial.make(row.get("pos", ()), row.get("neg", ()))
            if m is None:
                raise ValueError(f"monomial {row} has a variable both plain and negated")
            p.add_term(m, parse_q(row["coef"]))
        return p

    def __repr__(self):
        if not self.terms:
            return "0"
        return " + ".join(f"{c}*{m}" for m, c in self.items())


@dataclass(frozen=True)
class Axiom:
    tag: tuple  # ("block", i) or ("edge", u, v)
    poly: Polynomial


@dataclass
class PolynomialSystem:
    num_vars: int
    axioms: list[Axiom]
    k: int | None = None
    n: int | None = None

    def __len__(self):
        return len(self.axioms)

    def to_json(self) -> dict:
        return {
            "num_vars": self.num_vars,
            "k": self.k,
            "n": self.n,
            "axioms": [{"tag": list(a.tag), "poly": a.poly.to_json()} for a in self.axioms],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PolynomialSystem":
        axioms = [Axiom(tuple(a["tag"]), Polynomial.from_json(a["poly"])) for a in obj["axioms"]]
        return cls(int(obj["num_vars"]), axioms, obj.get("k"), obj.get("n"))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PolynomialSystem":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def block_axiom(G: BlockGraph, i: int) -> Polynomial:
    p = Polynomial.const(-1)
    for v in G.block(i):
        p.add_term(Monomial(1 << v, 0), 1)
    return p


def build_clique_formula(G: BlockGraph) -> PolynomialSystem:
    axioms = [Axiom(("block", i), block_axiom(G, i)) for i in range(G.k)]
    for u, v in G.cross_pairs():
        if not G.adjacent(u, v):
            axioms.append(Axiom(("edge", u, v), Polynomial({Monomial((1 << u) | (1 << v), 0): 1})))
    return PolynomialSystem(G.num_vertices, axioms, G.k, G.n)


def point_assignment(t: Iterable[int]) -> int:
    """The assignment that sets exactly the tuple's vertices to 1, as a bitmask."""
    return mask_of(t)


def eval_at(obj, assignment: int) -> Fraction:
    if obj is None:
        return Fraction(0)
    if isinstance(obj, Monomial):
        return Fraction(int(obj.holds(assignment)))
    return obj.evaluate(assignment)


def ruled_out_rectangle(m: Monomial | None, n: int, k: int) -> Rectangle | None:
    """The rectangle of full tuples whose point assignment satisfies ``m``; None when empty."""
    if m is None:
        return None
    if m.pos & m.neg:
        return None
    sides = {}
    for i in range(k):
        bmask = ((1 << n) - 1) << (i * n)
        pos = m.pos & bmask
        if pos.bit_count() > 1:
            return None
        if pos:
            side = frozenset(iter_bits(pos))
        else:
            side = frozenset(iter_bits(bmask & ~m.neg))
        if not side:
            return None
        sides[i] = side
    top = m.pos | m.neg
    if top >> (k * n):
        raise ValueError("monomial mentions a vertex outside the graph")
    return Rectangle.of(n, sides)


def monomial_of_rectangle(Q: Rectangle, k: int) -> Monomial:
    n = Q.n
    if Q.blocks != tuple(range(k)) or Q.is_empty():
        raise ValueError("need a full rectangle with nonempty sides")
    pos = neg = 0
    for i, side in Q.sides:
        if len(side) == 1:
            pos |= mask_of(side)
        else:
            neg |= (((1 << n) - 1) << (i * n)) & ~mask_of(side)
    return Monomial(pos, neg)


def all_monomials(num_vars: int, max_degree: int | None = None) -> Iterator[Monomial]:
    """Every canonical nonzero monomial, constant first, then by degree."""
    from itertools import combinations, product

    top = num_vars if max_degree is None else min(max_degree, num_vars)
    for deg in range(top + 1):
        for support in combinations(range(num_vars), deg):
            for signs in product((0, 1), repeat=deg):
                pos = neg = 0
                for v, s in zip(support, signs):
                    if s:
                        neg |= 1 << v
                    else:
                        pos |= 1 << v
                yield Monomial(pos, neg)
