"""Helpers for exact rationals and their "num/den" text form."""
from __future__ import annotations

from fractions import Fraction


def parse_q(text) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, int):
        return Fraction(text)
    if isinstance(text, str):
        return Fraction(text.strip())
    raise TypeError(f"cannot read {text!r} as an exact rational")


def fmt_q(q) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def bit_length_q(q: Fraction) -> int:
    """Binary encoding length: sign bit plus numerator and denominator bits."""
    q = Fraction(q)
    return 1 + max(1, abs(q.numerator).bit_length()) + max(1, q.denominator.bit_length())
