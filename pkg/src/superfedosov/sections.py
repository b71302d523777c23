"""Parsing sections of the Grassmann bundle: ``x1*e1^e2 + (1/2)*e1``.

Symbols are the chart coordinates, the frame duals ``e1..en`` and the
imaginary unit ``i``.  ``^`` followed by an integer literal is a power; any
other ``^`` is the wedge product, which needs a Grassmann factor on at least
one side.  Division is only by nonzero scalars.
"""
from __future__ import annotations

import re

from .galgebra import AlgebraElement, FedosovAlgebra, undeformed_mul
from .scalar import ExprParser, ExprSyntaxError

__all__ = ["parse_section", "is_section", "section_degree"]

_FRAME_RE = re.compile(r"e([1-9][0-9]*)$")


class _SectionAlgebra:
    def __init__(self, alg: FedosovAlgebra, text: str):
        self.alg = alg
        self.text = text

    def _scalar_of(self, x: AlgebraElement):
        if not x.terms:
            return self.alg.coeff(0)
        if len(x.terms) == 1:
            key, c = next(iter(x.terms.items()))
            if key[2] == 0:
                return c
        return None

    def number(self, k):
        return self.alg.scalar(k)

    def symbol(self, name, pos):
        alg = self.alg
        if name in alg.field.coords:
            return alg.scalar(alg.field.var(name))
        if name == "i":
            return alg.scalar(complex(0, 1))
        m = _FRAME_RE.match(name)
        if m:
            A = int(m.group(1))
            if A > alg.n:
                raise ExprSyntaxError(f"frame symbol {name!r} exceeds the bundle rank {alg.n}",
                                      self.text, pos)
            return alg.term(1, gra=[A - 1])
        raise ExprSyntaxError(f"unknown symbol {name!r}", self.text, pos)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return undeformed_mul(a, b)

    def div(self, a, b, pos):
        c = self._scalar_of(b)
        if c is None:
            raise ExprSyntaxError("can only divide by a scalar", self.text, pos)
        if c.is_zero():
            raise ExprSyntaxError("division by zero", self.text, pos)
        return a.scale(c.inverse())

    def caret(self, a, b, is_int, pos):
        if is_int:
            out = self.alg.one()
            for _ in range(b):
                out = undeformed_mul(out, a)
            return out
        if self._scalar_of(a) is not None and self._scalar_of(b) is not None:
            raise ExprSyntaxError("'^' between scalars needs an integer literal exponent",
                                  self.text, pos)
        return undeformed_mul(a, b)


def parse_section(text: str, alg: FedosovAlgebra) -> AlgebraElement:
    """Parse a Grassmann-valued section; result has no symmetric, form or hbar part."""
    return ExprParser(text, _SectionAlgebra(alg, text)).parse()


def is_section(F: AlgebraElement) -> bool:
    return all(k[0] == 0 and not any(k[1]) and k[3] == 0 for k in F.terms)


def section_degree(F: AlgebraElement) -> int | None:
    """Grassmann degree if F is homogeneous, else None."""
    degs = {bin(k[2]).count("1") for k in F.terms}
    return degs.pop() if len(degs) == 1 else None
