"""Exact coefficient field: rational functions over QQ in the chart coordinates.

A :class:`ScalarField` fixes the coordinate names and a polynomial backend;
:class:`RationalExpr` values are kept in canonical form (numerator and
denominator coprime, denominator monic under graded-lex order), so equality
is structural.  :class:`ComplexExpr` pairs two of them.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Callable, Sequence

from ._polybackend import make_backend

__all__ = [
    "ScalarField",
    "RationalExpr",
    "ComplexExpr",
    "ExprSyntaxError",
    "SingularMatrixError",
    "parse_expr",
    "arith",
    "partial",
    "invert_matrix",
    "matmul",
    "determinant",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``pos`` is the 0-based character offset."""

    def __init__(self, msg, text="", pos=0):
        self.msg = msg
        self.text = text
        self.pos = pos
        where = f" at position {pos}" if text else ""
        super().__init__(f"{msg}{where}" + (f": {text!r}" if text else ""))


class SingularMatrixError(ZeroDivisionError):
    pass


class ScalarField:
    """The field QQ(x_1, ..., x_N) over named coordinates."""

    def __init__(self, coords: Sequence[str], backend: str | None = None):
        coords = tuple(coords)
        for c in coords:
            if not _NAME_RE.match(c):
                raise ValueError(f"invalid coordinate name {c!r}")
        if len(set(coords)) != len(coords):
            raise ValueError("duplicate coordinate names")
        self.coords = coords
        self.poly = make_backend(coords, backend)
        self.zero = RationalExpr(self, self.poly.zero, self.poly.one)
        self.one = RationalExpr(self, self.poly.one, self.poly.one)

    @property
    def backend(self) -> str:
        return self.poly.name

    @property
    def nvars(self) -> int:
        return len(self.coords)

    def __repr__(self):
        return f"ScalarField({list(self.coords)!r}, backend={self.backend!r})"

    def __eq__(self, other):
        return isinstance(other, ScalarField) and self.coords == other.coords

    def __hash__(self):
        return hash(self.coords)

    def const(self, c) -> RationalExpr:
        if isinstance(c, RationalExpr):
            return c
        c = Fraction(c)
        if c == 0:
            return self.zero
        if c == 1:
            return self.one
        return RationalExpr(self, self.poly.const(c), self.poly.one)

    def gen(self, i: int) -> RationalExpr:
        return RationalExpr(self, self.poly.gen(i), self.poly.one)

    def var(self, name: str) -> RationalExpr:
        return self.gen(self.coords.index(name))

    def make(self, num, den) -> RationalExpr:
        """Build a canonical fraction from backend polynomials."""
        P = self.poly
        if P.is_zero(den):
            raise ZeroDivisionError("zero denominator")
        if P.is_zero(num):
            return self.zero
        if not P.is_constant(den):
            g = P.gcd(num, den)
            if not P.is_constant(g):
                num = P.exact_div(num, g)
                den = P.exact_div(den, g)
        lc = P.leading_coeff(den)
        if P.is_constant(den):
            return RationalExpr(self, P.scale(num, 1 / lc), P.one)
        if lc != 1:
            num = P.scale(num, 1 / lc)
            den = P.scale(den, 1 / lc)
        return RationalExpr(self, num, den)

    def parse(self, text: str) -> RationalExpr:
        return parse_expr(text, self)


class RationalExpr:
    """Canonical ``num/den`` with coprime polynomials and monic denominator."""

    __slots__ = ("field", "num", "den")

    def __init__(self, field, num, den):
        self.field = field
        self.num = num
        self.den = den

    # -- predicates -------------------------------------------------------
    def is_zero(self) -> bool:
        return self.field.poly.is_zero(self.num)

    def __bool__(self):
        return not self.field.poly.is_zero(self.num)

    def is_polynomial(self) -> bool:
        return self.field.poly.is_one(self.den)

    def is_constant(self) -> bool:
        P = self.field.poly
        return P.is_one(self.den) and P.is_constant(self.num)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not a constant")
        P = self.field.poly
        return P.leading_coeff(self.num) if not P.is_zero(self.num) else Fraction(0)

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, RationalExpr):
            return other
        if isinstance(other, (int, Fraction)):
            return self.field.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        F = self.field
        P = F.poly
        if P.is_zero(self.num):
            return other
        if P.is_zero(other.num):
            return self
        a, b, c, d = self.num, self.den, other.num, other.den
        b1, d1 = P.is_one(b), P.is_one(d)
        if b1 and d1:
            s = a + c
            return RationalExpr(F, s, b) if not P.is_zero(s) else F.zero
        # gcd(a + c*b, b) = gcd(a, b) = 1, so no reduction is needed
        if d1:
            return RationalExpr(F, a + c * b, b)
        if b1:
            return RationalExpr(F, a * d + c, d)
        if b == d:
            return F.make(a + c, b)
        return F.make(a * d + c * b, b * d)

    __radd__ = __add__

    def __neg__(self):
        return RationalExpr(self.field, -self.num, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return self.field.zero
            return RationalExpr(self.field, self.field.poly.scale(self.num, other), self.den)
        if not isinstance(other, RationalExpr):
            return NotImplemented
        F = self.field
        P = F.poly
        a, b, c, d = self.num, self.den, other.num, other.den
        if P.is_zero(a) or P.is_zero(c):
            return F.zero
        b1, d1 = P.is_one(b), P.is_one(d)
        if b1 and d1:
            return RationalExpr(F, a * c, b)
        if not d1:
            g1 = P.gcd(a, d)
            if not P.is_constant(g1):
                a = P.exact_div(a, g1)
                d = P.exact_div(d, g1)
        if not b1:
            g2 = P.gcd(c, b)
            if not P.is_constant(g2):
                c = P.exact_div(c, g2)
                b = P.exact_div(b, g2)
        den = b * d
        lc = P.leading_coeff(den)
        if P.is_constant(den):
            return RationalExpr(F, P.scale(a * c, 1 / lc), P.one)
        if lc != 1:
            return RationalExpr(F, P.scale(a * c, 1 / lc), P.scale(den, 1 / lc))
        return RationalExpr(F, a * c, den)

    __rmul__ = __mul__

    def inverse(self) -> RationalExpr:
        if self.is_zero():
            raise ZeroDivisionError("division by zero rational function")
        return self.field.make(self.den, self.num)

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other * self.inverse()

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer exponents are supported")
        result = self.field.one
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def diff(self, i: int) -> RationalExpr:
        P = self.field.poly
        if not 0 <= i < self.field.nvars:
            raise IndexError(f"coordinate index {i} out of range")
        if P.is_one(self.den):
            return RationalExpr(self.field, P.deriv(self.num, i), self.den)
        n, d = self.num, self.den
        return self.field.make(P.deriv(n, i) * d - n * P.deriv(d, i), d * d)

    # -- comparison and printing ------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = self.field.const(other)
        if not isinstance(other, RationalExpr):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __hash__(self):
        P = self.field.poly
        return hash((tuple(P.terms(self.num)), tuple(P.terms(self.den))))

    def __str__(self):
        return format_rational(self)

    def __repr__(self):
        return f"RationalExpr({format_rational(self)!r})"


def _format_poly(field: ScalarField, p) -> str:
    terms = field.poly.terms(p)
    if not terms:
        return "0"
    out = []
    for idx, (exps, c) in enumerate(terms):
        mono = "*".join(
            name if k == 1 else f"{name}^{k}"
            for name, k in zip(field.coords, exps) if k
        )
        mag = abs(c)
        if mono:
            s = mono if mag == 1 else f"{mag}*{mono}"
        else:
            s = str(mag)
        if idx == 0:
            out.append(("-" if c < 0 else "") + s)
        else:
            out.append((" - " if c < 0 else " + ") + s)
    return "".join(out)


def format_rational(a: RationalExpr) -> str:
    """Deterministic rendering in the input grammar (re-parses to ``a``)."""
    F = a.field
    num = _format_poly(F, a.num)
    if F.poly.is_one(a.den):
        return num
    den = _format_poly(F, a.den)
    nterms = len(F.poly.terms(a.num))
    if nterms > 1 or "/" in num:
        num = f"({num})"
    return f"{num}/({den})"


class ComplexExpr:
    """``re + i*im`` with exact rational-function parts."""

    __slots__ = ("re", "im")

    def __init__(self, re, im=None):
        self.re = re
        self.im = re.field.zero if im is None else im

    @property
    def field(self):
        return self.re.field

    def is_zero(self) -> bool:
        return self.re.is_zero() and self.im.is_zero()

    def __bool__(self):
        return not self.is_zero()

    def is_real(self) -> bool:
        return self.im.is_zero()

    def __add__(self, other):
        if isinstance(other, ComplexExpr):
            return ComplexExpr(self.re + other.re, self.im + other.im)
        return ComplexExpr(self.re + other, self.im)

    __radd__ = __add__

    def __neg__(self):
        return ComplexExpr(-self.re, -self.im)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, ComplexExpr):
            a, b, c, d = self.re, self.im, other.re, other.im
            if b.is_zero():
                return ComplexExpr(a * c, a * d)
            if d.is_zero():
                return ComplexExpr(a * c, b * c)
            if a.is_zero():
                return ComplexExpr(-(b * d), b * c)
            if c.is_zero():
                return ComplexExpr(-(b * d), a * d)
            return ComplexExpr(a * c - b * d, a * d + b * c)
        return ComplexExpr(self.re * other, self.im * other)

    __rmul__ = __mul__

    def times_i_power(self, p: int) -> ComplexExpr:
        """Multiply by ``i**p``."""
        p %= 4
        if p == 0:
            return self
        if p == 1:
            return ComplexExpr(-self.im, self.re)
        if p == 2:
            return ComplexExpr(-self.re, -self.im)
        return ComplexExpr(self.im, -self.re)

    def conjugate(self) -> ComplexExpr:
        return ComplexExpr(self.re, -self.im)

    def inverse(self) -> ComplexExpr:
        n = self.re * self.re + self.im * self.im
        return ComplexExpr(self.re / n, -self.im / n)

    def diff(self, i: int) -> ComplexExpr:
        return ComplexExpr(self.re.diff(i), self.im.diff(i))

    def __eq__(self, other):
        if isinstance(other, ComplexExpr):
            return self.re == other.re and self.im == other.im
        if isinstance(other, (RationalExpr, int, Fraction)):
            return self.im.is_zero() and self.re == other
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __str__(self):
        if self.im.is_zero():
            return str(self.re)
        if self.re.is_zero():
            return f"i*({self.im})"
        return f"{self.re} + i*({self.im})"

    __repr__ = __str__


# ---------------------------------------------------------------------------
# expression parsing

_TOKEN_RE = re.compile(r"(\d+)|([A-Za-z_][A-Za-z0-9_]*)")


def tokenize(text: str):
    """Yield ``(kind, value, pos)`` with kind in {'int', 'name', 'op', 'end'}."""
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos == n:
            yield ("end", None, n)
            return
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch not in "+-*/^()":
                raise ExprSyntaxError(f"unexpected character {ch!r}", text, pos)
            yield ("op", ch, pos)
            pos += 1
            continue
        if m.group(1) is not None:
            yield ("int", int(m.group(1)), pos)
        else:
            yield ("name", m.group(2), pos)
        pos = m.end()


class ExprParser:
    """Recursive-descent parser for ``+ - * / ^`` and parentheses.

    Values are produced by the hooks of an *algebra* object:
    ``number(int)``, ``symbol(name, pos)``, ``add``, ``sub``, ``neg``, ``mul``,
    ``div(a, b, pos)`` and ``caret(a, b, b_is_int_literal, pos)``.
    """

    def __init__(self, text: str, algebra):
        self.text = text
        self.alg = algebra
        self.tokens = list(tokenize(text))
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, pos=None):
        if pos is None:
            pos = self.peek()[2]
        raise ExprSyntaxError(msg, self.text, pos)

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression")
        value = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected token {val!r}", pos)
        return value

    def expr(self):
        value = self.term()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "+-":
                self.take()
                rhs = self.term()
                value = self.alg.add(value, rhs) if val == "+" else self.alg.sub(value, rhs)
            else:
                return value

    def term(self):
        value = self.unary()
        while True:
            kind, val, pos = self.peek()
            if kind == "op" and val in "*/":
                self.take()
                rhs = self.unary()
                value = self.alg.mul(value, rhs) if val == "*" else self.alg.div(value, rhs, pos)
            else:
                return value

    def unary(self):
        kind, val, pos = self.peek()
        if kind == "op" and val in "+-":
            self.take()
            operand = self.unary()
            return self.alg.neg(operand) if val == "-" else operand
        return self.power()

    def power(self):
        value = self.atom()
        while True:
            kind, val, pos = self.peek()
            if not (kind == "op" and val == "^"):
                return value
            self.take()
            nkind, nval, npos = self.peek()
            if nkind == "op" and nval == "-":
                self.error("negative exponents are not supported; write an explicit division", npos)
            if nkind == "int":
                self.take()
                value = self.alg.caret(value, nval, True, pos)
            else:
                rhs = self.atom()
                value = self.alg.caret(value, rhs, False, pos)

    def atom(self):
        kind, val, pos = self.take()
        if kind == "int":
            return self.alg.number(val)
        if kind == "name":
            return self.alg.symbol(val, pos)
        if kind == "op" and val == "(":
            value = self.expr()
            k2, v2, p2 = self.take()
            if not (k2 == "op" and v2 == ")"):
                self.error("expected ')'", p2)
            return value
        if kind == "end":
            self.error("unexpected end of expression", pos)
        self.error(f"unexpected token {val!r}", pos)


class _ScalarAlgebra:
    def __init__(self, field, text):
        self.F = field
        self.text = text

    def number(self, k):
        return self.F.const(k)

    def symbol(self, name, pos):
        if name not in self.F.coords:
            raise ExprSyntaxError(f"unknown symbol {name!r}", self.text, pos)
        return self.F.var(name)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def div(self, a, b, pos):
        if b.is_zero():
            raise ExprSyntaxError("division by zero", self.text, pos)
        return a / b

    def caret(self, a, b, is_int, pos):
        if not is_int:
            raise ExprSyntaxError("exponent must be a nonnegative integer literal", self.text, pos)
        return a**b


def parse_expr(text: str, field: ScalarField | Sequence[str]) -> RationalExpr:
    """Parse ``text`` into a canonical :class:`RationalExpr`.

    ``field`` is a :class:`ScalarField` or a list of coordinate names.
    """
    if not isinstance(field, ScalarField):
        field = ScalarField(field)
    return ExprParser(text, _ScalarAlgebra(field, text)).parse()


def arith(a: RationalExpr, b: RationalExpr, op: str) -> RationalExpr:
    ops: dict[str, Callable] = {
        "add": lambda: a + b,
        "sub": lambda: a - b,
        "mul": lambda: a * b,
        "div": lambda: a / b,
    }
    try:
        return ops[op]()
    except KeyError:
        raise ValueError(f"unknown operation {op!r}") from None


def partial(a: RationalExpr, i: int) -> RationalExpr:
    """Partial derivative with respect to the coordinate of 0-based index ``i``."""
    return a.diff(i)


# ---------------------------------------------------------------------------
# matrices (lists of lists of RationalExpr)

def matmul(A, B):
    F = A[0][0].field
    n, k, m = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = F.zero
            for t in range(k):
                if A[i][t] and B[t][j]:
                    s = s + A[i][t] * B[t][j]
            row.append(s)
        out.append(row)
    return out


def _eliminate(M):
    """Gauss-Jordan elimination; returns (inverse, det) or (None, 0)."""
    n = len(M)
    F = M[0][0].field
    A = [list(row) + [F.one if i == j else F.zero for j in range(n)] for i, row in enumerate(M)]
    det = F.one
    for col in range(n):
        piv = next((r for r in range(col, n) if A[r][col]), None)
        if piv is None:
            return None, F.zero
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            det = -det
        p = A[col][col]
        det = det * p
        inv_p = p.inverse()
        A[col] = [x * inv_p for x in A[col]]
        for r in range(n):
            if r != col and A[r][col]:
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A], det


def determinant(M) -> RationalExpr:
    return _eliminate(M)[1]


def invert_matrix(M):
    """Exact inverse of a square matrix of :class:`RationalExpr`."""
    n = len(M)
    if n == 0:
        return []
    if any(len(row) != n for row in M):
        raise ValueError("matrix is not square")
    inv, det = _eliminate(M)
    if inv is None:
        raise SingularMatrixError("matrix is singular (zero determinant)")
    return inv
