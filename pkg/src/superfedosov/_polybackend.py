"""Multivariate polynomial backends over QQ.

Two interchangeable backends expose the handful of primitives the rational
function layer needs.  ``FlintBackend`` wraps python-flint's ``fmpq_mpoly``
(compiled); ``SympyBackend`` wraps sympy's sparse ``PolyElement`` and is the
pure-Python fallback.  Both order monomials graded-lexicographically.
"""
from __future__ import annotations

from fractions import Fraction

try:  # pragma: no cover - import guard
    import flint as _flint
except ImportError:  # pragma: no cover
    _flint = None

HAVE_FLINT = _flint is not None


class FlintBackend:
    name = "flint"

    def __init__(self, names):
        self.names = tuple(names)
        # flint needs at least one generator; a dummy one is never used
        self._dummy = not self.names
        gens = self.names or ("_z",)
        self.ctx = _flint.fmpq_mpoly_ctx.get(gens, "deglex")
        self._gens = self.ctx.gens()
        self.zero = self.ctx.from_dict({})
        self.one = self.ctx.constant(1)

    def gen(self, i):
        return self._gens[i]

    def const(self, c):
        c = Fraction(c)
        return self.ctx.constant(_flint.fmpq(c.numerator, c.denominator))

    def from_terms(self, terms):
        return self.ctx.from_dict(
            {tuple(e): _flint.fmpq(Fraction(c).numerator, Fraction(c).denominator)
             for e, c in terms})

    @staticmethod
    def is_zero(p):
        return p.is_zero()

    @staticmethod
    def is_one(p):
        return p.is_one()

    @staticmethod
    def gcd(p, q):
        return p.gcd(q)

    @staticmethod
    def exact_div(p, q):
        return p / q

    @staticmethod
    def deriv(p, i):
        return p.derivative(i)

    @staticmethod
    def is_constant(p):
        return p.is_constant()

    @staticmethod
    def leading_coeff(p):
        c = p.leading_coefficient()
        return Fraction(int(c.p), int(c.q))

    def scale(self, p, c):
        c = Fraction(c)
        return p * _flint.fmpq(c.numerator, c.denominator)

    def terms(self, p):
        n = len(self.names)
        return [(tuple(int(x) for x in e[:n]), Fraction(int(c.p), int(c.q)))
                for e, c in p.terms()]


class SympyBackend:
    name = "sympy"

    def __init__(self, names):
        from sympy.polys.domains import QQ
        from sympy.polys.orderings import grlex
        from sympy.polys.rings import ring

        self.names = tuple(names)
        self._QQ = QQ
        gens = self.names or ("_z",)
        self.ring, *self._gens = ring(",".join(gens), QQ, grlex)
        self.zero = self.ring.zero
        self.one = self.ring.one

    def gen(self, i):
        return self._gens[i]

    def const(self, c):
        c = Fraction(c)
        return self.ring(self._QQ(c.numerator, c.denominator))

    def from_terms(self, terms):
        p = self.ring.zero
        for e, c in terms:
            c = Fraction(c)
            mono = self.ring.one
            for g, k in zip(self._gens, e):
                mono = mono * g**k
            p += mono * self._QQ(c.numerator, c.denominator)
        return p

    @staticmethod
    def is_zero(p):
        return not p

    @staticmethod
    def is_one(p):
        return p.is_one

    @staticmethod
    def gcd(p, q):
        return p.gcd(q)

    @staticmethod
    def exact_div(p, q):
        return p.exquo(q)

    def deriv(self, p, i):
        return p.diff(self._gens[i])

    @staticmethod
    def is_constant(p):
        return p.is_ground

    def leading_coeff(self, p):
        c = p.LC
        return Fraction(int(c.numerator), int(c.denominator))

    def scale(self, p, c):
        c = Fraction(c)
        return p * self._QQ(c.numerator, c.denominator)

    def terms(self, p):
        n = len(self.names)
        return [(tuple(e[:n]), Fraction(int(c.numerator), int(c.denominator)))
                for e, c in p.terms()]


def make_backend(names, backend=None):
    """Return a polynomial backend for the given generator names.

    ``backend`` is ``"flint"``, ``"sympy"`` or ``None`` (flint when importable).
    """
    if backend is None:
        backend = "flint" if HAVE_FLINT else "sympy"
    if backend == "flint":
        if not HAVE_FLINT:
            raise ImportError("python-flint is not installed")
        return FlintBackend(names)
    if backend == "sympy":
        return SympyBackend(names)
    raise ValueError(f"unknown polynomial backend {backend!r}")
