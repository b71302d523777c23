"""The graded algebra  W (x) Lambda  of symmetric (x) Grassmann (x) form-valued series.

A basis term is ``dx^{i_1} v ... v dx^{i_s}  (x)  e^{A_1} ^ ... ^ e^{A_d}
(x)  dx^{j_1} ^ ... ^ dx^{j_a}  hbar^t``.  Internally a term key is the tuple
``(t, sym, gra, asym)`` where ``sym`` is the exponent vector of the symmetric
factor (length 2m) and ``gra``/``asym`` are bitmasks of the Grassmann and
antisymmetric index sets.  Signs from reordering wedge factors are absorbed
into the coefficient, so each key appears at most once.

The symmetric factor behaves like a polynomial in fibre variables: ``v`` is
plain multiplication (no normalising factor) and ``i_s(d_i)`` is the partial
derivative in the i-th variable.  With that pairing
``delta delta* + delta* delta = deg_s + deg_a`` holds exactly.

Programmatic indices are 0-based; rendered text is 1-based.
"""
from __future__ import annotations

import re
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from .scalar import ComplexExpr, ExprSyntaxError, RationalExpr, ScalarField, parse_expr

__all__ = [
    "FedosovAlgebra",
    "AlgebraElement",
    "undeformed_mul",
    "degree",
    "parity",
    "conjugate",
    "insert",
    "delta",
    "delta_star",
    "delta_inv",
    "sigma",
    "wedge_sign",
    "mask_indices",
]


def popcount(x: int) -> int:
    return bin(x).count("1")


def mask_indices(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def wedge_sign(x: int, y: int) -> int:
    """Sign of sorting the concatenation of index sets ``x`` then ``y``.

    Returns 0 if the sets overlap.
    """
    if x & y:
        return 0
    if not x or not y:
        return 1
    inversions = 0
    while y:
        low = y & -y
        # elements of x above the current element of y
        inversions += popcount(x & ~((low << 1) - 1))
        y ^= low
    return -1 if inversions & 1 else 1


def _left_sign(mask: int, idx: int) -> int:
    """Sign of moving a factor at index ``idx`` to the front of ``mask``."""
    return -1 if popcount(mask & ((1 << idx) - 1)) & 1 else 1


def sort_sign(indices: Iterable[int]) -> tuple[int, int]:
    """Return ``(sign, mask)`` for a wedge of the given indices (sign 0 on repeats)."""
    mask = 0
    sign = 1
    for i in indices:
        bit = 1 << i
        if mask & bit:
            return 0, 0
        # moving i into place past larger ones already present
        if popcount(mask & ~((bit << 1) - 1)) & 1:
            sign = -sign
        mask |= bit
    return sign, mask


class FedosovAlgebra:
    """Shape data for the algebra: chart dimension ``2m``, bundle rank ``n``, field."""

    def __init__(self, field: ScalarField, m: int, n: int):
        if m < 1 or n < 0:
            raise ValueError("need m >= 1 and n >= 0")
        if field.nvars != 2 * m:
            raise ValueError(f"field has {field.nvars} coordinates, expected {2 * m}")
        self.field = field
        self.m = m
        self.dim = 2 * m
        self.n = n
        self.zero_sym = (0,) * self.dim
        self._cx_one = ComplexExpr(field.one)

    def __repr__(self):
        return f"FedosovAlgebra(m={self.m}, n={self.n}, coords={list(self.field.coords)})"

    def __eq__(self, other):
        return (isinstance(other, FedosovAlgebra) and self.m == other.m
                and self.n == other.n and self.field == other.field)

    def __hash__(self):
        return hash((self.m, self.n, self.field))

    # -- constructors -------------------------------------------------------
    def coeff(self, c) -> ComplexExpr:
        if isinstance(c, ComplexExpr):
            return c
        if isinstance(c, RationalExpr):
            return ComplexExpr(c)
        if isinstance(c, str):
            return ComplexExpr(parse_expr(c, self.field))
        if isinstance(c, complex):
            return ComplexExpr(self.field.const(Fraction(c.real)), self.field.const(Fraction(c.imag)))
        return ComplexExpr(self.field.const(c))

    def zero(self) -> AlgebraElement:
        return AlgebraElement(self, {})

    def one(self) -> AlgebraElement:
        return self.term(1)

    def term(self, coeff=1, sym: Iterable[int] = (), gra: Iterable[int] = (),
             asym: Iterable[int] = (), h: int = 0) -> AlgebraElement:
        """A single basis term; indices 0-based and in any order."""
        exps = [0] * self.dim
        for i in sym:
            if not 0 <= i < self.dim:
                raise IndexError(f"symmetric index {i} out of range")
            exps[i] += 1
        gra = list(gra)
        asym = list(asym)
        if any(not 0 <= a < self.n for a in gra):
            raise IndexError("Grassmann index out of range")
        if any(not 0 <= a < self.dim for a in asym):
            raise IndexError("form index out of range")
        s1, gmask = sort_sign(gra)
        s2, amask = sort_sign(asym)
        c = self.coeff(coeff)
        if s1 * s2 == 0 or c.is_zero() or h < 0:
            return self.zero()
        if s1 * s2 < 0:
            c = -c
        return AlgebraElement(self, {(h, tuple(exps), gmask, amask): c})

    def scalar(self, c) -> AlgebraElement:
        return self.term(c)

    def parse(self, text: str) -> AlgebraElement:
        return parse_element(text, self)


def _key_order(key):
    h, sym, gra, asym = key
    sym_idx = tuple(i for i, k in enumerate(sym) for _ in range(k))
    return (h, len(sym_idx), popcount(gra), popcount(asym), sym_idx,
            mask_indices(gra), mask_indices(asym))


def key_deg(key) -> int:
    """Total degree 2*deg_hbar + deg_s + deg_E of a term key."""
    return 2 * key[0] + sum(key[1]) + popcount(key[2])


class AlgebraElement:
    """A finite sum of canonical terms.

    ``max_deg`` records a total-degree truncation (terms above it are unknown,
    not zero); ``None`` means the element is exact as given.
    """

    __slots__ = ("alg", "terms", "max_deg")

    def __init__(self, alg: FedosovAlgebra, terms: dict, max_deg: int | None = None):
        self.alg = alg
        self.terms = terms
        self.max_deg = max_deg

    # -- container protocol ---------------------------------------------------
    def __iter__(self) -> Iterator:
        return iter(self.terms.items())

    def __len__(self):
        return len(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def items(self):
        return self.terms.items()

    def sorted_items(self):
        return sorted(self.terms.items(), key=lambda kv: _key_order(kv[0]))

    def copy(self) -> AlgebraElement:
        return AlgebraElement(self.alg, dict(self.terms), self.max_deg)

    def truncated(self, max_deg: int | None) -> AlgebraElement:
        """Drop terms of total degree above ``max_deg`` and record the cutoff."""
        if max_deg is None:
            return self
        out = {k: c for k, c in self.terms.items() if key_deg(k) <= max_deg}
        cut = max_deg if self.max_deg is None else min(max_deg, self.max_deg)
        return AlgebraElement(self.alg, out, cut)

    def filter(self, pred: Callable) -> AlgebraElement:
        return AlgebraElement(self.alg, {k: c for k, c in self.terms.items() if pred(k)},
                              self.max_deg)

    def part(self, deg: int | None = None, *, s: int | None = None, E: int | None = None,
             a: int | None = None, h: int | None = None) -> AlgebraElement:
        """Homogeneous component selected by total degree and/or partial degrees."""
        def pred(k):
            return ((deg is None or key_deg(k) == deg)
                    and (s is None or sum(k[1]) == s)
                    and (E is None or popcount(k[2]) == E)
                    and (a is None or popcount(k[3]) == a)
                    and (h is None or k[0] == h))
        return self.filter(pred)

    def degrees(self, which: str) -> set[int]:
        return {_DEGREE_FUNCS[which](k) for k in self.terms}

    def coefficient(self, sym=(), gra=(), asym=(), h=0) -> ComplexExpr:
        probe = self.alg.term(1, sym, gra, asym, h)
        if probe.is_zero():
            return self.alg.coeff(0)
        (key, sign), = probe.terms.items()
        c = self.terms.get(key)
        if c is None:
            return self.alg.coeff(0)
        return c if sign == self.alg.coeff(1) else -c

    # -- linear structure -----------------------------------------------------
    def _cut(self, other):
        a, b = self.max_deg, getattr(other, "max_deg", None)
        if a is None:
            return b
        return a if b is None else min(a, b)

    def __add__(self, other):
        if not isinstance(other, AlgebraElement):
            if other == 0:
                return self
            other = self.alg.scalar(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            old = out.get(k)
            if old is None:
                out[k] = c
            else:
                s = old + c
                if s.is_zero():
                    del out[k]
                else:
                    out[k] = s
        return AlgebraElement(self.alg, out, self._cut(other))

    __radd__ = __add__

    def __neg__(self):
        return AlgebraElement(self.alg, {k: -c for k, c in self.terms.items()}, self.max_deg)

    def __sub__(self, other):
        if not isinstance(other, AlgebraElement):
            other = self.alg.scalar(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> AlgebraElement:
        c = self.alg.coeff(c)
        if c.is_zero():
            return AlgebraElement(self.alg, {}, self.max_deg)
        out = {}
        for k, v in self.terms.items():
            p = v * c
            if not p.is_zero():
                out[k] = p
        return AlgebraElement(self.alg, out, self.max_deg)

    def times_i_power(self, p: int) -> AlgebraElement:
        return AlgebraElement(self.alg, {k: c.times_i_power(p) for k, c in self.terms.items()},
                              self.max_deg)

    def shift_hbar(self, dt: int) -> AlgebraElement:
        """Multiply by ``hbar**dt`` (``dt`` may be negative if every term allows it)."""
        out = {}
        for (h, s, g, a), c in self.terms.items():
            if h + dt < 0:
                raise ArithmeticError("hbar power would become negative")
            out[(h + dt, s, g, a)] = c
        cut = None if self.max_deg is None else self.max_deg + 2 * dt
        return AlgebraElement(self.alg, out, cut)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return undeformed_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __eq__(self, other):
        if isinstance(other, AlgebraElement):
            return (self - other).is_zero()
        if other == 0:
            return self.is_zero()
        return NotImplemented

    __hash__ = None

    # -- printing -------------------------------------------------------------
    def __str__(self):
        return render(self)

    def __repr__(self):
        body = render(self).replace("\n", " ")
        return f"<AlgebraElement {body}>"


# ---------------------------------------------------------------------------
# degree and parity maps

_DEGREE_FUNCS = {
    "s": lambda k: sum(k[1]),
    "E": lambda k: popcount(k[2]),
    "a": lambda k: popcount(k[3]),
    "h": lambda k: k[0],
    "hbar": lambda k: k[0],
    "ħ": lambda k: k[0],
    "Deg": key_deg,
}


def degree(F: AlgebraElement, which: str) -> AlgebraElement:
    """Apply the degree map ``deg_which`` (termwise eigenvalue scaling)."""
    try:
        f = _DEGREE_FUNCS[which]
    except KeyError:
        raise ValueError(f"unknown degree {which!r}") from None
    out = {}
    for k, c in F.terms.items():
        d = f(k)
        if d:
            out[k] = c * d
    return AlgebraElement(F.alg, out, F.max_deg)


def parity(F: AlgebraElement, which: str) -> AlgebraElement:
    """``P_E`` or ``P_hbar``: multiply each term by ``(-1)**deg``."""
    f = {"E": _DEGREE_FUNCS["E"], "h": _DEGREE_FUNCS["h"], "hbar": _DEGREE_FUNCS["h"],
         "ħ": _DEGREE_FUNCS["h"]}.get(which)
    if f is None:
        raise ValueError(f"unknown parity {which!r}")
    return AlgebraElement(F.alg, {k: (-c if f(k) & 1 else c) for k, c in F.terms.items()},
                          F.max_deg)


def conjugate(F: AlgebraElement) -> AlgebraElement:
    return AlgebraElement(F.alg, {k: c.conjugate() for k, c in F.terms.items()}, F.max_deg)


# ---------------------------------------------------------------------------
# products

def _accumulate(out: dict, key, c: ComplexExpr):
    old = out.get(key)
    if old is None:
        out[key] = c
    else:
        s = old + c
        if s.is_zero():
            del out[key]
        else:
            out[key] = s


def mul_keys(k1, k2):
    """Undeformed product of two basis keys: ``(sign, key)``; sign 0 if it vanishes."""
    h1, s1, g1, a1 = k1
    h2, s2, g2, a2 = k2
    if g1 & g2 or a1 & a2:
        return 0, None
    sign = wedge_sign(g1, g2) * wedge_sign(a1, a2)
    return sign, (h1 + h2, tuple(x + y for x, y in zip(s1, s2)), g1 | g2, a1 | a2)


def undeformed_mul(F: AlgebraElement, G: AlgebraElement, max_deg: int | None = None) -> AlgebraElement:
    """Pointwise product: v on symmetric, ^ on Grassmann and on form factors."""
    out: dict = {}
    for k1, c1 in F.terms.items():
        for k2, c2 in G.terms.items():
            sign, key = mul_keys(k1, k2)
            if not sign:
                continue
            if max_deg is not None and key_deg(key) > max_deg:
                continue
            c = c1 * c2
            _accumulate(out, key, c if sign > 0 else -c)
    cut = F._cut(G)
    if max_deg is not None:
        cut = max_deg if cut is None else min(cut, max_deg)
    return AlgebraElement(F.alg, out, cut)


# ---------------------------------------------------------------------------
# insertion operators

def _map_terms(F: AlgebraElement, fn) -> AlgebraElement:
    """Linear map defined termwise; ``fn(key)`` yields ``(key', factor)`` pairs."""
    out: dict = {}
    for k, c in F.terms.items():
        for k2, f in fn(k):
            if f:
                _accumulate(out, k2, c * f if f != 1 else c)
    return AlgebraElement(F.alg, out, F.max_deg)


def i_s_key(key, i):
    h, s, g, a = key
    if not s[i]:
        return ()
    mult = s[i]
    s2 = s[:i] + (mult - 1,) + s[i + 1:]
    return (((h, s2, g, a), mult),)


def i_e_key(key, A):
    h, s, g, a = key
    bit = 1 << A
    if not g & bit:
        return ()
    return (((h, s, g ^ bit, a), _left_sign(g, A)),)


def j_e_key(key, A):
    h, s, g, a = key
    bit = 1 << A
    if not g & bit:
        return ()
    # j = P_E i: result has E-degree d-1
    sign = _left_sign(g, A) * (1 if popcount(g) & 1 else -1)
    return (((h, s, g ^ bit, a), sign),)


def i_a_key(key, i):
    h, s, g, a = key
    bit = 1 << i
    if not a & bit:
        return ()
    return (((h, s, g, a ^ bit), _left_sign(a, i)),)


_INSERT = {"i_s": i_s_key, "i": i_e_key, "j": j_e_key, "i_a": i_a_key}


def insert(F: AlgebraElement, kind: str, index: int) -> AlgebraElement:
    """Insertion operator ``kind`` in {'i_s', 'i', 'j', 'i_a'} at 0-based ``index``."""
    try:
        fn = _INSERT[kind]
    except KeyError:
        raise ValueError(f"unknown insertion {kind!r}") from None
    bound = F.alg.n if kind in ("i", "j") else F.alg.dim
    if not 0 <= index < bound:
        raise IndexError(f"index {index} out of range for {kind}")
    return _map_terms(F, lambda k: fn(k, index))


# ---------------------------------------------------------------------------
# Koszul differentials

def _delta_key(key, dim):
    h, s, g, a = key
    for i in range(dim):
        if s[i] and not a & (1 << i):
            s2 = s[:i] + (s[i] - 1,) + s[i + 1:]
            yield (h, s2, g, a | (1 << i)), s[i] * _left_sign(a, i)


def _delta_star_key(key, dim):
    h, s, g, a = key
    for i in range(dim):
        if a & (1 << i):
            s2 = s[:i] + (s[i] + 1,) + s[i + 1:]
            yield (h, s2, g, a ^ (1 << i)), _left_sign(a, i)


def delta(F: AlgebraElement) -> AlgebraElement:
    """``delta = dx^i ^ i_s(d_i)``: moves one symmetric index to the form factor."""
    dim = F.alg.dim
    out = _map_terms(F, lambda k: _delta_key(k, dim))
    if F.max_deg is not None:
        out.max_deg = F.max_deg - 1
    return out


def delta_star(F: AlgebraElement) -> AlgebraElement:
    """``delta* = dx^i v i_a(d_i)``."""
    dim = F.alg.dim
    out = _map_terms(F, lambda k: _delta_star_key(k, dim))
    if F.max_deg is not None:
        out.max_deg = F.max_deg + 1
    return out


def delta_inv(F: AlgebraElement) -> AlgebraElement:
    """``delta^{-1}``: ``delta*/(s+a)`` on terms with ``s+a >= 1``, zero otherwise."""
    dim = F.alg.dim

    def fn(k):
        w = sum(k[1]) + popcount(k[3])
        if w == 0:
            return ()
        return ((k2, Fraction(f, w)) for k2, f in _delta_star_key(k, dim))

    out = _map_terms(F, fn)
    if F.max_deg is not None:
        out.max_deg = F.max_deg + 1
    return out


def sigma(F: AlgebraElement) -> AlgebraElement:
    """Projection onto symmetric degree zero."""
    return F.filter(lambda k: not any(k[1]))


# ---------------------------------------------------------------------------
# rendering and parsing
#
# One term per line:  ``(iħ/2)^t * [coeff] SYM ⊗ GRA ⊗ FORM``
# where the coefficient is that of (iħ/2)^t, SYM is ``dx1∨dx2`` (``1`` if
# empty), GRA is ``e1∧e2`` and FORM is ``dx1∧dx2``.  The ``(iħ/2)^t *``
# prefix is omitted for t = 0.  The zero element renders as ``0``.

def _hbar_unit(alg, t):
    """``(i/2)**t`` as a ComplexExpr."""
    return alg.coeff(Fraction(1, 2**t)).times_i_power(t)


def render_term(alg: FedosovAlgebra, key, c: ComplexExpr) -> str:
    h, s, g, a = key
    names = alg.field.coords
    sym = "∨".join(f"d{names[i]}" for i, k in enumerate(s) for _ in range(k)) or "1"
    gra = "∧".join(f"e{A + 1}" for A in mask_indices(g)) or "1"
    form = "∧".join(f"d{names[i]}" for i in mask_indices(a)) or "1"
    if h:
        c = c * _hbar_unit(alg, h).inverse()
        prefix = f"(iħ/2)^{h} * "
    else:
        prefix = ""
    return f"{prefix}[{c}] {sym} ⊗ {gra} ⊗ {form}"


def render(F: AlgebraElement) -> str:
    if not F.terms:
        return "0"
    return "\n".join(render_term(F.alg, k, c) for k, c in F.sorted_items())


_TERM_RE = re.compile(r"^(?:\(iħ/2\)\^(\d+)\s*\*\s*)?\[(.*)\]\s+(\S+)\s+⊗\s+(\S+)\s+⊗\s+(\S+)$")


def _parse_coeff(text: str, alg: FedosovAlgebra) -> ComplexExpr:
    F = alg.field
    text = text.strip()
    if text.startswith("i*(") and text.endswith(")"):
        return ComplexExpr(F.zero, parse_expr(text[3:-1], F))
    cut = text.rfind(" + i*(")
    if cut >= 0 and text.endswith(")"):
        return ComplexExpr(parse_expr(text[:cut], F), parse_expr(text[cut + 6:-1], F))
    return ComplexExpr(parse_expr(text, F))


def _parse_factor(text: str, prefix: str, lookup: dict, sep: str, line: str) -> list[int]:
    if text == "1":
        return []
    out = []
    for piece in text.split(sep):
        if not piece.startswith(prefix) or piece[len(prefix):] not in lookup:
            raise ExprSyntaxError(f"bad factor {piece!r}", line, line.find(piece))
        out.append(lookup[piece[len(prefix):]])
    return out


def parse_element(text: str, alg: FedosovAlgebra) -> AlgebraElement:
    """Inverse of :func:`render`."""
    coords = {name: i for i, name in enumerate(alg.field.coords)}
    frames = {str(A + 1): A for A in range(alg.n)}
    total = alg.zero()
    for line in text.strip().splitlines():
        line = line.strip()
        if not line or line == "0":
            continue
        m = _TERM_RE.match(line)
        if m is None:
            raise ExprSyntaxError("malformed term", line, 0)
        h = int(m.group(1) or 0)
        c = _parse_coeff(m.group(2), alg)
        if h:
            c = c * _hbar_unit(alg, h)
        sym = _parse_factor(m.group(3), "d", coords, "∨", line)
        gra = _parse_factor(m.group(4), "e", frames, "∧", line)
        form = _parse_factor(m.group(5), "d", coords, "∧", line)
        total = total + alg.term(c, sym, gra, form, h)
    return total
