"""Closed-form super-Poisson bracket.

A :class:`BulletElement` is a 2m x 2m matrix ``B^i_j`` with entries in the
Grassmann algebra (stored as algebra elements with only a Grassmann factor),
multiplied by matrix composition combined with the wedge product.  The
curvature matrix  R^_ij = 1/4 Lambda^{ik} R^E_{ABkj} e^A e^B  and the matrix
rho^ extracted from the Fedosov connection live here, together with the
nilpotent binomial series needed for

    M_1(phi, psi) = Lambda^{ab} (N^k_a nabla_k phi) ^ (N^l_b nabla_l psi)
                    + q^{AB} (j(e_A) phi) ^ (i(e_B) psi),     N = (1 - 2 R^)^(-1/2).
"""
from __future__ import annotations

from fractions import Fraction

from .fedosov import CutoffError, FedosovData, fibre_product, nabla
from .galgebra import AlgebraElement, FedosovAlgebra, insert, popcount, undeformed_mul
from .geometry import CurvatureData, GeometrySpec, curvature, validate

__all__ = [
    "BulletElement",
    "bullet_mul",
    "hat_RE",
    "binomial_series",
    "sqrt_series",
    "hat_rho_from_r",
    "hat_rho_closed",
    "quadratic_residual",
    "covariant_components",
    "phi_one",
    "closed_form_M1",
    "algebraic_bracket",
]


class BulletElement:
    """Matrix over the Grassmann algebra with the bullet product."""

    __slots__ = ("alg", "comps")

    def __init__(self, alg: FedosovAlgebra, comps: dict):
        self.alg = alg
        self.comps = {ij: c for ij, c in comps.items() if c}
        for c in self.comps.values():
            for h, s, g, a in c.terms:
                if h or any(s) or a:
                    raise ValueError("bullet components must be pure Grassmann elements")
                if popcount(g) & 1:
                    raise ValueError("bullet components must have even Grassmann degree")

    @classmethod
    def zero(cls, alg):
        return cls(alg, {})

    @classmethod
    def identity(cls, alg):
        return cls(alg, {(i, i): alg.one() for i in range(alg.dim)})

    def __getitem__(self, ij) -> AlgebraElement:
        c = self.comps.get(ij)
        return c if c is not None else self.alg.zero()

    def is_zero(self) -> bool:
        return not self.comps

    def __bool__(self):
        return bool(self.comps)

    def __add__(self, other):
        out = dict(self.comps)
        for ij, c in other.comps.items():
            out[ij] = out[ij] + c if ij in out else c
        return BulletElement(self.alg, out)

    def __neg__(self):
        return BulletElement(self.alg, {ij: -c for ij, c in self.comps.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return BulletElement(self.alg, {ij: v.scale(c) for ij, v in self.comps.items()})

    def __mul__(self, other):
        if isinstance(other, BulletElement):
            return bullet_mul(self, other)
        return self.scale(other)

    def __eq__(self, other):
        if not isinstance(other, BulletElement):
            return NotImplemented
        return (self - other).is_zero()

    def min_grassmann_degree(self) -> int | None:
        degs = [popcount(k[2]) for c in self.comps.values() for k in c.terms]
        return min(degs) if degs else None

    def __str__(self):
        if not self.comps:
            return "0"
        lines = []
        for (i, j) in sorted(self.comps):
            body = str(self.comps[(i, j)]).replace("\n", "\n    ")
            lines.append(f"({i + 1},{j + 1}):\n    {body}")
        return "\n".join(lines)

    __repr__ = __str__


def bullet_mul(P: BulletElement, Q: BulletElement) -> BulletElement:
    """``(P . Q)^i_j = sum_k P^i_k ^ Q^k_j``."""
    out: dict = {}
    by_row: dict = {}
    for (k, j), q in Q.comps.items():
        by_row.setdefault(k, []).append((j, q))
    for (i, k), p in P.comps.items():
        for j, q in by_row.get(k, ()):
            v = undeformed_mul(p, q)
            out[(i, j)] = out[(i, j)] + v if (i, j) in out else v
    return BulletElement(P.alg, out)


def hat_RE(spec: GeometrySpec, curv: CurvatureData | None = None) -> BulletElement:
    """``(R^)^i_j = 1/4 Lambda^{ik} R^E_{ABkj} e^A ^ e^B``."""
    if not spec.validated:
        validate(spec)
    if curv is None:
        curv = curvature(spec)
    alg = spec.algebra
    d, n = spec.dim, spec.n
    quarter = Fraction(1, 4)
    comps: dict = {}
    for i in range(d):
        for j in range(d):
            acc = alg.zero()
            for k in range(d):
                lam = spec.Lambda[i][k]
                if not lam:
                    continue
                for A in range(n):
                    for B in range(n):
                        R = curv.RE[A][B][k][j]
                        if R:
                            acc = acc + alg.term(lam * R * quarter, gra=(A, B))
            if acc:
                comps[(i, j)] = acc
    return BulletElement(alg, comps)


def binomial_series(X: BulletElement, alpha) -> BulletElement:
    """``(1 + X)^alpha`` for nilpotent X (no Grassmann-degree-0 part).

    The series stops at the first vanishing power; with n Grassmann generators
    that is after at most floor(n/2) + 1 terms for even X.
    """
    low = X.min_grassmann_degree()
    if low is not None and low == 0:
        raise ValueError("binomial series needs a Grassmann-nilpotent argument")
    alpha = Fraction(alpha)
    result = BulletElement.identity(X.alg)
    power = BulletElement.identity(X.alg)
    coeff = Fraction(1)
    k = 0
    while True:
        power = bullet_mul(power, X)
        if not power:
            break
        coeff = coeff * (alpha - k) / (k + 1)
        k += 1
        if coeff:
            result = result + power.scale(coeff)
        if k > X.alg.n:
            raise AssertionError("bullet power failed to vanish")
    return result


def sqrt_series(X: BulletElement, exponent=Fraction(1, 2)) -> BulletElement:
    """``(1 + X)^exponent``; exponent is 1/2, -1/2 or -1."""
    exponent = Fraction(exponent)
    if exponent not in (Fraction(1, 2), Fraction(-1, 2), Fraction(-1)):
        raise ValueError("exponent must be 1/2, -1/2 or -1")
    return binomial_series(X, exponent)


def hat_rho_from_r(data: FedosovData) -> BulletElement:
    """``rho^i_j = Lambda^{ik} i_s(d_k) rho`` at ``dx^j``, rho the s=1, hbar^0 part of r."""
    spec = data.spec
    n = spec.n
    if data.K < n + 1:
        raise CutoffError(f"rho needs r through degree n+1 = {n + 1}, have {data.K}")
    alg = spec.algebra
    d = spec.dim
    rho = data.rho()
    comps: dict = {}
    for (h, s, g, a), c in rho.terms.items():
        k = s.index(1)
        j = a.bit_length() - 1
        for i in range(d):
            lam = spec.Lambda[i][k]
            if lam:
                v = AlgebraElement(alg, {(0, (0,) * d, g, 0): c * lam})
                comps[(i, j)] = comps[(i, j)] + v if (i, j) in comps else v
    return BulletElement(alg, comps)


def hat_rho_closed(spec: GeometrySpec, curv: CurvatureData | None = None) -> BulletElement:
    """``1 - (1 - 2 R^)^(1/2)``."""
    R = hat_RE(spec, curv)
    return BulletElement.identity(spec.algebra) - sqrt_series(R.scale(-2), Fraction(1, 2))


def quadratic_residual(rho: BulletElement, R: BulletElement) -> BulletElement:
    """``rho - R - 1/2 rho . rho``; zero for the true rho^."""
    return rho - R - bullet_mul(rho, rho).scale(Fraction(1, 2))


def covariant_components(phi: AlgebraElement, spec: GeometrySpec) -> list[AlgebraElement]:
    """``[nabla^E_{d_i} phi for i in 0..2m-1]`` as pure Grassmann elements."""
    alg = spec.algebra
    d = spec.dim
    grad = nabla(phi, fibre_product(spec))
    comps = [dict() for _ in range(d)]
    for (h, s, g, a), c in grad.terms.items():
        i = a.bit_length() - 1
        comps[i][(h, s, g, 0)] = c
    return [AlgebraElement(alg, t) for t in comps]


def _check_c0(phi: AlgebraElement):
    for h, s, g, a in phi.terms:
        if h or any(s) or a:
            raise ValueError("expected a classical section (no hbar, symmetric or form part)")


def phi_one(phi: AlgebraElement, data: FedosovData) -> AlgebraElement:
    """``phi_1 = dx^j ((1 - rho^)^(-1))^i_j nabla^E_{d_i} phi`` (symmetric degree 1)."""
    _check_c0(phi)
    spec = data.spec
    alg = spec.algebra
    d = spec.dim
    rho = hat_rho_from_r(data)
    M = sqrt_series(-rho, -1)
    grads = covariant_components(phi, spec)
    out = alg.zero()
    for (i, j), mij in M.comps.items():
        if grads[i]:
            v = undeformed_mul(mij, grads[i])
            sym = tuple(1 if x == j else 0 for x in range(d))
            out = out + AlgebraElement(alg, {(h, sym, g, a): c for (h, s, g, a), c in v.terms.items()})
    return out


def algebraic_bracket(phi: AlgebraElement, psi: AlgebraElement, spec: GeometrySpec) -> AlgebraElement:
    """``q^{AB} (j(e_A) phi) ^ (i(e_B) psi)``."""
    alg = spec.algebra
    out = alg.zero()
    n = spec.n
    for A in range(n):
        jA = insert(phi, "j", A)
        if not jA:
            continue
        for B in range(n):
            qab = spec.qinv[A][B]
            if qab:
                iB = insert(psi, "i", B)
                if iB:
                    out = out + undeformed_mul(jA, iB).scale(qab)
    return out


def closed_form_M1(phi: AlgebraElement, psi: AlgebraElement, spec: GeometrySpec,
                   curv: CurvatureData | None = None) -> AlgebraElement:
    """The super-Poisson bracket M_1 from curvature data alone."""
    _check_c0(phi)
    _check_c0(psi)
    if not spec.validated:
        validate(spec)
    alg = spec.algebra
    d = spec.dim
    N = sqrt_series(hat_RE(spec, curv).scale(-2), Fraction(-1, 2))
    gphi = covariant_components(phi, spec)
    gpsi = covariant_components(psi, spec)

    def dressed(grads):
        # X_a = N^k_a ^ nabla_k
        out = [alg.zero() for _ in range(d)]
        for (k, a), nka in N.comps.items():
            if grads[k]:
                out[a] = out[a] + undeformed_mul(nka, grads[k])
        return out

    Xphi, Xpsi = dressed(gphi), dressed(gpsi)
    out = alg.zero()
    for a in range(d):
        if not Xphi[a]:
            continue
        for b in range(d):
            lam = spec.Lambda[a][b]
            if lam and Xpsi[b]:
                out = out + undeformed_mul(Xphi[a], Xpsi[b]).scale(lam)
    return out + algebraic_bracket(phi, psi, spec)
