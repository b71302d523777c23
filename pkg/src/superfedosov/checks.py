"""Property suites: every identity the construction guarantees, checked exactly.

Each suite returns a list of :class:`CheckResult`; :func:`run_axioms` runs
them all for one geometry in a fixed order.  Random samples come from a
seeded :class:`random.Random`, so reports are reproducible byte for byte.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable

from .bracket import (bullet_mul, closed_form_M1, hat_RE, hat_rho_closed, hat_rho_from_r,
                      phi_one, quadratic_residual, sqrt_series)
from .fedosov import (FedosovData, InvariantViolation, build_r, circ, extract_Mt,
                      fedosov_derivation, i_over_hbar_ad, nabla, obstruction, star,
                      star_coefficients, super_commutator, taylor)
from .galgebra import (AlgebraElement, FedosovAlgebra, conjugate, degree, delta, delta_inv,
                       delta_star, parity, popcount, render, sigma, undeformed_mul)
from .geometry import GeometrySpec, curvature

__all__ = [
    "CheckResult",
    "random_coefficient",
    "random_element",
    "random_section",
    "spanning_sections",
    "low_degree_basis",
    "M1Cache",
    "operator_checks",
    "product_checks",
    "curvature_checks",
    "connection_checks",
    "taylor_checks",
    "star_checks",
    "superpoisson_checks",
    "bracket_checks",
    "closed_form_checks",
    "stability_checks",
    "run_axioms",
    "format_report",
]


@dataclass(frozen=True)
class CheckResult:
    suite: str
    identity: str
    passed: bool
    samples: int = 0
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        out = f"[{status}] {self.suite}: {self.identity} ({self.samples} samples)"
        if self.detail and not self.passed:
            out += "\n    " + self.detail.replace("\n", "\n    ")
        return out


def _check(suite: str, identity: str, samples: Iterable, residual: Callable) -> CheckResult:
    """``residual(sample)`` returns something falsy when the identity holds."""
    count = 0
    for sample in samples:
        count += 1
        try:
            res = residual(sample)
        except InvariantViolation as exc:
            return CheckResult(suite, identity, False, count, f"invariant violated: {exc}")
        if res:
            detail = res if isinstance(res, str) else f"residual:\n{render(res) if isinstance(res, AlgebraElement) else res}"
            return CheckResult(suite, identity, False, count, detail)
    return CheckResult(suite, identity, True, count)


# ---------------------------------------------------------------------------
# samples

def random_coefficient(alg: FedosovAlgebra, rng: random.Random, complex_ok: bool = True):
    """Small random rational function in the chart coordinates."""
    F = alg.field
    xs = [F.gen(i) for i in range(F.nvars)]

    def poly():
        p = F.const(rng.randint(-3, 3))
        for _ in range(rng.randint(0, 2)):
            mono = F.const(rng.choice([-2, -1, 1, 1, 2, Fraction(1, 2)]))
            for _ in range(rng.randint(1, 2)):
                mono = mono * rng.choice(xs)
            p = p + mono
        return p

    re = poly()
    if rng.random() < 0.25:
        x = rng.choice(xs)
        re = re / (F.one + x * x)
    if re.is_zero():
        re = F.one
    c = alg.coeff(re)
    if complex_ok and rng.random() < 0.3:
        c = c + alg.coeff(poly()).times_i_power(1)
    return c


def random_element(alg: FedosovAlgebra, rng: random.Random, nterms: int = 3, max_s: int = 3,
                   max_a: int = 2, max_h: int = 1, E: int | None = None, a: int | None = None,
                   complex_ok: bool = True) -> AlgebraElement:
    """Random element; fixing ``E`` (parity) and ``a`` makes it homogeneous."""
    d, n = alg.dim, alg.n
    out = alg.zero()
    while not out:
        for _ in range(nterms):
            sym = [rng.randrange(d) for _ in range(rng.randint(0, max_s))]
            if E is None:
                gra = rng.sample(range(n), rng.randint(0, n))
            else:
                choices = [k for k in range(n + 1) if k % 2 == E % 2]
                gra = rng.sample(range(n), rng.choice(choices))
            na = rng.randint(0, min(max_a, d)) if a is None else a
            asym = rng.sample(range(d), na)
            out = out + alg.term(random_coefficient(alg, rng, complex_ok), sym=sym, gra=gra,
                                 asym=asym, h=rng.randint(0, max_h))
    return out


def random_section(alg: FedosovAlgebra, rng: random.Random, nterms: int = 2,
                   E: int | None = None, real: bool = True) -> AlgebraElement:
    return random_element(alg, rng, nterms, max_s=0, max_a=0, max_h=0, E=E, a=0,
                          complex_ok=not real)


def _functions(alg: FedosovAlgebra):
    F = alg.field
    x1, xl = F.gen(0), F.gen(F.nvars - 1)
    return [F.one, x1, xl * xl, x1 * xl / (F.one + x1 * x1)]


def spanning_sections(alg: FedosovAlgebra, functions=None) -> list[AlgebraElement]:
    """``f e^C`` for every Grassmann monomial e^C and a few sample functions f."""
    functions = _functions(alg) if functions is None else functions
    out = []
    for k in range(alg.n + 1):
        for C in itertools.combinations(range(alg.n), k):
            for f in functions:
                out.append(alg.term(f, gra=C))
    return out


def low_degree_basis(alg: FedosovAlgebra, max_E: int = 2) -> list[AlgebraElement]:
    """Sections of Grassmann degree <= max_E with nonconstant coefficients."""
    F = alg.field
    x1, xl = F.gen(0), F.gen(F.nvars - 1)
    out = []
    for k in range(min(max_E, alg.n) + 1):
        for C in itertools.combinations(range(alg.n), k):
            fs = [x1, xl] if k == 0 else [x1 * xl] if k == 2 else [F.one, x1]
            for f in fs:
                out.append(alg.term(f, gra=C))
    return out


def _parity(F: AlgebraElement) -> int:
    ps = {popcount(k[2]) & 1 for k in F.terms}
    if len(ps) > 1:
        raise ValueError("element is not of homogeneous Grassmann parity")
    return ps.pop() if ps else 0


def _form(F: AlgebraElement) -> int:
    fs = {popcount(k[3]) for k in F.terms}
    if len(fs) > 1:
        raise ValueError("element is not of homogeneous form degree")
    return fs.pop() if fs else 0


class M1Cache:
    """Memoized recursive M_1 (the hbar^1 star coefficient)."""

    def __init__(self, data: FedosovData):
        self.data = data
        self._cache: dict = {}

    def __call__(self, phi: AlgebraElement, psi: AlgebraElement) -> AlgebraElement:
        key = (render(phi), render(psi))
        v = self._cache.get(key)
        if v is None:
            v = extract_Mt(phi, psi, self.data, 1)
            self._cache[key] = v
        return v


# ---------------------------------------------------------------------------
# suites

def operator_checks(spec: GeometrySpec, rng: random.Random, samples: int = 100) -> list[CheckResult]:
    alg = spec.algebra
    els = [random_element(alg, rng) for _ in range(samples)]
    S = "operators"

    def koszul(F):
        return delta(delta_star(F)) + delta_star(delta(F)) - degree(F, "s") - degree(F, "a")

    def homotopy(F):
        F0 = F.filter(lambda k: not any(k[1]) and not k[3])
        return delta(delta_inv(F)) + delta_inv(delta(F)) - (F - F0)

    return [
        _check(S, "delta^2 = 0", els, lambda F: delta(delta(F))),
        _check(S, "(delta*)^2 = 0", els, lambda F: delta_star(delta_star(F))),
        _check(S, "delta delta* + delta* delta = deg_s + deg_a", els, koszul),
        _check(S, "delta delta^-1 + delta^-1 delta = 1 - projection(s=a=0)", els, homotopy),
        _check(S, "delta nabla + nabla delta = 0", els,
               lambda F: delta(nabla(F, spec)) + nabla(delta(F), spec)),
        _check(S, "sigma delta^-1 = 0", els, lambda F: sigma(delta_inv(F))),
    ]


def product_checks(spec: GeometrySpec, rng: random.Random, samples: int = 20) -> list[CheckResult]:
    """Algebraic properties of the fibrewise product."""
    alg = spec.algebra
    S = "fibrewise product"

    def homog():
        return random_element(alg, rng, nterms=2, max_s=2, max_a=1, E=rng.randint(0, 1),
                              a=rng.randint(0, 1))

    pairs = [(homog(), homog()) for _ in range(samples)]
    triples = [(homog(), homog(), homog()) for _ in range(samples)]

    def o(F, G):
        return circ(F, G, spec)

    def assoc(t):
        F, G, H = t
        return o(o(F, G), H) - o(F, o(G, H))

    def superder(phi_map, d_, a_):
        def res(p):
            F, G = p
            sign = -1 if (d_ * _parity(F) + a_ * _form(F)) & 1 else 1
            return phi_map(o(F, G)) - o(phi_map(F), G) - o(F, phi_map(G)).scale(sign)
        return res

    def anti(phi_map):
        def res(p):
            F, G = p
            sign = -1 if (_parity(F) * _parity(G) + _form(F) * _form(G)) & 1 else 1
            return phi_map(o(F, G)) - o(phi_map(G), phi_map(F)).scale(sign)
        return res

    def ad_der(t):
        F, G, H = t
        sign = -1 if (_parity(F) * _parity(G) + _form(F) * _form(G)) & 1 else 1
        return (super_commutator(F, o(G, H), spec) - o(super_commutator(F, G, spec), H)
                - o(G, super_commutator(F, H, spec)).scale(sign))

    def hbar_in_commutator(p):
        F, G = p
        c = super_commutator(F, G, spec)
        low_F = min(k[0] for k in F.terms)
        low_G = min(k[0] for k in G.terms)
        # the lowest hbar order comes from the supercommutative undeformed product
        return c.filter(lambda k: k[0] == low_F + low_G)

    return [
        _check(S, "(F o G) o H = F o (G o H)", triples, assoc),
        _check(S, "delta is a superderivation of type (1,1)", pairs,
               superder(delta, 0, 1)),
        _check(S, "nabla is a superderivation of type (1,1)", pairs,
               superder(lambda F: nabla(F, spec), 0, 1)),
        _check(S, "Deg is a superderivation of type (1,0)", pairs,
               superder(lambda F: degree(F, "Deg"), 0, 0)),
        _check(S, "deg_a is a derivation", pairs, superder(lambda F: degree(F, "a"), 0, 0)),
        _check(S, "P_E is an automorphism", pairs,
               lambda p: parity(o(*p), "E") - o(parity(p[0], "E"), parity(p[1], "E"))),
        _check(S, "P_hbar is a graded antiautomorphism", pairs, anti(lambda F: parity(F, "h"))),
        _check(S, "C is a graded antiautomorphism", pairs, anti(conjugate)),
        _check(S, "ad(F) is a superderivation", triples, ad_der),
        _check(S, "graded commutators carry hbar", pairs, hbar_in_commutator),
    ]


def curvature_checks(spec: GeometrySpec, rng: random.Random, samples: int = 30) -> list[CheckResult]:
    alg = spec.algebra
    curv = curvature(spec)
    R = curv.Relement
    S = "curvature"
    els = [random_element(alg, rng, max_a=1) for _ in range(samples)]
    return [
        _check(S, "nabla^2 = (i/hbar) ad(R)", els,
               lambda F: nabla(nabla(F, spec), spec) - i_over_hbar_ad(R, F, spec)),
        _check(S, "delta R = 0", [R], delta),
        _check(S, "nabla R = 0", [R], lambda X: nabla(X, spec)),
        _check(S, "R has Deg 2, form degree 2, no hbar", [R],
               lambda X: X.filter(lambda k: k[0] or popcount(k[3]) != 2
                                  or sum(k[1]) + popcount(k[2]) != 2)),
    ]


def connection_checks(data: FedosovData) -> list[CheckResult]:
    S = "connection r"
    rb = data.r_by_degree
    degs = sorted(rb)
    out = [
        _check(S, "C(r) = r", degs, lambda k: conjugate(rb[k]) - rb[k]),
        _check(S, "P_hbar(r) = r", degs, lambda k: parity(rb[k], "h") - rb[k]),
        _check(S, "P_E(r) = r", degs, lambda k: parity(rb[k], "E") - rb[k]),
        _check(S, "delta^-1 r = 0", degs, lambda k: delta_inv(rb[k])),
        _check(S, "r^(k) has Deg k and form degree 1", degs,
               lambda k: rb[k].filter(lambda key: popcount(key[3]) != 1
                                      or 2 * key[0] + sum(key[1]) + popcount(key[2]) != k)),
        _check(S, "-delta r + nabla r + R + (i/hbar) r o r = 0 in degrees <= K-1",
               range(0, data.K), lambda k: obstruction(data, k)),
    ]
    return out


def taylor_checks(data: FedosovData, K: int, sections=None) -> list[CheckResult]:
    alg = data.alg
    sections = spanning_sections(alg) if sections is None else sections
    S = "Fedosov-Taylor series"
    taus = {}

    def tau(phi):
        key = render(phi)
        if key not in taus:
            taus[key] = taylor(phi, data, K)
        return taus[key]

    def odd_hbar(phi):
        return tau(phi).filter(lambda k: k[0] & 1)

    def commutes(op):
        return lambda phi: op(tau(phi)) - taylor(op(phi), data, K)

    one = alg.one()
    return [
        _check(S, "tau(1) = 1", [one], lambda phi: tau(phi) - phi),
        _check(S, "sigma(tau(phi)) = phi", sections, lambda phi: sigma(tau(phi)) - phi),
        _check(S, f"D(tau(phi)) = 0 through degree {K - 1}", sections,
               lambda phi: fedosov_derivation(tau(phi), data)),
        _check(S, "tau(phi) depends only on hbar^2", sections, odd_hbar),
        _check(S, "tau commutes with P_E", sections, commutes(lambda F: parity(F, "E"))),
        _check(S, "tau commutes with C", sections, commutes(conjugate)),
    ]


def star_checks(data: FedosovData, rng: random.Random, T: int = 2, samples: int = 20,
                sections=None) -> list[CheckResult]:
    alg = data.alg
    S = f"star product (order {T})"
    n = alg.n
    sections = sections if sections is not None else low_degree_basis(alg)
    pairs = list(itertools.product(sections[:8], repeat=2))
    triples = [tuple(random_section(alg, rng, E=rng.randint(0, 1)) for _ in range(3))
               for _ in range(samples)]
    one = alg.one()
    coeffs: dict = {}

    def Ms(phi, psi):
        key = (render(phi), render(psi))
        if key not in coeffs:
            coeffs[key] = star_coefficients(phi, psi, data, T)
        return coeffs[key]

    def assoc(t):
        a, b, c = t
        return star(star(a, b, data, T), c, data, T) - star(a, star(b, c, data, T), data, T)

    def m0(p):
        return Ms(*p)[0] - undeformed_mul(*p)

    def unit(phi):
        return (star(one, phi, data, T) - phi) + (star(phi, one, data, T) - phi)

    def symmetry(p):
        phi, psi = p
        sign0 = -1 if _parity(phi) * _parity(psi) & 1 else 1
        left, right = Ms(psi, phi), Ms(phi, psi)
        for t in range(T + 1):
            diff = left[t] - right[t].scale(sign0 * (-1) ** t)
            if diff:
                return diff
        return None

    def real(p):
        for t, M in enumerate(Ms(*p)):
            if any(not c.is_real() for c in M.terms.values()):
                return f"M_{t} has a non-real coefficient:\n{render(M)}"
        return None

    def vanish_on_one(phi):
        for t, M in enumerate(Ms(one, phi)[1:] + Ms(phi, one)[1:]):
            if M:
                return M
        return None

    def graded(t):
        a, b, _ = t
        return parity(star(a, b, data, T), "E") - star(parity(a, "E"), parity(b, "E"), data, T)

    return [
        _check(S, "M_0(phi, psi) = phi ^ psi", pairs, m0),
        _check(S, "1 * psi = psi = psi * 1", sections, unit),
        _check(S, "M_t(1, psi) = 0 = M_t(psi, 1) for t >= 1", sections, vanish_on_one),
        _check(S, "(phi * psi) * chi = phi * (psi * chi)", triples, assoc),
        _check(S, "M_t(psi, phi) = (-1)^t (-1)^(d1 d2) M_t(phi, psi)", pairs, symmetry),
        _check(S, "M_t real", pairs, real),
        _check(S, "P_E is a star automorphism", triples, graded),
    ] if n >= 0 else []


def superpoisson_checks(data: FedosovData, basis=None, M1=None) -> list[CheckResult]:
    alg = data.alg
    basis = low_degree_basis(alg) if basis is None else basis
    M1 = M1Cache(data) if M1 is None else M1
    S = "super-Poisson (recursive M_1)"
    pairs = list(itertools.product(basis, repeat=2))
    triples = list(itertools.product(basis, repeat=3))

    def sgn(x):
        return -1 if x & 1 else 1

    def anti(p):
        phi, psi = p
        return M1(psi, phi) + M1(phi, psi).scale(sgn(_parity(phi) * _parity(psi)))

    def leibniz(t):
        phi, psi, chi = t
        return (M1(phi, undeformed_mul(psi, chi)) - undeformed_mul(M1(phi, psi), chi)
                - undeformed_mul(psi, M1(phi, chi)).scale(sgn(_parity(phi) * _parity(psi))))

    def jacobi(t):
        phi, psi, chi = t
        d1, d2, d3 = _parity(phi), _parity(psi), _parity(chi)
        return (M1(M1(phi, psi), chi).scale(sgn(d1 * d3))
                + M1(M1(psi, chi), phi).scale(sgn(d2 * d1))
                + M1(M1(chi, phi), psi).scale(sgn(d3 * d2)))

    return [
        _check(S, "superanticommutativity", pairs, anti),
        _check(S, "superderivation rule", triples, leibniz),
        _check(S, "super Jacobi identity", triples, jacobi),
    ]


def bracket_checks(data: FedosovData, sections=None, M1=None) -> list[CheckResult]:
    spec = data.spec
    alg = data.alg
    sections = spanning_sections(alg, _functions(alg)[:3]) if sections is None else sections
    M1 = M1Cache(data) if M1 is None else M1
    S = "closed-form bracket"
    pairs = list(itertools.product(sections, repeat=2))
    curv = curvature(spec)
    out = [
        _check(S, "closed-form M_1 = recursive M_1", pairs,
               lambda p: closed_form_M1(p[0], p[1], spec, curv) - M1(*p)),
        _check(S, "phi_1 = symmetric-degree-1 part of tau(phi)", sections,
               lambda phi: phi_one(phi, data) - taylor(phi, data, alg.n + 2).part(s=1, h=0)),
    ]
    return out


def closed_form_checks(data: FedosovData) -> list[CheckResult]:
    spec = data.spec
    S = "closed-form internals"
    R = hat_RE(spec)
    rho = hat_rho_from_r(data)
    one_minus_2R = R.scale(-2)

    def root_squares(_):
        root = sqrt_series(one_minus_2R, Fraction(1, 2))
        diff = bullet_mul(root, root) - (root.identity(spec.algebra) + one_minus_2R)
        return str(diff) if diff else None

    def inv_root(_):
        root = sqrt_series(one_minus_2R, Fraction(1, 2))
        inv = sqrt_series(one_minus_2R, Fraction(-1, 2))
        diff = bullet_mul(root, inv) - root.identity(spec.algebra)
        return str(diff) if diff else None

    def nilpotent(_):
        P = R
        for _ in range(spec.n // 2):
            P = bullet_mul(P, R)
        return str(P) if P else None

    return [
        _check(S, "rho^ from r = 1 - (1 - 2 R^)^(1/2)", [0],
               lambda _: str(rho - hat_rho_closed(spec)) if rho != hat_rho_closed(spec) else None),
        _check(S, "rho^ - R^ = 1/2 rho^ . rho^", [0],
               lambda _: str(quadratic_residual(rho, R)) if quadratic_residual(rho, R) else None),
        _check(S, "(1 - 2R^)^(1/2) . (1 - 2R^)^(1/2) = 1 - 2R^", [0], root_squares),
        _check(S, "(1 - 2R^)^(1/2) . (1 - 2R^)^(-1/2) = 1", [0], inv_root),
        _check(S, "R^ is bullet-nilpotent", [0], nilpotent),
    ]


def stability_checks(spec: GeometrySpec, T: int, pairs, data_hi: FedosovData) -> list[CheckResult]:
    """M_t at cutoff 2T+n and at 2T+n+1 agree exactly."""
    K = 2 * T + spec.n
    S = "truncation stability"

    def res(p):
        lo = star_coefficients(p[0], p[1], data_hi, T, K)
        hi = star_coefficients(p[0], p[1], data_hi, T, K + 1)
        for t in range(T + 1):
            if lo[t] != hi[t]:
                return lo[t] - hi[t]
        return None

    return [_check(S, f"M_t (t <= {T}) unchanged from K = {K} to K = {K + 1}", pairs, res)]


def run_axioms(spec: GeometrySpec, T: int = 2, seed: int = 0, samples: int = 100,
               triples: int = 20) -> list[CheckResult]:
    """All suites for one geometry at hbar order T."""
    rng = random.Random(seed)
    n = spec.n
    K = 2 * T + n
    results: list[CheckResult] = []
    results += operator_checks(spec, rng, samples)
    results += product_checks(spec, rng, max(5, samples // 5))
    results += curvature_checks(spec, rng, max(10, samples // 3))
    try:
        data = build_r(spec, K=K + 3, check=False)
    except InvariantViolation as exc:  # pragma: no cover - reported, not raised
        results.append(CheckResult("connection r", exc.identity, False, 0, str(exc)))
        return results
    results += connection_checks(data)
    results += taylor_checks(data, K)
    results += star_checks(data, rng, T, triples)
    M1 = M1Cache(data)
    results += superpoisson_checks(data, M1=M1)
    results += bracket_checks(data, M1=M1)
    results += closed_form_checks(data)
    basis = low_degree_basis(spec.algebra)
    results += stability_checks(spec, T, list(itertools.product(basis[:6], repeat=2)), data)
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = [r.line() for r in results]
    npass = sum(r.passed for r in results)
    lines.append(f"{npass}/{len(results)} identities hold")
    return "\n".join(lines) + "\n"
