import itertools
import random
from fractions import Fraction
from math import factorial

import pytest

from conftest import CURVED, fedosov_data, geometry
from superfedosov.checks import (connection_checks, curvature_checks, product_checks,
                                 random_element, random_section, spanning_sections)
from superfedosov.fedosov import (CutoffError, InvariantViolation, build_r, circ, dump_r,
                                  extract_Mt, fedosov_derivation, i_over_hbar, load_r, nabla,
                                  obstruction, required_cutoff, star, star_coefficients,
                                  super_commutator, taylor)
from superfedosov.galgebra import delta, degree, key_deg, render, sigma
from superfedosov.geometry import curvature
from superfedosov.scalar import partial


def _all_pass(results):
    bad = [r.line() + "\n" + r.detail for r in results if not r.passed]
    assert not bad, "\n".join(bad)


# fibre product -------------------------------------------------------------------

def test_grassmann_square(flat):
    alg = flat.algebra
    e1 = alg.term(gra=[0])
    assert circ(e1, e1, flat) == alg.term(alg.coeff(Fraction(1, 2)).times_i_power(1), h=1)


def test_symmetric_commutator(flat):
    alg = flat.algebra
    a, b = alg.term(sym=[0]), alg.term(sym=[1])
    ihbar = alg.term(alg.coeff(1).times_i_power(1), h=1)
    assert super_commutator(a, b, flat) == ihbar.scale(flat.Lambda[0][1])
    assert circ(a, b, flat) - circ(b, a, flat) == ihbar


def test_commutator_with_itself_vanishes(curved):
    F = random_element(curved.algebra, random.Random(3), E=0, a=2)
    assert super_commutator(F, F, curved).is_zero()


def test_i_over_hbar_guard(flat):
    with pytest.raises(InvariantViolation):
        i_over_hbar(flat.algebra.one())


@pytest.mark.parametrize("name", ["flat", "curved_rank2", "hess_rank2", "so3_rank3"])
def test_product_identities(name):
    _all_pass(product_checks(geometry(name), random.Random(1), samples=6))


@pytest.mark.parametrize("name", ["flat", "conformal_rank2", "hess_rank2"])
def test_curvature_identities(name):
    _all_pass(curvature_checks(geometry(name), random.Random(2), samples=8))


def test_nabla_flat_is_de_rham(flat):
    alg = flat.algebra
    x1, x2 = flat.field.gen(0), flat.field.gen(1)
    g = x1 * x1 * x2 / (flat.field.one + x2)
    out = nabla(alg.term(g), flat)
    assert out == alg.term(partial(g, 0), asym=[0]) + alg.term(partial(g, 1), asym=[1])


def test_delta_nabla_anticommute(curved):
    rng = random.Random(5)
    for _ in range(10):
        F = random_element(curved.algebra, rng)
        assert (delta(nabla(F, curved)) + nabla(delta(F), curved)).is_zero()


# Fedosov connection --------------------------------------------------------------

def test_flat_r_vanishes():
    data = fedosov_data("flat", 6)
    assert all(not rk for rk in data.r_by_degree.values())


@pytest.mark.parametrize("name", CURVED)
def test_r3_shape(name):
    data = fedosov_data(name, 5)
    r3 = data.r_by_degree[3]
    assert r3
    for k in r3.terms:
        assert key_deg(k) == 3 and bin(k[3]).count("1") == 1
        assert sum(k[1]) in (1, 3) and k[0] == 0
    assert r3 == data.r_by_degree[3]


def test_curved_rank2_obstruction_vanishes_at_K6():
    data = fedosov_data("curved_rank2", 6)
    for k in range(6):
        assert obstruction(data, k).is_zero()
    with pytest.raises(CutoffError):
        obstruction(data, 6)


@pytest.mark.parametrize("name", CURVED + ["curved_rank4"])
def test_connection_invariants(name):
    _all_pass(connection_checks(fedosov_data(name, 6)))


def test_build_r_rejects_small_K(flat):
    with pytest.raises(CutoffError):
        build_r(flat, K=2)


def test_corrupted_r_is_rejected(curved):
    data = fedosov_data("curved_rank2", 5)
    text = dump_r(data)
    # flip the sign of the first coefficient of the degree-3 block
    lines = text.splitlines()
    i = lines.index("[degree 3]") + 1
    lines[i] = lines[i].replace("[", "[-(", 1).replace("]", ")]", 1)
    with pytest.raises(InvariantViolation):
        load_r("\n".join(lines), curved)


def test_dump_load_roundtrip(curved):
    data = fedosov_data("curved_rank2", 5)
    text = dump_r(data)
    assert text.startswith("# Fedosov connection r for geometry curved_rank2\nK = 5\n")
    back = load_r(text, curved)
    assert back.K == 5
    assert all(back.r_by_degree[k] == data.r_by_degree[k] for k in range(3, 6))
    assert dump_r(back) == text


@pytest.mark.parametrize("text", ["", "[degree 3]\n0\n", "K = 4\n[degree 3]\n0\n", "junk\nK = 3\n"])
def test_load_r_errors(flat, text):
    with pytest.raises(ValueError):
        load_r(text, flat)


# Fedosov derivation --------------------------------------------------------------

def test_D_flat_on_functions(flat):
    data = fedosov_data("flat", 4)
    alg = flat.algebra
    g = flat.field.gen(0) * flat.field.gen(1)
    assert fedosov_derivation(alg.term(g), data) == nabla(alg.term(g), flat)


@pytest.mark.parametrize("name", ["curved_rank2", "hess_rank2", "so3_rank3"])
def test_D_squares_to_zero(name):
    data = fedosov_data(name, 7)
    rng = random.Random(11)
    nontrivial = 0
    for _ in range(6):
        F = random_element(data.alg, rng, max_s=2, max_a=1, max_h=0)
        DF = fedosov_derivation(F, data)
        nontrivial += bool(DF)
        DDF = fedosov_derivation(DF, data)
        assert DDF.is_zero(), render(DDF)
    assert nontrivial


def test_D_annihilates_flatness_expression():
    data = fedosov_data("hess_rank2", 7)
    r = data.r()
    r.max_deg = None
    A = -delta(r) + nabla(r, data.fp) + data.curv.Relement
    A = A + i_over_hbar(circ(r, r, data.fp, max_deg=data.K + 2))
    A = A.truncated(data.K - 1)
    assert A.is_zero()
    assert fedosov_derivation(A, data).is_zero()


# Fedosov-Taylor series -----------------------------------------------------------

def test_tau_one(curved):
    data = fedosov_data("curved_rank2", 6)
    one = curved.algebra.one()
    assert taylor(one, data) == one


def _taylor_oracle(alg, f, K):
    # flat case: tau(f) is the ordinary Taylor series  sum_alpha d^alpha f / alpha! dx^alpha
    out = alg.zero()
    for k in range(K + 1):
        for alpha in itertools.product(range(k + 1), repeat=alg.dim):
            if sum(alpha) != k:
                continue
            g = f
            for i, a in enumerate(alpha):
                for _ in range(a):
                    g = partial(g, i)
            denom = 1
            for a in alpha:
                denom *= factorial(a)
            sym = [i for i, a in enumerate(alpha) for _ in range(a)]
            out = out + alg.term(g / denom, sym=sym)
    return out


def test_tau_flat_is_taylor_series(flat):
    data = fedosov_data("flat", 5)
    F = flat.field
    f = F.gen(0) ** 3 * F.gen(1) / (F.one + F.gen(1) ** 2)
    tau = taylor(flat.algebra.term(f), data, 5)
    assert tau == _taylor_oracle(flat.algebra, f, 5)
    assert tau.part(s=1) == flat.algebra.term(partial(f, 0), sym=[0]) + flat.algebra.term(partial(f, 1), sym=[1])


def test_tau_e1_is_flat_section():
    data = fedosov_data("curved_rank2", 6)
    e1 = data.alg.term(gra=[0])
    tau = taylor(e1, data)
    assert sigma(tau) == e1
    assert tau != e1
    assert fedosov_derivation(tau, data).is_zero()


def test_tau_cutoff(flat):
    data = fedosov_data("flat", 4)
    with pytest.raises(CutoffError):
        taylor(flat.algebra.one(), data, 5)
    with pytest.raises(ValueError):
        taylor(flat.algebra.term(sym=[0]), data)


@pytest.mark.parametrize("name", ["conformal_rank2", "so3_rank3"])
def test_tau_properties(name):
    data = fedosov_data(name, 7)
    for phi in spanning_sections(data.alg)[::3]:
        tau = taylor(phi, data, 6)
        assert sigma(tau) == phi
        assert fedosov_derivation(tau, data).is_zero()
        assert not tau.filter(lambda k: k[0] & 1)


def test_tau_accepts_hbar_series(curved):
    data = fedosov_data("curved_rank2", 6)
    alg = curved.algebra
    phi = alg.term(gra=[0]) + alg.term(curved.field.gen(0), h=2)
    tau = taylor(phi, data)
    assert sigma(tau) == phi
    assert fedosov_derivation(tau, data).is_zero()


# star product --------------------------------------------------------------------

def test_flat_x1_star_x2(flat):
    data = fedosov_data("flat", 4)
    alg = flat.algebra
    x1, x2 = alg.term(flat.field.gen(0)), alg.term(flat.field.gen(1))
    half_i = alg.coeff(Fraction(1, 2)).times_i_power(1)
    expected = alg.term(flat.field.gen(0) * flat.field.gen(1)) + alg.term(half_i * flat.Lambda[0][1], h=1)
    assert star(x1, x2, data, 1) == expected


def test_unit(curved):
    data = fedosov_data("curved_rank2", 6)
    one = curved.algebra.one()
    rng = random.Random(4)
    for _ in range(3):
        psi = random_section(curved.algebra, rng)
        assert star(one, psi, data, 2) == psi
        assert star(psi, one, data, 2) == psi


def test_M0_is_wedge():
    for name in ["flat", "curved_rank2", "so3_rank3"]:
        data = fedosov_data(name, 6)
        alg = data.alg
        assert extract_Mt(alg.term(gra=[0]), alg.term(gra=[1]), data, 0) == alg.term(gra=[0, 1])


def test_M1_on_functions_is_poisson(flat):
    data = fedosov_data("flat", 4)
    F = flat.field
    f = F.gen(0) ** 2 * F.gen(1)
    g = F.one / (F.one + F.gen(0))
    alg = flat.algebra
    pb = F.zero
    for i, j in itertools.product(range(2), repeat=2):
        pb = pb + flat.Lambda[i][j] * partial(f, i) * partial(g, j)
    assert extract_Mt(alg.term(f), alg.term(g), data, 1) == alg.term(pb)


def test_associativity_curved():
    data = fedosov_data("curved_rank2", 6)
    rng = random.Random(9)
    alg = data.alg
    for _ in range(3):
        a, b, c = (random_section(alg, rng, E=rng.randint(0, 1)) for _ in range(3))
        assert star(star(a, b, data, 2), c, data, 2) == star(a, star(b, c, data, 2), data, 2)


def test_cutoff_refusal(flat):
    data = fedosov_data("flat", 6)
    one = flat.algebra.one()
    assert required_cutoff(2, 2) == 6
    with pytest.raises(CutoffError):
        star(one, one, data, 2, K=5)
    with pytest.raises(CutoffError):
        star(one, one, fedosov_data("flat", 4), 2)


def test_star_coefficients_consistent():
    data = fedosov_data("so3_rank3", 7)
    alg = data.alg
    phi, psi = alg.term(data.spec.field.gen(0), gra=[0]), alg.term(gra=[1, 2])
    Ms = star_coefficients(phi, psi, data, 2)
    assert [extract_Mt(phi, psi, data, t) for t in range(3)] == Ms


def test_star_deterministic_output():
    data = fedosov_data("hess_rank2", 6)
    alg = data.alg
    phi, psi = alg.term(data.spec.field.gen(1), gra=[0]), alg.term(gra=[1])
    assert render(star(phi, psi, data, 2)) == render(star(phi, psi, data, 2))


def test_backends_agree():
    texts = {}
    for be in ["flint", "sympy"]:
        spec = geometry("hess_rank2", be)
        data = build_r(spec, K=5)
        alg = spec.algebra
        phi = alg.term(spec.field.gen(0), gra=[0])
        texts[be] = (dump_r(data), render(star(phi, alg.term(gra=[1]), data, 1)))
    assert texts["flint"] == texts["sympy"]


def test_degree_of_r_is_additive():
    data = fedosov_data("so3_rank3", 5)
    for k, rk in data.r_by_degree.items():
        assert degree(rk, "Deg") == rk.scale(k)


def test_curvature_reused(curved):
    curv = curvature(curved)
    data = build_r(curved, curv, K=4)
    assert data.curv is curv
