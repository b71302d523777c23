import itertools

import pytest
import sympy as sp
import yaml

from conftest import geometry
from superfedosov.fedosov import nabla
from superfedosov.galgebra import delta
from superfedosov.geometry import (BUILTIN_GEOMETRIES, GeometryError, GeometrySpec, builtin_geometry,
                                   check, curvature, hess_symplectize, load_geometry,
                                   parse_geometry, validate)
from superfedosov.scalar import parse_expr

X1, X2 = sp.symbols("x1 x2")


def to_sympy(expr):
    return sp.sympify(str(expr).replace("^", "**"), locals={"x1": X1, "x2": X2})


def same(expr, target):
    return sp.simplify(to_sympy(expr) - target) == 0


def flat_data(**extra):
    data = {"m": 1, "n": 2, "omega": {"1,2": "1"}}
    data.update(extra)
    return data


# validation ----------------------------------------------------------------------

def test_flat_is_valid_and_lambda_convention():
    spec = validate(parse_geometry(flat_data()))
    F = spec.field
    # Lambda^{ik} omega_{jk} = delta^i_j
    for i, j in itertools.product(range(2), repeat=2):
        s = sum((spec.Lambda[i][k] * spec.omega[j][k] for k in range(2)), F.zero)
        assert s == (F.one if i == j else F.zero)
    assert spec.Lambda[0][1] == F.one and spec.Lambda[1][0] == -F.one


def test_lambda_convention_non_constant():
    spec = validate(builtin_geometry("hess_rank2"))
    assert same(spec.Lambda[0][1], 1 / (1 + X1**2))


def test_torsion_error():
    data = flat_data(gammaM={"1;1,2": "x1", "1;2,1": "0"})
    with pytest.raises(GeometryError) as exc:
        validate(parse_geometry(data))
    names = [v.identity for v in exc.value.violations]
    assert any("torsion-free" in s for s in names)
    assert "torsion-free" in str(exc.value)


def test_compatibility_error_rank_one():
    data = {"m": 1, "n": 1, "omega": {"1,2": "1"}, "q": {"1,1": "1+x1^2"}}
    with pytest.raises(GeometryError) as exc:
        validate(parse_geometry(data))
    [v] = [v for v in exc.value.violations if "compat" in v.identity]
    assert v.index == (0, 0, 0)
    assert same(v.residual, 2 * X1)
    assert "residual 2*x1" in str(exc.value)


def test_compatibility_fixed_by_connection():
    data = {"m": 1, "n": 1, "omega": {"1,2": "1"}, "q": {"1,1": "1+x1^2"},
            "gammaE": {"1;1,1": "x1/(1+x1^2)"}}
    validate(parse_geometry(data))


def test_non_closed_omega_names_component():
    data = {"m": 2, "n": 0, "omega": {"1,2": "1", "3,4": "1", "1,3": "x2"}}
    with pytest.raises(GeometryError) as exc:
        validate(parse_geometry(data))
    closed = [v for v in exc.value.violations if "closed" in v.identity]
    assert closed
    assert {v.index for v in closed} == {(0, 1, 2)}
    assert "d omega = 0 [1,2,3]" in str(exc.value)


def test_degenerate_omega():
    data = {"m": 1, "n": 0, "omega": {"1,2": "x1-x1"}}
    with pytest.raises(GeometryError) as exc:
        validate(parse_geometry(data))
    assert any("nondegenerate" in v.identity for v in exc.value.violations)


def test_non_symplectic_connection():
    data = flat_data(gammaM={"1;1,1": "x1"})
    violations = check(parse_geometry(data))
    assert any("symplectic" in v.identity for v in violations)


def test_all_violations_reported():
    data = flat_data(gammaM={"1;1,2": "1", "1;2,1": "0"}, q={"1,2": "1", "2,1": "0"})
    ids = {v.identity.split(":")[0] for v in check(parse_geometry(data))}
    assert {"torsion-free", "q symmetric"} <= ids


# Hess ----------------------------------------------------------------------------

def test_hess_zero_for_constant_omega():
    spec = parse_geometry(flat_data())
    zero = [[[spec.field.zero] * 2 for _ in range(2)] for _ in range(2)]
    g = hess_symplectize(zero, spec.omega)
    assert all(x.is_zero() for x in itertools.chain.from_iterable(itertools.chain.from_iterable(g)))


def _hess_oracle(omega):
    # omega_{lk} Gamma^l_{ij} = 1/3 (d_i omega_{jk} + d_j omega_{ik}) for tilde Gamma = 0
    coords = [X1, X2]
    Om = sp.Matrix(omega)
    out = {}
    for i, j in itertools.product(range(2), repeat=2):
        rhs = sp.Matrix([sp.Rational(1, 3) * (sp.diff(Om[j, k], coords[i]) + sp.diff(Om[i, k], coords[j]))
                         for k in range(2)])
        gam = (Om.T).solve(rhs)
        for l in range(2):
            out[l, i, j] = sp.simplify(gam[l])
    return out


def test_hess_values_for_conformal_omega():
    spec = builtin_geometry("hess_rank2")
    oracle = _hess_oracle([[0, 1 + X1**2], [-(1 + X1**2), 0]])
    for l, i, j in itertools.product(range(2), repeat=3):
        assert same(spec.gammaM[l][i][j], oracle[l, i, j])
    # spelled out
    assert same(spec.gammaM[0][0][0], 4 * X1 / (3 * (1 + X1**2)))
    assert same(spec.gammaM[1][0][1], 2 * X1 / (3 * (1 + X1**2)))
    assert same(spec.gammaM[1][1][0], 2 * X1 / (3 * (1 + X1**2)))
    assert spec.gammaM[0][1][1].is_zero()
    validate(spec)


@pytest.mark.parametrize("tilde", [{"1;1,1": "x2"}, {"2;1,2": "x1^2", "1;2,2": "1/(1+x2^2)"}])
def test_hess_output_is_symplectic(tilde):
    data = {"m": 1, "n": 0, "omega": {"1,2": "1+x1^2+x2^2"}, "gammaTilde": tilde}
    spec = parse_geometry(data)
    assert check(spec) == []


def test_hess_degenerate():
    spec = parse_geometry(flat_data())
    zero = spec.field.zero
    with pytest.raises(GeometryError):
        hess_symplectize(spec.gammaM, [[zero, zero], [zero, zero]])


# curvature -----------------------------------------------------------------------

def test_flat_curvature_is_zero():
    curv = curvature(builtin_geometry("flat"))
    assert curv.is_flat()
    assert all(x.is_zero() for x in itertools.chain.from_iterable(
        itertools.chain.from_iterable(itertools.chain.from_iterable(curv.RE))))


def _re_oracle(A1, A2, q):
    # R(d1, d2) = d1 A_2 - d2 A_1 + [A_1, A_2];  R^E_{AB12} = -q_{AC} R^C_B
    A1, A2, q = sp.Matrix(A1), sp.Matrix(A2), sp.Matrix(q)
    R = sp.diff(A2, X1) - sp.diff(A1, X2) + A1 * A2 - A2 * A1
    return sp.simplify(-q * R)


def test_curved_rank2_RE():
    curv = curvature(builtin_geometry("curved_rank2"))
    oracle = _re_oracle([[0, -X2], [X2, 0]], [[0, 0], [0, 0]], sp.eye(2))
    for A, B in itertools.product(range(2), repeat=2):
        assert same(curv.RE[A][B][0][1], oracle[A, B])
        assert same(curv.RE[A][B][1][0], -oracle[A, B])
    assert same(curv.RE[0][1][0][1], -1)


def test_conformal_RE_and_element():
    spec = builtin_geometry("conformal_rank2")
    curv = curvature(spec)
    c = X1 / (1 + X1**2)
    oracle = _re_oracle([[c, 0], [0, c]], [[0, -X1], [X1, 0]], (1 + X1**2) * sp.eye(2))
    for A, B in itertools.product(range(2), repeat=2):
        assert same(curv.RE[A][B][0][1], oracle[A, B])
    # R = 1/4 RE_{ABij} e^A e^B dx^i dx^j collapses to one term
    alg = spec.algebra
    expected = alg.term(parse_expr("x1^2+1", spec.field), gra=(0, 1), asym=(0, 1))
    assert curv.Relement == expected


@pytest.mark.parametrize("name", BUILTIN_GEOMETRIES)
def test_curvature_symmetries_and_bianchi(name):
    spec = geometry(name)
    curv = curvature(spec)
    d, n = spec.dim, spec.n
    for k, l, i, j in itertools.product(range(d), repeat=4):
        assert curv.RM[k][l][i][j] == curv.RM[l][k][i][j]
        assert curv.RM[k][l][i][j] == -curv.RM[k][l][j][i]
    for A, B, i, j in itertools.product(range(n), range(n), range(d), range(d)):
        assert curv.RE[A][B][i][j] == -curv.RE[B][A][i][j]
        assert curv.RE[A][B][i][j] == -curv.RE[A][B][j][i]
    R = curv.Relement
    assert all(k[0] == 0 and bin(k[3]).count("1") == 2 for k in R.terms)
    assert all(2 * k[0] + sum(k[1]) + bin(k[2]).count("1") == 2 for k in R.terms)
    assert delta(R).is_zero()
    assert nabla(R, spec).is_zero()


def test_hess_geometry_has_both_curvatures():
    curv = curvature(builtin_geometry("hess_rank2"))
    assert any(k[1] != (0, 0) for k in curv.Relement.terms)
    assert any(k[2] for k in curv.Relement.terms)


# files ---------------------------------------------------------------------------

def test_flat_file(tmp_path):
    p = tmp_path / "g.yaml"
    p.write_text(yaml.safe_dump(flat_data()))
    spec = validate(load_geometry(p))
    assert (spec.m, spec.n, spec.name) == (1, 2, "g")
    assert all(x.is_zero() for x in itertools.chain.from_iterable(itertools.chain.from_iterable(spec.gammaM)))
    assert spec.q[0][0] == spec.field.one and spec.q[0][1].is_zero()


def test_flat_constructor_matches_builtin():
    a = validate(GeometrySpec.flat())
    b = validate(builtin_geometry("flat"))
    assert a.omega == b.omega and a.Lambda == b.Lambda


@pytest.mark.parametrize("data, msg", [
    ({"n": 2}, "integer 'm' and 'n'"),
    (flat_data(coords=["x1", "i"]), "reserved"),
    (flat_data(coords=["x1", "e1"]), "reserved"),
    (flat_data(coords=["x1"]), "coordinate names"),
    (flat_data(omega={"1,3": "1"}), "out of range"),
    (flat_data(omega={"1": "1"}), "needs 2 components"),
    (flat_data(omega={"1,2": "x1 +"}), "omega[1,2]"),
    (flat_data(gammaM={}, gammaTilde={}), "not both"),
    ([1, 2], "mapping"),
])
def test_file_errors(data, msg):
    with pytest.raises(GeometryError) as exc:
        parse_geometry(data)
    assert exc.value.violations == []
    assert msg in str(exc.value)


def test_bad_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("m: [1\n")
    with pytest.raises(GeometryError):
        load_geometry(p)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin_geometry("nope")


@pytest.mark.parametrize("name", BUILTIN_GEOMETRIES)
def test_builtins_validate(name):
    assert validate(builtin_geometry(name)).validated
