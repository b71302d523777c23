import subprocess
import sys
from fractions import Fraction

import pytest
import yaml

from superfedosov.cli import EXIT_IDENTITY, EXIT_INPUT, EXIT_OK, main, run
from superfedosov.galgebra import FedosovAlgebra
from superfedosov.scalar import ExprSyntaxError, ScalarField
from superfedosov.sections import is_section, parse_section, section_degree

ALG = FedosovAlgebra(ScalarField(["x1", "x2"]), 1, 2)


# section expressions -------------------------------------------------------------

def test_section_wedge_and_scalars():
    el = parse_section("x1*e1^e2 + (1/2)*e1", ALG)
    assert el == ALG.term(ALG.field.gen(0), gra=[0, 1]) + ALG.term(Fraction(1, 2), gra=[0])
    assert is_section(el)
    assert section_degree(el) is None
    assert section_degree(parse_section("e1^e2", ALG)) == 2


def test_section_anticommutes():
    assert parse_section("e2^e1", ALG) == -ALG.term(gra=[0, 1])
    assert parse_section("e2*e1 + e1*e2", ALG).is_zero()
    assert parse_section("e1^2", ALG).is_zero()
    assert parse_section("x1^2", ALG) == ALG.term(ALG.field.gen(0) ** 2)


def test_section_complex_and_division():
    el = parse_section("(1 + i*x2)*e1/(1 + x1^2)", ALG)
    [(key, c)] = el.terms.items()
    assert key[2] == 1 and not c.is_real()


@pytest.mark.parametrize("text, msg", [
    ("e3", "exceeds the bundle rank"),
    ("y", "unknown symbol"),
    ("e1/e2", "divide by a scalar"),
    ("e1/(x1 - x1)", "division by zero"),
    ("x1^x2", "integer literal"),
    ("e1 +", "unexpected end"),
])
def test_section_errors(text, msg):
    with pytest.raises(ExprSyntaxError) as exc:
        parse_section(text, ALG)
    assert msg in str(exc.value)


# commands ------------------------------------------------------------------------

def test_validate_flat():
    code, out = run(["validate", "flat"])
    assert code == EXIT_OK
    assert out.startswith("geometry: flat (m=1, n=2, coords=x1,x2)")
    assert "Lambda[1] = [0, 1]" in out


def test_curvature_curved():
    code, out = run(["curvature", "curved_rank2"])
    assert code == EXIT_OK
    assert "R^(E)_{1212} = -1" in out
    assert "delta R =\n  0" in out and "nabla R =\n  0" in out


def test_hess_command(tmp_path):
    p = tmp_path / "h.yaml"
    p.write_text(yaml.safe_dump({"m": 1, "n": 0, "omega": {"1,2": "1+x1^2"}}))
    code, out = run(["hess", str(p)])
    assert code == EXIT_OK
    assert "Gamma^1_{11} = (4/3*x1)/(x1^2 + 1)" in out
    assert "verified" in out


def test_build_r():
    code, out = run(["build-r", "curved_rank2", "--K", "4"])
    assert code == EXIT_OK
    assert out.splitlines()[:3] == ["# Fedosov connection r for geometry curved_rank2", "K = 4", "[degree 3]"]


def test_taylor():
    code, out = run(["taylor", "curved_rank2", "--phi", "e1", "--K", "4"])
    assert code == EXIT_OK
    assert "D(tau(phi)) through degree 3 =\n  0" in out


def test_bracket_flat_prints_lambda():
    code, out = run(["bracket", "flat", "--phi", "x1", "--psi", "x2"])
    assert code == EXIT_OK
    assert "M_1 closed form =\n  [1] 1 ⊗ 1 ⊗ 1" in out
    assert "M_1 recursive =\n  [1] 1 ⊗ 1 ⊗ 1" in out
    assert out.endswith("difference =\n  0")


def test_bracket_curved_verbose_stability():
    code, out = run(["bracket", "curved_rank2", "--phi", "x1", "--psi", "x2", "--stability", "-v"])
    assert code == EXIT_OK
    assert "[1] 1 ⊗ e1∧e2 ⊗ 1" in out
    assert "stability K -> K+1: unchanged" in out
    assert "rho^ (closed)" in out


def test_star_order_zero_is_wedge():
    code, out = run(["star", "so3_rank3", "--phi", "e1", "--psi", "x1*e2", "--order", "0"])
    assert code == EXIT_OK
    assert "M_0 =\n  [x1] 1 ⊗ e1∧e2 ⊗ 1" in out
    assert "M_1" not in out


def test_star_order_two_stability():
    code, out = run(["star", "flat", "--phi", "x1^2", "--psi", "x2^2", "--order", "2", "--stability"])
    assert code == EXIT_OK
    assert "M_1 =\n  [4*x1*x2] 1 ⊗ 1 ⊗ 1" in out
    # 1/2! Lambda^12 Lambda^12 d1d1(x1^2) d2d2(x2^2) = 2
    assert "M_2 =\n  [2] 1 ⊗ 1 ⊗ 1" in out


def test_star_cutoff_refused():
    code, out = run(["star", "flat", "--phi", "x1", "--psi", "x2", "--order", "2", "--K", "5"])
    assert code == EXIT_INPUT
    assert "need K >= 2T + n = 6" in out


def test_axioms_small():
    code, out = run(["axioms", "flat", "--order", "1", "--samples", "10", "--triples", "3"])
    assert code == EXIT_OK
    lines = out.splitlines()
    assert all(l.startswith("[PASS]") for l in lines[1:-1])
    n = len(lines) - 2
    assert lines[-1] == f"{n}/{n} identities hold"


def test_unknown_geometry():
    code, out = run(["validate", "nowhere"])
    assert code == EXIT_INPUT and "no geometry file" in out


def test_bad_expression():
    code, out = run(["bracket", "flat", "--phi", "x1 +", "--psi", "x2"])
    assert code == EXIT_INPUT and "unexpected end" in out


def test_non_closed_omega_file(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump({"m": 2, "n": 1, "omega": {"1,2": "1", "3,4": "1", "1,3": "x2"}}))
    code, out = run(["validate", str(p)])
    assert code == EXIT_IDENTITY
    assert "omega closed: d omega = 0 [1,2,3]" in out


def test_default_connection(tmp_path):
    p = tmp_path / "g.yaml"
    p.write_text(yaml.safe_dump({"m": 1, "n": 1, "omega": {"1,2": "2"}}))
    code, out = run(["curvature", str(p)])
    assert code == EXIT_OK
    assert "R =\n  0" in out


def test_malformed_file(tmp_path):
    p = tmp_path / "g.yaml"
    p.write_text("m: 1\nn: 2\nomega: {'1,2': 'x1 +'}\n")
    code, out = run(["validate", str(p)])
    assert code == EXIT_INPUT and "omega[1,2]" in out


def test_main_writes_out(tmp_path, capsys):
    target = tmp_path / "o.txt"
    assert main(["bracket", "flat", "--phi", "e1", "--psi", "e1", "--out", str(target)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert target.read_text().endswith("difference =\n  0\n")


def test_main_errors_to_stderr(capsys):
    assert main(["validate", "nowhere"]) == EXIT_INPUT
    captured = capsys.readouterr()
    assert captured.out == "" and "error:" in captured.err


def test_byte_deterministic_subprocess():
    cmd = [sys.executable, "-m", "superfedosov", "star", "hess_rank2", "--phi", "x1*e1",
           "--psi", "e2 + x2", "--order", "1"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b and b"M_1 =" in a


def test_backends_same_output():
    args = ["star", "hess_rank2", "--phi", "x1*e1", "--psi", "e2 + x2", "--order", "1"]
    assert run(args + ["--backend", "flint"]) == run(args + ["--backend", "sympy"])
