"""Command-line front end.

Exit codes: 0 all checks pass, 1 input error (bad file, expression, cutoff),
2 a mathematical identity failed (bad geometry or an implementation bug).
"""
from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from . import __version__
from .bracket import closed_form_M1, hat_RE, hat_rho_closed, hat_rho_from_r
from .checks import format_report, run_axioms
from .fedosov import (CutoffError, InvariantViolation, build_r, dump_r, extract_Mt,
                      fedosov_derivation, nabla, required_cutoff, star_coefficients, taylor)
from .galgebra import delta, render
from .geometry import (BUILTIN_GEOMETRIES, GeometryError, GeometrySpec, builtin_geometry,
                       curvature, hess_symplectize, load_geometry, validate)
from .scalar import ExprSyntaxError
from .sections import is_section, parse_section

EXIT_OK, EXIT_INPUT, EXIT_IDENTITY = 0, 1, 2

log = logging.getLogger("superfedosov")


class InputError(Exception):
    pass


def _indent(text: str, pad: str = "  ") -> str:
    return "\n".join(pad + line for line in text.splitlines())


def _block(title: str, element) -> str:
    return f"{title} =\n{_indent(render(element))}"


def _load(args) -> GeometrySpec:
    src = args.geometry
    path = Path(src)
    if path.exists():
        return load_geometry(path, args.backend)
    if src in BUILTIN_GEOMETRIES:
        return builtin_geometry(src, args.backend)
    raise InputError(f"no geometry file {src!r} (builtin geometries: {', '.join(BUILTIN_GEOMETRIES)})")


def _validated(args) -> GeometrySpec:
    spec = _load(args)
    validate(spec)
    return spec


def _header(spec: GeometrySpec) -> list[str]:
    return [f"geometry: {spec.name or 'unnamed'} (m={spec.m}, n={spec.n}, "
            f"coords={','.join(spec.field.coords)})"]


def _section(spec: GeometrySpec, text: str, what: str):
    el = parse_section(text, spec.algebra)
    if not is_section(el):  # pragma: no cover - parser only builds sections
        raise InputError(f"{what} is not a section")
    return el


def _matrix_lines(name: str, M) -> list[str]:
    return [f"{name}[{i + 1}] = [" + ", ".join(str(x) for x in row) + "]" for i, row in enumerate(M)]


# ---------------------------------------------------------------------------
# commands

def cmd_validate(args) -> tuple[int, str]:
    spec = _validated(args)
    lines = _header(spec) + ["valid: omega closed and nondegenerate, nabla^M torsion-free and "
                             "symplectic, q nondegenerate, nabla^E metric"]
    lines += _matrix_lines("Lambda", spec.Lambda)
    lines += _matrix_lines("q^-1", spec.qinv)
    return EXIT_OK, "\n".join(lines)


def cmd_curvature(args) -> tuple[int, str]:
    spec = _validated(args)
    curv = curvature(spec)
    d, n = spec.dim, spec.n
    lines = _header(spec)
    lines.append("R^(M)_{klij} (k<=l, i<j, nonzero):")
    for k, l, i, j in itertools.product(range(d), repeat=4):
        if k <= l and i < j and curv.RM[k][l][i][j]:
            lines.append(f"  R^(M)_{{{k + 1}{l + 1}{i + 1}{j + 1}}} = {curv.RM[k][l][i][j]}")
    lines.append("R^(E)_{ABij} (A<B, i<j, nonzero):")
    for A, B, i, j in itertools.product(range(n), range(n), range(d), range(d)):
        if A < B and i < j and curv.RE[A][B][i][j]:
            lines.append(f"  R^(E)_{{{A + 1}{B + 1}{i + 1}{j + 1}}} = {curv.RE[A][B][i][j]}")
    lines.append(_block("R", curv.Relement))
    dR = delta(curv.Relement)
    nR = nabla(curv.Relement, spec)
    lines.append(_block("delta R", dR))
    lines.append(_block("nabla R", nR))
    code = EXIT_OK
    if dR or nR:
        lines.append("FAIL: Bianchi identities delta R = 0, nabla R = 0")
        code = EXIT_IDENTITY
    return code, "\n".join(lines)


def cmd_hess(args) -> tuple[int, str]:
    spec = _load(args)
    gamma = hess_symplectize(spec.gammaM, spec.omega)
    spec.gammaM = gamma
    validate(spec)
    d = spec.dim
    lines = _header(spec) + ["symplectic connection Gamma^k_{ij} (i<=j, nonzero):"]
    for k, i, j in itertools.product(range(d), repeat=3):
        if i <= j and gamma[k][i][j]:
            lines.append(f"  Gamma^{k + 1}_{{{i + 1}{j + 1}}} = {gamma[k][i][j]}")
    lines.append("nabla^M omega = 0 and torsion-free: verified")
    return EXIT_OK, "\n".join(lines)


def _cutoff(args, spec, T) -> int:
    need = required_cutoff(T, spec.n)
    K = need if args.K is None else args.K
    if K < need:
        raise CutoffError(f"cutoff {K} too small for hbar order {T}: need K >= 2T + n = {need}")
    return K


def cmd_build_r(args) -> tuple[int, str]:
    spec = _validated(args)
    if args.K < 3:
        raise InputError("--K must be at least 3")
    data = build_r(spec, K=args.K)
    return EXIT_OK, dump_r(data).rstrip("\n")


def cmd_taylor(args) -> tuple[int, str]:
    spec = _validated(args)
    phi = _section(spec, args.phi, "--phi")
    if args.K < 0:
        raise InputError("--K must be nonnegative")
    data = build_r(spec, K=max(args.K + 1, 3))
    tau = taylor(phi, data, args.K)
    lines = _header(spec) + [_block("phi", phi), _block(f"tau(phi) through total degree {args.K}", tau)]
    D = fedosov_derivation(tau, data)
    lines.append(_block(f"D(tau(phi)) through degree {args.K - 1}", D))
    if D:
        lines.append("FAIL: D(tau(phi)) = 0")
        return EXIT_IDENTITY, "\n".join(lines)
    return EXIT_OK, "\n".join(lines)


def cmd_star(args) -> tuple[int, str]:
    spec = _validated(args)
    phi = _section(spec, args.phi, "--phi")
    psi = _section(spec, args.psi, "--psi")
    T = args.order
    if T < 0:
        raise InputError("--order must be nonnegative")
    K = _cutoff(args, spec, T)
    data = build_r(spec, K=K + 3 if args.stability else K + 2)
    Ms = star_coefficients(phi, psi, data, T, K)
    lines = _header(spec) + [_block("phi", phi), _block("psi", psi),
                             f"phi * psi = sum_t (i hbar/2)^t M_t, cutoff K = {K}"]
    for t, M in enumerate(Ms):
        lines.append(_block(f"M_{t}", M))
    code = EXIT_OK
    if args.stability:
        hi = star_coefficients(phi, psi, data, T, K + 1)
        same = all(a == b for a, b in zip(Ms, hi))
        lines.append(f"stability K -> K+1: {'unchanged' if same else 'CHANGED'}")
        if not same:
            code = EXIT_IDENTITY
    return code, "\n".join(lines)


def cmd_bracket(args) -> tuple[int, str]:
    spec = _validated(args)
    phi = _section(spec, args.phi, "--phi")
    psi = _section(spec, args.psi, "--psi")
    K = required_cutoff(1, spec.n)
    data = build_r(spec, K=K + 3 if args.stability else K + 2)
    closed = closed_form_M1(phi, psi, spec)
    rec = extract_Mt(phi, psi, data, 1, K)
    diff = closed - rec
    lines = _header(spec) + [_block("phi", phi), _block("psi", psi),
                             _block("M_1 closed form", closed), _block("M_1 recursive", rec),
                             _block("difference", diff)]
    code = EXIT_OK if not diff else EXIT_IDENTITY
    if args.stability:
        hi = extract_Mt(phi, psi, data, 1, K + 1)
        same = hi == rec
        lines.append(f"stability K -> K+1: {'unchanged' if same else 'CHANGED'}")
        if not same:
            code = EXIT_IDENTITY
    if args.verbose:
        lines.append(f"R^ =\n{_indent(str(hat_RE(spec)))}")
        lines.append(f"rho^ (from r) =\n{_indent(str(hat_rho_from_r(data)))}")
        lines.append(f"rho^ (closed) =\n{_indent(str(hat_rho_closed(spec)))}")
    return code, "\n".join(lines)


def cmd_axioms(args) -> tuple[int, str]:
    spec = _validated(args)
    if args.order < 0:
        raise InputError("--order must be nonnegative")
    results = run_axioms(spec, T=args.order, seed=args.seed, samples=args.samples,
                         triples=args.triples)
    text = "\n".join(_header(spec)) + "\n" + format_report(results)
    code = EXIT_OK if all(r.passed for r in results) else EXIT_IDENTITY
    return code, text.rstrip("\n")


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="superfedosov",
        description="Fedosov star products and super-Poisson brackets on Grassmann bundles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("geometry", help="geometry YAML file or builtin name "
                        f"({', '.join(BUILTIN_GEOMETRIES)})")
    common.add_argument("--out", help="write the output to this file instead of stdout")
    common.add_argument("--backend", choices=["flint", "sympy"], default=None,
                        help="polynomial backend (default: flint when installed)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="check the geometry's identities")
    sub.add_parser("curvature", parents=[common], help="curvatures and Bianchi residuals")
    sub.add_parser("hess", parents=[common], help="symplectize the given connection")
    s = sub.add_parser("build-r", parents=[common], help="Fedosov connection r per degree")
    s.add_argument("--K", type=int, required=True, help="total-degree cutoff")
    s = sub.add_parser("taylor", parents=[common], help="Fedosov-Taylor series of a section")
    s.add_argument("--phi", required=True)
    s.add_argument("--K", type=int, required=True)
    for name, helptext in (("star", "star product coefficients M_t"),
                           ("bracket", "closed-form vs recursive M_1")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--phi", required=True)
        s.add_argument("--psi", required=True)
        s.add_argument("--stability", action="store_true",
                       help="recompute at cutoff K+1 and require identical output")
        if name == "star":
            s.add_argument("--order", type=int, required=True, help="hbar order T")
            s.add_argument("--K", type=int, default=None, help="cutoff override (>= 2T+n)")
    s = sub.add_parser("axioms", parents=[common], help="run every identity suite")
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--triples", type=int, default=20)
    return p


COMMANDS = {
    "validate": cmd_validate,
    "curvature": cmd_curvature,
    "hess": cmd_hess,
    "build-r": cmd_build_r,
    "taylor": cmd_taylor,
    "star": cmd_star,
    "bracket": cmd_bracket,
    "axioms": cmd_axioms,
}


def execute(args) -> tuple[int, str]:
    """Run a parsed command; returns ``(exit_code, text)``."""
    try:
        return COMMANDS[args.command](args)
    except GeometryError as exc:
        return (EXIT_IDENTITY if exc.violations else EXIT_INPUT), f"error: {exc}"
    except InvariantViolation as exc:
        return EXIT_IDENTITY, f"identity violated: {exc}"
    except KeyError as exc:
        return EXIT_INPUT, f"error: {exc.args[0] if exc.args else exc}"
    except (InputError, CutoffError, ExprSyntaxError, OSError, ValueError) as exc:
        return EXIT_INPUT, f"error: {exc}"


def run(argv=None) -> tuple[int, str]:
    return execute(build_parser().parse_args(argv))


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    code, text = execute(args)
    if code == EXIT_INPUT:
        print(text, file=sys.stderr)
    elif args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        if code != EXIT_OK:
            print(f"identity failures; see {args.out}", file=sys.stderr)
    else:
        print(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
