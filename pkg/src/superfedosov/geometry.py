"""Chart-level geometric input and its curvature.

Index conventions (all 0-based in code):

* ``omega[i][j]``        = omega(d_i, d_j)
* ``Lambda[i][j]``       Poisson tensor with  Lambda^{ik} omega_{jk} = delta^i_j
* ``gammaM[k][i][j]``    = Gamma^k_{ij},  nabla_{d_i} d_j = Gamma^k_{ij} d_k
* ``q[A][B]``            fibre metric q(e_A, e_B); ``qinv`` its inverse
* ``gammaE[B][i][A]``    = A^B_{iA},  nabla^E_{d_i} e_A = A^B_{iA} e_B
* ``RM[k][l][i][j]``     = omega(d_k, R^M(d_i, d_j) d_l)
* ``RE[A][B][i][j]``     = -q(e_A, R^E(d_i, d_j) e_B)

with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y].
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import yaml

from .galgebra import AlgebraElement, FedosovAlgebra, delta
from .scalar import (ExprSyntaxError, RationalExpr, ScalarField, SingularMatrixError,
                     determinant, invert_matrix, parse_expr)

__all__ = [
    "GeometrySpec",
    "CurvatureData",
    "GeometryError",
    "Violation",
    "validate",
    "check",
    "hess_symplectize",
    "curvature",
    "riemann_M",
    "riemann_E",
    "load_geometry",
    "parse_geometry",
    "builtin_geometry",
    "BUILTIN_GEOMETRIES",
]


@dataclass
class Violation:
    identity: str
    index: tuple
    residual: RationalExpr

    def __str__(self):
        idx = ",".join(str(i + 1) for i in self.index)
        return f"{self.identity} [{idx}]: residual {self.residual}"


class GeometryError(ValueError):
    """Raised when a geometry fails validation; carries every violation found."""

    def __init__(self, violations, msg=None):
        self.violations = list(violations)
        if msg is None:
            lines = [str(v) for v in self.violations]
            msg = "invalid geometry:\n  " + "\n  ".join(lines)
        super().__init__(msg)


@dataclass
class GeometrySpec:
    field: ScalarField
    m: int
    n: int
    omega: list
    gammaM: list
    q: list
    gammaE: list
    name: str = ""
    Lambda: list | None = dc_field(default=None, repr=False)
    qinv: list | None = dc_field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return 2 * self.m

    @property
    def algebra(self) -> FedosovAlgebra:
        alg = getattr(self, "_alg", None)
        if alg is None:
            alg = FedosovAlgebra(self.field, self.m, self.n)
            self._alg = alg
        return alg

    @property
    def validated(self) -> bool:
        return self.Lambda is not None

    @classmethod
    def flat(cls, m: int = 1, n: int = 2, coords=None, backend=None) -> GeometrySpec:
        """Canonical omega on R^{2m} (omega_{i,i+m} = 1), zero connections, q = 1."""
        coords = coords or [f"x{i + 1}" for i in range(2 * m)]
        F = ScalarField(coords, backend)
        dim = 2 * m
        omega = [[F.zero] * dim for _ in range(dim)]
        for i in range(m):
            omega[i][i + m] = F.one
            omega[i + m][i] = -F.one
        return cls(F, m, n, omega, _zeros(F, dim, dim, dim),
                   [[F.one if A == B else F.zero for B in range(n)] for A in range(n)],
                   _zeros(F, n, dim, n), name="flat")


def _zeros(F, *shape):
    if len(shape) == 1:
        return [F.zero] * shape[0]
    return [_zeros(F, *shape[1:]) for _ in range(shape[0])]


# ---------------------------------------------------------------------------
# validation

def check(spec: GeometrySpec) -> list[Violation]:
    """Return every failed structural identity (empty list when valid)."""
    F = spec.field
    d, n = spec.dim, spec.n
    om, G, q, A = spec.omega, spec.gammaM, spec.q, spec.gammaE
    out: list[Violation] = []

    def shape_ok(M, shape):
        if len(shape) == 0:
            return isinstance(M, RationalExpr)
        return isinstance(M, list) and len(M) == shape[0] and all(shape_ok(x, shape[1:]) for x in M)

    for name, M, shape in (("omega", om, (d, d)), ("gammaM", G, (d, d, d)),
                           ("q", q, (n, n)), ("gammaE", A, (n, d, n))):
        if not shape_ok(M, shape):
            raise GeometryError([], f"{name} has wrong shape, expected {shape}")

    for i, j in itertools.combinations_with_replacement(range(d), 2):
        res = om[i][j] + om[j][i]
        if res:
            out.append(Violation("omega antisymmetric: omega_ij + omega_ji = 0", (i, j), res))
    if not out and d and determinant(om).is_zero():
        out.append(Violation("omega nondegenerate: det(omega) != 0", (), F.zero))
    for i, j, k in itertools.combinations(range(d), 3):
        res = om[j][k].diff(i) + om[k][i].diff(j) + om[i][j].diff(k)
        if res:
            out.append(Violation("omega closed: d omega = 0", (i, j, k), res))
    for k in range(d):
        for i, j in itertools.combinations(range(d), 2):
            res = G[k][i][j] - G[k][j][i]
            if res:
                out.append(Violation("torsion-free: Gamma^k_ij = Gamma^k_ji", (k, i, j), res))
    for i in range(d):
        for j in range(d):
            for k in range(d):
                res = om[j][k].diff(i)
                for l in range(d):
                    if G[l][i][j]:
                        res = res - G[l][i][j] * om[l][k]
                    if G[l][i][k]:
                        res = res - G[l][i][k] * om[j][l]
                if res:
                    out.append(Violation("symplectic: (nabla_i omega)_jk = 0", (i, j, k), res))
    for a, b in itertools.combinations(range(n), 2):
        res = q[a][b] - q[b][a]
        if res:
            out.append(Violation("q symmetric: q_AB = q_BA", (a, b), res))
    if n and determinant(q).is_zero():
        out.append(Violation("q nondegenerate: det(q) != 0", (), F.zero))
    for i in range(d):
        for a in range(n):
            for b in range(a, n):
                res = q[a][b].diff(i)
                for c in range(n):
                    if A[c][i][a]:
                        res = res - A[c][i][a] * q[c][b]
                    if A[c][i][b]:
                        res = res - A[c][i][b] * q[a][c]
                if res:
                    out.append(Violation(
                        "metric compatibility: d_i q_AB - A^C_iA q_CB - A^C_iB q_AC = 0",
                        (i, a, b), res))
    return out


def validate(spec: GeometrySpec) -> GeometrySpec:
    """Check every structural identity and attach ``Lambda`` and ``qinv``.

    Raises :class:`GeometryError` listing all violations.
    """
    bad = check(spec)
    if bad:
        raise GeometryError(bad)
    # Lambda^{ik} omega_{jk} = delta^i_j  means  Lambda = (omega^T)^{-1}
    omT = [[spec.omega[j][i] for j in range(spec.dim)] for i in range(spec.dim)]
    spec.Lambda = invert_matrix(omT)
    spec.qinv = invert_matrix(spec.q) if spec.n else []
    return spec


# ---------------------------------------------------------------------------
# Hess symplectization

def hess_symplectize(tilde_gamma, omega):
    """Torsion-free symplectic connection from a torsion-free one.

    Solves  omega(nabla_X Y, Z) = omega(~nabla_X Y, Z) + 1/3 (~nabla_X omega)(Y, Z)
    + 1/3 (~nabla_Y omega)(X, Z)  for Gamma^l_{ij}.
    """
    d = len(omega)
    try:
        om_inv = invert_matrix(omega)
    except SingularMatrixError:
        raise GeometryError([], "omega is degenerate") from None
    F = omega[0][0].field

    def nabla_omega(i, j, k):
        # (~nabla_i omega)_{jk}
        res = omega[j][k].diff(i)
        for l in range(d):
            if tilde_gamma[l][i][j]:
                res = res - tilde_gamma[l][i][j] * omega[l][k]
            if tilde_gamma[l][i][k]:
                res = res - tilde_gamma[l][i][k] * omega[j][l]
        return res

    gamma = _zeros(F, d, d, d)
    third = F.const(1) / 3
    for i in range(d):
        for j in range(i, d):
            W = []
            for k in range(d):
                w = F.zero
                for l in range(d):
                    if tilde_gamma[l][i][j]:
                        w = w + tilde_gamma[l][i][j] * omega[l][k]
                w = w + third * (nabla_omega(i, j, k) + nabla_omega(j, i, k))
                W.append(w)
            for l in range(d):
                g = F.zero
                for k in range(d):
                    if W[k] and om_inv[k][l]:
                        g = g + W[k] * om_inv[k][l]
                gamma[l][i][j] = g
                gamma[l][j][i] = g
    return gamma


# ---------------------------------------------------------------------------
# curvature

@dataclass
class CurvatureData:
    RM: list
    RE: list
    Relement: AlgebraElement
    RM_mixed: list = dc_field(repr=False, default=None)  # R^a_{lij}
    RE_mixed: list = dc_field(repr=False, default=None)  # R^C_{Bij}

    def is_flat(self) -> bool:
        return self.Relement.is_zero()


def _connection_curvature(conn, nfib, d, F):
    """R^a_{b ij} for a connection with coefficients conn[a][i][b] (nabla_i s_b = conn^a_{ib} s_a)."""
    R = _zeros(F, nfib, nfib, d, d)
    for a in range(nfib):
        for b in range(nfib):
            for i in range(d):
                for j in range(i + 1, d):
                    v = conn[a][j][b].diff(i) - conn[a][i][b].diff(j)
                    for c in range(nfib):
                        if conn[a][i][c] and conn[c][j][b]:
                            v = v + conn[a][i][c] * conn[c][j][b]
                        if conn[a][j][c] and conn[c][i][b]:
                            v = v - conn[a][j][c] * conn[c][i][b]
                    R[a][b][i][j] = v
                    R[a][b][j][i] = -v
    return R


def riemann_M(spec: GeometrySpec):
    """Mixed components R^a_{l ij} of nabla^M."""
    return _connection_curvature(spec.gammaM, spec.dim, spec.dim, spec.field)


def riemann_E(spec: GeometrySpec):
    """Mixed components R^C_{B ij} of nabla^E."""
    return _connection_curvature(spec.gammaE, spec.n, spec.dim, spec.field)


def curvature(spec: GeometrySpec) -> CurvatureData:
    """Lowered curvatures and the algebra element R = R^(M) + R^(E)."""
    if not spec.validated:
        validate(spec)
    F, d, n = spec.field, spec.dim, spec.n
    alg = spec.algebra
    RMm = riemann_M(spec)
    REm = riemann_E(spec)
    RM = _zeros(F, d, d, d, d)
    RE = _zeros(F, n, n, d, d)
    for k in range(d):
        for l in range(d):
            for i in range(d):
                for j in range(d):
                    v = F.zero
                    for a in range(d):
                        if spec.omega[k][a] and RMm[a][l][i][j]:
                            v = v + spec.omega[k][a] * RMm[a][l][i][j]
                    RM[k][l][i][j] = v
    for A in range(n):
        for B in range(n):
            for i in range(d):
                for j in range(d):
                    v = F.zero
                    for C in range(n):
                        if spec.q[A][C] and REm[C][B][i][j]:
                            v = v - spec.q[A][C] * REm[C][B][i][j]
                    RE[A][B][i][j] = v

    bad = []
    for k, l, i, j in itertools.product(range(d), repeat=4):
        if RM[k][l][i][j] != RM[l][k][i][j]:
            bad.append(Violation("R^(M) symmetric in first pair", (k, l, i, j),
                                 RM[k][l][i][j] - RM[l][k][i][j]))
    for A, B, i, j in itertools.product(range(n), range(n), range(d), range(d)):
        if RE[A][B][i][j] != -RE[B][A][i][j]:
            bad.append(Violation("R^(E) antisymmetric in first pair", (A, B, i, j),
                                 RE[A][B][i][j] + RE[B][A][i][j]))
    if bad:
        raise GeometryError(bad)

    quarter = F.const(1) / 4
    R = alg.zero()
    for k, l, i, j in itertools.product(range(d), repeat=4):
        if RM[k][l][i][j]:
            R = R + alg.term(quarter * RM[k][l][i][j], sym=(k, l), asym=(i, j))
    for A, B, i, j in itertools.product(range(n), range(n), range(d), range(d)):
        if RE[A][B][i][j]:
            R = R + alg.term(quarter * RE[A][B][i][j], gra=(A, B), asym=(i, j))
    return CurvatureData(RM, RE, R, RMm, REm)


def bianchi_delta(curv: CurvatureData) -> AlgebraElement:
    """delta R, which vanishes for a torsion-free nabla^M."""
    return delta(curv.Relement)


# ---------------------------------------------------------------------------
# geometry files
#
# YAML mapping with keys
#   name:    optional label
#   m, n:    half-dimension and bundle rank
#   coords:  optional coordinate names (default x1 .. x{2m})
#   omega:   {"i,j": expr}         antisymmetric; one order suffices
#   gammaM:  {"k;i,j": expr}       Gamma^k_{ij}; symmetric in i,j, one order suffices
#   gammaTilde: {"k;i,j": expr}    alternative to gammaM: symplectized with Hess's formula
#   q:       {"A,B": expr}         symmetric; one order suffices (default identity)
#   gammaE:  {"B;i,A": expr}       A^B_{iA}
# Indices are 1-based; omitted entries are 0.

def _parse_index(key, nidx, bounds, where):
    text = str(key).replace(";", ",").replace(" ", "")
    parts = text.split(",")
    if len(parts) != nidx:
        raise GeometryError([], f"{where}: index {key!r} needs {nidx} components")
    try:
        idx = tuple(int(p) - 1 for p in parts)
    except ValueError:
        raise GeometryError([], f"{where}: bad index {key!r}") from None
    for i, b in zip(idx, bounds):
        if not 0 <= i < b:
            raise GeometryError([], f"{where}: index {key!r} out of range")
    return idx


def _parse_entries(raw, F, nidx, bounds, where):
    out = {}
    if raw is None:
        return out
    if not isinstance(raw, dict):
        raise GeometryError([], f"{where}: expected a mapping of index -> expression")
    for key, text in raw.items():
        idx = _parse_index(key, nidx, bounds, where)
        try:
            out[idx] = parse_expr(str(text), F)
        except ExprSyntaxError as exc:
            raise GeometryError([], f"{where}[{key}]: {exc}") from None
    return out


def parse_geometry(data: dict, backend=None) -> GeometrySpec:
    """Build a :class:`GeometrySpec` from the mapping form of a geometry file."""
    if not isinstance(data, dict):
        raise GeometryError([], "geometry file must be a mapping")
    try:
        m = int(data["m"])
        n = int(data["n"])
    except (KeyError, TypeError, ValueError):
        raise GeometryError([], "geometry file needs integer 'm' and 'n'") from None
    if m < 1 or n < 0:
        raise GeometryError([], "need m >= 1 and n >= 0")
    d = 2 * m
    coords = data.get("coords") or [f"x{i + 1}" for i in range(d)]
    coords = [str(c) for c in coords]
    if len(coords) != d:
        raise GeometryError([], f"expected {d} coordinate names, got {len(coords)}")
    for c in coords:
        if c == "i" or (c[:1] == "e" and c[1:].isdigit()):
            raise GeometryError([], f"coordinate name {c!r} is reserved")
    F = ScalarField(coords, backend)

    omega = _zeros(F, d, d)
    for (i, j), v in _parse_entries(data.get("omega"), F, 2, (d, d), "omega").items():
        omega[i][j] = v
    explicit = {(i, j) for i in range(d) for j in range(d) if omega[i][j]}
    for i, j in explicit:
        if (j, i) not in explicit:
            omega[j][i] = -omega[i][j]

    def sym3(key):
        G = _zeros(F, d, d, d)
        entries = _parse_entries(data.get(key), F, 3, (d, d, d), key)
        for (k, i, j), v in entries.items():
            G[k][i][j] = v
        for (k, i, j), v in entries.items():
            if (k, j, i) not in entries:
                G[k][j][i] = v
        return G

    if data.get("gammaM") is not None and data.get("gammaTilde") is not None:
        raise GeometryError([], "give either gammaM or gammaTilde, not both")
    if data.get("gammaTilde") is not None:
        gammaM = hess_symplectize(sym3("gammaTilde"), omega)
    else:
        gammaM = sym3("gammaM")

    if data.get("q") is None:
        q = [[F.one if A == B else F.zero for B in range(n)] for A in range(n)]
    else:
        q = _zeros(F, n, n)
        entries = _parse_entries(data.get("q"), F, 2, (n, n), "q")
        for (A, B), v in entries.items():
            q[A][B] = v
        for (A, B), v in entries.items():
            if (B, A) not in entries:
                q[B][A] = v

    gammaE = _zeros(F, n, d, n)
    for (B, i, A), v in _parse_entries(data.get("gammaE"), F, 3, (n, d, n), "gammaE").items():
        gammaE[B][i][A] = v

    return GeometrySpec(F, m, n, omega, gammaM, q, gammaE, name=str(data.get("name", "")))


def load_geometry(path, backend=None) -> GeometrySpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise GeometryError([], f"{path}: {exc}") from None
    spec = parse_geometry(data, backend)
    if not spec.name:
        spec.name = path.stem
    return spec


_DATA_DIR = Path(__file__).parent / "geometries"
BUILTIN_GEOMETRIES = tuple(sorted(p.stem for p in _DATA_DIR.glob("*.yaml")))


def builtin_geometry(name: str, backend=None) -> GeometrySpec:
    """Load one of the geometries shipped with the package (see ``BUILTIN_GEOMETRIES``)."""
    path = _DATA_DIR / f"{name}.yaml"
    if not path.exists():
        raise KeyError(f"no builtin geometry {name!r}; have {', '.join(BUILTIN_GEOMETRIES)}")
    return load_geometry(path, backend)
