"""Fedosov construction on  W (x) Lambda:  nabla, the fibrewise product, r, D, tau, star.

Everything is truncated by total degree ``Deg = 2 deg_hbar + deg_s + deg_E``,
which is additive under the fibrewise product and lets each recursion stop
at an explicit cutoff.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

from . import kernels
from .galgebra import (AlgebraElement, FedosovAlgebra, conjugate, delta, delta_inv,
                       key_deg, mask_indices, parity, popcount)
from .geometry import CurvatureData, GeometrySpec, curvature, validate
from .scalar import determinant

__all__ = [
    "FibreProduct",
    "FedosovData",
    "InvariantViolation",
    "CutoffError",
    "nabla",
    "circ",
    "super_commutator",
    "ad",
    "i_over_hbar_ad",
    "obstruction",
    "build_r",
    "fedosov_derivation",
    "taylor",
    "star",
    "extract_Mt",
    "star_coefficients",
    "required_cutoff",
    "check_r_invariants",
    "dump_r",
    "load_r",
]

log = logging.getLogger(__name__)


class InvariantViolation(ArithmeticError):
    """An identity the construction guarantees failed; names the identity."""

    def __init__(self, identity: str, detail: str = "", residual=None):
        self.identity = identity
        self.residual = residual
        msg = identity if not detail else f"{identity}: {detail}"
        if residual is not None:
            msg += f"\nresidual:\n{residual}"
        super().__init__(msg)


class CutoffError(ValueError):
    pass


# ---------------------------------------------------------------------------
# geometry-dependent structure tables

class FibreProduct:
    """Caches the coefficient tables for ``nabla`` and ``circ`` of one geometry."""

    def __init__(self, spec: GeometrySpec):
        if not spec.validated:
            validate(spec)
        self.spec = spec
        self.alg: FedosovAlgebra = spec.algebra
        F = spec.field
        d, n = spec.dim, spec.n
        self.lam_entries = [(i, j, spec.Lambda[i][j]) for i in range(d) for j in range(d)
                            if spec.Lambda[i][j]]
        self._minors: dict = {}
        self._sym_tables: dict = {}
        self._gra_tables: dict = {}
        self._tables: dict = {}
        self._nabla_tables: dict = {}
        self.half_powers = [F.const(Fraction(1, 2**k)) for k in range(64)]
        # connection coefficients as (i, j, k, Gamma^j_{ik}) and (i, B, A, A^B_{iA})
        self.gammaM_entries = [(i, j, k, spec.gammaM[j][i][k]) for i in range(d)
                               for j in range(d) for k in range(d) if spec.gammaM[j][i][k]]
        self.gammaE_entries = [(i, B, A, spec.gammaE[B][i][A]) for i in range(d)
                               for B in range(n) for A in range(n) if spec.gammaE[B][i][A]]

    # -- Grassmann contractions ---------------------------------------------
    def minor(self, rows: int, cols: int):
        """det of q^{-1} restricted to the row and column index masks."""
        key = (rows, cols)
        v = self._minors.get(key)
        if v is None:
            r, c = mask_indices(rows), mask_indices(cols)
            M = [[self.spec.qinv[a][b] for b in c] for a in r]
            v = determinant(M) if r else self.spec.field.one
            self._minors[key] = v
        return v

    def gra_table(self, CF: int, CG: int):
        """Entries ``(l, CF', CG', weight)`` of  sum_l S^l/l!  on  e^CF (x) e^CG."""
        key = (CF, CG)
        tab = self._gra_tables.get(key)
        if tab is not None:
            return tab
        tab = []
        iF, iG = mask_indices(CF), mask_indices(CG)
        for l in range(min(len(iF), len(iG)) + 1):
            for A in itertools.combinations(iF, l):
                sj, restF = kernels.apply_j_seq(CF, A)
                for B in itertools.combinations(iG, l):
                    amask = sum(1 << a for a in A)
                    bmask = sum(1 << b for b in B)
                    w = self.minor(amask, bmask)
                    if not w:
                        continue
                    si, restG = kernels.apply_i_seq(CG, B)
                    tab.append((l, restF, restG, w if sj * si > 0 else -w))
        self._gra_tables[key] = tab
        return tab

    # -- symmetric contractions -----------------------------------------------
    def sym_table(self, aF: tuple, aG: tuple):
        """Entries ``(k, result_sym, weight)`` of  sum_k P^k/k!  followed by v."""
        key = (aF, aG)
        tab = self._sym_tables.get(key)
        if tab is not None:
            return tab
        F = self.spec.field
        merged: dict = {}
        state = {(aF, aG): F.one}
        k = 0
        while state:
            for (a, b), w in state.items():
                res = tuple(x + y for x, y in zip(a, b))
                kk = (k, res)
                merged[kk] = merged[kk] + w if kk in merged else w
            k += 1
            new: dict = {}
            for (a, b), w in state.items():
                for i, j, lam in self.lam_entries:
                    if a[i] and b[j]:
                        a2 = a[:i] + (a[i] - 1,) + a[i + 1:]
                        b2 = b[:j] + (b[j] - 1,) + b[j + 1:]
                        v = w * lam * (a[i] * b[j])
                        kk = (a2, b2)
                        new[kk] = new[kk] + v if kk in new else v
            state = {kk: v * Fraction(1, k) for kk, v in new.items() if v}
        tab = [(k, res, w) for (k, res), w in merged.items() if w]
        self._sym_tables[key] = tab
        return tab

    def table(self, sF, gF, sG, gG):
        """Combined contraction table for the (symmetric, Grassmann) parts of two keys.

        Entries ``(k+l, result_sym, result_gra, weight)`` with weight including
        ``(1/2)^(k+l)`` and all signs; ``i^(k+l)`` is applied by the caller.
        """
        key = (sF, gF, sG, gG)
        tab = self._tables.get(key)
        if tab is not None:
            return tab
        merged: dict = {}
        for k, sres, ws in self.sym_table(sF, sG):
            for l, rF, rG, wg in self.gra_table(gF, gG):
                sign = kernels.wedge_sign(rF, rG)
                if not sign:
                    continue
                kl = k + l
                w = ws * wg * self.half_powers[kl]
                kk = (kl, sres, rF | rG)
                if sign < 0:
                    w = -w
                merged[kk] = merged[kk] + w if kk in merged else w
        tab = tuple((kl, s, g, w) for (kl, s, g), w in merged.items() if w)
        self._tables[key] = tab
        return tab

    # -- covariant derivative -------------------------------------------------
    def nabla_table(self, s: tuple, g: int):
        """Connection part of nabla on a (sym, gra) basis pair: ``(i, s', g', weight)``."""
        key = (s, g)
        tab = self._nabla_tables.get(key)
        if tab is not None:
            return tab
        merged: dict = {}
        # nabla_i dx^j = -Gamma^j_{ik} dx^k, extended as a derivation of v
        for i, j, k, G in self.gammaM_entries:
            if s[j]:
                s2 = list(s)
                s2[j] -= 1
                s2[k] += 1
                kk = (i, tuple(s2), g)
                v = -(G * s[j])
                merged[kk] = merged[kk] + v if kk in merged else v
        # nabla_i e^B = -A^B_{iA} e^A, extended as an even derivation of ^
        for i, B, A, coef in self.gammaE_entries:
            if not g & (1 << B):
                continue
            rest = g ^ (1 << B)
            if rest & (1 << A):
                continue
            sign = kernels.left_sign(g, B) * kernels.left_sign(rest, A)
            kk = (i, s, rest | (1 << A))
            v = -coef if sign > 0 else coef
            merged[kk] = merged[kk] + v if kk in merged else v
        tab = tuple((i, s2, g2, w) for (i, s2, g2), w in merged.items() if w)
        self._nabla_tables[key] = tab
        return tab

    def stats(self) -> dict:
        return {"sym_tables": len(self._sym_tables), "gra_tables": len(self._gra_tables),
                "tables": len(self._tables), "nabla_tables": len(self._nabla_tables)}


def fibre_product(spec: GeometrySpec) -> FibreProduct:
    """The product tables of a geometry, built once and kept on it."""
    fp = getattr(spec, "_fibre_product", None)
    if fp is None:
        fp = FibreProduct(spec)
        spec._fibre_product = fp
    return fp


def _ctx(obj) -> FibreProduct:
    if isinstance(obj, FibreProduct):
        return obj
    if isinstance(obj, FedosovData):
        return obj.fp
    if isinstance(obj, GeometrySpec):
        return fibre_product(obj)
    raise TypeError(f"expected a geometry, got {type(obj).__name__}")


# ---------------------------------------------------------------------------
# nabla and the fibrewise product

def nabla(F: AlgebraElement, geom) -> AlgebraElement:
    """Covariant derivative on W (x) Lambda (raises deg_a by one)."""
    fp = _ctx(geom)
    out = kernels.nabla_terms(F.terms, fp, fp.alg.dim)
    return AlgebraElement(F.alg, out, F.max_deg)


def _merge_cut(*cuts):
    cuts = [c for c in cuts if c is not None]
    return min(cuts) if cuts else None


def circ(F: AlgebraElement, G: AlgebraElement, geom, max_deg: int | None = None,
         max_h: int | None = None, sigma_only: bool = False) -> AlgebraElement:
    """Fibrewise deformed product  F o G.

    ``max_deg`` drops result terms of total degree above it; ``max_h`` drops
    terms with hbar power above it; ``sigma_only`` keeps only symmetric degree 0
    (i.e. returns ``sigma(F o G)`` without forming the rest).
    """
    fp = _ctx(geom)
    cutF = F.max_deg
    cutG = G.max_deg
    # a truncated factor bounds the reliable degree of the product
    cut = None
    if cutF is not None or cutG is not None:
        minF = min((key_deg(k) for k in F.terms), default=0)
        minG = min((key_deg(k) for k in G.terms), default=0)
        cut = _merge_cut(None if cutF is None else cutF + minG,
                         None if cutG is None else cutG + minF)
    limit = _merge_cut(max_deg, cut)
    out = kernels.circ_terms(F.terms, G.terms, fp, limit, max_h, sigma_only)
    return AlgebraElement(F.alg, out, limit)


def _parity_classes(F: AlgebraElement) -> dict:
    classes: dict = {}
    for k, c in F.terms.items():
        cls = (popcount(k[2]) & 1, popcount(k[3]) & 1)
        classes.setdefault(cls, {})[k] = c
    return {cls: AlgebraElement(F.alg, t, F.max_deg) for cls, t in classes.items()}


def super_commutator(F: AlgebraElement, G: AlgebraElement, geom, max_deg: int | None = None) -> AlgebraElement:
    """``[F, G] = F o G - (-1)^(d1 d2 + a1 a2) G o F``, summed over homogeneous parts."""
    total = F.alg.zero()
    total.max_deg = max_deg
    for (d1, a1), Fc in _parity_classes(F).items():
        for (d2, a2), Gc in _parity_classes(G).items():
            fg = circ(Fc, Gc, geom, max_deg)
            gf = circ(Gc, Fc, geom, max_deg)
            total = total + (fg + gf if (d1 * d2 + a1 * a2) & 1 else fg - gf)
    return total


ad = super_commutator


def i_over_hbar(X: AlgebraElement, what: str = "commutator") -> AlgebraElement:
    """Exact ``(i/hbar) X``; every term must carry at least one hbar."""
    bad = {k: c for k, c in X.terms.items() if k[0] == 0}
    if bad:
        raise InvariantViolation(
            "supercommutativity: hbar^0 part of a graded commutator vanishes",
            f"{what} has {len(bad)} terms without hbar",
            AlgebraElement(X.alg, bad))
    return X.shift_hbar(-1).times_i_power(1)


def i_over_hbar_ad(F: AlgebraElement, G: AlgebraElement, geom, max_deg: int | None = None) -> AlgebraElement:
    """``(i/hbar) ad(F) G`` with the hbar division done exactly.

    ``max_deg`` bounds the total degree of the result (before division the
    commutator is formed up to ``max_deg + 2``).
    """
    inner = None if max_deg is None else max_deg + 2
    return i_over_hbar(super_commutator(F, G, geom, inner))


# ---------------------------------------------------------------------------
# the Fedosov connection

@dataclass
class FedosovData:
    spec: GeometrySpec
    curv: CurvatureData
    K: int
    r_by_degree: dict
    fp: FibreProduct = dc_field(repr=False, default=None)

    @property
    def alg(self) -> FedosovAlgebra:
        return self.spec.algebra

    def r(self, upto: int | None = None) -> AlgebraElement:
        """Sum of r^(k) for k <= ``upto`` (default K), truncated at that degree."""
        upto = self.K if upto is None else upto
        total = self.alg.zero()
        for k in range(3, upto + 1):
            total = total + self.r_by_degree[k]
        total.max_deg = upto
        return total

    def rho(self) -> AlgebraElement:
        """Component of r with symmetric degree 1 and hbar degree 0."""
        return self.r().part(s=1, h=0)


def _r_square_part(r_by_degree, fp, deg) -> AlgebraElement:
    """``sum_{p+q=deg, p,q>=3} r^(p) o r^(q)`` (all of total degree ``deg``)."""
    alg = fp.alg
    total = alg.zero()
    for p in range(3, deg - 2):
        q = deg - p
        if q < 3 or p not in r_by_degree or q not in r_by_degree:
            continue
        total = total + circ(r_by_degree[p], r_by_degree[q], fp, max_deg=deg)
    total.max_deg = None
    return total


def obstruction(data: FedosovData, k: int) -> AlgebraElement:
    """Degree-k part of  A = -delta r + nabla r + R + (i/hbar) r o r."""
    if not 0 <= k <= data.K - 1:
        raise CutoffError(f"obstruction degree {k} needs r beyond degree {data.K}")
    alg = data.alg
    fp = data.fp
    rb = data.r_by_degree
    A = alg.zero()
    if k + 1 in rb:
        A = A - delta(rb[k + 1])
    if k in rb:
        A = A + nabla(rb[k], fp)
    A = A + data.curv.Relement.part(deg=k)
    sq = _r_square_part(rb, fp, k + 2)
    if sq:
        A = A + i_over_hbar(sq, "r o r")
    A.max_deg = None
    return A


def check_r_invariants(data: FedosovData, verify_flatness: bool = True):
    """Raise :class:`InvariantViolation` unless r has all the guaranteed properties."""
    for k, rk in sorted(data.r_by_degree.items()):
        if any(key_deg(key) != k or popcount(key[3]) != 1 for key in rk.terms):
            raise InvariantViolation("r^(k) has total degree k and form degree 1", f"k={k}", rk)
        for name, img in (("P_E(r) = r", parity(rk, "E")), ("P_hbar(r) = r", parity(rk, "h")),
                          ("C(r) = r", conjugate(rk))):
            diff = img - rk
            if diff:
                raise InvariantViolation(name, f"degree {k}", diff)
        dr = delta_inv(rk)
        if dr:
            raise InvariantViolation("delta^-1 r = 0", f"degree {k}", dr)
    if verify_flatness:
        for k in range(0, data.K):
            A = obstruction(data, k)
            if A:
                raise InvariantViolation(
                    "flatness: -delta r + nabla r + R + (i/hbar) r o r = 0", f"degree {k}", A)


def build_r(spec: GeometrySpec, curv: CurvatureData | None = None, K: int = 3,
            check: bool = True) -> FedosovData:
    """Recursive Fedosov connection r = sum_k r^(k) through total degree K.

    r^(3) = delta^-1 R,
    r^(k+3) = delta^-1 ( nabla r^(k+2) + (i/hbar) sum_{l=1}^{k-1} r^(l+2) o r^(k-l+2) ).
    """
    if K < 3:
        raise CutoffError("K must be at least 3")
    if not spec.validated:
        validate(spec)
    if curv is None:
        curv = curvature(spec)
    fp = fibre_product(spec)
    rb: dict = {}
    r3 = delta_inv(curv.Relement)
    r3.max_deg = None
    rb[3] = r3
    for D in range(4, K + 1):
        X = nabla(rb[D - 1], fp)
        sq = _r_square_part(rb, fp, D + 1)
        if sq:
            X = X + i_over_hbar(sq, "r o r")
        rD = delta_inv(X)
        rD.max_deg = None
        rb[D] = rD
        log.debug("r^(%d): %d terms", D, len(rD))
    data = FedosovData(spec, curv, K, rb, fp)
    if check:
        check_r_invariants(data)
    return data


def fedosov_derivation(F: AlgebraElement, data: FedosovData, max_deg: int | None = None) -> AlgebraElement:
    """``D F = -delta F + nabla F + (i/hbar) ad(r) F``.

    The result is exact in total degrees ``<= min(max_deg, K - 2 + min Deg(F))``
    and (when ``F`` is itself truncated at degree N) ``<= N - 1``.
    """
    fp = data.fp
    low = min((key_deg(k) for k in F.terms), default=0)
    limit = data.K - 2 + low
    if F.max_deg is not None:
        limit = min(limit, F.max_deg - 1)
    if max_deg is not None:
        limit = min(limit, max_deg)
    r = data.r(min(data.K, limit - low + 2))
    r.max_deg = None
    out = -delta(F) + nabla(F, fp)
    if r:
        out = out + i_over_hbar_ad(r, F, fp, max_deg=limit)
    out = out.truncated(limit)
    return out


# ---------------------------------------------------------------------------
# Fedosov-Taylor series and the star product

def _check_section(phi: AlgebraElement, allow_hbar: bool = True):
    for k in phi.terms:
        if any(k[1]) or k[3] or (k[0] and not allow_hbar):
            raise ValueError("expected a section of the Grassmann bundle "
                             "(symmetric and form degree zero)")


def taylor(phi: AlgebraElement, data: FedosovData, K: int | None = None) -> AlgebraElement:
    """Fedosov-Taylor series tau(phi) through total degree K (default ``data.K``).

    ``phi`` is an element of C = C_0[[hbar]] (symmetric and form degree zero).
    """
    _check_section(phi)
    K = data.K if K is None else K
    if K > data.K:
        raise CutoffError(f"tau to degree {K} needs r to degree {K}, have {data.K}")
    fp = data.fp
    rb = data.r_by_degree
    w: dict[int, AlgebraElement] = {}
    for k in range(0, K + 1):
        wk = phi.part(deg=k)
        if k >= 1:
            X = nabla(w[k - 1], fp)
            for l in range(1, k - 1):
                wl = w[k - 1 - l]
                if wl and rb[l + 2]:
                    X = X + i_over_hbar_ad(rb[l + 2], wl, fp, max_deg=k - 1)
            wk = wk + delta_inv(X)
        wk.max_deg = None
        w[k] = wk
    total = phi.alg.zero()
    for k in range(K + 1):
        total = total + w[k]
    total.max_deg = K
    return total


def required_cutoff(T: int, n: int) -> int:
    """Total degree that makes every M_t, t <= T, exact: 2T + n."""
    return 2 * T + n


def star(phi: AlgebraElement, psi: AlgebraElement, data: FedosovData, T: int,
         K: int | None = None) -> AlgebraElement:
    """``sigma(tau(phi) o tau(psi))`` through hbar order T.

    ``K`` is the total-degree cutoff for tau (default ``2T + n``); it must be
    at least ``2T + n`` and at most ``data.K``.
    """
    _check_section(phi)
    _check_section(psi)
    need = required_cutoff(T, data.spec.n)
    K = need if K is None else K
    if K < need:
        raise CutoffError(f"cutoff {K} too small for hbar order {T}: need K >= 2T + n = {need}")
    if K > data.K:
        raise CutoffError(f"cutoff {K} exceeds the degree of r ({data.K}); rebuild r")
    tphi = taylor(phi, data, K)
    tpsi = tphi if psi is phi else taylor(psi, data, K)
    out = circ(tphi, tpsi, data.fp, max_deg=K, max_h=T, sigma_only=True)
    out.max_deg = None
    return out


def star_coefficients(phi, psi, data: FedosovData, T: int, K: int | None = None) -> list:
    """``[M_0, ..., M_T]`` with  phi * psi = sum_t (i hbar/2)^t M_t."""
    prod = star(phi, psi, data, T, K)
    return [_coefficient_of_order(prod, t) for t in range(T + 1)]


def _coefficient_of_order(prod: AlgebraElement, t: int) -> AlgebraElement:
    alg = prod.alg
    # 1 / (i/2)^t = (-2i)^t
    factor = alg.coeff(2**t).times_i_power(-t)
    part = {(0,) + k[1:]: c * factor for k, c in prod.terms.items() if k[0] == t}
    return AlgebraElement(alg, part)


def extract_Mt(phi: AlgebraElement, psi: AlgebraElement, data: FedosovData, t: int,
               K: int | None = None) -> AlgebraElement:
    """Coefficient M_t of (i hbar/2)^t in phi * psi."""
    return _coefficient_of_order(star(phi, psi, data, t, K), t)


# ---------------------------------------------------------------------------
# serialization of r, one block per total degree

def dump_r(data: FedosovData) -> str:
    from .galgebra import render

    name = data.spec.name or "unnamed"
    lines = [f"# Fedosov connection r for geometry {name}", f"K = {data.K}"]
    for k in range(3, data.K + 1):
        lines.append(f"[degree {k}]")
        lines.append(render(data.r_by_degree[k]))
    return "\n".join(lines) + "\n"


def load_r(text: str, spec: GeometrySpec, check: bool = True) -> FedosovData:
    """Inverse of :func:`dump_r`; re-verifies all invariants unless ``check`` is false."""
    from .galgebra import parse_element

    if not spec.validated:
        validate(spec)
    K = None
    blocks: dict[int, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("K ="):
            K = int(line[3:])
        elif line.startswith("[degree ") and line.endswith("]"):
            current = int(line[8:-1])
            blocks[current] = []
        elif current is None:
            raise ValueError(f"unexpected line before first degree block: {raw!r}")
        else:
            blocks[current].append(line)
    if K is None:
        raise ValueError("missing 'K = ...' header")
    if sorted(blocks) != list(range(3, K + 1)):
        raise ValueError(f"expected degree blocks 3..{K}, found {sorted(blocks)}")
    alg = spec.algebra
    rb = {k: parse_element("\n".join(v), alg) for k, v in blocks.items()}
    data = FedosovData(spec, curvature(spec), K, rb, fibre_product(spec))
    if check:
        check_r_invariants(data)
    return data
