"""Inner loops of the fibrewise product and nabla over term dictionaries."""
from __future__ import annotations

from .galgebra import _left_sign as left_sign, popcount, wedge_sign

__all__ = ["left_sign", "wedge_sign", "apply_i_seq", "apply_j_seq", "circ_terms", "nabla_terms"]


def apply_i_seq(mask: int, seq) -> tuple[int, int]:
    """Apply ``i(e_{seq[0]})`` first, then ``seq[1]``...: ``(sign, remaining mask)``."""
    sign = 1
    for A in seq:
        if popcount(mask & ((1 << A) - 1)) & 1:
            sign = -sign
        mask ^= 1 << A
    return sign, mask


def apply_j_seq(mask: int, seq) -> tuple[int, int]:
    """As :func:`apply_i_seq` for ``j = P_E i``."""
    sign = 1
    for A in seq:
        if popcount(mask & ((1 << A) - 1)) & 1:
            sign = -sign
        # P_E on the result of degree d-1 gives (-1)^(d-1)
        if not popcount(mask) & 1:
            sign = -sign
        mask ^= 1 << A
    return sign, mask


def _add(out: dict, key, c):
    old = out.get(key)
    out[key] = c if old is None else old + c


def _prune(out: dict) -> dict:
    return {k: c for k, c in out.items() if not c.is_zero()}


def circ_terms(Ft: dict, Gt: dict, fp, limit, max_h, sigma_only) -> dict:
    out: dict = {}
    table = fp.table
    for kF, cF in Ft.items():
        hF, sF, gF, aF = kF
        dF = 2 * hF + sum(sF) + popcount(gF)
        for kG, cG in Gt.items():
            hG, sG, gG, aG = kG
            if aF & aG:
                continue
            if limit is not None and dF + 2 * hG + sum(sG) + popcount(gG) > limit:
                continue
            if sigma_only and sum(sF) != sum(sG):
                continue
            h0 = hF + hG
            if max_h is not None and h0 > max_h:
                continue
            sa = wedge_sign(aF, aG)
            a = aF | aG
            cc = cF * cG
            if sa < 0:
                cc = -cc
            for kl, s, g, w in table(sF, gF, sG, gG):
                if max_h is not None and h0 + kl > max_h:
                    continue
                if sigma_only and any(s):
                    continue
                _add(out, (h0 + kl, s, g, a), (cc * w).times_i_power(kl))
    return _prune(out)


def nabla_terms(Ft: dict, fp, dim: int) -> dict:
    out: dict = {}
    for key, c in Ft.items():
        h, s, g, a = key
        conn = fp.nabla_table(s, g)
        for i in range(dim):
            bit = 1 << i
            if a & bit:
                continue
            a2 = a | bit
            sgn = left_sign(a, i)
            dc = c.diff(i)
            if not dc.is_zero():
                _add(out, (h, s, g, a2), dc if sgn > 0 else -dc)
            for j, s2, g2, w in conn:
                if j == i:
                    v = c * w
                    _add(out, (h, s2, g2, a2), v if sgn > 0 else -v)
    return _prune(out)
