"""Numba kernels for butterfly-factor sum-product updates.

A GS butterfly ``(u, v) -> (u + v, zeta * (v - u))`` is a bijection on
pairs: any two of its four variables determine the other two.  Each
outgoing message is therefore a sum over pairs drawn from two of the three
incoming messages, which is the O(q^2) update.  The pair is taken from the
two inputs with the smallest support so that sharp messages make the sum
cheap.  Entries below ``tol * max`` are skipped; ``tol = 0`` is exact.

Variable indices inside a factor: 0 = u, 1 = v, 2 = u_out, 3 = v_out.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

FLOOR = 1e-300


@njit(cache=True, inline="always")
def _complete(i, j, a, b, q, z, zi, inv2):
    """Fill (u, v, u_out, v_out) from variable ``i`` = a and ``j`` = b (i < j)."""
    if i == 0 and j == 1:
        u, v = a, b
    elif i == 0 and j == 2:
        u, v = a, (b - a) % q
    elif i == 0 and j == 3:
        u, v = a, (a + b * zi) % q
    elif i == 1 and j == 2:
        u, v = (b - a) % q, a
    elif i == 1 and j == 3:
        u, v = (a - b * zi) % q, a
    else:
        d = (b * zi) % q
        u = ((a - d) % q) * inv2 % q
        v = ((a + d) % q) * inv2 % q
    uo = (u + v) % q
    vo = (z * ((v - u) % q)) % q
    return u, v, uo, vo


@njit(cache=True)
def _pair_coeffs(i, j, q, z, zi, inv2, coef):
    """Each variable as ``(alpha * a + beta * b) mod q`` given variables i=a, j=b."""
    if i == 0 and j == 1:
        cu0, cu1, cv0, cv1 = 1, 0, 0, 1
    elif i == 0 and j == 2:
        cu0, cu1, cv0, cv1 = 1, 0, q - 1, 1
    elif i == 0 and j == 3:
        cu0, cu1, cv0, cv1 = 1, 0, 1, zi
    elif i == 1 and j == 2:
        cu0, cu1, cv0, cv1 = q - 1, 1, 1, 0
    elif i == 1 and j == 3:
        cu0, cu1, cv0, cv1 = 1, (q - zi) % q, 1, 0
    else:
        cu0, cu1 = inv2, (q - inv2 * zi % q) % q
        cv0, cv1 = inv2, inv2 * zi % q
    coef[0, 0], coef[0, 1] = cu0, cu1
    coef[1, 0], coef[1, 1] = cv0, cv1
    coef[2, 0], coef[2, 1] = (cu0 + cv0) % q, (cu1 + cv1) % q
    coef[3, 0] = z * ((cv0 - cu0) % q) % q
    coef[3, 1] = z * ((cv1 - cu1) % q) % q


@njit(cache=True, inline="always")
def _pick(k, u, v, uo, vo):
    if k == 0:
        return u
    if k == 1:
        return v
    if k == 2:
        return uo
    return vo


@njit(cache=True)
def factor_update(ins, out, z, zi, inv2, tol, supp, supp_len):
    """Compute the four outgoing messages of one butterfly.

    ``ins`` is (4, q) with each row scaled to max 1; ``out`` (4, q) receives
    unnormalised messages.  Returns False when any message sums to zero
    (caller falls back to the log domain).
    """
    q = ins.shape[1]
    uniform = np.zeros(4, dtype=np.bool_)
    for k in range(4):
        lo = 1.0
        n = 0
        for x in range(q):
            val = ins[k, x]
            if val < lo:
                lo = val
            if val > tol and val > 0.0:
                supp[k, n] = x
                n += 1
        supp_len[k] = n
        uniform[k] = (1.0 - lo) <= tol
    ok = True
    coef = np.empty((4, 2), dtype=np.int64)
    wb = np.empty(q)
    off_t = np.empty(q, dtype=np.int64)
    off_o = np.empty(q, dtype=np.int64)
    for t in range(4):
        others = np.empty(3, dtype=np.int64)
        m = 0
        n_uniform = 0
        for k in range(4):
            if k != t:
                others[m] = k
                m += 1
                if uniform[k]:
                    n_uniform += 1
        if n_uniform >= 2:
            for x in range(q):
                out[t, x] = 1.0
            continue
        for x in range(q):
            out[t, x] = 0.0
        # the two others with the smallest supports drive the pair loop
        best = 0
        for r in range(1, 3):
            if supp_len[others[r]] > supp_len[others[best]]:
                best = r
        i = -1
        j = -1
        third = others[best]
        for r in range(3):
            if r != best:
                if i < 0:
                    i = others[r]
                else:
                    j = others[r]
        _pair_coeffs(i, j, q, z, zi, inv2, coef)
        at, bt = coef[third, 0], coef[third, 1]
        ao, bo = coef[t, 0], coef[t, 1]
        nb = supp_len[j]
        for bj in range(nb):
            b = supp[j, bj]
            wb[bj] = ins[j, b]
            off_t[bj] = (bt * b) % q
            off_o[bj] = (bo * b) % q
        for ai in range(supp_len[i]):
            a = supp[i, ai]
            wa = ins[i, a]
            base_t = (at * a) % q
            base_o = (ao * a) % q
            for bj in range(nb):
                it = base_t + off_t[bj]
                if it >= q:
                    it -= q
                io = base_o + off_o[bj]
                if io >= q:
                    io -= q
                out[t, io] += wa * wb[bj] * ins[third, it]
        s = 0.0
        for x in range(q):
            s += out[t, x]
        if not (s > 0.0) or not math.isfinite(s):
            ok = False
    return ok


@njit(cache=True)
def factor_update_log(log_ins, out, z, zi, inv2):
    """Exact log-domain update; ``out`` receives log-messages shifted to max 0."""
    q = log_ins.shape[1]
    for t in range(4):
        others = np.empty(3, dtype=np.int64)
        m = 0
        for k in range(4):
            if k != t:
                others[m] = k
                m += 1
        i, j, third = others[0], others[1], others[2]
        acc = np.full(q, -np.inf)
        for a in range(q):
            la = log_ins[i, a]
            if la == -np.inf:
                continue
            for b in range(q):
                lb = log_ins[j, b]
                if lb == -np.inf:
                    continue
                u, v, uo, vo = _complete(i, j, a, b, q, z, zi, inv2)
                w = la + lb + log_ins[third, _pick(third, u, v, uo, vo)]
                x = _pick(t, u, v, uo, vo)
                cur = acc[x]
                if w > cur:
                    acc[x] = w + math.log1p(math.exp(cur - w)) if cur > -np.inf else w
                elif w > -np.inf:
                    acc[x] = cur + math.log1p(math.exp(w - cur))
        mx = acc.max()
        for x in range(q):
            out[t, x] = acc[x] - mx
    return True


@njit(cache=True)
def bp_round(layer, top, bottom, zeta, zeta_inv, inv2, local, up, down, new_up, new_down,
             damping, tol, log_fallbacks):
    """One synchronous round over every factor.

    ``up[l, p]`` is the message into variable (l, p) from its layer-``l``
    factor, ``down[l, p]`` the one from its layer-``l + 1`` factor.
    """
    q = local.shape[2]
    ins = np.empty((4, q))
    out = np.empty((4, q))
    supp = np.empty((4, q), dtype=np.int64)
    supp_len = np.empty(4, dtype=np.int64)
    for f in range(len(layer)):
        L = layer[f]
        t = top[f]
        b = bottom[f]
        for x in range(q):
            ins[0, x] = local[L - 1, t, x] * up[L - 1, t, x]
            ins[1, x] = local[L - 1, b, x] * up[L - 1, b, x]
            ins[2, x] = local[L, t, x] * down[L, t, x]
            ins[3, x] = local[L, b, x] * down[L, b, x]
        for k in range(4):
            mx = 0.0
            for x in range(q):
                if ins[k, x] > mx:
                    mx = ins[k, x]
            if mx > 0.0:
                for x in range(q):
                    ins[k, x] /= mx
        ok = factor_update(ins, out, zeta[f], zeta_inv[f], inv2, tol, supp, supp_len)
        if not ok:
            log_fallbacks[0] += 1
            log_ins = np.empty((4, q))
            for k in range(4):
                for x in range(q):
                    log_ins[k, x] = math.log(ins[k, x]) if ins[k, x] > 0.0 else -np.inf
            factor_update_log(log_ins, out, zeta[f], zeta_inv[f], inv2)
            for k in range(4):
                for x in range(q):
                    out[k, x] = math.exp(out[k, x])
        for k in range(4):
            s = 0.0
            for x in range(q):
                if out[k, x] < FLOOR:
                    out[k, x] = FLOOR
                s += out[k, x]
            for x in range(q):
                out[k, x] /= s
        _damp_into(new_down[L - 1, t], down[L - 1, t], out[0], damping)
        _damp_into(new_down[L - 1, b], down[L - 1, b], out[1], damping)
        _damp_into(new_up[L, t], up[L, t], out[2], damping)
        _damp_into(new_up[L, b], up[L, b], out[3], damping)


@njit(cache=True, inline="always")
def _damp_into(dst, old, computed, damping):
    q = dst.shape[0]
    s = 0.0
    for x in range(q):
        val = damping * old[x] + (1.0 - damping) * computed[x]
        dst[x] = val
        s += val
    for x in range(q):
        dst[x] /= s
