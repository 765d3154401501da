"""Modular arithmetic, twiddle tables and a layer-capturing INTT.

Two twiddle conventions are supported:

* ``negacyclic`` -- the FIPS 203 construction generalised to ``K`` layers:
  gamma has multiplicative order ``2**(K+1)`` and the INTT butterfly at
  counter ``i`` (counting down from ``2**K - 1``) uses
  ``gamma ** bitrev_K(i)``.  The ML-KEM instance is ``(3329, 256, 7, 17)``.
* ``generic`` -- for toy primes where no element of order ``2**(K+1)``
  exists (e.g. q=97 with K=8).  gamma must be a primitive root and the same
  index rule is applied.  The butterfly pairing is identical; only the
  twiddle values differ, and the forward transform is the exact
  butterfly-by-butterfly inverse of the INTT.

The layered trace is the *unscaled* Gentleman-Sande cascade so that every
adjacent level pair satisfies its butterfly constraints exactly.  The final
``2**-K`` scaling of the reference INTT is applied only to
``LayeredTrace.output``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from sympy import isprime
from sympy.ntheory import n_order, primitive_root

__all__ = [
    "FieldParams",
    "LayeredTrace",
    "Butterfly",
    "mlkem",
    "toy",
    "bitrev",
    "gs_butterfly",
    "gs_butterfly_inverse",
    "twiddle_table",
    "butterfly_schedule",
    "as_poly",
    "intt_layers",
    "intt",
    "ntt_forward",
]


def bitrev(k: int, width: int) -> int:
    """Reverse the low ``width`` bits of ``k``."""
    if not 0 <= k < (1 << width):
        raise ValueError(f"index {k} out of range for width {width}")
    out = 0
    for _ in range(width):
        out = (out << 1) | (k & 1)
        k >>= 1
    return out


@dataclass(frozen=True)
class FieldParams:
    q: int
    n: int
    K: int
    gamma: int
    twiddle_mode: str = "negacyclic"

    def __post_init__(self):
        if not isprime(self.q):
            raise ValueError(f"q={self.q} is not prime")
        if self.n < 2 or self.n & (self.n - 1):
            raise ValueError(f"n={self.n} is not a power of two")
        if self.K < 1 or (1 << self.K) > self.n:
            raise ValueError(f"K={self.K} needs 1 <= K <= log2(n)")
        if self.twiddle_mode not in ("negacyclic", "generic"):
            raise ValueError(f"unknown twiddle mode {self.twiddle_mode!r}")
        if not 0 < self.gamma < self.q:
            raise ValueError("gamma must be a nonzero residue")
        order = n_order(self.gamma, self.q)
        if order != self.required_order:
            raise ValueError(
                f"gamma={self.gamma} has order {order} mod {self.q}; "
                f"{self.twiddle_mode} instance needs {self.required_order}"
            )

    @property
    def required_order(self) -> int:
        if self.twiddle_mode == "negacyclic":
            return 1 << (self.K + 1)
        return self.q - 1

    @property
    def bitrev_width(self) -> int:
        return self.K

    @property
    def min_len(self) -> int:
        """Butterfly half-span of the first INTT layer."""
        return self.n >> self.K

    @property
    def n_levels(self) -> int:
        return self.K + 1

    @property
    def n_inv_scale(self) -> int:
        """Inverse of ``2**K`` mod q (3303 for ML-KEM)."""
        return pow(1 << self.K, -1, self.q)

    @cached_property
    def zetas(self) -> np.ndarray:
        return twiddle_table(self)

    def describe(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "K": self.K,
            "gamma": self.gamma,
            "twiddle_mode": self.twiddle_mode,
        }


def mlkem() -> FieldParams:
    return FieldParams(q=3329, n=256, K=7, gamma=17)


def toy(q: int, n: int, K: int) -> FieldParams:
    """Build a toy instance, searching for a suitable gamma.

    Uses the negacyclic convention when ``2**(K+1)`` divides ``q - 1``,
    otherwise falls back to the generic convention with the smallest
    primitive root.  The chosen gamma is recorded in ``describe()``.
    """
    order = 1 << (K + 1)
    if (q - 1) % order == 0:
        for g in range(2, q):
            if n_order(g, q) == order:
                return FieldParams(q=q, n=n, K=K, gamma=g)
    return FieldParams(q=q, n=n, K=K, gamma=int(primitive_root(q)), twiddle_mode="generic")


def twiddle_table(params: FieldParams) -> np.ndarray:
    """``zetas[i] = gamma ** bitrev_K(i) mod q`` for ``i in [0, 2**K)``.

    The INTT consumes entries ``2**K - 1`` down to ``1``; entry 0 is unused.
    """
    size = 1 << params.K
    table = np.array(
        [pow(params.gamma, bitrev(i, params.K), params.q) for i in range(size)],
        dtype=np.int64,
    )
    if np.any(table == 0):
        raise ValueError("twiddle table contains a non-invertible entry")
    return table


def gs_butterfly(u: int, v: int, zeta: int, params: FieldParams) -> tuple[int, int]:
    q = params.q
    return (u + v) % q, (zeta * (v - u)) % q


def gs_butterfly_inverse(u_out: int, v_out: int, zeta: int, params: FieldParams) -> tuple[int, int]:
    q = params.q
    inv2 = pow(2, -1, q)
    d = (v_out * pow(zeta, -1, q)) % q
    u = ((u_out - d) * inv2) % q
    return u, (u_out - u) % q


@dataclass(frozen=True)
class Butterfly:
    layer: int  # 1..K
    top: int  # position of u
    bottom: int  # position of v
    zeta: int


def butterfly_schedule(params: FieldParams) -> list[Butterfly]:
    """Butterflies in FIPS 203 Algorithm 10 order (layer-major)."""
    zetas = params.zetas
    out = []
    i = (1 << params.K) - 1
    length = params.min_len
    for layer in range(1, params.K + 1):
        for start in range(0, params.n, 2 * length):
            zeta = int(zetas[i])
            i -= 1
            for j in range(start, start + length):
                out.append(Butterfly(layer, j, j + length, zeta))
        length *= 2
    return out


def _layer_arrays(params: FieldParams):
    """Per-layer (top, bottom, zeta) index arrays for vectorised evaluation."""
    sched = butterfly_schedule(params)
    per = params.n // 2
    top = np.array([b.top for b in sched], dtype=np.int64).reshape(params.K, per)
    bot = np.array([b.bottom for b in sched], dtype=np.int64).reshape(params.K, per)
    zeta = np.array([b.zeta for b in sched], dtype=np.int64).reshape(params.K, per)
    return top, bot, zeta


def as_poly(coeffs, params: FieldParams) -> np.ndarray:
    arr = np.asarray(coeffs, dtype=np.int64)
    if arr.shape[-1] != params.n:
        raise ValueError(f"expected {params.n} coefficients, got {arr.shape[-1]}")
    if np.any(arr < 0) or np.any(arr >= params.q):
        raise ValueError("coefficients must lie in [0, q)")
    return arr


@dataclass(frozen=True)
class LayeredTrace:
    params: FieldParams
    levels: np.ndarray  # (K+1, n); level 0 is the input
    output: np.ndarray = field(repr=False)  # reference INTT result (scaled)

    @property
    def secret(self) -> np.ndarray:
        return self.levels[0]


def intt_levels(inputs: np.ndarray, params: FieldParams) -> np.ndarray:
    """Vectorised cascade: ``inputs`` (..., n) -> levels (..., K+1, n)."""
    q = params.q
    top, bot, zeta = _layer_arrays(params)
    cur = np.array(inputs, dtype=np.int64) % q
    levels = [cur]
    for k in range(params.K):
        u = cur[..., top[k]]
        v = cur[..., bot[k]]
        nxt = np.empty_like(cur)
        nxt[..., top[k]] = (u + v) % q
        nxt[..., bot[k]] = (zeta[k] * ((v - u) % q)) % q
        levels.append(nxt)
        cur = nxt
    return np.stack(levels, axis=-2)


def intt_layers(poly, params: FieldParams) -> LayeredTrace:
    p = as_poly(poly, params)
    levels = intt_levels(p, params)
    output = (levels[-1] * params.n_inv_scale) % params.q
    return LayeredTrace(params, levels, output)


def intt(poly, params: FieldParams) -> np.ndarray:
    return intt_layers(poly, params).output


def ntt_forward(poly, params: FieldParams) -> np.ndarray:
    """Forward transform; ``ntt_forward(intt(p)) == p``.

    Negacyclic instances use Cooley-Tukey butterflies with zetas indexed
    upward from 1 (FIPS 203 Algorithm 9); generic instances invert the GS
    cascade butterfly by butterfly.
    """
    f = as_poly(poly, params).copy()
    q = params.q
    if params.twiddle_mode == "negacyclic":
        zetas = params.zetas
        k = 1
        length = params.n // 2
        while length >= params.min_len:
            for start in range(0, params.n, 2 * length):
                zeta = int(zetas[k])
                k += 1
                hi = slice(start + length, start + 2 * length)
                lo = slice(start, start + length)
                t = (zeta * f[hi]) % q
                f[hi] = (f[lo] - t) % q
                f[lo] = (f[lo] + t) % q
            length //= 2
        return f
    # generic: undo the scaling, then invert each layer in reverse order
    f = (f * (1 << params.K)) % q
    inv2 = pow(2, -1, q)
    top, bot, zeta = _layer_arrays(params)
    for k in reversed(range(params.K)):
        zinv = np.array([pow(int(z), -1, q) for z in zeta[k]], dtype=np.int64)
        uo, vo = f[top[k]], f[bot[k]]
        d = (vo * zinv) % q
        u = ((uo - d) * inv2) % q
        f[top[k]] = u
        f[bot[k]] = (uo - u) % q
    return f
