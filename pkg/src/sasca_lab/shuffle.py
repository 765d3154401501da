"""Shuffling models: RSI orderings, permutation entropy, enumeration cost and
an analytic CPA trace-overhead model with position bias."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import log_ndtr

__all__ = [
    "ShuffleSpec",
    "OverheadModel",
    "MODES",
    "rsi_orderings",
    "ordering_entropy",
    "rp_entropy",
    "enumeration_cost",
    "max_of_competitors_success",
    "position_identification_prob",
    "cpa_overhead",
    "overhead_curve",
]

MODES = ("known-position", "RSI", "full-RP")
ML_DSA_Q = 8380417


@dataclass(frozen=True)
class ShuffleSpec:
    mode: str = "RSI"
    S: int = 64
    chunk_starts: int = 16
    index_factor: int = 4
    layers: int = 7

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown shuffle mode {self.mode!r}")
        if self.S < 1 or self.layers < 1:
            raise ValueError("S and layers must be positive")
        if self.mode == "RSI" and self.chunk_starts * self.index_factor != self.S:
            raise ValueError("RSI needs chunk_starts * index_factor == S")


@dataclass(frozen=True)
class OverheadModel:
    rho: float = 0.1  # correlation of the correct hypothesis without shuffling
    bias_ratio: float = 0.0  # sigma_bias / sigma
    target: float = 0.9
    hypotheses: int = ML_DSA_Q

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.bias_ratio < 0:
            raise ValueError("bias ratio must be non-negative")
        if not 0 < self.target < 1:
            raise ValueError("target must lie in (0, 1)")
        if self.hypotheses < 2:
            raise ValueError("need at least two hypotheses")


def rsi_orderings(spec: ShuffleSpec = ShuffleSpec()) -> np.ndarray:
    """All (chunk_starts * index_factor) RSI traversals, shape (S_orderings, S).

    Ordering ``(r, c)`` visits chunk ``(c + i) mod 4`` for ``i = 0..3`` and,
    inside each chunk, slots ``(r + t) mod 16`` for ``t = 0..15``.  The first
    element ``16 c + r`` differs for every pair, so all orderings are
    distinct; ``(0, 0)`` is the identity.
    """
    if spec.mode != "RSI":
        raise ValueError("orderings are defined for RSI mode only")
    m, k = spec.chunk_starts, spec.index_factor
    t = np.arange(m)
    out = []
    for r in range(m):
        for c in range(k):
            out.append(np.concatenate([m * ((c + i) % k) + (r + t) % m for i in range(k)]))
    return np.array(out, dtype=np.int64)


def ordering_entropy(spec: ShuffleSpec = ShuffleSpec()) -> float:
    if spec.mode == "known-position":
        return 0.0
    if spec.mode == "RSI":
        return math.log2(spec.chunk_starts * spec.index_factor)
    return rp_entropy(spec.S)


def rp_entropy(S: int) -> float:
    if S < 1:
        raise ValueError("S must be positive")
    return math.lgamma(S + 1) / math.log(2)


def enumeration_cost(S: int, unmasked_layers: int, round_up_to_power_of_two: bool = False) -> dict:
    if S < 1 or unmasked_layers < 1:
        raise ValueError("inputs must be positive")
    runs = S * unmasked_layers
    if round_up_to_power_of_two:
        runs = 1 << (runs - 1).bit_length()
    return {"runs": runs, "bits": math.log2(runs)}


def _max_integral(mu: float, competitors: int) -> float:
    """P(Z + mu > max of ``competitors`` iid standard normals)."""
    if competitors == 0:
        return 1.0
    lo = min(mu, 0.0) - 12.0
    hi = max(mu, math.sqrt(2 * math.log(competitors + 1))) + 12.0

    def f(x):
        return math.exp(-0.5 * (x - mu) ** 2 + competitors * log_ndtr(x)) / math.sqrt(2 * math.pi)

    val, _ = quad(f, lo, hi, points=[mu], limit=200, epsabs=1e-13)
    return min(max(val, 0.0), 1.0)


def max_of_competitors_success(mu: float, hypotheses: int) -> float:
    """Probability the correct hypothesis scores above all ``hypotheses - 1`` others."""
    return _max_integral(mu, hypotheses - 1)


def position_identification_prob(S: int, bias_ratio: float) -> float:
    """Chance the attacker's bias channel ranks the true position first.

    The bias signal aggregated over ``S`` positions gives a separation of
    ``sqrt(S) * bias_ratio`` against ``S - 1`` competing positions; at zero
    bias this is ``1 / S``.
    """
    if S == 1:
        return 1.0
    return _max_integral(math.sqrt(S) * bias_ratio, S - 1)


@lru_cache(maxsize=64)
def _required_mu(target: float, hypotheses: int) -> float:
    return brentq(lambda m: max_of_competitors_success(m, hypotheses) - target, 0.0, 50.0, xtol=1e-12)


def _traces_for(rho_eff: float, model: OverheadModel) -> float:
    # Fisher z: atanh(r) * sqrt(N - 3) is unit-variance normal
    mu = _required_mu(model.target, model.hypotheses)
    return (mu / math.atanh(rho_eff)) ** 2 + 3.0


def effective_rho(spec: ShuffleSpec, model: OverheadModel) -> float:
    if spec.mode == "known-position":
        return model.rho
    if spec.mode == "full-RP":
        return model.rho / spec.S
    return model.rho * position_identification_prob(spec.S, model.bias_ratio)


def cpa_overhead(spec: ShuffleSpec, model: OverheadModel = OverheadModel()) -> float:
    """Traces needed with shuffling divided by traces needed without."""
    return _traces_for(effective_rho(spec, model), model) / _traces_for(model.rho, model)


def overhead_curve(biases, S: int = 64, model: OverheadModel = OverheadModel()) -> list[dict]:
    rows = []
    for b in biases:
        m = OverheadModel(model.rho, float(b), model.target, model.hypotheses)
        row = {"bias_ratio": float(b)}
        for mode in MODES:
            row[mode] = cpa_overhead(ShuffleSpec(mode=mode, S=S), m)
        rows.append(row)
    return rows
