"""Circular Gaussian observation channel over Z_q.

The operating point SNR×N is mapped to a noise level through the variance
of a uniform residue: ``sigma**2 = (q**2 - 1) / 12 / snr_n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.special import erfc

__all__ = [
    "ChannelParams",
    "ObservationSet",
    "channel_from_snr_n",
    "wrap_terms_for",
    "sample_observation",
    "sample_observations",
    "likelihood_vector",
    "likelihood_matrix",
    "entropy_bits",
    "mi_single_layer",
    "genie_bound",
    "genie_threshold_snr",
]

TAIL_MASS = 1e-12


def uniform_variance(q: int) -> float:
    return (q * q - 1) / 12.0


def wrap_terms_for(q: int, sigma: float, tail: float = TAIL_MASS) -> int:
    """Smallest W whose neglected Gaussian tail beyond ``W*q - q/2`` is < tail."""
    if sigma == 0:
        return 0
    w = 0
    while erfc((w * q + q / 2) / (sigma * math.sqrt(2))) >= tail:
        w += 1
    return w + 1 if w == 0 else w


@dataclass(frozen=True)
class ChannelParams:
    q: int
    snr_n: float
    sigma: float
    wrap_terms: int

    @property
    def fourier(self) -> bool:
        """Use the Fourier (theta-series) form when the wrap sum gets long."""
        return self.wrap_terms > MAX_DIRECT_WRAPS


MAX_DIRECT_WRAPS = 4


def channel_from_snr_n(q: int, snr_n: float) -> ChannelParams:
    if not snr_n > 0:
        raise ValueError(f"snr_n must be positive, got {snr_n}")
    sigma = 0.0 if math.isinf(snr_n) else math.sqrt(uniform_variance(q) / snr_n)
    wraps = wrap_terms_for(q, sigma) if sigma < 50 * q else MAX_DIRECT_WRAPS + 1
    return ChannelParams(q=q, snr_n=float(snr_n), sigma=sigma, wrap_terms=wraps)


def sample_observations(x, channel: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if channel.sigma == 0:
        return x.copy()
    return np.mod(x + rng.normal(0.0, channel.sigma, size=x.shape), channel.q)


def sample_observation(x: int, channel: ChannelParams, rng: np.random.Generator) -> float:
    return float(sample_observations(np.array([x]), channel, rng)[0])


def _kernel(dist: np.ndarray, channel: ChannelParams) -> np.ndarray:
    """Unnormalised wrapped-Gaussian density at signed distances ``dist``."""
    q, s = channel.q, channel.sigma
    if channel.fourier:
        # theta-series: 1 + 2 sum_k exp(-2 pi^2 k^2 s^2 / q^2) cos(2 pi k d / q)
        out = np.ones_like(dist)
        k = 1
        while True:
            a = math.exp(-2 * math.pi**2 * k * k * s * s / (q * q))
            if a < 1e-17:
                break
            out += 2 * a * np.cos(2 * math.pi * k * dist / q)
            k += 1
        return out
    W = channel.wrap_terms
    out = np.zeros_like(dist)
    for w in range(-W, W + 1):
        out += np.exp(-((dist - w * q) ** 2) / (2 * s * s))
    return out


def likelihood_matrix(y: np.ndarray, channel: ChannelParams) -> np.ndarray:
    """Normalised likelihoods for a batch of observations: (len(y), q)."""
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    q = channel.q
    xs = np.arange(q, dtype=np.float64)
    if channel.sigma == 0:
        out = np.zeros((len(y), q))
        out[np.arange(len(y)), np.rint(y).astype(np.int64) % q] = 1.0
        return out
    # distances folded into [-q/2, q/2) keep the central wrap term dominant
    d = np.mod(y[:, None] - xs[None, :] + q / 2, q) - q / 2
    p = _kernel(d, channel)
    p = np.maximum(p, 0.0)
    return p / p.sum(axis=1, keepdims=True)


def likelihood_vector(y: float, channel: ChannelParams) -> np.ndarray:
    return likelihood_matrix(np.array([y]), channel)[0]


def entropy_bits(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


@dataclass
class ObservationSet:
    channel: ChannelParams
    layers: dict = field(default_factory=dict)  # layer -> (n,) observations

    def __post_init__(self):
        if 0 in self.layers:
            raise ValueError("level 0 receives no observations")
        if any(l < 0 for l in self.layers):
            raise ValueError("negative layer index")

    @property
    def observed_layers(self) -> list[int]:
        return sorted(self.layers)

    @classmethod
    def from_trace(cls, levels: np.ndarray, layers, channel: ChannelParams, rng):
        """Observe the given layers of a (K+1, n) level array, in layer order."""
        obs = {}
        for l in sorted(int(x) for x in layers):
            if l == 0:
                raise ValueError("level 0 receives no observations")
            if l >= len(levels):
                raise ValueError(f"layer {l} outside trace")
            obs[l] = sample_observations(levels[l], channel, rng)
        return cls(channel, obs)


# exp(-40) terms are below double resolution relative to the mode
_EXP_CUT = 40.0


@njit(cache=True)
def _posterior_entropies(y, q, sigma, wraps):
    """Exact q-term posterior entropy (bits) for each observation."""
    out = np.empty(len(y))
    inv = 1.0 / (2.0 * sigma * sigma)
    half = int(math.ceil(math.sqrt(_EXP_CUT / inv))) + 1
    windowed = 2 * half + 1 < q
    m = 2 * half + 1 if windowed else q
    p = np.empty(m)
    for i in range(len(y)):
        z = 0.0
        base = math.floor(y[i])
        for j in range(m):
            if windowed:
                d = y[i] - (base + j - half)
                p[j] = math.exp(-d * d * inv)
            else:
                d = (y[i] - j + q / 2) % q - q / 2
                acc = 0.0
                for w in range(-wraps, wraps + 1):
                    e = (d - w * q) ** 2 * inv
                    if e < 745.0:
                        acc += math.exp(-e)
                p[j] = acc
            z += p[j]
        h = 0.0
        for j in range(m):
            if p[j] > 0.0:
                t = p[j] / z
                h -= t * math.log2(t)
        out[i] = h
    return out


@lru_cache(maxsize=256)
def mi_single_layer(q: int, snr_n: float, n_samples: int = 100_000, seed: int = 0) -> float:
    """Monte Carlo I(X;Y) in bits for uniform X on Z_q through one channel use."""
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    ch = channel_from_snr_n(q, snr_n)
    if ch.sigma == 0:
        return math.log2(q)
    rng = np.random.default_rng(seed)
    # posterior shape depends only on y - x, so x = 0 loses no generality
    y = sample_observations(np.zeros(n_samples), ch, rng)
    if ch.fourier:
        h = np.concatenate([entropy_bits(likelihood_matrix(c, ch)) for c in np.array_split(y, 64)])
    else:
        h = _posterior_entropies(y, q, ch.sigma, ch.wrap_terms)
    mi = math.log2(q) - h.mean()
    return float(min(max(mi, 0.0), math.log2(q)))


def genie_bound(q: int, snr_n: float, n_layers: int, n_samples: int = 100_000) -> float:
    if n_layers < 1:
        raise ValueError("need at least one observed layer")
    return min(math.log2(q), n_layers * mi_single_layer(q, snr_n, n_samples))


def genie_threshold_snr(q: int, n_layers: int = 7, lo: float = 1.0, hi: float = 1000.0,
                        n_samples: int = 100_000) -> float:
    """Smallest snr_n at which the genie bound saturates (bisection in log space)."""
    target = math.log2(q)
    for _ in range(40):
        mid = math.sqrt(lo * hi)
        if n_layers * mi_single_layer(q, mid, n_samples) >= target:
            hi = mid
        else:
            lo = mid
        if hi / lo < 1.001:
            break
    return hi
