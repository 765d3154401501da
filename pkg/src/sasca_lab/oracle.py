"""Brute-force exact posterior for tiny instances (verification only)."""

from __future__ import annotations

import numpy as np

from .field import FieldParams, intt_levels
from .observation import ObservationSet, likelihood_matrix

__all__ = ["ORACLE_GUARD", "exact_posterior_oracle", "exact_level_marginals"]

ORACLE_GUARD = 10**7


def _enumerate(params: FieldParams, guard: int, chunk: int = 1 << 16):
    total = params.q**params.n
    if total > guard:
        raise ValueError(f"q^n = {total} exceeds the oracle guard {guard}")
    powers = params.q ** np.arange(params.n - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield (idx[:, None] // powers[None, :]) % params.q


def exact_level_marginals(params: FieldParams, obs: ObservationSet | None,
                          guard: int = ORACLE_GUARD) -> np.ndarray:
    """Exact (K+1, n, q) marginals of every INTT variable given ``obs``."""
    q, n, K = params.q, params.n, params.K
    loglik = {}
    if obs is not None:
        for layer, y in obs.layers.items():
            if layer == 0:
                raise ValueError("level 0 receives no observations")
            with np.errstate(divide="ignore"):
                loglik[layer] = np.log(likelihood_matrix(np.asarray(y, dtype=float), obs.channel))
    chunks = []
    weights = []
    for secrets in _enumerate(params, guard):
        levels = intt_levels(secrets, params)  # (m, K+1, n)
        lw = np.zeros(len(secrets))
        for layer, ll in loglik.items():
            lw += ll[np.arange(n)[None, :], levels[:, layer, :]].sum(axis=1)
        chunks.append(levels)
        weights.append(lw)
    levels = np.concatenate(chunks)
    lw = np.concatenate(weights)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    out = np.zeros((K + 1, n, q))
    for lvl in range(K + 1):
        for pos in range(n):
            out[lvl, pos] = np.bincount(levels[:, lvl, pos], weights=w, minlength=q)
    return out


def exact_posterior_oracle(graph, obs: ObservationSet | None, guard: int = ORACLE_GUARD) -> np.ndarray:
    """Exact level-0 marginals, shape (n, q)."""
    return exact_level_marginals(graph.params, obs, guard)[0]
