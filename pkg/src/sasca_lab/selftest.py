"""Quick self-checks: transform round trips and tiny-instance oracle agreement."""

from __future__ import annotations

import numpy as np

from .bp import bp_iterate, init_state
from .field import intt, intt_layers, mlkem, ntt_forward, toy
from .graph import build_graph, validate_graph
from .keyrank import exhaustive_rank, key_rank
from .observation import ObservationSet, channel_from_snr_n
from .oracle import exact_level_marginals

__all__ = ["run_selftest"]


def _roundtrip(rng) -> dict:
    ok = True
    for params in (mlkem(), toy(17, 4, 2)):
        for _ in range(20):
            p = rng.integers(0, params.q, params.n)
            ok &= bool(np.array_equal(ntt_forward(intt(p, params), params), p))
            ok &= bool(np.array_equal(intt(ntt_forward(p, params), params), p))
    return {"name": "ntt_roundtrip", "passed": ok}


def _constraints(rng) -> dict:
    params = mlkem()
    sat, total = validate_graph(build_graph(params), rng.integers(0, params.q, params.n))
    return {"name": "butterfly_constraints", "passed": sat == total == 896, "satisfied": sat}


def _oracle(rng) -> dict:
    params = toy(17, 4, 2)
    g = build_graph(params)
    worst = 0.0
    for _ in range(3):
        tr = intt_layers(rng.integers(0, 17, 4), params)
        obs = ObservationSet.from_trace(tr.levels, [1], channel_from_snr_n(17, 20.0), rng)
        st = init_state(g, obs)
        for _ in range(4):
            bp_iterate(st, 0.0, 0.0)
        worst = max(worst, float(np.abs(st.beliefs() - exact_level_marginals(params, obs)).max()))
    return {"name": "bp_oracle_acyclic", "passed": worst < 1e-9, "max_abs_err": worst}


def _rank(rng) -> dict:
    ok = True
    for _ in range(5):
        b = rng.dirichlet(np.full(17, 0.5), size=4)
        t = rng.integers(0, 17, 4)
        ok &= key_rank(b, t, 10**6).rank == exhaustive_rank(b, t)
    return {"name": "key_rank_exhaustive", "passed": bool(ok)}


def run_selftest(seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    checks = [_roundtrip(rng), _constraints(rng), _oracle(rng), _rank(rng)]
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
