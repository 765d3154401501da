import itertools
import math

import numpy as np
import pytest

from sasca_lab.bp import bp_iterate, init_state, level0_entropy, map_estimate, run_bp, write_trajectory_csv
from sasca_lab.bp_kernels import factor_update, factor_update_log
from sasca_lab.field import intt_layers, mlkem, toy
from sasca_lab.graph import build_graph
from sasca_lab.observation import ObservationSet, channel_from_snr_n
from sasca_lab.oracle import exact_level_marginals, exact_posterior_oracle

TOY = toy(17, 4, 2)


def make_obs(params, layers, snr, seed):
    rng = np.random.default_rng(seed)
    tr = intt_layers(rng.integers(0, params.q, params.n), params)
    return tr, ObservationSet.from_trace(tr.levels, layers, channel_from_snr_n(params.q, snr), rng)


def subgraph_marginals(graph, local):
    """Brute-force marginals of every variable touched by ``graph``'s factors."""
    q, n = graph.params.q, graph.params.n
    inc = graph.incidence()
    outputs = set(inc[:, 2:].ravel().tolist())
    touched = sorted(set(inc.ravel().tolist()))
    sources = [v for v in touched if v not in outputs]
    order = np.argsort(graph.layer, kind="stable")
    marg = {v: np.zeros(q) for v in touched}
    for vals in itertools.product(range(q), repeat=len(sources)):
        a = dict(zip(sources, vals))
        for f in order:
            u, v, uo, vo = inc[f]
            a[uo] = (a[u] + a[v]) % q
            a[vo] = (int(graph.zeta[f]) * (a[v] - a[u])) % q
        w = 1.0
        for var in touched:
            w *= local[var // n, var % n, a[var]]
        for var in touched:
            marg[var][a[var]] += w
    return {v: m / m.sum() for v, m in marg.items()}


def test_single_butterfly_exact_after_two_iterations():
    params = toy(17, 2, 1)
    g = build_graph(params)
    tr, obs = make_obs(params, [1], 3.0, 0)
    st = init_state(g, obs)
    for _ in range(2):
        bp_iterate(st, 0.0, 0.0)
    assert np.abs(st.beliefs() - exact_level_marginals(params, obs)).max() < 1e-9


@pytest.mark.parametrize("K,n", [(2, 4), (3, 8)])
def test_chain_exact_in_diameter_iterations(K, n):
    params = toy(17, n, K)
    full = build_graph(params)
    # the factors touching slot 0 on every layer form a chain
    idx = [int(np.flatnonzero((full.layer == l) & (full.top == 0))[0]) for l in range(1, K + 1)]
    g = full.subgraph(idx)
    rng = np.random.default_rng(K)
    tr = intt_layers(rng.integers(0, 17, n), params)
    obs = ObservationSet.from_trace(tr.levels, range(1, K + 1), channel_from_snr_n(17, 5.0), rng)
    st = init_state(g, obs)
    for _ in range(g.n_factors):
        bp_iterate(st, 0.0, 0.0)
    ref = subgraph_marginals(g, st.local)
    b = st.beliefs()
    for var, m in ref.items():
        assert np.abs(b[var // n, var % n] - m).max() < 1e-9
    before = st.beliefs()
    bp_iterate(st, 0.0, 0.0)
    assert np.abs(st.beliefs() - before).max() < 1e-12


def test_acyclic_subset_matches_oracle():
    # observing only layer 1 leaves every layer-2 message uniform
    for seed in range(5):
        tr, obs = make_obs(TOY, [1], 20.0, seed)
        st = init_state(build_graph(TOY), obs)
        for _ in range(4):
            bp_iterate(st, 0.0)
        assert np.abs(st.beliefs() - exact_level_marginals(TOY, obs)).max() < 1e-9


def test_pruned_matches_exact():
    g = build_graph(TOY)
    tr, obs = make_obs(TOY, [1, 2], 20.0, 11)
    a, b = init_state(g, obs), init_state(g, obs)
    for _ in range(10):
        bp_iterate(a, 0.5, 0.0)
        bp_iterate(b, 0.5, 1e-12)
    assert np.abs(a.beliefs() - b.beliefs()).max() < 1e-9


def test_loopy_map_agrees_with_oracle():
    g = build_graph(TOY)
    agree = 0
    tv = []
    for seed in range(50):
        tr, obs = make_obs(TOY, [1, 2], 20.0, 100 + seed)
        res = run_bp(g, obs, 30, 0.5, tr, seed, keep_beliefs=True, mi_one_layer=1.0)
        ex = exact_posterior_oracle(g, obs)
        tv.append(0.5 * np.abs(res.level0_beliefs - ex).sum(axis=1).max())
        agree += np.array_equal(map_estimate(res.level0_beliefs), map_estimate(ex))
    assert agree >= 40
    assert np.isfinite(tv).all()


def test_no_observations_uniform_fixed_point():
    g = build_graph(TOY)
    st = init_state(g, None)
    assert level0_entropy(st) == pytest.approx(math.log2(17))
    for _ in range(3):
        bp_iterate(st)
    assert np.allclose(st.beliefs(), 1 / 17, atol=1e-15)
    assert np.array_equal(map_estimate(st), np.zeros(4, dtype=int))


def test_uniform_observations_fixed_point():
    g = build_graph(TOY)
    ch = channel_from_snr_n(17, 1e-12)
    obs = ObservationSet(ch, {1: np.full(4, 3.0), 2: np.full(4, 9.0)})
    st = init_state(g, obs)
    for _ in range(5):
        bp_iterate(st)
    assert np.abs(st.beliefs() - 1 / 17).max() < 1e-9


def test_noiseless_full_key_mlkem():
    params = mlkem()
    tr, obs = make_obs(params, range(1, 8), math.inf, 5)
    st = init_state(build_graph(params), obs)
    b = st.beliefs()
    assert np.array_equal(np.argmax(b[1:], axis=-1), tr.levels[1:])
    res = run_bp(build_graph(params), obs, 2, 0.5, tr, 5)
    assert res.full_key and res.iterations_run <= 2


def test_normalisation_every_iteration():
    g = build_graph(TOY)
    tr, obs = make_obs(TOY, [1, 2], 8.0, 3)
    st = init_state(g, obs)
    for _ in range(15):
        bp_iterate(st, 0.5)
        for arr in (st.up, st.down, st.beliefs()):
            assert np.all(arr >= 0) and not np.isnan(arr).any()
            assert np.abs(arr.sum(axis=-1) - 1).max() < 1e-9


def test_determinism():
    g = build_graph(TOY)
    tr, obs = make_obs(TOY, [1, 2], 8.0, 4)
    a = run_bp(g, obs, 20, 0.5, tr, 4, keep_beliefs=True, mi_one_layer=1.0)
    b = run_bp(g, obs, 20, 0.5, tr, 4, keep_beliefs=True, mi_one_layer=1.0)
    assert a.to_dict() == b.to_dict()
    assert a.level0_beliefs.tobytes() == b.level0_beliefs.tobytes()


def test_trial_result_invariants(tmp_path):
    g = build_graph(TOY)
    tr, obs = make_obs(TOY, [1, 2], 30.0, 6)
    res = run_bp(g, obs, 12, 0.5, tr, 6, early_stop=False, mi_one_layer=2.0)
    assert len(res.entropy_trajectory) == res.iterations_run + 1 == 13
    assert 0 <= res.bsr <= 1 and 0 <= res.mi_bp <= math.log2(17)
    assert res.bp_gain == pytest.approx(res.mi_bp / 2.0)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(res, path, 17)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,entropy_bits,mi_bits" and len(lines) == 14


def test_early_stop_recorded():
    g = build_graph(TOY)
    tr, obs = make_obs(TOY, [1, 2], 30.0, 7)
    res = run_bp(g, obs, 500, 0.5, tr, 7, mi_one_layer=2.0)
    assert res.early_stopped and res.iterations_run < 500


def test_argument_validation():
    g = build_graph(TOY)
    st = init_state(g, None)
    with pytest.raises(ValueError):
        bp_iterate(st, 1.0)
    with pytest.raises(ValueError):
        init_state(g, ObservationSet(channel_from_snr_n(17, 1.0), {3: np.zeros(4)}))
    with pytest.raises(ValueError):
        init_state(g, ObservationSet(channel_from_snr_n(19, 1.0), {1: np.zeros(4)}))


def test_log_kernel_matches_linear():
    rng = np.random.default_rng(9)
    q = 17
    ins = rng.random((4, q)) ** 3
    ins /= ins.max(axis=1, keepdims=True)
    lin = np.empty((4, q))
    supp = np.empty((4, q), dtype=np.int64)
    sl = np.empty(4, dtype=np.int64)
    assert factor_update(ins, lin, 5, pow(5, -1, q), 9, 0.0, supp, sl)
    lg = np.empty((4, q))
    factor_update_log(np.log(ins), lg, 5, pow(5, -1, q), 9)
    lin /= lin.sum(axis=1, keepdims=True)
    ex = np.exp(lg)
    ex /= ex.sum(axis=1, keepdims=True)
    assert np.allclose(lin, ex, atol=1e-12)


def test_kernel_brute_force_single_factor():
    rng = np.random.default_rng(10)
    q, z = 17, 3
    ins = rng.random((4, q))
    out = np.empty((4, q))
    supp = np.empty((4, q), dtype=np.int64)
    sl = np.empty(4, dtype=np.int64)
    factor_update(ins / ins.max(axis=1, keepdims=True), out, z, pow(z, -1, q), 9, 0.0, supp, sl)
    ref = np.zeros((4, q))
    for u in range(q):
        for v in range(q):
            vals = (u, v, (u + v) % q, z * (v - u) % q)
            for t in range(4):
                w = np.prod([ins[k, vals[k]] for k in range(4) if k != t])
                ref[t, vals[t]] += w
    assert np.allclose(out / out.sum(1, keepdims=True), ref / ref.sum(1, keepdims=True), atol=1e-14)


def test_oracle_guard():
    with pytest.raises(ValueError):
        exact_posterior_oracle(build_graph(toy(17, 8, 3)), None)
