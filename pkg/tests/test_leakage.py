import json

import numpy as np
import pytest

from sasca_lab.field import mlkem, toy
from sasca_lab.leakage import (TraceSet, estimate_snr, generate_class_traces, generate_traces, leakage_signal,
                               save_traces, tvla_ttest)

P = mlkem()
WIN = slice(0, 200)


def _noise(rng, N, T=200):
    return TraceSet(rng.normal(size=(N, T)), np.zeros(N))


def test_null_familywise_rate():
    rng = np.random.default_rng(2024)
    leaks = sum(tvla_ttest(_noise(rng, 500), _noise(rng, 500)).leak for _ in range(1000))
    assert leaks <= 5


def test_null_through_generator():
    rng = np.random.default_rng(1)
    fixed = generate_traces(P, "HD", 0.0, 300, fixed_input=np.zeros(256), rng=rng, window=WIN)
    rand = generate_traces(P, "HD", 0.0, 300, rng=rng, window=WIN)
    assert fixed.meta["noise_sigma"] == 1.0 and not tvla_ttest(fixed, rand).leak


def test_one_sigma_shift():
    rng = np.random.default_rng(5)
    a = _noise(rng, 1000)
    b = TraceSet(rng.normal(size=(1000, 200)) + 1.0, np.zeros(1000))
    t = np.abs(tvla_ttest(b, a).t)
    assert abs(np.median(t) - 22.36) <= 3
    assert np.all(np.abs(t - 22.36) <= 3 + 1e-9) or np.mean(np.abs(t - 22.36) <= 3) > 0.99


def test_sqrt_n_scaling():
    rng = np.random.default_rng(6)
    grid = [250, 1000, 4000]
    means = []
    for N in grid:
        a = _noise(rng, N)
        b = TraceSet(rng.normal(size=(N, 200)) + 0.5, np.zeros(N))
        means.append(np.mean(np.abs(tvla_ttest(b, a).t)))
    slope = np.polyfit(np.log(grid), np.log(means), 1)[0]
    assert abs(slope - 0.5) < 0.05


def test_fixed_vs_random_detects_leak():
    rng = np.random.default_rng(7)
    fixed = generate_traces(P, "HD", 0.05, 1000, fixed_input=np.arange(256), rng=rng, window=WIN)
    rand = generate_traces(P, "HD", 0.05, 1000, rng=rng, window=WIN, noise_sigma=fixed.meta["noise_sigma"])
    rep = tvla_ttest(fixed, rand)
    assert rep.verdict == "LEAK" and rep.to_dict()["n_fixed"] == 1000


@pytest.mark.parametrize("snr", [0.05, 1.0])
def test_snr_recovery(snr):
    rng = np.random.default_rng(8)
    ts = generate_class_traces(P, "HW", snr, 100, 100, rng, window=slice(0, 64))
    est = estimate_snr(ts)
    assert abs(est.mean() / snr - 1) < 0.15


def test_snr_edge_cases():
    ts = TraceSet(np.array([[1.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 0.0]]), [0, 0, 1, 1])
    snr = estimate_snr(ts)
    assert snr[0] == 1e12 and snr[1] == 0.0
    with pytest.raises(ValueError):
        estimate_snr(TraceSet(np.zeros((3, 2)), [0, 0, 0]))


def test_leakage_models():
    p = toy(17, 4, 2)
    x = np.array([[1, 2, 3, 4]])
    hw = leakage_signal(x, p, "HW")
    hd = leakage_signal(x, p, "HD")
    assert hw.shape == hd.shape == (1, 8)
    with pytest.raises(ValueError):
        leakage_signal(x, p, "XX")


def test_generator_validation():
    with pytest.raises(ValueError):
        generate_traces(P, "HD", -1.0, 10)
    with pytest.raises(ValueError):
        generate_traces(P, "HD", 1.0, 0)
    with pytest.raises(ValueError):
        tvla_ttest(_noise(np.random.default_rng(0), 5, 3), _noise(np.random.default_rng(0), 5, 4))


def test_save_traces(tmp_path):
    ts = TraceSet(np.arange(6.0).reshape(3, 2), [0, 1, 1], {"model": "HW"})
    save_traces(ts, str(tmp_path / "t"), seed=3)
    assert np.array_equal(np.fromfile(tmp_path / "t.bin", "<f8").reshape(3, 2), ts.traces)
    meta = json.loads((tmp_path / "t.json").read_text())
    assert meta["N"] == 3 and meta["seed"] == 3
