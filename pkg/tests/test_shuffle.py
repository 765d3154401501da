import math

import numpy as np
import pytest

from sasca_lab.shuffle import (OverheadModel, ShuffleSpec, cpa_overhead, enumeration_cost, max_of_competitors_success,
                               ordering_entropy, overhead_curve, position_identification_prob, rp_entropy,
                               rsi_orderings)


def test_rsi_orderings_distinct_permutations():
    o = rsi_orderings()
    assert o.shape == (64, 64)
    assert len({tuple(r) for r in o}) == 64
    for r in o:
        assert sorted(r) == list(range(64))
    assert np.array_equal(o[0], np.arange(64))
    assert ordering_entropy() == 6.0


def test_rp_entropy():
    assert abs(rp_entropy(64) - 296) <= 0.5
    assert rp_entropy(1) == 0.0
    assert ordering_entropy(ShuffleSpec("known-position")) == 0.0


def test_enumeration_cost():
    assert enumeration_cost(64, 7) == {"runs": 448, "bits": math.log2(448)}
    assert enumeration_cost(64, 7, True) == {"runs": 512, "bits": 9.0}
    with pytest.raises(ValueError):
        enumeration_cost(0, 7)


def test_max_success_limits():
    assert max_of_competitors_success(0.0, 2) == pytest.approx(0.5, abs=1e-9)
    assert max_of_competitors_success(0.0, 10) == pytest.approx(0.1, abs=1e-6)
    assert max_of_competitors_success(30.0, 1000) > 0.999


def test_position_probability():
    assert position_identification_prob(64, 0.0) == pytest.approx(1 / 64, rel=1e-6)
    assert position_identification_prob(1, 0.0) == 1.0
    assert position_identification_prob(64, 2.0) > 0.999


def test_rp_overhead_near_s_squared():
    r = cpa_overhead(ShuffleSpec("full-RP"))
    assert abs(r - 4096) <= 0.05 * 4096
    assert cpa_overhead(ShuffleSpec("known-position")) == 1.0


def test_rsi_equals_rp_at_zero_bias():
    rsi = cpa_overhead(ShuffleSpec("RSI"), OverheadModel(bias_ratio=0.0))
    rp = cpa_overhead(ShuffleSpec("full-RP"))
    assert rsi == pytest.approx(rp, rel=1e-6)


def test_rsi_monotone_in_bias():
    rows = overhead_curve([0.0, 0.1, 0.2, 0.3, 0.5])
    vals = [r["RSI"] for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert all(r["full-RP"] == rows[0]["full-RP"] for r in rows)


@pytest.mark.parametrize("kw", [{"rho": 0.0}, {"rho": 1.0}, {"bias_ratio": -1}, {"target": 1.0}, {"hypotheses": 1}])
def test_model_validation(kw):
    with pytest.raises(ValueError):
        OverheadModel(**kw)


def test_spec_validation():
    with pytest.raises(ValueError):
        ShuffleSpec("other")
    with pytest.raises(ValueError):
        ShuffleSpec("RSI", S=60)
    with pytest.raises(ValueError):
        rsi_orderings(ShuffleSpec("full-RP"))
