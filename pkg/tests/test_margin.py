import math

import pytest

from sasca_lab.margin import (BASELINE_BITS, LatticeGateTable, MiBudgetSpec, ScenarioSpec, composite_table,
                              lattice_gate, mi_budget, mixed_estimate, scenario_margin, scenario_row,
                              sensitivity_rows, waterfall)


@pytest.mark.parametrize("name,alg,bits", [("A", "ml-dsa", 27), ("B", "ml-dsa", 60.8), ("C", "ml-dsa", 88),
                                           ("A", "ml-kem", 16), ("B", "ml-kem", 62.6), ("C", "ml-kem", 132)])
def test_scenarios(name, alg, bits):
    assert abs(scenario_row(name, alg)["bits"] - bits) <= 0.1


def test_rounding_labels():
    assert scenario_row("B", "ml-dsa")["rounded"] == 61
    assert scenario_row("b", "ML-KEM")["rounded"] == 63
    m = mixed_estimate()
    assert abs(m["bits"] - 27.7) <= 0.1 and m["rounded"] == 28
    with pytest.raises(KeyError):
        scenario_row("D", "ml-dsa")


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioSpec("X", 1.0, rsi_overhead_mode="bogus")
    assert scenario_margin(ScenarioSpec("X", 10.0)) == 10.0


def test_mi_budget_default():
    r = mi_budget()
    assert abs(r["mi_per_trace_bits"] - 0.023198) <= 1e-5
    assert r["traces_full"] == 992
    assert r["traces_full"] - r["traces_5pct"] == 3 and r["traces_full"] - r["traces_2pct"] == 1


def test_mi_budget_zero_snr():
    r = mi_budget(MiBudgetSpec(group_snrs={"g": 0.0}))
    assert r["traces_full"] == math.inf


def test_composite_tables():
    c = composite_table("conservative")
    assert (c["traces"], c["shuffle_runs"], c["enumeration_bits"], c["gap_bits"]) == (992, 512, 9.0, 37)
    m = composite_table("moderate")
    assert abs(m["enumeration_bits"] - 5.6) <= 0.05
    assert [r["traces"] for r in sensitivity_rows()] == [992, 914, 824]
    with pytest.raises(ValueError):
        composite_table("aggressive")


def test_waterfall_monotone():
    steps = waterfall()
    assert steps[0]["bits_after"] == BASELINE_BITS
    assert [s["bits_after"] for s in steps] == [46.0, 23.0, 9.0]
    with pytest.raises(ValueError):
        waterfall((("bad", 50.0),))


def test_lattice_gate_knots():
    for e, s in [(0, 1.0), (0.01, 0.47), (0.02, 0.34), (0.05, 0.03), (0.10, 0.0)]:
        assert lattice_gate(e) == s
    assert 0.34 < lattice_gate(0.015) < 0.47
    assert lattice_gate(0.5) == 0.0
    with pytest.raises(ValueError):
        lattice_gate(-0.1)
    with pytest.raises(ValueError):
        LatticeGateTable((0.0, 0.0), (1.0, 0.5))
