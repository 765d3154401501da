"""Security-margin arithmetic: MI trace budget, scenario margins, composite
table, waterfall and the lattice-gate lookup."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GROUP_SNRS",
    "REPORTED_MI_PER_TRACE",
    "MiBudgetSpec",
    "ScenarioSpec",
    "LatticeGateTable",
    "SCENARIOS",
    "mi_budget",
    "scenario_margin",
    "scenario_row",
    "mixed_estimate",
    "composite_table",
    "sensitivity_rows",
    "waterfall",
    "lattice_gate",
]

# aggregate SNR per unmasked register group (configuration constants)
GROUP_SNRS = {"group_a": 0.0027, "group_b": 0.0155, "group_c": 0.0033}
# rounded per-trace figure used by the reference composite rows
REPORTED_MI_PER_TRACE = 0.023198
BASELINE_BITS = 46.0


@dataclass(frozen=True)
class MiBudgetSpec:
    group_snrs: dict = field(default_factory=lambda: dict(GROUP_SNRS))
    per_coeff_halving: bool = True
    transitions_per_layer: int = 3
    coefficient_bits: float = 23.0
    # reference 5% / 2% thresholds sit this many traces below the full budget
    offset_5pct: int = 3
    offset_2pct: int = 1

    def __post_init__(self):
        if any(v < 0 for v in self.group_snrs.values()):
            raise ValueError("SNRs must be non-negative")
        if self.coefficient_bits <= 0:
            raise ValueError("coefficient_bits must be positive")


def mi_budget(spec: MiBudgetSpec = MiBudgetSpec()) -> dict:
    div = 2.0 if spec.per_coeff_halving else 1.0
    per_group = {g: 0.5 * math.log2(1.0 + s / div) for g, s in spec.group_snrs.items()}
    mi = sum(per_group.values()) * spec.transitions_per_layer
    if mi <= 0:
        return {"mi_per_group": per_group, "mi_per_trace_bits": 0.0, "traces_full": math.inf,
                "traces_5pct": math.inf, "traces_2pct": math.inf}
    full = math.ceil(spec.coefficient_bits / mi)
    return {
        "mi_per_group": per_group,
        "mi_per_trace_bits": mi,
        "traces_full": full,
        "traces_5pct": full - spec.offset_5pct,
        "traces_2pct": full - spec.offset_2pct,
    }


OVERHEAD_MODES = ("none", "per-layer-S2", "S^L", "fixed-factor")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    base_bits: float
    butterfly_count_factor: float = 1.0
    dof_divisor: float = 1.0
    rsi_overhead_mode: str = "none"
    S: int = 64
    unmasked_layers: int = 7
    fixed_factor: float = 1.0
    units: str = "enumeration"
    allowance: tuple = (0.0, 0.0)  # (below, above) narrative band around the point

    def __post_init__(self):
        if self.rsi_overhead_mode not in OVERHEAD_MODES:
            raise ValueError(f"unknown overhead mode {self.rsi_overhead_mode!r}")
        if self.S < 1 or self.dof_divisor <= 0 or self.butterfly_count_factor <= 0:
            raise ValueError("invalid scenario parameters")


def _overhead_bits(spec: ScenarioSpec) -> float:
    if spec.rsi_overhead_mode == "per-layer-S2":
        return math.log2(spec.unmasked_layers * spec.S**2)
    if spec.rsi_overhead_mode == "S^L":
        return spec.unmasked_layers * math.log2(spec.S)
    if spec.rsi_overhead_mode == "fixed-factor":
        return math.log2(spec.fixed_factor)
    return 0.0


def scenario_margin(spec: ScenarioSpec) -> float:
    return math.log2(spec.butterfly_count_factor) + spec.base_bits / spec.dof_divisor + _overhead_bits(spec)


SCENARIOS = {
    ("A", "ml-dsa"): ScenarioSpec("A", 23.0, butterfly_count_factor=16),
    ("B", "ml-dsa"): ScenarioSpec("B", 46.0, rsi_overhead_mode="per-layer-S2", unmasked_layers=7,
                                  units="hypothesis-trace operations", allowance=(2.0, 2.0)),
    ("C", "ml-dsa"): ScenarioSpec("C", 46.0, rsi_overhead_mode="S^L", unmasked_layers=7),
    ("A", "ml-kem"): ScenarioSpec("A", 48.0, butterfly_count_factor=16, dof_divisor=4.0),
    ("B", "ml-kem"): ScenarioSpec("B", 48.0, rsi_overhead_mode="per-layer-S2", unmasked_layers=6,
                                  units="hypothesis-trace operations"),
    ("C", "ml-kem"): ScenarioSpec("C", 96.0, rsi_overhead_mode="S^L", unmasked_layers=6),
}


def scenario_row(name: str, alg: str) -> dict:
    key = (name.upper(), alg.lower())
    if key not in SCENARIOS:
        raise KeyError(f"no scenario {name} for {alg}")
    spec = SCENARIOS[key]
    bits = scenario_margin(spec)
    return {
        "scenario": spec.name,
        "alg": alg.lower(),
        "bits": bits,
        "rounded": round(bits),
        "band": [bits - spec.allowance[0], bits + spec.allowance[1]],
        "units": spec.units,
    }


def mixed_estimate(butterflies: int = 16, coefficient_bits: float = 23.0, dof_divisor: float = 1.3,
                   orderings: int = 64, allowance: tuple = (28.0, 37.0)) -> dict:
    """Partial-DOF estimate between scenarios A and B; the band is configured."""
    if dof_divisor <= 0:
        raise ValueError("dof_divisor must be positive")
    bits = math.log2(butterflies) + coefficient_bits / dof_divisor + math.log2(orderings)
    return {"bits": bits, "rounded": round(bits), "band": list(allowance)}


def _traces_with_gain(coefficient_bits: float, bp_gain: float, mi_per_trace: float) -> int:
    return math.ceil((coefficient_bits - bp_gain) / mi_per_trace)


def composite_table(mode: str, mi_per_trace: float = REPORTED_MI_PER_TRACE,
                    coefficient_bits: float = 23.0, baseline_bits: float = BASELINE_BITS,
                    shuffle_runs: int | None = None, bp_gain: float | None = None) -> dict:
    """Conservative or moderate composite column.

    Traces are ``ceil((coefficient_bits - bp_gain) / mi_per_trace)``; the
    default per-trace MI is the rounded reference figure.
    """
    if mode == "conservative":
        runs = 512 if shuffle_runs is None else shuffle_runs
        gain = 0.0 if bp_gain is None else bp_gain
    elif mode == "moderate":
        runs = 48 if shuffle_runs is None else shuffle_runs
        gain = 3.9 if bp_gain is None else bp_gain
    else:
        raise ValueError(f"unknown composite mode {mode!r}")
    enum_bits = math.log2(runs)
    return {
        "mode": mode,
        "traces": _traces_with_gain(coefficient_bits, gain, mi_per_trace),
        "shuffle_runs": runs,
        "bp_gain": gain,
        "enumeration_bits": enum_bits,
        "gap_bits": round(baseline_bits - enum_bits),
    }


def sensitivity_rows(gains=(0.0, 1.8, 3.9), mi_per_trace: float = REPORTED_MI_PER_TRACE,
                     coefficient_bits: float = 23.0) -> list[dict]:
    return [{"bp_gain": g, "traces": _traces_with_gain(coefficient_bits, g, mi_per_trace)} for g in gains]


DEFAULT_CHAIN = (("GS DOF reduction", 23.0), ("RSI enumeration", 9.0))


def waterfall(chain=DEFAULT_CHAIN, start_bits: float = BASELINE_BITS) -> list[dict]:
    """Ordered steps ``(label, bits_before, bits_after)``; each step must decrease."""
    steps = [{"label": "baseline", "bits_before": start_bits, "bits_after": start_bits}]
    cur = start_bits
    for label, after in chain:
        if not after < cur:
            raise ValueError(f"step {label!r} does not reduce the margin")
        steps.append({"label": label, "bits_before": cur, "bits_after": float(after)})
        cur = after
    return steps


@dataclass(frozen=True)
class LatticeGateTable:
    error_rates: tuple = (0.0, 0.01, 0.02, 0.05, 0.10)
    success_rates: tuple = (1.00, 0.47, 0.34, 0.03, 0.00)

    def __post_init__(self):
        e = np.asarray(self.error_rates)
        s = np.asarray(self.success_rates)
        if len(e) != len(s) or len(e) < 2:
            raise ValueError("table needs matching knots")
        if np.any(np.diff(e) <= 0):
            raise ValueError("error rates must be strictly increasing")
        if np.any(np.diff(s) > 0):
            raise ValueError("success rates must be non-increasing")


def lattice_gate(error_rate: float, table: LatticeGateTable = LatticeGateTable()) -> float:
    if not 0.0 <= error_rate <= 1.0:
        raise ValueError("error_rate must lie in [0, 1]")
    return float(np.interp(error_rate, table.error_rates, table.success_rates))
