"""Synthetic INTT power traces, fixed-vs-random Welch TVLA and SNR estimation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ttest_ind

from .field import FieldParams, intt_levels

__all__ = [
    "TVLA_THRESHOLD",
    "SNR_CAP",
    "TraceSet",
    "TvlaReport",
    "leakage_signal",
    "generate_traces",
    "generate_class_traces",
    "tvla_ttest",
    "estimate_snr",
    "save_traces",
]

TVLA_THRESHOLD = 4.5
SNR_CAP = 1e12
PILOT_TRACES = 4096

_POPCOUNT = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.float64)


def _hw(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return _POPCOUNT[x & 0xFFFF] + _POPCOUNT[(x >> 16) & 0xFFFF]


@dataclass
class TraceSet:
    traces: np.ndarray  # (N, T)
    labels: np.ndarray  # (N,) class id per trace
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.traces = np.atleast_2d(np.asarray(self.traces, dtype=np.float64))
        self.labels = np.asarray(self.labels)
        if len(self.labels) != len(self.traces):
            raise ValueError("one label per trace required")

    @property
    def n_traces(self) -> int:
        return self.traces.shape[0]

    @property
    def n_samples(self) -> int:
        return self.traces.shape[1]


@dataclass(frozen=True)
class TvlaReport:
    t: np.ndarray
    max_abs_t: float
    n_fixed: int
    n_random: int
    threshold: float = TVLA_THRESHOLD

    @property
    def leak(self) -> bool:
        return self.max_abs_t > self.threshold

    @property
    def verdict(self) -> str:
        return "LEAK" if self.leak else "PASS"

    def to_dict(self) -> dict:
        return {
            "max_abs_t": self.max_abs_t,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "n_fixed": self.n_fixed,
            "n_random": self.n_random,
            "t": [float(v) for v in self.t],
        }


def leakage_signal(inputs: np.ndarray, params: FieldParams, model: str = "HD",
                   window: slice | None = None) -> np.ndarray:
    """Noise-free leakage (N, T) for a batch of INTT inputs (N, n).

    HW leaks the weight of every value on levels 1..K; HD leaks the
    distance between consecutive values written to the same slot.
    """
    levels = intt_levels(inputs, params)  # (N, K+1, n)
    if model == "HW":
        sig = _hw(levels[:, 1:, :])
    elif model == "HD":
        sig = _hw(levels[:, 1:, :] ^ levels[:, :-1, :])
    else:
        raise ValueError(f"unknown leakage model {model!r}")
    sig = sig.reshape(len(levels), -1)
    return sig[:, window] if window is not None else sig


def _noise_sigma(params, model, target_snr, window, rng) -> float:
    """Calibrate noise from a pilot batch of random inputs."""
    if target_snr == 0:
        return 1.0
    if np.isinf(target_snr):
        return 0.0
    pilot = rng.integers(0, params.q, size=(PILOT_TRACES, params.n))
    var = leakage_signal(pilot, params, model, window).var(axis=0)
    var = var[var > 0]
    if len(var) == 0:
        return 1.0
    return float(np.sqrt(var.mean() / target_snr))


def generate_traces(params: FieldParams, leak_model: str, target_snr: float, N: int,
                    fixed_input=None, rng: np.random.Generator | None = None,
                    window: slice | None = None, noise_sigma: float | None = None) -> TraceSet:
    """Draw N traces for a fixed input (if given) or fresh random inputs.

    ``target_snr = 0`` yields unit-variance pure noise.  The noise level
    is calibrated on a pilot batch unless ``noise_sigma`` is supplied, so
    fixed and random sets sharing a sigma stay comparable.
    """
    if target_snr < 0:
        raise ValueError("target_snr must be non-negative")
    if N < 1:
        raise ValueError("N must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    sigma = noise_sigma if noise_sigma is not None else _noise_sigma(params, leak_model, target_snr, window, rng)
    if fixed_input is not None:
        inputs = np.broadcast_to(np.asarray(fixed_input, dtype=np.int64) % params.q, (N, params.n))
        labels = np.zeros(N, dtype=np.int64)
    else:
        inputs = rng.integers(0, params.q, size=(N, params.n))
        labels = np.ones(N, dtype=np.int64)
    if target_snr == 0:
        T = len(range(params.K * params.n)[window or slice(None)])
        sig = np.zeros((N, T))
    else:
        sig = leakage_signal(inputs, params, leak_model, window)
    traces = sig + rng.normal(0.0, sigma, size=sig.shape) if sigma > 0 else sig
    meta = {"model": leak_model, "target_snr": float(target_snr), "noise_sigma": sigma,
            "fixed": fixed_input is not None}
    return TraceSet(traces, labels, meta)


def generate_class_traces(params: FieldParams, leak_model: str, target_snr: float, n_classes: int,
                          per_class: int, rng: np.random.Generator,
                          window: slice | None = None) -> TraceSet:
    """Traces for ``n_classes`` random inputs, ``per_class`` repeats each (for SNR estimation)."""
    if n_classes < 2 or per_class < 2:
        raise ValueError("need at least two classes with two traces each")
    sigma = _noise_sigma(params, leak_model, target_snr, window, rng)
    inputs = rng.integers(0, params.q, size=(n_classes, params.n))
    sig = leakage_signal(inputs, params, leak_model, window)
    if target_snr == 0:
        sig = np.zeros_like(sig)
    labels = np.repeat(np.arange(n_classes), per_class)
    traces = sig[labels]
    if sigma > 0:
        traces = traces + rng.normal(0.0, sigma, size=traces.shape)
    meta = {"model": leak_model, "target_snr": float(target_snr), "noise_sigma": sigma,
            "n_classes": n_classes}
    return TraceSet(traces, labels, meta)


def tvla_ttest(fixed: TraceSet, random: TraceSet, threshold: float = TVLA_THRESHOLD) -> TvlaReport:
    if fixed.n_samples != random.n_samples:
        raise ValueError("trace sets differ in length")
    if fixed.n_traces < 2 or random.n_traces < 2:
        raise ValueError("need at least two traces per class")
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ttest_ind(fixed.traces, random.traces, axis=0, equal_var=False).statistic
    # zero-variance samples with equal means carry no evidence
    t = np.nan_to_num(np.asarray(t, dtype=np.float64), nan=0.0)
    return TvlaReport(t, float(np.max(np.abs(t))), fixed.n_traces, random.n_traces, threshold)


def estimate_snr(traces: TraceSet, unbiased: bool = True) -> np.ndarray:
    """Per-sample var(class means) / mean(within-class variance).

    With ``unbiased`` the expected noise contribution to the variance of
    class means is subtracted (clipped at 0).  Noise-free samples with
    signal return ``SNR_CAP``.
    """
    classes, inv, counts = np.unique(traces.labels, return_inverse=True, return_counts=True)
    if len(classes) < 2 or np.any(counts < 2):
        raise ValueError("need at least two classes with two traces each")
    k = len(classes)
    X = traces.traces
    means = np.zeros((k, X.shape[1]))
    np.add.at(means, inv, X)
    means /= counts[:, None]
    resid = X - means[inv]
    within = np.zeros((k, X.shape[1]))
    np.add.at(within, inv, resid**2)
    within /= (counts - 1)[:, None]
    noise = within.mean(axis=0)
    signal = means.var(axis=0, ddof=1)
    if unbiased:
        signal = np.maximum(signal - (noise * np.mean(1.0 / counts)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(noise > 0, signal / np.where(noise > 0, noise, 1.0),
                       np.where(signal > 0, SNR_CAP, 0.0))
    return np.minimum(snr, SNR_CAP)


def save_traces(ts: TraceSet, path_prefix: str, seed: int | None = None) -> None:
    """Flat float64 binary plus a JSON sidecar."""
    ts.traces.astype("<f8").tofile(f"{path_prefix}.bin")
    sidecar = {"N": ts.n_traces, "T": ts.n_samples, "seed": seed, "dtype": "<f8", **ts.meta}
    with open(f"{path_prefix}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
