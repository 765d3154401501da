"""Loopy sum-product belief propagation over the INTT factor graph."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .bp_kernels import bp_round
from .field import LayeredTrace
from .graph import FactorGraph
from .observation import ObservationSet, entropy_bits, likelihood_matrix, mi_single_layer

__all__ = [
    "BPState",
    "TrialResult",
    "DEFAULT_PRUNE_TOL",
    "init_state",
    "bp_iterate",
    "beliefs",
    "level0_entropy",
    "map_estimate",
    "run_bp",
    "write_trajectory_csv",
]

# Entries below this fraction of a message's peak are skipped in the pair
# sums; 0 selects the exact path.
DEFAULT_PRUNE_TOL = 1e-12
EARLY_STOP_TOL = 1e-8


@dataclass
class BPState:
    graph: FactorGraph
    local: np.ndarray  # (K+1, n, q) normalised local evidence
    up: np.ndarray  # message from the layer-l factor into (l, p)
    down: np.ndarray  # message from the layer-(l+1) factor into (l, p)
    iteration: int = 0
    log_fallbacks: int = 0
    _scratch: tuple = field(default=None, repr=False)

    @property
    def q(self) -> int:
        return self.graph.params.q

    def beliefs(self) -> np.ndarray:
        b = self.local * self.up * self.down
        b /= b.sum(axis=-1, keepdims=True)
        return b


def init_state(graph: FactorGraph, obs: ObservationSet | None) -> BPState:
    p = graph.params
    shape = (p.K + 1, p.n, p.q)
    local = np.full(shape, 1.0 / p.q)
    if obs is not None:
        if obs.channel.q != p.q:
            raise ValueError("observation modulus does not match the graph")
        for layer, y in obs.layers.items():
            if layer == 0:
                raise ValueError("level 0 receives no observations")
            if not 1 <= layer <= p.K:
                raise ValueError(f"layer {layer} outside 1..{p.K}")
            y = np.asarray(y, dtype=np.float64)
            if y.shape != (p.n,):
                raise ValueError(f"layer {layer} needs {p.n} observations")
            local[layer] = likelihood_matrix(y, obs.channel)
    up = np.full(shape, 1.0 / p.q)
    down = np.full(shape, 1.0 / p.q)
    return BPState(graph, local, up, down)


def bp_iterate(state: BPState, damping: float = 0.5, prune_tol: float = DEFAULT_PRUNE_TOL) -> BPState:
    """One synchronous round; updates ``state`` in place and returns it."""
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must lie in [0, 1), got {damping}")
    if prune_tol < 0:
        raise ValueError("prune_tol must be non-negative")
    g = state.graph
    q = state.q
    if state._scratch is None:
        zinv = np.array([pow(int(z), -1, q) for z in g.zeta], dtype=np.int64)
        state._scratch = (zinv, state.up.copy(), state.down.copy())
    zinv, new_up, new_down = state._scratch
    fallbacks = np.zeros(1, dtype=np.int64)
    bp_round(
        g.layer, g.top, g.bottom, g.zeta, zinv, pow(2, -1, q),
        state.local, state.up, state.down, new_up, new_down,
        float(damping), float(prune_tol), fallbacks,
    )
    # swap buffers; untouched rows (up[0], down[K]) stay uniform in both
    state._scratch = (zinv, state.up, state.down)
    state.up, state.down = new_up, new_down
    state.iteration += 1
    state.log_fallbacks += int(fallbacks[0])
    return state


def beliefs(state: BPState) -> np.ndarray:
    return state.beliefs()


def level0_entropy(state: BPState) -> float:
    b0 = state.local[0] * state.up[0] * state.down[0]
    b0 /= b0.sum(axis=-1, keepdims=True)
    return float(entropy_bits(b0).mean())


def map_estimate(state_or_beliefs) -> np.ndarray:
    """Level-0 argmax; ``np.argmax`` already resolves ties to the smallest residue."""
    if isinstance(state_or_beliefs, BPState):
        b = state_or_beliefs.beliefs()[0]
    else:
        b = np.asarray(state_or_beliefs)
    return np.argmax(b, axis=-1).astype(np.int64)


@dataclass
class TrialResult:
    bsr: float
    full_key: bool
    entropy_trajectory: list
    mi_bp: float
    bp_gain: float
    iterations_run: int
    seed: int | None
    early_stopped: bool = False
    log_fallbacks: int = 0
    key_rank: dict | None = None
    level0_beliefs: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "bsr": self.bsr,
            "full_key": self.full_key,
            "entropy_trajectory": list(self.entropy_trajectory),
            "mi_bp": self.mi_bp,
            "bp_gain": self.bp_gain,
            "iterations_run": self.iterations_run,
            "seed": self.seed,
            "early_stopped": self.early_stopped,
            "log_fallbacks": self.log_fallbacks,
            "key_rank": self.key_rank,
        }


def run_bp(
    graph: FactorGraph,
    obs: ObservationSet,
    iterations: int,
    damping: float,
    truth: LayeredTrace | np.ndarray,
    rng_seed: int | None = None,
    *,
    early_stop: bool = True,
    prune_tol: float = DEFAULT_PRUNE_TOL,
    mi_one_layer: float | None = None,
    keep_beliefs: bool = False,
) -> TrialResult:
    """Run BP and score level-0 MAP recovery against ``truth``.

    The trajectory holds the initial entropy followed by one entry per
    completed iteration.  ``rng_seed`` is recorded only: BP itself is
    deterministic.
    """
    q = graph.params.q
    secret = truth.secret if isinstance(truth, LayeredTrace) else np.asarray(truth)
    state = init_state(graph, obs)
    traj = [level0_entropy(state)]
    prev = state.beliefs()
    stopped = False
    for _ in range(iterations):
        bp_iterate(state, damping, prune_tol)
        traj.append(level0_entropy(state))
        if early_stop:
            cur = state.beliefs()
            if np.max(np.abs(cur - prev)) < EARLY_STOP_TOL:
                stopped = True
                break
            prev = cur
    b0 = state.beliefs()[0]
    est = map_estimate(b0)
    bsr = float(np.mean(est == secret))
    log_q = math.log2(q)
    mi_bp = min(max(log_q - traj[-1], 0.0), log_q)
    if mi_one_layer is None:
        mi_one_layer = mi_single_layer(q, obs.channel.snr_n) if obs.channel.sigma > 0 else log_q
    return TrialResult(
        bsr=bsr,
        full_key=bool(bsr == 1.0),
        entropy_trajectory=traj,
        mi_bp=mi_bp,
        bp_gain=float(mi_bp / mi_one_layer) if mi_one_layer > 0 else math.inf,
        iterations_run=state.iteration,
        seed=rng_seed,
        early_stopped=stopped,
        log_fallbacks=state.log_fallbacks,
        level0_beliefs=b0 if keep_beliefs else None,
    )


def write_trajectory_csv(result: TrialResult, path, q: int) -> None:
    """Rows of (iteration, mean level-0 entropy, MI) in bits."""
    log_q = math.log2(q)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "entropy_bits", "mi_bits"])
        for it, h in enumerate(result.entropy_trajectory):
            w.writerow([it, f"{h:.6f}", f"{log_q - h:.6f}"])
