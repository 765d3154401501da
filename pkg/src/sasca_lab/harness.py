"""Seeded trial orchestration: sweeps, ablations, no-L1 campaigns and
convergence trajectories.

Every trial draws from ``numpy.random.Generator(PCG64(seed))`` with
``seed = base_seed + 1000 * trial_index + point_index``.  The stream is
consumed in a fixed order: the secret (``integers(0, q, n)``), then one
``normal`` block of ``n`` draws per observed layer in ascending layer order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from .bp import DEFAULT_PRUNE_TOL, TrialResult, run_bp
from .field import FieldParams, intt_layers, mlkem
from .graph import ObservationTopology, build_graph, max_gap, nc_profile
from .keyrank import key_rank
from .observation import ObservationSet, channel_from_snr_n, genie_bound, mi_single_layer
from .stats import clopper_pearson_upper, wilson_ci

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "trial_seed",
    "run_trial",
    "sweep",
    "ablate",
    "no_l1_campaign",
    "trajectory_experiment",
    "trajectory_shape",
    "genie_summary",
    "NO_L1_VARIANTS",
    "DESK_GRID",
    "FULL_GRID",
]

DESK_GRID = (500.0, 3000.0, 10000.0)
FULL_GRID = (100.0, 200.0, 500.0, 1000.0, 2000.0, 3000.0, 5000.0, 10000.0)


@dataclass(frozen=True)
class ExperimentConfig:
    q: int = 3329
    n: int = 256
    K: int = 7
    gamma: int = 17
    twiddle_mode: str = "negacyclic"
    observed_layers: tuple = (1, 2, 3, 4, 5, 6, 7)
    snr_grid: tuple = DESK_GRID
    trials: int = 10
    iterations: int = 30
    damping: float = 0.5
    base_seed: int = 42
    early_stop: bool = True
    prune_tol: float = DEFAULT_PRUNE_TOL
    key_rank_budget: int = 0  # 0 disables ranking of failed trials
    mi_samples: int = 100_000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if len(self.snr_grid) == 0:
            raise ValueError("snr grid is empty")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        object.__setattr__(self, "observed_layers", tuple(sorted(int(l) for l in self.observed_layers)))
        object.__setattr__(self, "snr_grid", tuple(float(s) for s in self.snr_grid))
        ObservationTopology(self.observed_layers, self.K)

    @property
    def params(self) -> FieldParams:
        return _params(self.q, self.n, self.K, self.gamma, self.twiddle_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observed_layers"] = list(self.observed_layers)
        d["snr_grid"] = list(self.snr_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for key in ("observed_layers", "snr_grid"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@lru_cache(maxsize=8)
def _params(q, n, K, gamma, mode) -> FieldParams:
    if (q, n, K, gamma, mode) == (3329, 256, 7, 17, "negacyclic"):
        return mlkem()
    return FieldParams(q, n, K, gamma, mode)


@lru_cache(maxsize=8)
def _graph(params: FieldParams):
    return build_graph(params)


def trial_seed(config: ExperimentConfig, trial_index: int, point_index: int) -> int:
    return config.base_seed + 1000 * trial_index + point_index


def run_trial(config: ExperimentConfig, trial_index: int, point_index: int,
              snr_n: float | None = None, layers=None, mi_one_layer: float | None = None) -> TrialResult:
    """Secret -> INTT trace -> observations -> BP, all from one seeded stream."""
    params = config.params
    snr = config.snr_grid[point_index] if snr_n is None else float(snr_n)
    layers = config.observed_layers if layers is None else tuple(sorted(layers))
    seed = trial_seed(config, trial_index, point_index)
    rng = np.random.default_rng(seed)
    secret = rng.integers(0, params.q, size=params.n)
    trace = intt_layers(secret, params)
    channel = channel_from_snr_n(params.q, snr)
    obs = ObservationSet.from_trace(trace.levels, layers, channel, rng)
    if mi_one_layer is None:
        mi_one_layer = _mi1(params.q, snr, config.mi_samples)
    result = run_bp(
        _graph(params), obs, config.iterations, config.damping, trace, seed,
        early_stop=config.early_stop, prune_tol=config.prune_tol,
        mi_one_layer=mi_one_layer, keep_beliefs=config.key_rank_budget > 0,
    )
    if config.key_rank_budget > 0 and not result.full_key:
        result.key_rank = key_rank(result.level0_beliefs, secret, config.key_rank_budget).to_dict()
    result.level0_beliefs = None
    return result


def _mi1(q: int, snr: float, samples: int) -> float:
    if math.isinf(snr):
        return math.log2(q)
    return mi_single_layer(q, snr, samples)


def _run_many(config, jobs_spec, jobs: int) -> list[TrialResult]:
    """Run (trial, point, snr, layers, mi1) tuples, in parallel if requested."""
    if jobs <= 1 or len(jobs_spec) <= 1:
        return [run_trial(config, *spec) for spec in jobs_spec]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_trial, config, *spec) for spec in jobs_spec]
        return [f.result() for f in futures]


@dataclass
class SweepRow:
    snr_n: float
    n_trials: int
    full_key_count: int
    full_key_rate: float
    wilson_ci: tuple
    mean_entropy: float
    std_entropy: float
    mi_bp: float
    mi_1layer: float
    bp_gain: float
    genie_bits: float
    trials: list = field(default_factory=list)

    def __post_init__(self):
        lo, hi = self.wilson_ci
        if not (0 <= lo <= self.full_key_rate <= hi <= 1):
            raise AssertionError("Wilson interval must contain the point estimate")

    def to_dict(self, with_trials: bool = True) -> dict:
        d = asdict(self)
        d["wilson_ci"] = list(self.wilson_ci)
        if not with_trials:
            d.pop("trials")
        return d


CSV_COLUMNS = ["snr_n", "n_trials", "full_key_count", "full_key_rate", "wilson_lo", "wilson_hi",
               "mean_entropy", "std_entropy", "mi_bp", "mi_1layer", "bp_gain", "genie_bits"]


def _row(snr: float, results: list[TrialResult], mi1: float, q: int, n_layers: int) -> SweepRow:
    fk = sum(r.full_key for r in results)
    ent = np.array([r.entropy_trajectory[-1] for r in results])
    mi = np.array([r.mi_bp for r in results])
    genie = min(math.log2(q), n_layers * mi1) if n_layers else 0.0
    return SweepRow(
        snr_n=snr,
        n_trials=len(results),
        full_key_count=int(fk),
        full_key_rate=fk / len(results),
        wilson_ci=wilson_ci(int(fk), len(results)),
        mean_entropy=float(ent.mean()),
        std_entropy=float(ent.std(ddof=1)) if len(ent) > 1 else 0.0,
        mi_bp=float(mi.mean()),
        mi_1layer=mi1,
        bp_gain=float(mi.mean() / mi1) if mi1 > 0 else math.inf,
        genie_bits=genie,
        trials=[r.to_dict() for r in results],
    )


def sweep(config: ExperimentConfig, jobs: int = 1) -> list[SweepRow]:
    """One row per grid point, ordered by snr_n."""
    q = config.params.q
    mi1 = {s: _mi1(q, s, config.mi_samples) for s in config.snr_grid}
    specs = [(t, p, s, None, mi1[s]) for p, s in enumerate(config.snr_grid) for t in range(config.trials)]
    results = _run_many(config, specs, jobs)
    rows = []
    for p, s in enumerate(config.snr_grid):
        chunk = results[p * config.trials:(p + 1) * config.trials]
        rows.append(_row(s, chunk, mi1[s], q, len(config.observed_layers)))
    return sorted(rows, key=lambda r: r.snr_n)


def ablate(config: ExperimentConfig, subsets, snr_n: float | None = None, jobs: int = 1) -> list[dict]:
    """Full-key rate, MI and NC profile per observed-layer subset at one operating point.

    Seeds use the subset's position in ``subsets`` as the point index.
    """
    q, K = config.params.q, config.params.K
    snr = config.snr_grid[0] if snr_n is None else float(snr_n)
    mi1 = _mi1(q, snr, config.mi_samples)
    rows = []
    topologies = [ObservationTopology(s, K) for s in subsets]
    specs = [(t, p, snr, topo.sorted(), mi1)
             for p, topo in enumerate(topologies) if len(topo) for t in range(config.trials)]
    results = iter(_run_many(config, specs, jobs))
    for topo in topologies:
        rep = nc_profile(topo, K)
        if len(topo) == 0:
            rows.append({"layers": [], "label": "none", "n_trials": 0, "full_key_count": 0,
                         "full_key_rate": 0.0, "wilson_ci": [0.0, 1.0], "mi_bp": 0.0,
                         "max_gap": None, "nc": asdict(rep), "trials": []})
            continue
        chunk = [next(results) for _ in range(config.trials)]
        fk = sum(r.full_key for r in chunk)
        rows.append({
            "layers": topo.sorted(),
            "label": topo.label(),
            "snr_n": snr,
            "n_trials": len(chunk),
            "full_key_count": int(fk),
            "full_key_rate": fk / len(chunk),
            "wilson_ci": list(wilson_ci(int(fk), len(chunk))),
            "mi_bp": float(np.mean([r.mi_bp for r in chunk])),
            "mean_entropy": float(np.mean([r.entropy_trajectory[-1] for r in chunk])),
            "max_gap": max_gap(topo),
            "nc": asdict(rep),
            "trials": [r.to_dict() for r in chunk],
        })
    return rows


NO_L1_VARIANTS = ((2, 3, 4, 5, 6, 7), (2, 4, 6, 7), (3, 5, 7), (4, 5, 6, 7))


def no_l1_campaign(config: ExperimentConfig, variants=NO_L1_VARIANTS, snr_n: float = 50_000.0,
                   jobs: int = 1) -> dict:
    """Pooled full-key count over layer-1-free topologies with exact upper bound.

    Measured MI is reported as-is; nothing here assumes it is exactly zero.
    """
    for v in variants:
        if 1 in v:
            raise ValueError(f"variant {sorted(v)} observes layer 1")
    rows = ablate(config, variants, snr_n, jobs)
    total = sum(r["n_trials"] for r in rows)
    fk = sum(r["full_key_count"] for r in rows)
    return {
        "snr_n": snr_n,
        "variants": rows,
        "pooled_trials": total,
        "pooled_full_key": fk,
        "clopper_pearson_upper": clopper_pearson_upper(fk, total) if total else 1.0,
        "wilson_ci": list(wilson_ci(fk, total)) if total else [0.0, 1.0],
        "max_mi_bp": max((r["mi_bp"] for r in rows), default=0.0),
        "reference": {"full_key": 0, "trials": 160, "mi_bits": 0.0},
    }


def trajectory_experiment(config: ExperimentConfig, jobs: int = 1) -> list[dict]:
    """Per-iteration mean level-0 entropy and MI for each grid point (early stop off)."""
    cfg = replace(config, early_stop=False)
    q = cfg.params.q
    log_q = math.log2(q)
    mi1 = {s: _mi1(q, s, cfg.mi_samples) for s in cfg.snr_grid}
    specs = [(t, p, s, None, mi1[s]) for p, s in enumerate(cfg.snr_grid) for t in range(cfg.trials)]
    results = _run_many(cfg, specs, jobs)
    rows = []
    for p, s in enumerate(cfg.snr_grid):
        chunk = results[p * cfg.trials:(p + 1) * cfg.trials]
        traj = np.mean([r.entropy_trajectory for r in chunk], axis=0)
        for it, h in enumerate(traj):
            rows.append({"snr_n": s, "iteration": it, "entropy_bits": float(h), "mi_bits": float(log_q - h)})
    return rows


def trajectory_shape(rows: list[dict], snr_n: float) -> dict:
    """Shape summary used by the two-phase checks."""
    pts = {r["iteration"]: r["mi_bits"] for r in rows if r["snr_n"] == snr_n}
    final = pts[max(pts)]
    return {
        "mi_1": pts.get(1),
        "mi_5": pts.get(5),
        "mi_10": pts.get(10),
        "mi_20": pts.get(20),
        "final": final,
        "fraction_at_10": pts.get(10, 0.0) / final if final > 0 else 0.0,
        "monotone_1_5_10": pts.get(1, 0) <= pts.get(5, 0) <= pts.get(10, 0),
    }


def genie_summary(config: ExperimentConfig) -> list[dict]:
    q = config.params.q
    return [{"snr_n": s, "mi_1layer": _mi1(q, s, config.mi_samples),
             "genie_bits": genie_bound(q, s, len(config.observed_layers), config.mi_samples)}
            for s in config.snr_grid]
