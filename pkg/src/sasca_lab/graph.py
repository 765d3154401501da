"""INTT factor graph, observation-topology metrics and treewidth bounds."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import networkx as nx
import numpy as np
from networkx.algorithms.approximation import treewidth_min_fill_in

from .field import FieldParams, butterfly_schedule, intt_layers

__all__ = [
    "FactorGraph",
    "ObservationTopology",
    "NCReport",
    "build_graph",
    "validate_graph",
    "max_gap",
    "nc_profile",
    "gap_masking_complete",
    "moral_graph",
    "treewidth_upper_bound",
    "exact_treewidth",
    "RSI_DOMAIN_SIZE",
]

# Shuffle-node augmentation is carried as metadata only.
RSI_DOMAIN_SIZE = 64


@dataclass(frozen=True)
class FactorGraph:
    """Bipartite GS-butterfly graph.

    Variable ``(level, pos)`` has id ``level * n + pos``.  Factor arrays are
    parallel: factor ``f`` lives in ``layer[f]`` and connects
    ``u_in, v_in`` on level ``layer - 1`` to ``u_out, v_out`` on ``layer``.
    """

    params: FieldParams
    layer: np.ndarray
    top: np.ndarray
    bottom: np.ndarray
    zeta: np.ndarray
    shuffle_domain: int = RSI_DOMAIN_SIZE

    @property
    def n_variables(self) -> int:
        return self.params.n * (self.params.K + 1)

    @property
    def n_factors(self) -> int:
        return len(self.layer)

    def var_id(self, level, pos):
        return np.asarray(level) * self.params.n + np.asarray(pos)

    @property
    def u_in(self):
        return self.var_id(self.layer - 1, self.top)

    @property
    def v_in(self):
        return self.var_id(self.layer - 1, self.bottom)

    @property
    def u_out(self):
        return self.var_id(self.layer, self.top)

    @property
    def v_out(self):
        return self.var_id(self.layer, self.bottom)

    def incidence(self) -> np.ndarray:
        """(F, 4) variable ids in (u_in, v_in, u_out, v_out) order."""
        return np.stack([self.u_in, self.v_in, self.u_out, self.v_out], axis=1)

    def subgraph(self, factor_idx) -> "FactorGraph":
        idx = np.asarray(factor_idx, dtype=np.int64)
        return FactorGraph(
            self.params, self.layer[idx], self.top[idx], self.bottom[idx], self.zeta[idx],
            self.shuffle_domain,
        )

    def with_zeta(self, f: int, zeta: int) -> "FactorGraph":
        z = self.zeta.copy()
        z[f] = zeta
        return FactorGraph(self.params, self.layer, self.top, self.bottom, z, self.shuffle_domain)

    def to_json(self) -> str:
        doc = {
            "params": self.params.describe(),
            "n_variables": self.n_variables,
            "n_factors": self.n_factors,
            "variables": [[lvl, pos] for lvl in range(self.params.K + 1) for pos in range(self.params.n)],
            "factors": [
                {
                    "layer": int(l),
                    "zeta": int(z),
                    "u_in": int(a),
                    "v_in": int(b),
                    "u_out": int(c),
                    "v_out": int(d),
                }
                for l, z, (a, b, c, d) in zip(self.layer, self.zeta, self.incidence())
            ],
            "twiddles": [int(z) for z in self.params.zetas],
            "shuffle_domain_per_layer": self.shuffle_domain,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def build_graph(params: FieldParams) -> FactorGraph:
    sched = butterfly_schedule(params)
    return FactorGraph(
        params,
        np.array([b.layer for b in sched], dtype=np.int64),
        np.array([b.top for b in sched], dtype=np.int64),
        np.array([b.bottom for b in sched], dtype=np.int64),
        np.array([b.zeta for b in sched], dtype=np.int64),
    )


def validate_graph(graph: FactorGraph, poly) -> tuple[int, int]:
    """Count butterfly constraints satisfied by the INTT trace of ``poly``."""
    q = graph.params.q
    levels = intt_layers(poly, graph.params).levels
    u = levels[graph.layer - 1, graph.top]
    v = levels[graph.layer - 1, graph.bottom]
    uo = levels[graph.layer, graph.top]
    vo = levels[graph.layer, graph.bottom]
    ok = (uo == (u + v) % q) & (vo == (graph.zeta * (v - u)) % q)
    return int(ok.sum()), graph.n_factors


@dataclass(frozen=True)
class ObservationTopology:
    observed_layers: frozenset

    def __init__(self, layers, K: int | None = None):
        layers = frozenset(int(l) for l in layers)
        if any(l < 1 for l in layers):
            raise ValueError("level 0 is never observable")
        if K is not None and any(l > K for l in layers):
            raise ValueError(f"layer index above K={K}")
        object.__setattr__(self, "observed_layers", layers)

    def sorted(self) -> list[int]:
        return sorted(self.observed_layers)

    def __len__(self):
        return len(self.observed_layers)

    def label(self) -> str:
        return "+".join(f"L{l}" for l in self.sorted()) or "none"


@dataclass(frozen=True)
class NCReport:
    nc1: bool
    nc2: bool
    nc3: bool
    nc4: bool
    max_gap: int | None

    @property
    def all_pass(self) -> bool:
        return self.nc1 and self.nc2 and self.nc3 and self.nc4

    @property
    def violated(self) -> list[str]:
        return [name for name in ("nc1", "nc2", "nc3", "nc4") if not getattr(self, name)]


def _as_topology(t) -> ObservationTopology:
    return t if isinstance(t, ObservationTopology) else ObservationTopology(t)


def max_gap(topology) -> int:
    layers = _as_topology(topology).sorted()
    if not layers:
        raise ValueError("max_gap of an empty observation set is undefined")
    return max((b - a - 1 for a, b in zip(layers, layers[1:])), default=0)


def nc_profile(topology, K: int) -> NCReport:
    t = _as_topology(topology)
    if len(t) == 0:
        return NCReport(False, False, False, False, None)
    gap = max_gap(t)
    return NCReport(
        nc1=1 in t.observed_layers,
        nc2=K in t.observed_layers,
        nc3=gap <= 2,
        nc4=len(t) >= 4,
        max_gap=gap,
    )


def gap_masking_complete(masked, K: int) -> dict:
    """Check that every attacker subset of the unmasked layers violates an NC."""
    masked = sorted(int(m) for m in masked)
    if len(masked) != 3 or masked != list(range(masked[0], masked[0] + 3)):
        raise ValueError(f"mask {masked} is not three consecutive layers")
    if not 2 <= masked[0] <= K - 3:
        raise ValueError(f"mask must start in [2, {K - 3}]")
    unmasked = [l for l in range(1, K + 1) if l not in masked]
    rows = []
    for r in range(1, len(unmasked) + 1):
        for subset in itertools.combinations(unmasked, r):
            rep = nc_profile(subset, K)
            rows.append({"layers": list(subset), "report": rep, "violates": not rep.all_pass})
    return {
        "masked": masked,
        "unmasked": unmasked,
        "subsets": rows,
        "n_subsets": len(rows),
        "min_forced_gap": (masked[-1] + 1) - (masked[0] - 1) - 1,
        "complete": all(r["violates"] for r in rows),
    }


def moral_graph(graph: FactorGraph) -> nx.Graph:
    """Variable-only graph with each factor's four variables as a clique."""
    g = nx.Graph()
    g.add_nodes_from(range(graph.n_variables))
    for quad in graph.incidence():
        g.add_edges_from(itertools.combinations(quad.tolist(), 2))
    return g


def treewidth_upper_bound(graph: FactorGraph) -> int:
    width, _ = treewidth_min_fill_in(moral_graph(graph))
    return int(width)


def exact_treewidth(g: nx.Graph, max_nodes: int = 20) -> int:
    """Exact treewidth by dynamic programming over vertex subsets.

    Equivalent to minimising over all elimination orders; exponential, so
    only for tiny graphs.
    """
    nodes = [v for v in g.nodes if g.degree(v) > 0]
    if len(nodes) > max_nodes:
        raise ValueError(f"{len(nodes)} nodes is too many for exhaustive search")
    if not nodes:
        return 0
    index = {v: i for i, v in enumerate(nodes)}
    adj = [0] * len(nodes)
    for a, b in g.edges:
        if a in index and b in index:
            adj[index[a]] |= 1 << index[b]
            adj[index[b]] |= 1 << index[a]
    full = (1 << len(nodes)) - 1

    def q_size(eliminated: int, v: int) -> int:
        # vertices outside eliminated∪{v} reachable from v through eliminated
        seen = 1 << v
        frontier = 1 << v
        reach = 0
        while frontier:
            i = (frontier & -frontier).bit_length() - 1
            frontier &= frontier - 1
            nb = adj[i] & ~seen
            seen |= nb
            inside = nb & eliminated
            reach |= nb & ~eliminated
            frontier |= inside
        return bin(reach).count("1")

    best = {0: -1}
    for size in range(1, len(nodes) + 1):
        for combo in itertools.combinations(range(len(nodes)), size):
            s = 0
            for i in combo:
                s |= 1 << i
            val = len(nodes)
            for v in combo:
                rest = s & ~(1 << v)
                val = min(val, max(best[rest], q_size(rest, v)))
            best[s] = val
    return best[full]
