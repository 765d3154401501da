import itertools
import json

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sasca_lab.field import mlkem, toy
from sasca_lab.graph import (
    ObservationTopology,
    build_graph,
    exact_treewidth,
    gap_masking_complete,
    max_gap,
    moral_graph,
    nc_profile,
    treewidth_upper_bound,
    validate_graph,
)


@pytest.fixture(scope="module")
def mlkem_graph():
    return build_graph(mlkem())


def test_counts(mlkem_graph):
    assert mlkem_graph.n_variables == 2048
    assert mlkem_graph.n_factors == 896
    g8 = build_graph(toy(7681, 256, 8))
    assert (g8.n_variables, g8.n_factors) == (2304, 1024)


def test_every_variable_degree(mlkem_graph):
    deg = np.bincount(mlkem_graph.incidence().ravel(), minlength=2048).reshape(8, 256)
    assert np.all(deg[0] == 1) and np.all(deg[-1] == 1)
    assert np.all(deg[1:-1] == 2)


def test_validation_all_satisfied(mlkem_graph):
    rng = np.random.default_rng(0)
    assert validate_graph(mlkem_graph, rng.integers(0, 3329, 256)) == (896, 896)


def test_perturbed_twiddle_breaks_one_constraint(mlkem_graph):
    rng = np.random.default_rng(1)
    p = rng.integers(0, 3329, 256)
    # factor 0 sees v - u != 0, so a wrong twiddle must show up there
    bad = mlkem_graph.with_zeta(0, (int(mlkem_graph.zeta[0]) + 1) % 3329)
    p[bad.top[0]], p[bad.bottom[0]] = 0, 1
    assert validate_graph(bad, p) == (895, 896)


def test_json_deterministic():
    g = build_graph(toy(17, 4, 2))
    a, b = g.to_json(), build_graph(toy(17, 4, 2)).to_json()
    assert a == b
    doc = json.loads(a)
    assert doc["n_factors"] == 4 and len(doc["variables"]) == 12


def test_level_zero_unobservable():
    with pytest.raises(ValueError):
        ObservationTopology([0, 1])
    with pytest.raises(ValueError):
        ObservationTopology([8], K=7)


def test_max_gap_examples():
    assert max_gap([1, 3, 5, 7]) == 1
    assert max_gap([1, 2, 3, 4]) == 0
    assert max_gap([1, 7]) == 5
    assert max_gap([4]) == 0
    with pytest.raises(ValueError):
        max_gap([])


def test_nc_profiles():
    assert nc_profile([1, 3, 5, 7], 7).all_pass
    rep = nc_profile([1, 2, 3, 4], 7)
    assert rep.violated == ["nc2"]
    rep = nc_profile([2, 3, 4, 5, 6, 7], 7)
    assert rep.violated == ["nc1"]
    assert not nc_profile([], 7).all_pass


@given(st.sets(st.integers(1, 7), min_size=1))
def test_nc_profile_matches_definition(layers):
    rep = nc_profile(layers, 7)
    s = sorted(layers)
    gaps = [b - a - 1 for a, b in zip(s, s[1:])]
    assert rep.nc1 == (1 in layers)
    assert rep.nc2 == (7 in layers)
    assert rep.nc3 == (max(gaps, default=0) <= 2)
    assert rep.nc4 == (len(layers) >= 4)


def test_gap_masking_complete():
    res = gap_masking_complete([3, 4, 5], 7)
    assert res["n_subsets"] == 15
    assert res["complete"]
    assert res["unmasked"] == [1, 2, 6, 7]
    with pytest.raises(ValueError):
        gap_masking_complete([2, 4, 5], 7)


def _brute_treewidth(g):
    nodes = list(g.nodes)
    best = len(nodes)
    for order in itertools.permutations(nodes):
        h = g.copy()
        width = 0
        for v in order:
            nb = list(h.neighbors(v))
            width = max(width, len(nb))
            h.add_edges_from(itertools.combinations(nb, 2))
            h.remove_node(v)
        best = min(best, width)
    return best


def test_exact_treewidth_matches_permutation_search():
    for g in (nx.cycle_graph(6), nx.complete_graph(5), nx.petersen_graph().subgraph(range(7)).copy()):
        assert exact_treewidth(g) == _brute_treewidth(g)


def test_treewidth_small_instances():
    single = build_graph(toy(17, 2, 1))
    assert exact_treewidth(moral_graph(single)) == 3
    g = build_graph(toy(17, 4, 2))
    assert exact_treewidth(moral_graph(g)) == 3
    assert treewidth_upper_bound(g) >= 3


def test_mlkem_treewidth_bound_large(mlkem_graph):
    assert treewidth_upper_bound(mlkem_graph) > 30
