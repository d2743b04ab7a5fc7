import numpy as np
import pytest

from mcmpart import GeneratorConfig, generate_synthetic
from mcmpart.errors import InvalidConfigError
from mcmpart.generate import FAMILIES
from mcmpart.graph import graph_to_json


def test_chain_family_is_a_path():
    g = generate_synthetic(GeneratorConfig("chain", 5, seed=1))
    assert g.num_nodes == 5
    assert sorted((e.src, e.dst) for e in g.edges) == [(0, 1), (1, 2), (2, 3), (3, 4)]


def test_layered_edges_cross_adjacent_layers_only():
    g = generate_synthetic(GeneratorConfig("layered", 30, seed=7))
    depth = g.node_depths()
    assert g.num_nodes == 30
    for e in g.edges:
        assert depth[e.dst] == depth[e.src] + 1


def test_determinism():
    cfg = GeneratorConfig("cnn-like", 24, seed=99)
    a = generate_synthetic(cfg)
    b = generate_synthetic(cfg)
    assert graph_to_json(a) == graph_to_json(b)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("n", [1, 2, 3, 7, 20])
def test_families_exact_node_count(family, n):
    g = generate_synthetic(GeneratorConfig(family, n, seed=5))
    assert g.num_nodes == n


def test_invalid_configs():
    with pytest.raises(InvalidConfigError):
        generate_synthetic(GeneratorConfig("chain", 0, seed=1))
    with pytest.raises(InvalidConfigError):
        generate_synthetic(GeneratorConfig("nope", 5, seed=1))
    with pytest.raises(InvalidConfigError):
        generate_synthetic(GeneratorConfig("chain", 5, seed=1, cost_range=(5.0, 1.0)))
    with pytest.raises(InvalidConfigError):
        generate_synthetic(GeneratorConfig("chain", 5, seed=1, output_bytes_range=(-2, 4)))
    with pytest.raises(InvalidConfigError):
        generate_synthetic(GeneratorConfig("random-dag", 5, seed=1, edge_prob=1.5))


def test_random_specs_always_valid_graphs():
    # constructor re-validates invariants (DAG, dense ids, etc.)
    rng = np.random.default_rng(0)
    for k in range(1000):
        fam = FAMILIES[k % len(FAMILIES)]
        cfg = GeneratorConfig(
            fam,
            int(rng.integers(1, 25)),
            seed=int(rng.integers(0, 1 << 30)),
            cost_range=(0.5, float(rng.uniform(0.5, 20.0))),
        )
        g = generate_synthetic(cfg)
        assert g.num_nodes == cfg.num_nodes
        lo, hi = cfg.cost_range
        assert ((g.compute_cost >= lo) & (g.compute_cost <= hi)).all()
        lo, hi = cfg.output_bytes_range
        assert ((g.output_bytes >= lo) & (g.output_bytes <= hi)).all()


def test_rnn_family_is_connected_chain_of_cells():
    g = generate_synthetic(GeneratorConfig("rnn-like", 12, seed=4))
    # every node except the first reachable: no isolated nodes
    touched = set()
    for e in g.edges:
        touched.add(e.src)
        touched.add(e.dst)
    assert touched == set(range(12))
