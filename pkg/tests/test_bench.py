import numpy as np
import pytest

from mcmpart import ChipTopology, GeneratorConfig, SurrogateConfig, analytical_eval, generate_synthetic
from mcmpart.bench import (
    calibration_study,
    cell_seed,
    compare_strategies,
    run_strategy,
    samples_to_target,
    sparsity_probe,
)
from mcmpart.errors import InvalidConfigError
from mcmpart.evaluator import make_analytical
from mcmpart.search import SearchBudget, greedy_heuristic

from conftest import make_graph


def test_compare_single_graph_single_strategy_equals_trace():
    g = generate_synthetic(GeneratorConfig("layered", 8, seed=1))
    topo = ChipTopology(num_chips=2)
    ev = make_analytical()
    rows = compare_strategies([g], topo, ["random"], budget_samples=25, seeds=[3], evaluator=ev)
    base = analytical_eval(g, topo, greedy_heuristic(g, topo)).throughput
    trace = run_strategy("random", g, topo, ev, SearchBudget(max_samples=25, seed=cell_seed(3, "random", g)))
    expected = [b / base for b in trace.best]
    assert [r[2] for r in rows] == pytest.approx(expected)
    assert all(r[3] == 0.0 for r in rows)  # single seed: zero stddev
    assert [r[1] for r in rows] == list(range(1, 26))


def test_compare_identical_strategy_rows_match():
    g = generate_synthetic(GeneratorConfig("chain", 6, seed=2))
    topo = ChipTopology(num_chips=2)
    ev = make_analytical()
    rows = compare_strategies([g], topo, ["random", "random"], budget_samples=10, seeds=[0, 1], evaluator=ev)
    a = [r for r in rows if r[0] == "random"]
    # both entries collapse onto the same (strategy, gi, seed) cells
    assert len(a) == 20


def test_compare_geomean_invariant_to_graph_order():
    gs = [generate_synthetic(GeneratorConfig("layered", 8, seed=s)) for s in (1, 2, 3)]
    topo = ChipTopology(num_chips=2)
    ev = make_analytical()
    rows_fwd = compare_strategies(gs, topo, ["random"], 15, [0], ev)
    rows_rev = compare_strategies(list(reversed(gs)), topo, ["random"], 15, [0], ev)
    assert [r[2] for r in rows_fwd] == pytest.approx([r[2] for r in rows_rev])


def test_compare_requires_inputs():
    with pytest.raises(InvalidConfigError):
        compare_strategies([], ChipTopology(num_chips=2), ["random"], 5, [0], make_analytical())


def test_run_strategy_unknown_name():
    g = generate_synthetic(GeneratorConfig("chain", 4, seed=1))
    with pytest.raises(InvalidConfigError):
        run_strategy("simulated", g, ChipTopology(num_chips=2), make_analytical(), SearchBudget(max_samples=2))


def test_run_strategy_checkpoint_required():
    g = generate_synthetic(GeneratorConfig("chain", 4, seed=1))
    with pytest.raises(InvalidConfigError):
        run_strategy("zeroshot", g, ChipTopology(num_chips=2), make_analytical(), SearchBudget(max_samples=2))


# ---- samples_to_target -----------------------------------------------------


def test_s2t_basic():
    assert samples_to_target([0.5, 1.1, 1.3], [1.0]) == [2]


def test_s2t_unreached_is_none():
    assert samples_to_target([0.5, 1.1, 1.3], [5.0]) == [None]


def test_s2t_monotone_in_targets():
    best = [0.2, 0.5, 0.5, 0.9, 1.4, 1.4, 2.0]
    targets = [0.1, 0.5, 1.0, 1.5, 2.0]
    counts = samples_to_target(best, targets)
    assert counts == [1, 2, 5, 7, 7]
    reached = [c for c in counts if c is not None]
    assert reached == sorted(reached)


def test_s2t_requires_sorted_targets():
    with pytest.raises(InvalidConfigError):
        samples_to_target([1.0], [2.0, 1.0])


# ---- sparsity --------------------------------------------------------------


def test_sparsity_single_chip_everything_valid():
    g = generate_synthetic(GeneratorConfig("layered", 8, seed=3))
    res = sparsity_probe(g, ChipTopology(num_chips=1), 200, np.random.default_rng(0))
    assert res.fraction == 1.0


def test_sparsity_exhaustive_chain2():
    g = make_graph(2, [(0, 1)])
    res = sparsity_probe(g, ChipTopology(num_chips=2), 0, np.random.default_rng(0), exhaustive=True)
    assert res.exact
    assert res.fraction == 0.5  # {00, 01} of 4 assignments
    assert res.num_valid == 2 and res.num_samples == 4


def test_sparsity_monte_carlo_brackets_exact_value():
    g = make_graph(3, [(0, 1), (1, 2)])
    topo = ChipTopology(num_chips=2)
    exact = sparsity_probe(g, topo, 0, np.random.default_rng(0), exhaustive=True)
    mc = sparsity_probe(g, topo, 4000, np.random.default_rng(1))
    assert mc.ci_low <= exact.fraction <= mc.ci_high
    assert mc.fraction == pytest.approx(exact.fraction, abs=0.05)


def test_sparsity_large_layered_graph_is_sparse():
    g = generate_synthetic(GeneratorConfig("layered", 20, seed=4))
    res = sparsity_probe(g, ChipTopology(num_chips=4), 5000, np.random.default_rng(2))
    assert res.fraction < 0.01
    assert res.ci_high < 0.01


# ---- calibration -----------------------------------------------------------


def test_calibration_degenerate_config_exact():
    g = generate_synthetic(GeneratorConfig("layered", 30, seed=5))
    topo = ChipTopology(num_chips=3)
    res = calibration_study(g, topo, 80, SurrogateConfig(), np.random.default_rng(3))
    assert res.pearson_r == 1.0
    assert res.invalid_fraction == 0.0
    assert res.num_joint_valid == 80


def test_calibration_noise_and_headroom():
    g = generate_synthetic(GeneratorConfig("layered", 30, seed=5))
    # per-chip SRAM equal to the whole graph: always analytically valid,
    # while the 0.9 headroom cut drops the most imbalanced samples
    total = int((g.param_bytes + g.output_bytes).sum())
    topo = ChipTopology(num_chips=3, sram_bytes_per_chip=total)
    cfg = SurrogateConfig(noise_scale=0.1, memory_headroom=0.9, seed=1)
    res = calibration_study(g, topo, 150, cfg, np.random.default_rng(4))
    assert res.invalid_fraction > 0
    assert res.pearson_r is not None and res.pearson_r > 0.8
    assert len(res.rows) == 150


def test_calibration_two_point_degeneracy_flagged():
    g = generate_synthetic(GeneratorConfig("layered", 12, seed=6))
    topo = ChipTopology(num_chips=2)
    res = calibration_study(g, topo, 2, SurrogateConfig(noise_scale=0.05, seed=0), np.random.default_rng(5))
    assert res.degenerate
    if res.pearson_r is not None:
        assert abs(res.pearson_r) == pytest.approx(1.0)


def test_calibration_all_invalid_reported():
    g = make_graph(2, [(0, 1)], param_bytes=[100, 100], out_bytes=[0, 0])
    topo = ChipTopology(num_chips=2, sram_bytes_per_chip=150)
    cfg = SurrogateConfig(memory_headroom=0.5)  # budget 75 < any chip load
    res = calibration_study(g, topo, 10, cfg, np.random.default_rng(6))
    assert res.invalid_fraction == 1.0
    assert res.pearson_r is None
    assert res.degenerate


def test_calibration_minimum_samples():
    g = make_graph(2, [(0, 1)])
    with pytest.raises(InvalidConfigError):
        calibration_study(g, ChipTopology(num_chips=2), 1, SurrogateConfig(), np.random.default_rng(0))
