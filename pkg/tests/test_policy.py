import numpy as np
import pytest

from mcmpart import ChipTopology, GeneratorConfig, generate_synthetic
from mcmpart.errors import CheckpointFormatError, DimensionMismatchError
from mcmpart.policy import (
    GraphFeatures,
    ModelConfig,
    embed_graph,
    init_params,
    load_checkpoint,
    log_softmax,
    policy_forward,
    sample_rows,
    save_checkpoint,
    softmax,
)

from conftest import make_graph


def tiny_params(num_chips=2, seed=0, **kw):
    return init_params(ModelConfig.tiny(num_chips=num_chips, **kw), np.random.default_rng(seed))


def test_rows_are_stochastic():
    g = generate_synthetic(GeneratorConfig("layered", 14, seed=3))
    params = tiny_params(num_chips=4, seed=1)
    h = embed_graph(g, params)
    P = policy_forward(h, params)
    assert P.shape == (14, 4)
    assert (P >= 0).all()
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-6)


def test_zero_head_weights_give_uniform_rows():
    g = generate_synthetic(GeneratorConfig("chain", 6, seed=1))
    params = tiny_params(num_chips=3, seed=0)
    params.weights["head_W2"][:] = 0.0
    params.weights["head_b2"][:] = 0.0
    P = policy_forward(embed_graph(g, params), params)
    np.testing.assert_allclose(P, 1.0 / 3.0)


def test_softmax_shift_invariance():
    logits = np.random.default_rng(0).standard_normal((5, 3))
    shifted = logits + np.array([[10.0], [-3.0], [0.5], [100.0], [0.0]])
    np.testing.assert_allclose(softmax(logits), softmax(shifted), atol=1e-12)


def test_log_softmax_matches_softmax():
    logits = np.random.default_rng(1).standard_normal((4, 6)) * 30
    np.testing.assert_allclose(np.exp(log_softmax(logits)), softmax(logits), atol=1e-12)


def test_edgeless_graph_embedding_uses_self_features_only():
    # identical features + empty neighborhoods -> identical embeddings
    g = make_graph(3, [], costs=[2.0, 2.0, 2.0])
    params = tiny_params(num_chips=2)
    h = embed_graph(g, params)
    np.testing.assert_allclose(h[0], h[1], atol=1e-12)
    np.testing.assert_allclose(h[0], h[2], atol=1e-12)


def test_isomorphic_nodes_share_embeddings(diamond):
    # nodes 1 and 2 of the diamond have the same features and neighborhoods
    params = tiny_params(num_chips=2)
    h = embed_graph(diamond, params)
    np.testing.assert_allclose(h[1], h[2], atol=1e-12)


def test_permutation_equivariance():
    g = generate_synthetic(GeneratorConfig("random-dag", 9, seed=7))
    params = tiny_params(num_chips=3, seed=2)
    P = policy_forward(embed_graph(g, params), params)

    perm = np.random.default_rng(3).permutation(9)
    inv = np.empty(9, dtype=np.int64)
    inv[perm] = np.arange(9)
    relabeled = make_graph(
        9,
        [(int(inv[e.src]), int(inv[e.dst])) for e in g.edges],
        costs=[float(g.compute_cost[perm[i]]) for i in range(9)],
        out_bytes=[int(g.output_bytes[perm[i]]) for i in range(9)],
        param_bytes=[int(g.param_bytes[perm[i]]) for i in range(9)],
        ops=[g.nodes[perm[i]].op_kind for i in range(9)],
    )
    P2 = policy_forward(embed_graph(relabeled, params), params)
    np.testing.assert_allclose(P2, P[perm], atol=1e-10)


def test_prev_action_changes_features():
    g = generate_synthetic(GeneratorConfig("chain", 5, seed=1))
    cfg = ModelConfig.tiny(num_chips=2)
    feats = GraphFeatures(g, cfg)
    x0 = feats.features(None)
    x1 = feats.features(np.array([1, 0, 1, 0, 1]))
    assert not np.array_equal(x0, x1)
    assert np.array_equal(x0[:, : feats.prev_offset], x1[:, : feats.prev_offset])
    assert x0[:, feats.prev_offset :].sum() == 0
    assert x1[:, feats.prev_offset :].sum() == 5


def test_feature_normalizations_in_unit_interval():
    g = generate_synthetic(GeneratorConfig("cnn-like", 18, seed=5))
    feats = GraphFeatures(g, ModelConfig.tiny(num_chips=3))
    x = feats.features(np.zeros(18, dtype=np.int64))
    assert (x >= 0).all() and (x <= 1).all()


def test_unknown_op_kind_maps_to_extra_bucket():
    g = make_graph(2, [(0, 1)], ops=["matmul", "something-new"])
    cfg = ModelConfig.tiny(num_chips=2)
    feats = GraphFeatures(g, cfg)
    x = feats.features(None)
    unknown_col = len(cfg.op_vocab)
    assert x[1, unknown_col] == 1.0
    assert x[0, unknown_col] == 0.0


def test_sample_rows_follows_distribution():
    P = np.array([[0.9, 0.1], [0.1, 0.9]])
    rng = np.random.default_rng(0)
    draws = np.stack([sample_rows(P, rng) for _ in range(2000)])
    assert draws[:, 0].mean() == pytest.approx(0.1, abs=0.03)
    assert draws[:, 1].mean() == pytest.approx(0.9, abs=0.03)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    params = tiny_params(num_chips=3, seed=4, use_value_head=True)
    params.opt_m = {k: np.full_like(v, 0.25) for k, v in params.weights.items()}
    params.opt_v = {k: np.full_like(v, 0.5) for k, v in params.weights.items()}
    params.opt_t = 7
    path = tmp_path / "p.ckpt"
    save_checkpoint(path, params, meta={"note": "x"})
    loaded, meta = load_checkpoint(path)
    assert meta == {"note": "x"}
    assert loaded.config == params.config
    assert loaded.opt_t == 7
    for k, v in params.weights.items():
        assert np.array_equal(loaded.weights[k], v)
        assert np.array_equal(loaded.opt_m[k], params.opt_m[k])

    g = generate_synthetic(GeneratorConfig("layered", 8, seed=2))
    before = policy_forward(embed_graph(g, params), params)
    after = policy_forward(embed_graph(g, loaded), loaded)
    assert np.array_equal(before, after)


def test_checkpoint_bytes_deterministic(tmp_path):
    params = tiny_params(num_chips=2, seed=9)
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, params)
    save_checkpoint(b, params)
    assert a.read_bytes() == b.read_bytes()


def test_checkpoint_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(p)


def test_feature_dim_mismatch_raises():
    g = generate_synthetic(GeneratorConfig("chain", 4, seed=1))
    params = tiny_params(num_chips=2)
    feats3 = GraphFeatures(g, ModelConfig.tiny(num_chips=3))
    from mcmpart.policy import forward_policy

    with pytest.raises(DimensionMismatchError):
        forward_policy(params, feats3, feats3.features(None))
