"""Policy network: message-passing node embeddings and a per-node chip head.

Everything is plain numpy with hand-written backprop, so gradients can be
verified against finite differences.  Node features combine op kind,
normalized cost/byte stats, degrees, depth, and a one-hot of the previous
refinement step's actions; K aggregation layers transform
``concat(self, mean_in, mean_out)`` through affine maps with tanh, and a
two-layer head emits one chip distribution per node.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .errors import CheckpointFormatError, DimensionMismatchError
from .generate import OP_VOCAB
from .graph import ComputationGraph

CHECKPOINT_MAGIC = b"MCMPCKPT"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_chips: int
    op_vocab: tuple = OP_VOCAB
    num_layers: int = 8
    hidden_dim: int = 128
    use_value_head: bool = False

    @property
    def feature_dim(self) -> int:
        # op one-hot (+unknown bucket), cost/out/param norms, in/out degree,
        # depth fraction, previous-action one-hot
        return len(self.op_vocab) + 1 + 6 + self.num_chips

    @classmethod
    def tiny(cls, num_chips: int, **kw) -> "ModelConfig":
        """Small profile for fast tests and gradient checks."""
        kw.setdefault("num_layers", 2)
        kw.setdefault("hidden_dim", 16)
        return cls(num_chips=num_chips, **kw)


class PolicyParams:
    """Named weight arrays plus optimizer state; bit-exact round-trippable."""

    def __init__(self, config: ModelConfig, weights: dict):
        self.config = config
        self.weights = weights
        self.opt_m: dict = {}
        self.opt_v: dict = {}
        self.opt_t: int = 0

    def copy(self) -> "PolicyParams":
        out = PolicyParams(self.config, {k: v.copy() for k, v in self.weights.items()})
        out.opt_m = {k: v.copy() for k, v in self.opt_m.items()}
        out.opt_v = {k: v.copy() for k, v in self.opt_v.items()}
        out.opt_t = self.opt_t
        return out

    def weight_hash(self) -> int:
        acc = 0
        for k in sorted(self.weights):
            acc = hash((acc, k, self.weights[k].tobytes())) & 0xFFFFFFFFFFFF
        return acc


def init_params(config: ModelConfig, rng: np.random.Generator) -> PolicyParams:
    """Glorot-uniform weights, zero biases."""
    weights = {}

    def glorot(fan_in, fan_out):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_in, fan_out))

    d_in = config.feature_dim
    for l in range(config.num_layers):
        weights[f"sage{l}_W"] = glorot(3 * d_in, config.hidden_dim)
        weights[f"sage{l}_b"] = np.zeros(config.hidden_dim)
        d_in = config.hidden_dim
    h = config.hidden_dim
    weights["head_W1"] = glorot(h, h)
    weights["head_b1"] = np.zeros(h)
    weights["head_W2"] = glorot(h, config.num_chips)
    weights["head_b2"] = np.zeros(config.num_chips)
    if config.use_value_head:
        weights["val_W1"] = glorot(h, h)
        weights["val_b1"] = np.zeros(h)
        weights["val_W2"] = glorot(h, 1)
        weights["val_b2"] = np.zeros(1)
    return PolicyParams(config, weights)


class GraphFeatures:
    """Per-graph feature matrix and row-normalized neighbor-mean operators."""

    def __init__(self, g: ComputationGraph, config: ModelConfig):
        self.config = config
        n = g.num_nodes
        vocab = {op: i for i, op in enumerate(config.op_vocab)}
        unknown = len(config.op_vocab)
        base = np.zeros((n, config.feature_dim))
        for i, node in enumerate(g.nodes):
            base[i, vocab.get(node.op_kind, unknown)] = 1.0
        off = unknown + 1

        def norm(arr):
            arr = np.asarray(arr, dtype=np.float64)
            top = arr.max() if len(arr) else 0.0
            return arr / top if top > 0 else np.zeros_like(arr)

        indeg = np.zeros(n)
        outdeg = np.zeros(n)
        for e in g.edges:
            outdeg[e.src] += 1
            indeg[e.dst] += 1
        depth = g.node_depths().astype(np.float64) if n else np.zeros(0)
        base[:, off + 0] = norm(g.compute_cost)
        base[:, off + 1] = norm(g.output_bytes)
        base[:, off + 2] = norm(g.param_bytes)
        base[:, off + 3] = norm(indeg)
        base[:, off + 4] = norm(outdeg)
        base[:, off + 5] = depth / depth.max() if n and depth.max() > 0 else 0.0
        self.base = base
        self.prev_offset = off + 6

        a_in = np.zeros((n, n))
        a_out = np.zeros((n, n))
        for e in g.edges:
            a_in[e.dst, e.src] = 1.0
            a_out[e.src, e.dst] = 1.0
        # mean over an empty neighborhood stays the zero vector
        in_cnt = a_in.sum(axis=1, keepdims=True)
        out_cnt = a_out.sum(axis=1, keepdims=True)
        self.a_in = np.divide(a_in, in_cnt, out=a_in, where=in_cnt > 0)
        self.a_out = np.divide(a_out, out_cnt, out=a_out, where=out_cnt > 0)

    def features(self, prev_actions=None) -> np.ndarray:
        """Feature matrix with the previous-action block filled (zeros at t=1)."""
        x = self.base.copy()
        if prev_actions is not None:
            pa = np.asarray(prev_actions, dtype=np.int64)
            x[np.arange(len(pa)), self.prev_offset + pa] = 1.0
        return x


def forward_policy(params: PolicyParams, feats: GraphFeatures, x: np.ndarray, need_cache: bool = False):
    """Run embedding layers and head; returns (logits, value, cache)."""
    cfg = params.config
    w = params.weights
    if x.shape[1] != cfg.feature_dim:
        raise DimensionMismatchError(f"feature dim {x.shape[1]} != model feature dim {cfg.feature_dim}")
    h = x
    layer_cache = []
    for l in range(cfg.num_layers):
        z = np.concatenate([h, feats.a_in @ h, feats.a_out @ h], axis=1)
        h_new = np.tanh(z @ w[f"sage{l}_W"] + w[f"sage{l}_b"])
        if need_cache:
            layer_cache.append((z, h_new))
        h = h_new
    t1 = np.tanh(h @ w["head_W1"] + w["head_b1"])
    logits = t1 @ w["head_W2"] + w["head_b2"]
    value = 0.0
    vcache = None
    if cfg.use_value_head:
        pooled = h.mean(axis=0) if len(h) else np.zeros(cfg.hidden_dim)
        v1 = np.tanh(pooled @ w["val_W1"] + w["val_b1"])
        value = float((v1 @ w["val_W2"])[0] + w["val_b2"][0])
        vcache = (pooled, v1)
    cache = (h, t1, layer_cache, vcache) if need_cache else None
    return logits, value, cache


def backward_policy(params: PolicyParams, feats: GraphFeatures, cache, dlogits: np.ndarray, dvalue: float, grads: dict):
    """Accumulate loss gradients for one forward pass into ``grads``."""
    cfg = params.config
    w = params.weights
    h, t1, layer_cache, vcache = cache

    grads["head_W2"] += t1.T @ dlogits
    grads["head_b2"] += dlogits.sum(axis=0)
    dt1 = dlogits @ w["head_W2"].T
    da1 = dt1 * (1.0 - t1 * t1)
    grads["head_W1"] += h.T @ da1
    grads["head_b1"] += da1.sum(axis=0)
    dh = da1 @ w["head_W1"].T

    if cfg.use_value_head and dvalue != 0.0:
        pooled, v1 = vcache
        grads["val_W2"] += np.outer(v1, [dvalue])
        grads["val_b2"] += np.array([dvalue])
        dv1 = dvalue * w["val_W2"][:, 0]
        dav1 = dv1 * (1.0 - v1 * v1)
        grads["val_W1"] += np.outer(pooled, dav1)
        grads["val_b1"] += dav1
        dh = dh + (w["val_W1"] @ dav1)[None, :] / max(len(h), 1)

    d = cfg.hidden_dim
    for l in range(cfg.num_layers - 1, -1, -1):
        z, h_new = layer_cache[l]
        da = dh * (1.0 - h_new * h_new)
        grads[f"sage{l}_W"] += z.T @ da
        grads[f"sage{l}_b"] += da.sum(axis=0)
        dz = da @ w[f"sage{l}_W"].T
        d_in = z.shape[1] // 3
        dh = dz[:, :d_in] + feats.a_in.T @ dz[:, d_in : 2 * d_in] + feats.a_out.T @ dz[:, 2 * d_in :]
    return grads


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def embed_graph(g: ComputationGraph, params: PolicyParams, prev_actions=None, feats: GraphFeatures | None = None) -> np.ndarray:
    """Per-node embeddings after all aggregation layers."""
    feats = feats or GraphFeatures(g, params.config)
    x = feats.features(prev_actions)
    cfg = params.config
    w = params.weights
    h = x
    for l in range(cfg.num_layers):
        z = np.concatenate([h, feats.a_in @ h, feats.a_out @ h], axis=1)
        h = np.tanh(z @ w[f"sage{l}_W"] + w[f"sage{l}_b"])
    return h


def policy_forward(h: np.ndarray, params: PolicyParams) -> np.ndarray:
    """Row-stochastic distribution matrix from node embeddings."""
    w = params.weights
    t1 = np.tanh(h @ w["head_W1"] + w["head_b1"])
    logits = t1 @ w["head_W2"] + w["head_b2"]
    return softmax(logits)


def sample_rows(P: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row."""
    cum = np.cumsum(P, axis=1)
    r = rng.random(P.shape[0])
    idx = (r[:, None] >= cum).sum(axis=1)
    return np.minimum(idx, P.shape[1] - 1).astype(np.int64)


def save_checkpoint(path, params: PolicyParams, meta: dict | None = None) -> None:
    """Write a versioned, deterministic binary checkpoint.

    Layout: magic, header length (LE uint64), JSON header (config echo,
    array table, optimizer step), then raw little-endian float64 buffers in
    header order.
    """
    arrays = []
    payload = bytearray()
    named = dict(params.weights)
    for k in sorted(params.opt_m):
        named[f"adam_m.{k}"] = params.opt_m[k]
    for k in sorted(params.opt_v):
        named[f"adam_v.{k}"] = params.opt_v[k]
    for name in sorted(named):
        arr = np.ascontiguousarray(named[name], dtype="<f8")
        arrays.append({"name": name, "shape": list(arr.shape)})
        payload += arr.tobytes()
    cfg = asdict(params.config)
    cfg["op_vocab"] = list(params.config.op_vocab)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": cfg,
        "arrays": arrays,
        "adam_t": params.opt_t,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(payload)


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatError(f"bad magic in {path}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {header.get('version')}")
        cfg_doc = dict(header["config"])
        cfg_doc["op_vocab"] = tuple(cfg_doc["op_vocab"])
        config = ModelConfig(**cfg_doc)
        weights = {}
        opt_m = {}
        opt_v = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise CheckpointFormatError("truncated checkpoint payload")
            arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            name = entry["name"]
            if name.startswith("adam_m."):
                opt_m[name[len("adam_m.") :]] = arr.copy()
            elif name.startswith("adam_v."):
                opt_v[name[len("adam_v.") :]] = arr.copy()
            else:
                weights[name] = arr.copy()
    params = PolicyParams(config, weights)
    params.opt_m = opt_m
    params.opt_v = opt_v
    params.opt_t = int(header.get("adam_t", 0))
    return params, header.get("meta", {})
