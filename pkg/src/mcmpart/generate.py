"""Synthetic computation-graph generator.

Families mimic the structure of small production vision/language graphs
(tens to hundreds of nodes): plain chains, layered DAGs, sparse random DAGs,
conv-style branch/merge blocks with occasional skips, and unrolled
recurrent chains.  Deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .graph import ComputationGraph, DataEdge, OpNode

FAMILIES = ("chain", "layered", "random-dag", "cnn-like", "rnn-like")

# Fixed op vocabulary; models embed unseen kinds through an extra bucket.
OP_VOCAB = (
    "input",
    "conv",
    "matmul",
    "elementwise",
    "norm",
    "pool",
    "reduce",
    "embed",
    "concat",
    "output",
)

_MID_OPS = ("conv", "matmul", "elementwise", "norm", "pool", "reduce", "embed")


@dataclass
class GeneratorConfig:
    family: str
    num_nodes: int
    seed: int = 0
    cost_range: tuple[float, float] = (1.0, 10.0)
    output_bytes_range: tuple[int, int] = (1024, 65536)
    param_bytes_range: tuple[int, int] = (1024, 262144)
    layer_width: int = 4          # layered: average nodes per layer
    edge_prob: float = 0.15       # random-dag: P(edge i->j) for i < j
    skip_prob: float = 0.25       # cnn-like: P(skip edge into a merge node)

    def validate(self):
        if self.family not in FAMILIES:
            raise InvalidConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.num_nodes < 1:
            raise InvalidConfigError("num_nodes must be >= 1")
        for name, rng_ in (
            ("cost_range", self.cost_range),
            ("output_bytes_range", self.output_bytes_range),
            ("param_bytes_range", self.param_bytes_range),
        ):
            lo, hi = rng_
            if lo < 0 or hi < lo:
                raise InvalidConfigError(f"{name} must satisfy 0 <= lo <= hi, got {rng_}")
        if self.layer_width < 1:
            raise InvalidConfigError("layer_width must be >= 1")
        if not (0.0 <= self.edge_prob <= 1.0) or not (0.0 <= self.skip_prob <= 1.0):
            raise InvalidConfigError("edge_prob and skip_prob must lie in [0, 1]")


def generate_synthetic(cfg: GeneratorConfig) -> ComputationGraph:
    """Build a random DAG of ``cfg.num_nodes`` nodes for the given family."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n = cfg.num_nodes
    if cfg.family == "chain":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif cfg.family == "layered":
        edges = _layered_edges(n, cfg.layer_width, rng)
    elif cfg.family == "random-dag":
        edges = _random_dag_edges(n, cfg.edge_prob, rng)
    elif cfg.family == "cnn-like":
        edges = _cnn_edges(n, cfg.skip_prob, rng)
    else:
        edges = _rnn_edges(n)

    nodes = []
    for i in range(n):
        if i == 0:
            kind = "input"
        elif i == n - 1 and n > 1:
            kind = "output"
        else:
            kind = _MID_OPS[rng.integers(0, len(_MID_OPS))]
        cost = float(rng.uniform(cfg.cost_range[0], cfg.cost_range[1]))
        out_b = int(rng.integers(cfg.output_bytes_range[0], cfg.output_bytes_range[1] + 1))
        par_b = int(rng.integers(cfg.param_bytes_range[0], cfg.param_bytes_range[1] + 1))
        nodes.append(OpNode(id=i, op_kind=kind, compute_cost=cost, output_bytes=out_b, param_bytes=par_b))

    data_edges = [DataEdge(src=u, dst=v, transfer_bytes=nodes[u].output_bytes) for u, v in sorted(set(edges))]
    return ComputationGraph(nodes, data_edges)


def _layer_split(n: int, width: int, rng) -> list[list[int]]:
    """Partition node ids 0..n-1 into consecutive layers of ~``width`` nodes."""
    layers = []
    i = 0
    while i < n:
        take = int(rng.integers(max(1, width - 1), width + 2))
        take = min(take, n - i)
        layers.append(list(range(i, i + take)))
        i += take
    return layers


def _layered_edges(n, width, rng):
    # Edges cross adjacent layers only; every non-first-layer node keeps at
    # least one parent in the previous layer so depth == layer index.
    layers = _layer_split(n, width, rng)
    edges = []
    for k in range(1, len(layers)):
        prev, cur = layers[k - 1], layers[k]
        for v in cur:
            parents = {int(prev[rng.integers(0, len(prev))])}
            extra = rng.random(len(prev)) < 0.3
            for idx, p in enumerate(prev):
                if extra[idx]:
                    parents.add(p)
            for p in parents:
                edges.append((p, v))
    return edges


def _random_dag_edges(n, p, rng):
    edges = []
    for j in range(1, n):
        picked = False
        for i in range(j):
            if rng.random() < p:
                edges.append((i, j))
                picked = True
        if not picked:
            edges.append((int(rng.integers(0, j)), j))
    return edges


def _cnn_edges(n, skip_prob, rng):
    # Stem chain, then branch/merge blocks; merges may take a skip edge from
    # an earlier block output, producing long-range chip dependencies.
    edges = []
    block_outputs = []
    i = 0
    stem = min(n, 3)
    for k in range(stem - 1):
        edges.append((k, k + 1))
    i = stem
    block_outputs.append(stem - 1)
    while i < n:
        remaining = n - i
        if remaining < 3:
            # tail: chain the leftovers
            prev = block_outputs[-1]
            while i < n:
                edges.append((prev, i))
                prev = i
                i += 1
            block_outputs.append(prev)
            break
        nb = int(rng.integers(2, 4))  # branches
        branch_len = 1 if remaining < nb * 2 + 1 else int(rng.integers(1, 3))
        need = nb * branch_len + 1
        if need > remaining:
            nb, branch_len, need = 2, 1, 3
        src = block_outputs[-1]
        branch_ends = []
        for _ in range(nb):
            prev = src
            for _ in range(branch_len):
                edges.append((prev, i))
                prev = i
                i += 1
            branch_ends.append(prev)
        merge = i
        i += 1
        for b in branch_ends:
            edges.append((b, merge))
        if len(block_outputs) > 1 and rng.random() < skip_prob:
            edges.append((int(block_outputs[rng.integers(0, len(block_outputs) - 1)]), merge))
        block_outputs.append(merge)
    return edges


def _rnn_edges(n):
    # Unrolled recurrence: x_t feeds cell_t, cell_{t-1} feeds cell_t.
    edges = []
    prev_cell = None
    i = 0
    while i < n:
        if i + 1 < n:
            x, cell = i, i + 1
            edges.append((x, cell))
            i += 2
        else:
            cell = i
            i += 1
        if prev_cell is not None:
            edges.append((prev_cell, cell))
        prev_cell = cell
    return edges
