"""Pretraining workflow: corpus splits, training worker, checkpoint selection.

The training worker iterates the training graphs round-robin (one rollout
batch per visit) and periodically snapshots weights; a validation worker
scores each snapshot on the validation graphs, zero-shot and after a small
fine-tuning budget, and the best snapshot warm-starts deployment on unseen
graphs.  Workers communicate only through checkpoint files.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InfeasibleError, InvalidConfigError, StepBudgetError
from .evaluator import Evaluator
from .graph import ChipTopology, ComputationGraph, load_graph_file, save_graph
from .policy import GraphFeatures, ModelConfig, PolicyParams, init_params, load_checkpoint, save_checkpoint
from .search import SearchBudget, SearchTrace, _baseline_throughput
from .training import PpoConfig, _record_rollout, ppo_update, rollout, train

log = logging.getLogger(__name__)


@dataclass
class Corpus:
    train: list[tuple[str, ComputationGraph]]
    validation: list[tuple[str, ComputationGraph]]
    test: list[tuple[str, ComputationGraph]]
    split_seed: int = 0


def split_corpus(named_graphs, sizes: tuple[int, int, int], seed: int) -> Corpus:
    """Deterministic, disjoint shuffle-split into train/validation/test."""
    n_train, n_val, n_test = sizes
    if n_train + n_val + n_test > len(named_graphs):
        raise InvalidConfigError(
            f"split sizes {sizes} exceed corpus size {len(named_graphs)}"
        )
    order = np.random.default_rng(seed).permutation(len(named_graphs))
    picks = [named_graphs[i] for i in order]
    return Corpus(
        train=picks[:n_train],
        validation=picks[n_train : n_train + n_val],
        test=picks[n_train + n_val : n_train + n_val + n_test],
        split_seed=seed,
    )


def save_manifest(path, corpus: Corpus, graph_dir) -> None:
    """Write graph files plus a manifest listing files per split.

    Recorded paths are relative to the manifest's own directory so the
    corpus stays relocatable.
    """
    path = Path(path)
    graph_dir = Path(graph_dir)
    graph_dir.mkdir(parents=True, exist_ok=True)
    doc = {"split_seed": corpus.split_seed}
    for split in ("train", "validation", "test"):
        files = []
        for name, g in getattr(corpus, split):
            fpath = graph_dir / f"{name}.json"
            save_graph(g, fpath)
            files.append(os.path.relpath(fpath, start=path.parent))
        doc[split] = files
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path) -> Corpus:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    base = path.parent

    def load_split(names):
        return [(Path(f).stem, load_graph_file(base / f)) for f in doc.get(names, [])]

    return Corpus(
        train=load_split("train"),
        validation=load_split("validation"),
        test=load_split("test"),
        split_seed=int(doc.get("split_seed", 0)),
    )


@dataclass
class CheckpointRecord:
    sample_count: int
    path: str
    zeroshot_score: Optional[float] = None
    finetune_score: Optional[float] = None


def pretrain(
    corpus: Corpus,
    topo: ChipTopology,
    cfg: PpoConfig,
    evaluator: Evaluator,
    total_samples: int,
    checkpoint_every: int,
    out_dir,
    seed: int = 0,
    model_config: Optional[ModelConfig] = None,
) -> list[CheckpointRecord]:
    """Shared-weights training over the train split, snapshotting regularly.

    Graphs are visited round-robin, one rollout batch (and PPO update) per
    visit; a checkpoint lands every ``checkpoint_every`` consumed samples.
    A graph that errors out is skipped with a warning.
    """
    if not corpus.train:
        raise InvalidConfigError("pretraining needs a nonempty train split")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    model_config = model_config or ModelConfig(num_chips=topo.num_chips)
    params = init_params(model_config, rng)

    feats = {}
    baselines = {}
    skip = set()
    records = []
    samples = 0
    saved_marks = 0
    gi = 0
    while samples < total_samples:
        name, g = corpus.train[gi % len(corpus.train)]
        gi += 1
        if name in skip:
            if len(skip) == len(corpus.train):
                raise InfeasibleError("every training graph failed")
            continue
        if name not in feats:
            feats[name] = GraphFeatures(g, model_config)
            baselines[name] = _baseline_throughput(g, topo, evaluator)
        batch_size = min(cfg.num_rollouts, total_samples - samples)
        try:
            batch = [
                rollout(g, topo, params, cfg, rng, evaluator, feats=feats[name], baseline=baselines[name])
                for _ in range(batch_size)
            ]
        except (InfeasibleError, StepBudgetError) as exc:
            log.warning("skipping graph %s: %s", name, exc)
            skip.add(name)
            continue
        samples += batch_size
        if batch_size == cfg.num_rollouts:
            rewards = [r.reward for r in batch]
            ppo_update(params, batch, cfg, feats[name], float(np.mean(rewards)), rng)
        while (saved_marks + 1) * checkpoint_every <= samples:
            saved_marks += 1
            count = saved_marks * checkpoint_every
            path = out_dir / f"{count}.ckpt"
            save_checkpoint(path, params, meta={"sample_count": count})
            records.append(CheckpointRecord(sample_count=count, path=str(path)))
    return records


def zero_shot(
    params: PolicyParams,
    g: ComputationGraph,
    topo: ChipTopology,
    evaluator: Evaluator,
    samples: int,
    seed: int = 0,
) -> SearchTrace:
    """Inference-only rollouts with frozen parameters; no updates."""
    rng = np.random.default_rng(seed)
    cfg = PpoConfig()
    feats = GraphFeatures(g, params.config)
    baseline = _baseline_throughput(g, topo, evaluator)
    trace = SearchTrace()
    for _ in range(samples):
        ro = rollout(g, topo, params, cfg, rng, evaluator, feats=feats, baseline=baseline)
        _record_rollout(trace, ro, baseline)
    return trace


def fine_tune(
    params: PolicyParams,
    g: ComputationGraph,
    topo: ChipTopology,
    evaluator: Evaluator,
    budget: SearchBudget,
    cfg: PpoConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[PolicyParams, SearchTrace]:
    """Continue training from a pretrained snapshot on one target graph."""
    rng = rng if rng is not None else np.random.default_rng(budget.seed)
    warm = params.copy()
    return train(g, topo, cfg, budget, evaluator, rng, params=warm)


def validate(
    records: list[CheckpointRecord],
    validation,
    topo: ChipTopology,
    evaluator: Evaluator,
    finetune_budget: int = 100,
    zeroshot_samples: int = 50,
    criterion: str = "finetune",
    seed: int = 0,
    cfg: Optional[PpoConfig] = None,
) -> CheckpointRecord:
    """Score every checkpoint on the validation split and pick the best.

    Zero-shot score: mean (over graphs) best normalized reward from
    inference-only rollouts.  Fine-tune score: the same after a small
    training budget per graph.  Ties go to the earlier checkpoint.
    """
    if not records or not validation:
        raise InvalidConfigError("validate needs checkpoints and validation graphs")
    if criterion not in ("zeroshot", "finetune"):
        raise InvalidConfigError("criterion must be 'zeroshot' or 'finetune'")
    cfg = cfg or PpoConfig()
    for rec in records:
        params, _ = load_checkpoint(rec.path)
        zs_scores = []
        ft_scores = []
        for k, (name, g) in enumerate(validation):
            base = _baseline_throughput(g, topo, evaluator)
            tr = zero_shot(params, g, topo, evaluator, zeroshot_samples, seed=_mix(seed, rec.sample_count, k, 0))
            zs_scores.append(tr.best_throughput / base if base > 0 else 0.0)
            rng = np.random.default_rng(_mix(seed, rec.sample_count, k, 1))
            _, ftr = fine_tune(params, g, topo, evaluator, SearchBudget(max_samples=finetune_budget), cfg, rng=rng)
            ft_scores.append(ftr.best_throughput / base if base > 0 else 0.0)
        rec.zeroshot_score = float(np.mean(zs_scores))
        rec.finetune_score = float(np.mean(ft_scores))
    key = (lambda r: r.zeroshot_score) if criterion == "zeroshot" else (lambda r: r.finetune_score)
    best = records[0]
    for rec in records[1:]:
        if key(rec) > key(best):
            best = rec
    return best


def validation_report_rows(records: list[CheckpointRecord]):
    """CSV rows: checkpoint, zeroshot_score, finetune_score."""
    for rec in records:
        yield rec.sample_count, rec.zeroshot_score, rec.finetune_score


def _mix(*parts) -> int:
    acc = 0
    for p in parts:
        acc = (acc * 1000003 + int(p) + 0x9E3779B9) & 0x7FFFFFFF
    return acc
