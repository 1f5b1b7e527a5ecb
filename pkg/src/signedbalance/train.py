"""Training loops: reweighted semi-supervised, supervised, and pseudo-labeling.

All trainers share one skeleton: Adam with decoupled weight decay, validation
Macro-F1 every ``eval_interval`` epochs, checkpoint of the best evaluation,
and early stopping after ``patience`` evaluations without improvement. A full
TrainReport is a pure function of (split, partition, config).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .balance import (EdgeSample, Provenance, build_sb_set, meso_sb_label,
                      micro_sb_label)
from .community import Partition
from .graph import Edge, SignedEdge, SplitDataset
from .metrics import macro_f1
from .model import (Gradient, LossValue, ModelParams, init_params,
                    predict_signs, score_edges, sign_loss_arrays,
                    spectral_features, task_loss)
from .reweight import ReweightConfig, reweight_arrays

logger = logging.getLogger(__name__)

TaskLoss = Callable[[ModelParams, Sequence[SignedEdge]], LossValue]


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 1000
    eval_interval: int = 25
    patience: int = 10                # evaluations, not raw epochs
    learning_rate: float = 1e-3
    weight_decay: float = 1e-3
    embedding_dim: int = 64
    clean_batch_frac: float = 0.5     # of the labeled training edges
    sb_ratio: int = 6                 # |B_SB| : |B_clean|
    sb_mode: str = "both"             # both | micro_only | meso_only
    weighting: str = "learned"        # learned | constant_one
    seed: int = 0
    meta_lr: float | None = None      # defaults to learning_rate
    eps_init: str = "uniform"
    init_features: str = "gaussian"   # gaussian | spectral

    def __post_init__(self):
        if min(self.max_epochs, self.eval_interval, self.patience,
               self.embedding_dim) <= 0:
            raise ValueError("epochs, intervals, patience, dim must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning_rate must be positive, weight_decay >= 0")
        if not 0 < self.clean_batch_frac <= 1:
            raise ValueError("clean_batch_frac must lie in (0,1]")
        if self.sb_ratio < 1:
            raise ValueError("sb_ratio must be at least 1")
        if self.sb_mode not in ("both", "micro_only", "meso_only"):
            raise ValueError(f"unknown sb_mode {self.sb_mode!r}")
        if self.weighting not in ("learned", "constant_one"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass
class EvalRecord:
    epoch: int
    l_task: float
    l_sb: float
    val_macro_f1: float

    @property
    def l_tot(self) -> float:
        return self.l_task + self.l_sb


@dataclass
class TrainReport:
    best_params: ModelParams
    history: list[EvalRecord]
    stopping_epoch: int
    best_val_macro_f1: float
    wall_time: float
    config: TrainConfig
    notes: dict = field(default_factory=dict)

    def history_rows(self) -> list[dict]:
        return [{"epoch": r.epoch, "l_task": r.l_task, "l_sb": r.l_sb,
                 "l_tot": r.l_tot, "val_macro_f1": r.val_macro_f1}
                for r in self.history]


# -- optimizer -------------------------------------------------------------------

@dataclass
class AdamState:
    m: Gradient
    v: Gradient
    t: int = 0

    @staticmethod
    def for_params(params: ModelParams) -> "AdamState":
        return AdamState(Gradient.zeros_like(params), Gradient.zeros_like(params))


def adam_step(params: ModelParams, state: AdamState, grads: Gradient,
              lr: float, weight_decay: float = 0.0,
              beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[ModelParams, AdamState]:
    """One adaptive-moment update with decoupled weight decay, in place."""
    if grads.embeddings.shape != params.embeddings.shape \
            or grads.scorer.shape != params.scorer.shape:
        raise ValueError("gradient shape does not match parameters")
    state.t += 1
    t = state.t
    for p, g, m, v in ((params.embeddings, grads.embeddings,
                        state.m.embeddings, state.v.embeddings),
                       (params.scorer, grads.scorer,
                        state.m.scorer, state.v.scorer)):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * np.square(g)
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if weight_decay:
            p -= lr * weight_decay * p
    return params, state


# -- evaluation helpers ------------------------------------------------------------

def evaluate_macro_f1(params: ModelParams, edges: Sequence[SignedEdge]) -> float:
    preds = predict_signs(params, [(u, v) for u, v, _ in edges])
    labels = np.array([s for _, _, s in edges], dtype=np.int64)
    return macro_f1(preds, labels)


def _labeled_arrays(edges: Sequence[SignedEdge]):
    us = np.array([e[0] for e in edges], dtype=np.int64)
    vs = np.array([e[1] for e in edges], dtype=np.int64)
    ss = np.array([e[2] for e in edges], dtype=np.int64)
    return us, vs, ss


def extract_sb_samples(split: SplitDataset, partition: Partition,
                       mode: str = "both") -> list[EdgeSample]:
    """Multiscale balance labeling of the split's unlabeled pool."""
    g_train = split.training_graph()
    micro = micro_sb_label(g_train) if mode in ("both", "micro_only") else []
    meso = meso_sb_label(split.train_unlabeled, partition) \
        if mode in ("both", "meso_only") else []
    return build_sb_set(micro, meso, mode)


def _init_model(split: SplitDataset, cfg: TrainConfig) -> ModelParams:
    features = None
    if cfg.init_features == "spectral":
        features = spectral_features(split.training_graph(),
                                     cfg.embedding_dim, cfg.seed)
    return init_params(split.num_nodes, cfg.embedding_dim, cfg.seed, features)


# -- core loop ----------------------------------------------------------------------

def _run_loop(split: SplitDataset, cfg: TrainConfig,
              sb_samples: Sequence[EdgeSample] | None,
              task_loss_fn: TaskLoss,
              params: ModelParams | None = None) -> TrainReport:
    """Shared trainer. With sb_samples the sign loss is the reweighted SB
    batch (the semi-supervised scheme); without, it is the clean batch at
    weight 1 (plain supervised training)."""
    start = time.perf_counter()
    labeled = list(split.train_labeled)
    if not labeled:
        raise ValueError("labeled training set is empty")
    rng = np.random.default_rng(cfg.seed)
    if params is None:
        params = _init_model(split, cfg)
    state = AdamState.for_params(params)

    lab_us, lab_vs, lab_ss = _labeled_arrays(labeled)
    n_lab = len(labeled)
    clean_size = max(1, int(round(cfg.clean_batch_frac * n_lab)))

    use_sb = sb_samples is not None and len(sb_samples) > 0
    if use_sb:
        sb_us, sb_vs, sb_ss = _labeled_arrays([(s.edge[0], s.edge[1], s.sign)
                                               for s in sb_samples])
        n_sb = len(sb_samples)
    rw_cfg = ReweightConfig(meta_lr=cfg.meta_lr or cfg.learning_rate,
                            eps_init=cfg.eps_init)

    best_params = params.copy()
    best_f1 = -1.0
    history: list[EvalRecord] = []
    bad_evals = 0
    stopping_epoch = cfg.max_epochs

    for epoch in range(1, cfg.max_epochs + 1):
        clean_idx = rng.choice(n_lab, size=clean_size, replace=False)
        c_us, c_vs, c_ss = lab_us[clean_idx], lab_vs[clean_idx], lab_ss[clean_idx]

        l_task = task_loss_fn(params, labeled)

        if use_sb:
            sb_size = cfg.sb_ratio * clean_size
            replace_draw = n_sb < sb_size
            sb_idx = rng.choice(n_sb, size=sb_size, replace=replace_draw)
            b_us, b_vs, b_ss = sb_us[sb_idx], sb_vs[sb_idx], sb_ss[sb_idx]
            if cfg.weighting == "learned":
                rw = reweight_arrays(params, c_us, c_vs, c_ss,
                                     b_us, b_vs, b_ss, rw_cfg, rng)
                w = rw.weights
            else:
                w = np.full(sb_size, 1.0 / sb_size)
            l_sign = sign_loss_arrays(params, b_us, b_vs, b_ss, w)
        else:
            # supervised fallback: clean edges at weight exactly 1
            w = np.ones(clean_size)
            l_sign = sign_loss_arrays(params, c_us, c_vs, c_ss, w)

        total_grad = l_task.gradient.add(l_sign.gradient)
        params, state = adam_step(params, state, total_grad,
                                  cfg.learning_rate, cfg.weight_decay)

        if epoch % cfg.eval_interval == 0:
            val_f1 = evaluate_macro_f1(params, split.val) if split.val else 0.0
            history.append(EvalRecord(epoch, l_task.value, l_sign.value, val_f1))
            if val_f1 > best_f1:
                best_f1 = val_f1
                best_params = params.copy()
                bad_evals = 0
            else:
                bad_evals += 1
            if bad_evals >= cfg.patience:
                stopping_epoch = epoch
                break
    else:
        stopping_epoch = cfg.max_epochs

    if best_f1 < 0:  # no evaluation happened (tiny max_epochs)
        best_params = params.copy()
        best_f1 = evaluate_macro_f1(best_params, split.val) if split.val else 0.0
    return TrainReport(best_params, history, stopping_epoch, best_f1,
                       time.perf_counter() - start, cfg)


def train_supervised(split: SplitDataset, config: TrainConfig,
                     task_loss_fn: TaskLoss = task_loss) -> TrainReport:
    """Train on labeled edges only: task loss plus clean-batch sign loss."""
    return _run_loop(split, config, None, task_loss_fn)


def train_l2rw(split: SplitDataset, partition: Partition, config: TrainConfig,
               task_loss_fn: TaskLoss = task_loss) -> TrainReport:
    """Semi-supervised training with reweighted multiscale-balance labels.

    Pseudo-labels the unlabeled pool once up front, then per epoch learns
    per-sample weights against a clean batch and descends the combined loss.
    Degrades to supervised training (with a logged warning) when no balance
    labels exist.
    """
    sb_samples = extract_sb_samples(split, partition, config.sb_mode)
    if not sb_samples:
        logger.warning("no balance-labeled edges available; "
                       "falling back to supervised training")
        return _run_loop(split, config, None, task_loss_fn)
    report = _run_loop(split, config, sb_samples, task_loss_fn)
    report.notes["num_sb_samples"] = len(sb_samples)
    report.notes["num_micro"] = sum(
        1 for s in sb_samples if s.provenance is Provenance.MICRO_SB)
    report.notes["num_meso"] = sum(
        1 for s in sb_samples if s.provenance is Provenance.MESO_SB)
    return report


# -- pseudo-labeling baselines ---------------------------------------------------------

PL_STRATEGIES = ("All", "Random", "Uncertainty")


def select_pl_edges(strategy: str, scores: np.ndarray,
                    pool: Sequence[Edge], k: int,
                    rng: np.random.Generator) -> list[int]:
    """Pick pool indexes to pseudo-label this round."""
    m = len(pool)
    if strategy == "All":
        return list(range(m))
    k = min(k, m)
    if strategy == "Random":
        return sorted(rng.choice(m, size=k, replace=False).tolist())
    if strategy == "Uncertainty":
        # most confident on both sides of the class imbalance
        order = np.argsort(scores, kind="stable")
        low = order[:k // 2].tolist()
        rest = [i for i in order[::-1].tolist() if i not in set(low)]
        high = rest[:k - len(low)]
        return sorted(low + high)
    raise ValueError(f"unknown pseudo-labeling strategy {strategy!r}")


def train_pseudo_label(split: SplitDataset, config: TrainConfig,
                       strategy: str = "Random", k: int = 50, t: int = 10,
                       task_loss_fn: TaskLoss = task_loss) -> TrainReport:
    """Self-training baseline: label, merge, and retrain from scratch.

    Each round labels a selection of the unlabeled pool with the current
    model, merges it into the labeled set, and retrains from re-initialized
    parameters (round-indexed seed). Returns the round with the best
    validation Macro-F1. Strategy "All" runs a single round.
    """
    if strategy not in PL_STRATEGIES:
        raise ValueError(f"unknown pseudo-labeling strategy {strategy!r}")
    rng = np.random.default_rng(config.seed)
    rounds = 1 if strategy == "All" else t

    current = split
    latest = _run_loop(current, config, None, task_loss_fn)
    latest.notes["pl_round"] = 0
    best = latest
    pool = list(split.train_unlabeled)
    for round_no in range(1, rounds + 1):
        if not pool:
            break
        scores = score_edges(latest.best_params, pool)
        chosen = select_pl_edges(strategy, scores, pool, k, rng)
        chosen_set = set(chosen)
        pseudo = tuple((pool[i][0], pool[i][1], 1 if scores[i] >= 0.5 else -1)
                       for i in chosen)
        pool = [e for i, e in enumerate(pool) if i not in chosen_set]
        current = replace(current,
                          train_labeled=current.train_labeled + pseudo,
                          train_unlabeled=tuple(pool))
        round_cfg = replace(config, seed=config.seed + round_no)
        latest = _run_loop(current, round_cfg, None, task_loss_fn)
        latest.notes["pl_round"] = round_no
        if latest.best_val_macro_f1 > best.best_val_macro_f1:
            best = latest
    return best


# -- checkpoints -------------------------------------------------------------------------

def save_checkpoint(params: ModelParams, path, meta: dict | None = None) -> None:
    """Tensor dump with a JSON meta header (shapes, seed provenance)."""
    header = {"num_nodes": params.num_nodes, "dim": params.dim}
    if meta:
        header.update(meta)
    np.savez(path, embeddings=params.embeddings, scorer=params.scorer,
             meta=json.dumps(header, sort_keys=True))


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    return ModelParams(data["embeddings"], data["scorer"]), meta


def save_history(report: TrainReport, path) -> None:
    payload = {
        "stopping_epoch": report.stopping_epoch,
        "best_val_macro_f1": report.best_val_macro_f1,
        "history": report.history_rows(),
        "notes": report.notes,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))
