"""Per-sample weight learning for balance-labeled edges.

One step of the bilevel scheme: perturb the model by a weighted gradient of
the pseudo-labeled batch, measure how the clean batch responds, and push each
sample's weight against that response. Because the perturbation is linear in
the weights, the meta-gradient is an exact inner product of per-sample
gradients with the clean-batch gradient at the perturbed parameters; no
second-order terms arise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .balance import EdgeSample
from .model import Gradient, ModelParams, sign_loss_arrays


@dataclass(frozen=True)
class ReweightConfig:
    """Knobs of the weight-learning step.

    meta_lr is the step size of the inner parameter update; eps_lr scales the
    weight update (1 applies the raw meta-gradient). eps_init "uniform" draws
    the initial weights from U(0,1); "zero" starts them at zero.
    """
    meta_lr: float = 1e-3
    eps_lr: float = 1.0
    seed: int = 0
    eps_init: str = "uniform"

    def __post_init__(self):
        if self.meta_lr <= 0 or self.eps_lr <= 0:
            raise ValueError("meta_lr and eps_lr must be positive")
        if self.eps_init not in ("uniform", "zero"):
            raise ValueError(f"unknown eps_init {self.eps_init!r}")


@dataclass
class ReweightResult:
    """Learned weights plus the intermediates a diagnostics dump wants."""
    weights: np.ndarray
    eps: np.ndarray
    eps_grad: np.ndarray


def _as_arrays(batch: Sequence[EdgeSample]):
    us = np.array([s.edge[0] for s in batch], dtype=np.int64)
    vs = np.array([s.edge[1] for s in batch], dtype=np.int64)
    signs = np.array([s.sign for s in batch], dtype=np.int64)
    return us, vs, signs


def _exact_sum_to_one(w: np.ndarray) -> np.ndarray:
    # nudge the largest weight until the float sum is exactly 1.0
    for _ in range(16):
        residual = 1.0 - float(w.sum())
        if residual == 0.0:
            break
        w[int(np.argmax(w))] += residual
    return w


def reweight_arrays(params: ModelParams,
                    clean_us, clean_vs, clean_signs,
                    sb_us, sb_vs, sb_signs,
                    cfg: ReweightConfig,
                    rng: np.random.Generator | None = None) -> ReweightResult:
    """Array core of :func:`reweight`; trainers call this on index batches."""
    m_sb = len(sb_us)
    m_clean = len(clean_us)
    if m_sb == 0 or m_clean == 0:
        raise ValueError("clean and SB batches must both be nonempty")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    if cfg.eps_init == "uniform":
        eps = rng.random(m_sb)
    else:
        eps = np.zeros(m_sb)

    # inner step: Theta_hat = Theta - alpha * sum_i eps_i grad_i
    sb = sign_loss_arrays(params, sb_us, sb_vs, sb_signs, eps)
    theta_hat = ModelParams(
        params.embeddings - cfg.meta_lr * sb.gradient.embeddings,
        params.scorer - cfg.meta_lr * sb.gradient.scorer)

    # clean response: mean BCE at the perturbed parameters
    clean_w = np.full(m_clean, 1.0 / m_clean)
    clean = sign_loss_arrays(theta_hat, clean_us, clean_vs, clean_signs, clean_w)

    # d l_clean / d eps_i = -alpha * <grad_i, grad l_clean(Theta_hat)>
    eps_grad = -cfg.meta_lr * sb.per_sample_dot(clean.gradient)
    if not np.isfinite(eps_grad).all():
        raise FloatingPointError("non-finite meta-gradient")

    w_tilde = np.maximum(0.0, eps - cfg.eps_lr * eps_grad)
    total = float(w_tilde.sum())
    if total == 0.0:
        weights = np.zeros(m_sb)
    else:
        weights = _exact_sum_to_one(w_tilde / total)
    return ReweightResult(weights, eps, eps_grad)


def reweight(params: ModelParams,
             clean_batch: Sequence[EdgeSample],
             sb_batch: Sequence[EdgeSample],
             cfg: ReweightConfig,
             rng: np.random.Generator | None = None) -> ReweightResult:
    """Learn weights over sb_batch from one exact meta-gradient step.

    Returned weights are nonnegative and sum to exactly 1, or are all zero
    when every candidate weight was rectified away (the SB batch then
    contributes nothing this step). Clean samples never pass through here;
    their weight is structurally 1.
    """
    cu, cv, cs = _as_arrays(clean_batch)
    su, sv, ss = _as_arrays(sb_batch)
    return reweight_arrays(params, cu, cv, cs, su, sv, ss, cfg, rng)


def weighted_sb_loss(params: ModelParams, sb_batch: Sequence[EdgeSample],
                     weights: np.ndarray):
    """Weighted sign loss of an SB batch for the main update."""
    if len(weights) != len(sb_batch):
        raise ValueError("one weight per SB sample required")
    w = np.asarray(weights, dtype=float)
    if len(w) and (w.min() < 0.0 or w.max() > 1.0):
        raise ValueError("weights must lie in [0,1]")
    us, vs, signs = _as_arrays(sb_batch)
    return sign_loss_arrays(params, us, vs, signs, w)
