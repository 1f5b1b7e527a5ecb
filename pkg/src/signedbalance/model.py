"""Reference embedding model: logistic sign scorer, clamped losses, gradients.

The encoder is a free embedding table, so every gradient is available in
closed form; the per-sample pieces the reweighter needs (gradients of single
edges, and their inner products with a batch gradient) come out cheaply from
the scorer's sparse structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.linalg import qr, svd
from scipy.special import expit

from .balance import EdgeSample
from .graph import Edge, POS, SignedDigraph, SignedEdge

LOG_CLAMP = -100.0   # lower bound on log-probabilities inside BCE
_SCORE_EPS = 1e-15   # keeps reported scores strictly inside (0, 1)


@dataclass
class ModelParams:
    """Embedding table Z (one row per node) and sign-scorer vector psi (2d)."""
    embeddings: np.ndarray
    scorer: np.ndarray

    def __post_init__(self):
        if self.embeddings.ndim != 2:
            raise ValueError("embeddings must be a (n, d) matrix")
        if self.scorer.shape != (2 * self.embeddings.shape[1],):
            raise ValueError("scorer must have length 2d")
        if not (np.isfinite(self.embeddings).all() and np.isfinite(self.scorer).all()):
            raise ValueError("parameters must be finite")

    @property
    def num_nodes(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(self.embeddings.copy(), self.scorer.copy())


@dataclass
class Gradient:
    """Gradient with ModelParams shape."""
    embeddings: np.ndarray
    scorer: np.ndarray

    @staticmethod
    def zeros_like(params: ModelParams) -> "Gradient":
        return Gradient(np.zeros_like(params.embeddings),
                        np.zeros_like(params.scorer))

    def add(self, other: "Gradient") -> "Gradient":
        return Gradient(self.embeddings + other.embeddings,
                        self.scorer + other.scorer)

    def scaled(self, factor: float) -> "Gradient":
        return Gradient(self.embeddings * factor, self.scorer * factor)

    def dot(self, other: "Gradient") -> float:
        return float(np.vdot(self.embeddings, other.embeddings)
                     + np.vdot(self.scorer, other.scorer))

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))


def init_params(num_nodes: int, dim: int, seed: int,
                features: np.ndarray | None = None) -> ModelParams:
    """Seeded Gaussian init (scale 0.1), or start the table from given features."""
    rng = np.random.default_rng(seed)
    if features is not None:
        if features.shape != (num_nodes, dim):
            raise ValueError(f"features must have shape ({num_nodes}, {dim})")
        z = np.array(features, dtype=float, copy=True)
    else:
        z = rng.normal(0.0, 0.1, size=(num_nodes, dim))
    psi = rng.normal(0.0, 0.1, size=2 * dim)
    return ModelParams(z, psi)


# -- scoring -------------------------------------------------------------------

def _logits(params: ModelParams, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    d = params.dim
    psi1, psi2 = params.scorer[:d], params.scorer[d:]
    return params.embeddings[us] @ psi1 + params.embeddings[vs] @ psi2


def score_edges(params: ModelParams, edges: Sequence[Edge]) -> np.ndarray:
    """Logistic probability that each edge is positive, strictly inside (0,1)."""
    if len(edges) == 0:
        return np.zeros(0)
    us = np.fromiter((e[0] for e in edges), dtype=np.int64, count=len(edges))
    vs = np.fromiter((e[1] for e in edges), dtype=np.int64, count=len(edges))
    return np.clip(expit(_logits(params, us, vs)), _SCORE_EPS, 1.0 - _SCORE_EPS)


def score_edge(params: ModelParams, u: int, v: int) -> float:
    return float(score_edges(params, [(u, v)])[0])


def predict_signs(params: ModelParams, edges: Sequence[Edge],
                  threshold: float = 0.5) -> np.ndarray:
    s = score_edges(params, edges)
    return np.where(s >= threshold, 1, -1).astype(np.int64)


# -- losses ---------------------------------------------------------------------

@dataclass
class LossValue:
    """Scalar loss, optional per-sample values, gradient with ModelParams shape."""
    value: float
    per_sample: np.ndarray | None
    gradient: Gradient


class SignLossValue(LossValue):
    """Sign loss with the per-sample gradient structure exposed.

    A sample's gradient touches only psi and the two embedding rows of its
    edge, so per-sample gradients and their inner products against a full
    batch gradient are formed without materializing anything dense.
    """

    def __init__(self, value: float, per_sample: np.ndarray, gradient: Gradient,
                 coeff: np.ndarray, us: np.ndarray, vs: np.ndarray,
                 params: ModelParams):
        super().__init__(value, per_sample, gradient)
        self._coeff = coeff  # unweighted dL_i/da_i
        self._us = us
        self._vs = vs
        self._params = params

    def per_sample_grad(self, i: int) -> Gradient:
        """Unweighted gradient of sample i alone."""
        p = self._params
        d = p.dim
        g = Gradient(np.zeros_like(p.embeddings), np.zeros_like(p.scorer))
        c = self._coeff[i]
        u, v = self._us[i], self._vs[i]
        g.scorer[:d] = c * p.embeddings[u]
        g.scorer[d:] = c * p.embeddings[v]
        g.embeddings[u] += c * p.scorer[:d]
        g.embeddings[v] += c * p.scorer[d:]
        return g

    def per_sample_dot(self, other: Gradient) -> np.ndarray:
        """<g_i, other> for every sample i, via the sparse structure."""
        p = self._params
        d = p.dim
        z_u = p.embeddings[self._us]
        z_v = p.embeddings[self._vs]
        term = (z_u @ other.scorer[:d] + z_v @ other.scorer[d:]
                + other.embeddings[self._us] @ p.scorer[:d]
                + other.embeddings[self._vs] @ p.scorer[d:])
        return self._coeff * term


def _clamped_bce(a: np.ndarray, t: np.ndarray):
    """Per-sample clamped BCE and its exact derivative wrt the logit.

    log s and log(1-s) are evaluated in log-sum-exp form and clamped at
    LOG_CLAMP; the derivative is zeroed wherever the clamp is active so the
    analytic gradient matches the clamped objective.
    """
    log_s = -np.logaddexp(0.0, -a)      # log sigmoid(a)
    log_1ms = -np.logaddexp(0.0, a)
    act_s = log_s > LOG_CLAMP
    act_1ms = log_1ms > LOG_CLAMP
    loss = -t * np.maximum(log_s, LOG_CLAMP) - (1 - t) * np.maximum(log_1ms, LOG_CLAMP)
    s = expit(a)
    dloss_da = -t * (1.0 - s) * act_s + (1 - t) * s * act_1ms
    return loss, dloss_da


def sign_loss_arrays(params: ModelParams, us: np.ndarray, vs: np.ndarray,
                     signs: np.ndarray, weights: np.ndarray) -> SignLossValue:
    """Weighted clamped binary cross-entropy over edge signs.

    value = sum_i w_i * BCE(s_i, t_i) with targets t = (sign+1)/2; per-sample
    losses are exposed unweighted.
    """
    us = np.asarray(us, dtype=np.int64)
    vs = np.asarray(vs, dtype=np.int64)
    t = (np.asarray(signs, dtype=float) + 1.0) / 2.0
    w = np.asarray(weights, dtype=float)
    if not (len(us) == len(vs) == len(t) == len(w)):
        raise ValueError("batch arrays must have equal length")
    d = params.dim
    a = _logits(params, us, vs)
    per_sample, dloss_da = _clamped_bce(a, t)
    value = float(np.dot(w, per_sample))

    cw = w * dloss_da
    grad = Gradient.zeros_like(params)
    z_u = params.embeddings[us]
    z_v = params.embeddings[vs]
    grad.scorer[:d] = cw @ z_u
    grad.scorer[d:] = cw @ z_v
    np.add.at(grad.embeddings, us, cw[:, None] * params.scorer[None, :d])
    np.add.at(grad.embeddings, vs, cw[:, None] * params.scorer[None, d:])
    return SignLossValue(value, per_sample, grad, dloss_da, us, vs, params)


def sign_loss(params: ModelParams, samples: Sequence[EdgeSample]) -> SignLossValue:
    """Sign loss over EdgeSamples, weighted by each sample's weight field."""
    us = np.array([s.edge[0] for s in samples], dtype=np.int64)
    vs = np.array([s.edge[1] for s in samples], dtype=np.int64)
    signs = np.array([s.sign for s in samples], dtype=np.int64)
    weights = np.array([s.weight for s in samples], dtype=float)
    return sign_loss_arrays(params, us, vs, signs, weights)


def task_loss(params: ModelParams, labeled_edges: Sequence[SignedEdge]) -> LossValue:
    """Signed-proximity loss: mean over edges of -log sigmoid(sign * z_u.z_v).

    Pulls positively linked embeddings together and pushes negative ones
    apart. Pluggable: trainers accept any callable with this signature, so an
    alternative encoder can substitute its own task loss. Empty input gives 0.
    """
    if len(labeled_edges) == 0:
        return LossValue(0.0, np.zeros(0), Gradient.zeros_like(params))
    us = np.array([e[0] for e in labeled_edges], dtype=np.int64)
    vs = np.array([e[1] for e in labeled_edges], dtype=np.int64)
    y = np.array([e[2] for e in labeled_edges], dtype=float)
    z = params.embeddings
    q = np.einsum("ij,ij->i", z[us], z[vs])
    margin = y * q
    log_sig = -np.logaddexp(0.0, -margin)
    active = log_sig > LOG_CLAMP
    per_sample = -np.maximum(log_sig, LOG_CLAMP)
    m = len(labeled_edges)
    value = float(per_sample.mean())

    dmargin = -(1.0 - expit(margin)) * active / m
    dq = dmargin * y
    grad = Gradient.zeros_like(params)
    np.add.at(grad.embeddings, us, dq[:, None] * z[vs])
    np.add.at(grad.embeddings, vs, dq[:, None] * z[us])
    return LossValue(value, per_sample, grad)


def grad(loss_kind: str, params: ModelParams, samples) -> Gradient:
    """Gradient of a loss by name; 'sign' takes EdgeSamples, 'task' signed edges."""
    if loss_kind == "sign":
        return sign_loss(params, samples).gradient
    if loss_kind == "task":
        return task_loss(params, samples).gradient
    raise ValueError(f"unknown loss kind {loss_kind!r}")


# -- spectral node features ------------------------------------------------------

def spectral_features(g: SignedDigraph, d: int, seed: int,
                      n_iter: int = 50) -> np.ndarray:
    """Top-d left singular vectors of the unsigned adjacency matrix.

    Randomized subspace iteration with a seeded Gaussian start and a fixed
    iteration count; columns come out orthonormal, each flipped so its
    largest-magnitude entry is positive.
    """
    n = g.num_nodes
    if d > n:
        raise ValueError(f"feature dimension {d} exceeds node count {n}")
    if d == 0:
        return np.zeros((n, 0))
    edges = sorted((u, v) for (u, v) in
                   g.pos_edges | g.neg_edges | g.unlabeled_edges)
    if not edges:
        return np.zeros((n, d))
    rows, cols = zip(*edges)
    a = sparse.csr_matrix((np.ones(len(edges)), (rows, cols)), shape=(n, n))

    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, d))
    q, _ = qr(a @ q, mode="economic")
    for _ in range(n_iter):
        q, _ = qr(a.T @ q, mode="economic")
        q, _ = qr(a @ q, mode="economic")
    b = np.asarray((a.T @ q).T)  # == q.T @ a, kept sparse-friendly
    u_small, _, _ = svd(b, full_matrices=False)
    u = q @ u_small[:, :d]
    for j in range(u.shape[1]):
        i = int(np.argmax(np.abs(u[:, j])))
        if u[i, j] < 0:
            u[:, j] = -u[:, j]
    return u
