"""Transitive-triad machinery: balance labeling, census, and the null model.

A transitive triad is an ordered node triple (u, v, w) whose directed edges
(u,v), (v,w), (u,w) all exist. Microscale balance implies the sign of a triad's
single unlabeled edge from the product rule; mesoscale balance reads signs off
community boundaries. The degree-preserving null model rewires same-signed
edge pairs to calibrate how surprising the observed balance statistics are.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy import sparse

from .community import Partition
from .graph import Edge, NEG, POS, SignedDigraph, UNLABELED


class Provenance(enum.Enum):
    CLEAN = "Clean"
    MICRO_SB = "MicroSB"
    MESO_SB = "MesoSB"


@dataclass(frozen=True)
class EdgeSample:
    """A single training unit: an edge, its (pseudo-)sign, where it came from."""
    edge: Edge
    sign: int
    provenance: Provenance
    weight: float = 1.0

    def __post_init__(self):
        if self.sign not in (POS, NEG):
            raise ValueError(f"sample sign must be +1 or -1, got {self.sign}")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("sample weight must lie in [0,1]")
        if self.provenance is Provenance.CLEAN and self.weight != 1.0:
            raise ValueError("clean samples carry weight 1 by definition")


@dataclass(frozen=True)
class TransitiveTriad:
    nodes: tuple[int, int, int]
    signs: tuple[int, int, int]  # signs of (u,v), (v,w), (u,w); 0 = unlabeled

    @property
    def edges(self) -> tuple[Edge, Edge, Edge]:
        u, v, w = self.nodes
        return (u, v), (v, w), (u, w)

    @property
    def num_unlabeled(self) -> int:
        return sum(1 for s in self.signs if s == UNLABELED)

    @property
    def is_fully_signed(self) -> bool:
        return self.num_unlabeled == 0

    @property
    def pattern(self) -> str:
        if not self.is_fully_signed:
            raise ValueError("pattern undefined for partially labeled triads")
        return "".join("+" if s == POS else "-" for s in self.signs)


ALL_PATTERNS = tuple(
    "".join(p) for p in
    (("+", "+", "+"), ("+", "+", "-"), ("+", "-", "+"), ("+", "-", "-"),
     ("-", "+", "+"), ("-", "+", "-"), ("-", "-", "+"), ("-", "-", "-")))
BALANCED_PATTERNS = ("+++", "+--", "-+-", "--+")


def enumerate_transitive_triads(g: SignedDigraph) -> Iterator[TransitiveTriad]:
    """Yield every transitive triad exactly once, in deterministic order.

    Wedge-then-check over middle nodes: O(sum_v d_in(v) * d_out(v)) wedge
    candidates, each closed by an edge lookup.
    """
    for v in range(g.num_nodes):
        in_nbrs = g.in_neighbors(v)
        out_nbrs = g.out_neighbors(v)
        if not in_nbrs or not out_nbrs:
            continue
        for u in in_nbrs:
            s_uv = g.sign(u, v)
            for w in out_nbrs:
                if u != w and g.has_edge(u, w):
                    yield TransitiveTriad(
                        (u, v, w), (s_uv, g.sign(v, w), g.sign(u, w)))


def micro_sb_label(g: SignedDigraph) -> list[EdgeSample]:
    """Pseudo-label unlabeled edges from triads with exactly one unlabeled edge.

    Each such triad implies the sign that makes the triad's product positive.
    Implications are aggregated per edge by majority vote; exact ties are
    excluded. Each surviving edge yields one MicroSB sample.
    """
    votes: dict[Edge, int] = {}
    for triad in enumerate_transitive_triads(g):
        signs = triad.signs
        if sum(1 for s in signs if s == UNLABELED) != 1:
            continue
        idx = signs.index(UNLABELED)
        implied = 1
        for j, s in enumerate(signs):
            if j != idx:
                implied *= s
        edge = triad.edges[idx]
        votes[edge] = votes.get(edge, 0) + implied
    samples = []
    for edge in sorted(votes):
        net = votes[edge]
        if net != 0:
            samples.append(EdgeSample(edge, POS if net > 0 else NEG,
                                      Provenance.MICRO_SB))
    return samples


def meso_sb_label(unlabeled_edges: Iterable[Edge], p: Partition) -> list[EdgeSample]:
    """Pseudo-label every unlabeled edge from community structure.

    Positive iff both endpoints share a community, negative across boundaries.
    """
    samples = []
    for u, v in sorted(unlabeled_edges):
        sign = POS if p.same_community(u, v) else NEG
        samples.append(EdgeSample((u, v), sign, Provenance.MESO_SB))
    return samples


def build_sb_set(micro: Sequence[EdgeSample], meso: Sequence[EdgeSample],
                 mode: str = "both") -> list[EdgeSample]:
    """Concatenate the two labeling scales, filtered by ablation mode.

    An edge labeled by both scales appears twice, possibly with conflicting
    signs; each occurrence is an independent sample with its own weight.
    """
    if mode == "both":
        return list(micro) + list(meso)
    if mode == "micro_only":
        return list(micro)
    if mode == "meso_only":
        return list(meso)
    raise ValueError(f"unknown sb mode {mode!r}")


# -- census -------------------------------------------------------------------

@dataclass
class CensusReport:
    """Sign-pattern counts of fully-signed transitive triads."""
    pattern_counts: dict[str, int]
    skipped_unsigned: int
    meso_consistent: int | None = None

    @property
    def total(self) -> int:
        return sum(self.pattern_counts.values())

    @property
    def balanced_count(self) -> int:
        return sum(self.pattern_counts[p] for p in BALANCED_PATTERNS)

    @property
    def balanced_fraction(self) -> float | None:
        return self.balanced_count / self.total if self.total else None

    def as_dict(self) -> dict:
        return {
            "pattern_counts": dict(self.pattern_counts),
            "total_fully_signed": self.total,
            "skipped_unsigned": self.skipped_unsigned,
            "balanced_count": self.balanced_count,
            "balanced_fraction": self.balanced_fraction,
            "meso_consistent": self.meso_consistent,
        }


def _sign_matrices(g: SignedDigraph):
    n = g.num_nodes
    def mat(edges: frozenset[Edge]) -> sparse.csr_matrix:
        if not edges:
            return sparse.csr_matrix((n, n), dtype=np.int64)
        rows, cols = zip(*edges)
        data = np.ones(len(edges), dtype=np.int64)
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    return mat(g.pos_edges), mat(g.neg_edges), mat(g.unlabeled_edges)


def triad_census(g: SignedDigraph, partition: Partition | None = None) -> CensusReport:
    """Count fully-signed transitive triads by ordered sign triple.

    Patterns are keyed by (sign(u,v), sign(v,w), sign(u,w)). Triads with any
    unlabeled edge are skipped and counted separately. Implemented with sparse
    matrix products; the explicit enumerator serves as its cross-check oracle.
    """
    p, n_, u_ = _sign_matrices(g)
    by_char = {"+": p, "-": n_}
    counts: dict[str, int] = {}
    for pat in ALL_PATTERNS:
        s1, s2, s3 = (by_char[c] for c in pat)
        paths = s1 @ s2
        counts[pat] = int(paths.multiply(s3).sum())
    b = p + n_ + u_
    total_transitive = int((b @ b).multiply(b).sum())
    skipped = total_transitive - sum(counts.values())
    meso = meso_consistency_count(g, partition) if partition is not None else None
    return CensusReport(counts, skipped, meso)


def meso_consistency_count(g: SignedDigraph, p: Partition) -> int:
    """Labeled edges that agree with mesoscale balance under partition p."""
    count = 0
    for u, v in g.pos_edges:
        if p.same_community(u, v):
            count += 1
    for u, v in g.neg_edges:
        if not p.same_community(u, v):
            count += 1
    return count


# -- degree-preserving null model ----------------------------------------------

@dataclass
class NullSample:
    """One randomized graph plus the swap-chain accounting."""
    graph: SignedDigraph
    attempted: int
    accepted: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempted if self.attempted else 0.0


def default_swap_budget(num_edges: int) -> int:
    return math.ceil(num_edges * math.log(num_edges)) if num_edges > 1 else 0


def null_model_sample(g: SignedDigraph, seed: int,
                      n_swaps: int | None = None) -> NullSample:
    """Rewire labeled edges while preserving signed in/out-degree sequences.

    Each proposal picks two distinct same-signed edges (a,b), (c,d) uniformly
    and rewires them to (a,d), (c,b), rejected on endpoint coincidence,
    self-loop, or if either proposed pair already exists in any edge set
    regardless of sign. The budget counts proposals, not acceptances.
    """
    pos = sorted(g.pos_edges)
    neg = sorted(g.neg_edges)
    n_labeled = len(pos) + len(neg)
    if n_swaps is None:
        n_swaps = default_swap_budget(n_labeled)
    existing = set(g.pos_edges) | set(g.neg_edges) | set(g.unlabeled_edges)
    pairs_pos = len(pos) * (len(pos) - 1)
    pairs_neg = len(neg) * (len(neg) - 1)
    if pairs_pos + pairs_neg == 0 or n_swaps == 0:
        return NullSample(g, 0, 0)

    rng = np.random.default_rng(seed)
    accepted = 0
    p_pos = pairs_pos / (pairs_pos + pairs_neg)
    for _ in range(n_swaps):
        lst = pos if rng.random() < p_pos else neg
        i = int(rng.integers(len(lst)))
        j = int(rng.integers(len(lst) - 1))
        if j >= i:
            j += 1
        a, b = lst[i]
        c, d = lst[j]
        if a == c or b == d or a == d or b == c:
            continue
        e1, e2 = (a, d), (c, b)
        if e1 in existing or e2 in existing:
            continue
        existing.discard((a, b))
        existing.discard((c, d))
        existing.add(e1)
        existing.add(e2)
        lst[i] = e1
        lst[j] = e2
        accepted += 1
    sample = SignedDigraph(g.num_nodes, pos, neg, g.unlabeled_edges)
    return NullSample(sample, n_swaps, accepted)


@dataclass
class ZScoreEntry:
    empirical: float
    null_mean: float
    null_std: float
    z: float | None  # None marks an undefined score (zero null variance)

    def as_dict(self) -> dict:
        return {"empirical": self.empirical, "null_mean": self.null_mean,
                "null_std": self.null_std, "z": self.z}


@dataclass
class ZScoreReport:
    patterns: dict[str, ZScoreEntry]
    meso: ZScoreEntry | None
    n_samples: int
    n_swaps: int
    mean_acceptance_rate: float

    def as_dict(self) -> dict:
        return {
            "patterns": {k: v.as_dict() for k, v in self.patterns.items()},
            "meso": self.meso.as_dict() if self.meso else None,
            "n_samples": self.n_samples,
            "n_swaps": self.n_swaps,
            "mean_acceptance_rate": self.mean_acceptance_rate,
        }


def _entry(empirical: float, draws: np.ndarray) -> ZScoreEntry:
    mean = float(draws.mean())
    std = float(draws.std(ddof=1)) if len(draws) > 1 else 0.0
    z = (empirical - mean) / std if std > 0 else None
    return ZScoreEntry(float(empirical), mean, std, z)


def zscore_report(g: SignedDigraph, n_samples: int = 50, seed: int = 0,
                  n_swaps: int | None = None,
                  partition: Partition | None = None) -> ZScoreReport:
    """Balance statistics of g against the degree-preserving null ensemble.

    Reports, per sign pattern and for the mesoscale-consistent edge count,
    z = (empirical - null mean) / null std over n_samples independent chains.
    The partition (Louvain on the unsigned projection when omitted) is held
    fixed across null draws; swaps change topology, not community structure.
    """
    if partition is None:
        from .community import louvain
        from .graph import unsigned_projection
        partition = louvain(unsigned_projection(g), seed=seed)
    if n_swaps is None:
        n_swaps = default_swap_budget(len(g.pos_edges) + len(g.neg_edges))

    empirical = triad_census(g, partition)
    sample_seeds = np.random.SeedSequence(seed).generate_state(n_samples)
    pattern_draws = {pat: np.zeros(n_samples) for pat in ALL_PATTERNS}
    meso_draws = np.zeros(n_samples)
    acceptance = np.zeros(n_samples)
    for k, s in enumerate(sample_seeds):
        sample = null_model_sample(g, int(s), n_swaps)
        census = triad_census(sample.graph)
        for pat in ALL_PATTERNS:
            pattern_draws[pat][k] = census.pattern_counts[pat]
        meso_draws[k] = meso_consistency_count(sample.graph, partition)
        acceptance[k] = sample.acceptance_rate

    patterns = {pat: _entry(empirical.pattern_counts[pat], pattern_draws[pat])
                for pat in ALL_PATTERNS}
    meso = _entry(empirical.meso_consistent, meso_draws) \
        if empirical.meso_consistent is not None else None
    return ZScoreReport(patterns, meso, n_samples, n_swaps,
                        float(acceptance.mean()))
