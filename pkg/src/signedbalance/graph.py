"""Signed directed graphs: construction, ingestion, splitting, and noise injection.

The central type is :class:`SignedDigraph`, an immutable directed graph whose
edges are partitioned into positive, negative, and unlabeled sets. Everything
downstream (balance statistics, pseudo-labeling, training) consumes it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np

POS = 1
NEG = -1
UNLABELED = 0

Edge = tuple[int, int]
SignedEdge = tuple[int, int, int]


class ParseError(ValueError):
    """Malformed edge-list record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class GraphError(ValueError):
    """Violation of a SignedDigraph structural invariant."""


def _check_edges(name: str, edges: frozenset[Edge], num_nodes: int) -> None:
    for u, v in edges:
        if u == v:
            raise GraphError(f"{name}: self-loop ({u},{v})")
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise GraphError(f"{name}: endpoint out of range ({u},{v}), n={num_nodes}")


class SignedDigraph:
    """Immutable directed graph with disjoint positive/negative/unlabeled edge sets.

    Nodes are dense integers ``0..num_nodes-1``. At most one edge per ordered
    pair, no self-loops. Adjacency indexes are built once at construction and
    shared freely across threads.
    """

    __slots__ = ("num_nodes", "pos_edges", "neg_edges", "unlabeled_edges",
                 "_sign", "_out", "_in")

    def __init__(self, num_nodes: int,
                 pos_edges: Iterable[Edge] = (),
                 neg_edges: Iterable[Edge] = (),
                 unlabeled_edges: Iterable[Edge] = ()):
        pos = frozenset((int(u), int(v)) for u, v in pos_edges)
        neg = frozenset((int(u), int(v)) for u, v in neg_edges)
        unl = frozenset((int(u), int(v)) for u, v in unlabeled_edges)
        if pos & neg or pos & unl or neg & unl:
            raise GraphError("edge sets are not pairwise disjoint")
        _check_edges("pos_edges", pos, num_nodes)
        _check_edges("neg_edges", neg, num_nodes)
        _check_edges("unlabeled_edges", unl, num_nodes)

        self.num_nodes = int(num_nodes)
        self.pos_edges = pos
        self.neg_edges = neg
        self.unlabeled_edges = unl

        sign: dict[Edge, int] = {}
        out: list[list[int]] = [[] for _ in range(self.num_nodes)]
        inn: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for s, edges in ((POS, pos), (NEG, neg), (UNLABELED, unl)):
            for u, v in edges:
                sign[(u, v)] = s
                out[u].append(v)
                inn[v].append(u)
        self._sign = sign
        self._out = tuple(tuple(sorted(nbrs)) for nbrs in out)
        self._in = tuple(tuple(sorted(nbrs)) for nbrs in inn)

    # -- queries ------------------------------------------------------------

    @property
    def num_edges(self) -> int:
        return len(self._sign)

    @property
    def labeled_edges(self) -> frozenset[Edge]:
        return self.pos_edges | self.neg_edges

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._sign

    def sign(self, u: int, v: int) -> int:
        """Sign of edge (u, v): +1, -1, or 0 for unlabeled."""
        return self._sign[(u, v)]

    def out_neighbors(self, u: int) -> tuple[int, ...]:
        return self._out[u]

    def in_neighbors(self, v: int) -> tuple[int, ...]:
        return self._in[v]

    def edges(self) -> Iterator[SignedEdge]:
        """All edges as (u, v, sign), sorted for determinism."""
        for (u, v), s in sorted(self._sign.items()):
            yield u, v, s

    def signed_degree_vectors(self) -> np.ndarray:
        """Per-node (out+, out-, in+, in-) counts, shape (n, 4)."""
        deg = np.zeros((self.num_nodes, 4), dtype=np.int64)
        for u, v in self.pos_edges:
            deg[u, 0] += 1
            deg[v, 2] += 1
        for u, v in self.neg_edges:
            deg[u, 1] += 1
            deg[v, 3] += 1
        return deg

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignedDigraph):
            return NotImplemented
        return (self.num_nodes == other.num_nodes
                and self.pos_edges == other.pos_edges
                and self.neg_edges == other.neg_edges
                and self.unlabeled_edges == other.unlabeled_edges)

    def __hash__(self) -> int:
        return hash((self.num_nodes, self.pos_edges, self.neg_edges,
                     self.unlabeled_edges))

    def __repr__(self) -> str:
        return (f"SignedDigraph(n={self.num_nodes}, pos={len(self.pos_edges)}, "
                f"neg={len(self.neg_edges)}, unlabeled={len(self.unlabeled_edges)})")


class UndirectedGraph:
    """Undirected weighted graph used for community detection.

    Supports self-loops (needed by Louvain aggregation); a self-loop of weight
    w contributes 2w to its node's degree, matching the modularity convention.
    """

    __slots__ = ("num_nodes", "adj", "degrees", "total_weight")

    def __init__(self, num_nodes: int, weighted_edges: dict[Edge, float]):
        self.num_nodes = int(num_nodes)
        adj: list[dict[int, float]] = [dict() for _ in range(self.num_nodes)]
        for (u, v), w in weighted_edges.items():
            if u == v:
                adj[u][u] = adj[u].get(u, 0.0) + w
            else:
                adj[u][v] = adj[u].get(v, 0.0) + w
                adj[v][u] = adj[v].get(u, 0.0) + w
        self.adj = adj
        degrees = np.zeros(self.num_nodes)
        for u in range(self.num_nodes):
            for v, w in adj[u].items():
                degrees[u] += 2.0 * w if u == v else w
        self.degrees = degrees
        self.total_weight = float(degrees.sum()) / 2.0

    @property
    def num_edges(self) -> int:
        loops = sum(1 for u in range(self.num_nodes) if u in self.adj[u])
        return (sum(len(a) for a in self.adj) + loops) // 2

    def neighbors(self, u: int) -> dict[int, float]:
        return self.adj[u]

    def weight(self, u: int, v: int) -> float:
        return self.adj[u].get(v, 0.0)


def unsigned_projection(g: SignedDigraph) -> UndirectedGraph:
    """Collapse a signed digraph to an undirected multiplicity-weighted graph.

    {u,v} is present iff any directed edge between u and v exists in any edge
    set; its weight is the number of such directed edges (1 or 2). Signs are
    discarded; unlabeled edges still contribute structure.
    """
    weights: dict[Edge, float] = {}
    for (u, v) in g._sign:
        key = (u, v) if u < v else (v, u)
        weights[key] = weights.get(key, 0.0) + 1.0
    return UndirectedGraph(g.num_nodes, weights)


# -- ingestion ---------------------------------------------------------------

@dataclass(frozen=True)
class EdgeListFormat:
    """How to interpret an edge-list stream.

    value_kind "rating" binarizes a numeric rating (sign of the value, zeros
    dropped); "sign" expects values in {-1, 0, +1} with 0 meaning unlabeled.
    delimiter None sniffs comma vs. whitespace from the first data line.
    """
    value_kind: str = "sign"
    delimiter: str | None = None
    has_header: bool = False
    comment: str = "#"

    def __post_init__(self):
        if self.value_kind not in ("sign", "rating"):
            raise ValueError(f"unknown value_kind {self.value_kind!r}")


@dataclass
class IngestResult:
    """Parsed graph plus the bookkeeping needed for the JSON sidecar."""
    graph: SignedDigraph
    id_map: list[str]                 # compact id -> original id
    records_read: int = 0
    duplicates: int = 0
    self_loops_dropped: int = 0
    zero_ratings_dropped: int = 0

    def sidecar(self) -> dict:
        g = self.graph
        return {
            "num_nodes": g.num_nodes,
            "num_pos": len(g.pos_edges),
            "num_neg": len(g.neg_edges),
            "num_unlabeled": len(g.unlabeled_edges),
            "records_read": self.records_read,
            "duplicates": self.duplicates,
            "self_loops_dropped": self.self_loops_dropped,
            "zero_ratings_dropped": self.zero_ratings_dropped,
            "id_map": self.id_map,
        }


def binarize_rating(r: int) -> int:
    """Map a nonzero rating to its sign; zero-rated records are dropped upstream."""
    if r == 0:
        raise ValueError("zero rating must be dropped upstream")
    return POS if r > 0 else NEG


def _open_source(source) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8")


def parse_edge_list(source, fmt: EdgeListFormat = EdgeListFormat()) -> IngestResult:
    """Parse a CSV or whitespace-separated edge list into a SignedDigraph.

    Records are ``src, dst, value[, timestamp]``. Node ids may be arbitrary
    strings and are compacted to 0..n-1 in order of first appearance (kept as
    is when they already form a dense 0..n-1 integer range, so the canonical
    format round-trips). Duplicate ordered pairs resolve last-record-wins;
    self-loops are dropped and counted.
    """
    fh = _open_source(source)
    ids: dict[str, int] = {}
    # ordered pair -> sign; insertion order records first appearance
    edges: dict[tuple[str, str], int] = {}
    result = IngestResult(graph=SignedDigraph(0), id_map=[])
    delimiter = fmt.delimiter
    skipped_header = not fmt.has_header

    for line_no, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line or line.startswith(fmt.comment):
            continue
        if not skipped_header:
            skipped_header = True
            continue
        if delimiter is None:
            delimiter = "," if "," in line else None
            if delimiter is None:
                delimiter = " "  # whitespace mode
        if delimiter == " ":
            parts = line.split()
        else:
            parts = next(csv.reader([line], delimiter=delimiter))
            parts = [p.strip() for p in parts]
        if len(parts) < 3:
            raise ParseError(line_no, f"expected at least 3 fields, got {len(parts)}")
        src, dst, value = parts[0], parts[1], parts[2]
        if not src or not dst:
            raise ParseError(line_no, "empty node id")
        try:
            val = float(value)
        except ValueError:
            raise ParseError(line_no, f"non-numeric value field {value!r}") from None
        result.records_read += 1

        if fmt.value_kind == "rating":
            if val == 0:
                result.zero_ratings_dropped += 1
                continue
            sign = POS if val > 0 else NEG
        else:
            if val not in (-1.0, 0.0, 1.0):
                raise ParseError(line_no, f"sign must be -1, 0, or +1, got {value!r}")
            sign = int(val)

        if src == dst:
            result.self_loops_dropped += 1
            continue
        if (src, dst) in edges:
            result.duplicates += 1
        edges[(src, dst)] = sign

    # register nodes from kept edges in first-appearance order
    for (src, dst) in edges:
        for tok in (src, dst):
            if tok not in ids:
                ids[tok] = len(ids)

    # already-dense integer ids are preserved verbatim (canonical round-trip)
    try:
        as_int = {tok: int(tok) for tok in ids}
        if (all(str(i) == t for t, i in as_int.items())
                and set(as_int.values()) == set(range(len(ids)))):
            ids = as_int
    except ValueError:
        pass

    pos, neg, unl = [], [], []
    for (src, dst), sign in edges.items():
        e = (ids[src], ids[dst])
        (pos if sign == POS else neg if sign == NEG else unl).append(e)

    id_map = [""] * len(ids)
    for tok, i in ids.items():
        id_map[i] = str(tok)
    result.graph = SignedDigraph(len(ids), pos, neg, unl)
    result.id_map = id_map
    return result


def write_canonical(g: SignedDigraph, target) -> None:
    """Write the canonical ``u v s`` text format, edges sorted, '#' header."""
    own = isinstance(target, (str, Path))
    fh = open(target, "w", encoding="utf-8") if own else target
    try:
        fh.write(f"# nodes={g.num_nodes} pos={len(g.pos_edges)} "
                 f"neg={len(g.neg_edges)} unlabeled={len(g.unlabeled_edges)}\n")
        for u, v, s in g.edges():
            fh.write(f"{u} {v} {s:+d}\n" if s else f"{u} {v} 0\n")
    finally:
        if own:
            fh.close()


def canonical_text(g: SignedDigraph) -> str:
    buf = io.StringIO()
    write_canonical(g, buf)
    return buf.getvalue()


# -- split protocol ----------------------------------------------------------

@dataclass(frozen=True)
class SplitDataset:
    """Seeded partition of a labeled graph into train/val/test material.

    ``train_labeled``, ``val`` and ``test`` carry (u, v, sign); the unlabeled
    pool carries bare pairs. ``hidden_signs`` retains the true signs of the
    unlabeled pool for labeling diagnostics only; trainers never read it.
    """
    num_nodes: int
    train_labeled: tuple[SignedEdge, ...]
    train_unlabeled: tuple[Edge, ...]
    val: tuple[SignedEdge, ...]
    test: tuple[SignedEdge, ...]
    seed: int
    hidden_signs: tuple[SignedEdge, ...] = ()

    @property
    def sizes(self) -> dict[str, int]:
        return {"train_labeled": len(self.train_labeled),
                "train_unlabeled": len(self.train_unlabeled),
                "val": len(self.val), "test": len(self.test)}

    def training_graph(self) -> SignedDigraph:
        """Graph visible to trainers: labeled train edges plus unlabeled structure."""
        return SignedDigraph(
            self.num_nodes,
            pos_edges=[(u, v) for u, v, s in self.train_labeled if s == POS],
            neg_edges=[(u, v) for u, v, s in self.train_labeled if s == NEG],
            unlabeled_edges=self.train_unlabeled,
        )

    def manifest(self, extra: dict | None = None) -> dict:
        m = {
            "seed": self.seed,
            "num_nodes": self.num_nodes,
            "sizes": self.sizes,
            "hidden_unlabeled_signs": [[u, v, s] for u, v, s in self.hidden_signs],
        }
        if extra:
            m.update(extra)
        return m


def split_dataset(g: SignedDigraph, seed: int,
                  val_frac: float = 0.05, test_frac: float = 0.05,
                  unlabeled_frac: float = 0.75) -> SplitDataset:
    """Partition the labeled edges of g per the evaluation protocol.

    floor(val_frac*|E|) validation and floor(test_frac*|E|) test edges are
    held out, then floor(unlabeled_frac * rest) edges lose their labels; the
    remainder is the labeled training set. Deterministic under seed.
    """
    if g.unlabeled_edges:
        raise GraphError("split_dataset expects a fully labeled graph")
    if not (0 <= val_frac < 1 and 0 <= test_frac < 1 and val_frac + test_frac < 1):
        raise ValueError("val_frac/test_frac must lie in [0,1) and sum below 1")
    if not 0 <= unlabeled_frac < 1:
        raise ValueError("unlabeled_frac must lie in [0,1)")
    all_edges = sorted(g.labeled_edges)
    m = len(all_edges)
    if m < 4:
        raise GraphError(f"need at least 4 labeled edges to split, got {m}")

    n_val = math.floor(val_frac * m)
    n_test = math.floor(test_frac * m)
    rest = m - n_val - n_test
    n_unlabeled = math.floor(unlabeled_frac * rest)

    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    sgn = lambda e: g.sign(*e)
    val = tuple((u, v, sgn((u, v))) for u, v in
                (all_edges[i] for i in order[:n_val]))
    test = tuple((u, v, sgn((u, v))) for u, v in
                 (all_edges[i] for i in order[n_val:n_val + n_test]))
    unl_pairs = tuple(all_edges[i] for i in order[n_val + n_test:n_val + n_test + n_unlabeled])
    lab = tuple((u, v, sgn((u, v))) for u, v in
                (all_edges[i] for i in order[n_val + n_test + n_unlabeled:]))
    hidden = tuple((u, v, sgn((u, v))) for u, v in unl_pairs)
    return SplitDataset(g.num_nodes, lab, unl_pairs, val, test, seed,
                        hidden_signs=hidden)


@dataclass(frozen=True)
class NoiseSpec:
    """Symmetric label-flip noise on the labeled training set."""
    flip_fraction: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.flip_fraction <= 1.0:
            raise ValueError("flip_fraction must lie in [0,1]")


def inject_noise(split: SplitDataset, spec: NoiseSpec) -> SplitDataset:
    """Negate exactly round(p*|train_labeled|) training labels; val/test untouched."""
    labeled = list(split.train_labeled)
    n_flip = int(round(spec.flip_fraction * len(labeled)))
    rng = np.random.default_rng(spec.seed)
    flip_idx = set(rng.choice(len(labeled), size=n_flip, replace=False).tolist()) \
        if n_flip else set()
    flipped = tuple((u, v, -s) if i in flip_idx else (u, v, s)
                    for i, (u, v, s) in enumerate(labeled))
    return SplitDataset(split.num_nodes, flipped, split.train_unlabeled,
                        split.val, split.test, split.seed,
                        hidden_signs=split.hidden_signs)


def flip_digest(original: SplitDataset, noisy: SplitDataset) -> str:
    """SHA-256 over the sorted list of flipped edges, for the split manifest."""
    flips = sorted((u, v) for (u, v, s), (_, _, s2)
                   in zip(original.train_labeled, noisy.train_labeled) if s != s2)
    payload = json.dumps(flips).encode()
    return hashlib.sha256(payload).hexdigest()


# -- split (de)serialization --------------------------------------------------

def write_split(split: SplitDataset, out_dir, manifest_extra: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    def dump(name: str, rows: Sequence[tuple]) -> None:
        with open(out / name, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(" ".join(str(x) for x in row) + "\n")
    dump("train_labeled.edges", split.train_labeled)
    dump("train_unlabeled.edges", split.train_unlabeled)
    dump("val.edges", split.val)
    dump("test.edges", split.test)
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(split.manifest(manifest_extra), fh, indent=2, sort_keys=True)


def read_split(in_dir) -> SplitDataset:
    src = Path(in_dir)
    def load(name: str, signed: bool):
        rows = []
        for line in (src / name).read_text().splitlines():
            parts = line.split()
            if not parts:
                continue
            rows.append(tuple(int(x) for x in parts[:3 if signed else 2]))
        return tuple(rows)
    with open(src / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return SplitDataset(
        num_nodes=manifest["num_nodes"],
        train_labeled=load("train_labeled.edges", True),
        train_unlabeled=load("train_unlabeled.edges", False),
        val=load("val.edges", True),
        test=load("test.edges", True),
        seed=manifest["seed"],
        hidden_signs=tuple((u, v, s) for u, v, s
                           in manifest.get("hidden_unlabeled_signs", [])),
    )
