"""Splitting sequences, their carrying matrices and the splitting graph.

Two graphs are built from a seed track:

* ``build_graph`` explores numbered tracks breadth first to a fixed depth;
  node identity is the numbered canonical form.
* ``build_quotient`` explores tracks up to renumbering.  The quotient is
  finite for the fixtures and every edge records the renumbering that maps the
  split outcome onto the stored representative.  The numbered graph is the
  permutation cover of the quotient, which is how numbered first-return loops
  are enumerated (``first_return_loops``).
"""
from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import measurecone as mc
from . import tracknet as tn
from .tracknet import TrainTrack


class SplitFlowError(ValueError):
    pass


class InadmissibleStep(SplitFlowError):
    pass


class DepthZero(SplitFlowError):
    pass


class NotPositive(SplitFlowError):
    pass


# ----------------------------------------------------------------- sequences
@dataclass
class SplitSequence:
    start: TrainTrack
    choices: list[dict[int, str]] = field(default_factory=list)
    tracks: list[TrainTrack] = field(init=False)
    step_matrices: list[np.ndarray] = field(init=False)
    admissible: list[bool] = field(init=False)

    def __post_init__(self):
        self.tracks = [self.start]
        self.step_matrices = []
        self.admissible = []
        cur = self.start
        for ch in self.choices:
            nxt, E = tn.full_numbered_split(cur, ch)
            self.tracks.append(nxt)
            self.step_matrices.append(E)
            self.admissible.append(mc.is_recurrent(nxt))
            cur = nxt

    @property
    def end(self) -> TrainTrack:
        return self.tracks[-1]

    def __len__(self) -> int:
        return len(self.choices)

    def prefix(self, n: int) -> "SplitSequence":
        return SplitSequence(self.start, list(self.choices[:n]))

    def extend(self, other: "SplitSequence") -> "SplitSequence":
        if tn.canonical_form(other.start) != tn.canonical_form(self.end):
            raise InadmissibleStep("sequences do not concatenate")
        return SplitSequence(self.start, self.choices + other.choices)

    @classmethod
    def from_labels(cls, start: TrainTrack, labels: Sequence[str]) -> "SplitSequence":
        """Build from per-step strings of ``L``/``R`` letters, one per large
        branch in ascending number order."""
        choices, cur = [], start
        for lab in labels:
            large = tn.large_branches(cur)
            if len(lab) != len(large):
                raise InadmissibleStep(f"label {lab!r} does not match {len(large)} large branches")
            ch = {e: (tn.RIGHT if c == "R" else tn.LEFT) for e, c in zip(large, lab)}
            choices.append(ch)
            cur, _ = tn.full_numbered_split(cur, ch)
        return cls(start, choices)


def carrying_matrix(seq: SplitSequence) -> np.ndarray:
    """Composed matrix ``M`` with ``mu_start = M @ mu_end``."""
    if not all(seq.admissible):
        bad = seq.admissible.index(False)
        raise InadmissibleStep(f"step {bad} leaves the recurrent tracks")
    M = np.eye(seq.start.num_branches, dtype=object)
    for E in seq.step_matrices:
        M = M.dot(E.astype(object))
    return M


def positive_on_vertex_cycles(M: np.ndarray, end: TrainTrack) -> bool:
    R = np.array(mc.extreme_rays(end.switch_matrix), dtype=object).T
    return bool(np.all(M.dot(R) > 0))


def maps_cone_into(E: np.ndarray, target: TrainTrack, source: TrainTrack) -> bool:
    """Exact test that ``E`` sends every vertex cycle of ``target`` to a
    transverse measure on ``source``."""
    A = source.switch_matrix.astype(object)
    Eo = np.asarray(E, dtype=object)
    for r in mc.extreme_rays(target.switch_matrix):
        img = Eo.dot(np.array(r, dtype=object))
        if any(x < 0 for x in img) or any(x != 0 for x in A.dot(img)):
            return False
    return True


# ------------------------------------------------------------ numbered graph
@dataclass(frozen=True)
class Edge:
    source: str
    label: str
    target: str
    matrix: tuple  # row-major integers


@dataclass
class SplittingGraph:
    seed: str
    depth: int
    nodes: dict[str, TrainTrack]
    order: list[str]
    edges: list[Edge]
    dead: set[str]

    def out_edges(self, key: str) -> list[Edge]:
        return [e for e in self.edges if e.source == key]

    def to_json(self) -> str:
        h = {k: hashlib.sha256(k.encode()).hexdigest()[:16] for k in self.order}
        doc = {
            "seed": h[self.seed],
            "depth": self.depth,
            "nodes": [{"hash": h[k], "track": self.nodes[k].dumps(), "dead": k in self.dead}
                      for k in self.order],
            "edges": [{"source": h[e.source], "choice": e.label, "target": h[e.target],
                       "matrix": list(e.matrix)} for e in self.edges],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SplittingGraph":
        doc = json.loads(text)
        nodes, order, by_hash, dead = {}, [], {}, set()
        for rec in doc["nodes"]:
            t = tn.loads(rec["track"])
            k = tn.canonical_form(t)
            nodes[k] = t
            order.append(k)
            by_hash[rec["hash"]] = k
            if rec["dead"]:
                dead.add(k)
        edges = [Edge(by_hash[e["source"]], e["choice"], by_hash[e["target"]], tuple(e["matrix"]))
                 for e in doc["edges"]]
        return cls(by_hash[doc["seed"]], doc["depth"], nodes, order, edges, dead)


def build_graph(seed: TrainTrack, depth: int) -> SplittingGraph:
    """Breadth-first exploration of full numbered splits up to ``depth``.

    Non-recurrent outcomes are kept as dead nodes without outgoing edges.
    ``depth == 0`` yields the single seed node; negative depth is an error.
    """
    if depth < 0:
        raise DepthZero("depth must be nonnegative")
    k0 = tn.canonical_form(seed)
    nodes = {k0: seed}
    order = [k0]
    edges: list[Edge] = []
    dead: set[str] = set()
    frontier = [k0]
    for _ in range(depth):
        nxt = []
        for k in frontier:
            if k in dead:
                continue
            t = nodes[k]
            for ch in tn.all_choices(t):
                new, E = tn.full_numbered_split(t, ch)
                kk = tn.canonical_form(new)
                if kk not in nodes:
                    nodes[kk] = new
                    order.append(kk)
                    if not mc.is_recurrent(new):
                        dead.add(kk)
                    nxt.append(kk)
                edges.append(Edge(k, tn.choice_label(t, ch), kk, tuple(int(x) for x in E.ravel())))
        frontier = nxt
    return SplittingGraph(k0, depth, nodes, order, edges, dead)


def edge_matrix(edge: Edge) -> np.ndarray:
    p = int(round(len(edge.matrix) ** 0.5))
    return np.array(edge.matrix, dtype=np.int64).reshape(p, p)


# ------------------------------------------------------------ quotient graph
@dataclass
class QuotientEdge:
    label: str
    target: str
    perm: tuple  # perm[n-1] = representative number of split-outcome number n
    matrix: np.ndarray  # in representative numbering of source and outcome


@dataclass
class QuotientGraph:
    base: str
    reps: dict[str, TrainTrack]
    edges: dict[str, list[QuotientEdge]]

    @property
    def num_edges(self) -> int:
        return sum(len(v) for v in self.edges.values())


def build_quotient(seed: TrainTrack, max_nodes: int = 5000) -> tuple[QuotientGraph, dict[int, int]]:
    """Explore recurrent full numbered splits up to renumbering.

    Returns the graph and the renumbering taking the seed onto its
    representative.
    """
    k0, p0 = tn.unnumbered_form(seed)
    reps = {k0: tn.relabel_numbers(seed, p0)}
    edges: dict[str, list[QuotientEdge]] = {}
    todo = deque([k0])
    while todo:
        k = todo.popleft()
        rep = reps[k]
        out = []
        for ch in tn.all_choices(rep):
            new, E = tn.full_numbered_split(rep, ch)
            if not mc.is_recurrent(new):
                continue
            kk, q = tn.unnumbered_form(new)
            if kk not in reps:
                if len(reps) >= max_nodes:
                    raise SplitFlowError("quotient graph exceeds node budget")
                reps[kk] = tn.relabel_numbers(new, q)
                todo.append(kk)
            perm = tuple(q[n] for n in range(1, rep.num_branches + 1))
            out.append(QuotientEdge(tn.choice_label(rep, ch), kk, perm, E))
        edges[k] = out
    return QuotientGraph(k0, reps, edges), p0


def reroot(graph: QuotientGraph, key: str) -> QuotientGraph:
    return QuotientGraph(key, graph.reps, graph.edges)


@dataclass(frozen=True)
class Path:
    """A numbered path from the base representative.

    ``labels`` are choice labels in representative numbering; ``matrix`` is
    the composed carrying matrix in base numbering, and ``end`` with ``perm``
    locate the endpoint on the cover (``perm[n-1]`` is the representative
    number of the branch with base-transported number ``n``).
    """
    labels: tuple
    end: str
    perm: tuple
    matrix: np.ndarray = field(compare=False, hash=False, repr=False)

    def __len__(self) -> int:
        return len(self.labels)


def _conj(E: np.ndarray, g: tuple) -> np.ndarray:
    idx = [x - 1 for x in g]
    return E[np.ix_(idx, idx)]


def walk(graph: QuotientGraph, labels: Sequence[str], start: str | None = None,
         perm: tuple | None = None) -> Path:
    k = graph.base if start is None else start
    p = graph.reps[k].num_branches
    g = tuple(range(1, p + 1)) if perm is None else perm
    M = np.eye(p, dtype=object)
    for lab in labels:
        e = next((e for e in graph.edges[k] if e.label == lab), None)
        if e is None:
            raise InadmissibleStep(f"no recurrent edge {lab!r}")
        M = M.dot(_conj(e.matrix, g).astype(object))
        g = tuple(e.perm[x - 1] for x in g)
        k = e.target
    return Path(tuple(labels), k, g, M)


def first_return_loops(graph: QuotientGraph, max_len: int) -> list[Path]:
    """Numbered first-return loops at the base, by depth-first search on the
    permutation cover.  Ordered by (length, labels)."""
    k0 = graph.base
    p = graph.reps[k0].num_branches
    g0 = tuple(range(1, p + 1))
    found: list[tuple] = []

    def dfs(k, g, labels):
        if len(labels) >= max_len:
            return
        for e in graph.edges[k]:
            g2 = tuple(e.perm[x - 1] for x in g)
            if e.target == k0 and g2 == g0:
                found.append(labels + (e.label,))
            else:
                dfs(e.target, g2, labels + (e.label,))

    dfs(k0, g0, ())
    found.sort(key=lambda labs: (len(labs), labs))
    return [walk(graph, labs) for labs in found]


def to_sequence(graph: QuotientGraph, path: Path) -> SplitSequence:
    """Realize a path as explicit splits of the base representative."""
    base = graph.reps[graph.base]
    k, g = graph.base, tuple(range(1, base.num_branches + 1))
    choices, cur = [], base
    for lab in path.labels:
        e = next(e for e in graph.edges[k] if e.label == lab)
        rep = graph.reps[k]
        rep_large = tn.large_branches(rep)
        rep_dir = {rep.branch(b).number: (tn.RIGHT if c == "R" else tn.LEFT)
                   for b, c in zip(rep_large, lab)}
        inv = {r: n for n, r in enumerate(g, start=1)}
        ch = {cur.id_of_number[inv[r]]: d for r, d in rep_dir.items()}
        choices.append(ch)
        cur, _ = tn.full_numbered_split(cur, ch)
        g = tuple(e.perm[x - 1] for x in g)
        k = e.target
    return SplitSequence(base, choices)


# -------------------------------------------------------------- statistics
def sample_normalized(rays: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rows: Dirichlet(1) combinations of the columns of ``rays``, normalized."""
    w = rng.dirichlet(np.ones(rays.shape[1]), size=n)
    X = w @ rays.T
    return X / X.sum(axis=1, keepdims=True)


@dataclass
class ContractionReport:
    beta: float
    delta: float
    samples: int
    excluded: int


def contraction_stats(M: np.ndarray, end: TrainTrack, samples: int, rng_seed: int) -> ContractionReport:
    """Empirical constants of the cone contraction under ``M``.

    ``beta``: least branch-weight ratio of carried measures.
    ``delta``: least relative gain ``(a0' - a0) / (1 - a0)`` of the min-ratio
    statistic over sampled positive pairs.
    """
    if not positive_on_vertex_cycles(M, end):
        raise NotPositive("composed matrix is not positive on vertex cycles")
    R = mc.vertex_cycle_matrix(end)
    rng = np.random.default_rng(rng_seed)
    mu = sample_normalized(R, samples, rng)
    nu = sample_normalized(R, samples, rng)
    return contraction_from_pairs(M, mu, nu)


def contraction_from_pairs(M: np.ndarray, mu: np.ndarray, nu: np.ndarray) -> ContractionReport:
    """``contraction_stats`` on given rows of normalized measures; pairs with
    ``a0 = 1`` (equal measures) are excluded from the ``delta`` minimum."""
    Mf = np.asarray(M, dtype=float)
    a0 = mc.min_ratio_rows(mu, nu)
    mu0 = normalize_rows(mu @ Mf.T)
    nu0 = normalize_rows(nu @ Mf.T)
    a1 = mc.min_ratio_rows(mu0, nu0)
    keep = a0 < 1.0 - 1e-12
    delta = float(np.min((a1[keep] - a0[keep]) / (1.0 - a0[keep]))) if keep.any() else math.nan
    beta = float(min(np.min(mu0.min(axis=1) / mu0.max(axis=1)), np.min(nu0.min(axis=1) / nu0.max(axis=1))))
    return ContractionReport(beta, delta, len(mu), int((~keep).sum()))


def normalize_rows(X: np.ndarray) -> np.ndarray:
    return X / X.sum(axis=1, keepdims=True)


def nested_diameter(matrices: Sequence[np.ndarray], ends: Sequence[TrainTrack]) -> list[float]:
    """Finsler diameter of the normalized image cone for each prefix.

    ``matrices[i]`` is the composed matrix of the prefix of length ``i`` and
    ``ends[i]`` its terminal track.  The diameter is the largest Finsler norm
    of differences of normalized images of vertex cycles, measured at the
    barycenter of the full normalized cone of the start track.
    """
    R0 = mc.vertex_cycle_matrix(ends[0])
    base = (R0 / R0.sum(axis=0)).mean(axis=1)
    out = []
    for M, end in zip(matrices, ends):
        R = np.array(mc.extreme_rays(end.switch_matrix), dtype=object).T
        img = np.asarray(M, dtype=object).dot(R)
        tot = img.sum(axis=0)
        pts = [[Fraction(int(img[i, j]), int(tot[j])) for i in range(img.shape[0])] for j in range(img.shape[1])]
        d = 0.0
        for a in range(len(pts)):
            for b in range(a + 1, len(pts)):
                # exact differences keep the relative accuracy of tiny diameters
                d = max(d, max(float(abs(x - y)) / w for x, y, w in zip(pts[a], pts[b], base)))
        out.append(d)
    return out


def prefix_matrices(seq: SplitSequence) -> list[np.ndarray]:
    M = np.eye(seq.start.num_branches, dtype=object)
    out = [M]
    for E in seq.step_matrices:
        M = M.dot(E.astype(object))
        out.append(M)
    return out


def least_positive_prefix(seq: SplitSequence) -> int | None:
    """Least ``k`` whose prefix matrix is positive on the vertex cycles of the
    ``k``-th track."""
    for k, M in enumerate(prefix_matrices(seq)):
        if k and positive_on_vertex_cycles(M, seq.tracks[k]):
            return k
    return None
