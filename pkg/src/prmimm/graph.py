"""Directed influence graphs with per-edge activation probabilities.

The graph is stored twice in CSR form: forward (out-edges) for cascade
simulation and reverse (in-edges) for reverse-reachable sampling. Both views
are built once and never mutated.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Malformed edge list or invalid graph contents."""


@dataclass(frozen=True, eq=False)
class InfluenceGraph:
    """Immutable directed graph G=(V, E, p) over dense node ids ``0..n-1``.

    ``src``, ``dst`` and ``prob`` hold the edge list in load order.
    ``prob`` is ``None`` until probabilities are assigned, either from the
    input file or by :func:`apply_weighted_cascade`.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    prob: np.ndarray | None = None
    labels: tuple = ()
    _csr: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.n)))
        for arr in (self.src, self.dst, self.prob):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.src.shape[0])

    @property
    def has_probabilities(self) -> bool:
        return self.prob is not None

    def _require_probs(self):
        if self.prob is None:
            raise GraphError(
                "edge probabilities are unset; load with a probability column "
                "or call apply_weighted_cascade first"
            )

    def _build(self, key):
        if key in self._csr:
            return self._csr[key]
        self._require_probs()
        if key == "fwd":
            head, tail = self.src, self.dst
        else:
            head, tail = self.dst, self.src
        order = np.argsort(head, kind="stable")
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(head, minlength=self.n), out=indptr[1:])
        csr = (
            indptr,
            np.ascontiguousarray(tail[order], dtype=np.int32),
            np.ascontiguousarray(self.prob[order], dtype=np.float64),
            order.astype(np.int64),
        )
        for arr in csr:
            arr.setflags(write=False)
        self._csr[key] = csr
        return csr

    def forward_csr(self):
        """``(indptr, targets, probs, edge_ids)`` grouped by source node."""
        return self._build("fwd")

    def reverse_csr(self):
        """``(indptr, sources, probs, edge_ids)`` grouped by target node."""
        return self._build("rev")

    def out_edges(self, u: int) -> list[tuple[int, float]]:
        indptr, tgt, p, _ = self.forward_csr()
        return [(int(tgt[e]), float(p[e])) for e in range(indptr[u], indptr[u + 1])]

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.dst, minlength=self.n)

    def out_degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n)

    def label_of(self, node: int):
        return self.labels[node]

    def id_of(self, label) -> int:
        lookup = self._csr.get("labels")
        if lookup is None:
            lookup = {str(lab): i for i, lab in enumerate(self.labels)}
            self._csr["labels"] = lookup
        try:
            return lookup[str(label)]
        except KeyError:
            raise GraphError(f"unknown node label {label!r}") from None

    def with_probabilities(self, prob) -> "InfluenceGraph":
        prob = np.asarray(prob, dtype=np.float64)
        _check_probs(prob)
        return InfluenceGraph(self.n, self.src, self.dst, prob.copy(), self.labels)


class ReverseView:
    """Read-only in-edge accessor: ``view[v]`` lists ``(u, p(u, v))``."""

    def __init__(self, graph: InfluenceGraph):
        self._indptr, self._src, self._prob, _ = graph.reverse_csr()
        self.n = graph.n

    def __getitem__(self, v: int) -> list[tuple[int, float]]:
        lo, hi = self._indptr[v], self._indptr[v + 1]
        return [(int(self._src[e]), float(self._prob[e])) for e in range(lo, hi)]

    def __len__(self):
        return self.n

    def edge_count(self) -> int:
        return int(self._indptr[-1])


def reverse_view(graph: InfluenceGraph) -> ReverseView:
    return ReverseView(graph)


def _check_probs(prob: np.ndarray):
    bad = ~((prob > 0.0) & (prob <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise GraphError(f"edge {i}: probability {prob[i]!r} outside (0, 1]")


def from_edges(
    edges: Iterable[Sequence],
    n: int | None = None,
    labels: Sequence | None = None,
) -> InfluenceGraph:
    """Build a graph from ``(u, v)`` or ``(u, v, p)`` tuples over dense ids.

    Probabilities must be given for all edges or for none.
    """
    edges = list(edges)
    if not edges:
        raise GraphError("graph has no edges")
    widths = {len(e) for e in edges}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise GraphError("edges must all be (u, v) or all be (u, v, p)")
    src = np.array([int(e[0]) for e in edges], dtype=np.int32)
    dst = np.array([int(e[1]) for e in edges], dtype=np.int32)
    prob = None
    if len(edges[0]) == 3:
        prob = np.array([float(e[2]) for e in edges], dtype=np.float64)
        _check_probs(prob)
    if n is None:
        n = int(max(src.max(), dst.max())) + 1
    if src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n:
        raise GraphError("edge endpoint outside [0, n)")
    _check_structure(src, dst, n)
    return InfluenceGraph(int(n), src, dst, prob, tuple(labels) if labels else ())


def empty_graph(n: int) -> InfluenceGraph:
    """Edgeless graph on ``n`` nodes (probabilities trivially assigned)."""
    z_i = np.zeros(0, dtype=np.int32)
    return InfluenceGraph(int(n), z_i, z_i.copy(), np.zeros(0, dtype=np.float64))


def _check_structure(src, dst, n, lines=None):
    loops = np.flatnonzero(src == dst)
    if loops.size:
        i = int(loops[0])
        where = f"line {lines[i]}" if lines else f"edge {i}"
        raise GraphError(f"{where}: self-loop on node {int(src[i])}")
    key = src.astype(np.int64) * n + dst
    uniq, counts = np.unique(key, return_counts=True)
    if (counts > 1).any():
        dup_key = int(uniq[np.flatnonzero(counts > 1)[0]])
        idx = np.flatnonzero(key == dup_key)
        where = f"line {lines[idx[1]]}" if lines else f"edge {int(idx[1])}"
        raise GraphError(f"{where}: duplicate edge ({int(src[idx[0]])}, {int(dst[idx[0]])})")


def load_edge_list(source, probability_column: bool = True) -> InfluenceGraph:
    """Parse whitespace-separated ``u v [p]`` lines into a graph.

    ``source`` is a path, an open text file, or the text itself. Labels are
    remapped to dense ids in first-appearance order; ``graph.labels`` keeps
    the originals. With ``probability_column=False`` lines must be ``u v``
    and probabilities stay unset.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source
                                    and Path(source).is_file()):
        text = Path(source).read_text(encoding="utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()

    ids: dict[str, int] = {}
    src, dst, prob, lines = [], [], [], []
    width = 3 if probability_column else 2
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != width:
            raise GraphError(
                f"line {lineno}: expected {width} fields, got {len(parts)}: {line!r}"
            )
        for lab in parts[:2]:
            if lab not in ids:
                ids[lab] = len(ids)
        src.append(ids[parts[0]])
        dst.append(ids[parts[1]])
        lines.append(lineno)
        if probability_column:
            try:
                p = float(parts[2])
            except ValueError:
                raise GraphError(f"line {lineno}: bad probability {parts[2]!r}") from None
            if not (0.0 < p <= 1.0):
                raise GraphError(f"line {lineno}: probability {p} outside (0, 1]")
            prob.append(p)
    if not src:
        raise GraphError("no edges in input")
    n = len(ids)
    src_a = np.array(src, dtype=np.int32)
    dst_a = np.array(dst, dtype=np.int32)
    _check_structure(src_a, dst_a, n, lines)
    labels = tuple(_natural_label(lab) for lab in ids)
    prob_a = np.array(prob, dtype=np.float64) if probability_column else None
    return InfluenceGraph(n, src_a, dst_a, prob_a, labels)


def _natural_label(lab: str):
    try:
        return int(lab)
    except ValueError:
        return lab


def apply_weighted_cascade(graph: InfluenceGraph) -> InfluenceGraph:
    """Assign p(u, v) = 1 / in-degree(v) to every edge."""
    indeg = graph.in_degree().astype(np.float64)
    prob = 1.0 / indeg[graph.dst]
    return InfluenceGraph(graph.n, graph.src, graph.dst, prob, graph.labels)


def to_edge_list(graph: InfluenceGraph) -> str:
    """Serialize using original labels; ``repr`` keeps float64 round-trips exact."""
    out = []
    for i in range(graph.m):
        u = graph.labels[graph.src[i]]
        v = graph.labels[graph.dst[i]]
        if graph.prob is None:
            out.append(f"{u} {v}")
        else:
            out.append(f"{u} {v} {float(graph.prob[i])!r}")
    return "\n".join(out) + "\n"


def write_label_map(graph: InfluenceGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("id,label\n")
        for i, lab in enumerate(graph.labels):
            fh.write(f"{i},{lab}\n")


def graphs_equal(a: InfluenceGraph, b: InfluenceGraph) -> bool:
    if a.n != b.n or a.labels != b.labels:
        return False
    if not (np.array_equal(a.src, b.src) and np.array_equal(a.dst, b.dst)):
        return False
    if (a.prob is None) != (b.prob is None):
        return False
    return a.prob is None or np.array_equal(a.prob, b.prob)
