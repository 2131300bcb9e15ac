"""Small named graphs used by tests and examples, plus a synthetic scale-free generator."""

from __future__ import annotations

import networkx as nx
import numpy as np

from .graph import InfluenceGraph, apply_weighted_cascade, from_edges


def toy_graph() -> InfluenceGraph:
    """Ten nodes labeled 1..10, all edges certain.

    Seeds {1, 5} reach five nodes and seed {9} reaches five nodes.
    """
    labels = list(range(1, 11))
    edges = [(1, 2), (2, 3), (5, 4), (9, 6), (9, 7), (9, 8), (8, 10)]
    return from_edges([(u - 1, v - 1, 1.0) for u, v in edges], n=10, labels=labels)


def _random_small(seed: int, n: int, m: int) -> InfluenceGraph:
    gen = np.random.default_rng(seed)
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    pick = gen.choice(len(pairs), size=m, replace=False)
    probs = gen.uniform(0.1, 0.9, size=m).round(3)
    return from_edges([(*pairs[i], float(p)) for i, p in zip(sorted(pick), probs)], n=n)


def small_graphs() -> dict[str, InfluenceGraph]:
    """Graphs with at most 12 edges, all small enough for live-edge enumeration."""
    g = {
        "edge": from_edges([(0, 1, 0.5)]),
        "chain3": from_edges([(0, 1, 0.6), (1, 2, 0.7)]),
        "triangle": from_edges([(0, 1, 0.5), (1, 2, 0.4), (2, 0, 0.3)]),
        "star": from_edges([(0, i, 0.2 + 0.15 * i) for i in range(1, 5)]),
        "diamond": from_edges([(0, 1, 0.5), (0, 2, 0.6), (1, 3, 0.7), (2, 3, 0.4)]),
        "bidir": from_edges([(0, 1, 0.4), (1, 0, 0.6), (1, 2, 0.5), (2, 1, 0.3), (2, 3, 0.8)]),
        "toy": toy_graph(),
        "rand6": _random_small(11, 6, 10),
        "rand7": _random_small(12, 7, 12),
    }
    return g


def tiny_graphs() -> dict[str, InfluenceGraph]:
    """Graphs small enough that M*T stays within enumeration limits for T <= 3."""
    g = small_graphs()
    return {name: g[name] for name in ("edge", "chain3", "triangle", "diamond")}


def scale_free_graph(n: int, m: int, seed: int = 0) -> InfluenceGraph:
    """Barabasi-Albert topology, each undirected edge in both directions, weighted cascade."""
    und = nx.barabasi_albert_graph(n, m, seed=seed)
    edges = [(u, v) for u, v in und.edges()] + [(v, u) for u, v in und.edges()]
    return apply_weighted_cascade(from_edges(edges, n=n))
