"""Forward IC simulation, Monte Carlo spread estimators and brute-force oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .graph import InfluenceGraph
from .rng import RngStream, as_stream

#: Live-edge enumeration guard for the brute-force oracles.
MAX_ENUM_EDGES = 20

# Simulations are run in fixed-size chunks, each on its own child stream, so
# the aggregate is independent of how chunks are scheduled.
SIM_CHUNK = 2048


class SpreadError(ValueError):
    pass


@dataclass(frozen=True)
class ActivationOutcome:
    seeds: frozenset
    activated: frozenset
    order: tuple = ()

    def __len__(self):
        return len(self.activated)


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    n: int

    def __float__(self):
        return float(self.mean)


def _seed_array(graph: InfluenceGraph, seeds: Iterable[int]) -> np.ndarray:
    arr = np.array(sorted(set(int(s) for s in seeds)), dtype=np.int32)
    if arr.size and (arr.min() < 0 or arr.max() >= graph.n):
        bad = [int(s) for s in arr if s < 0 or s >= graph.n]
        raise SpreadError(f"seed(s) {bad} not in V (n={graph.n})")
    return arr


def simulate_ic(graph: InfluenceGraph, seeds: Iterable[int], rng) -> ActivationOutcome:
    """Realize one IC cascade; activation order is BFS order from the seeds."""
    s = _seed_array(graph, seeds)
    indptr, tgt, prob, _ = graph.forward_csr()
    gen = as_stream(rng).generator()
    order = _kernels.ic_once(indptr, tgt, prob, graph.n, s, gen)
    order = tuple(int(v) for v in order)
    return ActivationOutcome(frozenset(int(v) for v in s), frozenset(order), order)


def _chunks(total: int, size: int = SIM_CHUNK):
    start = 0
    c = 0
    while start < total:
        yield c, min(size, total - start)
        start += size
        c += 1


def _run_chunks(fn, total, stream: RngStream, workers: int | None = None):
    jobs = list(_chunks(total))
    if workers and workers > 1 and len(jobs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda j: fn(j[1], stream.child(j[0]).generator()), jobs))
    else:
        parts = [fn(cnt, stream.child(c).generator()) for c, cnt in jobs]
    return np.concatenate(parts) if parts else np.zeros(0)


def spread_samples(graph, seeds, num_sims, rng, workers=None) -> np.ndarray:
    s = _seed_array(graph, seeds)
    if num_sims < 1:
        raise SpreadError("num_sims must be >= 1")
    if s.size == 0:
        return np.zeros(num_sims, dtype=np.int64)
    indptr, tgt, prob, _ = graph.forward_csr()
    stream = as_stream(rng).child("spread")
    return _run_chunks(
        lambda cnt, gen: _kernels.ic_sizes(indptr, tgt, prob, graph.n, s, cnt, gen),
        num_sims, stream, workers,
    )


def _estimate(x: np.ndarray) -> Estimate:
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(float(x.mean()), se, n)


def estimate_spread(graph, seeds, num_sims: int, rng, workers=None) -> Estimate:
    """Monte Carlo sigma(S) with its standard error."""
    return _estimate(spread_samples(graph, seeds, num_sims, rng, workers))


def round_counts(graph, round_seeds: Sequence[Iterable[int]], num_sims: int, rng,
                 non_overlapping: bool, workers=None) -> np.ndarray:
    """``(num_sims, T)`` per-round activation counts, one live-edge graph per round.

    With ``non_overlapping`` each round counts only nodes no earlier round of
    the same simulation reached (the NI marginal).
    """
    if num_sims < 1:
        raise SpreadError("num_sims must be >= 1")
    arrays = [_seed_array(graph, s) for s in round_seeds]
    seed_ptr = np.zeros(len(arrays) + 1, dtype=np.int64)
    np.cumsum([a.size for a in arrays], out=seed_ptr[1:])
    seed_nodes = np.concatenate(arrays) if arrays else np.zeros(0, np.int32)
    seed_nodes = seed_nodes.astype(np.int32)
    indptr, tgt, prob, _ = graph.forward_csr()
    stream = as_stream(rng).child("rounds", int(non_overlapping))

    def run(cnt, gen):
        return _kernels.round_cascades(indptr, tgt, prob, graph.n, seed_ptr, seed_nodes,
                                       cnt, non_overlapping, gen)

    return _run_chunks(run, num_sims, stream, workers)


def estimate_marginal_ni(graph, current, priors: Sequence[Iterable[int]], num_sims: int,
                         rng, workers=None) -> Estimate:
    """E|Gamma(S_t, L_t) minus the union of Gamma(S_i, L_i), i < t|, fresh L per round."""
    counts = round_counts(graph, list(priors) + [current], num_sims, rng, True, workers)
    return _estimate(counts[:, -1])


# ---------------------------------------------------------------------------
# Brute-force oracles. These enumerate live-edge graphs with vectorized
# boolean propagation and share no code with the sampling kernels.
# ---------------------------------------------------------------------------


def _enum_guard(m: int, limit: int = MAX_ENUM_EDGES):
    if m > limit:
        raise SpreadError(f"exact enumeration refused: {m} edges > limit {limit}")


def _live_masks(m: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
    hi = (1 << m) if hi is None else hi
    ids = np.arange(lo, hi, dtype=np.int64)
    return ((ids[:, None] >> np.arange(m, dtype=np.int64)) & 1).astype(bool)


def _mask_probs(live: np.ndarray, prob: np.ndarray) -> np.ndarray:
    return np.prod(np.where(live, prob[None, :], 1.0 - prob[None, :]), axis=1)


def _reach(graph: InfluenceGraph, live: np.ndarray, start: np.ndarray) -> np.ndarray:
    """Reachable sets for a batch of live-edge graphs.

    ``start`` is ``(B, n)`` bool (or ``(n,)`` broadcast); returns ``(B, n)``.
    """
    reach = np.broadcast_to(start, (live.shape[0], graph.n)).copy()
    src, dst = graph.src, graph.dst
    for _ in range(graph.n):
        before = reach.sum()
        for e in range(graph.m):
            reach[:, dst[e]] |= reach[:, src[e]] & live[:, e]
        if reach.sum() == before:
            break
    return reach


def _live_graph_reach_all(graph: InfluenceGraph):
    """For every live-edge graph L: probability and per-node reach matrix.

    Returns ``probs (2^M,)`` and ``reach (2^M, n, n)`` with
    ``reach[l, u, x]`` true iff x is reachable from u in L.
    """
    _enum_guard(graph.m)
    live = _live_masks(graph.m)
    probs = _mask_probs(live, graph.prob) if graph.m else np.ones(1)
    eye = np.eye(graph.n, dtype=bool)
    reach = np.empty((live.shape[0], graph.n, graph.n), dtype=bool)
    for u in range(graph.n):
        reach[:, u, :] = _reach(graph, live, eye[u])
    return probs, reach


def exact_spread_small(graph: InfluenceGraph, seeds) -> float:
    """Exact sigma(S) = sum_L Pr[L] |Gamma(S, L)| over all 2^M live-edge graphs."""
    s = _seed_array(graph, seeds)
    if s.size == 0:
        return 0.0
    _enum_guard(graph.m)
    if graph.m == 0:
        return float(s.size)
    total = 0.0
    step = 1 << 16
    start = np.zeros(graph.n, dtype=bool)
    start[s] = True
    for lo in range(0, 1 << graph.m, step):
        live = _live_masks(graph.m, lo, min(lo + step, 1 << graph.m))
        p = _mask_probs(live, graph.prob)
        total += float(p @ _reach(graph, live, start).sum(axis=1))
    return total


def exact_activation_probs(graph: InfluenceGraph, seeds) -> np.ndarray:
    """Pr[v in Gamma(S, L)] for every v, by enumeration."""
    s = _seed_array(graph, seeds)
    out = np.zeros(graph.n)
    if s.size == 0:
        return out
    _enum_guard(graph.m)
    if graph.m == 0:
        out[s] = 1.0
        return out
    start = np.zeros(graph.n, dtype=bool)
    start[s] = True
    live = _live_masks(graph.m)
    p = _mask_probs(live, graph.prob)
    return p @ _reach(graph, live, start)


class ExactSpreadTable:
    """sigma(S) for every subset S of V on a small graph, by enumeration.

    Subsets are addressed by bitmask. Intended for exhaustive-optimum
    oracles on graphs with a handful of nodes.
    """

    def __init__(self, graph: InfluenceGraph):
        if graph.n > 16:
            raise SpreadError("subset table limited to n <= 16")
        self.graph = graph
        if graph.m == 0:
            probs = np.ones(1)
            reach = np.eye(graph.n, dtype=bool)[None]
        else:
            probs, reach = _live_graph_reach_all(graph)
        n = graph.n
        self.values = np.zeros(1 << n)
        self.node_probs = np.zeros((1 << n, n))
        # union of reach rows over subset members, built incrementally by lowest bit
        union = np.zeros((1 << n, reach.shape[0], n), dtype=bool) if n <= 10 else None
        for mask in range(1, 1 << n):
            low = (mask & -mask).bit_length() - 1
            if union is not None:
                union[mask] = union[mask & (mask - 1)] | reach[:, low, :]
                cov = union[mask]
            else:
                members = [u for u in range(n) if mask >> u & 1]
                cov = reach[:, members, :].any(axis=1)
            self.node_probs[mask] = probs @ cov
            self.values[mask] = self.node_probs[mask].sum()

    @staticmethod
    def mask_of(nodes) -> int:
        m = 0
        for v in nodes:
            m |= 1 << int(v)
        return m

    def sigma(self, nodes) -> float:
        return float(self.values[self.mask_of(nodes)])

    def activation(self, nodes) -> np.ndarray:
        return self.node_probs[self.mask_of(nodes)]


def exact_rho_ni_small(graph: InfluenceGraph, round_seeds: Sequence[Iterable[int]],
                       weights: Sequence[float], max_bits: int = 16) -> float:
    """Exact round-weighted NI influence by enumerating live-edge tuples (L_1..L_T).

    Each node contributes the largest weight among the rounds whose cascade
    reaches it.
    """
    T = len(round_seeds)
    if len(weights) != T:
        raise SpreadError("weights and round_seeds lengths differ")
    bits = graph.m * T
    if bits > max_bits:
        raise SpreadError(f"exact enumeration refused: M*T = {bits} > {max_bits}")
    w = np.asarray(weights, dtype=np.float64)
    starts = []
    for s in round_seeds:
        arr = _seed_array(graph, s)
        st = np.zeros(graph.n, dtype=bool)
        st[arr] = True
        starts.append(st)
    live_all = _live_masks(bits) if bits else np.zeros((1, 0), dtype=bool)
    probs = np.ones(live_all.shape[0])
    best = np.zeros((live_all.shape[0], graph.n))
    for t in range(T):
        live = live_all[:, t * graph.m:(t + 1) * graph.m]
        if graph.m:
            probs *= _mask_probs(live, graph.prob)
        reached = _reach(graph, live, starts[t])
        best = np.maximum(best, np.where(reached, w[t], 0.0))
    return float(probs @ best.sum(axis=1))


def exact_marginal_ni_small(graph: InfluenceGraph, round_seeds, max_bits: int = 16) -> np.ndarray:
    """Exact per-round sigma^NI values by enumerating live-edge tuples."""
    T = len(round_seeds)
    bits = graph.m * T
    if bits > max_bits:
        raise SpreadError(f"exact enumeration refused: M*T = {bits} > {max_bits}")
    live_all = _live_masks(bits) if bits else np.zeros((1, 0), dtype=bool)
    probs = np.ones(live_all.shape[0])
    seen = np.zeros((live_all.shape[0], graph.n), dtype=bool)
    new_counts = np.zeros((live_all.shape[0], T))
    for t, s in enumerate(round_seeds):
        arr = _seed_array(graph, s)
        st = np.zeros(graph.n, dtype=bool)
        st[arr] = True
        live = live_all[:, t * graph.m:(t + 1) * graph.m]
        if graph.m:
            probs *= _mask_probs(live, graph.prob)
        reached = _reach(graph, live, st)
        new_counts[:, t] = (reached & ~seen).sum(axis=1)
        seen |= reached
    return probs @ new_counts


def rho_ni_from_activation(activation: Sequence[np.ndarray], weights) -> float:
    """Round-weighted NI influence from per-round activation probabilities.

    Rounds use independent live-edge graphs, so node v is first reached in
    round t with probability q_t * prod_{i<t} (1 - q_i).
    """
    w = np.asarray(weights, dtype=np.float64)
    q = np.vstack(activation)
    miss = np.cumprod(np.vstack([np.ones(q.shape[1]), 1.0 - q[:-1]]), axis=0)
    return float((w[:, None] * q * miss).sum())
