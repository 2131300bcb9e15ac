"""Comparison strategies: IMM-based splits, random placements and simulation greedy.

Every IMM-based baseline starts from the same ranked node list (IMM's greedy
pick order), which callers may pass in via ``ranking`` to share one IMM run
across several baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .graph import InfluenceGraph
from .paic import AllocationError, ScenarioConfig, SeedAllocation, round_weights
from .rng import as_stream
from .selection import ImmParams, imm_single_round

BASELINE_KINDS = ("OneShot", "UniNS", "UniOS", "RandRound", "RandSeedRound", "DecNS", "DecOS",
                  "Greedy")


def _ranking(graph, k, rng, params, ranking, max_theta=None):
    if ranking is not None:
        if len(ranking) < k:
            raise AllocationError(f"ranking has {len(ranking)} nodes, need {k}")
        return list(ranking[:k])
    if k > graph.n:
        raise AllocationError(f"k={k} exceeds N={graph.n}")
    return imm_single_round(graph, k, params or ImmParams(), as_stream(rng).child("ranking"),
                            max_theta=max_theta)


def one_shot(graph, config: ScenarioConfig, k: int, rng, params=None, ranking=None,
             max_theta=None) -> SeedAllocation:
    """All k IMM seeds in round 1."""
    nodes = _ranking(graph, k, rng, params, ranking, max_theta)
    return SeedAllocation(tuple((v, 1) for v in nodes), "OINS")


def uniform_sizes(k: int, T: int) -> list[int]:
    """Even split; the first ``k mod T`` rounds get one extra."""
    q, r = divmod(k, T)
    return [q + (1 if t < r else 0) for t in range(T)]


def uniform_split(graph, config: ScenarioConfig, k: int, variant: str, rng, params=None,
                  ranking=None, max_theta=None) -> SeedAllocation:
    """NS: consecutive blocks of IMM's ranked list. OS: ceil(k/T) nodes repeated each round."""
    T = config.T
    if variant == "NS":
        nodes = _ranking(graph, k, rng, params, ranking, max_theta)
        pairs, pos = [], 0
        for t, size in enumerate(uniform_sizes(k, T), start=1):
            pairs += [(v, t) for v in nodes[pos:pos + size]]
            pos += size
        return SeedAllocation(tuple(pairs), "OINS")
    if variant == "OS":
        m = -(-k // T)
        nodes = _ranking(graph, m, rng, params, ranking, max_theta)
        pairs, left = [], k
        for t in range(1, T + 1):
            take = min(m, left)
            pairs += [(v, t) for v in nodes[:take]]
            left -= take
        return SeedAllocation(tuple(pairs), "OIOS")
    raise ValueError(f"variant must be NS or OS, got {variant!r}")


def rand_round(graph, config: ScenarioConfig, k: int, rng, params=None, ranking=None,
               max_theta=None) -> SeedAllocation:
    """IMM's k nodes, each in an independent uniform round."""
    if k == 0:
        return SeedAllocation((), "OINS")
    nodes = _ranking(graph, k, rng, params, ranking, max_theta)
    rounds = as_stream(rng).child("rand-round").generator().integers(1, config.T + 1, size=k)
    return SeedAllocation(tuple(zip(nodes, rounds.tolist())), "OINS")


def rand_seed_round(graph, config: ScenarioConfig, k: int, rng, **_) -> SeedAllocation:
    """k distinct uniformly random nodes in independent uniform rounds."""
    if k > graph.n:
        raise AllocationError(f"k={k} exceeds N={graph.n}")
    gen = as_stream(rng).child("rand-seed-round").generator()
    nodes = gen.choice(graph.n, size=k, replace=False)
    rounds = gen.integers(1, config.T + 1, size=k)
    return SeedAllocation(tuple(zip(nodes.tolist(), rounds.tolist())), "OINS")


def decreasing_sizes(k: int, T: int, fraction_den: int = 5) -> list[int]:
    """ceil(remaining/5) per round; whatever is left at round T goes there."""
    sizes, rem = [], k
    for t in range(1, T + 1):
        if rem == 0:
            break
        b = rem if t == T else -(-rem // fraction_den)
        sizes.append(b)
        rem -= b
    return sizes + [0] * (T - len(sizes))


def decreasing_split(graph, config: ScenarioConfig, k: int, variant: str, rng, params=None,
                     ranking=None, max_theta=None) -> SeedAllocation:
    """Decreasing budgets. NS uses IMM's ranked nodes in order; OS reuses the top-ranked nodes each round."""
    T = config.T
    sizes = decreasing_sizes(k, T)
    if variant == "NS":
        nodes = _ranking(graph, k, rng, params, ranking, max_theta)
        pairs, pos = [], 0
        for t, size in enumerate(sizes, start=1):
            pairs += [(v, t) for v in nodes[pos:pos + size]]
            pos += size
        return SeedAllocation(tuple(pairs), "OINS")
    if variant == "OS":
        m = max(sizes) if sizes else 0
        nodes = _ranking(graph, m, rng, params, ranking, max_theta)
        pairs = [(v, t) for t, size in enumerate(sizes, start=1) for v in nodes[:size]]
        return SeedAllocation(tuple(pairs), "OIOS")
    raise ValueError(f"variant must be NS or OS, got {variant!r}")


def greedy_simulation(graph: InfluenceGraph, config: ScenarioConfig, k: int,
                      sims_per_estimate: int, setting: str, rng, weights=None) -> SeedAllocation:
    """Greedy over (node, round) pairs with Monte Carlo marginal gains.

    Every iteration scores all admissible candidates on the same set of
    simulated live-edge graphs, then keeps the best (ties go to the lowest
    node id, then the lowest round).
    """
    if sims_per_estimate < 1:
        raise ValueError("sims_per_estimate must be >= 1")
    T, n = config.T, graph.n
    distinct = setting.endswith("NS")
    ni = setting.startswith("NI")
    if k > (n if distinct else n * T):
        raise AllocationError(f"budget k={k} exceeds the candidate space")
    w = (round_weights(config) if weights is None else weights)
    w_ext = np.append(np.asarray(getattr(w, "w", w), dtype=np.float64), 0.0)
    indptr, tgt, prob, _ = graph.forward_csr()
    stream = as_stream(rng).child("greedy-sim")
    chosen: list[tuple[int, int]] = []
    used_nodes = set()
    for it in range(k):
        cand = [v * T + t for v in range(n) for t in range(T)
                if (v, t + 1) not in chosen and not (distinct and v in used_nodes)]
        rounds = [[] for _ in range(T)]
        for v, t in chosen:
            rounds[t - 1].append(v)
        seed_ptr = np.zeros(T + 1, np.int64)
        np.cumsum([len(r) for r in rounds], out=seed_ptr[1:])
        seeds = np.array([v for r in rounds for v in r], dtype=np.int32)
        gains = _kernels.greedy_gains(indptr, tgt, prob, n, seed_ptr, seeds, w_ext, ni,
                                      np.array(cand, dtype=np.int64), int(sims_per_estimate),
                                      stream.child(it).generator())
        best = float(gains.max())
        tol = 1e-12 * max(1.0, abs(best))
        pick = cand[int(np.flatnonzero(gains >= best - tol)[0])]
        chosen.append((pick // T, pick % T + 1))
        used_nodes.add(pick // T)
    return SeedAllocation(tuple(chosen), setting)


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    sims_per_estimate: int = 100

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline {self.kind!r}; choose from {BASELINE_KINDS}")
        if self.kind == "Greedy" and self.sims_per_estimate < 1:
            raise ValueError("Greedy needs sims_per_estimate >= 1")

    def run(self, graph, config: ScenarioConfig, k: int, rng, params=None, ranking=None,
            max_theta=None) -> SeedAllocation:
        kw = dict(params=params, ranking=ranking, max_theta=max_theta)
        if self.kind == "OneShot":
            return one_shot(graph, config, k, rng, **kw)
        if self.kind in ("UniNS", "UniOS"):
            return uniform_split(graph, config, k, self.kind[3:], rng, **kw)
        if self.kind == "RandRound":
            return rand_round(graph, config, k, rng, **kw)
        if self.kind == "RandSeedRound":
            return rand_seed_round(graph, config, k, rng)
        if self.kind in ("DecNS", "DecOS"):
            return decreasing_split(graph, config, k, self.kind[3:], rng, **kw)
        return greedy_simulation(graph, config, k, self.sims_per_estimate, config.setting, rng)

    @property
    def needs_ranking(self) -> bool:
        return self.kind not in ("RandSeedRound", "Greedy")

    def ranking_size(self, k: int, T: int) -> int:
        if self.kind == "UniOS":
            return -(-k // T)
        if self.kind == "DecOS":
            return max(decreasing_sizes(k, T), default=0)
        return k


def parse_baseline(name: str) -> BaselineSpec:
    """``Greedy100`` style names carry the simulation count."""
    if name.startswith("Greedy") and name[6:].isdigit():
        return BaselineSpec("Greedy", int(name[6:]))
    return BaselineSpec(name)
