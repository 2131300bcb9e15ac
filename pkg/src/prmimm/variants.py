"""Problem variants: seed and round minimization, competitor promotion, multiple items.

Minimization wraps an allocator (PRM-IMM by default) in a doubling bracket
followed by binary search. Feasibility means the evaluated final ratio
clears 1 with a three-standard-error margin.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .graph import InfluenceGraph
from .paic import (ModelError, PopularityState, ScenarioConfig, SeedAllocation,
                   distinct_nodes, evaluate_allocation, pa_step, round_weights, trajectory)
from .rng import as_stream
from .selection import ImmParams, prm_imm

FEASIBLE_EPS = 1e-12


class InfeasibleError(RuntimeError):
    """Surpassing is impossible within the search limits."""

    def __init__(self, message, best_ratio=None):
        super().__init__(message)
        self.best_ratio = best_ratio


# ---------------------------------------------------------------------------
# minimization
# ---------------------------------------------------------------------------


@dataclass
class Probe:
    value: int
    ratio: float
    se: float
    sims: int
    feasible: bool
    allocation: SeedAllocation = None


@dataclass
class MinimizationResult:
    value: int
    allocation: SeedAllocation
    achieved_ratio: float
    search_log: list = field(default_factory=list)

    def probes(self):
        return [(p.value, p.ratio) for p in self.search_log]


Allocator = Callable[[InfluenceGraph, ScenarioConfig, int, object], SeedAllocation]


def prm_imm_allocator(params: ImmParams | None = None, setting: str | None = None,
                      max_theta: int | None = None) -> Allocator:
    """Allocator running PRM-IMM with base weights for a given budget."""
    base = params or ImmParams()

    def allocate(graph, config, k, rng):
        p = ImmParams(base.epsilon, base.ell, k, base.eps_prime)
        alloc, _ = prm_imm(graph, config.T, round_weights(config), p, rng,
                           setting=setting or config.setting, max_theta=max_theta)
        return alloc

    return allocate


def fixed_allocator(allocation: SeedAllocation) -> Allocator:
    """Always return the same allocation, truncated to the scenario horizon."""

    def allocate(graph, config, k, rng):
        return allocation.truncated(config.T)

    return allocate


def check_feasible(graph, config, allocation, rng, sims: int = 2000,
                   max_sims: int = 32000) -> Probe:
    """Evaluate with escalating simulations until the 3-SE band clears 1 or the cap is hit."""
    n = sims
    while True:
        ev = evaluate_allocation(graph, config, allocation, n, as_stream(rng).child(n))
        lo, hi = ev.ratio - 3 * ev.ratio_se, ev.ratio + 3 * ev.ratio_se
        if lo >= 1 - FEASIBLE_EPS:
            return Probe(0, ev.ratio, ev.ratio_se, n, True, allocation)
        if hi < 1 - FEASIBLE_EPS or n * 4 > max_sims:
            return Probe(0, ev.ratio, ev.ratio_se, n, False, allocation)
        n *= 4


def _search(probe_fn, lo_value: int, hi_limit: int):
    """Smallest feasible value in [lo_value, hi_limit] via doubling then bisection."""
    log = []
    cache = {}

    def probe(v):
        if v not in cache:
            p = probe_fn(v)
            p.value = v
            cache[v] = p
            log.append(p)
        return cache[v]

    last_bad = lo_value - 1
    v = lo_value
    found = None
    while True:
        p = probe(v)
        if p.feasible:
            found = v
            break
        last_bad = v
        if v >= hi_limit:
            break
        v = min(2 * v, hi_limit)
    if found is None:
        best = max(log, key=lambda q: q.ratio)
        raise InfeasibleError(
            f"ratio stays below 1 up to {hi_limit} (best {best.ratio:.6g} at {best.value})",
            best.ratio)
    lo, hi = last_bad, found
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid).feasible:
            hi = mid
        else:
            lo = mid
    for p in log:
        if p.value < hi and p.feasible:
            warnings.warn(f"feasibility not monotone: {p.value} feasible but answer is {hi}")
    return hi, cache[hi], log


def minimize_seed_budget(graph: InfluenceGraph, config: ScenarioConfig, T: int | None = None,
                         params: ImmParams | None = None, rng=None, *,
                         allocator: Allocator | None = None, sims: int = 2000,
                         max_sims: int = 32000) -> MinimizationResult:
    """Smallest k whose allocation reaches r_T >= 1."""
    if T is not None:
        config = config.with_horizon(T)
    stream = as_stream(rng).child("min-seeds")
    if config.r0 >= 1:
        return MinimizationResult(0, SeedAllocation((), config.setting), config.r0, [])
    allocator = allocator or prm_imm_allocator(params)
    k_max = graph.n if distinct_nodes(config.setting) else graph.n * config.T

    def probe(k):
        alloc = allocator(graph, config, k, stream.child("alloc", k))
        return check_feasible(graph, config, alloc, stream.child("eval", k), sims, max_sims)

    k, p, log = _search(probe, 1, k_max)
    return MinimizationResult(k, p.allocation, p.ratio, log)


def minimize_rounds(graph: InfluenceGraph, config: ScenarioConfig, k: int,
                    params: ImmParams | None = None, rng=None, *,
                    allocator: Allocator | None = None, t_max: int = 1024,
                    sims: int = 2000, max_sims: int = 32000) -> MinimizationResult:
    """Smallest horizon T (for a fixed budget k) whose allocation reaches r_T >= 1.

    Scalar growth extends to any horizon; vector growth or promotion must
    cover ``t_max`` rounds.
    """
    stream = as_stream(rng).child("min-rounds")
    if config.r0 >= 1:
        return MinimizationResult(0, SeedAllocation((), config.setting), config.r0, [])
    allocator = allocator or prm_imm_allocator(params)
    if isinstance(config.growth, tuple) or config.promo is not None:
        t_max = min(t_max, len(config.growth) if isinstance(config.growth, tuple)
                    else len(config.promo))

    def horizon(T):
        if isinstance(config.growth, tuple) or config.promo is not None:
            return config.with_horizon(T)
        return replace(config, T=T)

    def probe(T):
        cfg = horizon(T)
        kk = min(k, graph.n if distinct_nodes(cfg.setting) else graph.n * T)
        alloc = allocator(graph, cfg, kk, stream.child("alloc", T))
        return check_feasible(graph, cfg, alloc, stream.child("eval", T), sims, max_sims)

    T, p, log = _search(probe, 1, t_max)
    return MinimizationResult(T, p.allocation, p.ratio, log)


# ---------------------------------------------------------------------------
# competitor promotion
# ---------------------------------------------------------------------------


def _bound_terms(config: ScenarioConfig, sigmas):
    s = np.asarray(sigmas, dtype=np.float64)
    if s.shape != (config.T,):
        raise ModelError(f"expected {config.T} spreads")
    p = config.promo_vector()
    cum_z = np.cumsum(config.z_vector())
    prior_s = np.concatenate([[0.0], np.cumsum(s)[:-1]])
    base = config.d0 + cum_z + prior_s + np.cumsum(p)
    return s, p, base


def promo_ratio_bounds(config: ScenarioConfig, sigmas) -> tuple[float, float]:
    """Closed-form (lower, upper) bounds on r_T under known competitor promotion.

    upper: (r_0+1) prod (1 + s_t / (d_0 + Z_t + sum_{i<t} s_i + sum_{i<=t} p_i)) - 1
    lower: (r_0+1) prod (1 + (s_t - p_t) / (same denominator + p_t)) - 1

    The upper bound always holds. The lower bound holds while the popular
    item keeps the majority at the start of every round; see
    :func:`lower_bound_condition`.
    """
    s, p, base = _bound_terms(config, sigmas)
    upper = (config.r0 + 1) * float(np.prod(1 + s / base)) - 1
    lower = (config.r0 + 1) * float(np.prod(1 + (s - p) / (base + p))) - 1
    return lower, upper


def lower_bound_condition(config: ScenarioConfig, sigmas) -> bool:
    """True if d^p >= d^n at the start of every round (states 0..T-1)."""
    states = trajectory(config, sigmas)
    return all(st.dp >= st.dn for st in states[:-1])


@dataclass
class SandwichResult:
    allocation: SeedAllocation
    ratio: float
    candidates: dict
    extra_factor: float


def sandwich_select(graph: InfluenceGraph, config: ScenarioConfig, params: ImmParams, rng,
                    *, sims: int = 2000, setting: str | None = None,
                    max_theta: int | None = None) -> SandwichResult:
    """Run PRM-IMM under both bound weightings and keep the better evaluated allocation."""
    if config.promo is None:
        raise ModelError("sandwich selection needs a competitor promotion vector")
    stream = as_stream(rng).child("sandwich")
    setting = setting or config.setting
    cands = {}
    for mode in ("sandwich_upper", "sandwich_lower"):
        w = round_weights(config, mode)
        alloc, _ = prm_imm(graph, config.T, w, params, stream.child(mode), setting=setting,
                           max_theta=max_theta)
        ev = evaluate_allocation(graph, config, alloc, sims, stream.child("eval", mode))
        cands[mode] = (alloc, ev.ratio, ev.ratio_se)
    best = max(cands, key=lambda m: (cands[m][1], m == "sandwich_upper"))
    up = round_weights(config, "sandwich_upper").as_array()
    low = round_weights(config, "sandwich_lower").as_array()
    factor = float(np.max(up / low))
    return SandwichResult(cands[best][0], cands[best][1], cands, factor)


# ---------------------------------------------------------------------------
# multiple items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiItemConfig:
    """Novice item against ``s`` competitor items with individual promotions."""

    d0n: float
    d0_items: tuple
    z: float | tuple
    T: int
    promos: tuple | None = None  # s rows of length T

    def __post_init__(self):
        object.__setattr__(self, "d0_items", tuple(float(x) for x in self.d0_items))
        if not self.d0_items:
            raise ModelError("need at least one competitor item")
        if self.d0n < 0 or min(self.d0_items) < 0 or sum(self.d0_items) <= 0:
            raise ModelError("popularities must be >= 0 with positive competitor total")
        if self.promos is not None:
            rows = tuple(tuple(float(x) for x in row) for row in self.promos)
            if len(rows) != len(self.d0_items) or any(len(r) != self.T for r in rows):
                raise ModelError("promos must be s rows of length T")
            if any(x < 0 for r in rows for x in r):
                raise ModelError("promotions must be >= 0")
            object.__setattr__(self, "promos", rows)

    @property
    def s(self) -> int:
        return len(self.d0_items)

    def promo_matrix(self) -> np.ndarray:
        if self.promos is None:
            return np.zeros((self.s, self.T))
        return np.array(self.promos, dtype=np.float64)

    def z_vector(self) -> np.ndarray:
        if isinstance(self.z, (tuple, list)):
            return np.array(self.z, dtype=np.float64)
        return np.full(self.T, float(self.z))


def compose_multi_item(multi: MultiItemConfig, setting: str = "OINS"):
    """Collapse all competitors into one composite popular item.

    Returns ``(config, report)``. The config has no promotion vector when
    no competitor promotes, so the exact closed form applies.
    """
    promo = multi.promo_matrix().sum(axis=0)
    growth = tuple(multi.z) if isinstance(multi.z, (tuple, list)) else float(multi.z)
    config = ScenarioConfig(multi.d0n, float(sum(multi.d0_items)), growth, multi.T,
                            tuple(promo) if promo.any() else None, setting)
    report = {"items": multi.s, "d0p": config.d0p,
              "promo": promo.tolist(), "exact_closed_form": not promo.any()}
    return config, report


def multi_item_trajectory(multi: MultiItemConfig, sigmas) -> np.ndarray:
    """PA growth over the novice and every competitor; rows are rounds 0..T, columns [dn, d^1..d^s]."""
    s = np.asarray(sigmas, dtype=np.float64)
    if s.shape != (multi.T,):
        raise ModelError(f"expected {multi.T} spreads")
    z = multi.z_vector()
    P = multi.promo_matrix()
    out = np.empty((multi.T + 1, multi.s + 1))
    cur = np.array([multi.d0n, *multi.d0_items])
    out[0] = cur
    for t in range(multi.T):
        total = cur.sum()
        nxt = cur + z[t] * cur / total
        nxt[0] += s[t]
        nxt[1:] += P[:, t]
        cur = nxt
        out[t + 1] = cur
    return out


def multi_item_ratio(multi: MultiItemConfig, sigmas) -> float:
    last = multi_item_trajectory(multi, sigmas)[-1]
    return float(last[0] / last[1:].sum())


def multi_item_bounds(multi: MultiItemConfig, sigmas) -> tuple[float, float]:
    config, _ = compose_multi_item(multi)
    if config.promo is None:
        config = replace(config, promo=(0.0,) * config.T)
    return promo_ratio_bounds(config, sigmas)
