"""PA-IC popularity dynamics, ratio objectives and round weights.

Popularities are reals: the recursion tracks expected growth, with the
natural-growth customers split in proportion to current popularity and the
novice item adding its promotional spread on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .diffusion import round_counts
from .graph import InfluenceGraph
from .rng import as_stream

SETTINGS = ("OINS", "NIOS", "OIOS", "NINS")


class ModelError(ValueError):
    pass


class AllocationError(ValueError):
    pass


def overlapping_influence(setting: str) -> bool:
    return setting.startswith("OI")


def distinct_nodes(setting: str) -> bool:
    return setting.endswith("NS")


def _floats(value) -> tuple:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class ScenarioConfig:
    """Initial popularities, natural growth, horizon and optional competitor promotion.

    ``growth`` is a scalar z (same every round) or a length-T vector.
    ``promo`` is the popular item's known per-round promotional gain.
    """

    d0n: float
    d0p: float
    growth: float | tuple = 0.0
    T: int = 1
    promo: tuple | None = None
    setting: str = "OINS"

    def __post_init__(self):
        if isinstance(self.growth, (list, tuple, np.ndarray)):
            object.__setattr__(self, "growth", _floats(self.growth))
        else:
            object.__setattr__(self, "growth", float(self.growth))
        if self.promo is not None:
            object.__setattr__(self, "promo", _floats(self.promo))
        object.__setattr__(self, "d0n", float(self.d0n))
        object.__setattr__(self, "d0p", float(self.d0p))
        self.validate()

    def validate(self):
        if int(self.T) != self.T or self.T < 1:
            raise ModelError(f"T must be an integer >= 1, got {self.T!r}")
        if self.d0n < 0 or self.d0p <= 0:
            raise ModelError("need d0n >= 0 and d0p > 0")
        z = self.z_vector()
        if len(z) != self.T:
            raise ModelError(f"growth vector has length {len(z)}, expected T={self.T}")
        if (z < 0).any():
            raise ModelError("natural growth must be >= 0")
        if self.promo is not None:
            if len(self.promo) != self.T:
                raise ModelError(f"promo vector has length {len(self.promo)}, expected T={self.T}")
            if min(self.promo) < 0:
                raise ModelError("promotion values must be >= 0")
        if self.setting not in SETTINGS:
            raise ModelError(f"unknown setting {self.setting!r}; expected one of {SETTINGS}")

    @property
    def r0(self) -> float:
        return self.d0n / self.d0p

    @property
    def d0(self) -> float:
        return self.d0n + self.d0p

    def z_vector(self) -> np.ndarray:
        if isinstance(self.growth, tuple):
            return np.array(self.growth, dtype=np.float64)
        return np.full(self.T, self.growth, dtype=np.float64)

    def promo_vector(self) -> np.ndarray:
        if self.promo is None:
            return np.zeros(self.T)
        return np.array(self.promo, dtype=np.float64)

    def with_horizon(self, T: int) -> "ScenarioConfig":
        """Same scenario over T rounds; vector inputs must cover T."""
        growth = self.growth
        promo = self.promo
        if isinstance(growth, tuple):
            if len(growth) < T:
                raise ModelError(f"growth vector too short for T={T}")
            growth = growth[:T]
        if promo is not None:
            if len(promo) < T:
                raise ModelError(f"promo vector too short for T={T}")
            promo = promo[:T]
        return replace(self, T=T, growth=growth, promo=promo)

    # flat key=value serialization -------------------------------------------------

    KEYS = ("d0n", "d0p", "z", "z_vec", "T", "promo_vec", "setting")

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "ScenarioConfig":
        missing = [k for k in ("d0n", "d0p", "T") if k not in kv]
        if missing:
            raise ModelError(f"missing config keys: {', '.join(missing)}")
        if "z" in kv and "z_vec" in kv:
            raise ModelError("give either z or z_vec, not both")
        growth = _floats(kv["z_vec"]) if "z_vec" in kv else float(kv.get("z", 0.0))
        promo = _floats(kv["promo_vec"]) if kv.get("promo_vec") else None
        try:
            T = int(kv["T"])
        except ValueError:
            raise ModelError(f"T must be an integer, got {kv['T']!r}") from None
        return cls(float(kv["d0n"]), float(kv["d0p"]), growth, T, promo,
                   kv.get("setting", "OINS").upper())

    def to_mapping(self) -> dict:
        out = {"d0n": repr(self.d0n), "d0p": repr(self.d0p)}
        if isinstance(self.growth, tuple):
            out["z_vec"] = ",".join(repr(v) for v in self.growth)
        else:
            out["z"] = repr(self.growth)
        out["T"] = str(self.T)
        if self.promo is not None:
            out["promo_vec"] = ",".join(repr(v) for v in self.promo)
        out["setting"] = self.setting
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.to_mapping().items())

    @classmethod
    def from_text(cls, text: str) -> "ScenarioConfig":
        kv = parse_kv(text)
        unknown = set(kv) - set(cls.KEYS)
        if unknown:
            raise ModelError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        return cls.from_mapping(kv)


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ModelError(f"config line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class PopularityState:
    round: int
    dn: float
    dp: float

    @property
    def ratio(self) -> float:
        return self.dn / self.dp


def pa_step(state: PopularityState, sigma_increment: float, z_t: float,
            p_t: float = 0.0) -> PopularityState:
    """One round: proportional natural growth, novice promotion, popular promotion."""
    total = state.dp + state.dn
    if total <= 0:
        raise ModelError("total popularity is zero; PA shares undefined")
    if sigma_increment < 0 or z_t < 0 or p_t < 0:
        raise ModelError("increments must be non-negative")
    dp = state.dp + z_t * state.dp / total + p_t
    dn = state.dn + sigma_increment + z_t * state.dn / total
    return PopularityState(state.round + 1, dn, dp)


def _check_sigmas(config: ScenarioConfig, sigmas) -> np.ndarray:
    s = np.asarray(sigmas, dtype=np.float64)
    if s.shape != (config.T,):
        raise ModelError(f"expected {config.T} per-round spreads, got shape {s.shape}")
    return s


def trajectory(config: ScenarioConfig, sigmas) -> list[PopularityState]:
    """States d_0..d_T under the expectation recursion (competitor promotion included)."""
    s = _check_sigmas(config, sigmas)
    z = config.z_vector()
    p = config.promo_vector()
    states = [PopularityState(0, config.d0n, config.d0p)]
    for t in range(config.T):
        states.append(pa_step(states[-1], s[t], z[t], p[t]))
    return states


def ratio_via_iteration(config: ScenarioConfig, sigmas) -> float:
    return trajectory(config, sigmas)[-1].ratio


def ratio_oi_closed_form(config: ScenarioConfig, sigmas) -> float:
    """(r_0 + 1) * prod_t (1 + sigma_t / (d_0 + Z_t + sum_{i<t} sigma_i)) - 1.

    Z_t is cumulative natural growth through round t. Only valid without
    competitor promotion; bounds for that case live in :mod:`prmimm.variants`.
    """
    if config.promo is not None and any(config.promo):
        raise ModelError("closed form undefined under competitor promotion; use promo bounds")
    s = _check_sigmas(config, sigmas)
    cum_z = np.cumsum(config.z_vector())
    prior = np.concatenate([[0.0], np.cumsum(s)[:-1]])
    denom = config.d0 + cum_z + prior
    return float((config.r0 + 1.0) * np.prod(1.0 + s / denom) - 1.0)


@dataclass(frozen=True)
class RoundWeights:
    """Per-round weights. ``monotone=False`` skips the non-increasing check.

    Only the lower promotion bound needs that: its weight rises from round t
    to t+1 whenever z_{t+1} + 2 p_{t+1} < p_t.
    """

    w: tuple
    monotone: bool = True

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        object.__setattr__(self, "w", w)
        if any(x < 0 for x in w):
            raise ModelError("round weights must be non-negative")
        if self.monotone and not self.is_non_increasing():
            raise ModelError("round weights must be non-increasing")

    def is_non_increasing(self) -> bool:
        return all(b <= a * (1 + 1e-12) for a, b in zip(self.w, self.w[1:]))

    def __len__(self):
        return len(self.w)

    def __getitem__(self, i):
        return self.w[i]

    def as_array(self) -> np.ndarray:
        return np.array(self.w, dtype=np.float64)

    @property
    def T(self) -> int:
        return len(self.w)


def round_weights(config: ScenarioConfig, mode: str = "base") -> RoundWeights:
    """Per-round weights w_t = 1 / (d_0 + Z_t [+ promotion terms]).

    ``sandwich_upper`` adds cumulative promotion through t; ``sandwich_lower``
    adds p_t once more on top of that.
    """
    cum_z = np.cumsum(config.z_vector())
    base = config.d0 + cum_z
    if mode == "base":
        return RoundWeights(tuple(1.0 / base))
    if mode not in ("sandwich_upper", "sandwich_lower"):
        raise ModelError(f"unknown weight mode {mode!r}")
    if config.promo is None:
        raise ModelError(f"{mode} weights need a competitor promotion vector")
    p = config.promo_vector()
    upper = base + np.cumsum(p)
    if mode == "sandwich_upper":
        return RoundWeights(tuple(1.0 / upper))
    return RoundWeights(tuple(1.0 / (upper + p)), monotone=False)


def surrogate_rho_oi(weights, sigmas) -> float:
    w = np.asarray(weights.w if isinstance(weights, RoundWeights) else weights, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    if w.shape != s.shape:
        raise ModelError(f"weights length {w.size} != sigmas length {s.size}")
    return float(w @ s)


def surrogate_ratio(config: ScenarioConfig, rho: float) -> float:
    """Popularity ratio implied by the round-weighted surrogate, (1 + rho)(r_0 + 1) - 1."""
    return (1.0 + rho) * (config.r0 + 1.0) - 1.0


# ---------------------------------------------------------------------------
# seed allocations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedAllocation:
    """A set of (node, round) pairs. Rounds are 1-based."""

    pairs: tuple = ()
    setting: str = "OINS"

    def __post_init__(self):
        pairs = tuple(sorted((int(v), int(t)) for v, t in self.pairs))
        object.__setattr__(self, "pairs", pairs)
        if self.setting not in SETTINGS:
            raise AllocationError(f"unknown setting {self.setting!r}")
        if len(set(pairs)) != len(pairs):
            raise AllocationError("duplicate (node, round) pair")
        if any(t < 1 for _, t in pairs):
            raise AllocationError("rounds are 1-based")
        if distinct_nodes(self.setting):
            nodes = [v for v, _ in pairs]
            if len(set(nodes)) != len(nodes):
                raise AllocationError(f"{self.setting} forbids reusing a node across rounds")

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def max_round(self) -> int:
        return max((t for _, t in self.pairs), default=0)

    def nodes(self) -> list[int]:
        return sorted({v for v, _ in self.pairs})

    def round_sets(self, T: int) -> list[list[int]]:
        out = [[] for _ in range(T)]
        for v, t in self.pairs:
            if t > T:
                raise AllocationError(f"pair ({v}, {t}) beyond horizon T={T}")
            out[t - 1].append(v)
        return out

    def per_round_counts(self, T: int) -> list[int]:
        return [len(s) for s in self.round_sets(T)]

    def truncated(self, T: int) -> "SeedAllocation":
        return SeedAllocation(tuple(p for p in self.pairs if p[1] <= T), self.setting)

    def validate(self, n: int | None = None, T: int | None = None, k: int | None = None):
        if k is not None and len(self.pairs) > k:
            raise AllocationError(f"{len(self.pairs)} pairs exceed budget k={k}")
        if T is not None and self.max_round > T:
            raise AllocationError(f"round {self.max_round} beyond horizon T={T}")
        if n is not None and any(v < 0 or v >= n for v, _ in self.pairs):
            raise AllocationError("node id outside graph")

    def with_labels(self, graph: InfluenceGraph) -> list[tuple]:
        return [(graph.labels[v], t) for v, t in self.pairs]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


@dataclass
class AllocationEvaluation:
    ratio: float
    ratio_se: float
    sigmas: np.ndarray
    sigma_se: np.ndarray
    states: list = field(default_factory=list)
    num_sims: int = 0

    @property
    def final(self) -> PopularityState:
        return self.states[-1]


def ratio_gradient(config: ScenarioConfig, sigmas) -> np.ndarray:
    """d r_T / d sigma_t by central differences on the recursion."""
    s = np.asarray(sigmas, dtype=np.float64)
    g = np.zeros_like(s)
    for t in range(s.size):
        h = 1e-6 * max(1.0, abs(s[t]))
        hi = s.copy()
        lo = s.copy()
        hi[t] += h
        lo[t] = max(0.0, lo[t] - h)
        g[t] = (ratio_via_iteration(config, hi) - ratio_via_iteration(config, lo)) / (hi[t] - lo[t])
    return g


def evaluate_allocation(graph: InfluenceGraph, config: ScenarioConfig,
                        allocation: SeedAllocation, num_sims: int, rng,
                        workers=None) -> AllocationEvaluation:
    """Expected-growth ratio r_T with Monte Carlo per-round spreads.

    The allocation's own setting picks the spread form: OI settings use
    sigma(S_t); NI settings use the marginal over earlier rounds. The ratio's standard error is propagated from the per-round
    sample covariance by the delta method.
    """
    allocation.validate(n=graph.n, T=config.T)
    ni = not overlapping_influence(allocation.setting)
    rounds = allocation.round_sets(config.T)
    if not allocation.pairs:
        sig = np.zeros(config.T)
        return AllocationEvaluation(ratio_via_iteration(config, sig), 0.0, sig,
                                    np.zeros(config.T), trajectory(config, sig), num_sims)
    counts = round_counts(graph, rounds, num_sims, as_stream(rng).child("evaluate"), ni,
                          workers).astype(np.float64)
    sig = counts.mean(axis=0)
    if num_sims > 1:
        cov = np.atleast_2d(np.cov(counts, rowvar=False)) / num_sims
        sig_se = np.sqrt(np.clip(np.diag(cov), 0, None))
        grad = ratio_gradient(config, sig)
        ratio_se = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        sig_se = np.zeros(config.T)
        ratio_se = 0.0
    states = trajectory(config, sig)
    return AllocationEvaluation(states[-1].ratio, ratio_se, sig, sig_se, states, num_sims)


def _allocation_arrays(allocation: SeedAllocation, T: int):
    rounds = allocation.round_sets(T)
    seed_ptr = np.zeros(T + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rounds], out=seed_ptr[1:])
    nodes = np.array([v for r in rounds for v in sorted(r)], dtype=np.int32)
    return seed_ptr, nodes


def _integer_growth(config: ScenarioConfig) -> np.ndarray:
    z = config.z_vector()
    if not np.all(z == np.round(z)):
        raise ModelError("random growth needs integer customer counts per round")
    return z.astype(np.int64)


def random_growth_paths(graph: InfluenceGraph, config: ScenarioConfig,
                        allocation: SeedAllocation, trajectories: int, rng):
    """``(dn, dp)`` arrays of shape (trajectories, T+1) under random growth.

    Each round, z_t customers independently pick the novice item with
    probability dn / (dn + dp), and the round's seeds realize one cascade.
    """
    z = _integer_growth(config)
    allocation.validate(n=graph.n, T=config.T)
    seed_ptr, nodes = _allocation_arrays(allocation, config.T)
    indptr, tgt, prob, _ = graph.forward_csr()
    gen = as_stream(rng).child("random-growth").generator()
    return _kernels.random_growth(indptr, tgt, prob, graph.n, seed_ptr, nodes,
                                  config.d0n, config.d0p, z, config.promo_vector(),
                                  not overlapping_influence(allocation.setting),
                                  int(trajectories), gen)


def simulate_random_growth(graph: InfluenceGraph, config: ScenarioConfig,
                           allocation: SeedAllocation, rng) -> list[PopularityState]:
    dn, dp = random_growth_paths(graph, config, allocation, 1, rng)
    return [PopularityState(t, float(dn[0, t]), float(dp[0, t])) for t in range(config.T + 1)]


def random_growth_final_ratios(graph, config, allocation, trajectories: int, rng) -> np.ndarray:
    dn, dp = random_growth_paths(graph, config, allocation, trajectories, rng)
    return dn[:, -1] / dp[:, -1]
