"""PRM-IMM: greedy node selection over RR collections and the IMM-style sampling loop.

The OINS routine maximizes weighted coverage of PW-RR sets under the
one-round-per-node constraint. The NIOS routine maximizes the max-weight
coverage of MR-RR sets over all (node, round) pairs. Both are wrapped by
the same halving loop that estimates a lower bound on the optimum before
sizing the final collection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import InfluenceGraph
from .paic import RoundWeights, ScenarioConfig, SeedAllocation, round_weights
from .rng import as_stream
from .rr import CollectionError, RRCollection, rho_hat, rho_hat_ni


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class ImmParams:
    """Accuracy ``epsilon``, failure exponent ``ell`` (success w.p. 1 - 1/N^ell), budget ``k``.

    ``eps_prime`` overrides the halving-phase accuracy (default sqrt(2)*epsilon).
    """

    epsilon: float = 0.1
    ell: float = 1.0
    k: int = 1
    eps_prime: float | None = None

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise SelectionError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if self.ell <= 0:
            raise SelectionError(f"ell must be > 0, got {self.ell}")
        if int(self.k) != self.k or self.k < 1:
            raise SelectionError(f"k must be a positive integer, got {self.k}")
        if self.eps_prime is not None and self.eps_prime <= 0:
            raise SelectionError("eps_prime must be > 0")

    @property
    def epsilon_prime(self) -> float:
        return self.eps_prime if self.eps_prime is not None else math.sqrt(2.0) * self.epsilon


@dataclass
class SelectionTrace:
    lower_bound: float = 0.0
    theta_final: int = 0
    iterations: list = field(default_factory=list)  # (i, x_i, theta_i, rho_hat)
    alpha: float = 0.0
    beta: float = 0.0
    broke_at: int | None = None
    gains: list = field(default_factory=list)
    picks: list = field(default_factory=list)
    estimate: float = 0.0

    def rows(self):
        """Flat records for logging."""
        out = [{"phase": "halving", "i": i, "x": x, "theta": th, "rho_hat": r}
               for i, x, th, r in self.iterations]
        out.append({"phase": "final", "i": None, "x": self.lower_bound,
                    "theta": self.theta_final, "rho_hat": self.estimate})
        return out


# ---------------------------------------------------------------------------
# greedy node selection
# ---------------------------------------------------------------------------


def _capacity_array(capacity, T):
    if capacity is None:
        return np.full(T, -1, np.int64)
    cap = np.asarray(capacity, dtype=np.int64)
    if cap.shape != (T,) or (cap < 0).any():
        raise SelectionError(f"capacity must be {T} non-negative integers")
    return cap


def _weights(weights, T, monotone=True) -> np.ndarray:
    """Weight vector as an array.

    Max-weight coverage (NI settings) relies on the lowest covered round
    carrying the largest weight, so it requires non-increasing weights.
    Pair-wise coverage (OI settings) accepts any non-negative weights.
    """
    w = weights.as_array() if isinstance(weights, RoundWeights) else np.asarray(weights, float)
    if w.shape != (T,):
        raise SelectionError(f"expected {T} weights, got {w.size}")
    if (w < 0).any():
        raise SelectionError("weights must be non-negative")
    if monotone and (np.diff(w) > 1e-12 * max(1.0, float(w.max()))).any():
        raise SelectionError("weights must be non-increasing for non-overlapping influence")
    return w


def _check_k(k, n, T, distinct):
    if int(k) != k or k < 0:
        raise SelectionError(f"k must be a non-negative integer, got {k}")
    limit = n if distinct else n * T
    if k > limit:
        what = "N (distinct nodes)" if distinct else "N*T (distinct pairs)"
        raise SelectionError(f"k={k} exceeds {what} = {limit}")


def _pairs(picks, T):
    return [(int(p) // T, int(p) % T + 1) for p in picks]


def greedy_pw(collection: RRCollection, k: int, weights, distinct: bool = True,
              capacity=None):
    """Greedy weighted max-coverage; returns (allocation, gains, pairs in pick order)."""
    if collection.kind != "PW":
        raise CollectionError(f"OI selection needs a PW collection, got {collection.kind}")
    T, n = collection.T, collection.n
    _check_k(k, n, T, distinct)
    w = _weights(weights, T, monotone=False)
    idx_ptr, idx_samples = collection.index()
    counts0 = np.diff(idx_ptr)
    picks, gains, _ = _kernels.select_pw(int(k), n, T, w, counts0, idx_ptr, idx_samples,
                                         collection.seg_ptr, collection.members, distinct,
                                         _capacity_array(capacity, T))
    order = _pairs(picks, T)
    return SeedAllocation(order, "OINS" if distinct else "OIOS"), gains.tolist(), order


def greedy_mr(collection: RRCollection, k: int, weights, distinct: bool = False,
              capacity=None):
    """Greedy max-weight coverage with lowest-covered-round bookkeeping; returns (allocation, gains, pick order)."""
    if collection.kind != "MR":
        raise CollectionError(f"NI selection needs an MR collection, got {collection.kind}")
    T, n = collection.T, collection.n
    _check_k(k, n, T, distinct)
    w_ext = np.append(_weights(weights, T), 0.0)
    idx_ptr, idx_samples = collection.index()
    counts0 = np.diff(idx_ptr)
    picks, gains, _ = _kernels.select_mr(int(k), n, T, w_ext, counts0, idx_ptr, idx_samples,
                                         collection.seg_ptr, collection.members, distinct,
                                         _capacity_array(capacity, T))
    order = _pairs(picks, T)
    return SeedAllocation(order, "NINS" if distinct else "NIOS"), gains.tolist(), order


def node_selection_oins(collection: RRCollection, k: int, weights, capacity=None,
                        distinct: bool = True) -> SeedAllocation:
    return greedy_pw(collection, k, weights, distinct, capacity)[0]


def node_selection_nios(collection: RRCollection, k: int, weights, capacity=None,
                        distinct: bool = False) -> SeedAllocation:
    return greedy_mr(collection, k, weights, distinct, capacity)[0]


# ---------------------------------------------------------------------------
# sampling loop
# ---------------------------------------------------------------------------


def log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def alpha_beta(N: int, T: int, k: int, ell: float, overlapping_seeds: bool):
    """Concentration constants; the pair-selection form counts C(NT, k) solutions."""
    alpha = math.sqrt(ell * math.log(N) + math.log(4))
    if overlapping_seeds:
        beta = math.sqrt(0.5 * (log_binom(N * T, k) + alpha ** 2))
    else:
        beta = math.sqrt(0.5 * (log_binom(N, k) + alpha ** 2 + k * math.log(T)))
    return alpha, beta


def theta_halving(w1, N, T, eps_prime, beta, x):
    num = w1 * N * T * (2 + 2.0 / 3.0 * eps_prime) * (math.log(math.log2(N)) + 2 * beta ** 2)
    return int(math.ceil(num / (eps_prime ** 2 * x)))


def theta_final(w1, N, T, epsilon, alpha, beta, lb):
    return int(math.ceil(2 * w1 * N * T * (0.5 * alpha + beta) ** 2 / (lb * epsilon ** 2)))


def prm_imm(graph: InfluenceGraph, T: int, weights, params: ImmParams, rng, *,
            setting: str = "OINS", capacity=None, workers=None, max_theta: int | None = None):
    """Run the halving loop and final selection for any of the four settings.

    OI settings sample PW-RR sets; NI settings sample MR-RR sets. NS settings
    restrict each node to one round. Returns ``(allocation, trace)``.
    """
    N = graph.n
    if N < 2:
        raise SelectionError("need at least 2 nodes")
    oi = setting.startswith("OI")
    distinct = setting.endswith("NS")
    kind = "PW" if oi else "MR"
    k = params.k
    _check_k(k, N, T, distinct)
    w = _weights(weights, T, monotone=not oi)
    w1 = float(w.max())
    if w1 <= 0:
        raise SelectionError("first-round weight must be positive")
    eps, eps_p = params.epsilon, params.epsilon_prime
    alpha, beta = alpha_beta(N, T, k, params.ell, overlapping_seeds=not distinct)
    trace = SelectionTrace(lower_bound=w1, alpha=alpha, beta=beta)
    stream = as_stream(rng).child("prm-imm", setting)
    select = greedy_pw if oi else greedy_mr
    estimate = rho_hat if oi else rho_hat_ni

    def cap(theta):
        return theta if max_theta is None else min(theta, max_theta)

    coll = RRCollection(kind, N, T)
    lb = w1
    for i in range(1, int(math.floor(math.log2(N)))):
        x = float(w.sum()) * N / 2 ** i
        th = cap(theta_halving(w1, N, T, eps_p, beta, x))
        coll.extend(graph, th - coll.theta, stream.child("halving"), workers)
        alloc = select(coll, k, w, distinct, capacity)[0]
        est = estimate(coll, alloc, w)
        trace.iterations.append((i, x, th, est))
        if est >= (1 + eps_p) * x:
            lb = est / (1 + eps_p)
            trace.broke_at = i
            break
    lb = max(w1, lb)
    th = cap(theta_final(w1, N, T, eps, alpha, beta, lb))
    trace.lower_bound = lb
    trace.theta_final = th
    final = RRCollection.generate(graph, kind, T, th, stream.child("final"), workers)
    alloc, gains, order = select(final, k, w, distinct, capacity)
    trace.gains = gains
    trace.picks = order
    trace.estimate = estimate(final, alloc, w)
    return alloc, trace


def _config_weights(config: ScenarioConfig, weights):
    return round_weights(config) if weights is None else weights


def prm_imm_oins(graph, config: ScenarioConfig, params: ImmParams, rng, weights=None,
                 capacity=None, workers=None, max_theta=None):
    return prm_imm(graph, config.T, _config_weights(config, weights), params, rng,
                   setting="OINS", capacity=capacity, workers=workers, max_theta=max_theta)


def prm_imm_nios(graph, config: ScenarioConfig, params: ImmParams, rng, weights=None,
                 capacity=None, workers=None, max_theta=None):
    return prm_imm(graph, config.T, _config_weights(config, weights), params, rng,
                   setting="NIOS", capacity=capacity, workers=workers, max_theta=max_theta)


def prm_imm_for_setting(graph, config: ScenarioConfig, params: ImmParams, rng, weights=None,
                        setting=None, **kw):
    return prm_imm(graph, config.T, _config_weights(config, weights), params, rng,
                   setting=setting or config.setting, **kw)


def imm_single_round(graph: InfluenceGraph, k: int, params: ImmParams, rng,
                     workers=None, max_theta=None) -> list[int]:
    """Classic IMM: k nodes in greedy pick order (the T=1, w_1=1 specialization)."""
    if k == 0:
        return []
    p = ImmParams(params.epsilon, params.ell, k, params.eps_prime)
    _, trace = prm_imm(graph, 1, [1.0], p, as_stream(rng).child("imm"), setting="OINS",
                       workers=workers, max_theta=max_theta)
    return [v for v, _ in trace.picks]
