"""Compiled inner loops. Everything here works on plain CSR arrays.

All kernels take an explicit ``np.random.Generator`` and release the GIL,
so callers can run independent chunks on threads with their own streams.
"""

import numpy as np
from numba import njit

_JIT = dict(nogil=True, cache=True)


@njit(**_JIT)
def _cascade(indptr, tgt, prob, seeds, gen, mark, stamp, queue):
    """One IC cascade, BFS order. Active nodes end up in ``queue[:count]``."""
    tail = 0
    for s in seeds:
        if mark[s] != stamp:
            mark[s] = stamp
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            v = tgt[e]
            if mark[v] != stamp:
                if gen.random() < prob[e]:
                    mark[v] = stamp
                    queue[tail] = v
                    tail += 1
    return tail


@njit(**_JIT)
def ic_once(indptr, tgt, prob, n, seeds, gen):
    mark = np.zeros(n, np.int64)
    queue = np.empty(n, np.int32)
    cnt = _cascade(indptr, tgt, prob, seeds, gen, mark, 1, queue)
    return queue[:cnt].copy()


@njit(**_JIT)
def ic_sizes(indptr, tgt, prob, n, seeds, sims, gen):
    mark = np.zeros(n, np.int64)
    queue = np.empty(n, np.int32)
    out = np.zeros(sims, np.int64)
    for s in range(sims):
        out[s] = _cascade(indptr, tgt, prob, seeds, gen, mark, s + 1, queue)
    return out


@njit(**_JIT)
def round_cascades(indptr, tgt, prob, n, seed_ptr, seed_nodes, sims, ni, gen):
    """Per simulation, one independent cascade per round.

    Returns ``(sims, T)`` counts: cascade sizes, or with ``ni`` the number of
    nodes not reached by any earlier round of the same simulation.
    """
    T = seed_ptr.shape[0] - 1
    out = np.zeros((sims, T), np.int64)
    mark = np.zeros(n, np.int64)
    seen = np.zeros(n, np.int64)
    queue = np.empty(n, np.int32)
    stamp = 0
    for s in range(sims):
        for t in range(T):
            lo = seed_ptr[t]
            hi = seed_ptr[t + 1]
            if lo == hi:
                continue
            stamp += 1
            cnt = _cascade(indptr, tgt, prob, seed_nodes[lo:hi], gen, mark, stamp, queue)
            if ni:
                new = 0
                for j in range(cnt):
                    v = queue[j]
                    if seen[v] != s + 1:
                        seen[v] = s + 1
                        new += 1
                out[s, t] = new
            else:
                out[s, t] = cnt
    return out


@njit(**_JIT)
def rr_rooted(indptr, src, prob, n, roots, gen):
    """Reverse BFS from each root; each in-edge of a visited node tried once.

    Returns ``(ptr, members)`` with sample ``i`` in ``members[ptr[i]:ptr[i+1]]``
    and the root always first.
    """
    cnt = roots.shape[0]
    ptr = np.zeros(cnt + 1, np.int64)
    cap = max(64, 2 * cnt)
    buf = np.empty(cap, np.int32)
    mark = np.zeros(n, np.int64)
    pos = 0
    for i in range(cnt):
        stamp = i + 1
        r = roots[i]
        if pos + 1 > cap:
            cap *= 2
            nb = np.empty(cap, np.int32)
            nb[:pos] = buf[:pos]
            buf = nb
        head = pos
        buf[pos] = r
        pos += 1
        mark[r] = stamp
        while head < pos:
            v = buf[head]
            head += 1
            for e in range(indptr[v], indptr[v + 1]):
                u = src[e]
                if mark[u] != stamp:
                    if gen.random() < prob[e]:
                        mark[u] = stamp
                        if pos >= cap:
                            cap *= 2
                            nb = np.empty(cap, np.int32)
                            nb[:pos] = buf[:pos]
                            buf = nb
                        buf[pos] = u
                        pos += 1
        ptr[i + 1] = pos
    return ptr, buf[:pos].copy()


@njit(**_JIT)
def _argmax_eligible(vals, eligible):
    best = -np.inf
    for key in range(vals.shape[0]):
        if eligible[key] and vals[key] > best:
            best = vals[key]
    if best == -np.inf:
        return -1
    tol = 1e-12 * max(1.0, abs(best))
    for key in range(vals.shape[0]):
        if eligible[key] and vals[key] >= best - tol:
            return key
    return -1


@njit(**_JIT)
def _mark_ineligible(eligible, pick, n, T, distinct, per_round, capacity):
    v = pick // T
    t = pick % T
    eligible[pick] = False
    if distinct:
        for tt in range(T):
            eligible[v * T + tt] = False
    per_round[t] += 1
    if capacity[t] >= 0 and per_round[t] >= capacity[t]:
        for u in range(n):
            eligible[u * T + t] = False


@njit(**_JIT)
def select_pw(k, n, T, w, counts0, idx_ptr, idx_samples, s_ptr, s_members,
              distinct, capacity):
    """Greedy weighted max-coverage over PW-RR sets (node-round pairs)."""
    cnt = counts0.copy()
    theta = s_ptr.shape[0] - 1
    covered = np.zeros(theta, np.bool_)
    eligible = np.ones(n * T, np.bool_)
    per_round = np.zeros(T, np.int64)
    vals = np.empty(n * T, np.float64)
    picks = np.empty(k, np.int64)
    gains = np.empty(k, np.float64)
    npick = 0
    for _ in range(k):
        for key in range(n * T):
            vals[key] = w[key % T] * cnt[key]
        pick = _argmax_eligible(vals, eligible)
        if pick < 0:
            break
        picks[npick] = pick
        gains[npick] = vals[pick]
        npick += 1
        t = pick % T
        _mark_ineligible(eligible, pick, n, T, distinct, per_round, capacity)
        for j in range(idx_ptr[pick], idx_ptr[pick + 1]):
            i = idx_samples[j]
            if not covered[i]:
                covered[i] = True
                for e in range(s_ptr[i], s_ptr[i + 1]):
                    cnt[s_members[e] * T + t] -= 1
    return picks[:npick], gains[:npick], cnt


@njit(**_JIT)
def select_mr(k, n, T, w_ext, counts0, idx_ptr, idx_samples, seg_ptr, members,
              distinct, capacity):
    """Greedy over MR-RR sets with lowest-covered-round bookkeeping.

    ``w_ext`` has length T+1 with ``w_ext[T] == 0`` (the uncovered sentinel).
    ``t_low[i]`` is the 0-based lowest covered round of sample ``i`` (T if none).
    """
    c = np.empty(n * T, np.float64)
    for key in range(n * T):
        c[key] = w_ext[key % T] * counts0[key]
    theta = (seg_ptr.shape[0] - 1) // T
    t_low = np.full(theta, T, np.int64)
    eligible = np.ones(n * T, np.bool_)
    per_round = np.zeros(T, np.int64)
    picks = np.empty(k, np.int64)
    gains = np.empty(k, np.float64)
    npick = 0
    for _ in range(k):
        pick = _argmax_eligible(c, eligible)
        if pick < 0:
            break
        picks[npick] = pick
        gains[npick] = c[pick]
        npick += 1
        v = pick // T
        t = pick % T
        _mark_ineligible(eligible, pick, n, T, distinct, per_round, capacity)
        for j in range(idx_ptr[pick], idx_ptr[pick + 1]):
            i = idx_samples[j]
            tr = t_low[i]
            if t >= tr:
                continue
            for tp in range(tr):
                seg = i * T + tp
                for e in range(seg_ptr[seg], seg_ptr[seg + 1]):
                    u = members[e]
                    if u == v and tp == t:
                        continue
                    if tp >= t:
                        c[u * T + tp] -= w_ext[tp] - w_ext[tr]
                    else:
                        c[u * T + tp] -= w_ext[t] - w_ext[tr]
            t_low[i] = t
    return picks[:npick], gains[:npick], c


@njit(**_JIT)
def random_growth(indptr, tgt, prob, n, seed_ptr, seed_nodes, d0n, d0p, z, promo,
                  ni, trajectories, gen):
    """Stochastic PA-IC trajectories: binomial natural growth + realized cascades.

    Returns ``(dn, dp)`` arrays of shape ``(trajectories, T+1)``.
    """
    T = seed_ptr.shape[0] - 1
    dn = np.empty((trajectories, T + 1), np.float64)
    dp = np.empty((trajectories, T + 1), np.float64)
    mark = np.zeros(n, np.int64)
    seen = np.zeros(n, np.int64)
    queue = np.empty(max(n, 1), np.int32)
    stamp = 0
    for s in range(trajectories):
        a = d0n
        b = d0p
        dn[s, 0] = a
        dp[s, 0] = b
        for t in range(T):
            share = a / (a + b)
            got = gen.binomial(z[t], share) if z[t] > 0 else 0
            x = 0
            lo = seed_ptr[t]
            hi = seed_ptr[t + 1]
            if hi > lo:
                stamp += 1
                cnt = _cascade(indptr, tgt, prob, seed_nodes[lo:hi], gen, mark, stamp, queue)
                if ni:
                    for j in range(cnt):
                        v = queue[j]
                        if seen[v] != s + 1:
                            seen[v] = s + 1
                            x += 1
                else:
                    x = cnt
            a = a + x + got
            b = b + (z[t] - got) + promo[t]
            dn[s, t + 1] = a
            dp[s, t + 1] = b
    return dn, dp


@njit(**_JIT)
def _live_reach(indptr, tgt, live, start_nodes, mark, stamp, queue):
    tail = 0
    for s in start_nodes:
        if mark[s] != stamp:
            mark[s] = stamp
            queue[tail] = s
            tail += 1
    head = 0
    while head < tail:
        u = queue[head]
        head += 1
        for e in range(indptr[u], indptr[u + 1]):
            if live[e]:
                v = tgt[e]
                if mark[v] != stamp:
                    mark[v] = stamp
                    queue[tail] = v
                    tail += 1
    return tail


@njit(**_JIT)
def greedy_gains(indptr, tgt, prob, n, seed_ptr, seed_nodes, w_ext, ni, candidates,
                 sims, gen):
    """Monte Carlo marginal gains of candidate pairs with common random numbers.

    Every candidate is scored on the same ``sims`` x T live-edge samples.
    ``candidates`` are keys ``v*T + t``. Gains are of the round-weighted
    objective: OI adds ``w_t`` per newly reached node in round t; NI adds
    ``w_t - w_first`` for nodes whose first covering round improves.
    """
    T = seed_ptr.shape[0] - 1
    m = tgt.shape[0]
    total = np.zeros(candidates.shape[0], np.float64)
    live = np.zeros((T, m), np.bool_)
    cur = np.zeros((T, n), np.bool_)
    first = np.empty(n, np.int64)
    mark = np.zeros(n, np.int64)
    queue = np.empty(max(n, 1), np.int32)
    stamp = 0
    for s in range(sims):
        for t in range(T):
            for e in range(m):
                live[t, e] = gen.random() < prob[e]
            for u in range(n):
                cur[t, u] = False
            stamp += 1
            cnt = _live_reach(indptr, tgt, live[t], seed_nodes[seed_ptr[t]:seed_ptr[t + 1]],
                              mark, stamp, queue)
            for j in range(cnt):
                cur[t, queue[j]] = True
        if ni:
            for u in range(n):
                first[u] = T
                for t in range(T):
                    if cur[t, u]:
                        first[u] = t
                        break
        for ci in range(candidates.shape[0]):
            key = candidates[ci]
            v = key // T
            t = key % T
            stamp += 1
            one = np.empty(1, np.int32)
            one[0] = v
            cnt = _live_reach(indptr, tgt, live[t], one, mark, stamp, queue)
            g = 0.0
            for j in range(cnt):
                x = queue[j]
                if ni:
                    if first[x] > t:
                        g += w_ext[t] - w_ext[first[x]]
                elif not cur[t, x]:
                    g += w_ext[t]
            total[ci] += g
    return total / sims
