"""Reverse-reachable sampling: plain, pair-wise (PW) and multi-round (MR) sets.

A collection stores every sample as one or more CSR segments of member
nodes. PW collections have one segment per sample plus a round tag; MR
collections have T segments per sample (one independent reverse BFS per
round, all sharing the same root). The inverted index maps each key
``v*T + (t-1)`` to the ids of samples containing ``(v, t)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .diffusion import SIM_CHUNK
from .graph import InfluenceGraph
from .paic import RoundWeights, SeedAllocation
from .rng import RngStream, as_stream

KINDS = ("PW", "MR")


class CollectionError(ValueError):
    pass


@dataclass(frozen=True)
class RRSet:
    root: int
    members: frozenset


@dataclass(frozen=True)
class PWRRSet:
    rr: RRSet
    round: int


@dataclass(frozen=True)
class MRRRSet:
    root: int
    per_round: tuple


def _weights_array(weights, T: int) -> np.ndarray:
    w = weights.as_array() if isinstance(weights, RoundWeights) else np.asarray(weights, float)
    if w.shape != (T,):
        raise CollectionError(f"expected {T} round weights, got {w.size}")
    return w


def gen_rr_set(graph: InfluenceGraph, rng, root: int | None = None) -> RRSet:
    """One RR set; the root is uniform over V unless given."""
    gen = as_stream(rng).generator()
    if root is None:
        root = int(gen.integers(graph.n))
    indptr, src, prob, _ = graph.reverse_csr()
    ptr, members = _kernels.rr_rooted(indptr, src, prob, graph.n,
                                      np.array([root], dtype=np.int32), gen)
    return RRSet(root, frozenset(int(v) for v in members))


def gen_pw_rr(graph: InfluenceGraph, T: int, rng) -> PWRRSet:
    gen = as_stream(rng).generator()
    root = int(gen.integers(graph.n))
    t = int(gen.integers(T)) + 1
    indptr, src, prob, _ = graph.reverse_csr()
    _, members = _kernels.rr_rooted(indptr, src, prob, graph.n,
                                    np.array([root], dtype=np.int32), gen)
    return PWRRSet(RRSet(root, frozenset(int(v) for v in members)), t)


def gen_mr_rr(graph: InfluenceGraph, T: int, rng) -> MRRRSet:
    gen = as_stream(rng).generator()
    root = int(gen.integers(graph.n))
    indptr, src, prob, _ = graph.reverse_csr()
    ptr, members = _kernels.rr_rooted(indptr, src, prob, graph.n,
                                      np.full(T, root, dtype=np.int32), gen)
    return MRRRSet(root, tuple(frozenset(int(v) for v in members[ptr[i]:ptr[i + 1]])
                               for i in range(T)))


def _generate_chunk(graph: InfluenceGraph, kind: str, T: int, count: int, stream: RngStream):
    gen = stream.generator()
    roots = gen.integers(graph.n, size=count).astype(np.int32)
    rounds = gen.integers(T, size=count).astype(np.int32) if kind == "PW" else None
    indptr, src, prob, _ = graph.reverse_csr()
    bfs_roots = roots if kind == "PW" else np.repeat(roots, T)
    ptr, members = _kernels.rr_rooted(indptr, src, prob, graph.n, bfs_roots, gen)
    return roots, rounds, ptr, members


class RRCollection:
    """Append-only bag of PW-RR or MR-RR samples with an inverted index."""

    def __init__(self, kind: str, n: int, T: int):
        if kind not in KINDS:
            raise CollectionError(f"unknown collection kind {kind!r}")
        if T < 1 or n < 1:
            raise CollectionError("need n >= 1 and T >= 1")
        self.kind = kind
        self.n = int(n)
        self.T = int(T)
        self.roots = np.zeros(0, np.int32)
        self.rounds = np.zeros(0, np.int32)  # PW only, 0-based
        self.seg_ptr = np.zeros(1, np.int64)
        self.members = np.zeros(0, np.int32)
        self._index = None
        self._batches = 0

    # construction ---------------------------------------------------------------

    @property
    def theta(self) -> int:
        return int(self.roots.shape[0])

    def __len__(self):
        return self.theta

    def _append(self, roots, rounds, ptr, members):
        base = self.seg_ptr[-1]
        self.seg_ptr = np.concatenate([self.seg_ptr, ptr[1:] + base])
        self.members = np.concatenate([self.members, members.astype(np.int32)])
        self.roots = np.concatenate([self.roots, roots.astype(np.int32)])
        if self.kind == "PW":
            self.rounds = np.concatenate([self.rounds, rounds.astype(np.int32)])
        self._index = None

    def extend(self, graph: InfluenceGraph, count: int, rng, workers: int | None = None):
        """Append ``count`` fresh samples.

        Each call draws from its own child stream (keyed by the batch number),
        split into fixed-size chunks so the result does not depend on ``workers``.
        """
        if graph.n != self.n:
            raise CollectionError("graph size does not match collection")
        if count <= 0:
            return self
        stream = as_stream(rng).child("rr", self.kind, self._batches)
        self._batches += 1
        chunks = [(c, min(SIM_CHUNK, count - c)) for c in range(0, count, SIM_CHUNK)]

        def run(item):
            start, size = item
            return _generate_chunk(graph, self.kind, self.T, size, stream.child(start))

        if workers and workers > 1 and len(chunks) > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(c) for c in chunks]
        for part in parts:
            self._append(*part)
        return self

    @classmethod
    def generate(cls, graph: InfluenceGraph, kind: str, T: int, count: int, rng,
                 workers: int | None = None) -> "RRCollection":
        return cls(kind, graph.n, T).extend(graph, count, rng, workers)

    @classmethod
    def from_samples(cls, kind: str, n: int, T: int, samples: Sequence) -> "RRCollection":
        """Build from explicit samples.

        PW samples are ``(members, round)`` with 1-based rounds; MR samples are
        length-T sequences of member sets. The first member listed is taken as
        the root (for sets, the smallest id).
        """
        coll = cls(kind, n, T)
        roots, rounds, lens, flat = [], [], [], []

        def ordered(ms):
            ms = sorted(ms) if isinstance(ms, (set, frozenset)) else list(ms)
            if not ms:
                raise CollectionError("empty RR set")
            return ms

        for s in samples:
            if kind == "PW":
                ms, t = s
                if not 1 <= t <= T:
                    raise CollectionError(f"round {t} outside [1, {T}]")
                ms = ordered(ms)
                roots.append(ms[0])
                rounds.append(t - 1)
                lens.append(len(ms))
                flat.extend(ms)
            else:
                if len(s) != T:
                    raise CollectionError(f"MR sample needs {T} per-round sets")
                segs = [ordered(ms) for ms in s]
                roots.append(segs[0][0])
                for seg in segs:
                    lens.append(len(seg))
                    flat.extend(seg)
        ptr = np.zeros(len(lens) + 1, np.int64)
        np.cumsum(lens, out=ptr[1:])
        members = np.array(flat, dtype=np.int32)
        if members.size and (members.min() < 0 or members.max() >= n):
            raise CollectionError("member outside [0, n)")
        coll._append(np.array(roots, np.int32), np.array(rounds, np.int32), ptr, members)
        return coll

    # index ----------------------------------------------------------------------

    def _entry_keys(self):
        """For every stored member: its key ``v*T + t`` and its sample id."""
        seg_len = np.diff(self.seg_ptr)
        nseg = seg_len.shape[0]
        seg_ids = np.repeat(np.arange(nseg, dtype=np.int64), seg_len)
        if self.kind == "PW":
            t = self.rounds.astype(np.int64)[seg_ids]
            sample = seg_ids
        else:
            t = seg_ids % self.T
            sample = seg_ids // self.T
        return self.members.astype(np.int64) * self.T + t, sample

    def index(self):
        """``(idx_ptr, idx_samples)``: samples containing key in ``idx_samples[idx_ptr[key]:idx_ptr[key+1]]``."""
        if self._index is None:
            keys, sample = self._entry_keys()
            order = np.argsort(keys, kind="stable")
            idx_ptr = np.zeros(self.n * self.T + 1, np.int64)
            np.cumsum(np.bincount(keys, minlength=self.n * self.T), out=idx_ptr[1:])
            self._index = (idx_ptr, sample[order].astype(np.int64))
        return self._index

    def samples_containing(self, v: int, t: int) -> np.ndarray:
        idx_ptr, idx_samples = self.index()
        key = v * self.T + (t - 1)
        return idx_samples[idx_ptr[key]:idx_ptr[key + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.index()[0])

    def total_members(self) -> int:
        return int(self.members.shape[0])

    # sample access --------------------------------------------------------------

    def segment(self, j: int) -> np.ndarray:
        return self.members[self.seg_ptr[j]:self.seg_ptr[j + 1]]

    def sample(self, i: int):
        if self.kind == "PW":
            ms = self.segment(i)
            return PWRRSet(RRSet(int(self.roots[i]), frozenset(ms.tolist())), int(self.rounds[i]) + 1)
        return MRRRSet(int(self.roots[i]), tuple(frozenset(self.segment(i * self.T + t).tolist())
                                                 for t in range(self.T)))

    # estimators -----------------------------------------------------------------

    def _segment_cover(self, allocation: SeedAllocation) -> np.ndarray:
        if allocation.max_round > self.T:
            raise CollectionError(f"allocation uses round {allocation.max_round} > T={self.T}")
        chosen = np.zeros(self.n * self.T, np.bool_)
        for v, t in allocation.pairs:
            chosen[v * self.T + t - 1] = True
        keys, _ = self._entry_keys()
        hit = chosen[keys].astype(np.int64)
        nseg = self.seg_ptr.shape[0] - 1
        out = np.zeros(nseg, np.bool_)
        nonempty = np.diff(self.seg_ptr) > 0
        if hit.size:
            sums = np.add.reduceat(hit, self.seg_ptr[:-1][nonempty])
            out[nonempty] = sums > 0
        return out

    def _require(self, kind):
        if self.kind != kind:
            raise CollectionError(f"operation needs a {kind} collection, got {self.kind}")
        if self.theta == 0:
            raise CollectionError("collection is empty")

    def pw_values(self, allocation, weights) -> np.ndarray:
        """Per-sample ``w_{t_i} * 1{covered}``."""
        self._require("PW")
        w = _weights_array(weights, self.T)
        return w[self.rounds] * self._segment_cover(allocation)

    def mr_values(self, allocation, weights) -> np.ndarray:
        """Per-sample max weight over covered rounds (0 when none covered)."""
        self._require("MR")
        w_ext = np.append(_weights_array(weights, self.T), 0.0)
        cov = self._segment_cover(allocation).reshape(self.theta, self.T)
        first = np.where(cov.any(axis=1), cov.argmax(axis=1), self.T)
        return w_ext[first]

    # binary dump ----------------------------------------------------------------

    _MAGIC = b"PRRC\x01"

    def dump(self, path):
        with open(path, "wb") as fh:
            fh.write(self._MAGIC)
            fh.write(struct.pack("<2sqqq", self.kind.encode(), self.n, self.T, self.theta))
            segs_per = 1 if self.kind == "PW" else self.T
            for i in range(self.theta):
                fh.write(struct.pack("<i", int(self.roots[i])))
                if self.kind == "PW":
                    fh.write(struct.pack("<i", int(self.rounds[i])))
                for j in range(i * segs_per, (i + 1) * segs_per):
                    seg = self.segment(j)
                    fh.write(struct.pack("<q", seg.shape[0]))
                    fh.write(seg.astype("<i4").tobytes())

    @classmethod
    def load(cls, path) -> "RRCollection":
        with open(path, "rb") as fh:
            data = fh.read()
        if not data.startswith(cls._MAGIC):
            raise CollectionError("not an RR collection dump")
        pos = len(cls._MAGIC)
        kind, n, T, theta = struct.unpack_from("<2sqqq", data, pos)
        pos += struct.calcsize("<2sqqq")
        kind = kind.decode()
        coll = cls(kind, n, T)
        segs_per = 1 if kind == "PW" else T
        roots, rounds, lens, chunks = [], [], [], []
        for _ in range(theta):
            (root,) = struct.unpack_from("<i", data, pos)
            pos += 4
            roots.append(root)
            if kind == "PW":
                (t,) = struct.unpack_from("<i", data, pos)
                pos += 4
                rounds.append(t)
            for _ in range(segs_per):
                (ln,) = struct.unpack_from("<q", data, pos)
                pos += 8
                chunks.append(np.frombuffer(data, "<i4", ln, pos).astype(np.int32))
                pos += 4 * ln
                lens.append(ln)
        ptr = np.zeros(len(lens) + 1, np.int64)
        np.cumsum(lens, out=ptr[1:])
        members = np.concatenate(chunks) if chunks else np.zeros(0, np.int32)
        coll._append(np.array(roots, np.int32), np.array(rounds, np.int32), ptr, members)
        return coll


@dataclass(frozen=True)
class CoverageEstimate:
    value: float
    se: float
    theta: int


def rho_hat(collection: RRCollection, allocation: SeedAllocation, weights,
            with_se: bool = False):
    """(N*T/theta) * sum_i w_{t_i} * 1{allocation covers sample i in its round}."""
    y = collection.pw_values(allocation, weights)
    scale = collection.n * collection.T
    value = scale * float(y.mean())
    if not with_se:
        return value
    se = scale * float(y.std(ddof=1)) / np.sqrt(y.size) if y.size > 1 else 0.0
    return CoverageEstimate(value, se, collection.theta)


def rho_hat_ni(collection: RRCollection, allocation: SeedAllocation, weights,
               with_se: bool = False):
    """(N/theta) * sum_i max{w_t : allocation covers round t of sample i}."""
    y = collection.mr_values(allocation, weights)
    value = collection.n * float(y.mean())
    if not with_se:
        return value
    se = collection.n * float(y.std(ddof=1)) / np.sqrt(y.size) if y.size > 1 else 0.0
    return CoverageEstimate(value, se, collection.theta)
