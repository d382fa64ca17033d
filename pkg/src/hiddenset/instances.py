"""Problem instances: dense observations on K_n and labelled sparse regular graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .noise import NoiseSpec, UnsupportedTransform

IID = "iid"
FIXED_SIZE = "fixed-size"
SAMPLING_MODES = (IID, FIXED_SIZE)


class GraphError(ValueError):
    pass


def sample_hidden_set(n: int, k: int, rng_seed: int) -> np.ndarray:
    """Uniform random k-subset of range(n), sorted."""
    if k < 0 or k > n:
        raise ValueError(f"invalid hidden set size k={k} for n={n}")
    gen = rngmod.stream(rng_seed, rngmod.HIDDEN_SET)
    return np.sort(gen.choice(n, size=k, replace=False)).astype(np.int64)


@dataclass(frozen=True, eq=False)
class DenseInstance:
    n: int
    hidden_set: np.ndarray
    W: np.ndarray = field(repr=False)
    seed: int
    noise: NoiseSpec

    @property
    def k(self) -> int:
        return int(self.hidden_set.size)

    @property
    def kappa(self) -> float:
        return self.k / math.sqrt(self.n)


def gen_dense_instance(n: int, hidden_set, noise: NoiseSpec, rng_seed: int) -> DenseInstance:
    hidden = np.unique(np.asarray(hidden_set, dtype=np.int64))
    if hidden.size and (hidden[0] < 0 or hidden[-1] >= n):
        raise IndexError("hidden set index out of range")
    gen = rngmod.stream(rng_seed, rngmod.DENSE_WEIGHTS)
    W = np.triu(noise.sample_q0(gen, (n, n)), 1)
    if hidden.size > 1:
        k = hidden.size
        block = np.triu(noise.sample_q1(gen, (k, k)), 1)
        W[np.ix_(hidden, hidden)] = block
    W += W.T
    W.setflags(write=False)
    hidden.setflags(write=False)
    return DenseInstance(n=n, hidden_set=hidden, W=W, seed=int(rng_seed), noise=noise)


def planted_instance(n: int, k: int, noise: NoiseSpec, seed: int) -> DenseInstance:
    """Fixed-size hidden set plus weights, both from one seed."""
    return gen_dense_instance(n, sample_hidden_set(n, k, seed), noise, seed)


def normalize(instance: DenseInstance) -> np.ndarray:
    return instance.W / math.sqrt(instance.n)


def likelihood_transform(instance: DenseInstance, noise: NoiseSpec | None = None):
    """Entrywise (dQ1/dQ0(W) - 1)/sqrt(n), plus the matching lambda-tilde."""
    noise = noise or instance.noise
    off = ~np.eye(instance.n, dtype=bool)
    A = np.zeros((instance.n, instance.n))
    A[off] = (noise.likelihood_ratio(instance.W[off]) - 1.0) / math.sqrt(instance.n)
    return A, noise.lambda_tilde()


def gen_regular_graph(n: int, degree: int, rng_seed: int, max_restarts: int = 1000) -> np.ndarray:
    """Simple `degree`-regular graph on n vertices as an (m, 2) edge array with u < v.

    Stubs are paired at random; pairs that would form a loop or a repeated
    edge go back into the pool and are re-paired. A pool that can no longer
    be completed triggers a full restart.
    """
    if degree < 0 or n <= 0:
        raise GraphError("n must be positive and degree non-negative")
    if (n * degree) % 2:
        raise GraphError("n * degree must be even")
    if degree >= n:
        raise GraphError("degree must be smaller than n")
    gen = rngmod.stream(rng_seed, rngmod.GRAPH)
    if degree == 0:
        return np.empty((0, 2), dtype=np.int64)
    for _ in range(max_restarts):
        edges = _try_pairing(n, degree, gen)
        if edges is not None:
            return edges
    raise GraphError("failed to generate a simple regular graph")


def _try_pairing(n, degree, gen):
    stubs = np.repeat(np.arange(n, dtype=np.int64), degree)
    keys = np.empty(0, dtype=np.int64)
    stalls = 0
    while stubs.size:
        gen.shuffle(stubs)
        u, v = stubs[0::2], stubs[1::2]
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        key = lo * n + hi
        ok = lo != hi
        ok &= ~np.isin(key, keys)
        # keep only the first copy of an edge proposed twice in this round
        _, first = np.unique(key, return_index=True)
        dup = np.ones(key.size, dtype=bool)
        dup[first] = False
        ok &= ~dup
        if ok.any():
            keys = np.concatenate([keys, key[ok]])
            stubs = np.concatenate([u[~ok], v[~ok]])
            stalls = 0
        else:
            stalls += 1
            if stalls > 20 or not _completable(stubs, keys, n):
                return None
    keys.sort()
    return np.stack([keys // n, keys % n], axis=1)


def _completable(stubs, keys, n):
    nodes = np.unique(stubs)
    existing = set(keys.tolist())
    for a in range(nodes.size):
        for b in range(a + 1, nodes.size):
            if nodes[a] * n + nodes[b] not in existing:
                return True
    return False


def neighbors(n: int, edges: np.ndarray):
    """CSR adjacency (indptr, indices) with neighbour lists sorted."""
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst


def tree_ball_fraction(n: int, edges: np.ndarray, radius: int, sample=None) -> float:
    """Fraction of (sampled) vertices whose radius-`radius` ball is a tree."""
    indptr, nbr = neighbors(n, edges)
    verts = range(n) if sample is None else sample
    good = total = 0
    for root in verts:
        total += 1
        seen = {int(root): -1}
        frontier = [int(root)]
        is_tree = True
        for _ in range(radius):
            nxt = []
            for x in frontier:
                for y in nbr[indptr[x]:indptr[x + 1]]:
                    y = int(y)
                    if y == seen[x]:
                        continue
                    if y in seen:
                        is_tree = False
                        break
                    seen[y] = x
                    nxt.append(y)
                if not is_tree:
                    break
            if not is_tree:
                break
            frontier = nxt
        good += is_tree
    return good / total


def kappa_tilde(kappa: float, delta: int) -> float:
    return kappa / (1.0 + kappa / math.sqrt(delta))


def label_probability(kappa: float, delta: int) -> float:
    return kappa_tilde(kappa, delta) / math.sqrt(delta)


@dataclass(frozen=True, eq=False)
class SparseInstance:
    n: int
    delta: int
    edges: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    kappa: float
    sampling_mode: str
    seed: int
    noise: NoiseSpec = field(default_factory=NoiseSpec.rademacher_clique)

    @property
    def hidden_set(self) -> np.ndarray:
        return np.flatnonzero(self.labels).astype(np.int64)


def gen_sparse_instance(n: int, delta: int, kappa: float, noise: NoiseSpec | None = None,
                        sampling_mode: str = IID, rng_seed: int = 0) -> SparseInstance:
    if delta < 2:
        raise ValueError("delta must be at least 2")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if sampling_mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {sampling_mode!r}")
    noise = noise or NoiseSpec.rademacher_clique()
    edges = gen_regular_graph(n, delta + 1, rng_seed)
    p = label_probability(kappa, delta)
    if sampling_mode == IID:
        labels = (rngmod.stream(rng_seed, rngmod.LABELS).random(n) < p).astype(np.uint8)
    else:
        labels = np.zeros(n, dtype=np.uint8)
        labels[sample_hidden_set(n, int(round(n * p)), rng_seed)] = 1
    gen = rngmod.stream(rng_seed, rngmod.SPARSE_WEIGHTS)
    weights = noise.sample_q0(gen, edges.shape[0])
    inside = (labels[edges[:, 0]] == 1) & (labels[edges[:, 1]] == 1)
    if inside.any():
        weights[inside] = noise.sample_q1(gen, int(inside.sum()))
    for arr in (edges, labels, weights):
        arr.setflags(write=False)
    return SparseInstance(n=n, delta=delta, edges=edges, labels=labels, weights=weights,
                          kappa=float(kappa), sampling_mode=sampling_mode, seed=int(rng_seed),
                          noise=noise)


__all__ = [
    "DenseInstance", "SparseInstance", "GraphError", "UnsupportedTransform", "IID", "FIXED_SIZE",
    "sample_hidden_set", "gen_dense_instance", "planted_instance", "normalize",
    "likelihood_transform", "gen_regular_graph", "gen_sparse_instance", "neighbors",
    "tree_ball_fraction", "kappa_tilde", "label_probability",
]
