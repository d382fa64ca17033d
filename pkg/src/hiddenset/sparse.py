"""Belief propagation on labelled regular graphs and its tree-level analysis.

All odds ratios are kept as natural logs. One factor of the BP product is

    (1 + (1 + W) g) / (1 + g),   g = gamma / sqrt(delta),

for the two-point model (Q0 uniform on +-1, Q1 = point mass at +1), so its
log is log1p(2g) - log1p(g) for W = +1 and -log1p(g) for W = -1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .instances import SparseInstance, kappa_tilde, label_probability
from .state_evolution import SparseSETrace


class UnsupportedModel(ValueError):
    pass


def _log_factor(w, log_gamma, sqrt_delta):
    g = np.exp(log_gamma) / sqrt_delta
    return np.where(w > 0, np.log1p(2.0 * g), 0.0) - np.log1p(g)


# -- graph BP ----------------------------------------------------------------------

@dataclass
class DirectedEdges:
    """Both orientations of every edge; edge e goes src[e] -> dst[e], rev[e] is its reverse."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    rev: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_instance(cls, inst: SparseInstance):
        m = inst.edges.shape[0]
        src = np.concatenate([inst.edges[:, 0], inst.edges[:, 1]])
        dst = np.concatenate([inst.edges[:, 1], inst.edges[:, 0]])
        rev = np.concatenate([np.arange(m, 2 * m), np.arange(m)])
        w = np.concatenate([inst.weights, inst.weights])
        return cls(inst.n, src, dst, rev, w)

    def __len__(self):
        return self.src.size


@dataclass
class BPState:
    t: int
    log_gamma: np.ndarray = field(repr=False)          # per directed edge, gamma_{src -> dst}
    log_vertex_gamma: np.ndarray | None = field(default=None, repr=False)

    @property
    def gamma(self):
        return np.exp(self.log_gamma)

    @property
    def vertex_gamma(self):
        return None if self.log_vertex_gamma is None else np.exp(self.log_vertex_gamma)


def _check_two_point(inst: SparseInstance):
    if not inst.noise.is_two_point:
        raise UnsupportedModel("BP is implemented for Q1 = point mass at +1, Q0 uniform on +-1 only")


def bp_init(graph) -> BPState:
    """All directed messages equal to 1 (log 0); vertex values unset."""
    n_dir = len(graph) if isinstance(graph, DirectedEdges) else 2 * np.asarray(graph).shape[0]
    return BPState(0, np.zeros(n_dir))


def bp_iterate(state: BPState, inst: SparseInstance, edges: DirectedEdges | None = None) -> BPState:
    """Synchronous update of every directed message and every vertex odds ratio.

    gamma_{i->j} = kappa * prod_{l in di \\ j} factor(W_il, gamma_{l->i});
    gamma_i      = kappa * prod_{l in di} factor(W_il, gamma_{l->i}).
    The vertex prefactor is kappa (prior odds kappa/sqrt(delta)), which makes
    gamma_i / sqrt(delta) the exact posterior odds on trees.
    """
    _check_two_point(inst)
    edges = edges or DirectedEdges.from_instance(inst)
    sd = math.sqrt(inst.delta)
    lk = math.log(inst.kappa)
    phi = _log_factor(edges.weight, state.log_gamma, sd)   # term carried by l -> i into i
    total = np.bincount(edges.dst, weights=phi, minlength=inst.n)
    new = lk + total[edges.src] - phi[edges.rev]
    return BPState(state.t + 1, new, lk + total)


def run_bp(inst: SparseInstance, t: int) -> BPState:
    edges = DirectedEdges.from_instance(inst)
    state = bp_init(edges)
    for _ in range(t):
        state = bp_iterate(state, inst, edges)
    return state


def bp_estimate(state: BPState, delta: int) -> np.ndarray:
    """Vertices with gamma_i >= sqrt(delta)."""
    if state.log_vertex_gamma is None:
        raise ValueError("vertex odds not computed yet; run at least one iteration")
    return np.flatnonzero(state.log_vertex_gamma >= 0.5 * math.log(delta)).astype(np.int64)


def symdiff_rate(estimate, labels) -> float:
    labels = np.asarray(labels)
    est = np.zeros(labels.size, dtype=bool)
    est[np.asarray(estimate, dtype=np.int64)] = True
    return float(np.mean(est != (labels == 1)))


# -- tree population dynamics --------------------------------------------------------

@dataclass
class TreePopulation:
    """Samples of log gamma^t(0) and log gamma^t(1) on Tree(t)."""

    t: int
    log_pool0: np.ndarray = field(repr=False)
    log_pool1: np.ndarray = field(repr=False)
    kappa: float
    delta: int

    @property
    def pool0(self):
        return np.exp(self.log_pool0)

    @property
    def pool1(self):
        return np.exp(self.log_pool1)

    @property
    def size(self):
        return self.log_pool0.size


def tree_population_init(kappa: float, delta: int, size: int = 100_000, init: float | None = None) -> TreePopulation:
    """Constant pools at `init` (default kappa, the leaf odds with no observations).

    init=1.0 mirrors the all-ones start of graph BP.
    """
    v = math.log(kappa if init is None else init)
    return TreePopulation(0, np.full(size, v), np.full(size, v), float(kappa), int(delta))


def _children_products(pop: TreePopulation, n_children: int, rng, chunk: int):
    """Sum over children of the log factor, for the X=0 and X=1 parent, with shared draws.

    Each child has label x ~ Bernoulli(kappa_tilde/sqrt(delta)), a value drawn
    from the pool of its label, and an edge weight uniform on +-1, forced to
    +1 under the X=1 parent when x = 1.
    """
    P = pop.size
    sd = math.sqrt(pop.delta)
    p = label_probability(pop.kappa, pop.delta)
    g0, g1 = np.exp(pop.log_pool0) / sd, np.exp(pop.log_pool1) / sd
    # log factors per pool entry: (W=+1, W=-1)
    plus = (np.log1p(2 * g0) - np.log1p(g0), np.log1p(2 * g1) - np.log1p(g1))
    minus = (-np.log1p(g0), -np.log1p(g1))
    out0 = np.empty(P)
    out1 = np.empty(P)
    rows = max(1, chunk // n_children)
    for lo in range(0, P, rows):
        hi = min(P, lo + rows)
        shape = (hi - lo, n_children)
        hidden = rng.random(shape) < p
        idx = rng.integers(0, P, size=shape)
        sign = rng.integers(0, 2, size=shape).astype(bool)
        f_plus = np.where(hidden, plus[1][idx], plus[0][idx])
        f_minus = np.where(hidden, minus[1][idx], minus[0][idx])
        rand_term = np.where(sign, f_plus, f_minus)
        out0[lo:hi] = rand_term.sum(axis=1)
        out1[lo:hi] = np.where(hidden, f_plus, rand_term).sum(axis=1)
    return out0, out1


def tree_population_step(pop: TreePopulation, rng, chunk: int = 4_000_000) -> TreePopulation:
    """Resample both pools one generation deeper (delta children per node)."""
    s0, s1 = _children_products(pop, pop.delta, rng, chunk)
    lk = math.log(pop.kappa)
    return TreePopulation(pop.t + 1, lk + s0, lk + s1, pop.kappa, pop.delta)


def tree_vertex_distribution(pop: TreePopulation, rng, chunk: int = 4_000_000):
    """Samples of log gamma~^{t+1}(0), log gamma~^{t+1}(1): root with delta+1 children."""
    s0, s1 = _children_products(pop, pop.delta + 1, rng, chunk)
    lk = math.log(pop.kappa)
    return lk + s0, lk + s1


def run_population(kappa, delta, t, size=100_000, rng=None, init=None):
    """Pools at depth t (list of populations 0..t)."""
    rng = rng if rng is not None else np.random.default_rng()
    pops = [tree_population_init(kappa, delta, size, init)]
    for _ in range(t):
        pops.append(tree_population_step(pops[-1], rng))
    return pops


@dataclass
class ErrorEstimate:
    error: float
    se: float
    false_positive: float
    false_negative: float


def misclassification_estimate(log_vertex0, log_vertex1, kappa: float, delta: int) -> ErrorEstimate:
    """(1 - q) P(gamma~(0) >= sqrt(delta)) + q P(gamma~(1) < sqrt(delta)), q = kappa~/sqrt(delta)."""
    log_vertex0 = np.atleast_1d(np.asarray(log_vertex0, dtype=float))
    log_vertex1 = np.atleast_1d(np.asarray(log_vertex1, dtype=float))
    if log_vertex0.size == 0 or log_vertex1.size == 0:
        raise ValueError("empty pools")
    q = label_probability(kappa, delta)
    cut = 0.5 * math.log(delta)
    fp = float(np.mean(log_vertex0 >= cut))
    fn = float(np.mean(log_vertex1 < cut))
    err = (1 - q) * fp + q * fn
    se = math.sqrt((1 - q) ** 2 * fp * (1 - fp) / log_vertex0.size + q**2 * fn * (1 - fn) / log_vertex1.size)
    return ErrorEstimate(err, se, fp, fn)


def predicted_bp_error(kappa, delta, t, size=100_000, rng=None, init=None) -> ErrorEstimate:
    """Tree prediction for the BP rule after t graph iterations (pools at depth t-1)."""
    if t < 1:
        q = label_probability(kappa, delta)
        v = math.log(kappa if init is None else init)
        return misclassification_estimate([v], [v], kappa, delta) if t == 0 else ErrorEstimate(q, 0, 0, 1)
    rng = rng if rng is not None else np.random.default_rng()
    pop = run_population(kappa, delta, t - 1, size, rng, init)[-1]
    v0, v1 = tree_vertex_distribution(pop, rng)
    return misclassification_estimate(v0, v1, kappa, delta)


def gamma_star(kappa: float) -> float:
    """Smallest positive root of gamma = kappa * exp(kappa * gamma); needs kappa < e^{-1/2}."""
    if kappa >= math.exp(-0.5):
        raise ValueError("no finite root for kappa >= e^{-1/2}")
    # gamma = -W(-kappa^2)/kappa on the principal branch
    return float(-special.lambertw(-kappa * kappa, 0).real / kappa)


# -- thresholding with the Gaussian recursion ----------------------------------------

def f2_threshold_rule(log_gamma, trace: SparseSETrace, t: int):
    """1 iff gamma^t > exp(mean of mu_t(0), mu_t(1)), applied in the log domain."""
    if not 0 <= t < len(trace.mu0):
        raise IndexError(f"t={t} outside the recursion range")
    out = np.asarray(log_gamma) > trace.threshold(t)
    return out.astype(np.uint8) if out.ndim else int(out)


# -- local counting rule ---------------------------------------------------------------

@dataclass
class LocalRuleState:
    t: int
    bits: np.ndarray


def local_majority_refine(inst: SparseInstance, initial_bits, t_rounds: int) -> LocalRuleState:
    """Synchronous counting rule on a graph: m_i <- 1{sum_{l in di} W_il m_l >= (kappa/2) sqrt(delta)}."""
    _check_two_point(inst)
    edges = DirectedEdges.from_instance(inst)
    m = np.asarray(initial_bits, dtype=np.uint8).copy()
    cut = 0.5 * inst.kappa * math.sqrt(inst.delta)
    for _ in range(t_rounds):
        s = np.bincount(edges.dst, weights=edges.weight * m[edges.src], minlength=inst.n)
        m = (s >= cut).astype(np.uint8)
    return LocalRuleState(t_rounds, m)


def local_rule_on_tree(children, weights, leaf_bits, kappa: float, delta: int, root: int = 0) -> int:
    """Bottom-up counting rule on an explicit rooted tree.

    `children[v]` lists the children of v, `weights[(v, c)]` the edge label,
    `leaf_bits[v]` the initial decision Y_v at each leaf.
    """
    cut = 0.5 * kappa * math.sqrt(delta)

    def decide(v):
        kids = children.get(v, ())
        if not kids:
            return int(leaf_bits[v])
        return int(sum(weights[(v, c)] * decide(c) for c in kids) >= cut)

    return decide(root)


@dataclass
class CountingRecursion:
    p: list[float]
    q: list[float]
    p_se: list[float]
    q_se: list[float]


def counting_rule_recursion(kappa: float, delta: int, eps: float, t_rounds: int,
                            samples: int = 200_000, rng=None) -> CountingRecursion:
    """Monte-Carlo iteration of p_t = P(m = 1 | X = 0), q_t = P(m = 1 | X = 1).

    A node has D ~ Bin(delta, kappa~/sqrt(delta)) hidden children; N ~ Bin(delta - D, p_t)
    background and M ~ Bin(D, q_t) hidden children are marked. Background edges
    are uniform +-1, edges between two hidden nodes are +1.
    """
    rng = rng if rng is not None else np.random.default_rng()
    pl = label_probability(kappa, delta)
    cut = 0.5 * kappa * math.sqrt(delta)
    p, q = [eps], [1 - eps]
    p_se, q_se = [0.0], [0.0]
    for _ in range(t_rounds):
        D = rng.binomial(delta, pl, samples)
        N = rng.binomial(delta - D, p[-1])
        M = rng.binomial(D, q[-1])
        plus0 = rng.binomial(N + M, 0.5)
        s0 = 2 * plus0 - (N + M)
        plusN = rng.binomial(N, 0.5)
        s1 = 2 * plusN - N + M
        pn = float(np.mean(s0 >= cut))
        qn = float(np.mean(s1 >= cut))
        p.append(pn)
        q.append(qn)
        p_se.append(math.sqrt(pn * (1 - pn) / samples))
        q_se.append(math.sqrt(qn * (1 - qn) / samples))
    return CountingRecursion(p, q, p_se, q_se)


__all__ = [
    "UnsupportedModel", "DirectedEdges", "BPState", "bp_init", "bp_iterate", "run_bp", "bp_estimate",
    "symdiff_rate", "TreePopulation", "tree_population_init", "tree_population_step",
    "tree_vertex_distribution", "run_population", "misclassification_estimate", "ErrorEstimate",
    "predicted_bp_error", "gamma_star", "f2_threshold_rule", "LocalRuleState", "local_majority_refine",
    "local_rule_on_tree", "counting_rule_recursion", "kappa_tilde",
]
