import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hiddenset.instances import SparseInstance, gen_sparse_instance, label_probability
from hiddenset.noise import NoiseSpec
from hiddenset.sparse import (BPState, DirectedEdges, UnsupportedModel, bp_estimate, bp_init, bp_iterate,
                              counting_rule_recursion, f2_threshold_rule, gamma_star, local_majority_refine,
                              local_rule_on_tree, misclassification_estimate, predicted_bp_error, run_bp,
                              run_population, symdiff_rate, tree_population_init, tree_population_step,
                              tree_vertex_distribution, _log_factor)
from hiddenset.state_evolution import sparse_gaussian_se

import oracles


def explicit_instance(n, edges, weights, labels=None, kappa=1.0, delta=2):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    labels = np.zeros(n, np.uint8) if labels is None else np.asarray(labels, np.uint8)
    return SparseInstance(n=n, delta=delta, edges=edges, labels=labels, weights=np.asarray(weights, float),
                          kappa=kappa, sampling_mode="iid", seed=0)


# depth-2 tree with delta = 2: root 0, children 1..3, grandchildren 4..9
TREE_EDGES = [(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6), (2, 7), (3, 8), (3, 9)]


def draw_tree_instance(rng, kappa):
    q = label_probability(kappa, 2)
    labels = (rng.random(10) < q).astype(np.uint8)
    w = np.where(rng.random(len(TREE_EDGES)) < 0.5, 1.0, -1.0)
    for e, (a, b) in enumerate(TREE_EDGES):
        if labels[a] and labels[b]:
            w[e] = 1.0
    return explicit_instance(10, TREE_EDGES, w, labels, kappa, 2), q


# -- graph BP ------------------------------------------------------------------------------------

def test_bp_init():
    inst = gen_sparse_instance(100, 4, 1.0, rng_seed=1)
    e = DirectedEdges.from_instance(inst)
    s = bp_init(e)
    assert s.t == 0 and len(e) == 2 * inst.edges.shape[0]
    assert np.all(s.gamma == 1.0) and s.vertex_gamma is None
    with pytest.raises(ValueError):
        bp_estimate(s, 4)


def test_factor_values():
    sd = 2.0
    g = np.array([0.0, math.log(3.0)])
    minus = np.exp(_log_factor(np.array([-1.0, -1.0]), g, sd))
    plus = np.exp(_log_factor(np.array([1.0, 1.0]), g, sd))
    assert np.allclose(minus, 1 / (1 + np.exp(g) / sd))
    assert np.allclose(plus, (1 + 2 * np.exp(g) / sd) / (1 + np.exp(g) / sd))
    assert np.all(minus < 1) and np.all(plus > 1)


def test_star_hand_value():
    # center 0 with four leaves, all weights +1, delta = 4, kappa = 1
    inst = explicit_instance(5, [(0, 1), (0, 2), (0, 3), (0, 4)], [1.0] * 4, delta=4)
    e = DirectedEdges.from_instance(inst)
    s = bp_iterate(bp_init(e), inst, e)
    out_of_center = s.gamma[e.src == 0]
    assert np.allclose(out_of_center, (4 / 3) ** 3)
    assert s.vertex_gamma[0] == pytest.approx((4 / 3) ** 4)


def test_bp_rejects_other_noise():
    inst = explicit_instance(2, [(0, 1)], [0.3])
    inst = SparseInstance(**{**inst.__dict__, "noise": NoiseSpec.gaussian_shift(1.0)})
    with pytest.raises(UnsupportedModel):
        bp_iterate(bp_init(DirectedEdges.from_instance(inst)), inst)


def test_bp_estimate_boundary():
    s = BPState(1, np.zeros(2), np.log(np.array([1.0, 2.0, 2.5])))
    assert bp_estimate(s, 4).tolist() == [1, 2]
    s = BPState(1, np.zeros(2), np.log(np.full(4, 0.7)))
    assert bp_estimate(s, 4).tolist() == []


@pytest.mark.parametrize("seed", range(20))
def test_bp_exact_on_tree(seed):
    rng = np.random.default_rng(seed)
    kappa = float(rng.uniform(0.3, 2.0))
    inst, q = draw_tree_instance(rng, kappa)
    # radius 4 covers the whole tree from any vertex; the root needs only 3 rounds
    for t, verts in ((3, [0]), (5, range(10))):
        s = run_bp(inst, t)
        for v in verts:
            odds = oracles.tree_posterior_odds(10, TREE_EDGES, inst.weights, q, v)
            assert s.vertex_gamma[v] / math.sqrt(2) == pytest.approx(odds, rel=1e-12)


def test_bp_messages_stay_finite():
    inst = gen_sparse_instance(2000, 400, 1.5, rng_seed=2)
    s = run_bp(inst, 10)
    assert np.all(np.isfinite(s.log_gamma)) and np.all(np.isfinite(s.log_vertex_gamma))


def test_symdiff_rate():
    assert symdiff_rate([0, 2], [1, 0, 1, 0]) == 0.0
    assert symdiff_rate([], [1, 0, 0, 0]) == 0.25


# -- populations ---------------------------------------------------------------------------

def test_population_init():
    pop = tree_population_init(0.5, 400, 10_000)
    assert np.all(pop.pool0 == 0.5) and np.all(pop.pool1 == 0.5) and pop.t == 0


def test_population_mean_identity():
    rng = np.random.default_rng(0)
    pops = run_population(0.5, 400, 4, 100_000, rng)
    for p in pops[1:]:
        x = p.pool0
        assert abs(x.mean() - 0.5) <= 3 * x.std() / math.sqrt(x.size)


def test_population_large_delta_mean():
    # a million factors 1 +- O(1/1000) still spread log gamma by ~kappa, so only the mean is pinned
    rng = np.random.default_rng(1)
    pop = tree_population_step(tree_population_init(0.5, 10**6, 300), rng, chunk=2_000_000)
    x = pop.pool0
    assert abs(x.mean() - 0.5) <= 3 * x.std() / math.sqrt(x.size)
    assert x.std() == pytest.approx(0.5 * math.sqrt(math.expm1(0.25)), rel=0.25)


def test_vertex_distribution_moments():
    rng = np.random.default_rng(2)
    kappa = 0.8
    pops = run_population(kappa, 100, 3, 100_000, rng)
    v0, v1 = (np.exp(x) for x in tree_vertex_distribution(pops[-1], rng))
    assert abs(v0.mean() - kappa) <= 3 * v0.std() / math.sqrt(v0.size)
    diff = v0**2 - kappa * v1  # shared pool draws make these paired samples
    se = math.sqrt(np.var(v0**2) / v0.size + kappa**2 * np.var(v1) / v1.size)
    assert abs(np.mean(v0**2) - kappa * v1.mean()) <= 3 * se
    assert np.isfinite(diff).all()


def test_pool_growth_bound():
    rng = np.random.default_rng(3)
    kappa = 0.5
    pops = run_population(kappa, 400, 6, 100_000, rng)
    for a, b in zip(pops, pops[1:]):
        m = a.pool1.mean()
        se = b.pool1.std() / math.sqrt(b.size)
        assert b.pool1.mean() <= kappa * math.exp(kappa * m) + 3 * se


def test_gamma_star_is_fixed_point():
    g = gamma_star(0.5)
    ref = oracles.smallest_fixed_point(lambda x: 0.5 * math.exp(0.5 * x))
    assert g == pytest.approx(ref, rel=1e-12)
    with pytest.raises(ValueError):
        gamma_star(0.7)


# -- misclassification -------------------------------------------------------------------

def test_misclassification_degenerate_pools():
    kappa, delta = 0.8, 100
    q = label_probability(kappa, delta)
    v = np.full(100, math.log(kappa))
    assert misclassification_estimate(v, v, kappa, delta).error == pytest.approx(q, rel=1e-15)
    hi = np.full(100, math.log(delta))
    assert misclassification_estimate(hi, hi, kappa, delta).error == pytest.approx(1 - q, rel=1e-15)
    with pytest.raises(ValueError):
        misclassification_estimate([], [1.0], kappa, delta)


@pytest.mark.xfail(strict=True, reason="at delta=400 the kappa=1 error drops below the kappa=0.4 level only from t=5")
def test_error_contrast_t4():
    rng = np.random.default_rng(5)
    hi = predicted_bp_error(1.0, 400, 4, 100_000, rng)
    lo = predicted_bp_error(0.4, 400, 4, 100_000, rng)
    assert hi.error < lo.error


def test_error_contrast_t5():
    rng = np.random.default_rng(5)
    hi = predicted_bp_error(1.0, 400, 5, 100_000, rng)
    lo = predicted_bp_error(0.4, 400, 5, 100_000, rng)
    assert hi.error + 3 * hi.se < lo.error - 3 * lo.se


# -- Gaussian-limit threshold rule -------------------------------------------------------

def test_f2_rule_basic():
    tr = sparse_gaussian_se(1.0, 3)
    assert tr.threshold(1) == 0.0
    assert f2_threshold_rule(0.1, tr, 1) == 1 and f2_threshold_rule(-0.1, tr, 1) == 0
    assert f2_threshold_rule(0.0, tr, 1) == 0
    assert f2_threshold_rule(np.array([tr.threshold(2), 5.0]), tr, 2).tolist() == [0, 1]
    with pytest.raises(IndexError):
        f2_threshold_rule(0.0, tr, 9)


def _gaussian_limit_check(t, size=20_000):
    rng = np.random.default_rng(7)
    tr = sparse_gaussian_se(1.0, t)
    pop = run_population(1.0, 10_000, t, size, rng)[t]
    fp = f2_threshold_rule(pop.log_pool0, tr, t).mean()
    fn = 1 - f2_threshold_rule(pop.log_pool1, tr, t).mean()
    se = math.sqrt(fp * (1 - fp) / size + fn * (1 - fn) / size)
    return abs(fp + fn - tr.predicted_error(t)) <= 3 * se


def test_f2_rule_matches_gaussian_limit():
    assert _gaussian_limit_check(1)


@pytest.mark.xfail(strict=False, reason="finite-delta bias of about 0.01 sits near 3 SE at t=2")
def test_f2_rule_gaussian_limit_t2():
    assert _gaussian_limit_check(2)


@pytest.mark.xfail(strict=True, reason="sigma_3^2 ~ 15: delta=1e4 is far from the Gaussian limit at t=3")
def test_f2_rule_gaussian_limit_t3():
    assert _gaussian_limit_check(3)


# -- counting rule ----------------------------------------------------------------------

def test_local_rule_on_tree_cases():
    children = {0: [1, 2, 3]}
    w = {(0, 1): 1, (0, 2): 1, (0, 3): 1}
    assert local_rule_on_tree(children, w, {1: 0, 2: 0, 3: 0}, 1.0, 3) == 0
    assert local_rule_on_tree(children, w, {1: 1, 2: 1, 3: 1}, 1.0, 3) == 1
    # sum of delta marked +1 children reaches (kappa/2) sqrt(delta) whenever delta >= kappa^2/4
    for delta in (1, 4, 9):
        kids = {0: list(range(1, delta + 1))}
        ww = {(0, c): 1 for c in kids[0]}
        assert local_rule_on_tree(kids, ww, {c: 1 for c in kids[0]}, 2.0, delta) == 1


def test_local_rule_on_graph():
    inst = gen_sparse_instance(2000, 20, 1.0, rng_seed=4)
    zero = local_majority_refine(inst, np.zeros(inst.n), 2)
    assert zero.t == 2 and not zero.bits.any()
    bits = local_majority_refine(inst, inst.labels, 1).bits
    assert set(np.unique(bits)) <= {0, 1}


def test_local_rule_graph_matches_tree_evaluation():
    # one synchronous round on a graph equals the tree rule applied to each star
    inst = gen_sparse_instance(300, 6, 1.5, rng_seed=6)
    y = np.random.default_rng(0).integers(0, 2, inst.n)
    bits = local_majority_refine(inst, y, 1).bits
    for v in range(0, inst.n, 17):
        nb = {}
        for (a, b), w in zip(inst.edges.tolist(), inst.weights.tolist()):
            if a == v:
                nb[b] = w
            elif b == v:
                nb[a] = w
        kids = {v: list(nb)}
        ww = {(v, c): nb[c] for c in nb}
        assert bits[v] == local_rule_on_tree(kids, ww, {c: y[c] for c in nb}, inst.kappa, inst.delta, root=v)


def test_counting_rule_contracts_error():
    rec = counting_rule_recursion(1.2, 400, 0.1, 3, samples=400_000, rng=np.random.default_rng(0))
    p = rec.p
    assert p[1] > p[2] > p[3]
    assert all(q > 0.5 for q in rec.q[1:])


@given(st.floats(0.2, 2.0), st.integers(4, 100), st.floats(0.0, 0.5))
def test_counting_rule_probabilities(kappa, delta, eps):
    rec = counting_rule_recursion(kappa, delta, eps, 2, samples=2000, rng=np.random.default_rng(1))
    assert all(0 <= x <= 1 for x in rec.p + rec.q)
