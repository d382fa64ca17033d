"""Independent reference computations used by the tests.

None of these share code with the package: they recompute quantities from
their definitions, slowly and literally.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import integrate, optimize


def mp_from_scratch(A, fs, t_max):
    """Literal orbit: every sum recomputed, messages in a dict keyed (l, i) for l -> i."""
    n = A.shape[0]
    msg = {(i, j): 1.0 for i in range(n) for j in range(n) if i != j}
    vertex = [1.0] * n
    for t in range(t_max):
        f = fs[t]
        new = {}
        for i in range(n):
            for j in range(n):
                if i != j:
                    new[(i, j)] = sum(A[l, i] * f(msg[(l, i)]) for l in range(n) if l not in (i, j))
        vertex = [sum(A[l, i] * f(msg[(l, i)]) for l in range(n) if l != i) for i in range(n)]
        msg = new
    return msg, np.array(vertex)


def poly_fn(coeffs):
    return lambda x: sum(c * x**k for k, c in enumerate(coeffs))


def gaussian_expectation_quad(fn, shift=0.0, scale=1.0):
    """E[fn(shift + scale Z)] by adaptive quadrature against the normal density."""
    dens = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    val, _ = integrate.quad(lambda z: fn(shift + scale * z) * dens(z), -40, 40, limit=400, points=[0.0])
    return val


def lambda_tilde_gaussian_quad(lam):
    """sqrt of int (e^{lam x - lam^2/2} - 1)^2 phi(x) dx."""
    return math.sqrt(gaussian_expectation_quad(lambda x: (math.exp(lam * x - lam * lam / 2) - 1) ** 2))


def smallest_fixed_point(g, x0=0.0, iters=100_000, tol=1e-15):
    """Iterate x <- g(x) from below; converges to the smallest fixed point when g is increasing."""
    x = x0
    for _ in range(iters):
        nx = g(x)
        if abs(nx - x) < tol:
            return nx
        x = nx
    return x


def smallest_root_bracketed(h, lo, hi):
    return optimize.brentq(h, lo, hi, xtol=1e-15)


def leading_eigvec(A):
    w, v = np.linalg.eigh(A)
    i = int(np.argmax(np.abs(w)))
    return v[:, i], w


def tree_posterior_odds(n, edges, weights, q, vertex):
    """P(X_v = 1 | W) / P(X_v = 0 | W) by enumerating all 2^n labelings.

    Labels iid Bernoulli(q); W_e = +1 surely when both ends are 1, uniform on
    +-1 otherwise.
    """
    num = den = 0.0
    for lab in itertools.product((0, 1), repeat=n):
        w = 1.0
        for x in lab:
            w *= q if x else 1 - q
        for (a, b), we in zip(edges, weights):
            if lab[a] and lab[b]:
                w *= 1.0 if we > 0 else 0.0
            else:
                w *= 0.5
        if lab[vertex]:
            num += w
        else:
            den += w
    return num / den


def is_simple_regular(n, edges, degree):
    edges = np.asarray(edges)
    if edges.size == 0:
        return degree == 0
    if np.any(edges[:, 0] == edges[:, 1]):
        return False
    keys = {tuple(sorted(e)) for e in edges.tolist()}
    if len(keys) != len(edges):
        return False
    deg = np.bincount(edges.ravel(), minlength=n)
    return bool(np.all(deg == degree))


def tree_ball_check(n, edges, root, radius):
    """Independent BFS: is the radius ball around root a tree (edges = vertices - 1)?"""
    adj = [[] for _ in range(n)]
    for a, b in np.asarray(edges).tolist():
        adj[a].append(b)
        adj[b].append(a)
    dist = {root: 0}
    order = [root]
    for v in order:
        if dist[v] == radius:
            continue
        for u in adj[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                order.append(u)
    ball = set(dist)
    # edges inside the ball that are reachable within the radius
    inner = sum(1 for a, b in np.asarray(edges).tolist()
                if a in ball and b in ball and min(dist[a], dist[b]) < radius)
    return inner == len(ball) - 1


def binom_tail(n, p, k):
    """P(Bin(n, p) >= k) by direct summation."""
    return sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1))
