"""Edge-weight distributions Q0 (background) and Q1 (inside the hidden set)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

RADEMACHER_CLIQUE = "rademacher-clique"
GAUSSIAN_SHIFT = "gaussian-shift"
CUSTOM_DISCRETE = "custom-discrete"
FAMILIES = (RADEMACHER_CLIQUE, GAUSSIAN_SHIFT, CUSTOM_DISCRETE)


class UnsupportedTransform(ValueError):
    pass


def _as_table(table):
    support, probs = table
    support = np.asarray(support, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if support.shape != probs.shape or support.ndim != 1 or support.size == 0:
        raise ValueError("support and probability arrays must be 1-d of equal length")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("probabilities must be non-negative and sum to 1")
    if np.unique(support).size != support.size:
        raise ValueError("support points must be distinct")
    return support, probs


@dataclass(frozen=True)
class NoiseSpec:
    """Pair (Q0, Q1). Q0 has mean 0 and variance 1; Q1 has mean ``lam`` > 0.

    ``rho`` is the common subgaussian scale; it only informs tolerances.
    For ``custom-discrete`` pass ``q0`` and ``q1`` as (support, probs) pairs;
    ``lam`` is then read off Q1.
    """

    family: str
    lam: float = 1.0
    rho: float = 1.0
    q0: tuple | None = field(default=None, repr=False)
    q1: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.family == RADEMACHER_CLIQUE:
            object.__setattr__(self, "lam", 1.0)
        elif self.family == CUSTOM_DISCRETE:
            if self.q0 is None or self.q1 is None:
                raise ValueError("custom-discrete noise needs q0 and q1 tables")
            s0, p0 = _as_table(self.q0)
            s1, p1 = _as_table(self.q1)
            mean0 = float(s0 @ p0)
            var0 = float((s0 - mean0) ** 2 @ p0)
            if abs(mean0) > 1e-12 or abs(var0 - 1.0) > 1e-12:
                raise ValueError(f"Q0 must have mean 0 and variance 1 (got {mean0}, {var0})")
            object.__setattr__(self, "q0", (tuple(s0), tuple(p0)))
            object.__setattr__(self, "q1", (tuple(s1), tuple(p1)))
            object.__setattr__(self, "lam", float(s1 @ p1))
        # lam == 0 is the degenerate Q0 == Q1 Gaussian pair, kept for sanity checks
        if self.lam < 0 or (self.lam == 0 and self.family != GAUSSIAN_SHIFT):
            raise ValueError("lambda (mean of Q1) must be positive")

    @classmethod
    def rademacher_clique(cls):
        return cls(RADEMACHER_CLIQUE)

    @classmethod
    def gaussian_shift(cls, lam: float = 1.0):
        return cls(GAUSSIAN_SHIFT, lam=lam)

    @property
    def is_two_point(self) -> bool:
        """Q0 uniform on {+1, -1} and Q1 the point mass at +1."""
        if self.family == RADEMACHER_CLIQUE:
            return True
        if self.family != CUSTOM_DISCRETE:
            return False
        q0 = dict(zip(*self.q0))
        q1 = {x: p for x, p in zip(*self.q1) if p > 0}
        return q0 == {1.0: 0.5, -1.0: 0.5} and q1 == {1.0: 1.0}

    def sample_q0(self, rng, size):
        if self.family == RADEMACHER_CLIQUE:
            return 2.0 * rng.integers(0, 2, size=size) - 1.0
        if self.family == GAUSSIAN_SHIFT:
            return rng.standard_normal(size)
        support, probs = (np.asarray(a) for a in self.q0)
        return support[rng.choice(support.size, size=size, p=probs)]

    def sample_q1(self, rng, size):
        if self.family == RADEMACHER_CLIQUE:
            return np.ones(size)
        if self.family == GAUSSIAN_SHIFT:
            return self.lam + rng.standard_normal(size)
        support, probs = (np.asarray(a) for a in self.q1)
        return support[rng.choice(support.size, size=size, p=probs)]

    def tables(self):
        """(Q0, Q1) as (support, probs) arrays; only for the discrete families."""
        if self.family == RADEMACHER_CLIQUE:
            return (np.array([1.0, -1.0]), np.array([0.5, 0.5])), (np.array([1.0]), np.array([1.0]))
        if self.family == CUSTOM_DISCRETE:
            return tuple((np.asarray(s), np.asarray(p)) for s, p in (self.q0, self.q1))
        raise ValueError(f"{self.family} has no discrete tables")

    def likelihood_ratio(self, x):
        """dQ1/dQ0 evaluated entrywise."""
        x = np.asarray(x, dtype=float)
        if self.family == GAUSSIAN_SHIFT:
            return np.exp(self.lam * x - 0.5 * self.lam**2)
        (s0, p0), (s1, p1) = self.tables()
        q0 = dict(zip(s0.tolist(), p0.tolist()))
        q1 = dict(zip(s1.tolist(), p1.tolist()))
        for v, p in q1.items():
            if p > 0 and q0.get(v, 0.0) == 0.0:
                # singular part of Q1 w.r.t. Q0: no density exists
                raise UnsupportedTransform(f"Q1 puts mass on {v}, which Q0 does not charge")
        keys = np.array([v for v, p in q0.items() if p > 0])
        vals = np.array([q1.get(v, 0.0) / q0[v] for v in keys])
        order = np.argsort(keys)
        keys, vals = keys[order], vals[order]
        pos = np.clip(np.searchsorted(keys, x), 0, keys.size - 1)
        if not np.all(keys[pos] == x):
            raise ValueError("values outside the support of Q0")
        return vals[pos]

    def lambda_tilde(self) -> float:
        """L2(Q0) distance between dQ1/dQ0 and 1."""
        if self.family == GAUSSIAN_SHIFT:
            return float(np.sqrt(np.expm1(self.lam**2)))
        (s0, p0), _ = self.tables()
        mask = p0 > 0
        r = self.likelihood_ratio(s0[mask])
        return float(np.sqrt(((r - 1.0) ** 2) @ p0[mask]))

    def truncated_means(self, rho_bar: float) -> tuple[float, float]:
        """(E_Q0[X; |X| <= rho_bar], E_Q1[X; |X| <= rho_bar])."""
        if self.family == GAUSSIAN_SHIFT:
            m = self.lam

            def tmean(mu):
                a, b = -rho_bar - mu, rho_bar - mu
                pdf = special.ndtr(b) - special.ndtr(a)
                dens = (np.exp(-0.5 * a * a) - np.exp(-0.5 * b * b)) / np.sqrt(2 * np.pi)
                return mu * pdf + dens

            return float(tmean(0.0)), float(tmean(m))
        q0, q1 = self.tables()
        out = []
        for s, p in (q0, q1):
            s, p = np.asarray(s), np.asarray(p)
            keep = np.abs(s) <= rho_bar
            out.append(float(s[keep] @ p[keep]))
        return out[0], out[1]


def default_rho_bar(noise: NoiseSpec, tol: float = 1e-10) -> float:
    """Truncation level used by the score step.

    Bounded families use 2 (covers the supports in practice); for the Gaussian
    shift this is the smallest level whose truncated Q1 mean reaches 7/8 of
    lambda while the truncated Q0 mean stays below lambda/8.
    """
    if noise.family == RADEMACHER_CLIQUE:
        return 2.0
    if noise.family == CUSTOM_DISCRETE:
        support = np.concatenate([noise.q0[0], noise.q1[0]])
        return max(2.0, float(np.max(np.abs(support))))
    lam = noise.lam

    def ok(r):
        m0, m1 = noise.truncated_means(r)
        return m1 >= 7 * lam / 8 and m0 <= lam / 8

    lo, hi = 0.0, 1.0
    while not ok(hi):
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi

