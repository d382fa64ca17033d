"""Message passing on the complete graph, the cleaning stage, and a spectral baseline."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .instances import DenseInstance, normalize
from .noise import default_rho_bar
from .state_evolution import PolynomialSchedule, horner


@dataclass
class MessageState:
    """messages[l, i] holds theta_{l -> i}; vertex_values[i] holds theta_i."""

    t: int
    messages: np.ndarray = field(repr=False)
    vertex_values: np.ndarray = field(repr=False)


def mp_init(n: int) -> MessageState:
    if n < 2:
        raise ValueError("need at least two vertices")
    msgs = np.ones((n, n))
    np.fill_diagonal(msgs, 0.0)
    return MessageState(0, msgs, np.ones(n))


def mp_iterate(state: MessageState, A: np.ndarray, f_t, inplace: bool = False,
               buffer: np.ndarray | None = None) -> MessageState:
    """One step of the orbit.

    theta_i <- sum_{l != i} A_{li} f(theta_{l->i});
    theta_{i->j} <- theta_i - A_{ji} f(theta_{j->i}).
    `f_t` is a coefficient vector (Horner) or a vectorized callable.
    With `inplace` the message matrix of `state` is overwritten.
    """
    M = state.messages
    n = M.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match {n} vertices")
    if callable(f_t):
        F = np.asarray(f_t(M), dtype=float)
        if buffer is not None:
            buffer[...] = F
            F = buffer
    else:
        F = horner(f_t, M, out=buffer)
    F *= A  # F[l, i] = A_{li} f(theta_{l->i})
    theta = F.sum(axis=0)
    out = M if inplace else np.empty_like(M)
    np.subtract(theta[:, None], F.T, out=out)
    np.fill_diagonal(out, 0.0)
    return MessageState(state.t + 1, out, theta)


def run_mp(A: np.ndarray, schedule: PolynomialSchedule, t_iter: int | None = None) -> MessageState:
    """t_iter (default: schedule.t_star) iterations from the all-ones start, f(., t) = p(., t)."""
    t_iter = schedule.t_star if t_iter is None else t_iter
    if t_iter > schedule.t_star:
        raise ValueError("schedule is shorter than the requested number of iterations")
    state = mp_init(A.shape[0])
    buf = np.empty_like(A)
    for t in range(t_iter):
        state = mp_iterate(state, A, schedule.f(t), inplace=True, buffer=buf)
    return state


def threshold_candidates(vertex_values, mu_hat_tstar: float) -> np.ndarray:
    return np.flatnonzero(np.asarray(vertex_values) >= mu_hat_tstar / 2).astype(np.int64)


@dataclass
class PowerResult:
    vector: np.ndarray
    degenerate: bool = False
    iterations: int = 0


def power_method(A: np.ndarray, iterations: int) -> PowerResult:
    """u <- A u / |A u| from the normalized all-ones vector."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("power method needs a square matrix")
    m = A.shape[0]
    if m == 0:
        raise ValueError("power method on an empty matrix")
    u = np.full(m, 1.0 / math.sqrt(m))
    for it in range(iterations):
        v = A @ u
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return PowerResult(u, True, it)
        u = v / norm
    return PowerResult(u, False, iterations)


def top_k(values, k: int) -> np.ndarray:
    """Indices of the k largest |values|; ties go to the smaller index. Returned sorted."""
    values = np.abs(np.asarray(values, dtype=float))
    if k > values.size or k < 0:
        raise ValueError(f"cannot take {k} entries out of {values.size}")
    order = np.lexsort((np.arange(values.size), -values))
    return np.sort(order[:k]).astype(np.int64)


def scores(W: np.ndarray, B, rho_bar: float) -> np.ndarray:
    """zeta(i) = |B|^{-1} sum_{j in B, j != i} W_ij 1{|W_ij| <= rho_bar}."""
    B = np.asarray(B, dtype=np.int64)
    if B.size == 0:
        raise ValueError("score set B is empty")
    cols = W[:, B]
    kept = np.where(np.abs(cols) <= rho_bar, cols, 0.0)
    # W_ii = 0 already drops j == i; make it explicit for arbitrary W
    rows = np.isin(np.arange(W.shape[0]), B)
    pos = np.searchsorted(B, np.flatnonzero(rows))
    kept[np.flatnonzero(rows), pos] = 0.0
    return kept.sum(axis=1) / B.size


@dataclass
class StageStats:
    size: int
    overlap: int | None = None


@dataclass
class RecoveryResult:
    candidate_set: np.ndarray
    eigen_set: np.ndarray
    final_set: np.ndarray
    stage_stats: dict = field(default_factory=dict)
    success: bool | None = None
    aborted: str | None = None
    runtime_ms: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "candidate_size": int(self.candidate_set.size),
            "eigen_size": int(self.eigen_set.size),
            "final_size": int(self.final_set.size),
            "stage_stats": {k: vars(v) for k, v in self.stage_stats.items()},
            "success": self.success,
            "aborted": self.aborted,
            "runtime_ms": self.runtime_ms,
        }


def default_t_power(n: int) -> int:
    return math.ceil(10 * math.log(n))


def _stat(idx, truth):
    if truth is None:
        return StageStats(int(idx.size))
    return StageStats(int(idx.size), int(np.intersect1d(idx, truth).size))


def run_algorithm1(instance: DenseInstance, k: int, schedule: PolynomialSchedule,
                   t_power: int | None = None, rho_bar: float | None = None,
                   A: np.ndarray | None = None, truth=None) -> RecoveryResult:
    """Message passing, threshold, power-method cleaning, score selection.

    `A` overrides the default normalized matrix W/sqrt(n) (e.g. with a
    likelihood-transformed one). `truth` defaults to the instance's hidden set.
    """
    n = instance.n
    t_power = default_t_power(n) if t_power is None else t_power
    rho_bar = default_rho_bar(instance.noise) if rho_bar is None else rho_bar
    truth = instance.hidden_set if truth is None else np.asarray(truth)
    lam = instance.noise.lam
    empty = np.empty(0, dtype=np.int64)
    clock = {}

    def finish(cand, eig, final, aborted=None):
        res = RecoveryResult(cand, eig, final, aborted=aborted, runtime_ms=clock)
        res.stage_stats = {"candidate": _stat(cand, truth), "eigen": _stat(eig, truth),
                           "final": _stat(final, truth)}
        if truth is not None:
            res.success = bool(np.array_equal(np.sort(final), np.sort(truth)))
        return res

    if k == 0:
        return finish(empty, empty, empty)

    start = time.perf_counter()
    A = normalize(instance) if A is None else A
    state = run_mp(A, schedule)
    clock["message_passing"] = int(1000 * (time.perf_counter() - start))

    cand = threshold_candidates(state.vertex_values, schedule.mu_hat[schedule.t_star])
    del state
    if cand.size < max(2, k):
        return finish(cand, empty, empty, aborted="candidate set too small")

    start = time.perf_counter()
    pw = power_method(A[np.ix_(cand, cand)], t_power)
    eig = np.sort(cand[top_k(pw.vector, k)])
    clock["power_method"] = int(1000 * (time.perf_counter() - start))

    start = time.perf_counter()
    zeta = scores(instance.W, eig, rho_bar)
    final = np.flatnonzero(zeta >= lam / 2).astype(np.int64)
    clock["scores"] = int(1000 * (time.perf_counter() - start))
    return finish(cand, eig, final)


@dataclass
class SpectralResult:
    selected: np.ndarray
    vector: np.ndarray = field(repr=False)
    eigen_overlap: float | None = None
    fraction_recovered: float | None = None


def spectral_solve(A: np.ndarray, k: int, iterations: int, truth=None) -> SpectralResult:
    """Top-k entries of the leading eigenvector (power method on the full matrix).

    With `truth`, reports |<v1, e_C>| with e_C the indicator scaled by n^{-1/4},
    and the fraction of C among the selected vertices.
    """
    pw = power_method(A, iterations)
    sel = top_k(pw.vector, k)
    res = SpectralResult(sel, pw.vector)
    if truth is not None:
        truth = np.asarray(truth, dtype=np.int64)
        n = A.shape[0]
        res.eigen_overlap = float(abs(pw.vector[truth].sum()) / n**0.25)
        res.fraction_recovered = float(np.intersect1d(sel, truth).size / truth.size) if truth.size else 1.0
    return res
