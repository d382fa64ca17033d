"""Scalar recursions: exact Gaussian polynomial moments, the polynomial
schedule, the ideal exponential recursion, general state evolution and the
large-degree Gaussian recursion of the sparse model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

DIVERGENCE_CEILING = 1e8
DEFAULT_D_STAR = 40
DEFAULT_M = 10.0
DEFAULT_T_CAP = 50


class ScheduleDiverged(ArithmeticError):
    def __init__(self, msg, last_t):
        super().__init__(msg)
        self.last_t = last_t


# -- exact Gaussian expectations of polynomials ---------------------------------

def _log_gaussian_moments(shift: float, scale: float, degree: int) -> np.ndarray:
    """log E[(shift + scale Z)^k], k = 0..degree, for shift > 0 (all moments positive)."""
    out = np.zeros(degree + 1)
    r = shift
    var = scale * scale
    for k in range(1, degree + 1):
        if k > 1:
            r = shift + (k - 1) * var / r
        out[k] = out[k - 1] + math.log(r)
    return out


def gaussian_moments(shift: float, degree: int, scale: float = 1.0) -> np.ndarray:
    """E[(shift + scale Z)^k] for k = 0..degree, via m_k = s m_{k-1} + (k-1) v m_{k-2}."""
    m = np.zeros(degree + 1)
    m[0] = 1.0
    if degree >= 1:
        m[1] = shift
    var = scale * scale
    for k in range(2, degree + 1):
        m[k] = shift * m[k - 1] + (k - 1) * var * m[k - 2]
    return m


def _signed_log_sum(signs, logs):
    """(sign, log|total|) of sum_i signs_i * exp(logs_i), using compensated summation."""
    logs = np.asarray(logs, dtype=float)
    keep = np.isfinite(logs)
    if not keep.any():
        return 0.0, -math.inf
    top = logs[keep].max()
    total = math.fsum((np.asarray(signs, dtype=float)[keep] * np.exp(logs[keep] - top)).tolist())
    if total == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, total), top + math.log(abs(total))


def _scaled_fsum(signs, logs):
    sign, log_abs = _signed_log_sum(signs, logs)
    if sign == 0.0:
        return 0.0
    return sign * math.exp(log_abs) if log_abs < 709.0 else sign * math.inf


def gaussian_poly_mean(coeffs: Sequence[float], shift: float = 0.0, scale: float = 1.0) -> float:
    """E[sum_k c_k (shift + scale Z)^k], Z standard normal, computed exactly."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    d = c.size - 1
    if shift > 0:
        logm = _log_gaussian_moments(shift, scale, d)
        nz = c != 0
        logs = np.full(d + 1, -np.inf)
        logs[nz] = np.log(np.abs(c[nz])) + logm[nz]
        return _scaled_fsum(np.sign(c), logs)
    m = gaussian_moments(shift, d, scale)
    return math.fsum((c * m).tolist())


def poly_square(coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return np.convolve(c, c)


def gaussian_poly_second_moment(coeffs, shift: float = 0.0, scale: float = 1.0) -> float:
    """E[p(shift + scale Z)^2]."""
    return gaussian_poly_mean(poly_square(coeffs), shift, scale)


def horner(coeffs, x, out=None):
    """Evaluate sum_k c_k x^k on an array, optionally into a preallocated buffer."""
    c = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    if out is None:
        out = np.empty_like(x)
    out.fill(c[-1])
    for ck in c[-2::-1]:
        out *= x
        out += ck
    return out


# -- ideal exponential recursion ------------------------------------------------

@dataclass
class IdealTrajectory:
    lambda_kappa: float
    mu: list[float]
    diverged: bool = False
    ceiling: float = DIVERGENCE_CEILING

    def first_exceeding(self, level: float):
        """First t with mu_t > level; a stopped trajectory counts its overflow step."""
        for t, m in enumerate(self.mu):
            if m > level:
                return t
        if self.diverged and level <= self.ceiling:
            return len(self.mu)
        return None


def ideal_recursion(lambda_kappa: float, t_max: int, ceiling: float = DIVERGENCE_CEILING) -> IdealTrajectory:
    """mu_{t+1} = lambda_kappa * exp(mu_t^2 / 2), mu_0 = 1, stopped past `ceiling`."""
    if lambda_kappa <= 0:
        raise ValueError("lambda*kappa must be positive")
    mu = [1.0]
    log_lk = math.log(lambda_kappa)
    for _ in range(t_max):
        log_next = log_lk + 0.5 * mu[-1] ** 2
        if log_next > math.log(ceiling):
            return IdealTrajectory(lambda_kappa, mu, diverged=True, ceiling=ceiling)
        mu.append(math.exp(log_next))
    return IdealTrajectory(lambda_kappa, mu, ceiling=ceiling)


# -- polynomial schedule ----------------------------------------------------------

def _log_double_factorial_odd(m):
    """log((m-1)!!) for even m >= 0, i.e. log E[Z^m]."""
    m = np.asarray(m, dtype=float)
    h = m / 2
    return special.gammaln(m + 1) - special.gammaln(h + 1) - h * math.log(2.0)


def exp_series_log_norm(mu: float, d_star: int) -> float:
    """log of E[(sum_{k<=d} (mu Z)^k / k!)^2]^{1/2}."""
    j = np.arange(d_star + 1)
    jj, kk = np.meshgrid(j, j, indexing="ij")
    s = jj + kk
    even = s % 2 == 0
    logs = np.full(s.shape, -np.inf)
    if mu == 0:
        return 0.0
    lm = math.log(abs(mu))
    logs[even] = (s[even] * lm - special.gammaln(jj[even] + 1) - special.gammaln(kk[even] + 1)
                  + _log_double_factorial_odd(s[even]))
    signs = np.where(s % 2 == 0, 1.0, np.sign(mu) ** s)
    return 0.5 * _signed_log_sum(signs.ravel(), logs.ravel())[1]


def schedule_coefficients(mu: float, d_star: int) -> np.ndarray:
    """Coefficients mu^k / (k! L) of the normalized truncated exponential."""
    k = np.arange(d_star + 1)
    log_norm = exp_series_log_norm(mu, d_star)
    if mu == 0:
        c = np.zeros(d_star + 1)
        c[0] = 1.0
        return c
    logs = k * math.log(abs(mu)) - special.gammaln(k + 1) - log_norm
    return np.sign(mu) ** k * np.exp(logs)


@dataclass
class PolynomialSchedule:
    lam: float
    kappa: float
    d_star: int
    coeffs: list[np.ndarray] = field(repr=False)
    mu_hat: list[float]
    log_L_hat: list[float]
    diverged: bool = False

    @property
    def L_hat(self) -> list[float]:
        return [math.exp(v) if v < 709.0 else math.inf for v in self.log_L_hat]

    @property
    def t_star(self) -> int:
        return len(self.coeffs) - 1

    @property
    def lambda_kappa(self) -> float:
        return self.lam * self.kappa

    def f(self, t: int) -> np.ndarray:
        return self.coeffs[t]

    def __call__(self, x, t: int):
        return horner(self.coeffs[t], x)


def build_schedule(lam: float, kappa: float, d_star: int = DEFAULT_D_STAR, t_star: int = DEFAULT_T_CAP,
                   ceiling: float = DIVERGENCE_CEILING, strict: bool = False) -> PolynomialSchedule:
    """Truncated-exponential polynomials p(., t), t = 0..t_star, with their mu_hat_t.

    p(., 0) = 1; mu_hat_{t+1} = lam*kappa*E[p(mu_hat_t + Z, t)] and p(., t+1) has
    coefficients mu_hat_{t+1}^k / (k! L_hat_{t+1}) with E[p(Z, t+1)^2] = 1.
    Once mu_hat passes `ceiling` the schedule is cut there and flagged as
    diverged (or ScheduleDiverged is raised when `strict`).
    """
    if d_star < 1 or t_star < 1:
        raise ValueError("d_star and t_star must be at least 1")
    lk = lam * kappa
    c0 = np.zeros(d_star + 1)
    c0[0] = 1.0
    coeffs, mu_hat, log_L = [c0], [1.0], [0.0]
    for t in range(t_star):
        nxt = lk * gaussian_poly_mean(coeffs[t], mu_hat[t])
        if not math.isfinite(nxt) or nxt > ceiling:
            if strict:
                raise ScheduleDiverged(f"mu_hat overflowed after t={t}", t)
            return PolynomialSchedule(lam, kappa, d_star, coeffs, mu_hat, log_L, diverged=True)
        mu_hat.append(nxt)
        log_L.append(exp_series_log_norm(nxt, d_star))
        coeffs.append(schedule_coefficients(nxt, d_star))
    return PolynomialSchedule(lam, kappa, d_star, coeffs, mu_hat, log_L)


DEFAULT_INFLATION = 10.0


def background_inflation(schedule: PolynomialSchedule, n: int) -> list[float]:
    """Finite-n extra variance on off-set vertex values after each step.

    Entry t is (kappa/sqrt(n)) * E[p(mu_hat_{t-1} + Z, t-1)^2]: the clique rows
    of A feed f(theta) into every background vertex, and with only sqrt(n)
    summands that term stops being negligible once f grows like e^{mu z}.
    """
    out = [0.0]
    for t in range(schedule.t_star):
        m2 = gaussian_poly_second_moment(schedule.f(t), schedule.mu_hat[t])
        out.append(schedule.kappa / math.sqrt(n) * m2)
    return out


def default_t_star(lam: float, kappa: float, d_star: int = DEFAULT_D_STAR, M: float = DEFAULT_M,
                   cap: int = DEFAULT_T_CAP, n: int | None = None,
                   inflation: float = DEFAULT_INFLATION) -> int:
    """First t with mu_hat_t > M (or `cap`).

    With `n`, t is further cut back to the last step whose background
    inflation is at most `inflation`, so the final nonlinearity is not applied
    to values whose finite-n spread already swamps the state-evolution law.
    Never below 1.
    """
    sched = build_schedule(lam, kappa, d_star, cap)
    t_star = sched.t_star
    for t, m in enumerate(sched.mu_hat):
        if m > M:
            t_star = t
            break
    if n is not None:
        infl = background_inflation(sched, n)
        ok = 1
        for t in range(1, t_star + 1):
            if infl[t] > inflation:
                break
            ok = t
        t_star = ok
    return max(1, t_star)


# -- general state evolution -------------------------------------------------------

@dataclass
class SETrace:
    mu: list[float]
    tau: list[float]
    fs: list = field(repr=False)


def _expect(f, shift, scale, quad):
    if callable(f):
        x, w = quad
        return float(np.dot(w, f(shift + scale * x)))
    return gaussian_poly_mean(f, shift, scale)


def _expect_sq(f, scale, quad):
    if callable(f):
        x, w = quad
        return float(np.dot(w, f(scale * x) ** 2))
    return gaussian_poly_second_moment(f, 0.0, scale)


def general_se(fs: PolynomialSchedule | Sequence | Callable, lam: float, kappa: float, t_max: int,
               quad_points: int = 120) -> SETrace:
    """mu_{t+1} = lam*kappa*E[f(mu_t + tau_t Z, t)], tau_{t+1}^2 = E[f(tau_t Z, t)^2].

    `fs` is a schedule, a sequence of coefficient vectors / callables indexed by
    t, or a single callable f(x, t). Polynomials are integrated exactly;
    other callables use Gauss-Hermite quadrature.
    """
    if isinstance(fs, PolynomialSchedule):
        seq = fs.coeffs
        get = seq.__getitem__
        t_max = min(t_max, len(seq) - 1)
    elif callable(fs):
        def get(t):
            return lambda x: fs(x, t)
    else:
        get = list(fs).__getitem__
    x, w = np.polynomial.hermite_e.hermegauss(quad_points)
    quad = (x, w / math.sqrt(2 * math.pi))
    mu, tau = [1.0], [0.0]
    used = []
    for t in range(t_max):
        f = get(t)
        used.append(f)
        m = lam * kappa * _expect(f, mu[t], tau[t], quad)
        s2 = _expect_sq(f, tau[t], quad)
        if not (math.isfinite(m) and math.isfinite(s2)):
            raise ScheduleDiverged(f"state evolution overflowed at t={t}", t)
        mu.append(m)
        tau.append(math.sqrt(max(s2, 0.0)))
    return SETrace(mu, tau, used)


# -- sparse (large-degree) Gaussian recursion ------------------------------------------

@dataclass
class SparseSETrace:
    kappa: float
    mu0: list[float]
    mu1: list[float]
    sigma2: list[float]
    diverged: bool = False

    @property
    def sigma(self):
        return [math.sqrt(s) for s in self.sigma2]

    def threshold(self, t: int) -> float:
        return 0.5 * (self.mu0[t] + self.mu1[t])

    def snr(self, t: int) -> float:
        s = math.sqrt(self.sigma2[t])
        return (self.mu1[t] - self.mu0[t]) / s if s > 0 else math.nan

    def predicted_error(self, t: int) -> float:
        """2 Phi(-(mu1 - mu0) / (2 sigma)); nan at t = 0 where sigma = 0."""
        s = math.sqrt(self.sigma2[t])
        if s == 0:
            return math.nan
        return float(2.0 * special.ndtr(-(self.mu1[t] - self.mu0[t]) / (2.0 * s)))


def sparse_gaussian_se(kappa: float, t_max: int) -> SparseSETrace:
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    kh = math.log(kappa)
    mu0, mu1, s2 = [kh], [kh], [0.0]
    for _ in range(t_max):
        try:
            drift = 0.5 * math.exp(2 * mu0[-1] + 2 * s2[-1])
            boost = kappa * math.exp(mu1[-1] + 0.5 * s2[-1])
        except OverflowError:
            return SparseSETrace(kappa, mu0, mu1, s2, diverged=True)
        mu0.append(kh - drift)
        mu1.append(kh + boost - drift)
        s2.append(2 * drift)
    return SparseSETrace(kappa, mu0, mu1, s2)
