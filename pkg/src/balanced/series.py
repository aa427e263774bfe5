"""Truncated power series f(x) = sum exp(-lambda_i) x^i and its diagnostics.

Everything is computed in the variable t = log x. The coefficient weights
tau_x(i) = c_i x^i / f(x) form a probability distribution on indices whose
mean is u(x) = x f'(x)/f(x) and whose variance is d^2/dt^2 log f.
The continuous coefficients c(a) = 1 / int_0^inf x^a/f dx interpolate c_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, RangeError
from .numerics import (BracketedFunction, QuadratureConfig, differentiate_central,
                       find_root, log_domain_rule, log_sum_exp)

__all__ = [
    "CoefficientSequence",
    "ConcentrationProfile",
    "ContinuousCoefficient",
    "PeakData",
    "AsymptoticRow",
    "factorial_sequence",
    "eval_log_f",
    "log_f_t",
    "eval_profile",
    "solve_u",
    "safe_index_max",
    "continuous_coefficient",
    "peak_data",
    "asymptotic_report",
]

DEFAULT_QUAD = QuadratureConfig(rel_tol=1e-12, abs_tol=1e-18)


@dataclass(frozen=True)
class CoefficientSequence:
    """Coefficients ``c_i = exp(-lambdas[i])`` for ``i = 0..N``.

    ``+inf`` entries denote vanishing coefficients. ``info`` carries solver
    metadata such as the integration cutoff and sweep count.
    """

    beta: float
    lambdas: np.ndarray
    info: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise DomainError("lambdas must be a non-empty 1-D sequence")
        if np.any(np.isnan(lam)) or np.any(lam == -np.inf):
            raise DomainError("lambdas must be finite or +inf")
        if not 0.0 <= self.beta < 1.0:
            raise DomainError(f"beta={self.beta} outside [0, 1)")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @property
    def truncation_order(self) -> int:
        return self.lambdas.size - 1

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(-self.lambdas)

    def check_normalized(self) -> None:
        """Raise unless lambda_0 = 0 and N >= 8."""
        if self.lambdas[0] != 0.0:
            raise DomainError(f"lambda_0 = {self.lambdas[0]}, expected 0")
        if self.truncation_order < 8:
            raise DomainError("truncation order must be at least 8")

    def second_differences(self) -> np.ndarray:
        lam = self.lambdas
        return lam[2:] - 2 * lam[1:-1] + lam[:-2]

    def scaled(self, factor: float) -> "CoefficientSequence":
        """Multiply every coefficient by ``factor``."""
        return CoefficientSequence(self.beta, self.lambdas - math.log(factor))


def factorial_sequence(order: int, beta: float = 0.0) -> CoefficientSequence:
    """Coefficients of the truncated exponential, lambda_i = log i!."""
    from scipy.special import gammaln
    return CoefficientSequence(beta, gammaln(np.arange(order + 1) + 1.0))


# ---------------------------------------------------------------------------
# weights and profile


def _log_terms(seq: CoefficientSequence, t: np.ndarray) -> np.ndarray:
    idx = np.arange(seq.lambdas.size, dtype=float)
    return idx[:, None] * t[None, :] - seq.lambdas[:, None]


def log_f_t(seq: CoefficientSequence, t) -> np.ndarray:
    """``log f(e^t)`` for an array of ``t``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    terms = _log_terms(seq, t)
    top = np.max(terms, axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    return safe + np.log(np.sum(np.exp(terms - safe), axis=0))


def eval_log_f(seq: CoefficientSequence, x: float) -> float:
    """``log f(x)`` by log-sum-exp over the terms ``i log x - lambda_i``."""
    if x < 0:
        raise DomainError("f is evaluated on x >= 0 only")
    if x == 0:
        return -float(seq.lambdas[0])
    idx = np.arange(seq.lambdas.size)
    return log_sum_exp(idx * math.log(x) - seq.lambdas)


@dataclass(frozen=True)
class ConcentrationProfile:
    x: float
    t: float
    log_f: float
    u: float
    index_variance: float
    weights_center: float
    weights: np.ndarray = field(repr=False, compare=False)


def eval_profile(seq: CoefficientSequence, x: float) -> ConcentrationProfile:
    """Index distribution tau_x(i) = c_i x^i / f(x) and its first two moments."""
    if not x > 0:
        raise DomainError("profile needs x > 0")
    t = math.log(x)
    terms = _log_terms(seq, np.array([t]))[:, 0]
    lf = log_sum_exp(terms)
    tau = np.exp(terms - lf)
    idx = np.arange(tau.size, dtype=float)
    u = float(np.dot(tau, idx))
    var = float(np.dot(tau, (idx - u) ** 2))
    return ConcentrationProfile(x, t, lf, u, var, u, tau)


def _u_t(seq: CoefficientSequence, t: float) -> float:
    terms = _log_terms(seq, np.array([t]))[:, 0]
    tau = np.exp(terms - log_sum_exp(terms))
    return float(np.dot(tau, np.arange(tau.size)))


def solve_u(seq: CoefficientSequence, target: float, tol: float = 1e-13) -> float:
    """Return ``t`` with ``u(e^t) = target``; u increases from its lowest
    index towards N."""
    n = seq.truncation_order
    if not 0 < target < n:
        raise RangeError(f"u = {target} is not attained (0 < u < {n})", safe_max=n)
    lo, hi = -1.0, 1.0
    while _u_t(seq, lo) > target:
        lo *= 2.0
        if lo < -1e4:
            raise RangeError(f"u = {target} below the range of u")
    while _u_t(seq, hi) < target:
        hi *= 2.0
        if hi > 1e4:
            raise RangeError(f"u = {target} not reached", safe_max=n)
    return find_root(BracketedFunction(lambda s: _u_t(seq, s) - target, lo, hi), tol)


def safe_index_max(order: int) -> float:
    """Largest continuous index a with a 4-sigma margin below N."""
    return order - 4.0 * math.sqrt(order)


# ---------------------------------------------------------------------------
# continuous coefficients


@dataclass(frozen=True)
class ContinuousCoefficient:
    a: float
    c_of_a: float
    lambda_of_a: float
    lambda_prime: float
    lambda_second: float


def _check_safe(seq: CoefficientSequence, a: float, name: str = "a") -> None:
    top = safe_index_max(seq.truncation_order)
    if a > top:
        raise RangeError(f"{name}={a} exceeds the safe maximum {top:.6g} "
                         f"for N={seq.truncation_order}", safe_max=top)


def continuous_coefficient(seq: CoefficientSequence, a: float,
                           config: QuadratureConfig = DEFAULT_QUAD
                           ) -> ContinuousCoefficient:
    """lambda(a) = log int x^a/f dx with its first two derivatives in a.

    In ``t`` the normalised integrand exp((a+1)t - log f) is a probability
    density; lambda' is its mean and lambda'' its variance.
    """
    if a < 1:
        raise DomainError("continuous coefficients are defined for a >= 1")
    _check_safe(seq, a)
    hint = config.peak_hint if config.peak_hint is not None else solve_u(seq, a + 1.0)
    rule = log_domain_rule(lambda t: (a + 1.0) * t - log_f_t(seq, t),
                           (-np.inf, np.inf), config.with_hint(hint))
    w = rule.weights()
    mean = float(np.dot(w, rule.nodes))
    var = float(np.dot(w, (rule.nodes - mean) ** 2))
    lam = rule.log_value
    return ContinuousCoefficient(a, math.exp(-lam), lam, mean, var)


# ---------------------------------------------------------------------------
# peaks


@dataclass(frozen=True)
class PeakData:
    a: float
    x_a: float
    x_tilde_a: float
    h_a_at_xa: float
    n_x: float
    delta_a: float


def _interpolated_lambda(seq: CoefficientSequence) -> PchipInterpolator:
    lam = seq.lambdas
    finite = np.isfinite(lam)
    idx = np.arange(lam.size)[finite]
    return PchipInterpolator(idx, lam[finite])


def _n_of_x(interp: PchipInterpolator, log_x: float, n_max: float) -> float:
    deriv = interp.derivative()
    lo, hi = 1.0, n_max
    g = lambda n: float(deriv(n)) - log_x
    if g(lo) >= 0:
        return lo
    if g(hi) <= 0:
        raise RangeError(f"maximiser of n log x - lambda(n) beyond {hi}", safe_max=hi)
    return find_root(BracketedFunction(g, lo, hi), 1e-12)


def peak_data(seq: CoefficientSequence, a: float,
              config: QuadratureConfig = DEFAULT_QUAD) -> PeakData:
    """x_a (u = a), x~_a = exp(lambda'(a)), h_a(x_a), n_{x_a} and Delta_a."""
    _check_safe(seq, a)
    t_a = solve_u(seq, a)
    cc = continuous_coefficient(seq, a, config)
    log_h = float(log_f_t(seq, t_a)[0]) - a * t_a + cc.lambda_of_a
    interp = _interpolated_lambda(seq)
    n = _n_of_x(interp, t_a, seq.truncation_order - 1.0)
    log_delta = (n - a) * t_a - float(interp(n)) + float(interp(a))
    return PeakData(a, math.exp(t_a), math.exp(cc.lambda_prime), math.exp(log_h),
                    n, math.exp(log_delta))


@dataclass(frozen=True)
class AsymptoticRow:
    a: float
    x_a: float
    u_residual: float
    u_over_x: float
    a_lambda_second: float
    variance_over_x: float
    h_over_sqrt_a: float
    x_minus_a: float
    x_shift_scaled: float
    t_tilde_gap: float
    t_tilde_gap_scaled: float
    f_ratio_at_x_tilde: float
    dx_tilde_da: float
    h_a_at_xa: float
    variance_at_xa: float
    lambda_second: float


def asymptotic_report(seq: CoefficientSequence, a_grid: Sequence[float],
                      config: QuadratureConfig = DEFAULT_QUAD) -> list:
    """One :class:`AsymptoticRow` per grid value of ``a``."""
    rows = []
    for a in a_grid:
        a = float(a)
        _check_safe(seq, a + 1.0, "a+1")
        t_a = solve_u(seq, a)
        prof = eval_profile(seq, math.exp(t_a))
        cc = continuous_coefficient(seq, a, config)
        log_h = prof.log_f - a * t_a + cc.lambda_of_a
        t_next = solve_u(seq, a + 1.0)
        gap = cc.lambda_prime - t_next
        k = int(math.floor(a))
        x_t = math.exp(cc.lambda_prime)
        log_ratio = (eval_log_f(seq, x_t) + seq.lambdas[k] - k * cc.lambda_prime
                     - 0.5 * math.log(2 * math.pi * x_t))
        step = 0.25
        dxt = differentiate_central(
            lambda s: math.exp(continuous_coefficient(seq, s, config).lambda_prime),
            a, scheme="order2", step=step).value
        x_a = math.exp(t_a)
        rows.append(AsymptoticRow(
            a=a, x_a=x_a, u_residual=prof.u - a, u_over_x=prof.u / x_a,
            a_lambda_second=a * cc.lambda_second,
            variance_over_x=prof.index_variance / x_a,
            h_over_sqrt_a=math.exp(log_h) / math.sqrt(a),
            x_minus_a=x_a - a,
            x_shift_scaled=(x_a - a) / (math.sqrt(a) * math.log(a)),
            t_tilde_gap=gap, t_tilde_gap_scaled=math.sqrt(a) * gap,
            f_ratio_at_x_tilde=math.exp(log_ratio), dx_tilde_da=dxt,
            h_a_at_xa=math.exp(log_h), variance_at_xa=prof.index_variance,
            lambda_second=cc.lambda_second))
    return rows
