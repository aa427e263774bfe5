"""Balanced coefficient sequences and the checks run on them.

A sequence is balanced with parameter beta when every moment
b_i = int_0^R c_i x^i / f(x) dx equals 1, except b_0 = 1 - beta.
Equivalently int_0^inf f(sx)/f(x) dx = 1/(1-s) - beta for 0 < s < 1.
"""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NonConvergenceError, RangeError
from .numerics import QuadratureConfig, integrate_log_domain
from .series import (CoefficientSequence, eval_log_f, eval_profile, factorial_sequence,
                     log_f_t, solve_u)

log = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "BalanceResidual",
    "residual_vector",
    "solve_balanced",
    "global_balance_check",
    "beta_scan",
    "interpolation_convexity_probe",
    "conjecture_probe",
    "write_solution",
    "read_solution",
    "default_cutoff",
]

QUAD = QuadratureConfig(rel_tol=1e-11, abs_tol=1e-16)


@dataclass(frozen=True)
class SolverConfig:
    """Truncation and iteration settings.

    ``enforce_count`` defaults to ``N - ceil(4 sqrt N)`` and ``domain_cutoff``
    to :func:`default_cutoff` of the current iterate. ``method`` is
    ``"newton"`` (log-coefficient Newton with a tail closure) or
    ``"fixed-point"`` (plain multiplicative sweeps).
    """

    truncation_order: int = 80
    enforce_count: Optional[int] = None
    domain_cutoff: Optional[float] = None
    tol: float = 1e-8
    damping: float = 1.0
    max_sweeps: Optional[int] = None
    method: str = "newton"
    grid_step: Optional[float] = None
    t_min: float = -45.0

    def __post_init__(self):
        n = self.truncation_order
        if n < 8:
            raise DomainError("truncation order must be at least 8")
        cap = n - math.ceil(4 * math.sqrt(n))
        if self.enforce_count is None:
            object.__setattr__(self, "enforce_count", cap)
        if not 2 <= self.enforce_count <= cap:
            raise DomainError(f"enforce_count must lie in [2, {cap}] for N={n}")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.max_sweeps is not None and self.max_sweeps < 1:
            raise DomainError("max_sweeps must be positive")
        if not 0 < self.damping <= 1:
            raise DomainError("damping must lie in (0, 1]")
        if self.method not in ("newton", "fixed-point"):
            raise DomainError(f"unknown method {self.method!r}")
        if self.domain_cutoff is not None and self.domain_cutoff <= 0:
            raise DomainError("domain_cutoff must be positive")

    @property
    def sweep_budget(self) -> int:
        """``max_sweeps`` or its per-method default (60 Newton, 3000 fixed-point)."""
        if self.max_sweeps is not None:
            return self.max_sweeps
        return 60 if self.method == "newton" else 3000

    @property
    def step(self) -> float:
        if self.grid_step is not None:
            return self.grid_step
        return min(0.02, 0.5 / math.sqrt(self.truncation_order))


def default_cutoff(seq: CoefficientSequence) -> float:
    """Integration cutoff: the x where u = N - sqrt N, plus 5 sqrt N."""
    n = seq.truncation_order
    t = solve_u(seq, n - math.sqrt(n))
    return math.exp(t) + 5.0 * math.sqrt(n)


def _targets(beta: float, count: int) -> np.ndarray:
    tgt = np.ones(count)
    tgt[0] = 1.0 - beta
    return tgt


@dataclass(frozen=True)
class BalanceResidual:
    b: np.ndarray
    max_deviation: float
    cutoff: float


def residual_vector(seq: CoefficientSequence, config: SolverConfig,
                    quad: QuadratureConfig = QUAD) -> BalanceResidual:
    """Moments b_i = int_0^R c_i x^i / f dx for i < enforce_count.

    Each moment is integrated in t = log x with the peak hint at t_{i+1},
    the point where u = i + 1.
    """
    n_eff = min(config.enforce_count, seq.truncation_order + 1)
    R = config.domain_cutoff or seq.info.get("R") or default_cutoff(seq)
    top = math.log(R)
    b = np.empty(n_eff)
    for i in range(n_eff):
        lam_i = seq.lambdas[i]
        if not np.isfinite(lam_i):
            b[i] = 0.0
            continue
        try:
            hint = min(solve_u(seq, i + 1.0), top)
        except RangeError:
            hint = top
        b[i] = integrate_log_domain(
            lambda t, i=i: (i + 1.0) * t - lam_i - log_f_t(seq, t),
            (-np.inf, top), quad.with_hint(hint))
    dev = float(np.max(np.abs(b - _targets(seq.beta, n_eff))))
    return BalanceResidual(b, dev, R)


# ---------------------------------------------------------------------------
# solver


class _Grid:
    """Uniform trapezoid grid in t on [t_min, log R]."""

    def __init__(self, t_min: float, R: float, step: float):
        top = math.log(R)
        n = max(int(math.ceil((top - t_min) / step)), 8)
        self.t = np.linspace(t_min, top, n + 1)
        h = self.t[1] - self.t[0]
        w = np.full(self.t.size, h)
        w[0] = w[-1] = 0.5 * h
        self.log_w = np.log(w) + self.t   # dx = e^t dt


def _weights(lam: np.ndarray, grid: _Grid):
    idx = np.arange(lam.size, dtype=float)
    L = idx[:, None] * grid.t[None, :] - lam[:, None]
    top = np.max(L, axis=0)
    logf = top + np.log(np.sum(np.exp(L - top), axis=0))
    tau = np.exp(L - logf)
    return tau, np.exp(L - logf + grid.log_w)


class _TailClosure:
    """Unknowns (lambda_1..lambda_K, s); indices above K follow
    lambda_i = log i! + (lambda_K - log K!) + s log(i/K)."""

    def __init__(self, order: int, k: int):
        self.order, self.k = order, k
        self.idx = np.arange(order + 1, dtype=float)
        self.lf = gammaln(self.idx + 1.0)
        self.pad_log = np.log(self.idx[k + 1:] / k)

    def expand(self, theta: np.ndarray) -> np.ndarray:
        k = self.k
        lam = np.empty(self.order + 1)
        lam[0] = 0.0
        lam[1:k + 1] = theta[:k]
        lam[k + 1:] = self.lf[k + 1:] + (lam[k] - self.lf[k]) + theta[k] * self.pad_log
        return lam

    def initial(self, lam: np.ndarray) -> np.ndarray:
        k = self.k
        tail = lam[k + 1:] - self.lf[k + 1:] - (lam[k] - self.lf[k])
        s = float(np.dot(tail, self.pad_log) / np.dot(self.pad_log, self.pad_log))
        return np.concatenate([lam[1:k + 1], [s if np.isfinite(s) else 0.0]])

    def chain(self, jac_full: np.ndarray) -> np.ndarray:
        """Jacobian in lambda_0..lambda_N -> Jacobian in theta."""
        k = self.k
        pad = jac_full[:, k + 1:]
        out = np.zeros((jac_full.shape[0], k + 1))
        out[:, :k] = jac_full[:, 1:k + 1]
        out[:, k - 1] += pad.sum(axis=1)
        out[:, k] = pad @ self.pad_log
        return out


def _newton(beta, lam0, config, grid, n_eff):
    closure = _TailClosure(lam0.size - 1, n_eff - 1)
    tgt = _targets(beta, n_eff)
    theta = closure.initial(lam0)

    def evaluate(th):
        lam = closure.expand(th)
        tau, wm = _weights(lam, grid)
        b = wm[:n_eff].sum(axis=1)
        return lam, tau, wm, b

    lam, tau, wm, b = evaluate(theta)
    F = np.log(b / tgt)
    for sweep in range(1, config.sweep_budget + 1):
        dev = float(np.max(np.abs(b - tgt)))
        if dev <= 0.05 * config.tol:
            return lam, sweep - 1, dev
        jac = (wm[:n_eff] @ tau.T) / b[:, None]
        jac[np.arange(n_eff), np.arange(n_eff)] -= 1.0
        step = np.linalg.solve(closure.chain(jac), -F)
        # backtrack on the residual norm
        norm0 = float(np.linalg.norm(F))
        theta_step = config.damping
        while True:
            trial = theta + theta_step * step
            lam_t, tau_t, wm_t, b_t = evaluate(trial)
            with np.errstate(divide="ignore", invalid="ignore"):
                F_t = np.log(b_t / tgt)
            if np.all(np.isfinite(F_t)) and np.linalg.norm(F_t) < norm0:
                break
            theta_step *= 0.5
            if theta_step < 1e-6:
                raise NonConvergenceError("Newton line search failed",
                                          best=CoefficientSequence(beta, lam),
                                          error_bound=dev)
        theta, lam, tau, wm, b, F = trial, lam_t, tau_t, wm_t, b_t, F_t
        log.debug("newton sweep %d: deviation %.3e, step %.3g", sweep, dev, theta_step)
    dev = float(np.max(np.abs(b - tgt)))
    if dev <= 0.05 * config.tol:
        return lam, config.sweep_budget, dev
    raise NonConvergenceError(f"Newton stopped at deviation {dev:.3e}",
                              best=CoefficientSequence(beta, lam), error_bound=dev)


def _fixed_point(beta, lam0, config, grid, n_eff):
    tgt = _targets(beta, n_eff)
    lam = lam0.copy()
    theta = config.damping
    prev = math.inf
    dev = math.inf
    # pad indices keep their starting values: their truncated moments can
    # never reach 1, and chasing them drags the enforced block off target
    for sweep in range(1, config.sweep_budget + 1):
        _, wm = _weights(lam, grid)
        b = wm[:n_eff].sum(axis=1)
        dev = float(np.max(np.abs(b - tgt)))
        if dev <= 0.05 * config.tol:
            return lam, sweep - 1, dev
        if dev > prev:
            theta = 0.5 * config.damping
        prev = dev
        lam[:n_eff] += theta * np.log(b / tgt)
        lam = lam - lam[0]
    raise NonConvergenceError(f"fixed-point sweeps stopped at deviation {dev:.3e}",
                              best=CoefficientSequence(beta, lam), error_bound=dev)


def solve_balanced(beta: float, config: SolverConfig = SolverConfig(),
                   initial: Optional[np.ndarray] = None,
                   quad: QuadratureConfig = QUAD) -> CoefficientSequence:
    """Solve b_i = 1 - beta delta_{0i} for i < enforce_count.

    The cutoff R is recomputed from the iterate until it settles; the result
    is re-checked with adaptive quadrature before being returned.
    """
    if not 0.0 <= beta < 1.0:
        raise DomainError(f"beta={beta} outside [0, 1)")
    order = config.truncation_order
    n_eff = config.enforce_count
    if initial is None:
        lam = factorial_sequence(order).lambdas.copy()
    else:
        lam = np.asarray(initial, dtype=float).copy()
        if lam.size != order + 1:
            raise DomainError("initial guess has the wrong length")
        lam = lam - lam[0]
    run = _newton if config.method == "newton" else _fixed_point
    R = config.domain_cutoff
    sweeps = 0
    for _ in range(8):
        R_used = R if config.domain_cutoff else default_cutoff(CoefficientSequence(beta, lam))
        grid = _Grid(config.t_min, R_used, config.step)
        lam, k, dev = run(beta, lam, config, grid, n_eff)
        sweeps += k
        if config.domain_cutoff:
            break
        R_new = default_cutoff(CoefficientSequence(beta, lam))
        if abs(R_new - R_used) <= 1e-3 * R_used:
            break
        R = None
    info = {"R": R_used, "N_eff": n_eff, "tol": config.tol, "sweeps": sweeps,
            "method": config.method}
    seq = CoefficientSequence(beta, lam, info)
    check = residual_vector(seq, replace(config, domain_cutoff=R_used), quad)
    if check.max_deviation > config.tol:
        raise NonConvergenceError(
            f"quadrature re-check deviation {check.max_deviation:.3e} exceeds tol",
            best=seq, error_bound=check.max_deviation)
    info["max_deviation"] = check.max_deviation
    return seq


# ---------------------------------------------------------------------------
# probes


@dataclass(frozen=True)
class BalanceRow:
    s: float
    lhs: float
    rhs: float
    deviation: float
    validity_bound: float


def global_balance_check(seq: CoefficientSequence, s_samples: Sequence[float],
                         config: SolverConfig, quad: QuadratureConfig = QUAD) -> list:
    """Compare int_0^R f(sx)/f(x) dx with 1/(1-s) - beta.

    ``validity_bound`` is the part of the integral coming from x beyond the
    point where u reaches enforce_count, where the coefficients are not
    constrained; it estimates the truncation error of ``lhs``.
    """
    R = config.domain_cutoff or seq.info.get("R") or default_cutoff(seq)
    top = math.log(R)
    try:
        t_edge = min(solve_u(seq, float(config.enforce_count)), top)
    except RangeError:
        t_edge = top
    rows = []
    for s in s_samples:
        if not 0.0 < s < 1.0:
            raise DomainError(f"s={s} outside (0, 1)")
        ls = math.log(s)
        L = lambda t: log_f_t(seq, t + ls) - log_f_t(seq, t) + t
        # the integrand e^{(s-1)x} peaks near x ~ 1/(1-s)
        hint = min(-math.log(1.0 - s), top)
        lhs = integrate_log_domain(L, (-np.inf, top), quad.with_hint(hint))
        tail = integrate_log_domain(L, (t_edge, top), quad) if t_edge < top else 0.0
        rhs = 1.0 / (1.0 - s) - seq.beta
        rows.append(BalanceRow(float(s), lhs, rhs, abs(lhs - rhs), tail))
    return rows


@dataclass(frozen=True)
class ScanRow:
    beta: float
    lambda_n: float
    c_n: float
    c_n_factorial: float
    monotone_ok: bool
    above_factorial: bool


def beta_scan(betas: Sequence[float], n_probe: int, config: SolverConfig) -> list:
    """Solve for each beta and report c_n(beta) with monotonicity flags."""
    betas = [float(b) for b in betas]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise DomainError("betas must be strictly increasing")
    if not 0 <= n_probe < config.enforce_count:
        raise DomainError("n_probe must be an enforced index")
    rows = []
    prev_c = -math.inf
    lf = float(gammaln(n_probe + 1.0))
    for beta in betas:
        seq = solve_balanced(beta, config)
        lam_n = float(seq.lambdas[n_probe])
        c_n = math.exp(-lam_n)
        cf = math.exp(lf - lam_n)
        above = cf > 1.0 if beta > 0 else True
        rows.append(ScanRow(beta, lam_n, c_n, cf, c_n > prev_c, above))
        prev_c = c_n
    return rows


@dataclass(frozen=True)
class ConvexityProbe:
    t: np.ndarray
    b: np.ndarray
    second_differences: np.ndarray
    convex: bool
    slope_start: float
    slope_end: float
    scale: float


def interpolation_convexity_probe(seq0: CoefficientSequence, seq1: CoefficientSequence,
                                  i: int, t_grid: Sequence[float], config: SolverConfig,
                                  quad: QuadratureConfig = QUAD) -> ConvexityProbe:
    """b_i along f_t = t k f_1 + (1-t) f_0 with k = c_i / c1_i.

    The rescaling makes the i-th coefficient of f_t independent of t, so the
    numerator of b_i(t) is fixed and b_i(t) is the integral of a convex
    function of t.
    """
    if seq0.truncation_order != seq1.truncation_order:
        raise DomainError("sequences must share the truncation order")
    if not 0 <= i <= seq0.truncation_order:
        raise DomainError("index out of range")
    log_k = seq1.lambdas[i] - seq0.lambdas[i]
    lam_i = seq0.lambdas[i]
    R = config.domain_cutoff or max(seq0.info.get("R") or default_cutoff(seq0),
                                    seq1.info.get("R") or default_cutoff(seq1))
    top = math.log(R)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any((t_grid < 0) | (t_grid > 1)):
        raise DomainError("t_grid must lie in [0, 1]")
    hint = min(solve_u(seq0, i + 1.0), top)
    out = np.empty(t_grid.size)
    for k, tt in enumerate(t_grid):
        def L(t, tt=tt):
            l0 = log_f_t(seq0, t)
            l1 = log_f_t(seq1, t) + log_k
            if tt == 0.0:
                lf = l0
            elif tt == 1.0:
                lf = l1
            else:
                lf = np.logaddexp(math.log(tt) + l1, math.log1p(-tt) + l0)
            return (i + 1.0) * t - lam_i - lf
        out[k] = integrate_log_domain(L, (-np.inf, top), quad.with_hint(hint))
    d2 = out[2:] - 2 * out[1:-1] + out[:-2]
    dt = np.diff(t_grid)
    return ConvexityProbe(t_grid, out, d2, bool(np.all(d2 > 0)),
                          (out[1] - out[0]) / dt[0], (out[-1] - out[-2]) / dt[-1],
                          math.exp(log_k))


@dataclass(frozen=True)
class ConjectureRow:
    x: float
    ratio: float
    log_slope: float


def conjecture_probe(seq: CoefficientSequence, x_grid: Sequence[float],
                     enforce_count: Optional[int] = None) -> list:
    """f(x) / (x^beta e^x) and its logarithmic derivative u(x) - beta - x.

    At x = 0 the ratio is reported as f(0) = 1 (the normalisation).
    """
    n = seq.truncation_order
    n_eff = enforce_count or n - math.ceil(4 * math.sqrt(n))
    limit = n_eff - 2.0 * math.sqrt(n)
    rows = []
    for x in x_grid:
        x = float(x)
        if x < 0:
            raise DomainError("x must be non-negative")
        if x == 0.0:
            rows.append(ConjectureRow(0.0, math.exp(eval_log_f(seq, 0.0)), math.nan))
            continue
        prof = eval_profile(seq, x)
        if prof.u > limit:
            raise RangeError(f"x={x} has u={prof.u:.3f} beyond the safe limit {limit:.3f}",
                             safe_max=limit)
        log_ratio = prof.log_f - seq.beta * math.log(x) - x
        rows.append(ConjectureRow(x, math.exp(log_ratio), prof.u - seq.beta - x))
    return rows


# ---------------------------------------------------------------------------
# serialization


def _atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_solution(seq: CoefficientSequence, version: str = "") -> str:
    info = seq.info
    head = [
        "# balanced coefficient sequence",
        f"# version={version}" if version else None,
        f"# beta={seq.beta!r}",
        f"# N={seq.truncation_order}",
        f"# N_eff={info.get('N_eff', '')}",
        f"# R={info['R']!r}" if "R" in info else "# R=",
        f"# tol={info.get('tol', '')!r}" if "tol" in info else "# tol=",
        f"# sweeps={info.get('sweeps', '')}",
        "i,lambda_i",
    ]
    body = [f"{i},{v:.17g}" for i, v in enumerate(seq.lambdas)]
    return "\n".join([h for h in head if h is not None] + body) + "\n"


def write_solution(path: str, seq: CoefficientSequence, version: str = "") -> None:
    """Write the sequence atomically; values carry 17 significant digits."""
    _atomic_write(path, format_solution(seq, version))


def read_solution(path: str) -> CoefficientSequence:
    header = {}
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, _, val = line[1:].strip().partition("=")
                    header[key.strip()] = val.strip()
                continue
            if line.startswith("i,"):
                continue
            i, v = line.split(",")
            values[int(i)] = float(v)
    n = max(values) + 1
    if sorted(values) != list(range(n)):
        raise DomainError("solution file has missing indices")
    lam = np.array([values[i] for i in range(n)])
    info = {}
    for key, cast in (("R", float), ("N_eff", int), ("tol", float), ("sweeps", int)):
        if header.get(key):
            info[key] = cast(header[key])
    return CoefficientSequence(float(header.get("beta", 0.0)), lam, info)
