"""Numerical kernel: log-domain sums and quadrature, erfc, roots, derivatives.

Every routine here is a pure function of its arguments. Quadrature node sets
depend only on the configuration and the integrand, so repeated calls give
bitwise-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import AccuracyError, DomainError

__all__ = [
    "QuadratureConfig",
    "BracketedFunction",
    "LogRule",
    "DerivativeEstimate",
    "log_sum_exp",
    "log_domain_rule",
    "integrate_log_domain",
    "log_integrate",
    "erfc_eval",
    "erfcx_eval",
    "erf_eval",
    "erfc_scalar",
    "erfcx_scalar",
    "find_root",
    "golden_section",
    "differentiate_central",
]

_SQRT_PI = math.sqrt(math.pi)


# ---------------------------------------------------------------------------
# log-sum-exp


def log_sum_exp(terms) -> float:
    """Return ``log(sum(exp(terms)))`` without overflow.

    ``-inf`` entries are allowed and contribute nothing.
    """
    arr = np.asarray(terms, dtype=float).ravel()
    if arr.size == 0:
        raise DomainError("log_sum_exp needs at least one term")
    if arr.size == 1:
        return float(arr[0])
    top = np.max(arr)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(arr - top))))


def _lse_axis0(arr: np.ndarray) -> np.ndarray:
    """Column-wise log-sum-exp of a 2-D array (rows are summed)."""
    top = np.max(arr, axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    return safe + np.log(np.sum(np.exp(arr - safe), axis=0))


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for :func:`integrate_log_domain`.

    Attributes
    ----------
    rel_tol, abs_tol : float
        Relative tolerance between successive refinements, and the absolute
        mass (relative to the peak contribution) that tail truncation may drop.
    max_refinements : int
        Number of step halvings allowed after the initial level.
    peak_hint : float, optional
        Approximate location of the integrand maximum.
    window_halfwidth_factor : float
        Initial window half-width in units of the estimated Gaussian width.
    """

    rel_tol: float = 1e-12
    abs_tol: float = 1e-16
    max_refinements: int = 8
    peak_hint: Optional[float] = None
    window_halfwidth_factor: float = 8.0

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("rel_tol and abs_tol must be positive")
        if self.max_refinements < 1:
            raise DomainError("max_refinements must be at least 1")
        if self.window_halfwidth_factor < 6:
            raise DomainError("window_halfwidth_factor must be at least 6")

    def with_hint(self, hint: Optional[float]) -> "QuadratureConfig":
        return QuadratureConfig(self.rel_tol, self.abs_tol, self.max_refinements,
                                hint, self.window_halfwidth_factor)


@dataclass(frozen=True)
class LogRule:
    """Converged quadrature rule for one integrand.

    ``log_terms[k]`` is ``log(w_k) + L(x_k)``, so that
    ``sum(exp(log_terms) * phi(nodes))`` approximates the integral of
    ``phi * exp(L)`` for any smooth, moderate factor ``phi``.
    """

    nodes: np.ndarray
    log_terms: np.ndarray
    log_value: float
    rel_error: float
    window: tuple

    def weights(self) -> np.ndarray:
        """Normalised weights (sum to one)."""
        return np.exp(self.log_terms - self.log_value)

    def expect(self, phi: np.ndarray) -> float:
        """Mean of ``phi(nodes)`` under the normalised integrand."""
        return float(np.dot(self.weights(), phi))


_TS_TMAX = 4.0


def _ts_panel(a: float, b: float, h: float):
    """Tanh-sinh nodes and weights on [a, b] with step h."""
    n = int(math.ceil(_TS_TMAX / h))
    k = np.arange(-n, n + 1) * h
    s = 0.5 * math.pi * np.sinh(k)
    e = np.exp(-2.0 * np.abs(s))
    # distance from the nearer endpoint in units of the half-width
    gap = 2.0 * e / (1.0 + e)
    half = 0.5 * (b - a)
    x = np.where(k < 0, a + half * gap, b - half * gap)
    x[n] = a + half
    w = half * h * 0.5 * math.pi * np.cosh(k) * 4.0 * e / (1.0 + e) ** 2
    return x, w


def _call(log_integrand, x):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        val = np.asarray(log_integrand(x), dtype=float)
    if val.shape != np.shape(x):
        val = np.broadcast_to(val, np.shape(x)).astype(float)
    return np.where(np.isnan(val), -np.inf, val)


def _call1(log_integrand, x: float) -> float:
    return float(_call(log_integrand, np.array([x]))[0])


def _locate_peak(L, lo, hi, hint):
    """Rough maximiser of L on (lo, hi)."""
    if hint is not None and np.isfinite(hint):
        x0 = min(max(hint, lo), hi)
        scale = max(1.0, abs(x0)) * 1e-2
        cands = [x0]
        for _ in range(3):
            probe = x0 + scale * np.linspace(-8, 8, 33)
            probe = probe[(probe >= lo) & (probe <= hi)]
            if probe.size == 0:
                break
            vals = _call(L, probe)
            x0 = float(probe[int(np.argmax(vals))])
            cands.append(x0)
            scale *= 0.25
        return x0
    pts = []
    if np.isfinite(lo) and np.isfinite(hi):
        pts = list(np.linspace(lo, hi, 65))
    else:
        base = 0.0 if lo <= 0.0 <= hi else (lo if np.isfinite(lo) else hi)
        pts = [base]
        for k in range(-4, 12):
            for sgn in (1.0, -1.0):
                x = base + sgn * 2.0 ** k
                if lo <= x <= hi:
                    pts.append(x)
        if np.isfinite(lo):
            pts.append(lo)
        if np.isfinite(hi):
            pts.append(hi)
    pts = np.array(sorted(set(pts)))
    vals = _call(L, pts)
    k = int(np.argmax(vals))
    if not np.isfinite(vals[k]):
        return float(pts[k])
    left = pts[max(k - 1, 0)]
    right = pts[min(k + 1, pts.size - 1)]
    if right > left:
        x, _ = golden_section(lambda y: -_call1(L, y), left, right, tol=1e-9 * max(1.0, abs(pts[k])))
        if _call1(L, x) >= vals[k]:
            return x
    return float(pts[k])


def _width_estimate(L, p, lo, hi):
    """Decay length of the integrand at its maximum p.

    Interior maxima use 1/sqrt(-L''); maxima at a domain end use the larger
    of the one-sided slope and sqrt of the curvature.
    """
    d = 1e-3 * max(1.0, abs(p))
    sigma = 1.0
    for _ in range(8):
        if p - d >= lo and p + d <= hi:
            l0, ll, lr = _call1(L, p), _call1(L, p - d), _call1(L, p + d)
            slope = (lr - ll) / (2 * d)
            curv = (lr - 2 * l0 + ll) / d ** 2
        else:
            side = 1.0 if p + 2 * d <= hi else -1.0
            l0, l1, l2 = (_call1(L, p + side * k * d) for k in range(3))
            slope = (-3 * l0 + 4 * l1 - l2) / (2 * d)
            curv = (l0 - 2 * l1 + l2) / d ** 2
        if not np.all(np.isfinite([slope, curv])):
            d *= 0.1
            continue
        rate = max(abs(slope), math.sqrt(-curv) if curv < 0 else 0.0)
        if rate == 0.0:
            return sigma
        sigma = 1.0 / rate
        if d <= 0.05 * sigma:
            return sigma
        d = 0.05 * sigma
    return sigma


def log_domain_rule(log_integrand: Callable, domain: Sequence[float],
                    config: QuadratureConfig = QuadratureConfig(),
                    breakpoints: Sequence[float] = ()) -> LogRule:
    """Build a converged quadrature rule for ``exp(log_integrand)``.

    The integrand is assumed concentrated around one maximum. A window is
    placed around it and widened until the log-integrand at each edge sits at
    least ``log(width) - log(abs_tol)`` below the peak; the window is then
    split at the peak and at ``breakpoints`` and each panel is integrated by
    the tanh-sinh rule with the step halved until successive estimates agree
    to ``rel_tol``.

    Parameters
    ----------
    log_integrand : callable
        Vectorised map from an array of abscissae to log-values; ``-inf`` and
        ``nan`` are read as a zero integrand.
    domain : pair of float
        Integration limits, either may be infinite.
    config : QuadratureConfig
    breakpoints : sequence of float
        Abscissae where the integrand is not smooth.
    """
    lo, hi = float(domain[0]), float(domain[1])
    if not lo < hi:
        raise DomainError(f"empty integration domain ({lo}, {hi})")
    L = log_integrand
    p = _locate_peak(L, lo, hi, config.peak_hint)
    lpeak = _call1(L, p)
    if not np.isfinite(lpeak):
        if lpeak == -np.inf:
            return LogRule(np.array([p]), np.array([-np.inf]), -np.inf, 0.0, (lo, hi))
        raise DomainError("log-integrand is +inf at its peak")
    sigma = _width_estimate(L, p, lo, hi)
    half = config.window_halfwidth_factor * sigma
    log_abs = math.log(config.abs_tol)

    def edge(direction):
        dist = half
        bound = hi if direction > 0 else lo
        nonlocal lpeak
        for _ in range(200):
            x = p + direction * dist
            if (direction > 0 and x >= bound) or (direction < 0 and x <= bound):
                return bound
            lx = _call1(L, x)
            lpeak = max(lpeak, lx) if np.isfinite(lx) else lpeak
            width = 2.0 * dist
            if lx <= lpeak + log_abs - math.log(width):
                return x
            dist *= 2.0
        raise AccuracyError("integrand tail does not decay", best=None)

    left, right = edge(-1.0), edge(1.0)
    cuts = sorted({left, right, *[b for b in breakpoints if left < b < right],
                   *([p] if left < p < right else [])})
    panels = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1) if cuts[i + 1] > cuts[i]]

    prev = None
    h = 1.0
    best = None
    for level in range(config.max_refinements + 3):
        xs, ws = [], []
        for a, b in panels:
            x, w = _ts_panel(a, b, h)
            xs.append(x)
            ws.append(w)
        x = np.concatenate(xs)
        w = np.concatenate(ws)
        with np.errstate(divide="ignore"):
            terms = np.log(w) + _call(L, x)
        lv = log_sum_exp(terms)
        if prev is not None:
            if not np.isfinite(lv):
                err = 0.0 if lv == prev else math.inf
            else:
                err = abs(math.expm1(prev - lv)) if np.isfinite(prev) else math.inf
            best = LogRule(x, terms, lv, err, (left, right))
            if level >= 2 and err <= config.rel_tol:
                return best
        prev = lv
        h *= 0.5
    raise AccuracyError("quadrature did not converge", best=best,
                        error_bound=best.rel_error if best else math.inf)


def integrate_log_domain(log_integrand: Callable, domain: Sequence[float],
                         config: QuadratureConfig = QuadratureConfig(),
                         breakpoints: Sequence[float] = ()) -> float:
    """Integral of ``exp(log_integrand)`` over ``domain``.

    >>> round(integrate_log_domain(lambda t: -t * t / 2, (-np.inf, np.inf)), 7)
    2.5066283
    """
    try:
        rule = log_domain_rule(log_integrand, domain, config, breakpoints)
    except AccuracyError as exc:
        if isinstance(exc.best, LogRule):
            value = math.exp(exc.best.log_value)
            raise AccuracyError(str(exc), best=value,
                                error_bound=exc.best.rel_error * value) from None
        raise
    return math.exp(rule.log_value)


def log_integrate(log_integrand: Callable, domain: Sequence[float],
                  config: QuadratureConfig = QuadratureConfig(),
                  breakpoints: Sequence[float] = ()) -> float:
    """Logarithm of :func:`integrate_log_domain`, safe for huge or tiny values."""
    return log_domain_rule(log_integrand, domain, config, breakpoints).log_value


# ---------------------------------------------------------------------------
# error function

_SERIES_LIMIT = 1.0
_SERIES_TERMS = 40
_CF_DEPTH = 200


def _erf_series(x: np.ndarray) -> np.ndarray:
    # erf(x) = 2x/sqrt(pi) e^{-x^2} sum (2x^2)^n / (2n+1)!!, all terms positive
    x2 = x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    for n in range(1, _SERIES_TERMS):
        term = term * 2.0 * x2 / (2 * n + 1)
        total = total + term
    return 2.0 / _SQRT_PI * x * np.exp(-x2) * total


def _erfcx_cf(x: np.ndarray) -> np.ndarray:
    # e^{x^2} erfc(x) = (1/sqrt(pi)) / (x + (1/2)/(x + (2/2)/(x + ...))), x > 0
    r = np.zeros_like(x)
    if x.size == 0:
        return r
    for n in range(_cf_depth(float(np.min(x))), 0, -1):
        r = (0.5 * n) / (x + r)
    return 1.0 / (_SQRT_PI * (x + r))


def _exp_sq(y: np.ndarray, sign: float) -> np.ndarray:
    # exp(sign*y^2) with y split so the leading square is exact
    # beyond |y| = 27 the result under- or overflows anyway
    big = np.abs(y) > 27.0
    y = np.clip(y, -27.0, 27.0)
    hi = np.round(y * 16.0) / 16.0
    lo = y - hi
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(sign * hi * hi) * np.exp(sign * (2.0 * hi * lo + lo * lo))
    return np.where(big, 0.0 if sign < 0 else np.inf, out)


def _erfcx_nonneg(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x < _SERIES_LIMIT
    if np.any(small):
        xs = x[small]
        out[small] = _exp_sq(xs, 1.0) * (1.0 - _erf_series(xs))
    if np.any(~small):
        out[~small] = _erfcx_cf(x[~small])
    return out


def _cf_depth(xmin: float) -> int:
    # terms needed for full double precision fall off like 1/x^2
    return int(min(_CF_DEPTH, 20 + math.ceil(240.0 / (xmin * xmin))))


def _erf_series_scalar(x: float) -> float:
    x2 = x * x
    term = total = 1.0
    for n in range(1, _SERIES_TERMS):
        term *= 2.0 * x2 / (2 * n + 1)
        total += term
        if term < 1e-17 * total:
            break
    return 2.0 / _SQRT_PI * x * math.exp(-x2) * total


def _exp_sq_scalar(y: float, sign: float) -> float:
    if abs(y) > 27.0:
        return 0.0 if sign < 0 else math.inf
    hi = round(y * 16.0) / 16.0
    lo = y - hi
    return math.exp(sign * hi * hi) * math.exp(sign * (2.0 * hi * lo + lo * lo))


def _erfcx_scalar_nonneg(x: float) -> float:
    if x < _SERIES_LIMIT:
        return _exp_sq_scalar(x, 1.0) * (1.0 - _erf_series_scalar(x))
    r = 0.0
    for n in range(_cf_depth(x), 0, -1):
        r = (0.5 * n) / (x + r)
    return 1.0 / (_SQRT_PI * (x + r))


def erfcx_scalar(x: float) -> float:
    """Scalar ``exp(x^2) erfc(x)`` without array overhead."""
    if x >= 0:
        return _erfcx_scalar_nonneg(x)
    return 2.0 * _exp_sq_scalar(-x, 1.0) - _erfcx_scalar_nonneg(-x)


def erfc_scalar(x: float) -> float:
    """Scalar ``erfc(x)`` without array overhead."""
    ax = abs(x)
    if ax < _SERIES_LIMIT:
        return 1.0 - _erf_series_scalar(x)
    tail = _exp_sq_scalar(ax, -1.0) * _erfcx_scalar_nonneg(ax)
    return tail if x > 0 else 2.0 - tail


def erfcx_eval(x):
    """Scaled complementary error function ``exp(x^2) * erfc(x)``."""
    if isinstance(x, (float, int)):
        return erfcx_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    pos = flat >= 0
    out[pos] = _erfcx_nonneg(flat[pos])
    if np.any(~pos):
        y = -flat[~pos]
        out[~pos] = 2.0 * _exp_sq(y, 1.0) - _erfcx_nonneg(y)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def erfc_eval(x):
    """Complementary error function; accepts scalars or arrays.

    Uses a positive-term power series for ``|x| < 1`` and a continued
    fraction for the scaled function beyond.
    """
    if isinstance(x, (float, int)):
        if not math.isfinite(x):
            raise DomainError("erfc_eval needs finite input")
        return erfc_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("erfc_eval needs finite input")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    ax = np.abs(flat)
    small = ax < _SERIES_LIMIT
    out[small] = 1.0 - _erf_series(flat[small])
    big = ~small
    if np.any(big):
        y = ax[big]
        with np.errstate(under="ignore"):
            tail = _exp_sq(y, -1.0) * _erfcx_cf(y)
        out[big] = np.where(flat[big] > 0, tail, 2.0 - tail)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def erf_eval(x):
    """Error function, ``1 - erfc`` with the series used near zero."""
    if isinstance(x, (float, int)):
        x = float(x)
        return _erf_series_scalar(x) if abs(x) < _SERIES_LIMIT else 1.0 - erfc_scalar(x)
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = np.abs(flat) < _SERIES_LIMIT
    out[small] = _erf_series(flat[small])
    if np.any(~small):
        out[~small] = 1.0 - np.atleast_1d(erfc_eval(flat[~small]))
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


# ---------------------------------------------------------------------------
# roots and one-dimensional search


@dataclass(frozen=True)
class BracketedFunction:
    """A scalar function with a sign-changing bracket ``[lo, hi]``."""

    evaluator: Callable[[float], float]
    lo: float
    hi: float


def find_root(f: BracketedFunction, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Brent's method: bisection safeguarded inverse quadratic / secant steps.

    The returned point lies in a final bracket of width at most ``tol``
    (or is an exact zero).
    """
    g = f.evaluator
    a, b = float(f.lo), float(f.hi)
    if a > b:
        a, b = b, a
    fa, fb = float(g(a)), float(g(b))
    if not (np.isfinite(fa) and np.isfinite(fb)):
        raise DomainError("bracket endpoints evaluate to non-finite values")
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) == (fb > 0):
        raise DomainError(f"root not bracketed: f({a})={fa}, f({b})={fb}")
    c, fc = a, fa
    d = e = b - a
    for _ in range(max_iter):
        if (fb > 0) == (fc > 0):
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * np.finfo(float).eps * abs(b) + 0.5 * tol
        xm = 0.5 * (c - b)
        if abs(xm) <= tol1 or fb == 0.0:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                pp = 2.0 * xm * s
                qq = 1.0 - s
            else:
                qq = fa / fc
                r = fb / fc
                pp = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0))
                qq = (qq - 1.0) * (r - 1.0) * (s - 1.0)
            if pp > 0:
                qq = -qq
            pp = abs(pp)
            if 2.0 * pp < min(3.0 * xm * qq - abs(tol1 * qq), abs(e * qq)):
                e, d = d, pp / qq
            else:
                d = e = xm
        else:
            d = e = xm
        a, fa = b, fb
        b += d if abs(d) > tol1 else math.copysign(tol1, xm)
        fb = float(g(b))
        if not np.isfinite(fb):
            raise DomainError(f"non-finite function value at {b}")
    raise AccuracyError("find_root exceeded its iteration budget", best=b,
                        error_bound=abs(c - b))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-10, max_iter: int = 300):
    """Minimise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = float(lo), float(hi)
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


# ---------------------------------------------------------------------------
# derivatives


@dataclass(frozen=True)
class DerivativeEstimate:
    value: float
    step: float
    error: float


def differentiate_central(f: Callable[[float], float], x: float,
                          scheme: str = "order4", step: Optional[float] = None
                          ) -> DerivativeEstimate:
    """Central difference at ``x`` improved by one Richardson step.

    ``scheme`` selects the base stencil: ``"order2"`` (3 points) or
    ``"order4"`` (5 points). The estimate at step ``h`` is combined with the
    one at ``h/2``; ``error`` is their difference.
    """
    if scheme not in ("order2", "order4"):
        raise DomainError(f"unknown scheme {scheme!r}")
    h = step if step is not None else 1e-2 * max(1.0, abs(x))

    def sample(y):
        v = float(f(y))
        if not np.isfinite(v):
            raise DomainError(f"non-finite sample at {y}")
        return v

    def stencil(hh):
        if scheme == "order2":
            return (sample(x + hh) - sample(x - hh)) / (2 * hh)
        return (8 * (sample(x + hh) - sample(x - hh))
                - (sample(x + 2 * hh) - sample(x - 2 * hh))) / (12 * hh)

    coarse, fine = stencil(h), stencil(h / 2)
    k = 4.0 if scheme == "order2" else 16.0
    value = (k * fine - coarse) / (k - 1.0)
    return DerivativeEstimate(value, h, abs(value - fine))
