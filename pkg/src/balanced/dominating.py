"""Half-line shape functionals of convex profiles and their extremal values.

For a convex g on [0, inf) with g(0) = g'(0) = 0 let a = int e^{-g},
b1 = int y e^{-g}, b = int y^2 e^{-g}. The shape functional b/a^3 is
invariant under dilation. The piecewise quadratic family g_{m,c} has
curvature 1 on [0, c] and m beyond; its functionals have closed forms in
terms of the scaled complementary error function, used throughout.

With the tail integrals P = int_c (x-c) x^2 e^{-g} and Q = int_c (x-c) e^{-g},
the knot derivative of the shape functional is gamma / a^4 where
gamma = (m - 1) G and G = a P - 3 b Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple, Union

import numpy as np

from .errors import AccuracyError, DomainError, RangeError
from .numerics import (BracketedFunction, QuadratureConfig, differentiate_central,
                       erf_eval, erfcx_eval, erfcx_scalar, find_root, golden_section, log_domain_rule)

__all__ = [
    "PiecewiseQuadraticHalf",
    "AdmissibleHalfFunction",
    "HalfFunctionals",
    "GPartials",
    "CriticalPath",
    "EtaAudit",
    "PQResult",
    "branch_functionals",
    "half_functionals",
    "half_functionals_quadrature",
    "d_raw",
    "gamma_fn",
    "G_value",
    "G_and_partials",
    "pq_extremize",
    "p_of",
    "q_of",
    "critical_path",
    "c_zero",
    "eta_value",
    "p_branch",
    "q_branch",
    "F_branch",
    "eta_F_audit",
    "general_d",
]

SQRT_HALF_PI = math.sqrt(math.pi / 2.0)
TWO_OVER_PI = 2.0 / math.pi
QUAD = QuadratureConfig(rel_tol=1e-13, abs_tol=1e-18)
C0_BRACKET = (0.5, 0.7)


# ---------------------------------------------------------------------------
# profile types


@dataclass(frozen=True)
class PiecewiseQuadraticHalf:
    """g(y) = y^2/2 for y <= c, then c^2/2 + c (y-c) + m (y-c)^2 / 2."""

    m: float
    c: float

    def __post_init__(self):
        if not self.m > 0:
            raise DomainError("curvature ratio m must be positive")
        if not self.c >= 0:
            raise DomainError("knot c must be non-negative")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        z = np.maximum(y - self.c, 0.0)
        inner = 0.5 * np.minimum(y, self.c) ** 2
        return inner + self.c * z + 0.5 * self.m * z * z

    def as_admissible(self) -> "AdmissibleHalfFunction":
        if self.c == 0:
            return AdmissibleHalfFunction(((0.0, self.m),))
        return AdmissibleHalfFunction(((0.0, 1.0), (self.c, self.m)))


@dataclass(frozen=True)
class AdmissibleHalfFunction:
    """Convex profile with piecewise constant curvature.

    ``segments`` lists ``(knot, curvature)`` pairs with increasing knots, the
    first knot at 0; each curvature holds up to the next knot. ``M1``/``M2``
    default to the extreme curvatures.
    """

    segments: Tuple[Tuple[float, float], ...]
    M1: Optional[float] = None
    M2: Optional[float] = None

    def __post_init__(self):
        segs = tuple((float(k), float(v)) for k, v in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs or segs[0][0] != 0.0:
            raise DomainError("first knot must be at 0")
        knots = [k for k, _ in segs]
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise DomainError("knots must increase strictly")
        curv = [v for _, v in segs]
        if self.M1 is None:
            object.__setattr__(self, "M1", min(curv))
        if self.M2 is None:
            object.__setattr__(self, "M2", max(curv))
        if not 0 < self.M1 <= self.M2:
            raise DomainError("need 0 < M1 <= M2")
        if any(v < self.M1 * (1 - 1e-12) or v > self.M2 * (1 + 1e-12) for v in curv):
            raise DomainError("curvature outside [M1, M2]")

    @property
    def knots(self) -> np.ndarray:
        return np.array([k for k, _ in self.segments])

    def _coefficients(self):
        """Value and slope at the start of every segment."""
        vals, slopes = [0.0], [0.0]
        for (k0, v0), (k1, _) in zip(self.segments, self.segments[1:]):
            h = k1 - k0
            vals.append(vals[-1] + slopes[-1] * h + 0.5 * v0 * h * h)
            slopes.append(slopes[-1] + v0 * h)
        return np.array(vals), np.array(slopes)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        knots = self.knots
        curv = np.array([v for _, v in self.segments])
        vals, slopes = self._coefficients()
        j = np.clip(np.searchsorted(knots, y, side="right") - 1, 0, knots.size - 1)
        h = y - knots[j]
        return vals[j] + slopes[j] * h + 0.5 * curv[j] * h * h

    def dilate(self, rho: float) -> "AdmissibleHalfFunction":
        """Profile y -> g(rho y)."""
        return AdmissibleHalfFunction(
            tuple((k / rho, v * rho * rho) for k, v in self.segments),
            self.M1 * rho * rho, self.M2 * rho * rho)


@dataclass(frozen=True)
class HalfFunctionals:
    a: float
    b: float
    b1: float
    d_raw: float
    d_quarter: float


# ---------------------------------------------------------------------------
# closed forms


_FORWARD_LIMIT = 2.0


def _ratio_depth(kmin: float) -> int:
    return 150 if kmin < 4.0 else 60


def _gauss_tail_moments_scalar(kappa: float, K: int) -> list:
    out = [SQRT_HALF_PI * erfcx_scalar(kappa / math.sqrt(2.0))]
    if kappa <= _FORWARD_LIMIT:
        if K >= 1:
            out.append(1.0 - kappa * out[0])
        for k in range(2, K + 1):
            out.append((k - 1) * out[k - 2] - kappa * out[k - 1])
        return out
    depth = _ratio_depth(kappa)
    r = math.sqrt(depth + 1.0)
    ratios = [0.0] * (K + 1)
    for k in range(depth, 0, -1):
        r = k / (kappa + r)
        if k <= K:
            ratios[k] = r
    for k in range(1, K + 1):
        out.append(out[k - 1] * ratios[k])
    return out


def _gauss_tail_moments(kappa, K: int):
    """I_k(kappa) = int_0^inf w^k exp(-kappa w - w^2/2) dw for k = 0..K.

    Forward recurrence I_k = (k-1) I_{k-2} - kappa I_{k-1} for small kappa,
    where it is stable; otherwise the ratios I_k / I_{k-1} come from the
    backward continued fraction r_k = k / (kappa + r_{k+1}).
    """
    if isinstance(kappa, float):
        return _gauss_tail_moments_scalar(kappa, K)
    kappa = np.asarray(kappa, dtype=float)
    out = np.empty((K + 1,) + kappa.shape)
    out[0] = SQRT_HALF_PI * erfcx_eval(kappa / math.sqrt(2.0))
    small = kappa <= _FORWARD_LIMIT
    if K >= 1:
        fwd = np.empty_like(out)
        fwd[0] = out[0]
        fwd[1] = 1.0 - kappa * out[0]
        for k in range(2, K + 1):
            fwd[k] = (k - 1) * fwd[k - 2] - kappa * fwd[k - 1]
        big = ~small
        ratios = {}
        if np.any(big):
            kb = kappa[big]
            depth = _ratio_depth(float(np.min(kb)))
            r = np.full(kb.shape, math.sqrt(depth + 1.0))
            for k in range(depth, 0, -1):
                r = k / (kb + r)
                if k <= K:
                    ratios[k] = r
        for k in range(1, K + 1):
            out[k] = fwd[k]
            if np.any(big):
                out[k][big] = out[k - 1][big] * ratios[k]
    return out


@lru_cache(maxsize=None)
def _binom(n: int, k: int) -> int:
    return math.comb(n, k)


class _Branch:
    """Closed-form integrals of e^{-g_{mu,c}} on [0, inf).

    Works on Python floats or on numpy arrays (broadcast over c and mu).
    """

    KMAX = 7

    def __init__(self, c, mu):
        if np.ndim(c) == 0 and np.ndim(mu) == 0:
            c, mu = float(c), float(mu)
            if math.isinf(c):
                self.cc, self.e = 0.0, 0.0
                self.J = [0.0] * (self.KMAX + 1)
                self.inner = (SQRT_HALF_PI, 1.0, SQRT_HALF_PI)
                return
            self.cc = c
            self.e = math.exp(-0.5 * c * c)
            I = _gauss_tail_moments_scalar(c / math.sqrt(mu), self.KMAX)
            self.J = [I[k] * mu ** (-(k + 1) / 2.0) for k in range(self.KMAX + 1)]
            erf_part = SQRT_HALF_PI * erf_eval(c / math.sqrt(2.0))
            self.inner = (erf_part, 1.0 - self.e, erf_part - c * self.e)
            return
        c, mu = np.broadcast_arrays(np.asarray(c, dtype=float), np.asarray(mu, dtype=float))
        inf = np.isinf(c)
        cc = np.where(inf, 0.0, c)
        self.cc = cc
        self.e = np.where(inf, 0.0, np.exp(-0.5 * cc * cc))
        I = _gauss_tail_moments(cc / np.sqrt(mu), self.KMAX)
        self.J = [I[k] * mu ** (-(k + 1) / 2.0) for k in range(self.KMAX + 1)]
        erf_part = SQRT_HALF_PI * np.where(inf, 1.0, erf_eval(cc / math.sqrt(2.0)))
        # inner moments int_0^c y^j e^{-y^2/2}, j = 0, 1, 2
        self.inner = (erf_part, 1.0 - self.e, erf_part - cc * self.e)

    def tail(self, k: int, j: int):
        """int_c^inf (x - c)^k x^j e^{-g} dx."""
        c = self.cc
        total = sum(_binom(j, l) * c ** (j - l) * self.J[k + l] for l in range(j + 1))
        return self.e * total

    def moment(self, j: int):
        """int_0^inf y^j e^{-g} dy for j = 0, 1, 2."""
        return self.inner[j] + self.tail(0, j)


def branch_functionals(c, mu):
    """``(a, b1, b)`` of g_{mu,c}, vectorised over ``c`` and ``mu``."""
    br = _Branch(c, mu)
    return br.moment(0), br.moment(1), br.moment(2)


def d_raw(m, c):
    """Shape functional b/a^3 of g_{m,c} (no factor 1/4)."""
    a, _, b = branch_functionals(c, m)
    return b / a ** 3


def half_functionals_quadrature(g: Union[PiecewiseQuadraticHalf, AdmissibleHalfFunction],
                                config: QuadratureConfig = QUAD) -> HalfFunctionals:
    """Functionals of any piecewise quadratic profile by direct quadrature."""
    if isinstance(g, PiecewiseQuadraticHalf):
        knots = [g.c] if g.c > 0 else []
    else:
        knots = list(g.knots[1:])
    rule = log_domain_rule(lambda y: -g(y), (0.0, np.inf), config.with_hint(0.0),
                           breakpoints=knots)
    a = math.exp(rule.log_value)
    b1 = a * rule.expect(rule.nodes)
    b = a * rule.expect(rule.nodes ** 2)
    return HalfFunctionals(a, b, b1, b / a ** 3, b / (4 * a ** 3))


def half_functionals(g: Union[PiecewiseQuadraticHalf, AdmissibleHalfFunction],
                     config: QuadratureConfig = QUAD,
                     cross_check: bool = False) -> HalfFunctionals:
    """Functionals a, b1, b and both normalisations of b/a^3.

    Members of the g_{m,c} family use closed forms; ``cross_check`` compares
    them against quadrature and raises :class:`AccuracyError` on mismatch.
    """
    if not isinstance(g, PiecewiseQuadraticHalf):
        return half_functionals_quadrature(g, config)
    a, b1, b = (float(v) for v in branch_functionals(g.c, g.m))
    out = HalfFunctionals(a, b, b1, b / a ** 3, b / (4 * a ** 3))
    if cross_check:
        ref = half_functionals_quadrature(g, config)
        for name in ("a", "b", "b1"):
            x, y = getattr(out, name), getattr(ref, name)
            if abs(x - y) > 1e-9 * abs(y):
                raise AccuracyError(f"closed form {name}={x} disagrees with quadrature {y}",
                                    best=out, error_bound=abs(x - y))
    return out


# ---------------------------------------------------------------------------
# G and its derivatives


def gamma_fn(m, c):
    """gamma(c) = a b'(c) - 3 b a'(c) from the tail integrals.

    a'(c) = (m-1) int_c (x-c) e^{-g} and b'(c) = (m-1) int_c (x-c) x^2 e^{-g}.
    """
    if np.any(np.asarray(m) <= 0) or np.any(np.asarray(c) < 0):
        raise DomainError("need m > 0 and c >= 0")
    br = _Branch(c, m)
    a, b = br.moment(0), br.moment(2)
    da = (np.asarray(m) - 1.0) * br.tail(1, 0)
    db = (np.asarray(m) - 1.0) * br.tail(1, 2)
    out = a * db - 3.0 * b * da
    return float(out) if np.ndim(out) == 0 else out


def G_value(m, c):
    """G(m, c) = a P - 3 b Q; gamma = (m - 1) G."""
    br = _Branch(c, m)
    out = br.moment(0) * br.tail(1, 2) - 3.0 * br.moment(2) * br.tail(1, 0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class GPartials:
    """G and its partial derivatives at (m, c).

    ``dG_dc = A1 + (1 - m) A2`` and ``dG_dm`` follow the published integral
    expressions. ``dG_dc_exact`` and ``dG_dm_exact`` are the analytic partial
    derivatives of G; the two differ (see the module README section on
    published expressions). ``dG_dc_fd``/``dG_dm_fd`` are finite-difference
    checks of the exact values.
    """

    m: float
    c: float
    G: float
    dG_dc: float
    dG_dm: float
    A1: float
    A2: float
    dG_dc_exact: float
    dG_dm_exact: float
    dG_dc_fd: float
    dG_dm_fd: float


def _partials(m: float, c: float):
    br = _Branch(c, m)
    a, b = float(br.moment(0)), float(br.moment(2))
    t = lambda k, j: float(br.tail(k, j))
    P, Q = t(1, 2), t(1, 0)
    A1 = 3.0 * b * t(0, 0) - a * t(0, 2)
    A2 = Q + a * t(2, 2) - 3.0 * P * Q - 3.0 * b * t(2, 0)
    dG_dm = (-0.5 * t(2, 0) * P - 0.5 * a * t(3, 0)
             + 1.5 * t(2, 2) * Q + 1.5 * b * t(3, 0))
    A2_exact = a * t(2, 2) - 2.0 * P * Q - 3.0 * b * t(2, 0)
    dG_dc_exact = A1 + (m - 1.0) * A2_exact
    dG_dm_exact = (-0.5 * t(2, 0) * P - 0.5 * a * t(3, 2)
                   + 1.5 * t(2, 2) * Q + 1.5 * b * t(3, 0))
    return a * P - 3.0 * b * Q, A1, A2, dG_dm, dG_dc_exact, dG_dm_exact


def G_and_partials(m: float, c: float, config: QuadratureConfig = QUAD) -> GPartials:
    """G(m, c) with published and exact partial derivatives."""
    if not m > 0 or not c >= 0:
        raise DomainError("need m > 0 and c >= 0")
    G, A1, A2, dG_dm, dc_ex, dm_ex = _partials(m, c)
    h = 1e-3
    fd_c = differentiate_central(lambda s: G_value(m, s), c, step=min(h, max(c, 1e-6) / 2)).value
    fd_m = differentiate_central(lambda s: G_value(s, c), m, step=h * m).value
    return GPartials(m, c, G, A1 + (1.0 - m) * A2, dG_dm, A1, A2, dc_ex, dm_ex, fd_c, fd_m)


# ---------------------------------------------------------------------------
# critical path near m = 1


@dataclass(frozen=True)
class CriticalPath:
    """Root c(m) of G(m, .) near c0 with its slope.

    ``c_prime`` is -G_m/G_c from the exact partials. ``c_prime_published`` is
    the ratio of the published expressions dG_dm / dG_dc.
    """

    m: float
    c_of_m: float
    c_prime: float
    c_prime_published: float


@lru_cache(maxsize=4096)
def _c_of_m(m: float) -> float:
    lo, hi = C0_BRACKET[0] - 0.0, C0_BRACKET[1]
    if m != 1.0:
        c0 = _c_of_m(1.0)
        lo, hi = c0 - 0.1, c0 + 0.1
    f = lambda c: G_value(m, c)
    if f(lo) * f(hi) > 0:
        raise RangeError(f"G({m}, c) has no root in [{lo:.4f}, {hi:.4f}]")
    return find_root(BracketedFunction(f, lo, hi), 1e-15)


def c_zero() -> float:
    """The root c0 of G(1, c) = 0."""
    return _c_of_m(1.0)


def critical_path(m: float, config: QuadratureConfig = QUAD) -> CriticalPath:
    if not 0.9 <= m <= 1.1:
        raise DomainError("critical path is tracked for m near 1 only")
    c = _c_of_m(float(m))
    _, A1, A2, dG_dm, dc_ex, dm_ex = _partials(m, c)
    return CriticalPath(m, c, -dm_ex / dc_ex, dG_dm / (A1 + (1.0 - m) * A2))


def eta_value(m: float) -> Tuple[float, float, float]:
    """eta along c(m) and the functionals a, b there.

    eta = a db/dm - 3 b da/dm along c(m); since G vanishes there the terms in
    c'(m) cancel, leaving -a/2 int_c (x-c)^2 x^2 e^{-g} + 3b/2 int_c (x-c)^2 e^{-g}.
    """
    c = _c_of_m(float(m))
    br = _Branch(c, m)
    a, b = float(br.moment(0)), float(br.moment(2))
    eta = -0.5 * a * float(br.tail(2, 2)) + 1.5 * b * float(br.tail(2, 0))
    return eta, a, b


def q_branch(m: float) -> float:
    """1/4 d_m(c(m)); equals q(m) for m >= 1 near 1 and is smooth across 1."""
    return 0.25 * float(d_raw(m, _c_of_m(float(m))))


def p_branch(m: float) -> float:
    """1/4 d_{1/m}(c(1/m)); equals p(m) for m >= 1 near 1."""
    mu = 1.0 / m
    return 0.25 * float(d_raw(mu, _c_of_m(mu)))


def F_branch(m: float) -> float:
    return (p_branch(m) / q_branch(m)) ** 2


@dataclass(frozen=True)
class EtaAudit:
    m: float
    eta: float
    q_prime_times_4: float
    p_prime_times_4: float
    F: float
    F_prime: float
    F_prime_fd: float
    a: float
    c_of_m: float


def eta_F_audit(m: float, config: QuadratureConfig = QUAD) -> EtaAudit:
    """eta, 4q'(m) = eta/a^4, F(m) = (p/q)^2 and F'(m) two ways.

    ``p_prime_times_4`` is the m-derivative of d_mu(c(mu)) at mu = m, the
    quantity the mirrored bound for ratios just below 1 refers to.
    """
    if not 0.98 <= m <= 1.02:
        raise DomainError("eta audit is defined for m near 1")
    eta, a, _ = eta_value(m)
    q4 = eta / a ** 4
    eta_r, a_r, _ = eta_value(1.0 / m)
    dp = -(1.0 / m ** 2) * eta_r / (4 * a_r ** 4)
    p, q = p_branch(m), q_branch(m)
    F = (p / q) ** 2
    F_prime = 2.0 * F * (dp / p - 0.25 * q4 / q)
    fd = differentiate_central(F_branch, m, step=1e-3).value
    return EtaAudit(m, eta, q4, q4, F, F_prime, fd, a, _c_of_m(float(m)))


# ---------------------------------------------------------------------------
# extremal constants


@dataclass(frozen=True)
class PQResult:
    m: float
    p: float
    q: float
    c_at_p: float
    c_at_q: float


def _extremize(mu: float, sign: float, c_max: float):
    """Extremum of sign * d_mu(c) over c in [0, inf]; returns (value, c)."""
    cs = np.concatenate([[0.0], np.geomspace(1e-4, c_max, 400)])
    vals = sign * d_raw(mu, cs)
    k = int(np.argmax(vals))
    best, c_best = float(vals[k]), float(cs[k])
    lo, hi = cs[max(k - 1, 0)], cs[min(k + 1, cs.size - 1)]
    g = lambda c: float(G_value(mu, c))
    refined = None
    if 0 < k < cs.size - 1:
        glo, ghi = g(lo), g(hi)
        if glo * ghi < 0:
            refined = find_root(BracketedFunction(g, lo, hi), 1e-14 * max(1.0, hi))
        if refined is None:
            refined, _ = golden_section(lambda c: -sign * float(d_raw(mu, c)), lo, hi,
                                        tol=1e-12 * max(1.0, hi))
        v = sign * float(d_raw(mu, refined))
        if v >= best:
            best, c_best = v, refined
    # the limits c = 0 and c = inf both give 2/pi
    if TWO_OVER_PI * sign > best:
        return TWO_OVER_PI, math.inf
    return sign * best, c_best


def pq_extremize(m: float, config: QuadratureConfig = QUAD) -> PQResult:
    """p(m) = max_c d_{1/m}(c) / 4 and q(m) = min_c d_m(c) / 4."""
    if not m >= 1.0:
        raise DomainError("pq_extremize needs m >= 1; pass the reciprocal")
    if m == 1.0:
        v = TWO_OVER_PI / 4
        return PQResult(1.0, v, v, math.nan, math.nan)
    pv, cp = _extremize(1.0 / m, 1.0, 50.0 * max(1.0, math.sqrt(m)))
    qv, cq = _extremize(m, -1.0, 50.0)
    return PQResult(m, pv / 4, qv / 4, cp, cq)


def p_of(m: float) -> float:
    return pq_extremize(m).p


def q_of(m: float) -> float:
    return pq_extremize(m).q


# ---------------------------------------------------------------------------
# general admissible profiles


def general_d(g: AdmissibleHalfFunction, config: QuadratureConfig = QUAD) -> float:
    """b/(4 a^3) of an admissible profile."""
    if not isinstance(g, AdmissibleHalfFunction):
        raise DomainError("general_d expects an AdmissibleHalfFunction")
    return half_functionals_quadrature(g, config).d_quarter
