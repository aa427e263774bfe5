"""Full-line profiles built from two half-line branches.

g(y) = g_{m,c1}(sqrt(M1) y) for y >= 0 and g_{m,c2}(-sqrt(M1) y) for y < 0,
so the curvature lies in [M1, m M1]. The shape functional is
d~ = b~ / a~^3 with b~ the second moment about the centre of mass t_bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dominating import SQRT_HALF_PI, _Branch, branch_functionals
from .errors import AccuracyError, DomainError
from .numerics import QuadratureConfig, erfcx_scalar, golden_section, log_domain_rule

__all__ = [
    "TwoSidedProfile",
    "TwoSidedFunctionals",
    "QTildeResult",
    "RatioRow",
    "two_sided_functionals",
    "two_sided_functionals_quadrature",
    "d_tilde",
    "tbar_bound",
    "qtilde_extremize",
    "ratio_monotonicity",
]

QUAD = QuadratureConfig(rel_tol=1e-13, abs_tol=1e-18)
ONE_OVER_2PI = 1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class TwoSidedProfile:
    """Two-branch convex profile.

    ``pure_branch`` selects the extremal variant with curvature M1 on the
    whole right half-line and m M1 on the whole left half-line; the knots are
    then ignored.
    """

    m: float
    c1: float = 0.0
    c2: float = 0.0
    M1: float = 1.0
    pure_branch: bool = False

    def __post_init__(self):
        if not self.m >= 1:
            raise DomainError("curvature ratio m must be at least 1")
        if not (self.c1 >= 0 and self.c2 >= 0):
            raise DomainError("knots must be non-negative")
        if not self.M1 > 0:
            raise DomainError("M1 must be positive")

    @property
    def knots(self):
        return (math.inf, 0.0) if self.pure_branch else (self.c1, self.c2)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        s = math.sqrt(self.M1)
        c1, c2 = self.knots
        out = np.empty_like(y)
        for mask, c, sign in ((y >= 0, c1, 1.0), (y < 0, c2, -1.0)):
            z = sign * s * y[mask]
            knot = np.minimum(z, c)
            tail = np.maximum(z - c, 0.0) if math.isfinite(c) else 0.0 * z
            cc = c if math.isfinite(c) else 0.0
            out[mask] = 0.5 * knot ** 2 + cc * tail + 0.5 * self.m * tail ** 2
        return out

    def reflected(self) -> "TwoSidedProfile":
        if self.pure_branch:
            raise DomainError("the pure-branch profile has no stored knots to swap")
        return TwoSidedProfile(self.m, self.c2, self.c1, self.M1)


@dataclass(frozen=True)
class TwoSidedFunctionals:
    a_tilde: float
    b_tilde: float
    t_bar: float
    d_tilde: float


def _combine(right, left):
    a1, p1, s1 = right
    a2, p2, s2 = left
    A = a1 + a2
    tb = (p1 - p2) / A
    B = s1 + s2 - A * tb * tb
    return A, B, tb, B / A ** 3


def two_sided_functionals(p: TwoSidedProfile, config: QuadratureConfig = QUAD
                          ) -> TwoSidedFunctionals:
    """a~, b~, t_bar and d~ from the closed-form branch integrals."""
    c1, c2 = p.knots
    A, B, tb, d = _combine(branch_functionals(c1, p.m), branch_functionals(c2, p.m))
    s = math.sqrt(p.M1)
    return TwoSidedFunctionals(float(A) / s, float(B) / s ** 3, float(tb) / s, float(d))


def two_sided_functionals_quadrature(p: TwoSidedProfile,
                                     config: QuadratureConfig = QUAD) -> TwoSidedFunctionals:
    """Same functionals by direct quadrature of each half-line."""
    s = math.sqrt(p.M1)
    c1, c2 = p.knots
    parts = []
    for c, domain in ((c1, (0.0, np.inf)), (c2, (-np.inf, 0.0))):
        bp = [] if not math.isfinite(c) or c == 0 else [math.copysign(c / s, domain[1] - 1)]
        rule = log_domain_rule(lambda y: -p(y), domain, config.with_hint(0.0), bp)
        a = math.exp(rule.log_value)
        parts.append((a, a * rule.expect(rule.nodes), a * rule.expect(rule.nodes ** 2)))
    A = parts[0][0] + parts[1][0]
    tb = (parts[0][1] + parts[1][1]) / A
    B = parts[0][2] + parts[1][2] - A * tb * tb
    return TwoSidedFunctionals(A, B, tb, B / A ** 3)


def d_tilde(m, c1, c2):
    """d~ for g_{m,c1,c2}, vectorised over the knots."""
    return _combine(branch_functionals(c1, m), branch_functionals(c2, m))[3]


def tbar_bound(M1: float, m: float) -> float:
    """Upper bound sqrt(2/(pi M1)) (1 - 1/sqrt m) for |t_bar|."""
    if not (M1 > 0 and m >= 1):
        raise DomainError("need M1 > 0 and m >= 1")
    return math.sqrt(2.0 / (math.pi * M1)) * (1.0 - 1.0 / math.sqrt(m))


# ---------------------------------------------------------------------------
# minimisation over the knots


@dataclass(frozen=True)
class QTildeResult:
    m: float
    q_tilde: float
    c1_star: float
    c2_star: float
    starts: int
    sweeps: int


def qtilde_extremize(m: float, config: QuadratureConfig = QUAD, move_tol: float = 1e-7,
                     max_sweeps: int = 400) -> QTildeResult:
    """q~(m) = min over c1 >= c2 >= 0 of d~(g_{m,c1,c2}) / 1.

    Coordinate descent with golden-section line searches, started from every
    point of a 5x5 grid with c1 >= c2. The limit value 1/(2 pi) at infinite
    knots is compared explicitly.
    """
    if not m >= 1:
        raise DomainError("qtilde_extremize needs m >= 1")
    if m == 1.0:
        return QTildeResult(1.0, ONE_OVER_2PI, math.nan, math.nan, 0, 0)
    c_max = 10.0 * max(1.0, 1.0 / math.sqrt(m))
    # right and left branches share the ratio, so cache per-knot integrals
    cache = {}

    def side(c):
        v = cache.get(c)
        if v is None:
            br = _Branch(c, m)
            v = (br.moment(0), br.moment(1), br.moment(2))
            cache[c] = v
        return v

    def f(c1, c2):
        return _combine(side(c1), side(c2))[3]

    grid = np.linspace(0.0, c_max, 5)
    results = []
    total_sweeps = 0
    for i, g1 in enumerate(grid):
        for g2 in grid[: i + 1]:
            x, y = float(g1), float(g2)
            val = f(x, y)
            for sweep in range(max_sweeps):
                nx, _ = golden_section(lambda s: f(s, y), 0.0, c_max, tol=0.1 * move_tol)
                ny, new_val = golden_section(lambda s: f(nx, s), 0.0, c_max, tol=0.1 * move_tol)
                moved = max(abs(nx - x), abs(ny - y))
                gain = val - new_val
                x, y, val = nx, ny, min(val, new_val)
                total_sweeps += 1
                # near m = 1 the landscape is flat to rounding level, so a
                # sweep that no longer lowers the value also ends the search
                if moved < move_tol or gain <= 4 * np.finfo(float).eps * abs(val):
                    break
            else:
                raise AccuracyError("coordinate descent stagnated",
                                    best=min(val, ONE_OVER_2PI), error_bound=moved)
            if y > x:
                x, y = y, x
            results.append((val, x, y))
    results.sort()
    val, x, y = results[0]
    if ONE_OVER_2PI < val:
        return QTildeResult(m, ONE_OVER_2PI, math.inf, math.inf, len(results), total_sweeps)
    return QTildeResult(m, float(val), x, y, len(results), total_sweeps)


# ---------------------------------------------------------------------------
# ratio functions


@dataclass(frozen=True)
class RatioRow:
    c: float
    f1: float
    f2: float
    f3: float
    f3_excess: float
    f1_increasing: bool
    f2_increasing: bool
    f3_decreasing: bool


def _shifted_moments(c):
    """int_0^inf x^k exp(-x^2/2 - c x) dx for k = 0..3."""
    br = _Branch(c, 1.0)
    return [br.J[k] for k in range(4)]


def ratio_monotonicity(c_grid: Sequence[float], m: float) -> list:
    """f1, f2 (Gaussian tail ratios) and f3 = b1/a for g_{m,c} on a grid.

    f1(c) = int x (x+c)^2 e^{-x^2/2-cx} / int x e^{-x^2/2-cx},
    f2(c) = int x (x+c) e^{-x^2/2-cx} / int x e^{-x^2/2-cx}.
    f3_excess = f3 - sqrt(2/pi) is formed without cancellation, so the f3
    flag stays decidable after f3 itself has rounded to its limit.
    Flags compare each value with its predecessor on the grid.
    """
    cs = np.asarray(c_grid, dtype=float)
    if np.any(np.diff(cs) <= 0) or np.any(cs < 0):
        raise DomainError("c_grid must be ascending and non-negative")
    rows = []
    prev = None
    for c in cs:
        J0, J1, J2, J3 = _shifted_moments(float(c))
        f1 = (J3 + 2 * c * J2 + c * c * J1) / J1
        f2 = (J2 + c * J1) / J1
        br = _Branch(float(c), m)
        a, b1 = br.moment(0), br.moment(1)
        f3 = float(b1 / a)
        # c J0 + m J1 = 1, so b1 - a / a_G reduces to e^{-c^2/2} times this bracket
        gauss_tail = SQRT_HALF_PI * erfcx_scalar(c / math.sqrt(2.0))
        bracket = SQRT_HALF_PI * (1.0 - m) * br.J[1] + gauss_tail - br.J[0]
        excess = br.e * bracket / (a * SQRT_HALF_PI)
        if prev is None:
            flags = (True, True, True)
        else:
            flags = (f1 > prev[0], f2 > prev[1], excess < prev[2])
        rows.append(RatioRow(float(c), f1, f2, f3, excess, *flags))
        prev = (f1, f2, excess)
    return rows
