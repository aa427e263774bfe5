"""Band-narrowing iteration on curvature ratios and the constants audit.

The coarse stage maps the extremal constants (p, p', q, q') of two curvature
bands to new ratios

    m_bar  = (p'/q') sqrt(p p' / (q q')) + eps
    m_bar' = p p' / (2 pi q^2 q') + eps

and re-evaluates the constants there. Once both ratios are below 1.01 the
refined stage iterates the scalar map m -> I(m) + eps with
I = F H^-2 Q, F = (p/q)^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .dominating import (_partials, c_zero, critical_path, eta_value, p_branch, pq_extremize,
                         q_branch, eta_F_audit, G_and_partials)
from .errors import DomainError, NonContractionError
from .twosided import qtilde_extremize

__all__ = [
    "IterationState",
    "RefinedState",
    "AuditRow",
    "AuditConfig",
    "coarse_step",
    "coarse_iterate",
    "refined_terms",
    "refined_map",
    "refined_iterate",
    "H_prime_published",
    "H_prime_exact",
    "Q_prime_published",
    "constants_audit",
    "format_trajectory",
]

TWO_PI = 2.0 * math.pi
STOP_RATIO = 1.01


@dataclass(frozen=True)
class IterationState:
    m: float
    m_prime: float
    p: float
    p_prime: float
    q: float
    q_prime: float
    iter: int = 0

    def __post_init__(self):
        if not (self.m >= 1 and self.m_prime >= 1):
            raise DomainError("band ratios must be at least 1")
        if not (0 < self.q <= self.p and 0 < self.q_prime <= self.p_prime):
            raise DomainError("need 0 < q <= p and 0 < q' <= p'")

    def as_row(self) -> tuple:
        return (self.iter, self.m, self.m_prime, self.p, self.p_prime, self.q, self.q_prime)


def _key(m: float) -> float:
    return float(f"{m:.12g}")


class _ConstantCache:
    """p(m) and q~(m) keyed by m rounded to 12 significant digits."""

    def __init__(self):
        self.p: Dict[float, float] = {}
        self.qt: Dict[float, float] = {}

    def p_of(self, m):
        k = _key(m)
        if k not in self.p:
            self.p[k] = pq_extremize(k).p
        return self.p[k]

    def qtilde_of(self, m):
        k = _key(m)
        if k not in self.qt:
            self.qt[k] = qtilde_extremize(k).q_tilde
        return self.qt[k]


def _update_ratios(p, pp, q, qq, epsilon):
    m_bar = (pp / qq) * math.sqrt(p * pp / (q * qq)) + epsilon
    m_bar_prime = p * pp / (TWO_PI * q * q * qq) + epsilon
    return m_bar, m_bar_prime


def coarse_step(state: IterationState, epsilon: float, qbar_convention: str = "mprime",
                cache: Optional[_ConstantCache] = None) -> IterationState:
    """One application of the coarse update map."""
    if qbar_convention not in ("mprime", "mbar"):
        raise DomainError("qbar_convention must be 'mprime' or 'mbar'")
    cache = cache or _ConstantCache()
    mb, mbp = _update_ratios(state.p, state.p_prime, state.q, state.q_prime, epsilon)
    # rounding can leave a ratio a hair below 1 at the fixed point
    mb, mbp = max(mb, 1.0), max(mbp, 1.0)
    q_src = mbp if qbar_convention == "mprime" else mb
    return IterationState(mb, mbp, cache.p_of(mb), cache.p_of(mbp), cache.qtilde_of(mb),
                          cache.qtilde_of(q_src), state.iter + 1)


def coarse_iterate(init: IterationState, epsilon: float = 1e-6, max_iter: int = 200,
                   qbar_convention: str = "mprime") -> List[IterationState]:
    """Iterate the coarse map until m, m' < 1.01 or ``max_iter`` steps.

    Returns the trajectory including ``init``. Five consecutive increases of
    m raise :class:`NonContractionError` carrying the trajectory.
    """
    if not epsilon >= 0:
        raise DomainError("epsilon must be non-negative")
    if max_iter < 1:
        raise DomainError("max_iter must be positive")
    cache = _ConstantCache()
    traj = [init]
    rising = 0
    state = init
    for _ in range(max_iter):
        nxt = coarse_step(state, epsilon, qbar_convention, cache)
        rising = rising + 1 if nxt.m > state.m else 0
        traj.append(nxt)
        if rising >= 5:
            raise NonContractionError("coarse ratios increased for 5 consecutive steps",
                                      best=traj)
        state = nxt
        if state.m < STOP_RATIO and state.m_prime < STOP_RATIO:
            break
    return traj


# ---------------------------------------------------------------------------
# refined stage


@dataclass(frozen=True)
class RefinedState:
    """One refined step. ``q`` is the corrected lower constant."""

    m: float
    p: float
    q: float
    alpha: float
    H: float
    Q: float
    I: float


def _correction(alpha: float) -> float:
    return (4.0 / math.pi ** 2) * (1.0 - alpha) ** 2 / (1.0 + alpha) ** 2


def _pq_near_one(m: float):
    # the critical-point branches equal p, q for m >= 1 near 1 and stay
    # smooth across m = 1, which central differences rely on
    if m == 1.0:
        v = 1.0 / TWO_PI
        return v, v
    return p_branch(m), q_branch(m)


def refined_terms(m: float) -> RefinedState:
    """alpha, p, corrected q, H, Q and I = F H^-2 Q at ratio ``m``."""
    if not 0.98 <= m <= 1.02:
        raise DomainError("refined map is evaluated for m near 1 only")
    alpha = 1.0 / math.sqrt(m)
    p, q = _pq_near_one(m)
    corr = _correction(alpha)
    H = 1.0 - corr / q
    Q = math.exp((1.1 / math.pi) * (1.0 - alpha) ** 2)
    I = (p / q) ** 2 * Q / H ** 2
    return RefinedState(m, p, q - corr, alpha, H, Q, I)


def refined_map(m: float) -> float:
    return refined_terms(m).I


def refined_iterate(m0: float, epsilon: float = 0.0, max_iter: int = 200,
                    target: float = 1e-6) -> List[RefinedState]:
    """Iterate m -> I(m) + eps from ``m0`` until m - 1 <= ``target``."""
    if not 1.0 < m0 <= STOP_RATIO:
        raise DomainError("refined stage starts from m0 in (1, 1.01]")
    if not epsilon >= 0:
        raise DomainError("epsilon must be non-negative")
    traj = [refined_terms(m0)]
    m = m0
    for _ in range(max_iter):
        if m - 1.0 <= target:
            break
        nxt = traj[-1].I + epsilon
        if nxt >= m:
            raise NonContractionError(f"I({m}) = {nxt} does not contract", best=traj)
        m = nxt
        traj.append(refined_terms(m))
    return traj


def H_prime_published(m: float) -> float:
    """The printed expression for H'(m) with q = q(m), q' = dq/dm."""
    alpha = 1.0 / math.sqrt(m)
    q = _pq_near_one(m)[1]
    eta, a, _ = eta_value(m)
    qp = 0.25 * eta / a ** 4
    one_a, one_p = 1.0 - alpha, 1.0 + alpha
    return (4 * one_a ** 2 * (one_p ** 2 * qp - q * one_p * alpha ** 3)
            / (math.pi ** 2 * q ** 2 * one_p ** 4)
            - 4 * one_a * alpha ** 3 / (9 * math.pi ** 2 * one_p ** 2))


def H_prime_exact(m: float) -> float:
    """Analytic derivative of H(m) = 1 - 4 (1-a)^2 / (q pi^2 (1+a)^2)."""
    alpha = 1.0 / math.sqrt(m)
    q = _pq_near_one(m)[1]
    eta, a, _ = eta_value(m)
    qp = 0.25 * eta / a ** 4
    one_a, one_p = 1.0 - alpha, 1.0 + alpha
    return (4 * one_a ** 2 * qp / (math.pi ** 2 * q ** 2 * one_p ** 2)
            - 8 * alpha ** 3 * one_a / (math.pi ** 2 * q * one_p ** 3))


def Q_prime_published(m: float) -> float:
    alpha = 1.0 / math.sqrt(m)
    k = 1.1 / math.pi
    return k * (1 - alpha) * alpha ** 3 * math.exp(k * (1 - alpha) ** 2)


# ---------------------------------------------------------------------------
# audit


@dataclass(frozen=True)
class AuditRow:
    """One audited constant.

    ``kind`` is ``"value"`` (|computed - reference| <= tolerance), ``"bound"``
    (every sample inside [lower, upper]; computed and computed_max give the
    sampled range) or ``"info"`` (reported, not judged).
    """

    name: str
    kind: str
    reference: str
    computed: float
    computed_max: float
    tolerance: float
    passed: bool
    note: str = ""


@dataclass(frozen=True)
class AuditConfig:
    grid: int = 21
    c_halfwidth: float = 0.03
    m_span: float = 0.01
    pq_ratio_at: float = 1.005


def _value_row(name, reference, computed, tol, note=""):
    return AuditRow(name, "value", f"{reference:g}", computed, computed, tol,
                    bool(abs(computed - reference) <= tol), note)


def _bound_row(name, samples, lower=-math.inf, upper=math.inf, upper_inclusive=False,
               note=""):
    arr = np.asarray(samples, dtype=float)
    lo_ok = np.all(arr > lower)
    hi_ok = np.all(arr <= upper) if upper_inclusive else np.all(arr < upper)
    close = "]" if upper_inclusive else ")"
    return AuditRow(name, "bound", f"({lower:g}, {upper:g}{close}", float(arr.min()),
                    float(arr.max()), math.nan, bool(lo_ok and hi_ok and np.all(np.isfinite(arr))),
                    note)


def _info_row(name, computed, note=""):
    return AuditRow(name, "info", "", computed, computed, math.nan, True, note)


def _guarded(rows, name, fn):
    try:
        rows.extend(fn())
    except Exception as exc:  # failures are collected, never abort the audit
        rows.append(AuditRow(name, "value", "", math.nan, math.nan, math.nan, False,
                             f"{type(exc).__name__}: {exc}"))


def _rectangle(m_grid, c_grid):
    out = {"A1": [], "A2": [], "dG_dc": [], "dG_dm": [], "c_prime": []}
    for m in m_grid:
        for c in c_grid:
            _, A1, A2, dG_dm, _, _ = _partials(float(m), float(c))
            dG_dc = A1 + (1.0 - m) * A2
            out["A1"].append(A1)
            out["A2"].append(abs(A2))
            out["dG_dc"].append(dG_dc)
            out["dG_dm"].append(dG_dm)
            out["c_prime"].append(dG_dm / dG_dc)
    return out


def constants_audit(config: AuditConfig = AuditConfig()) -> List[AuditRow]:
    """Recompute the published constants and rectangle bounds.

    Derivative quantities follow the printed integral expressions; the
    analytic values are added as ``info`` rows where they differ.
    """
    rows: List[AuditRow] = []
    c0_holder = {}

    def point_values():
        c0 = c_zero()
        c0_holder["c0"] = c0
        gp = G_and_partials(1.0, c0)
        cp = critical_path(1.0)
        ea = eta_F_audit(1.0)
        return [
            _value_row("c0", 0.612003, c0, 1e-4),
            _value_row("dG_dc(1,c0)", 1.06, gp.dG_dc, 0.01),
            _value_row("dG_dm(1,c0)", 1.557, gp.dG_dm, 0.01, "printed expression"),
            _info_row("dG_dm(1,c0) analytic", gp.dG_dm_exact,
                      f"finite difference {gp.dG_dm_fd:.6g}"),
            _value_row("c_prime(1)", 1.47, cp.c_prime_published, 0.02,
                       "ratio of printed expressions"),
            _info_row("c_prime(1) analytic", cp.c_prime, "-G_m/G_c"),
            _value_row("eta(1)", -0.318018, ea.eta, 1e-4),
            _value_row("F_prime(1)", 0.81, ea.F_prime, 0.02),
            _info_row("F_prime(1) finite difference", ea.F_prime_fd),
        ]

    _guarded(rows, "point values", point_values)
    n = config.grid
    c0 = c0_holder.get("c0", 0.612003180962481)
    c_grid = np.linspace(c0 - config.c_halfwidth, c0 + config.c_halfwidth, n)
    m_up = np.linspace(1.0, 1.0 + config.m_span, n, endpoint=False)
    m_down = 1.0 - np.linspace(0.0, config.m_span, n, endpoint=False)

    bounds_up = {"A1": (0.932, 1.182), "A2": (-math.inf, 3.36), "dG_dc": (0.89, 1.22),
                 "dG_dm": (1.29, 1.792), "c_prime": (1.05, 2.02)}
    bounds_down = {"A1": (0.943, 1.197), "A2": (-math.inf, 4.21), "dG_dc": (0.9, 1.24),
                   "dG_dm": (1.32, 1.84), "c_prime": (1.06, 2.05)}

    for label, grid, bounds in (("[1,1.01)", m_up, bounds_up), ("(0.99,1]", m_down, bounds_down)):
        def rect(grid=grid, bounds=bounds, label=label):
            vals = _rectangle(grid, c_grid)
            out = []
            for key, (lo, hi) in bounds.items():
                name = f"|A2| on {label}" if key == "A2" else f"{key} on {label}"
                out.append(_bound_row(name, vals[key], lo, hi))
            return out
        _guarded(rows, f"rectangle {label}", rect)

    def band_values():
        q4p, q4, p4, ratio, p4p, hp, hp_exact, qp = [], [], [], [], [], [], [], []
        for m in m_up:
            m = float(m)
            eta, a, _ = eta_value(m)
            q4p.append(eta / a ** 4)
            pq = pq_extremize(m)
            q4.append(4 * pq.q)
            p4.append(4 * pq.p)
            hp.append(H_prime_published(m))
            hp_exact.append(H_prime_exact(m))
            qp.append(Q_prime_published(m))
        for mu in m_down:
            eta, a, _ = eta_value(float(mu))
            p4p.append(eta / a ** 4)
        pq = pq_extremize(config.pq_ratio_at)
        ratio.append(pq.p / pq.q)
        return [
            _bound_row("4q'(m) on [1,1.01)", q4p, -0.132, -0.127),
            _bound_row("4q(m) on [1,1.01)", q4, 0.635),
            _bound_row("4p(m) on [1,1.01)", p4, upper=0.638),
            _bound_row(f"p/q at m={config.pq_ratio_at:g}", ratio, upper=1.005),
            _bound_row("4p'(1/m) on [1,1.01)", p4p, -0.131, -0.126,
                       note="eta/a^4 at ratio 1/m"),
            _bound_row("H'(m) on [1,1.01)", hp, -0.000067, 0.0, upper_inclusive=True,
                       note="printed expression"),
            _info_row("H'(m) analytic, min on [1,1.01)", float(min(hp_exact))),
            _bound_row("Q'(m) on [1,1.01)", qp, upper=0.0018),
        ]

    _guarded(rows, "band constants", band_values)
    return rows


# ---------------------------------------------------------------------------
# export


def format_trajectory(traj: Sequence[IterationState], delimiter: str = ",") -> str:
    """One row per iteration with 12 significant digits."""
    lines = [delimiter.join(["iter", "m", "m_prime", "p", "p_prime", "q", "q_prime"])]
    for s in traj:
        it, *vals = s.as_row()
        lines.append(delimiter.join([str(it)] + [f"{v:.12g}" for v in vals]))
    return "\n".join(lines) + "\n"
