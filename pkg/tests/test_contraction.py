import math

import numpy as np
import pytest

from balanced.contraction import (AuditConfig, IterationState, H_prime_exact,
                                  H_prime_published, Q_prime_published, coarse_iterate,
                                  coarse_step, constants_audit, format_trajectory,
                                  refined_iterate, refined_map, refined_terms)
from balanced.errors import DomainError, NonContractionError
from balanced.numerics import differentiate_central

V = 1.0 / (2.0 * math.pi)
WIDE_INIT = IterationState(1e10, 1e10, 2.0, 2.0, 1.0 / 12, 1.0 / 12)


@pytest.fixture(scope="module")
def trajectory():
    return coarse_iterate(WIDE_INIT, 1e-6)


class TestCoarse:
    def test_fixed_point(self):
        nxt = coarse_step(IterationState(1.0, 1.0, V, V, V, V), 0.0)
        assert nxt.m == 1.0 and nxt.m_prime == 1.0
        assert nxt.p == V and nxt.q == V

    def test_first_step(self, trajectory):
        first = trajectory[1]
        assert first.m == pytest.approx(576.000001, rel=1e-12)
        assert first.m_prime == pytest.approx(1100.07896765, rel=1e-9)

    def test_reaches_band(self, trajectory):
        last = trajectory[-1]
        assert last.m < 1.01 and last.m_prime < 1.01
        assert abs(last.iter - 67) <= 5
        assert last.q_prime < last.q < last.p < last.p_prime
        assert 0.1585 < last.q_prime and last.p_prime < 0.1598

    def test_monotone_after_entry(self, trajectory):
        start = next(i for i, s in enumerate(trajectory) if s.m < 1e6)
        ms = [s.m for s in trajectory[start:]]
        mps = [s.m_prime for s in trajectory[start:]]
        assert all(b <= a for a, b in zip(ms, ms[1:]))
        assert all(b <= a for a, b in zip(mps, mps[1:]))

    def test_literal_convention(self):
        traj = coarse_iterate(WIDE_INIT, 1e-6, qbar_convention="mbar")
        last = traj[-1]
        assert last.m < 1.01 and last.m_prime < 1.01
        assert last.q == last.q_prime

    def test_divergence_detected(self, monkeypatch):
        from balanced import contraction
        bad = IterationState(2.0, 2.0, 0.45, 0.45, 0.09, 0.09)
        monkeypatch.setattr(contraction, "coarse_step", lambda st, *a, **k: IterationState(
            st.m * 2, st.m_prime * 2, 0.45, 0.45, 0.09, 0.09, st.iter + 1))
        with pytest.raises(NonContractionError) as info:
            contraction.coarse_iterate(bad, 1e-6)
        assert len(info.value.best) >= 6

    def test_invalid_state(self):
        with pytest.raises(DomainError):
            IterationState(0.5, 1.0, V, V, V, V)
        with pytest.raises(DomainError):
            IterationState(2.0, 2.0, 0.1, 0.1, 0.2, 0.1)
        with pytest.raises(DomainError):
            coarse_iterate(WIDE_INIT, -1.0)

    def test_export(self, trajectory):
        text = format_trajectory(trajectory[:3])
        lines = text.strip().splitlines()
        assert lines[0] == "iter,m,m_prime,p,p_prime,q,q_prime"
        assert lines[2].startswith("1,576.000001,")
        assert len(lines[1].split(",")) == 7


class TestRefined:
    def test_identity_at_one(self):
        r = refined_terms(1.0)
        assert r.I == pytest.approx(1.0, abs=1e-9)
        assert r.H == 1.0 and r.Q == 1.0

    @pytest.mark.parametrize("m", np.linspace(1.0, 1.0099, 11))
    def test_slope_band(self, m):
        d = differentiate_central(refined_map, float(m), step=1e-4).value
        assert 0 < d < 0.86

    @pytest.mark.parametrize("m", np.linspace(1.0, 1.0099, 11))
    def test_H_Q_bands(self, m):
        r = refined_terms(float(m))
        assert 0.99998 <= r.H <= 1.0
        assert r.Q < 1.00001
        assert r.Q >= 1.0

    def test_converges(self):
        traj = refined_iterate(1.009)
        ms = [s.m for s in traj]
        assert all(b < a for a, b in zip(ms, ms[1:]))
        assert ms[-1] - 1.0 <= 1e-6
        assert len(traj) <= 201

    def test_corrected_q(self):
        r = refined_terms(1.005)
        a = 1 / math.sqrt(1.005)
        corr = (4 / math.pi ** 2) * (1 - a) ** 2 / (1 + a) ** 2
        assert r.H == pytest.approx(1 - corr / (r.q + corr), rel=1e-14)

    def test_non_contraction(self):
        with pytest.raises(NonContractionError):
            refined_iterate(1.009, epsilon=0.01)

    def test_domain(self):
        with pytest.raises(DomainError):
            refined_iterate(1.5)

    def test_derivative_expressions(self):
        m = 1.006
        fd_Q = differentiate_central(lambda s: refined_terms(s).Q, m, step=1e-4).value
        fd_H = differentiate_central(lambda s: refined_terms(s).H, m, step=1e-4).value
        assert H_prime_exact(m) == pytest.approx(fd_H, rel=1e-4)
        # the printed H' is a different, much smaller quantity
        assert abs(H_prime_published(m)) < 0.1 * abs(fd_H)
        assert Q_prime_published(m) == pytest.approx(fd_Q, rel=1e-4)


@pytest.fixture(scope="module")
def rows():
    return constants_audit()


class TestAudit:
    def test_all_pass(self, rows):
        failed = [r.name for r in rows if not r.passed]
        assert failed == []

    def test_named_rows(self, rows):
        names = {r.name for r in rows}
        for key in ("c0", "eta(1)", "F_prime(1)", "p/q at m=1.005", "H'(m) on [1,1.01)"):
            assert key in names

    def test_deterministic(self, rows):
        assert constants_audit() == rows

    def test_c0(self, rows):
        row = next(r for r in rows if r.name == "c0")
        assert row.computed == pytest.approx(0.612003, abs=1e-4)

    def test_failures_collected(self, monkeypatch):
        from balanced import contraction
        monkeypatch.setattr(contraction, "eta_value", lambda m: 1 / 0)
        rows = constants_audit(AuditConfig(grid=3))
        bad = [r for r in rows if not r.passed]
        assert bad and "ZeroDivisionError" in bad[0].note
        assert any(r.name == "c0" and r.passed for r in rows)
