import math

import numpy as np
import pytest

from bivi.schedule import (AdaptivePen, ConstantAlpha, ConstantEta,
                           ConstantLambda, DiminishingEta, IntervalLambda,
                           Kahan, ScheduleConfig, ScheduleError, ScheduleState,
                           SummableTail, ZeroAlpha, alpha_next, beta_at,
                           delta_at, eta_at, lambda_at, p_next, s_upper_bound)


def test_eta_diminishing_values():
    rule = DiminishingEta(0.1, 0.5)
    assert eta_at(rule, 0) == pytest.approx(0.1)
    assert eta_at(rule, 3) == pytest.approx(0.05)
    assert eta_at(rule, 99) == pytest.approx(0.01)
    assert eta_at(ConstantEta(0.3), 17) == 0.3


def test_eta_rule_validation():
    with pytest.raises(ScheduleError):
        DiminishingEta(1.5, 0.5)
    with pytest.raises(ScheduleError):
        DiminishingEta(0.5, 1.0)
    with pytest.raises(ScheduleError):
        ConstantEta(-0.1)


def test_alpha_next_pen_example():
    # k >= m branch: eta * min(theta^k / (step^2 + rho), alpha_prev / eta_prev)
    rule = AdaptivePen(m=1, theta=0.1, rho=0.0, alpha0=0.5)
    a1 = alpha_next(rule, 1, 0.1, 0.1, 0.5, step_norm=1.0)
    assert a1 == pytest.approx(0.01)


def test_alpha_next_ratio_branch_constant_eta():
    rule = AdaptivePen(m=5, theta=0.5, rho=1e-8, alpha0=0.7)
    assert alpha_next(rule, 2, 0.2, 0.2, 0.7, 3.0) == pytest.approx(0.7)


def test_alpha_zero_rule():
    for k in range(1, 10):
        assert alpha_next(ZeroAlpha(), k, 0.1, 0.2, 0.9, 1.0) == 0.0


def test_alpha_summable_tail():
    rule = SummableTail(m=2, kind="geometric", xi0=0.5, param=0.5)
    assert alpha_next(rule, 1, 0.1, 0.1, 0.5, 0.0) == pytest.approx(0.5)   # frozen head
    assert alpha_next(rule, 2, 0.1, 0.1, 0.5, 0.0) == pytest.approx(0.5)   # xi_0
    assert alpha_next(rule, 4, 0.1, 0.1, 0.5, 0.0) == pytest.approx(0.125)  # xi_2
    with pytest.raises(ScheduleError):
        SummableTail(m=0, kind="power", xi0=0.5, param=1.0)


def test_s_upper_bound_values():
    assert s_upper_bound(0.5) == pytest.approx(2.0)
    assert s_upper_bound(1e-9) == pytest.approx(0.0, abs=1e-8)
    assert s_upper_bound(0.99) == pytest.approx(198.0)
    with pytest.raises(ScheduleError):
        s_upper_bound(1.0)


def test_beta_values():
    assert beta_at(1.0, 0.1, 1.0, 0.2) == pytest.approx(0.16551724137931034)
    assert beta_at(0.5, 1.0, 1.0, 1.0) == pytest.approx(3.0 / 7.0)
    with pytest.raises(ScheduleError):
        beta_at(5.0, 0.1, 1.0, 0.2)  # lambda >= 1/L
    with pytest.raises(ScheduleError):
        beta_at(1.0, 0.1, 0.0, 0.2)


def test_beta_monotone_in_mu():
    vals = [beta_at(0.5, 0.5, mu, 1.0) for mu in (0.5, 1.0, 10.0, 1e6)]
    assert all(b2 > b1 for b1, b2 in zip(vals, vals[1:]))
    assert vals[-1] < 1.0


def test_p_next_values():
    assert p_next(1.0, 0.5) == pytest.approx(2.0)
    p = 1.0
    for _ in range(3):
        p = p_next(p, 0.5)
    assert p == pytest.approx(8.0)
    assert p_next(1.0, 0.16551724137931034) == pytest.approx(1.1983471074380165)
    assert p_next(7.0, 1e-12) == pytest.approx(7.0)


def test_delta_values():
    assert delta_at(0.5, 2.0) == pytest.approx(3.0)
    assert delta_at(0.0, 5.0) == 0.0
    assert delta_at(1.0, 1.0) == pytest.approx(2.0)


def test_lambda_rules():
    assert lambda_at(ConstantLambda(0.25), 7) == 0.25
    rule = IntervalLambda(0.1, 0.4)
    assert [lambda_at(rule, k) for k in range(4)] == [0.4, 0.1, 0.4, 0.1]
    with pytest.raises(ScheduleError):
        IntervalLambda(0.5, 0.1)


def test_config_default_lambda_and_admissibility():
    cfg = ScheduleConfig(ConstantEta(0.1), ZeroAlpha())
    resolved, ok = cfg.resolved(L_F=0.1, L_H=1.0, mu=0.0)
    assert ok
    assert resolved.lambda_rule.value == pytest.approx(0.99 / 0.2)
    bad = ScheduleConfig(ConstantEta(0.1), ZeroAlpha(), ConstantLambda(10.0))
    with pytest.raises(ScheduleError):
        bad.resolved(L_F=0.1, L_H=1.0, mu=0.0)
    tolerated = ScheduleConfig(ConstantEta(0.1), ZeroAlpha(), ConstantLambda(10.0),
                               enforce_stepsize=False)
    _, ok = tolerated.resolved(L_F=0.1, L_H=1.0, mu=0.0)
    assert not ok


def test_strong_mode_needs_mu_and_strict_stepsize():
    cfg = ScheduleConfig(ConstantEta(0.1), ZeroAlpha(), ConstantLambda(5.0), strong_mode=True)
    with pytest.raises(ScheduleError):
        cfg.resolved(L_F=0.1, L_H=1.0, mu=0.0)
    with pytest.raises(ScheduleError):
        cfg.resolved(L_F=0.1, L_H=1.0, mu=1.0)  # 5.0 = 1/L0 not strictly below
    ok_cfg = ScheduleConfig(ConstantEta(0.1), ZeroAlpha(), ConstantLambda(4.9), strong_mode=True)
    _, ok = ok_cfg.resolved(L_F=0.1, L_H=1.0, mu=1.0)
    assert ok


def test_summable_tail_requires_constant_eta():
    cfg = ScheduleConfig(DiminishingEta(0.1, 0.5),
                         SummableTail(0, "geometric", 0.5, 0.5))
    with pytest.raises(ScheduleError):
        cfg.resolved(L_F=1.0, L_H=1.0, mu=0.0)


def _drive(state, norms):
    for k, s in enumerate(norms):
        state.advance(k, s)


def test_state_monotonicity_invariants():
    # alpha_k/eta_k and eta_k must be nonincreasing, alpha in [0,1]
    cfg = ScheduleConfig(DiminishingEta(0.5, 0.4),
                         AdaptivePen(m=3, theta=0.7, rho=1e-6, alpha0=0.9),
                         ConstantLambda(0.1))
    st = ScheduleState(cfg, L_F=1.0, L_H=1.0, mu=0.0)
    rng = np.random.default_rng(5)
    prev_eta, prev_ratio = None, None
    for k in range(200):
        st.advance(k, float(rng.uniform(0.0, 2.0)))
        assert 0.0 <= st.alpha_k <= 1.0
        ratio = st.alpha_k / st.eta_k
        if prev_eta is not None:
            assert st.eta_k <= prev_eta + 1e-15
            assert ratio <= prev_ratio + 1e-12
        prev_eta, prev_ratio = st.eta_k, ratio


def test_state_pen_m0_sum_certificate():
    for theta in (0.1, 0.5, 0.9):
        cfg = ScheduleConfig(DiminishingEta(1.0, 0.5),
                             AdaptivePen(m=0, theta=theta, rho=1e-8, alpha0=1.0),
                             ConstantLambda(0.1))
        st = ScheduleState(cfg, L_F=1.0, L_H=1.0, mu=0.0)
        cap = s_upper_bound(theta)
        rng = np.random.default_rng(11)
        st.advance(0, 0.0)  # x_0 = x_{-1}: the first displacement is zero
        for k in range(1, 2000):
            st.advance(k, float(rng.uniform(0.0, 3.0)))
            assert st.s_partial <= cap + 1e-12


def test_state_strong_q_tracking_matches_direct_product():
    cfg = ScheduleConfig(ConstantEta(0.2), ConstantAlpha(0.6), ConstantLambda(1.0),
                         strong_mode=True)
    st = ScheduleState(cfg, L_F=0.5, L_H=1.0, mu=2.0)
    p_direct = 1.0
    qs = []
    for k in range(50):
        st.advance(k, 1.0)
        qs.append(st.q_k)
        assert st.q_k == pytest.approx(p_direct * st.alpha_k, rel=1e-12)
        p_direct = p_direct / (1.0 - st.beta_k)
        assert st.p_k == pytest.approx(p_direct, rel=1e-12)
    assert all(q2 <= q1 + 1e-12 for q1, q2 in zip(qs, qs[1:]))


def test_kahan_beats_naive_on_long_sum():
    acc = Kahan()
    naive = 0.0
    for _ in range(10 ** 5):
        acc.add(0.1)
        naive += 0.1
    assert abs(acc.value - 10_000.0) < abs(naive - 10_000.0) + 1e-12
    assert acc.value == pytest.approx(10_000.0, abs=1e-9)


def test_advance_out_of_order_rejected():
    cfg = ScheduleConfig(ConstantEta(0.1), ZeroAlpha(), ConstantLambda(0.1))
    st = ScheduleState(cfg, L_F=1.0, L_H=1.0, mu=0.0)
    st.advance(0, 0.0)
    with pytest.raises(ScheduleError):
        st.advance(2, 0.0)
