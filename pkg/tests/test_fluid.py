"""Fluid-limit engine: drain trajectories, leftover fixed point, bounds."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dbplink.fluid import (FluidParams, QualityStats, RegimeError,
                           StepSizeError, asymptotic_terms, compute_bounds,
                           delay_upper_bound, estimate_beta, iterate_leftover,
                           jg_lower, ju_upper, leftover_fixed_point,
                           power_lower_bound, random_arrival_bounds,
                           rate_lower, rate_mc, rate_upper, traj_y,
                           vcts_ode_integrate)
from dbplink.phy import PhyParams, f_from_noncentrality
from dbplink.specfun import exp_integral_ei

FRAME = 0.1
DT = 0.005


def _params(stats: QualityStats, v: float = 1.0, p_cct: float = 0.0,
            n_f: int = 64) -> FluidParams:
    return FluidParams.from_stats(stats, n_f=n_f, v=v, p_cct=p_cct,
                                  frame_s=FRAME, dt_s=DT)


@pytest.fixture(scope="module")
def paper_stats() -> QualityStats:
    """Quality statistics at the wideband operating point (1024/16 taps)."""
    phy = PhyParams(n_f=1024, target_per=0.01, sigma_e2=0.05,
                    circuit_power=0.0, n_d=16)
    return estimate_beta(phy, 50_000, np.random.default_rng(321))


class _ZeroRng:
    """Generator stub whose draws are all zero: pins the channel estimate."""

    def standard_normal(self, size=None):
        return np.zeros(size)


# ---------------------------------------------------------------------------
# quality statistics
# ---------------------------------------------------------------------------


def test_estimate_beta_requires_enough_samples():
    phy = PhyParams(n_f=64, target_per=0.01, sigma_e2=0.05,
                    circuit_power=0.0, n_d=4)
    with pytest.raises(ValueError):
        estimate_beta(phy, 9_999, np.random.default_rng(0))


def test_estimate_beta_moments(desk_stats):
    beta, beta_prime, mean_f, se = desk_stats
    assert beta_prime >= beta
    assert 0.70 < mean_f < 0.82
    assert -0.60 < beta < -0.35
    assert desk_stats.n_samples == 100_000
    for key in ("beta", "beta_prime", "mean_f"):
        assert se[key] > 0.0
    # the cached draws reproduce the reported moments exactly
    assert beta == pytest.approx(float(np.mean(desk_stats.log_q)), abs=0)
    assert beta_prime == pytest.approx(
        float(np.mean(np.maximum(desk_stats.log_q, 0.0))), abs=0)


def test_pinned_estimate_gives_constant_quality():
    # all-zero draws pin the estimate at zero, so f is the central-case
    # constant and beta = log((1-eps) f) with no spread
    phy = PhyParams(n_f=64, target_per=0.01, sigma_e2=0.05,
                    circuit_power=0.0, n_d=4)
    stats = estimate_beta(phy, 10_000, _ZeroRng())
    c = f_from_noncentrality(phy, 0.0)
    assert np.unique(stats.f_draws).size == 1
    assert stats.mean_f == pytest.approx(c, rel=1e-14)
    assert stats.beta == pytest.approx(math.log(0.99 * c), rel=1e-14)
    assert stats.std_errors["beta"] <= 1e-12


def test_standard_error_scales_with_samples():
    phy = PhyParams(n_f=64, target_per=0.01, sigma_e2=0.05,
                    circuit_power=0.0, n_d=4)
    small = estimate_beta(phy, 10_000, np.random.default_rng(7))
    large = estimate_beta(phy, 1_000_000, np.random.default_rng(8))
    ratio = small.std_errors["beta"] / large.std_errors["beta"]
    assert 6.0 < ratio < 16.0  # 100x samples -> ~10x smaller error


def test_tradeoff_weight_shifts_moments(desk_stats):
    for v in (0.5, 1.0, 2.0, 8.0):
        assert desk_stats.beta_for(v) == desk_stats.beta - math.log(v)
        assert desk_stats.beta_prime_for(v) >= desk_stats.beta_for(v)
        assert desk_stats.beta_prime_se_for(v) >= 0.0
    assert desk_stats.beta_prime_for(1.0) == pytest.approx(
        desk_stats.beta_prime, abs=0)
    # the clipped moment only ever shrinks as the weight grows
    bps = [desk_stats.beta_prime_for(v) for v in (0.5, 1.0, 2.0, 8.0)]
    assert all(a >= b for a, b in zip(bps, bps[1:]))


def test_from_stats_folds_weight_into_offsets(desk_stats):
    p = _params(desk_stats, v=2.0)
    assert p.beta == pytest.approx(desk_stats.beta - math.log(2.0), abs=0)
    assert p.beta_prime == pytest.approx(desk_stats.beta_prime_for(2.0), abs=0)
    assert p.activation_level == pytest.approx(math.exp(-p.beta), abs=0)
    assert p.stats is desk_stats


def test_params_validation():
    with pytest.raises(ValueError):
        FluidParams(beta=0.5, beta_prime=0.2, mean_f=1.0, n_f=64, eps=0.01,
                    v=1.0, p_cct=0.0, frame_s=0.1, dt_s=0.005)
    with pytest.raises(ValueError):
        FluidParams(beta=0.0, beta_prime=0.1, mean_f=-1.0, n_f=64, eps=0.01,
                    v=1.0, p_cct=0.0, frame_s=0.1, dt_s=0.005)
    bare = FluidParams(beta=0.0, beta_prime=0.1, mean_f=1.0, n_f=64,
                       eps=0.01, v=1.0, p_cct=0.0, frame_s=0.1, dt_s=0.005)
    with pytest.raises(ValueError):
        bare.g_anchor(10.0)  # power expectations need cached draws
    # rate falls back to the slow envelope without cached draws
    assert bare.mc_rate(10.0) == pytest.approx(64 * math.log(10.0))


# ---------------------------------------------------------------------------
# closed-form trajectory vs the ODE oracle
# ---------------------------------------------------------------------------

# (u0, beta, n_f, eps, horizon), all staying inside the drainage regime
TRAJ_SETS = [
    (10.0, 0.0, 1, 0.0, 5.0),
    (50.0, -0.5, 8, 0.01, 1.0),
    (200.0, -0.46, 64, 0.01, 0.08),
    (20.0, -0.46, 64, 0.01, 0.05),
    (1000.0, 0.3, 1024, 0.01, 0.002),
    (5.0, 1.0, 16, 0.1, 0.05),
    (80.0, -1.2, 128, 0.05, 0.05),
    (2.0, 0.5, 4, 0.0, 0.5),
]


def test_trajectory_starts_at_u0():
    for (u0, beta, n_f, eps, _) in TRAJ_SETS:
        assert traj_y(0.0, u0, beta, n_f, eps) == u0


@pytest.mark.parametrize("u0,beta,n_f,eps,horizon", TRAJ_SETS)
def test_trajectory_matches_rk4(u0, beta, n_f, eps, horizon):
    t, u = vcts_ode_integrate(u0, beta, horizon, step=horizon / 2000,
                              n_f=n_f, eps=eps)
    for i in (len(t) // 4, len(t) // 2, len(t) - 1):
        y = traj_y(float(t[i]), u0, beta, n_f, eps)
        assert y == pytest.approx(u[i], rel=1e-6)
    assert traj_y(horizon, u0, beta, n_f, eps) > math.exp(-beta)


def test_trajectory_strictly_decreasing():
    ts = np.linspace(0.0, 0.05, 40)
    ys = [traj_y(float(t), 20.0, -0.46, 64, 0.01) for t in ts]
    assert all(a > b for a, b in zip(ys, ys[1:]))


@given(
    u0=st.floats(min_value=3.0, max_value=5000.0),
    beta=st.floats(min_value=-1.0, max_value=1.0),
    t1=st.floats(min_value=0.0, max_value=0.02),
    t2=st.floats(min_value=0.0, max_value=0.02),
)
@settings(max_examples=60, deadline=None)
def test_trajectory_flow_property(u0, beta, t1, t2):
    # restarting the drain from y(t1) reproduces y(t1 + t2)
    y_total = traj_y(t1 + t2, u0, beta, 64, 0.01)
    assume(math.log(y_total) + beta > 0.05)  # stay off the clamp level
    y_mid = traj_y(t1, u0, beta, 64, 0.01)
    assert traj_y(t2, y_mid, beta, 64, 0.01) == pytest.approx(
        y_total, rel=5e-9)


def test_trajectory_domain_errors():
    with pytest.raises(RegimeError):
        traj_y(0.01, 0.9, 0.0, 64, 0.01)  # at/below the activation level
    with pytest.raises(ValueError):
        traj_y(-0.01, 10.0, 0.0, 64, 0.01)
    with pytest.raises(ValueError):
        traj_y(0.01, 0.0, 0.0, 64, 0.01)


def test_ode_flat_below_activation():
    t, u = vcts_ode_integrate(0.5, 0.0, 0.1, 0.01, n_f=64, eps=0.01)
    assert np.all(u == 0.5)


def test_ode_argument_validation():
    with pytest.raises(ValueError):
        vcts_ode_integrate(10.0, None, 0.1, 0.01, n_f=64, eps=0.01)
    with pytest.raises(ValueError):
        vcts_ode_integrate(10.0, 0.0, 0.1, 0.0, n_f=64, eps=0.01)


def test_ode_step_size_guard():
    with pytest.raises(StepSizeError):
        vcts_ode_integrate(3.0, 0.0, 0.1, 0.05, n_f=64, eps=0.0)
    # the same run is accepted when the halving check is waived
    t, u = vcts_ode_integrate(3.0, 0.0, 0.1, 0.05, n_f=64, eps=0.0,
                              richardson=False)
    assert u.shape == t.shape


def test_rate_envelopes_bracket_mc_rate(desk_stats):
    n_f = 64
    low = rate_lower(desk_stats.beta_for(1.0), n_f)
    high = rate_upper(desk_stats.beta_prime_for(1.0), n_f)
    mc = rate_mc(desk_stats, 1.0, n_f)
    for u in np.geomspace(2.0, 1e4, 25):
        assert low(u) <= mc(u) + 1e-9
        assert mc(u) <= high(u) + 1e-9
    # strict separation where some draws sit below the activation level
    assert low(2.0) < mc(2.0) < high(2.0)


def test_mc_trajectory_between_envelopes(desk_stats):
    # the conditional-mean drain stays between the slow and fast envelopes
    b = 20.0
    beta = desk_stats.beta_for(1.0)
    lstar = leftover_fixed_point(b, FRAME, beta, 64, 0.01)
    u0 = b + lstar
    step = 1e-3
    _, u_slow = vcts_ode_integrate(u0, beta, FRAME, step, n_f=64, eps=0.01)
    _, u_fast = vcts_ode_integrate(u0, desk_stats.beta_prime_for(1.0), FRAME,
                                   step, n_f=64, eps=0.01)
    _, u_mc = vcts_ode_integrate(u0, None, FRAME, step, n_f=64, eps=0.01,
                                 rate_fn=rate_mc(desk_stats, 1.0, 64))
    slack = 1e-8 * u0
    assert np.all(u_fast <= u_mc + slack)
    assert np.all(u_mc <= u_slow + slack)
    assert u_fast.min() > 1.0  # sandwich asserted inside its valid range
    assert u_fast[-1] + 1.0 < u_slow[-1]  # non-vacuous separation


# ---------------------------------------------------------------------------
# leftover fixed point
# ---------------------------------------------------------------------------


def test_leftover_satisfies_defining_equation(desk_stats):
    cases = [
        (10.0, 5.0, 0.0, 1, 0.0),
        (20.0, FRAME, desk_stats.beta_for(1.0), 64, 0.01),
        (20.0, FRAME, desk_stats.beta_for(4.0), 64, 0.01),
        (100.0, FRAME, -0.13, 1024, 0.01),
    ]
    for (b, t_frame, beta, n_f, eps) in cases:
        lstar = leftover_fixed_point(b, t_frame, beta, n_f, eps)
        assert lstar > 0.0
        assert abs(traj_y(t_frame, b + lstar, beta, n_f, eps) - lstar) <= 1e-8


def test_leftover_iteration_converges_upward():
    lstar = leftover_fixed_point(10.0, 5.0, 0.0, 1, 0.0)
    assert lstar == pytest.approx(3.5031163370, abs=1e-8)
    seq = iterate_leftover(10.0, 5.0, 0.0, 1, 0.0, 60)
    assert np.all(np.diff(seq) >= -1e-12)  # monotone approach from below
    assert seq[-1] == pytest.approx(lstar, abs=1e-8)


def test_leftover_monotone_in_burst_size():
    assert (leftover_fixed_point(20.0, 5.0, 0.0, 1, 0.0)
            >= leftover_fixed_point(10.0, 5.0, 0.0, 1, 0.0))
    beta = -0.46
    assert (leftover_fixed_point(40.0, FRAME, beta, 64, 0.01)
            >= leftover_fixed_point(20.0, FRAME, beta, 64, 0.01))


def test_leftover_regime_error_below_activation():
    with pytest.raises(RegimeError):
        leftover_fixed_point(0.9, 5.0, 0.0, 1, 0.0)


def test_hundred_periods_stay_bounded():
    lstar = leftover_fixed_point(10.0, 5.0, 0.0, 1, 0.0)
    seq = iterate_leftover(10.0, 5.0, 0.0, 1, 0.0, 100, start=0.0)
    assert seq.max() <= lstar + 1e-6


# ---------------------------------------------------------------------------
# per-frame area integrals
# ---------------------------------------------------------------------------


def _area_closed_form(u0: float, beta: float, n_f: int, eps: float,
                      t_end: float) -> float:
    """Exact drain area: substituting w = log y + beta turns the time
    integral of y into (e^{-beta}/D) [Ei(2 w0) - Ei(2 w_end)]."""
    w0 = math.log(u0) + beta
    drain = n_f * (1.0 - eps) * math.exp(beta)
    w_end = math.log(traj_y(t_end, u0, beta, n_f, eps)) + beta
    return (math.exp(-beta) / drain) * (
        exp_integral_ei(2.0 * w0) - exp_integral_ei(2.0 * w_end))


def test_backlog_area_matches_closed_form(desk_stats):
    p = _params(desk_stats)
    for (u0, t_end) in [(22.0, FRAME), (40.0, FRAME), (10.0, 0.02)]:
        want = _area_closed_form(u0, p.beta, p.n_f, p.eps, t_end)
        assert ju_upper(u0, t_end, p) == pytest.approx(want, rel=1e-9)


def test_backlog_area_matches_riemann_sum(desk_stats):
    p = _params(desk_stats)
    n = 20_000
    mid = (np.arange(n) + 0.5) * (FRAME / n)
    riemann = sum(traj_y(float(t), 22.0, p.beta, p.n_f, p.eps)
                  for t in mid) * (FRAME / n)
    assert ju_upper(22.0, FRAME, p) == pytest.approx(riemann, rel=1e-6)


def test_backlog_area_rectangle_limit(desk_stats):
    p = _params(desk_stats)
    u0, t_end = 22.0, 1e-5
    assert traj_y(t_end, u0, p.beta, p.n_f, p.eps) > 0.99 * u0
    assert ju_upper(u0, t_end, p) == pytest.approx(u0 * t_end, rel=0.01)


def test_backlog_area_decreasing_in_offset(desk_stats):
    p = _params(desk_stats)
    slower = FluidParams(beta=p.beta - 0.3, beta_prime=p.beta_prime,
                         mean_f=p.mean_f, n_f=p.n_f, eps=p.eps, v=p.v,
                         p_cct=p.p_cct, frame_s=p.frame_s, dt_s=p.dt_s)
    assert ju_upper(22.0, FRAME, slower) > ju_upper(22.0, FRAME, p)


def test_backlog_area_flat_below_activation(desk_stats):
    p = _params(desk_stats)
    assert 1.0 < p.activation_level
    assert ju_upper(1.0, FRAME, p) == 1.0 * FRAME
    assert ju_upper(0.0, FRAME, p) == 0.0
    with pytest.raises(ValueError):
        ju_upper(-1.0, FRAME, p)
    with pytest.raises(ValueError):
        ju_upper(1.0, 0.0, p)


def _power_area_riemann(u0: float, t_frame: float, p: FluidParams,
                        n: int = 20_000) -> float:
    """Midpoint sum of the clipped power chord along the fast envelope."""
    c1 = p.n_f * (1.0 - p.eps) / p.v
    c0 = p.g_anchor(u0) - c1 * u0
    mid = (np.arange(n) + 0.5) * (t_frame / n)
    total = 0.0
    for t in mid:
        y = traj_y(float(t), u0, p.beta_prime, p.n_f, p.eps)
        total += max(c1 * y + c0, 0.0)
    return total * (t_frame / n)


def test_power_area_matches_riemann_in_every_branch(desk_stats):
    # chord stays positive (large circuit power), chord crosses zero inside
    # the frame (small start), crossing beyond the frame, fast-weight drain
    cases = [
        (20.0, 1.0, 0.0),      # crossing level below the frame-end backlog
        (3.0, 1.0, 0.0),       # crossing reached inside the frame
        (20.0, 0.25, 0.0),     # aggressive weight: deep drain
        (20.0, 1.0, 150.0),    # positive chord over the whole frame
    ]
    for (u0, v, p_cct) in cases:
        p = _params(desk_stats, v=v, p_cct=p_cct)
        want = _power_area_riemann(u0, FRAME, p)
        assert jg_lower(u0, FRAME, p) == pytest.approx(want, rel=1e-6)
    # the circuit-power case really exercises the positive-chord branch
    p = _params(desk_stats, p_cct=150.0)
    assert p.g_anchor(20.0) - p.n_f * (1.0 - p.eps) / p.v * 20.0 > 0.0


def test_power_area_flat_below_fast_activation(desk_stats):
    p = _params(desk_stats)
    u0 = 0.8
    assert math.log(u0) + p.beta_prime <= 0.0
    assert jg_lower(u0, FRAME, p) == pytest.approx(p.g_anchor(u0) * FRAME,
                                                   abs=0)


def test_power_area_zero_when_never_activating(desk_stats):
    p = _params(desk_stats, v=200.0)
    assert p.g_anchor(20.0) == 0.0
    assert jg_lower(20.0, FRAME, p) == 0.0
    assert jg_lower(0.0, FRAME, _params(desk_stats)) == 0.0


def test_power_area_nonincreasing_in_weight(desk_stats):
    areas = [jg_lower(20.0, FRAME, _params(desk_stats, v=v))
             for v in (0.5, 1.0, 2.0, 4.0)]
    assert all(a >= b for a, b in zip(areas, areas[1:]))
    assert areas[0] > areas[-1]


def test_discrete_recursion_converges_linearly(desk_stats):
    # forward-Euler backlog accounting approaches the continuous area O(dt)
    p = _params(desk_stats)
    target = ju_upper(22.0, FRAME, p)

    def euler_area(dt: float) -> float:
        u, total = 22.0, 0.0
        for _ in range(int(round(FRAME / dt))):
            total += u * dt
            u -= dt * (1.0 - p.eps) * p.n_f * max(math.log(u) + p.beta, 0.0)
        return total

    errors = [abs(euler_area(dt) - target) for dt in (1e-3, 5e-4, 2.5e-4)]
    assert errors[0] > errors[1] > errors[2]
    for coarse, fine in zip(errors, errors[1:]):
        assert 0.35 < fine / coarse < 0.65  # halving dt halves the error


# ---------------------------------------------------------------------------
# delay/power bounds and asymptotics
# ---------------------------------------------------------------------------


def test_desk_bounds_are_sane(desk_stats):
    p = _params(desk_stats)
    delay = delay_upper_bound(20.0, p)
    power = power_lower_bound(20.0, p)
    assert 0.1 < delay < 0.3
    assert power > 0.0
    with pytest.raises(ValueError):
        delay_upper_bound(0.0, p)
    with pytest.raises(ValueError):
        power_lower_bound(-1.0, p)


def test_bounds_monotone_in_weight_wideband(paper_stats):
    delays, powers = [], []
    for v in (1.0, 4.0, 10.0, 40.0):
        p = FluidParams.from_stats(paper_stats, n_f=1024, v=v, p_cct=0.0,
                                   frame_s=FRAME, dt_s=DT)
        delays.append(delay_upper_bound(100.0, p))
        powers.append(power_lower_bound(100.0, p))
    assert all(a < b for a, b in zip(delays, delays[1:]))
    assert all(a > b for a, b in zip(powers, powers[1:]))


def test_bounds_regime_error_at_huge_weight(desk_stats):
    with pytest.raises(RegimeError):
        delay_upper_bound(20.0, _params(desk_stats, v=1000.0))


def test_asymptotic_terms_shrink_with_weight(desk_stats):
    terms = {v: asymptotic_terms(20.0, _params(desk_stats, v=v))
             for v in (0.1, 0.2)}
    assert 0.0 < terms[0.1].t_d < terms[0.2].t_d
    assert 0.0 < terms[0.1].t_p < terms[0.2].t_p
    with pytest.raises(RegimeError):
        asymptotic_terms(20.0, _params(desk_stats, v=16.0))
    with pytest.raises(ValueError):
        asymptotic_terms(0.0, _params(desk_stats))


def test_triangle_rectangle_overbounds_area(desk_stats):
    # the burst triangle plus leftover rectangle dominates the exact area
    for v in (0.1, 0.2):
        p = _params(desk_stats, v=v)
        b = 20.0
        terms = asymptotic_terms(b, p)
        lstar = leftover_fixed_point(b, FRAME, p.beta, p.n_f, p.eps)
        l_delta = math.exp(-p.beta)
        cover = 0.5 * (b - l_delta) * terms.t_d + FRAME * (lstar + l_delta)
        assert cover >= ju_upper(b + lstar, FRAME, p)


def test_point_mass_arrivals_reduce_to_deterministic(desk_stats):
    p = _params(desk_stats)
    delay, power = random_arrival_bounds(np.array([20.0]), np.array([1.0]), p)
    assert delay == delay_upper_bound(20.0, p)
    assert power == power_lower_bound(20.0, p)


def test_two_point_arrivals_weight_per_atom_terms(desk_stats):
    p = _params(desk_stats)
    values = np.array([15.0, 25.0])
    probs = np.array([0.5, 0.5])
    lstar_max = leftover_fixed_point(25.0, FRAME, p.beta, p.n_f, p.eps)
    want_delay = (0.5 * ju_upper(15.0 + lstar_max, FRAME, p)
                  + 0.5 * ju_upper(25.0 + lstar_max, FRAME, p)) / 20.0
    want_power = (0.5 * jg_lower(15.0, FRAME, p)
                  + 0.5 * jg_lower(25.0, FRAME, p)) / FRAME
    delay, power = random_arrival_bounds(values, probs, p)
    assert delay == pytest.approx(want_delay, rel=1e-12)
    assert power == pytest.approx(want_power, rel=1e-12)


def test_arrival_spread_never_shrinks_delay_bound(desk_stats):
    p = _params(desk_stats)
    point, _ = random_arrival_bounds(np.array([20.0]), np.array([1.0]), p)
    spread, _ = random_arrival_bounds(np.array([15.0, 25.0]),
                                      np.array([0.5, 0.5]), p)
    assert spread >= point


def test_bounds_bundle_deterministic(desk_stats):
    p = _params(desk_stats)
    fb = compute_bounds([20.0], [1.0], p)
    assert fb.notes == ()
    assert fb.delay_upper_s == pytest.approx(delay_upper_bound(20.0, p), abs=0)
    assert fb.power_lower == pytest.approx(power_lower_bound(20.0, p), abs=0)
    assert fb.ju_upper == pytest.approx(
        ju_upper(20.0 + fb.leftover_fixed_point, FRAME, p), abs=0)
    assert abs(traj_y(FRAME, 20.0 + fb.leftover_fixed_point, p.beta, p.n_f,
                      p.eps) - fb.leftover_fixed_point) <= 1e-8
    assert fb.t_d is not None and fb.delay_order is not None
    assert fb.activation_fraction > 0.99
    assert fb.beta_se > 0.0 and fb.mean_f_se > 0.0


def test_bounds_bundle_notes_vacuous_cases(desk_stats):
    # a tiny mean atom: the policy never activates there and the mean burst
    # is outside the asymptotic regime, so both notes fire
    p = _params(desk_stats)
    fb = compute_bounds([0.0099, 40.0], [0.9995, 0.0005], p)
    assert fb.activation_fraction == 0.0
    assert len(fb.notes) == 2
    assert "never activates" in fb.notes[0]
    assert "asymptotic terms unavailable" in fb.notes[1]
    assert fb.t_d is None and fb.power_order is None
    assert fb.delay_upper_s > 0.0
