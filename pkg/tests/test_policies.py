"""Transmission policies: closed-form optimizer vs grid search, identities."""

from __future__ import annotations

import math

import numpy as np
import pytest

from dbplink.phy import PhyParams, total_power
from dbplink.policies import (PolicyConfig, csit_only_rate_from_f,
                              dbp_objective, dbp_power_from_f, dbp_rate_from_f,
                              no_csit_rate)


def _phy(**kw) -> PhyParams:
    base = dict(n_f=64, target_per=0.01, sigma_e2=0.05, circuit_power=0.0, n_d=4)
    base.update(kw)
    return PhyParams(**base)


def test_policy_config_fields_per_kind():
    PolicyConfig(kind="dbp", tradeoff_v=1.0)
    PolicyConfig(kind="csit-only", tradeoff_v=0.01)
    PolicyConfig(kind="no-csit", fixed_rate=300.0, fixed_power=9000.0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="dbp")
    with pytest.raises(ValueError):
        PolicyConfig(kind="dbp", tradeoff_v=1.0, fixed_rate=10.0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="no-csit", fixed_rate=300.0)
    with pytest.raises(ValueError):
        PolicyConfig(kind="waterfilling", tradeoff_v=1.0)


def test_dbp_rate_threshold_and_value():
    phy = _phy()
    # below the activation level the link stays silent
    assert dbp_rate_from_f(0.0, 0.9, 1.0, phy) == 0.0
    assert dbp_rate_from_f(1.0, 0.9, 1.0, phy) == 0.0  # level 0.891 < 1
    u = 40.0
    level = u * 0.99 * 0.9 / 1.0
    assert dbp_rate_from_f(u, 0.9, 1.0, phy) == pytest.approx(64.0 * math.log(level))


def test_dbp_rate_monotonicity():
    phy = _phy()
    rates_u = [dbp_rate_from_f(u, 0.8, 1.0, phy) for u in (0.5, 2.0, 10.0, 100.0)]
    assert all(a <= b for a, b in zip(rates_u, rates_u[1:]))
    rates_f = [dbp_rate_from_f(10.0, f, 1.0, phy) for f in (0.05, 0.2, 0.8, 2.0)]
    assert all(a <= b for a, b in zip(rates_f, rates_f[1:]))
    rates_v = [dbp_rate_from_f(10.0, 0.8, v, phy) for v in (0.1, 1.0, 4.0, 20.0)]
    assert all(a >= b for a, b in zip(rates_v, rates_v[1:]))


def test_power_identity_with_rate_composition():
    """The closed-form power expression equals power-of-the-closed-form-rate."""
    rng = np.random.default_rng(0)
    for p_cct in (0.0, 7.0):
        phy = _phy(circuit_power=p_cct)
        for _ in range(500):
            u = float(rng.uniform(0.0, 200.0))
            f = float(rng.uniform(0.01, 3.0))
            v = float(rng.uniform(0.05, 20.0))
            rate = dbp_rate_from_f(u, f, v, phy)
            direct = dbp_power_from_f(u, f, v, phy)
            composed = float(total_power(rate, f, phy))
            assert direct == pytest.approx(composed, rel=1e-12, abs=1e-12)


def test_grid_search_confirms_closed_form_argmax():
    """Objective U r (1-eps) dt - V P(r) dt is maximized by the book rate."""
    rng = np.random.default_rng(1)
    phy = _phy()
    dt = 0.005
    n_grid = 2000
    for _ in range(60):
        u = float(rng.uniform(0.0, 200.0))
        f = float(rng.uniform(0.01, 3.0))
        v = float(rng.uniform(0.05, 20.0))
        star = dbp_rate_from_f(u, f, v, phy)
        hi = max(2.0 * star, 64.0 * math.log(4.0))
        grid = np.linspace(0.0, hi, n_grid)
        vals = dbp_objective(grid, u, v, f, phy, dt)
        best = grid[int(np.argmax(vals))]
        assert abs(best - star) <= hi / (n_grid - 1) + 1e-12
        # and the closed form never loses to any grid point
        assert dbp_objective(star, u, v, f, phy, dt) >= np.max(vals) - 1e-12


def test_csit_only_is_unit_backlog_dbp():
    phy = _phy()
    for f in (0.05, 0.5, 1.5):
        for v in (0.01, 0.1, 1.0):
            assert csit_only_rate_from_f(f, v, phy) == pytest.approx(
                dbp_rate_from_f(1.0, f, v, phy))


def test_no_csit_rate_gates_on_backlog():
    cfg = PolicyConfig(kind="no-csit", fixed_rate=300.0, fixed_power=9000.0)
    assert no_csit_rate(cfg, backlog=5.0) == (300.0, 9000.0)
    assert no_csit_rate(cfg, backlog=0.0) == (0.0, 0.0)


def test_circuit_power_is_accounting_not_decision():
    """The rate rule is unchanged by circuit power; only the bill grows."""
    phy0 = _phy(circuit_power=0.0)
    phy5 = _phy(circuit_power=200.0)
    u, f, v = 40.0, 0.7, 1.0
    assert dbp_rate_from_f(u, f, v, phy5) == dbp_rate_from_f(u, f, v, phy0)
    assert dbp_power_from_f(u, f, v, phy5) == pytest.approx(
        dbp_power_from_f(u, f, v, phy0) + 200.0)


def test_dbp_power_zero_when_inactive():
    phy = _phy(circuit_power=5.0)
    assert dbp_power_from_f(0.5, 0.5, 1.0, phy) == 0.0
    assert dbp_power_from_f(0.0, 2.0, 1.0, phy) == 0.0
