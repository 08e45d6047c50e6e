"""Shared fixtures: the small fast link and cached quality statistics."""

from __future__ import annotations

import numpy as np
import pytest

from dbplink.config import SystemConfig, build_config
from dbplink.fluid import QualityStats, estimate_beta

DESK_RAW = {
    "link.n_f": 64,
    "link.bandwidth_hz": 1e6,
    "link.n_d": 4,
    "link.target_per": 0.01,
    "time.dt_s": 0.005,
    "time.frame_s": 0.1,
    "csit.sigma_e2": 0.05,
    "arrival.mean": 200.0,
    "policy.kind": "dbp",
    "policy.v": 1.0,
    "mc.n_slots": 100_000,
    "mc.seed": 20260814,
}


@pytest.fixture()
def desk_config() -> SystemConfig:
    """64-subcarrier, 4-tap link at 200 nats/s: runs in about a second."""
    return build_config(dict(DESK_RAW))


@pytest.fixture(scope="session")
def desk_stats() -> QualityStats:
    """Quality-quantile statistics for the desk link, shared across tests."""
    cfg = build_config(dict(DESK_RAW))
    rng = np.random.default_rng(123456789)
    return estimate_beta(cfg.phy_params(), 100_000, rng)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(987654321)
