"""Transmission policies: backpressure (DBP), CSIT-only, and No-CSIT.

The backpressure policy maximizes the per-slot weighted service-minus-power
objective ``U r (1-eps) dt - V g(r) dt``; its closed-form maximizer is a
multilevel water-filling rate that grows with both the backlog and the
channel-quality quantile.  The CSIT-only baseline drops the backlog weight;
the No-CSIT baseline transmits a fixed (rate, power) pair whenever the queue
is nonempty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import independent_subcarrier_set
from .phy import PhyParams, f_quality, total_power

POLICY_KINDS = ("dbp", "csit-only", "no-csit")


@dataclass(frozen=True)
class PolicyConfig:
    """Which policy to run and its single tuning knob.

    ``dbp`` and ``csit-only`` take the delay/power tradeoff weight
    ``tradeoff_v``; ``no-csit`` takes the fixed operating point
    ``(fixed_rate, fixed_power)``.  Exactly the fields for the kind must be
    set.
    """

    kind: str
    tradeoff_v: float | None = None
    fixed_rate: float | None = None
    fixed_power: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.kind in ("dbp", "csit-only"):
            if self.tradeoff_v is None or not self.tradeoff_v > 0.0:
                raise ValueError(f"{self.kind} requires tradeoff_v > 0")
            if self.fixed_rate is not None or self.fixed_power is not None:
                raise ValueError(f"{self.kind} does not take fixed_rate/fixed_power")
        else:
            if self.fixed_rate is None or self.fixed_rate < 0.0:
                raise ValueError("no-csit requires fixed_rate >= 0")
            if self.fixed_power is None or self.fixed_power < 0.0:
                raise ValueError("no-csit requires fixed_power >= 0")
            if self.tradeoff_v is not None:
                raise ValueError("no-csit does not take tradeoff_v")


# ---------------------------------------------------------------------------
# backpressure policy
# ---------------------------------------------------------------------------


def dbp_rate_from_f(backlog: float, f: float, v: float, phy: PhyParams) -> float:
    """Backpressure rate ``n_F [log(U (1-eps) f / V)]^+`` from a quantile f."""
    if backlog <= 0.0:
        return 0.0
    level = backlog * (1.0 - phy.target_per) * f / v
    if level <= 1.0:
        return 0.0
    return phy.n_f * math.log(level)


def dbp_power_from_f(backlog: float, f: float, v: float, phy: PhyParams) -> float:
    """Backpressure power: water level minus inverse quality, plus circuit.

    ``U (1-eps) n_F / V - n_F / f + P_cct`` while the water level clears the
    inverse quality, else 0.  Algebraically identical to
    ``total_power(dbp_rate_from_f(...), f, phy)``.
    """
    if backlog <= 0.0:
        return 0.0
    level = backlog * (1.0 - phy.target_per) * phy.n_f / v - phy.n_f / f
    if level <= 0.0:
        return 0.0
    return level + phy.circuit_power


def _f_for(csit: np.ndarray, phy: PhyParams) -> float:
    i_b = independent_subcarrier_set(phy.n_f, phy.n_d)
    return float(f_quality(phy, csit, i_b))


def dbp_rate(backlog: float, csit: np.ndarray, cfg: PolicyConfig, phy: PhyParams) -> float:
    """Backpressure rate for one slot from the raw channel estimate."""
    if cfg.kind != "dbp":
        raise ValueError(f"dbp_rate called with a {cfg.kind!r} config")
    return dbp_rate_from_f(backlog, _f_for(csit, phy), cfg.tradeoff_v, phy)


def dbp_power(backlog: float, csit: np.ndarray, cfg: PolicyConfig, phy: PhyParams) -> float:
    """Backpressure slot power from the raw channel estimate."""
    if cfg.kind != "dbp":
        raise ValueError(f"dbp_power called with a {cfg.kind!r} config")
    return dbp_power_from_f(backlog, _f_for(csit, phy), cfg.tradeoff_v, phy)


def dbp_objective(rate, backlog: float, v: float, f: float,
                  phy: PhyParams, dt: float):
    """Per-slot objective ``U r (1-eps) dt - V g(r) dt`` the rate maximizes.

    Exposed as a verification oracle: grid-searching this function over a
    rate vector recovers :func:`dbp_rate_from_f` up to the grid step.
    """
    rate = np.asarray(rate, dtype=np.float64)
    if np.any(rate < 0.0):
        raise ValueError("rate must be nonnegative")
    gain = backlog * rate * (1.0 - phy.target_per) * dt
    cost = v * total_power(rate, f, phy) * dt
    out = gain - cost
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def csit_only_rate_from_f(f: float, v: float, phy: PhyParams) -> float:
    """Queue-blind rate ``n_F [log((1-eps) f / V)]^+``."""
    level = (1.0 - phy.target_per) * f / v
    if level <= 1.0:
        return 0.0
    return phy.n_f * math.log(level)


def csit_only_rate(csit: np.ndarray, cfg: PolicyConfig, phy: PhyParams) -> float:
    """CSIT-only baseline rate: backlog-independent water-filling."""
    if cfg.kind != "csit-only":
        raise ValueError(f"csit_only_rate called with a {cfg.kind!r} config")
    return csit_only_rate_from_f(_f_for(csit, phy), cfg.tradeoff_v, phy)


def no_csit_rate(cfg: PolicyConfig, backlog: float = 1.0) -> tuple[float, float]:
    """No-CSIT baseline: the configured constants while the queue is nonempty."""
    if cfg.kind != "no-csit":
        raise ValueError(f"no_csit_rate called with a {cfg.kind!r} config")
    if backlog <= 0.0:
        return (0.0, 0.0)
    return (cfg.fixed_rate, cfg.fixed_power)
