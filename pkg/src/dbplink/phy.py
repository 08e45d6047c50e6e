"""Link abstraction: outage-quantile quality, rate/power mapping, packet errors.

The transmitter schedules a rate against an imperfect channel estimate.  Its
risk control is the quantile ``f``: the level the realized mean-square
channel quality (on the independent subcarrier comb) exceeds with
probability ``1 - eps`` given the estimate.  Loading the minimum power for
the scheduled rate at that quality level makes the conditional packet error
probability equal to ``eps`` by construction.

Units: rates are nats/s with the symbol duration folded into the subcarrier
count normalization; power is linear scale throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .specfun import NcChiSqParams, ncx2_quantile


@dataclass(frozen=True)
class PhyParams:
    """Static link parameters.

    ``n_f``: number of subcarriers (power of two);
    ``target_per``: per-packet error probability eps in (0, 1);
    ``sigma_e2``: total CSI estimation-error variance;
    ``circuit_power``: constant drain while a burst is on the air;
    ``n_d``: number of independent diversity branches (channel taps).
    """

    n_f: int
    target_per: float
    sigma_e2: float
    circuit_power: float
    n_d: int

    def __post_init__(self) -> None:
        if self.n_f < 1:
            raise ValueError("n_f must be positive")
        if not 0.0 < self.target_per < 1.0:
            raise ValueError("target_per must lie strictly inside (0, 1)")
        if self.sigma_e2 <= 0.0:
            raise ValueError("sigma_e2 must be positive")
        if self.circuit_power < 0.0:
            raise ValueError("circuit_power must be nonnegative")
        if self.n_d < 1:
            raise ValueError("n_d must be positive")


def noncentrality(csit: np.ndarray, i_b: np.ndarray) -> np.ndarray:
    """Mean-square estimate s^2 = (1/N_d) sum_{n in I_B} |Hhat_n|^2."""
    csit = np.asarray(csit)
    sel = csit[..., np.asarray(i_b, dtype=np.intp)]
    return np.mean(np.abs(sel) ** 2, axis=-1)


def f_quality(params: PhyParams, csit: np.ndarray, i_b: np.ndarray):
    """Quality quantile f for one estimate (or a batch of estimates).

    ``f`` solves ``Pr[psi^2 < f | estimate] = target_per`` where psi^2 is
    the realized mean-square quality on the branch comb ``i_b``; under the
    tap-domain error model psi^2 given the estimate is a scaled noncentral
    chi-square with ``2 N_d`` degrees of freedom.
    """
    i_b = np.asarray(i_b)
    if i_b.shape[-1] != params.n_d:
        raise ValueError(f"expected {params.n_d} branch indices, got {i_b.shape[-1]}")
    return f_from_noncentrality(params, noncentrality(csit, i_b))


def f_from_noncentrality(params: PhyParams, s2):
    """Quality quantile from a precomputed mean-square estimate s^2."""
    p = NcChiSqParams(params.n_d, s2, params.sigma_e2)
    out = ncx2_quantile(params.target_per, p)
    if np.isscalar(s2) or np.ndim(s2) == 0:
        return float(out)
    return out


def tx_power(rate, f, n_f: int):
    """Minimum transmission power for a rate at quality level f.

    ``P_tx = (e^{rate/n_F} - 1) n_F / f`` — the waterfilling-free uniform
    allocation over ``n_F`` subcarriers of an equivalent flat channel with
    per-subcarrier gain f.  Convex and increasing in rate, 0 at rate 0.
    """
    rate = np.asarray(rate, dtype=np.float64)
    out = np.expm1(rate / n_f) * n_f / np.asarray(f, dtype=np.float64)
    if out.ndim == 0:
        return float(out)
    return out


def total_power(rate, f, params: PhyParams):
    """Transmission plus circuit power; exactly 0 when no burst is sent."""
    rate = np.asarray(rate, dtype=np.float64)
    out = np.where(rate > 0.0, tx_power(rate, f, params.n_f) + params.circuit_power, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def mutual_information(true_channel: np.ndarray, p_tx: float, n_f: int) -> float:
    """Achievable sum rate sum_n log(1 + p_tx |H_n|^2 / n_F) in nats/s."""
    h = np.asarray(true_channel)
    if h.shape[-1] != n_f:
        raise ValueError(f"channel vector length {h.shape[-1]} != n_F {n_f}")
    gains = np.abs(h) ** 2
    out = np.sum(np.log1p(p_tx * gains / n_f), axis=-1)
    if np.ndim(out) == 0:
        return float(out)
    return out


def packet_error(rate: float, true_channel: np.ndarray, p_tx: float, n_f: int) -> int:
    """1 iff the scheduled rate exceeds the realized mutual information."""
    mi = mutual_information(true_channel, p_tx, n_f)
    out = np.asarray(rate > mi, dtype=np.int64)
    if out.ndim == 0:
        return int(out)
    return out


def realized_quality(freq: np.ndarray, i_b: np.ndarray) -> np.ndarray:
    """Realized mean-square quality psi^2 = (1/N_d) sum_{n in I_B} |H_n|^2."""
    return noncentrality(freq, i_b)


def quality_threshold(rate, p_tx, n_f: int):
    """Quality level below which a transmission at (rate, p_tx) is in outage.

    A flat-equivalent channel with per-subcarrier gain psi^2 carries the
    rate iff ``n_F log(1 + p_tx psi^2 / n_F) >= rate``, i.e. iff
    ``psi^2 >= (e^{rate/n_F} - 1) n_F / p_tx``.  When ``p_tx`` was loaded by
    :func:`tx_power` for quality level f, the threshold equals f exactly.
    """
    rate = np.asarray(rate, dtype=np.float64)
    out = np.expm1(rate / n_f) * n_f / np.asarray(p_tx, dtype=np.float64)
    if out.ndim == 0:
        return float(out)
    return out
