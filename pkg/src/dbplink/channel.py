"""Block-fading multipath channel with imperfect transmitter-side CSI.

The physical model: ``N_d`` independent circularly-symmetric complex Gaussian
taps with a power-delay profile, observed through a noisy/outdated estimator.
The frequency response on ``n_F`` subcarriers is the zero-padded DFT of the
taps; the estimate error on each tap is CSCG with a per-tap variance derived
from pilot SNR and Doppler, and the true taps conditioned on the estimate are
``estimated taps + fresh error draw``.

Everything here accepts leading batch axes: a shape ``(..., N_d)`` tap array
maps to a shape ``(..., n_F)`` frequency response.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .specfun import bessel_j0

logger = logging.getLogger(__name__)


def _as_power_of_two(n: int, what: str) -> int:
    n = int(n)
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"{what} must be a positive power of two, got {n}")
    return n


@dataclass(frozen=True)
class PowerDelayProfile:
    """Per-tap variances sigma_l^2 of the CSCG channel taps."""

    tap_variances: np.ndarray

    def __post_init__(self) -> None:
        v = np.atleast_1d(np.asarray(self.tap_variances, dtype=np.float64))
        if v.ndim != 1 or v.size < 1:
            raise ValueError("tap_variances must be a nonempty 1-d array")
        if np.any(v < 0.0):
            raise ValueError("tap variances must be nonnegative")
        object.__setattr__(self, "tap_variances", v)

    @property
    def n_taps(self) -> int:
        return int(self.tap_variances.size)

    @property
    def total_power(self) -> float:
        return float(self.tap_variances.sum())

    @classmethod
    def uniform(cls, n_taps: int, total_power: float = 1.0) -> "PowerDelayProfile":
        if n_taps < 1:
            raise ValueError("need at least one tap")
        return cls(np.full(n_taps, total_power / n_taps))


@dataclass(frozen=True)
class CsitErrorModel:
    """Per-tap CSI estimation-error variances sigma_{h,l}^2."""

    per_tap_error_variance: np.ndarray

    def __post_init__(self) -> None:
        v = np.atleast_1d(np.asarray(self.per_tap_error_variance, dtype=np.float64))
        if v.ndim != 1 or v.size < 1:
            raise ValueError("per_tap_error_variance must be a nonempty 1-d array")
        if np.any(v < 0.0):
            raise ValueError("error variances must be nonnegative")
        object.__setattr__(self, "per_tap_error_variance", v)

    @property
    def sigma_e2(self) -> float:
        """Total estimation-error variance, summed over taps."""
        return float(self.per_tap_error_variance.sum())

    @classmethod
    def from_sigma_e2(cls, sigma_e2: float, n_taps: int) -> "CsitErrorModel":
        """Split a directly specified total error variance evenly over taps."""
        if sigma_e2 < 0.0:
            raise ValueError("sigma_e2 must be nonnegative")
        return cls(np.full(n_taps, sigma_e2 / n_taps))

    @classmethod
    def from_pilot(cls, pilot_snr: float, doppler_hz: float, duplex_delay_s: float,
                   profile: PowerDelayProfile) -> "CsitErrorModel":
        """Derive per-tap error variances, capped at the tap variances.

        Past the first zero of J0 the raw formula can exceed the tap
        variance (the outdated estimate is anticorrelated with the truth);
        an error variance above the prior variance would mean the estimator
        is worse than ignoring the pilot, so the cap treats such an estimate
        as uninformative and logs a warning.
        """
        var = []
        for s2 in profile.tap_variances:
            raw = derive_error_variance(pilot_snr, doppler_hz, duplex_delay_s, float(s2))
            if raw > s2:
                logger.warning(
                    "per-tap error variance %.6g exceeds tap variance %.6g; "
                    "capping (estimate treated as uninformative)", raw, s2)
                raw = float(s2)
            var.append(raw)
        return cls(np.array(var))


def derive_error_variance(pilot_snr: float, doppler_hz: float,
                          duplex_delay_s: float, tap_variance: float) -> float:
    """Estimation-error variance of one tap under MMSE pilot estimation.

    ``sigma_{h,l}^2 = sigma_l^2 (1 - rho)`` with the retained fraction
    ``rho = (E_p sigma_l^2 / (E_p sigma_l^2 + 1)) * J0(2 pi f_D tau)``
    combining the pilot-estimation gain with Jakes temporal decorrelation
    over the feedback delay.  Clamped below at 0; values above the tap
    variance (possible once the Doppler correlation goes negative) are
    returned as-is and capped by :meth:`CsitErrorModel.from_pilot`.
    """
    if pilot_snr < 0.0:
        raise ValueError("pilot_snr must be nonnegative")
    if tap_variance < 0.0:
        raise ValueError("tap_variance must be nonnegative")
    gain = pilot_snr * tap_variance / (pilot_snr * tap_variance + 1.0)
    corr = bessel_j0(2.0 * math.pi * doppler_hz * duplex_delay_s)
    return max(tap_variance * (1.0 - gain * corr), 0.0)


@dataclass(frozen=True)
class ChannelDraw:
    """One joint draw of true taps, estimated taps and their DFTs.

    ``taps``/``csit_taps`` have shape ``(..., N_d)``; ``freq_true`` and
    ``freq_csit`` have shape ``(..., n_F)``.  A draw is "partial" until
    :func:`sample_csit` fills in the estimate fields.
    """

    taps: np.ndarray
    freq_true: np.ndarray
    csit_taps: np.ndarray | None = None
    freq_csit: np.ndarray | None = None


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _sample_cscg(variances: np.ndarray, rng: np.random.Generator, size=None) -> np.ndarray:
    """CSCG vector with the given per-component variances; leading axes from size."""
    variances = np.asarray(variances, dtype=np.float64)
    shape = ((size,) if isinstance(size, int) else tuple(size or ())) + variances.shape
    std = np.sqrt(variances / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * std


def sample_taps(profile: PowerDelayProfile, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw channel taps ~ CSCG(0, sigma_l^2); zero-variance entries are exactly 0."""
    return _sample_cscg(profile.tap_variances, rng, size)


def sample_tap_errors(err: CsitErrorModel, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw estimation errors ~ CSCG(0, sigma_{h,l}^2)."""
    return _sample_cscg(err.per_tap_error_variance, rng, size)


def true_draw(profile: PowerDelayProfile, n_f: int, rng: np.random.Generator,
              size=None) -> ChannelDraw:
    """Partial draw: true taps and their frequency response, no estimate yet."""
    taps = sample_taps(profile, rng, size)
    return ChannelDraw(taps=taps, freq_true=taps_to_freq(taps, n_f))


def sample_csit(draw: ChannelDraw, err: CsitErrorModel, rng: np.random.Generator) -> ChannelDraw:
    """Complete a partial draw with an imperfect estimate of its taps.

    Draws per-tap errors ~ CSCG(0, sigma_{h,l}^2), sets
    ``csit_taps = taps + errors`` and ``freq_csit`` to their DFT; generating
    the error in the tap domain reproduces the frequency-domain error
    correlation ``sum_l sigma_{h,l}^2 e^{-j 2 pi l (n1-n2) / n_F}`` exactly.
    """
    taps = np.asarray(draw.taps)
    n_f = int(np.asarray(draw.freq_true).shape[-1])
    csit = taps + sample_tap_errors(err, rng, size=taps.shape[:-1])
    return replace(draw, csit_taps=csit, freq_csit=taps_to_freq(csit, n_f))


def sample_conditional_taps(csit_taps: np.ndarray, err: CsitErrorModel,
                            rng: np.random.Generator) -> np.ndarray:
    """True taps conditioned on the estimate: estimate plus a fresh error draw.

    The error is CSCG and independent of the estimate under the MMSE
    decomposition, so conditioning the truth on the estimate just redraws the
    error term around the estimated taps.
    """
    csit_taps = np.asarray(csit_taps)
    return csit_taps + sample_tap_errors(err, rng, size=csit_taps.shape[:-1])


def draw_channel(profile: PowerDelayProfile, err: CsitErrorModel, n_f: int,
                 rng: np.random.Generator, size=None) -> ChannelDraw:
    """Joint draw of truth and estimate with both frequency responses."""
    return sample_csit(true_draw(profile, n_f, rng, size), err, rng)


# ---------------------------------------------------------------------------
# DFT machinery
# ---------------------------------------------------------------------------

_REV_CACHE: dict[int, np.ndarray] = {}


def _bit_reversal(n: int) -> np.ndarray:
    perm = _REV_CACHE.get(n)
    if perm is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.intp)
        for i in range(1, n):
            perm[i] = (perm[i >> 1] >> 1) | ((i & 1) << (bits - 1))
        _REV_CACHE[n] = perm
    return perm


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    The last-axis length must be a power of two.  Matches the unnormalized
    DFT convention ``X_k = sum_l x_l e^{-j 2 pi l k / n}``.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = _as_power_of_two(x.shape[-1], "FFT length")
    out = np.ascontiguousarray(x[..., _bit_reversal(n)])
    half = 1
    while half < n:
        tw = np.exp(-1j * math.pi * np.arange(half) / half)
        v = out.reshape(out.shape[:-1] + (n // (2 * half), 2, half))
        even = v[..., 0, :].copy()
        odd = v[..., 1, :] * tw
        v[..., 0, :] = even + odd
        v[..., 1, :] = even - odd
        half *= 2
    return out


def dft_direct(taps: np.ndarray, n_f: int) -> np.ndarray:
    """O(n_F * N_d) reference DFT of zero-padded taps (test oracle/fallback)."""
    taps = np.asarray(taps, dtype=np.complex128)
    n_d = taps.shape[-1]
    l = np.arange(n_d)
    k = np.arange(int(n_f))
    basis = np.exp(-2j * math.pi * np.outer(l, k) / float(n_f))
    return taps @ basis


def taps_to_freq(taps: np.ndarray, n_f: int) -> np.ndarray:
    """Frequency response H_n = sum_l h_l e^{-j 2 pi l n / n_F} on n_F bins.

    Zero-pads the taps to length ``n_F`` and runs the radix-2 FFT; ``n_F``
    must be a power of two at least as long as the tap vector.
    """
    taps = np.asarray(taps, dtype=np.complex128)
    n_f = _as_power_of_two(n_f, "n_F")
    if taps.shape[-1] > n_f:
        raise ValueError(f"more taps ({taps.shape[-1]}) than subcarriers ({n_f})")
    if taps.shape[-1] == n_f:
        padded = taps
    else:
        padded = np.zeros(taps.shape[:-1] + (n_f,), dtype=np.complex128)
        padded[..., : taps.shape[-1]] = taps
    return fft_radix2(padded)


def independent_subcarrier_set(n_f: int, n_d: int) -> np.ndarray:
    """Indices {0, n_F/N_d, 2 n_F/N_d, ...} of N_d mutually independent bins.

    With ``N_d`` uniform-variance taps, the frequency response restricted to
    this comb equals the N_d-point DFT of the taps, whose components are
    i.i.d. CSCG — the decorrelated diversity branches the outage quantile
    law is built on.  Requires ``n_d`` to divide ``n_f``.
    """
    n_f = int(n_f)
    n_d = int(n_d)
    if n_d < 1 or n_f % n_d != 0:
        raise ValueError(f"N_d ({n_d}) must divide n_F ({n_f})")
    return np.arange(n_d) * (n_f // n_d)
