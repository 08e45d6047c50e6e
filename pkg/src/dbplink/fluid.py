"""Fluid-limit analysis of the backpressure policy.

Between bursts the conditional-mean backlog drains like
``dU/dt = -(1 - eps) rbar(U)`` where ``rbar(U)`` is the mean backpressure
rate at backlog U.  Sandwiching ``rbar`` between the closed forms
``n_F [log U + beta]^+`` (Jensen, from below) and ``n_F [log U + beta']^+``
(positive-part swap, from above) gives closed-form trajectory envelopes via
the exponential integral.  Those envelopes produce, per frame of length T:

- the leftover backlog fixed point L* (the stationary start-of-frame
  residue),
- an upper bound on the time-integrated backlog (hence, by Little's law, on
  average delay), and
- a lower bound on the time-integrated transmit power,

plus the small-V asymptotic order terms of both.

``beta`` here is the *effective* drift offset ``E[log((1-eps) f / V)]`` —
the tradeoff weight folded in — so a single scalar parameterizes the
trajectories; :func:`estimate_beta` reports the V-free moments and
:class:`FluidParams` applies the shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel
from .phy import PhyParams, f_from_noncentrality
from .specfun import EI_ARG_FLOOR, exp_integral_ei, inv_exp_integral_ei, quad_adaptive


class RegimeError(ValueError):
    """Requested quantity is undefined in this parameter regime."""


class StepSizeError(RuntimeError):
    """ODE step too coarse: Richardson halving check failed."""


# ---------------------------------------------------------------------------
# Monte Carlo quality statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QualityStats:
    """Monte Carlo summary of the quality quantile f over fresh estimates.

    ``beta``/``beta_prime`` are the V-free moments ``E[log((1-eps) f)]`` and
    ``E[(log((1-eps) f))^+]``; the cached per-draw values let dependent
    expectations (mean rate, mean power, activation fraction at a given
    backlog and tradeoff weight) be evaluated without re-sampling.
    Iterates as ``(beta, beta_prime, mean_f, std_errors)``.
    """

    beta: float
    beta_prime: float
    mean_f: float
    std_errors: dict
    f_draws: np.ndarray
    log_q: np.ndarray
    eps: float
    sigma_e2: float
    n_d: int

    def __iter__(self):
        return iter((self.beta, self.beta_prime, self.mean_f, self.std_errors))

    @property
    def n_samples(self) -> int:
        return int(self.f_draws.size)

    def beta_for(self, v: float) -> float:
        """Effective drift offset E[log((1-eps) f / V)]."""
        return self.beta - math.log(v)

    def beta_prime_for(self, v: float) -> float:
        """Effective clipped offset E[(log((1-eps) f / V))^+]."""
        return float(np.mean(np.maximum(self.log_q - math.log(v), 0.0)))

    def beta_prime_se_for(self, v: float) -> float:
        clipped = np.maximum(self.log_q - math.log(v), 0.0)
        return float(np.std(clipped) / math.sqrt(clipped.size))

    def mean_rate(self, backlog: float, v: float, n_f: int) -> float:
        """Monte Carlo conditional-mean backpressure rate at a backlog."""
        if backlog <= 0.0:
            return 0.0
        arg = math.log(backlog) - math.log(v) + self.log_q
        return float(n_f * np.mean(np.maximum(arg, 0.0)))

    def mean_power(self, backlog: float, v: float, n_f: int, p_cct: float) -> float:
        """Monte Carlo mean backpressure power at a backlog (circuit power
        counted only on draws where the policy activates)."""
        if backlog <= 0.0:
            return 0.0
        level = backlog * (1.0 - self.eps) * n_f / v - n_f / self.f_draws
        return float(np.mean(np.where(level > 0.0, level + p_cct, 0.0)))

    def activation_fraction(self, backlog: float, v: float) -> float:
        """Fraction of estimate draws on which the policy transmits."""
        if backlog <= 0.0:
            return 0.0
        return float(np.mean(math.log(backlog) - math.log(v) + self.log_q > 0.0))


def estimate_beta(phy_params: PhyParams, n_samples: int, rng: np.random.Generator,
                  profile: channel.PowerDelayProfile | None = None) -> QualityStats:
    """Monte Carlo moments of the quality quantile over fresh estimate draws.

    Draws ``n_samples`` independent estimates (true taps plus estimation
    error under a uniform power-delay profile unless one is supplied),
    evaluates the quantile f on each, and summarizes ``log((1-eps) f)``.
    ``n_samples`` must be at least 10^4 for the reported standard errors to
    be meaningful.
    """
    if n_samples < 10_000:
        raise ValueError("need n_samples >= 10000 for stable moment estimates")
    if profile is None:
        profile = channel.PowerDelayProfile.uniform(phy_params.n_d)
    err = channel.CsitErrorModel.from_sigma_e2(phy_params.sigma_e2, phy_params.n_d)

    f_parts = []
    remaining = int(n_samples)
    while remaining > 0:
        batch = min(remaining, 65536)
        taps = channel.sample_taps(profile, rng, size=batch)
        csit = taps + channel.sample_tap_errors(err, rng, size=batch)
        # the estimate restricted to the independent comb is the N_d-point
        # DFT of the estimated taps
        freq = channel.fft_radix2(csit)
        s2 = np.mean(np.abs(freq) ** 2, axis=-1)
        f_parts.append(np.asarray(f_from_noncentrality(phy_params, s2)))
        remaining -= batch
    f_draws = np.concatenate(f_parts)

    log_q = np.log((1.0 - phy_params.target_per) * f_draws)
    n = f_draws.size
    beta = float(np.mean(log_q))
    clipped = np.maximum(log_q, 0.0)
    std_errors = {
        "beta": float(np.std(log_q) / math.sqrt(n)),
        "beta_prime": float(np.std(clipped) / math.sqrt(n)),
        "mean_f": float(np.std(f_draws) / math.sqrt(n)),
    }
    return QualityStats(
        beta=beta,
        beta_prime=float(np.mean(clipped)),
        mean_f=float(np.mean(f_draws)),
        std_errors=std_errors,
        f_draws=f_draws,
        log_q=log_q,
        eps=phy_params.target_per,
        sigma_e2=phy_params.sigma_e2,
        n_d=phy_params.n_d,
    )


# ---------------------------------------------------------------------------
# parameter bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FluidParams:
    """Everything the trajectory bounds need, at one tradeoff weight V.

    ``beta``/``beta_prime`` are effective (V-folded) offsets; ``stats``
    carries the cached quantile draws for anchor expectations and the Monte
    Carlo mean rate.
    """

    beta: float
    beta_prime: float
    mean_f: float
    n_f: int
    eps: float
    v: float
    p_cct: float
    frame_s: float
    dt_s: float
    stats: QualityStats | None = None

    def __post_init__(self) -> None:
        if self.beta_prime < self.beta - 1e-12:
            raise ValueError("beta_prime must dominate beta")
        if self.mean_f <= 0.0 or self.v <= 0.0 or self.frame_s <= 0.0 or self.dt_s <= 0.0:
            raise ValueError("mean_f, v, frame_s, dt_s must be positive")

    @classmethod
    def from_stats(cls, stats: QualityStats, *, n_f: int, v: float, p_cct: float,
                   frame_s: float, dt_s: float) -> "FluidParams":
        return cls(
            beta=stats.beta_for(v),
            beta_prime=stats.beta_prime_for(v),
            mean_f=stats.mean_f,
            n_f=n_f,
            eps=stats.eps,
            v=v,
            p_cct=p_cct,
            frame_s=frame_s,
            dt_s=dt_s,
            stats=stats,
        )

    @property
    def activation_level(self) -> float:
        """Backlog below which the slow-envelope rate is zero."""
        return math.exp(-self.beta)

    def g_anchor(self, backlog: float) -> float:
        """True mean policy power at a backlog (the chord anchor)."""
        if self.stats is None:
            raise ValueError("power expectations need cached quality draws")
        return self.stats.mean_power(backlog, self.v, self.n_f, self.p_cct)

    def mc_rate(self, backlog: float) -> float:
        """Monte Carlo conditional-mean rate at a backlog."""
        if self.stats is None:
            return rate_lower(self.beta, self.n_f)(backlog)
        return self.stats.mean_rate(backlog, self.v, self.n_f)


# ---------------------------------------------------------------------------
# closed-form trajectory and ODE oracle
# ---------------------------------------------------------------------------


def traj_y(t: float, u0: float, beta: float, n_f: int, eps: float) -> float:
    """Closed-form drain trajectory from u0 under rate ``n_F (log U + beta)``.

    ``y(t) = exp[-beta + Ei^{-1}(Ei(log u0 + beta) - n_F (1-eps) e^beta t)]``;
    strictly decreasing, asymptoting to the activation level ``e^{-beta}``
    from above (held there once the Ei argument leaves the representable
    range).  Raises :class:`RegimeError` when ``log(u0) + beta <= 0``, i.e.
    the start point is already at or below the activation level.
    """
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    if u0 <= 0.0:
        raise ValueError("u0 must be positive")
    w0 = math.log(u0) + beta
    if w0 <= 0.0:
        raise RegimeError(
            f"start backlog {u0:.6g} is at or below the activation level "
            f"{math.exp(-beta):.6g}; the drain trajectory is undefined there")
    if t == 0.0:
        return u0
    arg = exp_integral_ei(w0) - n_f * (1.0 - eps) * math.exp(beta) * t
    if arg <= EI_ARG_FLOOR:
        return math.exp(-beta)
    return math.exp(-beta + inv_exp_integral_ei(arg))


def rate_lower(beta: float, n_f: int):
    """Slow envelope rate ``n_F [log U + beta]^+`` (Jensen from below)."""
    def rate(u: float) -> float:
        return n_f * max(math.log(max(u, 1e-300)) + beta, 0.0)
    return rate


def rate_upper(beta_prime: float, n_f: int):
    """Fast envelope rate ``n_F [log U + beta']^+`` (clip swap from above)."""
    return rate_lower(beta_prime, n_f)


def rate_mc(stats: QualityStats, v: float, n_f: int):
    """Monte Carlo conditional-mean rate over the cached quantile draws."""
    def rate(u: float) -> float:
        return stats.mean_rate(u, v, n_f)
    return rate


def vcts_ode_integrate(u0: float, beta: float | None, horizon: float, step: float,
                       *, n_f: int, eps: float, rate_fn=None,
                       richardson: bool = True, richardson_tol: float = 1e-4):
    """RK4 integration of the conditional-mean drain ODE.

    ``dU/dt = -(1 - eps) rate(U)`` with ``rate`` defaulting to the slow
    envelope built from ``beta``.  Serves as the independent numerical
    oracle for :func:`traj_y` and for envelope-sandwich checks with the
    Monte Carlo rate.  Returns ``(t, u)`` arrays sampled every ``step``;
    raises :class:`StepSizeError` when halving the step moves the endpoint
    by more than ``richardson_tol`` relatively.
    """
    if step <= 0.0 or horizon < 0.0:
        raise ValueError("need step > 0 and horizon >= 0")
    if rate_fn is None:
        if beta is None:
            raise ValueError("either beta or rate_fn is required")
        rate_fn = rate_lower(beta, n_f)

    def rhs(u: float) -> float:
        return -(1.0 - eps) * rate_fn(max(u, 0.0))

    def run(h: float, n_steps: int) -> np.ndarray:
        u = float(u0)
        out = np.empty(n_steps + 1)
        out[0] = u
        for i in range(n_steps):
            k1 = rhs(u)
            k2 = rhs(u + 0.5 * h * k1)
            k3 = rhs(u + 0.5 * h * k2)
            k4 = rhs(u + h * k3)
            u = max(u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), 0.0)
            out[i + 1] = u
        return out

    n_steps = max(int(math.ceil(horizon / step)), 1)
    h = horizon / n_steps
    coarse = run(h, n_steps)
    fine = run(0.5 * h, 2 * n_steps)
    if richardson:
        scale = max(abs(fine[-1]), 1e-12)
        if abs(coarse[-1] - fine[-1]) > richardson_tol * scale:
            raise StepSizeError(
                f"step {step:.3g} too coarse: endpoint moved by "
                f"{abs(coarse[-1] - fine[-1]) / scale:.2e} relative on halving")
    t = np.arange(n_steps + 1) * h
    return t, fine[::2].copy()


# ---------------------------------------------------------------------------
# leftover fixed point and per-period integrals
# ---------------------------------------------------------------------------


def leftover_fixed_point(b: float, t_frame: float, beta: float, n_f: int, eps: float,
                         tol: float = 1e-10, max_iter: int = 200) -> float:
    """Stationary start-of-frame leftover L* solving L = y(T; B + L).

    Bisection on ``G(L) = y(T; B+L) - L``; G(0) > 0 (trajectories stay
    positive) and G eventually goes negative because the drain grows with
    the start level.  The crossing is unique: dy/du0 = (log y + beta) /
    (log u0 + beta) < 1, verified on the solution.  Raises
    :class:`RegimeError` when B is at or below the activation level or no
    bracket exists.
    """
    if not b > math.exp(-beta):
        raise RegimeError(
            f"burst {b:.6g} nats is at or below the activation level "
            f"{math.exp(-beta):.6g}; the queue never drains within a frame")

    def g(l: float) -> float:
        return traj_y(t_frame, b + l, beta, n_f, eps) - l

    hi = max(traj_y(t_frame, b, beta, n_f, eps), 1e-9)
    for _ in range(200):
        if g(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise RegimeError("no bracket for the leftover fixed point (drain too weak)")
    lo = 0.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    lstar = 0.5 * (lo + hi)

    resid = abs(g(lstar))
    if resid > 1e-8:
        raise RegimeError(f"fixed-point residual {resid:.3e} exceeds 1e-8")
    w0 = math.log(b + lstar) + beta
    slope = (math.log(traj_y(t_frame, b + lstar, beta, n_f, eps)) + beta) / w0
    if not slope < 1.0:
        raise RegimeError(f"fixed-point map is not contracting (slope {slope:.6g})")
    return lstar


def iterate_leftover(b: float, t_frame: float, beta: float, n_f: int, eps: float,
                     n_periods: int, start: float = 0.0) -> np.ndarray:
    """Leftover sequence L_{m+1} = y(T; B + L_m) over consecutive frames."""
    out = np.empty(n_periods + 1)
    out[0] = start
    l = float(start)
    for m in range(n_periods):
        l = traj_y(t_frame, b + l, beta, n_f, eps)
        out[m + 1] = l
    return out


def _traj_area(u0: float, beta: float, n_f: int, eps: float, t_end: float,
               c1: float = 1.0, c0: float = 0.0, tol: float | None = None) -> float:
    """Integral of ``c1 * y(t; beta) + c0`` over [0, t_end].

    The tail where the Ei argument underflows (trajectory pinned at
    ``e^{-beta}``) is added analytically so the quadrature only ever sees
    the smooth part.
    """
    w0 = math.log(u0) + beta
    drain = n_f * (1.0 - eps) * math.exp(beta)
    t_floor = (exp_integral_ei(w0) - EI_ARG_FLOOR) / drain
    te = min(t_end, t_floor)
    if tol is None:
        tol = max(1e-10 * abs(c1) * u0 * max(t_end, 1e-12), 1e-13)
    val = quad_adaptive(lambda t: c1 * traj_y(t, u0, beta, n_f, eps) + c0, 0.0, te, tol)
    if t_floor < t_end:
        val += (c1 * math.exp(-beta) + c0) * (t_end - t_floor)
    return val


def ju_upper(u0: float, t_frame: float, params: FluidParams) -> float:
    """Upper bound on the per-frame integrated backlog, nats-seconds.

    Integrates the slow envelope from u0 over one frame.  Below the
    activation level the envelope cannot drain, so the flat rectangle
    ``u0 * T`` is returned (the relevant extension for small arrival atoms).
    """
    if u0 < 0.0:
        raise ValueError("u0 must be nonnegative")
    if t_frame <= 0.0:
        raise ValueError("t_frame must be positive")
    if u0 == 0.0:
        return 0.0
    if math.log(u0) + params.beta <= 0.0:
        return u0 * t_frame
    return _traj_area(u0, params.beta, params.n_f, params.eps, t_frame)


def jg_lower(u0: float, t_frame: float, params: FluidParams) -> float:
    """Lower bound on the per-frame integrated transmit power, power-seconds.

    The mean policy power is convex in the backlog with slope at most
    ``c1 = n_F (1-eps) / V``, so the chord through the period-start value
    ``g_anchor(u0)`` bounds it from below along the (fast-envelope) drain:
    ``integral [c1 y(t; beta') + g_anchor(u0) - c1 u0]^+ dt``.  The clamp
    point is located analytically via the trajectory's time inverse.
    """
    if u0 < 0.0:
        raise ValueError("u0 must be nonnegative")
    if t_frame <= 0.0:
        raise ValueError("t_frame must be positive")
    if u0 == 0.0:
        return 0.0
    bp = params.beta_prime
    c1 = params.n_f * (1.0 - params.eps) / params.v
    anchor = params.g_anchor(u0)
    if anchor <= 0.0:
        return 0.0
    c0 = anchor - c1 * u0
    if math.log(u0) + bp <= 0.0:
        # fast envelope cannot drain either: flat trajectory, constant integrand
        return anchor * t_frame
    if c0 >= 0.0:
        t_end = t_frame
    else:
        ystar = -c0 / c1  # integrand zero where the envelope crosses this level
        if ystar >= u0:
            return 0.0
        if ystar <= math.exp(-bp):
            t_end = t_frame  # envelope never reaches the crossing level
        else:
            t_star = (exp_integral_ei(math.log(u0) + bp)
                      - exp_integral_ei(math.log(ystar) + bp)) \
                / (params.n_f * (1.0 - params.eps) * math.exp(bp))
            t_end = min(t_frame, t_star)
    return _traj_area(u0, bp, params.n_f, params.eps, t_end, c1=c1, c0=c0)


# ---------------------------------------------------------------------------
# per-configuration bounds
# ---------------------------------------------------------------------------


def delay_upper_bound(b: float, params: FluidParams) -> float:
    """Average-delay upper bound (seconds) for deterministic bursts of b nats.

    Little's law over the stationary frame: integrated backlog at the
    stationary start level ``B + L*`` divided by the nats per frame.
    """
    if b <= 0.0:
        raise ValueError("b must be positive")
    lstar = leftover_fixed_point(b, params.frame_s, params.beta, params.n_f, params.eps)
    return ju_upper(b + lstar, params.frame_s, params) / b


def power_lower_bound(b: float, params: FluidParams) -> float:
    """Average-transmit-power lower bound for deterministic bursts of b nats."""
    if b <= 0.0:
        raise ValueError("b must be positive")
    return jg_lower(b, params.frame_s, params) / params.frame_s


@dataclass(frozen=True)
class AsymptoticTerms:
    """Small-V timescales and order expressions of the tradeoff."""

    t_d: float
    t_p: float
    delay_order: float
    power_order: float


def asymptotic_terms(b: float, params: FluidParams) -> AsymptoticTerms:
    """Burst timescales and the small-V order of delay and power.

    ``t_d``: drain time from the stationary start level down to the
    leftover-plus-activation level, via the trajectory's time inverse;
    ``t_p``: time for the tangent of the power chord to reach zero;
    ``delay_order = B^2/log(B E[f]/V) + V/E[f]`` and
    ``power_order = (B/V + P_cct) B / log(B E[f]/V)``.
    Raises :class:`RegimeError` outside the drainage regime
    ``log(B E[f]/V) > 0``.
    """
    if b <= 0.0:
        raise ValueError("b must be positive")
    x = b * params.mean_f / params.v
    if x <= 1.0:
        raise RegimeError(
            f"asymptotic regime needs log(B E[f]/V) > 0; got log({x:.6g}) <= 0")
    logx = math.log(x)
    beta = params.beta
    lstar = leftover_fixed_point(b, params.frame_s, beta, params.n_f, params.eps)
    l_delta = math.exp(-beta)
    t_d = (math.exp(-beta) / ((1.0 - params.eps) * params.n_f)) * (
        exp_integral_ei(math.log(b + lstar) + beta)
        - exp_integral_ei(math.log(lstar + l_delta) + beta))
    rbar = params.mc_rate(b)
    if rbar <= 0.0:
        raise RegimeError(f"mean rate at B={b:.6g} is zero; no burst transmission")
    t_p = params.g_anchor(b) / ((1.0 / params.v) * rbar)
    delay_order = b * b / logx + params.v / params.mean_f
    power_order = (b / params.v + params.p_cct) * b / logx
    return AsymptoticTerms(t_d=t_d, t_p=t_p, delay_order=delay_order,
                           power_order=power_order)


def random_arrival_bounds(values: np.ndarray, probs: np.ndarray,
                          params: FluidParams) -> tuple[float, float]:
    """Delay/power bounds for i.i.d. bursts from a finite table.

    The worst-case leftover ``L*_max`` (from the largest atom) starts every
    frame, so the delay bound averages ``ju(b_i + L*_max)`` over atoms and
    normalizes by the mean nats per frame; the power bound averages
    ``jg(b_i)``.  Zero-valued atoms contribute zero power and a flat
    rectangle of backlog.
    """
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    b_max = float(values.max())
    b_mean = float(np.dot(values, probs))
    if b_mean <= 0.0:
        raise ValueError("mean arrival must be positive")
    lstar_max = leftover_fixed_point(b_max, params.frame_s, params.beta,
                                     params.n_f, params.eps)
    ju = sum(p * ju_upper(float(b) + lstar_max, params.frame_s, params)
             for b, p in zip(values, probs))
    jg = sum(p * jg_lower(float(b), params.frame_s, params)
             for b, p in zip(values, probs))
    return ju / b_mean, jg / params.frame_s


@dataclass(frozen=True)
class FluidBounds:
    """Bundle of analytical outputs for one operating point."""

    leftover_fixed_point: float
    ju_upper: float
    jg_lower: float
    delay_upper_s: float
    power_lower: float
    t_d: float | None
    t_p: float | None
    delay_order: float | None
    power_order: float | None
    beta: float
    beta_prime: float
    beta_se: float
    beta_prime_se: float
    mean_f: float
    mean_f_se: float
    activation_fraction: float
    notes: tuple = ()


def compute_bounds(arrival_values, arrival_probs, params: FluidParams) -> FluidBounds:
    """Assemble all analytical outputs for one arrival model and weight V.

    Deterministic arrivals (single atom) use the per-frame bounds directly;
    tables use their probability-weighted versions with the worst-case
    leftover.  Asymptotic terms degrade to ``None`` plus a note outside the
    small-V regime instead of failing the whole bundle.
    """
    values = np.atleast_1d(np.asarray(arrival_values, dtype=np.float64))
    probs = np.atleast_1d(np.asarray(arrival_probs, dtype=np.float64))
    notes: list[str] = []
    b_max = float(values.max())
    b_mean = float(np.dot(values, probs))

    lstar = leftover_fixed_point(b_max, params.frame_s, params.beta,
                                 params.n_f, params.eps)
    if values.size == 1:
        b = float(values[0])
        ju = ju_upper(b + lstar, params.frame_s, params)
        jg = jg_lower(b, params.frame_s, params)
        delay = ju / b
        power = jg / params.frame_s
    else:
        ju = sum(p * ju_upper(float(b) + lstar, params.frame_s, params)
                 for b, p in zip(values, probs))
        jg = sum(p * jg_lower(float(b), params.frame_s, params)
                 for b, p in zip(values, probs))
        delay = ju / b_mean
        power = jg / params.frame_s

    act = 0.0
    if params.stats is not None:
        act = params.stats.activation_fraction(b_mean, params.v)
        if act == 0.0:
            notes.append("policy never activates at the mean burst size; "
                         "power bound is vacuously zero")

    try:
        terms = asymptotic_terms(b_mean, params)
        t_d, t_p = terms.t_d, terms.t_p
        delay_order, power_order = terms.delay_order, terms.power_order
    except RegimeError as exc:
        notes.append(f"asymptotic terms unavailable: {exc}")
        t_d = t_p = delay_order = power_order = None

    se = params.stats.std_errors if params.stats is not None else {}
    return FluidBounds(
        leftover_fixed_point=lstar,
        ju_upper=ju,
        jg_lower=jg,
        delay_upper_s=delay,
        power_lower=power,
        t_d=t_d,
        t_p=t_p,
        delay_order=delay_order,
        power_order=power_order,
        beta=params.beta,
        beta_prime=params.beta_prime,
        beta_se=se.get("beta", float("nan")),
        beta_prime_se=params.stats.beta_prime_se_for(params.v)
        if params.stats is not None else float("nan"),
        mean_f=params.mean_f,
        mean_f_se=se.get("mean_f", float("nan")),
        activation_fraction=act,
        notes=tuple(notes),
    )
