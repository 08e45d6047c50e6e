"""Slot-level Monte Carlo engine: runs, sweeps, and the drift diagnostic.

A run composes the channel, link, queue and policy modules into the exact
slotted recursion.  Per-slot channel quantities are precomputed in fixed-size
vectorized chunks (the quantile solve dominates), then a plain Python loop
walks the slots — the loop carries only scalars, so 10^5 slots take well
under a second on top of the precompute.

Randomness: four independent substreams (taps, estimation errors,
conditional redraw errors, arrivals) spawned from one seed, so results are
bit-identical for a given (config, seed) regardless of sweep parallelism.
The chunk size is a fixed constant because the batched draws interleave the
real and imaginary parts per chunk; changing it would change sample paths.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import channel
from .config import SystemConfig
from .fluid import (FluidBounds, FluidParams, QualityStats, RegimeError,
                    compute_bounds, estimate_beta)
from .phy import f_from_noncentrality
from .policies import PolicyConfig

logger = logging.getLogger(__name__)

_CHUNK = 8192  # fixed so chunking never affects the random stream

WATCHDOG_FACTOR = 1.0e6


class SimulationUnstableError(RuntimeError):
    """Backlog exceeded the stability watchdog threshold."""


@dataclass(frozen=True)
class SimStats:
    """Post-warmup ergodic averages of one run.

    ``avg_delay_s`` is ``avg_backlog`` divided by the configured arrival
    rate in nats/s (Little's law); ``conditional_per`` counts errors only
    over transmitting slots; ``bursts`` counts maximal runs of consecutive
    transmitting slots.  ``fifo_delay_s`` is the optional per-nat tagging
    cross-check (None unless requested).
    """

    avg_backlog: float
    avg_delay_s: float
    avg_power: float
    conditional_per: float
    bursts: int
    slots_simulated: int
    seed: int
    warmup_slots: int
    tx_slots: int
    error_slots: int
    arrived_nats: float
    served_nats: float
    final_backlog: float
    fifo_delay_s: float | None = None


@dataclass(frozen=True)
class TradeoffPoint:
    """One operating point of a sweep: simulated stats plus matching bounds."""

    policy: str
    sweep_param: float
    stats: SimStats | None
    bounds: FluidBounds | None
    config_digest: str
    error: str | None = None


def config_digest(config: SystemConfig, policy: PolicyConfig) -> str:
    text = repr(config) + "|" + repr(policy)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# per-run channel precompute
# ---------------------------------------------------------------------------


def _precompute_quality(config: SystemConfig, n_slots: int,
                        rng_taps: np.random.Generator,
                        rng_err: np.random.Generator,
                        rng_redraw: np.random.Generator):
    """Per-slot (f, psi2): the estimate's quantile and the realized quality.

    The estimate restricted to the independent subcarrier comb is the
    N_d-point DFT of the estimated taps, so the full n_F response is never
    materialized.  psi2 is the realized mean-square quality of the truth
    redrawn conditionally on the estimate — the outage oracle compares it
    against the loaded threshold.
    """
    profile = config.profile()
    err = config.error_model()
    phy = config.phy_params()
    f = np.empty(n_slots)
    psi2 = np.empty(n_slots)
    done = 0
    while done < n_slots:
        m = min(_CHUNK, n_slots - done)
        taps = channel.sample_taps(profile, rng_taps, size=m)
        csit = taps + channel.sample_tap_errors(err, rng_err, size=m)
        truth = csit + channel.sample_tap_errors(err, rng_redraw, size=m)
        freq_csit = channel.fft_radix2(csit)
        freq_truth = channel.fft_radix2(truth)
        s2 = np.mean(np.abs(freq_csit) ** 2, axis=-1)
        f[done:done + m] = f_from_noncentrality(phy, s2)
        psi2[done:done + m] = np.mean(np.abs(freq_truth) ** 2, axis=-1)
        done += m
    return f, psi2


def _substreams(seed: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(4)]


# ---------------------------------------------------------------------------
# single run
# ---------------------------------------------------------------------------


def run(config: SystemConfig, policy: PolicyConfig | None = None,
        n_slots: int | None = None, seed: int | None = None,
        track_fifo: bool = False) -> SimStats:
    """Simulate one operating point; deterministic given (config, seed).

    Each slot: evaluate the policy on the estimate's quantile, load the
    minimum power for the scheduled rate, redraw the truth conditionally on
    the estimate, mark an outage when the realized quality falls below the
    loaded threshold, and advance the queue.  Statistics exclude the warmup
    prefix (``warmup_fraction`` of slots, at least 10^3).
    """
    policy = policy if policy is not None else config.policy
    n_slots = int(n_slots if n_slots is not None else config.n_slots)
    seed = int(seed if seed is not None else config.seed)
    warmup = max(int(config.warmup_fraction * n_slots), 1000)
    if n_slots <= warmup:
        raise ValueError(f"n_slots={n_slots} must exceed the warmup ({warmup} slots)")

    rng_taps, rng_err, rng_redraw, rng_arr = _substreams(seed)
    f_arr, psi2_arr = _precompute_quality(config, n_slots, rng_taps, rng_err, rng_redraw)

    spf = config.slots_per_frame
    arrival_model = config.arrival
    n_frames = n_slots // spf + 2
    from .queueing import sample_arrival
    arrivals = np.asarray(sample_arrival(arrival_model, rng_arr, size=n_frames), dtype=np.float64)

    n_f = config.n_f
    eps = config.target_per
    one_m_eps = 1.0 - eps
    p_cct = config.p_cct
    dt = config.dt_s
    kind = policy.kind
    v = policy.tradeoff_v if kind in ("dbp", "csit-only") else None
    if kind == "no-csit":
        r0 = float(policy.fixed_rate)
        p0 = float(policy.fixed_power)
        thr0 = math.inf if p0 <= 0.0 else math.expm1(r0 / n_f) * n_f / p0
    watchdog = WATCHDOG_FACTOR * max(arrival_model.mean_per_frame, 1e-9)

    u = 0.0
    sum_u = 0.0
    sum_power = 0.0
    tx_slots = 0
    err_slots = 0
    bursts = 0
    prev_tx = False
    arrived = 0.0
    served_total = 0.0
    kept = 0
    half_marks = [0.0, 0.0]  # backlog mass in the two post-warmup halves
    half_edge = warmup + (n_slots - warmup) // 2

    fifo = None
    fifo_weighted = 0.0
    fifo_nats = 0.0
    if track_fifo:
        from collections import deque
        fifo = deque()

    log = math.log
    for k in range(n_slots):
        f = f_arr[k]
        rate = 0.0
        power = 0.0
        tx = False
        if u > 0.0:
            if kind == "dbp":
                level = u * one_m_eps * f / v
                if level > 1.0:
                    rate = n_f * log(level)
                    power = (level - 1.0) * n_f / f + p_cct
                    tx = True
            elif kind == "csit-only":
                level = one_m_eps * f / v
                if level > 1.0:
                    rate = n_f * log(level)
                    power = (level - 1.0) * n_f / f + p_cct
                    tx = True
            else:
                if r0 > 0.0:
                    rate = r0
                    power = p0 + p_cct
                    tx = True

        if tx:
            # outage oracle: realized quality against the loaded threshold
            # (the threshold equals f exactly when the power was loaded for f)
            thr = f if kind != "no-csit" else thr0
            e = 1 if psi2_arr[k] < thr else 0
        else:
            e = 0

        srv = rate * (1.0 - e) * dt
        if srv > u:
            srv = u

        if k >= warmup:
            sum_u += u
            sum_power += power
            half_marks[0 if k < half_edge else 1] += u
            kept += 1
            if tx:
                tx_slots += 1
                err_slots += e
                # a transmission in progress when the window opens counts
                if not prev_tx or k == warmup:
                    bursts += 1
        prev_tx = tx

        if fifo is not None and srv > 0.0:
            remaining = srv
            while remaining > 1e-15 and fifo:
                t_in, amount = fifo[0]
                take = min(amount, remaining)
                fifo_weighted += take * ((k + 1) * dt - t_in)
                fifo_nats += take
                remaining -= take
                if take >= amount - 1e-15:
                    fifo.popleft()
                else:
                    fifo[0] = (t_in, amount - take)

        served_total += srv
        u -= srv
        if u < 0.0:
            u = 0.0
        if k % spf == 0:
            a = arrivals[k // spf]
            u += a
            arrived += a
            if fifo is not None and a > 0.0:
                fifo.append((k * dt, a))

        if u > watchdog:
            raise SimulationUnstableError(
                f"backlog {u:.3e} nats exceeded {WATCHDOG_FACTOR:.0e}x the mean "
                f"frame arrival at slot {k} (policy {kind}, seed {seed})")

    n_post = n_slots - warmup
    avg_backlog = sum_u / n_post
    rate_nps = config.arrival_rate_nats_per_s
    first, second = half_marks[0] / max(half_edge - warmup, 1), \
        half_marks[1] / max(n_slots - half_edge, 1)
    if second > 2.0 * first and second > 10.0 * arrival_model.mean_per_frame:
        logger.warning(
            "backlog still trending upward (%.4g -> %.4g nats between run halves); "
            "the arrival rate may be outside the policy's stability region",
            first, second)

    return SimStats(
        avg_backlog=avg_backlog,
        avg_delay_s=avg_backlog / rate_nps,
        avg_power=sum_power / n_post,
        conditional_per=(err_slots / tx_slots) if tx_slots else 0.0,
        bursts=bursts,
        slots_simulated=n_slots,
        seed=seed,
        warmup_slots=warmup,
        tx_slots=tx_slots,
        error_slots=err_slots,
        arrived_nats=arrived,
        served_nats=served_total,
        final_backlog=u,
        fifo_delay_s=(fifo_weighted / fifo_nats) if fifo is not None and fifo_nats > 0 else None,
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def point_seed(base_seed: int, index: int) -> int:
    """Decorrelated per-point seed; independent of execution order."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint64)[0])


def _point_policy(config: SystemConfig, family: str, value: float) -> PolicyConfig:
    if family in ("dbp", "csit-only"):
        return PolicyConfig(kind=family, tradeoff_v=float(value))
    if family == "no-csit":
        base_rate = config.no_csit_rate()
        return PolicyConfig(kind="no-csit", fixed_rate=base_rate, fixed_power=float(value))
    raise ValueError(f"unknown policy family {family!r}")


def _run_point(args) -> tuple[int, SimStats | None, str | None]:
    index, config, policy, n_slots, seed = args
    try:
        return index, run(config, policy, n_slots, seed), None
    except Exception as exc:  # noqa: BLE001 - per-point isolation is the contract
        return index, None, f"{type(exc).__name__}: {exc}"


def sweep(config: SystemConfig, policy_family: str, sweep_values,
          n_slots: int | None = None, base_seed: int | None = None,
          parallelism: int = 1, attach_bounds: bool = True,
          stats: QualityStats | None = None) -> list[TradeoffPoint]:
    """One run per sweep value with decorrelated seeds; failures isolated.

    ``dbp``/``csit-only`` sweep the tradeoff weight V; ``no-csit`` sweeps
    the fixed transmit power at the configured fixed rate.  Analytical
    bounds are attached to backpressure points (computed in the parent, so
    workers stay simulate-only).
    """
    values = [float(x) for x in sweep_values]
    if any(x <= 0.0 for x in values):
        raise ValueError("sweep values must be positive")
    n_slots = int(n_slots if n_slots is not None else config.n_slots)
    base_seed = int(base_seed if base_seed is not None else config.seed)

    jobs = []
    for i, x in enumerate(values):
        pc = _point_policy(config, policy_family, x)
        jobs.append((i, config, pc, n_slots, point_seed(base_seed, i)))

    results: dict[int, tuple[SimStats | None, str | None]] = {}
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for index, st, err in pool.map(_run_point, jobs):
                results[index] = (st, err)
    else:
        for job in jobs:
            index, st, err = _run_point(job)
            results[index] = (st, err)

    bounds_by_index: dict[int, FluidBounds | None] = {}
    if attach_bounds and policy_family == "dbp":
        if stats is None:
            rng = np.random.Generator(np.random.PCG64(
                np.random.SeedSequence(entropy=base_seed, spawn_key=(0x0B0D,))))
            stats = estimate_beta(config.phy_params(), config.expectation_samples, rng)
        for i, x in enumerate(values):
            try:
                params = FluidParams.from_stats(
                    stats, n_f=config.n_f, v=x, p_cct=config.p_cct,
                    frame_s=config.frame_s, dt_s=config.dt_s)
                bounds_by_index[i] = compute_bounds(
                    config.arrival.values, config.arrival.probs, params)
            except RegimeError as exc:
                logger.info("no analytical bounds at V=%g: %s", x, exc)
                bounds_by_index[i] = None

    points = []
    for i, x in enumerate(values):
        st, err = results[i]
        pc = _point_policy(config, policy_family, x)
        points.append(TradeoffPoint(
            policy=policy_family,
            sweep_param=x,
            stats=st,
            bounds=bounds_by_index.get(i),
            config_digest=config_digest(config, pc),
            error=err,
        ))
    return points


# ---------------------------------------------------------------------------
# drift diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DriftBin:
    """One backlog bin of the drift check (``excess`` = LHS minus RHS)."""

    u_lo: float
    u_hi: float
    count: int
    lhs_mean: float
    rhs_mean: float
    excess_mean: float
    excess_se: float
    passed: bool
    insufficient: bool


@dataclass(frozen=True)
class DriftReport:
    bins: tuple[DriftBin, ...]
    passed: bool
    violated: int
    policy: str
    n_slots: int
    seed: int
    rate_cap: float


def _mean_capped_service(u_grid: np.ndarray, f_draws: np.ndarray, v: float,
                         n_f: int, eps: float, rate_cap: float,
                         dt: float) -> np.ndarray:
    """E[min(rate(u, f), cap) * (1 - eps)] * dt on a backlog grid."""
    lq = np.log((1.0 - eps) * f_draws / v)
    out = np.empty(u_grid.size)
    block = 64
    for i in range(0, u_grid.size, block):
        g = u_grid[i:i + block]
        arg = np.log(np.maximum(g, 1e-300))[:, None] + lq[None, :]
        r = np.minimum(n_f * np.maximum(arg, 0.0), rate_cap)
        out[i:i + block] = np.mean(r, axis=1)
    out[u_grid <= 0.0] = 0.0
    return out * (1.0 - eps) * dt


def drift_check(config: SystemConfig, n_slots: int | None = None,
                seed: int | None = None, n_bins: int = 12,
                rate_cap: float | None = None, invert: bool = False,
                min_bin_count: int = 30,
                stats: QualityStats | None = None) -> DriftReport:
    """Check the quadratic-drift inequality bin-by-bin over backlog.

    Runs the (rate-capped) backpressure policy, bins slots by the backlog
    the policy saw, and compares the empirical one-slot Lyapunov drift in
    each bin against the bound constant minus backlog times the policy's
    Monte-Carlo conditional mean net service.  A bin passes unless its mean
    excess is positive by more than three standard errors; bins with fewer
    than ``min_bin_count`` slots are flagged, not failed.

    ``invert=True`` replaces the decision rule with one that transmits at
    the cap only while the backlog is *small* (below half the mean frame
    arrival) and stays silent above — a deliberately destabilized control
    whose large-backlog bins must violate the bound, since each burst
    overshoots the pivot and the queue then grows without service.
    """
    if config.policy.kind != "dbp":
        raise ValueError("the drift diagnostic applies to the backpressure policy")
    n_slots = int(n_slots if n_slots is not None else config.n_slots)
    seed = int(seed if seed is not None else config.seed)
    v = float(config.policy.tradeoff_v)
    n_f = config.n_f
    eps = config.target_per
    dt = config.dt_s
    spf = config.slots_per_frame
    if rate_cap is None:
        rate_cap = 20.0 * config.arrival_rate_nats_per_s / (1.0 - eps)
    pivot = 0.5 * config.arrival.mean_per_frame

    rng_taps, rng_err, rng_redraw, rng_arr = _substreams(seed)
    f_arr, psi2_arr = _precompute_quality(config, n_slots, rng_taps, rng_err, rng_redraw)
    from .queueing import sample_arrival
    arrivals = np.asarray(
        sample_arrival(config.arrival, rng_arr, size=n_slots // spf + 2), dtype=np.float64)

    u_trace = np.zeros(n_slots + 1)
    a_trace = np.zeros(n_slots)
    one_m_eps = 1.0 - eps
    log = math.log
    u = 0.0
    for k in range(n_slots):
        u_trace[k] = u
        f = f_arr[k]
        rate = 0.0
        if invert:
            if 0.0 < u <= pivot:
                rate = rate_cap
        elif u > 0.0:
            level = u * one_m_eps * f / v
            if level > 1.0:
                rate = min(n_f * log(level), rate_cap)
        if rate > 0.0:
            e = 1 if psi2_arr[k] < f else 0
            u = max(u - rate * (1 - e) * dt, 0.0)
        if k % spf == 0:
            a = arrivals[k // spf]
            a_trace[k] = a
            u += a
    u_trace[n_slots] = u

    if stats is None:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=seed, spawn_key=(0xD21F7,))))
        stats = estimate_beta(config.phy_params(), config.expectation_samples, rng)

    u_k = u_trace[:-1]
    u_max = float(u_k.max())
    grid = np.concatenate(([0.0], np.geomspace(max(u_max, 1.0) * 1e-7, max(u_max, 1.0), 1024)))
    srv_grid = _mean_capped_service(grid, stats.f_draws, v, n_f, eps, rate_cap, dt)
    srv_mean = np.interp(u_k, grid, srv_grid)

    a_max = config.arrival.max_per_frame
    r_max = rate_cap * dt
    const = 0.5 * (a_max * a_max + r_max * r_max)
    lhs = 0.5 * (u_trace[1:] ** 2 - u_k ** 2)
    rhs = const - u_k * (srv_mean - a_trace)
    excess = lhs - rhs

    edges = np.unique(np.quantile(u_k, np.linspace(0.0, 1.0, n_bins + 1)))
    bins = []
    violated = 0
    for i in range(len(edges) - 1):
        lo, hi = float(edges[i]), float(edges[i + 1])
        mask = (u_k >= lo) & ((u_k < hi) if i < len(edges) - 2 else (u_k <= hi))
        count = int(mask.sum())
        insufficient = count < min_bin_count
        if count == 0:
            bins.append(DriftBin(lo, hi, 0, math.nan, math.nan, math.nan,
                                 math.nan, True, True))
            continue
        d = excess[mask]
        mean_d = float(d.mean())
        se = float(d.std(ddof=1) / math.sqrt(count)) if count > 1 else math.inf
        ok = insufficient or (mean_d <= 3.0 * se)
        if not ok:
            violated += 1
        bins.append(DriftBin(lo, hi, count, float(lhs[mask].mean()),
                             float(rhs[mask].mean()), mean_d, se, ok, insufficient))

    return DriftReport(
        bins=tuple(bins),
        passed=(violated == 0),
        violated=violated,
        policy="inverted" if invert else "dbp",
        n_slots=n_slots,
        seed=seed,
        rate_cap=float(rate_cap),
    )
