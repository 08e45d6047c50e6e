"""Command-line front end: simulate, sweep, bounds, validate, self-test.

Exit codes: 0 success, 1 configuration/validation errors, 2 runtime
failures (unstable runs, I/O), 3 analytical bounds requested outside
their regime of validity.

Exported tables use one flat schema for both CSV and JSON, with one
``simulated`` row per run and one ``analytical`` row per set of fluid
bounds; ``read_rows`` loads either format back into the same dicts, so
``read_rows(p)`` after ``write_rows(rows, p)`` round-trips (floats to 12
significant digits in CSV).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, SystemConfig, load_config
from .fluid import (FluidParams, RegimeError, compute_bounds, estimate_beta)
from .sim import SimulationUnstableError, TradeoffPoint, drift_check, run, sweep
from .specfun import (NcChiSqParams, QuadratureError, bessel_j0,
                      exp_integral_ei, inv_exp_integral_ei, marcum_q,
                      ncx2_cdf, ncx2_quantile, quad_adaptive)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("source", "policy", "sweep_param", "sigma_e2", "p_cct",
               "avg_delay_s", "avg_power", "per_measured", "delay_bound_s",
               "power_bound", "slots", "seed")
_INT_COLUMNS = ("slots", "seed")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.12g" % float(x)


def rows_from_points(points: list[TradeoffPoint], config: SystemConfig) -> list[dict]:
    """Flatten sweep points into export rows, sorted for stable diffs."""
    rows = []
    for pt in points:
        base = {"policy": pt.policy, "sweep_param": pt.sweep_param,
                "sigma_e2": config.sigma_e2, "p_cct": config.p_cct}
        if pt.stats is not None:
            st = pt.stats
            rows.append({**base, "source": "simulated",
                         "avg_delay_s": st.avg_delay_s, "avg_power": st.avg_power,
                         "per_measured": st.conditional_per,
                         "delay_bound_s": None, "power_bound": None,
                         "slots": st.slots_simulated, "seed": st.seed})
        if pt.bounds is not None:
            rows.append({**base, "source": "analytical",
                         "avg_delay_s": None, "avg_power": None,
                         "per_measured": None,
                         "delay_bound_s": pt.bounds.delay_upper_s,
                         "power_bound": pt.bounds.power_lower,
                         "slots": None, "seed": None})
    rows.sort(key=lambda r: (r["policy"], r["sweep_param"], r["source"]))
    return rows


def write_rows(rows: list[dict], path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix.lower() == ".json" else "csv"
    if fmt == "json":
        payload = [{k: row.get(k) for k in CSV_COLUMNS} for row in rows]
        path.write_text(json.dumps(payload, indent=2) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown export format {fmt!r}")
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(k)) for k in CSV_COLUMNS])


def read_rows(path: str | Path) -> list[dict]:
    """Load an exported table (CSV or JSON) back into row dicts."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        raw = json.loads(path.read_text())
        return [{k: row.get(k) for k in CSV_COLUMNS} for row in raw]
    rows = []
    with path.open(newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for k in CSV_COLUMNS:
                cell = rec.get(k, "")
                if cell == "" or cell is None:
                    row[k] = None
                elif k in ("source", "policy"):
                    row[k] = cell
                elif k in _INT_COLUMNS:
                    row[k] = int(cell)
                else:
                    row[k] = float(cell)
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _policy_label(config: SystemConfig) -> str:
    p = config.policy
    if p.kind in ("dbp", "csit-only"):
        return f"{p.kind} (V = {p.tradeoff_v:g})"
    return f"no-csit (rate = {p.fixed_rate:g} nats/s, power = {p.fixed_power:g})"


def _bounds_for(config: SystemConfig, v: float, stats=None):
    if stats is None:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(entropy=config.seed, spawn_key=(0x0B0D,))))
        stats = estimate_beta(config.phy_params(), config.expectation_samples, rng)
    params = FluidParams.from_stats(stats, n_f=config.n_f, v=v, p_cct=config.p_cct,
                                    frame_s=config.frame_s, dt_s=config.dt_s)
    return stats, compute_bounds(config.arrival.values, config.arrival.probs, params)


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    stats = run(config, n_slots=args.slots, seed=args.seed)
    bounds = None
    if config.policy.kind == "dbp":
        try:
            _, bounds = _bounds_for(config, config.policy.tradeoff_v)
        except RegimeError as exc:
            logger.info("analytical bounds unavailable: %s", exc)
    if args.json:
        payload = {"stats": dataclasses.asdict(stats),
                   "bounds": dataclasses.asdict(bounds) if bounds else None}
        print(json.dumps(payload, indent=2))
    else:
        print(f"policy            {_policy_label(config)}")
        print(f"slots             {stats.slots_simulated} "
              f"(warmup {stats.warmup_slots}, seed {stats.seed})")
        print(f"avg backlog       {stats.avg_backlog:.6g} nats")
        print(f"avg delay         {stats.avg_delay_s:.6g} s")
        print(f"avg power         {stats.avg_power:.6g}")
        print(f"conditional PER   {stats.conditional_per:.4g} "
              f"(target {config.target_per:g})")
        print(f"tx slots          {stats.tx_slots} in {stats.bursts} bursts")
        if bounds is not None:
            print(f"delay bound       {bounds.delay_upper_s:.6g} s")
            print(f"power bound       {bounds.power_lower:.6g}")
    if args.out:
        pt = TradeoffPoint(policy=config.policy.kind,
                           sweep_param=(config.policy.tradeoff_v
                                        if config.policy.kind in ("dbp", "csit-only")
                                        else config.policy.fixed_power),
                           stats=stats, bounds=bounds, config_digest="")
        write_rows(rows_from_points([pt], config), args.out, args.format)
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    family = config.policy.kind
    points = sweep(config, family, config.sweep_values,
                   n_slots=args.slots, base_seed=args.seed,
                   parallelism=args.parallel)
    failures = [pt for pt in points if pt.error is not None]
    for pt in failures:
        print(f"point {pt.sweep_param:g} failed: {pt.error}", file=sys.stderr)
    rows = rows_from_points(points, config)
    if args.out:
        write_rows(rows, args.out, args.format)
        print(f"wrote {len(rows)} rows for {len(points)} {family} points to {args.out}")
    else:
        print(",".join(CSV_COLUMNS))
        for row in rows:
            print(",".join(_fmt(row.get(k)) for k in CSV_COLUMNS))
    return 2 if len(failures) == len(points) else 0


def cmd_bounds(args) -> int:
    config = load_config(args.config)
    if config.policy.kind != "dbp":
        raise ConfigError(["bounds: policy.kind must be 'dbp'"])
    v = config.policy.tradeoff_v
    stats, bounds = _bounds_for(config, v)
    if args.json:
        print(json.dumps(dataclasses.asdict(bounds), indent=2))
        return 0
    se = stats.std_errors
    print(f"quality statistics ({stats.n_samples} draws, "
          f"sigma_e2 = {config.sigma_e2:g}, eps = {config.target_per:g})")
    print(f"  E[f]                {stats.mean_f:.6g} +- {se['mean_f']:.2g}")
    print(f"  beta (V = {v:g})       {bounds.beta:.6g} +- {bounds.beta_se:.2g}")
    print(f"  beta'               {bounds.beta_prime:.6g} +- {bounds.beta_prime_se:.2g}")
    print(f"  activation fraction {bounds.activation_fraction:.4g}")
    print("fluid bounds")
    print(f"  leftover L*         {bounds.leftover_fixed_point:.6g} nats")
    print(f"  delay bound         {bounds.delay_upper_s:.6g} s")
    print(f"  power bound         {bounds.power_lower:.6g}")
    if bounds.t_d is not None:
        print(f"  t_d                 {bounds.t_d:.6g} s")
        print(f"  t_p                 {bounds.t_p:.6g}")
        print(f"  delay order         {bounds.delay_order:.6g}")
        print(f"  power order         {bounds.power_order:.6g}")
    for note in bounds.notes:
        print(f"note: {note}")
    return 0


def cmd_validate(args) -> int:
    config = load_config(args.config)
    print(f"OK: {_policy_label(config)}, n_F = {config.n_f}, N_d = {config.n_d}, "
          f"sigma_e2 = {config.sigma_e2:g}, eps = {config.target_per:g}, "
          f"{config.slots_per_frame} slots/frame, "
          f"arrivals {config.arrival_rate_nats_per_s:g} nats/s")
    return 0


def cmd_drift(args) -> int:
    config = load_config(args.config)
    report = drift_check(config, n_slots=args.slots, seed=args.seed,
                         invert=args.invert)
    for b in report.bins:
        tag = "insufficient" if b.insufficient else ("pass" if b.passed else "VIOLATED")
        print(f"  U in [{b.u_lo:10.4g}, {b.u_hi:10.4g})  n={b.count:7d}  "
              f"excess={b.excess_mean:12.4g} +- {3 * b.excess_se:10.4g}  {tag}")
    print(f"{report.policy}: {'PASS' if report.passed else 'FAIL'} "
          f"({report.violated} bins violated)")
    return 0 if report.passed else 2


# frozen reference values (50-digit library evaluations, rounded to double)
_EI_REFERENCE = (
    (0.25, -0.54254326466191373), (0.5, 0.45421990486317358),
    (1.0, 1.8951178163559368), (2.0, 4.9542343560018902),
    (5.0, 40.185275355803177), (10.0, 2492.2289762418778),
    (40.0, 6039718263611241.6), (100.0, 2.7155527448538798e+41),
)
_J0_REFERENCE = (
    (0.0, 1.0), (1.0, 0.76519768655796655), (2.5, -0.048383776468197996),
    (10.0, -0.24593576445134834), (2.4048255576957728, 0.0),
)


def cmd_selftest(_args) -> int:
    checks: list[tuple[str, bool, str]] = []

    def add(name: str, got: float, want: float, tol: float) -> None:
        err = abs(got - want) / max(abs(want), 1e-300)
        checks.append((name, err <= tol, f"got {got!r}, want {want!r}, rel {err:.2e}"))

    for x, want in _EI_REFERENCE:
        add(f"ei({x:g})", exp_integral_ei(x), want, 1e-12)
    for x in (0.5, 1.0, 3.0, 10.0, 100.0, 700.0):
        y = exp_integral_ei(x)
        add(f"inv_ei(ei({x:g}))", inv_exp_integral_ei(y), x, 1e-10)
    for x, want in _J0_REFERENCE:
        got = bessel_j0(x)
        if want == 0.0:
            checks.append((f"j0({x:g})", abs(got) < 1e-14, f"got {got!r}"))
        else:
            add(f"j0({x:g})", got, want, 1e-12)

    add("marcum_q(1, 3, 0)", marcum_q(1, 3.0, 0.0), 1.0, 0.0)
    add("marcum_q(1, 0, 2)", marcum_q(1, 0.0, 2.0), math.exp(-2.0), 1e-12)
    add("marcum_q(1, 1, 2)", marcum_q(1, 1.0, 2.0), 0.26901206003591005, 1e-11)

    # central case has the closed form -sigma_e2 * log(1 - p)
    for p in (0.01, 0.1, 0.5):
        params = NcChiSqParams(half_dof=1, noncentrality=0.0, error_variance=0.05)
        add(f"central quantile({p:g})", ncx2_quantile(p, params),
            -0.05 * math.log1p(-p), 1e-10)
    for delta in (0.0, 1.0, 40.0, 3200.0):
        params = NcChiSqParams(half_dof=4, noncentrality=delta / 8.0 * 0.05,
                               error_variance=0.05)
        back = ncx2_cdf(ncx2_quantile(0.01, params), params)
        add(f"quantile roundtrip(delta={delta:g})", back, 0.01, 1e-8)

    add("quad x^2", quad_adaptive(lambda t: t * t, 0.0, 1.0), 1.0 / 3.0, 1e-12)
    add("quad exp", quad_adaptive(math.exp, 0.0, 10.0), math.expm1(10.0), 1e-12)

    failed = [c for c in checks if not c[1]]
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:28s} {detail}")
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return 0 if not failed else 2


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - map usage errors to exit code 1
        raise ConfigError([f"{self.prog}: {message}"])


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dbplink",
                     description="Backpressure rate/power control on an "
                                 "imperfect-CSIT OFDM link: simulation, "
                                 "tradeoff sweeps and analytical bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="config file (defaults used if omitted)")
        p.add_argument("--slots", type=int, default=None, help="override mc.n_slots")
        p.add_argument("--seed", type=int, default=None, help="override mc.seed")
        if out:
            p.add_argument("--out", help="write rows to this path")
            p.add_argument("--format", choices=("csv", "json"), default=None,
                           help="export format (default: by file extension)")

    p = sub.add_parser("simulate", help="run one operating point")
    common(p)
    p.add_argument("--json", action="store_true", help="print stats as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the configured sweep values")
    common(p)
    p.add_argument("--parallel", type=int, default=1,
                   help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="analytical delay/power bounds")
    p.add_argument("--config", help="config file (defaults used if omitted)")
    p.add_argument("--json", action="store_true", help="print bounds as JSON")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("validate", help="check a config file")
    p.add_argument("--config", help="config file (defaults used if omitted)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("drift", help="Lyapunov drift diagnostic")
    common(p, out=False)
    p.add_argument("--invert", action="store_true",
                   help="run the destabilized negative control")
    p.set_defaults(func=cmd_drift)

    p = sub.add_parser("specfun-selftest",
                       help="check the special-function kernels against "
                            "frozen reference values")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"error: {line}", file=sys.stderr)
        return 1
    except RegimeError as exc:
        print(f"error: outside the analytical regime: {exc}", file=sys.stderr)
        return 3
    except (SimulationUnstableError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
