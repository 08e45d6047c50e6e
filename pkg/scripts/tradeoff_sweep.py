#!/usr/bin/env python3
"""Power-delay tradeoff of all three policies on one link.

Sweeps the backpressure weight V, the CSIT-only weight as fractions of its
critical value (the largest V that still sustains the load), and the
CSIT-free fixed power over a grid sized off the backpressure power scale.
Writes one merged rows file (simulated + analytical rows) ready to plot.

Example::

    python scripts/tradeoff_sweep.py --config configs/desk.cfg --out tradeoff.csv
"""

from __future__ import annotations

import argparse

import numpy as np

from dbplink.cli import rows_from_points, write_rows
from dbplink.config import load_config
from dbplink.fluid import estimate_beta
from dbplink.sim import sweep


def csit_only_critical_v(stats, n_f: int, eps: float, rate_nats_per_s: float) -> float:
    """Largest V at which the memoryless policy's mean service meets the load."""
    lo, hi = 1e-9, 1e9
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        service = n_f * np.mean(np.maximum(stats.log_q - np.log(mid), 0.0)) * (1.0 - eps)
        if service > rate_nats_per_s:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.cfg")
    ap.add_argument("--out", default="tradeoff.csv")
    ap.add_argument("--slots", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--parallel", type=int, default=1)
    ap.add_argument("--csit-fractions", type=float, nargs="+",
                    default=(0.3, 0.5, 0.7, 0.85))
    ap.add_argument("--power-factors", type=float, nargs="+",
                    default=(4.0, 5.5, 7.0, 9.0),
                    help="no-csit powers as multiples of the V=1 "
                         "backpressure power bound scale")
    args = ap.parse_args()

    config = load_config(args.config)
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(0x0B0D,))))
    stats = estimate_beta(config.phy_params(), config.expectation_samples, rng)

    points = sweep(config, "dbp", config.sweep_values, n_slots=args.slots,
                   base_seed=args.seed, parallelism=args.parallel, stats=stats)

    v_crit = csit_only_critical_v(stats, config.n_f, config.target_per,
                                  config.arrival_rate_nats_per_s)
    print(f"CSIT-only critical V = {v_crit:.5g}")
    points += sweep(config, "csit-only", [f * v_crit for f in args.csit_fractions],
                    n_slots=args.slots, base_seed=args.seed,
                    parallelism=args.parallel)

    dbp_powers = [pt.stats.avg_power for pt in points
                  if pt.policy == "dbp" and pt.stats is not None]
    scale = float(np.median(dbp_powers)) if dbp_powers else 1.0
    points += sweep(config, "no-csit", [f * scale for f in args.power_factors],
                    n_slots=args.slots, base_seed=args.seed,
                    parallelism=args.parallel)

    for pt in points:
        if pt.error is not None:
            print(f"  {pt.policy} @ {pt.sweep_param:g}: {pt.error}")
        else:
            st = pt.stats
            print(f"  {pt.policy:>9s} @ {pt.sweep_param:10.5g}: "
                  f"delay {st.avg_delay_s * 1e3:9.2f} ms, power {st.avg_power:10.1f}, "
                  f"PER {st.conditional_per:.4f}")
    rows = rows_from_points(points, config)
    write_rows(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
