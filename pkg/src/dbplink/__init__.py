"""Backpressure rate/power control on a point-to-point OFDM link.

Subpackage map:

- :mod:`dbplink.specfun` -- exponential integral, Marcum Q / noncentral
  chi-square, Bessel J0, adaptive quadrature.
- :mod:`dbplink.channel` -- block-fading tap model, radix-2 FFT, CSI error
  statistics.
- :mod:`dbplink.phy` -- outage-quantile link quality, rate/power mapping,
  packet error oracle.
- :mod:`dbplink.queueing` -- slotted queue recursion and arrival models.
- :mod:`dbplink.policies` -- backpressure and baseline transmission policies.
- :mod:`dbplink.fluid` -- fluid-limit trajectories, leftover fixed point,
  delay/power bounds and asymptotic orders.
- :mod:`dbplink.sim` -- slot-level Monte Carlo engine, sweeps, drift check.
- :mod:`dbplink.config` / :mod:`dbplink.cli` -- configuration files and the
  command line front end.
"""

__version__ = "0.1.0"

from . import (channel, cli, config, fluid, phy, policies, queueing,  # noqa: F401
               sim, specfun)
