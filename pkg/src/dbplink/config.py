"""System configuration: flat ``section.key = value`` files with defaults.

One config object carries everything a run needs — link geometry, slot
timing, CSI error model (direct variance or pilot-derived), arrivals,
policy, and Monte-Carlo controls.  Parsing and validation collect *all*
problems before raising, so a bad file reports every offending line at
once.  Unspecified keys fall back to the wideband defaults in
``DEFAULTS`` (1024 subcarriers, 16 taps, 5 ms slots, 100 ms frames).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import CsitErrorModel, PowerDelayProfile
from .phy import PhyParams
from .policies import POLICY_KINDS, PolicyConfig
from .queueing import ArrivalModel

ARRIVAL_UNITS = ("nats_per_second", "nats_per_slot")


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_INT_KEYS = {"link.n_f", "link.n_d", "mc.n_slots", "mc.seed", "mc.expectation_samples"}
_FLOAT_KEYS = {
    "link.bandwidth_hz", "link.target_per", "time.dt_s", "time.frame_s",
    "csit.sigma_e2", "csit.pilot_snr", "csit.doppler_hz", "csit.duplex_delay_s",
    "power.p_cct", "arrival.mean", "policy.v", "policy.fixed_rate",
    "policy.fixed_power", "policy.rate_margin", "mc.warmup_fraction",
}
_LIST_KEYS = {"channel.tap_variances", "arrival.values", "arrival.probs", "sweep.values"}
_STR_KEYS = {"arrival.kind", "arrival.unit", "policy.kind"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _LIST_KEYS | _STR_KEYS

DEFAULTS: dict = {
    "link.n_f": 1024,
    "link.bandwidth_hz": 10e6,
    "link.n_d": 16,
    "link.target_per": 0.01,
    "time.dt_s": 0.005,
    "time.frame_s": 0.1,
    "csit.sigma_e2": 0.05,
    "power.p_cct": 0.0,
    "arrival.kind": "deterministic",
    "arrival.unit": "nats_per_second",
    "arrival.mean": 1000.0,
    "policy.kind": "dbp",
    "policy.v": 1.0,
    "policy.rate_margin": 1.5,
    "sweep.values": (1.0, 2.0, 4.0, 8.0, 16.0, 32.0),
    "mc.n_slots": 100_000,
    "mc.seed": 20260814,
    "mc.warmup_fraction": 0.1,
    "mc.expectation_samples": 100_000,
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a raw dict; '#' starts a comment."""
    raw: dict = {}
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
            continue
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            errors.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        if key in raw:
            errors.append(f"{source}:{lineno}: duplicate key {key!r}")
            continue
        try:
            if key in _INT_KEYS:
                raw[key] = int(value)
            elif key in _FLOAT_KEYS:
                raw[key] = float(value)
            elif key in _LIST_KEYS:
                raw[key] = tuple(float(tok) for tok in value.split(",") if tok.strip())
            else:
                raw[key] = value
        except ValueError:
            errors.append(f"{source}:{lineno}: cannot parse value for {key!r}: {value!r}")
    if errors:
        raise ConfigError(errors)
    return raw


@dataclass(frozen=True)
class SystemConfig:
    """Fully validated system description for one link.

    Arrivals are stored per *frame* in nats regardless of the unit they
    were written in; ``arrival_unit`` records the original convention.
    ``sigma_e2`` below is the total estimation-error energy actually in
    effect (derived from the pilot model when one was configured).
    """

    n_f: int
    bandwidth_hz: float
    n_d: int
    target_per: float
    dt_s: float
    frame_s: float
    tap_variances: tuple
    sigma_e2_direct: float | None
    pilot_snr: float | None
    doppler_hz: float | None
    duplex_delay_s: float | None
    p_cct: float
    arrival: ArrivalModel
    arrival_unit: str
    policy: PolicyConfig
    rate_margin: float
    sweep_values: tuple
    n_slots: int
    seed: int
    warmup_fraction: float
    expectation_samples: int

    @property
    def slots_per_frame(self) -> int:
        return round(self.frame_s / self.dt_s)

    @property
    def arrival_rate_nats_per_s(self) -> float:
        return self.arrival.mean_per_frame / self.frame_s

    def profile(self) -> PowerDelayProfile:
        return PowerDelayProfile(np.asarray(self.tap_variances, dtype=np.float64))

    def error_model(self) -> CsitErrorModel:
        if self.sigma_e2_direct is not None:
            return CsitErrorModel.from_sigma_e2(self.sigma_e2_direct, self.n_d)
        return CsitErrorModel.from_pilot(
            self.pilot_snr, self.doppler_hz, self.duplex_delay_s, self.profile())

    @property
    def sigma_e2(self) -> float:
        return float(self.error_model().sigma_e2)

    def phy_params(self) -> PhyParams:
        return PhyParams(n_f=self.n_f, target_per=self.target_per,
                         sigma_e2=self.sigma_e2, circuit_power=self.p_cct,
                         n_d=self.n_d)

    def no_csit_rate(self) -> float:
        """Fixed rate (nats/s) for the CSIT-free baseline."""
        if self.policy.kind == "no-csit" and self.policy.fixed_rate is not None:
            return float(self.policy.fixed_rate)
        return self.rate_margin * self.arrival_rate_nats_per_s


def build_config(raw: dict) -> SystemConfig:
    """Validate a raw key dict against every constraint; raise with all hits."""
    merged = dict(DEFAULTS)
    # a pilot triple or an iid table replaces the corresponding default
    if {"csit.pilot_snr", "csit.doppler_hz", "csit.duplex_delay_s"} & raw.keys():
        merged.pop("csit.sigma_e2", None)
    if raw.get("arrival.kind") == "iid":
        merged.pop("arrival.mean", None)
    merged.update(raw)
    errors: list[str] = []

    def get(key, default=None):
        return merged.get(key, default)

    n_f = get("link.n_f")
    n_d = get("link.n_d")
    if n_f < 2 or (n_f & (n_f - 1)) != 0:
        errors.append(f"link.n_f: must be a power of two >= 2 (got {n_f})")
    if n_d < 1:
        errors.append(f"link.n_d: must be >= 1 (got {n_d})")
    elif n_f % n_d != 0:
        errors.append(f"link.n_d: must divide link.n_f (got {n_d} vs {n_f})")
    eps = get("link.target_per")
    if not 0.0 < eps < 1.0:
        errors.append(f"link.target_per: must lie in (0, 1) (got {eps})")
    if get("link.bandwidth_hz") <= 0.0:
        errors.append("link.bandwidth_hz: must be positive")

    dt = get("time.dt_s")
    frame = get("time.frame_s")
    spf = 0
    if dt <= 0.0:
        errors.append(f"time.dt_s: must be positive (got {dt})")
    if frame <= 0.0:
        errors.append(f"time.frame_s: must be positive (got {frame})")
    if dt > 0.0 and frame > 0.0:
        spf = round(frame / dt)
        if spf < 1 or abs(spf * dt - frame) > 1e-9 * frame:
            errors.append(
                f"time.frame_s: must be an integer number of slots "
                f"(frame_s/dt_s = {frame / dt:.6g})")
            spf = 0

    taps = get("channel.tap_variances")
    if taps is None and n_d >= 1:
        taps = tuple([1.0 / n_d] * n_d)
    if taps is not None:
        if len(taps) != n_d:
            errors.append(
                f"channel.tap_variances: need exactly link.n_d = {n_d} entries "
                f"(got {len(taps)})")
        elif any(x < 0.0 for x in taps):
            errors.append("channel.tap_variances: entries must be nonnegative")
        elif sum(taps) <= 0.0:
            errors.append("channel.tap_variances: total power must be positive")

    sigma_direct = get("csit.sigma_e2")
    pilot = tuple(get(k) for k in ("csit.pilot_snr", "csit.doppler_hz", "csit.duplex_delay_s"))
    have_pilot = [p is not None for p in pilot]
    if any(have_pilot) and not all(have_pilot):
        errors.append("csit: pilot_snr, doppler_hz and duplex_delay_s must be given together")
    if sigma_direct is not None and any(have_pilot):
        errors.append("csit: give either sigma_e2 or the pilot triple, not both")
    if sigma_direct is None and not any(have_pilot):
        errors.append("csit: one of sigma_e2 or the pilot triple is required")
    if sigma_direct is not None and sigma_direct <= 0.0:
        errors.append(f"csit.sigma_e2: must be positive (got {sigma_direct})")
    if all(have_pilot):
        if pilot[0] < 0.0:
            errors.append("csit.pilot_snr: must be nonnegative")
        if pilot[1] < 0.0:
            errors.append("csit.doppler_hz: must be nonnegative")
        if pilot[2] < 0.0:
            errors.append("csit.duplex_delay_s: must be nonnegative")

    p_cct = get("power.p_cct")
    if p_cct < 0.0:
        errors.append(f"power.p_cct: must be nonnegative (got {p_cct})")

    unit = get("arrival.unit")
    if unit not in ARRIVAL_UNITS:
        errors.append(f"arrival.unit: must be one of {ARRIVAL_UNITS} (got {unit!r})")
        unit = "nats_per_second"

    def to_frame(x: float) -> float:
        return x * frame if unit == "nats_per_second" else x * spf

    kind = get("arrival.kind")
    arrival = None
    if kind == "deterministic":
        mean = get("arrival.mean")
        if mean is None or mean <= 0.0:
            errors.append(f"arrival.mean: must be positive (got {mean})")
        elif spf >= 1:
            arrival = ArrivalModel.deterministic(to_frame(mean))
    elif kind == "iid":
        values = get("arrival.values")
        probs = get("arrival.probs")
        if values is None or probs is None:
            errors.append("arrival: iid arrivals need both arrival.values and arrival.probs")
        elif spf >= 1:
            try:
                arrival = ArrivalModel.iid_table([to_frame(x) for x in values], probs)
            except ValueError as exc:
                errors.append(f"arrival: {exc}")
            else:
                if arrival.mean_per_frame <= 0.0:
                    errors.append("arrival: mean arrival must be positive")
                    arrival = None
    else:
        errors.append(f"arrival.kind: must be 'deterministic' or 'iid' (got {kind!r})")

    pkind = get("policy.kind")
    policy = None
    if pkind not in POLICY_KINDS:
        errors.append(f"policy.kind: must be one of {POLICY_KINDS} (got {pkind!r})")
    else:
        try:
            if pkind in ("dbp", "csit-only"):
                v = get("policy.v")
                if v is None or v <= 0.0:
                    errors.append(f"policy.v: must be positive (got {v})")
                else:
                    policy = PolicyConfig(kind=pkind, tradeoff_v=float(v))
            else:
                fr = get("policy.fixed_rate")
                fp = get("policy.fixed_power")
                if fp is None or fp <= 0.0:
                    errors.append(f"policy.fixed_power: required and positive for "
                                  f"the no-csit policy (got {fp})")
                elif fr is not None and fr <= 0.0:
                    errors.append(f"policy.fixed_rate: must be positive (got {fr})")
                else:
                    margin = get("policy.rate_margin")
                    rate = fr
                    if rate is None and arrival is not None and frame > 0.0:
                        rate = margin * arrival.mean_per_frame / frame
                    if rate is not None:
                        policy = PolicyConfig(kind="no-csit", fixed_rate=float(rate),
                                              fixed_power=float(fp))
        except ValueError as exc:
            errors.append(f"policy: {exc}")

    margin = get("policy.rate_margin")
    if margin <= 0.0:
        errors.append(f"policy.rate_margin: must be positive (got {margin})")
    sweep_values = tuple(get("sweep.values"))
    if not sweep_values or any(x <= 0.0 for x in sweep_values):
        errors.append("sweep.values: need at least one positive value")

    n_slots = get("mc.n_slots")
    if n_slots < 2000:
        errors.append(f"mc.n_slots: must be at least 2000 (got {n_slots})")
    seed = get("mc.seed")
    if seed < 0:
        errors.append(f"mc.seed: must be nonnegative (got {seed})")
    wf = get("mc.warmup_fraction")
    if not 0.0 <= wf < 1.0:
        errors.append(f"mc.warmup_fraction: must lie in [0, 1) (got {wf})")
    n_exp = get("mc.expectation_samples")
    if n_exp < 10_000:
        errors.append(f"mc.expectation_samples: must be at least 10000 (got {n_exp})")

    if not errors and sigma_direct is None:
        # pilot-derived model: the derived total must still be usable
        trial = CsitErrorModel.from_pilot(pilot[0], pilot[1], pilot[2],
                                          PowerDelayProfile(np.asarray(taps)))
        if trial.sigma_e2 <= 0.0:
            errors.append("csit: the pilot model derives a zero error variance; "
                          "the quality quantile needs a positive sigma_e2")

    if errors:
        raise ConfigError(errors)

    return SystemConfig(
        n_f=n_f, bandwidth_hz=float(get("link.bandwidth_hz")), n_d=n_d,
        target_per=eps, dt_s=dt, frame_s=frame, tap_variances=tuple(taps),
        sigma_e2_direct=sigma_direct, pilot_snr=pilot[0], doppler_hz=pilot[1],
        duplex_delay_s=pilot[2], p_cct=p_cct, arrival=arrival, arrival_unit=unit,
        policy=policy, rate_margin=margin, sweep_values=sweep_values,
        n_slots=n_slots, seed=seed, warmup_fraction=wf,
        expectation_samples=n_exp,
    )


def load_config(path: str | Path | None = None, text: str | None = None) -> SystemConfig:
    """Build a validated config from a file path, literal text, or defaults."""
    if path is not None and text is not None:
        raise ValueError("pass a path or text, not both")
    if path is not None:
        text = Path(path).read_text()
        source = str(path)
    else:
        source = "<config>"
    raw = parse_config_text(text, source) if text is not None else {}
    return build_config(raw)
