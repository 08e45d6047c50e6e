"""Slot/frame timeline, arrival processes and the backlog recursion.

Frames of length ``T`` carry one burst each; the transmitter works in slots
of length ``dt`` (``T/dt`` an integer).  The backlog is a fluid quantity in
nats: a slot serves ``min(U, rate * (1 - error) * dt)`` and a frame-boundary
slot additionally injects its burst after service.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ArrivalModel:
    """Per-frame burst size distribution.

    ``kind`` is ``deterministic`` (single atom) or ``iid-general``
    (discrete table).  Values are nats per frame.
    """

    kind: str
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        probs = np.atleast_1d(np.asarray(self.probs, dtype=np.float64))
        if self.kind not in ("deterministic", "iid-general"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if values.shape != probs.shape or values.ndim != 1:
            raise ValueError("values and probs must be 1-d arrays of equal length")
        if self.kind == "deterministic" and values.size != 1:
            raise ValueError("deterministic arrivals take a single atom")
        if np.any(values < 0.0):
            raise ValueError("arrival values must be nonnegative")
        if np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def mean_per_frame(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def max_per_frame(self) -> float:
        return float(self.values.max())

    @classmethod
    def deterministic(cls, nats_per_frame: float) -> "ArrivalModel":
        return cls("deterministic", np.array([nats_per_frame]), np.array([1.0]))

    @classmethod
    def iid_table(cls, values, probs) -> "ArrivalModel":
        return cls("iid-general", np.asarray(values, dtype=np.float64),
                   np.asarray(probs, dtype=np.float64))


def sample_arrival(model: ArrivalModel, rng: np.random.Generator, size=None):
    """One burst size (or a batch) drawn from the arrival table."""
    if model.kind == "deterministic":
        atom = float(model.values[0])
        if size is None:
            return atom
        return np.full(size, atom)
    idx = rng.choice(model.values.size, size=size, p=model.probs)
    out = model.values[idx]
    if size is None:
        return float(out)
    return out


@dataclass(frozen=True)
class QueueState:
    """Backlog U (nats) together with the slot clock."""

    backlog: float
    slot_index: int
    slots_per_frame: int

    def __post_init__(self) -> None:
        if self.backlog < 0.0:
            raise ValueError("backlog must be nonnegative")
        if self.slots_per_frame < 1:
            raise ValueError("slots_per_frame must be positive")
        if self.slot_index < 0:
            raise ValueError("slot_index must be nonnegative")

    @property
    def at_frame_boundary(self) -> bool:
        return self.slot_index % self.slots_per_frame == 0


def served_nats(state: QueueState, rate: float, error: int, dt: float) -> float:
    """Nats leaving the queue this slot: min(U, rate (1-error) dt)."""
    return min(state.backlog, rate * (1.0 - error) * dt)


def queue_update(state: QueueState, rate: float, error: int, dt: float,
                 arrival: float | None = None) -> QueueState:
    """Advance the backlog recursion by one slot.

    ``U(k+1) = [U(k) - rate (1-error) dt]^+ + arrival * 1(frame boundary)``.
    The arrival argument must be present exactly on frame-boundary slots; an
    erred slot wastes its service (the nats stay queued for retransmission).
    """
    if rate < 0.0:
        raise ValueError("rate must be nonnegative")
    if error not in (0, 1):
        raise ValueError(f"error must be 0 or 1, got {error!r}")
    boundary = state.at_frame_boundary
    if boundary and arrival is None:
        raise ValueError(f"slot {state.slot_index} is a frame boundary; arrival required")
    if not boundary and arrival is not None:
        raise ValueError(f"slot {state.slot_index} is not a frame boundary; arrival forbidden")
    if arrival is not None and arrival < 0.0:
        raise ValueError("arrival must be nonnegative")
    backlog = max(state.backlog - rate * (1.0 - error) * dt, 0.0)
    if arrival is not None:
        backlog += arrival
    return replace(state, backlog=backlog, slot_index=state.slot_index + 1)
