"""Physics of a driven elastic block chain with velocity-weakening dry friction.

A chain of ``n_blocks`` identical blocks rests on a rough surface.  Nearest
neighbours are coupled by linear springs of stiffness ``coupling_stiffness``,
and every block is dragged through a second linear spring of stiffness
``plate_stiffness`` attached to a rigid plate moving at constant speed
``plate_velocity``.  Sliding is resisted by a velocity-weakening friction law
whose static branch is multi-valued: a block at rest stays at rest until the
elastic resultant exceeds the static threshold ``f0``.  Back slip is
forbidden, so block velocities are never negative.

All quantities are dimensionless.  Everything in this module is a pure
function of its inputs and safe to call from any number of threads.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "FrictionParams",
    "ModelParams",
    "StepHistory",
    "SystemState",
    "dynamic_friction",
    "net_elastic_force",
    "net_elastic_forces",
    "stick_release_check",
    "acceleration",
    "state_derivative",
]


@dataclass(frozen=True)
class FrictionParams:
    """Velocity-weakening friction law.

    ``f0`` is the maximum static friction, ``sigma`` the fractional drop of
    friction at the end of a sticking period, and ``alpha`` the rate at which
    dynamic friction decays with sliding velocity.
    """

    f0: float = 1.0
    sigma: float = 0.01
    alpha: float = 1.0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @property
    def onset_value(self) -> float:
        """Dynamic friction in the limit v -> 0+, i.e. ``f0 * (1 - sigma)``."""
        return self.f0 * (1.0 - self.sigma)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the chain.

    ``spacing`` is the initial inter-block distance; it never enters the
    equations of motion and is kept for bookkeeping only.
    """

    n_blocks: int
    coupling_stiffness: float
    mass: float = 1.0
    plate_stiffness: float = 1.0
    plate_velocity: float = 0.001
    friction: FrictionParams = field(default_factory=FrictionParams)
    spacing: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.n_blocks, (int, np.integer)) and self.n_blocks >= 1):
            raise ValueError(f"n_blocks must be a positive integer, got {self.n_blocks!r}")
        for name in ("mass", "coupling_stiffness", "plate_stiffness", "plate_velocity", "spacing"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.coupling_stiffness < self.plate_stiffness:
            raise ValueError(
                "coupling_stiffness must be >= plate_stiffness "
                f"(got {self.coupling_stiffness} < {self.plate_stiffness})"
            )
        if self.coupling_stiffness == self.plate_stiffness:
            warnings.warn(
                "coupling_stiffness equals plate_stiffness; the model is usually "
                "run with a strictly stiffer inter-block coupling",
                stacklevel=2,
            )

    def stiffness_ratio(self) -> float:
        """Ratio of coupling to plate stiffness (the chain's squared length scale)."""
        return self.coupling_stiffness / self.plate_stiffness


class StepHistory(NamedTuple):
    """Stored vector-field evaluations for the two-step scheme.

    ``curr`` is the evaluation at the state's own time point (produced by the
    final evaluate stage of the previous step); ``prev`` is the evaluation one
    grid point earlier.  Both have shape ``(2, n_blocks)``: row 0 holds
    position rates, row 1 holds accelerations.
    """

    curr: np.ndarray
    prev: np.ndarray


@dataclass
class SystemState:
    """Instantaneous state of the chain plus multistep memory.

    ``history`` is ``None`` whenever the multistep memory is invalid (fresh
    state, or a stick/slip flag flipped on the last step) and the next step
    must bootstrap with a one-step method.
    """

    time: float
    positions: np.ndarray
    velocities: np.ndarray
    stuck: np.ndarray
    history: Optional[StepHistory] = None

    @property
    def n_blocks(self) -> int:
        return self.positions.shape[0]

    @property
    def any_slipping(self) -> bool:
        return bool(np.any(~self.stuck))

    def copy(self) -> "SystemState":
        hist = None
        if self.history is not None:
            hist = StepHistory(self.history.curr.copy(), self.history.prev.copy())
        return SystemState(
            self.time,
            self.positions.copy(),
            self.velocities.copy(),
            self.stuck.copy(),
            hist,
        )

    def validate(self) -> None:
        n = self.n_blocks
        if self.velocities.shape != (n,) or self.stuck.shape != (n,):
            raise ValueError("state arrays must all have length n_blocks")
        if np.any(self.velocities < 0.0):
            raise ValueError("velocities must be non-negative (back slip is inhibited)")
        if np.any(self.velocities[self.stuck] != 0.0):
            raise ValueError("stuck blocks must have zero velocity")


def dynamic_friction(v, fp: FrictionParams):
    """Dynamic friction at sliding speed ``v > 0``.

    Strictly positive, strictly decreasing, tending to ``f0 * (1 - sigma)``
    as v -> 0+ and to zero as v -> inf.  The static regime (v <= 0) is handled
    by the stick rule, never here.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0.0):
        raise ValueError("dynamic_friction requires v > 0; the stick rule owns v <= 0")
    result = fp.f0 * (1.0 - fp.sigma) / (1.0 + 2.0 * fp.alpha * v / (1.0 - fp.sigma))
    return float(result) if result.ndim == 0 else result


def net_elastic_forces(positions: np.ndarray, t: float, p: ModelParams) -> np.ndarray:
    """Elastic resultant on every block at time ``t``.

    Coupling term is the discrete Laplacian with reflecting ghost cells
    (x[-1] = x[0], x[n] = x[n-1]); for a single block it vanishes identically.
    """
    x = positions
    n = x.shape[0]
    xm = np.empty(n)
    xp = np.empty(n)
    xm[1:] = x[:-1]
    xm[0] = x[0]
    xp[:-1] = x[1:]
    xp[-1] = x[-1]
    return p.coupling_stiffness * (xp - 2.0 * x + xm) + p.plate_stiffness * (
        p.plate_velocity * t - x
    )


def net_elastic_force(i: int, positions: np.ndarray, t: float, p: ModelParams) -> float:
    """Elastic resultant on block ``i`` (0-based)."""
    n = positions.shape[0]
    if not 0 <= i < n:
        raise IndexError(f"block index {i} out of range for {n} blocks")
    return float(net_elastic_forces(positions, t, p)[i])


def stick_release_check(force: float, fp: FrictionParams) -> bool:
    """True iff a stuck block subject to ``force`` must start slipping.

    The static branch balances any resultant in (-inf, f0]; only a strictly
    positive excess releases the block (back slip is forbidden, so negative
    resultants are always held).
    """
    return force > fp.f0


def state_derivative(
    t: float,
    positions: np.ndarray,
    velocities: np.ndarray,
    stuck: np.ndarray,
    p: ModelParams,
) -> np.ndarray:
    """Right-hand side of the first-order system, shape ``(2, n_blocks)``.

    Row 0 is dx/dt, row 1 is dv/dt.  Stuck blocks whose resultant stays within
    the static range contribute exactly zero.  A stuck block whose resultant
    exceeds ``f0`` releases against the onset friction ``f0 * (1 - sigma)``;
    the friction argument is clamped at zero for transient negative velocities
    occurring inside a step.
    """
    fp = p.friction
    force = net_elastic_forces(positions, t, p)
    held = stuck & (force <= fp.f0)
    v_eff = np.where(velocities > 0.0, velocities, 0.0)
    fric = fp.f0 * (1.0 - fp.sigma) / (1.0 + 2.0 * fp.alpha * v_eff / (1.0 - fp.sigma))
    out = np.empty((2, positions.shape[0]))
    out[0] = np.where(held, 0.0, velocities)
    out[1] = np.where(held, 0.0, (force - fric) / p.mass)
    return out


def acceleration(i: int, state: SystemState, p: ModelParams) -> float:
    """Acceleration of block ``i`` under the stick/slip decision rules."""
    deriv = state_derivative(state.time, state.positions, state.velocities, state.stuck, p)
    n = state.n_blocks
    if not 0 <= i < n:
        raise IndexError(f"block index {i} out of range for {n} blocks")
    return float(deriv[1, i])
