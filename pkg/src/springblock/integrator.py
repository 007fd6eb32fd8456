"""Time integration of the block chain.

The scheme is a fully explicit PECE predictor-corrector: a second-order
Adams-Bashforth predictor, one third-order Adams-Moulton correction, and a
re-evaluation of the vector field at the corrected point, giving overall
order min(2 + 1, 3) = 3 on smooth segments.  The two-step memory is seeded
with one explicit midpoint step and is discarded whenever a stick/slip flag
flips, because multistep history spanning a friction discontinuity is
meaningless.

Transitions are resolved to step resolution only: after every step, negative
velocities are clamped to zero (back slip is inhibited) and stick flags are
refreshed from the force threshold.  There is no event-time root-finding and
no step adaptivity.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _kernel, model
from .model import ModelParams, StepHistory, SystemState

__all__ = [
    "IntegratorConfig",
    "TrajectorySample",
    "TrajectoryRecord",
    "SimulationResult",
    "MissingHistoryError",
    "NonFiniteStateError",
    "WarmUpError",
    "midpoint_step",
    "integrate_fixed",
    "initial_state",
    "bootstrap_step",
    "pece_step",
    "advance_step",
    "post_step_projection",
    "warm_up",
    "integrate",
    "run_simulation",
]


class MissingHistoryError(RuntimeError):
    """Raised when a multistep step is requested without prior history."""


class NonFiniteStateError(RuntimeError):
    """Raised when the state stops being finite during integration."""

    def __init__(self, time: float, block: int):
        super().__init__(f"non-finite state at t={time} (block index {block})")
        self.time = time
        self.block = block


class WarmUpError(RuntimeError):
    """Raised when no global stick is found within the warm-up cap."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Run configuration: fixed step, horizon, and seeded initial perturbation."""

    t_end: float
    step_size: float = 0.001
    seed: int = 0
    perturbation_amplitude: float = 0.1
    warmup_cap: Optional[float] = None

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be non-negative, got {self.t_end}")
        if self.perturbation_amplitude < 0:
            raise ValueError("perturbation_amplitude must be non-negative")

    @property
    def warmup_cap_time(self) -> float:
        return 10.0 * self.t_end if self.warmup_cap is None else self.warmup_cap


@dataclass(frozen=True)
class TrajectorySample:
    """Post-step observer payload."""

    time: float
    positions: np.ndarray
    velocities: np.ndarray
    any_slipping: bool


@dataclass
class TrajectoryRecord:
    """Stride-sampled summary of a run (optionally with full snapshots)."""

    times: np.ndarray
    center_of_mass: np.ndarray
    any_slipping: np.ndarray
    positions: Optional[np.ndarray] = None
    velocities: Optional[np.ndarray] = None

    def samples(self) -> list[TrajectorySample]:
        if self.positions is None or self.velocities is None:
            raise ValueError("record was collected without snapshots")
        return [
            TrajectorySample(
                float(self.times[k]),
                self.positions[k],
                self.velocities[k],
                bool(self.any_slipping[k]),
            )
            for k in range(self.times.shape[0])
        ]


@dataclass
class SimulationResult:
    initial_state: SystemState
    final_state: SystemState
    catalog: Optional[object]  # EventCatalog; typed loosely to avoid an import cycle
    record: TrajectoryRecord


def _n_steps(t_start: float, t_end: float, h: float) -> int:
    span = t_end - t_start
    if span <= 0:
        return 0
    return int(np.floor(span / h + 1e-9))


# ---------------------------------------------------------------------------
# Generic fixed-step machinery (usable on any smooth ODE, e.g. in order tests)
# ---------------------------------------------------------------------------

def midpoint_step(f: Callable, t: float, y, h: float):
    """One explicit midpoint step; returns (y_new, f(t, y))."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    return y + h * k2, k1


def integrate_fixed(f: Callable, t0: float, y0, h: float, n_steps: int):
    """Drive the bootstrap + AB2/AM3 PECE scheme on a smooth vector field.

    Same stage structure as the production stepper, without the friction
    projection.  Returns (t, y) after ``n_steps`` steps.
    """
    t = t0
    y = y0
    f_curr = None
    f_prev = None
    for _ in range(n_steps):
        if f_curr is None:
            y, f_prev = midpoint_step(f, t, y, h)
            t = t + h
            f_curr = f(t, y)
        else:
            y_pred = y + 0.5 * h * (3.0 * f_curr - f_prev)
            f_pred = f(t + h, y_pred)
            y = y + (h / 12.0) * (5.0 * f_pred + 8.0 * f_curr - f_prev)
            t = t + h
            f_prev, f_curr = f_curr, f(t, y)
    return t, y


# ---------------------------------------------------------------------------
# Block-chain steps
# ---------------------------------------------------------------------------

def initial_state(
    params: ModelParams,
    cfg: IntegratorConfig,
    rng: Optional[np.random.Generator] = None,
) -> SystemState:
    """All-stuck state at t=0 with seeded uniform position perturbations."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    delta = cfg.perturbation_amplitude
    x = rng.uniform(-delta, delta, params.n_blocks)
    return SystemState(
        time=0.0,
        positions=x,
        velocities=np.zeros(params.n_blocks),
        stuck=np.ones(params.n_blocks, dtype=bool),
        history=None,
    )


def post_step_projection(state: SystemState, params: ModelParams) -> SystemState:
    """Clamp negative velocities and refresh stick flags.

    Any flag flip invalidates the multistep history (the vector field is
    discontinuous across stick/slip transitions).
    """
    v = state.velocities.copy()
    stuck = state.stuck.copy()
    neg = v < 0.0
    v[neg] = 0.0
    stuck[neg] = True
    force = model.net_elastic_forces(state.positions, state.time, params)
    release = stuck & (force > params.friction.f0)
    stuck[release] = False
    stuck[v > 0.0] = False
    flipped = bool(np.any(stuck != state.stuck))
    return SystemState(
        time=state.time,
        positions=state.positions,
        velocities=v,
        stuck=stuck,
        history=None if flipped else state.history,
    )


def bootstrap_step(state: SystemState, h: float, params: ModelParams) -> SystemState:
    """One explicit midpoint step that also seeds the multistep memory."""
    t, x, v, stuck = state.time, state.positions, state.velocities, state.stuck
    k1 = model.state_derivative(t, x, v, stuck, params)
    wa_x = x + 0.5 * h * k1[0]
    wa_v = v + 0.5 * h * k1[1]
    k2 = model.state_derivative(t + 0.5 * h, wa_x, wa_v, stuck, params)
    x_new = x + h * k2[0]
    v_new = v + h * k2[1]
    t_new = t + h
    f_new = model.state_derivative(t_new, x_new, v_new, stuck, params)
    stepped = SystemState(t_new, x_new, v_new, stuck.copy(), StepHistory(f_new, k1))
    return post_step_projection(stepped, params)


def pece_step(state: SystemState, h: float, params: ModelParams) -> SystemState:
    """Predict (AB2), evaluate, correct (AM3), evaluate, then project."""
    if state.history is None:
        raise MissingHistoryError(
            "no multistep history available; take a bootstrap_step first"
        )
    fc, fp = state.history.curr, state.history.prev
    t, x, v, stuck = state.time, state.positions, state.velocities, state.stuck
    wa_x = x + 0.5 * h * (3.0 * fc[0] - fp[0])
    wa_v = v + 0.5 * h * (3.0 * fc[1] - fp[1])
    g0 = model.state_derivative(t + h, wa_x, wa_v, stuck, params)
    x_new = x + (h / 12.0) * (5.0 * g0[0] + 8.0 * fc[0] - fp[0])
    v_new = v + (h / 12.0) * (5.0 * g0[1] + 8.0 * fc[1] - fp[1])
    t_new = t + h
    f_new = model.state_derivative(t_new, x_new, v_new, stuck, params)
    stepped = SystemState(t_new, x_new, v_new, stuck.copy(), StepHistory(f_new, fc))
    return post_step_projection(stepped, params)


def advance_step(state: SystemState, h: float, params: ModelParams) -> SystemState:
    """Single step, bootstrapping automatically when history is absent."""
    if state.history is None:
        return bootstrap_step(state, h, params)
    return pece_step(state, h, params)


def integrate(
    state: SystemState,
    params: ModelParams,
    cfg: IntegratorConfig,
    observers: Sequence[Callable[[TrajectorySample], None]] = (),
) -> SystemState:
    """Advance with fixed step until ``cfg.t_end``, notifying observers.

    Observers are called after every projected step, in registration order,
    with a snapshot sample.  This is the reference path; long production runs
    go through :func:`run_simulation`, which fuses the same arithmetic into a
    compiled loop.
    """
    h = cfg.step_size
    for _ in range(_n_steps(state.time, cfg.t_end, h)):
        state = advance_step(state, h, params)
        if not (np.all(np.isfinite(state.positions)) and np.all(np.isfinite(state.velocities))):
            bad = np.flatnonzero(
                ~(np.isfinite(state.positions) & np.isfinite(state.velocities))
            )
            raise NonFiniteStateError(state.time, int(bad[0]))
        if observers:
            sample = TrajectorySample(
                state.time,
                state.positions.copy(),
                state.velocities.copy(),
                state.any_slipping,
            )
            for observer in observers:
                observer(sample)
    return state


def _unpack_history(state: SystemState, n: int):
    if state.history is None:
        return np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), False
    hist = state.history
    return (
        hist.curr[0].copy(),
        hist.curr[1].copy(),
        hist.prev[0].copy(),
        hist.prev[1].copy(),
        True,
    )


def run_simulation(
    state: SystemState,
    params: ModelParams,
    cfg: IntegratorConfig,
    *,
    collect_events: bool = True,
    sample_stride: int = 100,
    store_snapshots: bool = False,
    stick_skip: bool = True,
    t_end: Optional[float] = None,
) -> SimulationResult:
    """Run the compiled fast path and assemble catalog plus sampled record.

    Produces exactly the same trajectory as stepping with
    :func:`advance_step`; globally stuck phases may be fast-forwarded
    (``stick_skip``), which is an exact no-op because the vector field
    vanishes identically while every block is stuck.
    """
    from . import events as events_mod

    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")
    horizon = cfg.t_end if t_end is None else t_end
    start = state.copy()
    n = params.n_blocks
    x = state.positions.copy()
    v = state.velocities.copy()
    stuck = state.stuck.copy()
    fxc, fvc, fxp, fvp, has_hist = _unpack_history(state, n)
    fp = params.friction

    (
        status,
        steps_done,
        t_final,
        has_hist_out,
        ev_start,
        ev_end,
        ev_slip,
        rec_t,
        rec_com,
        rec_any,
        rec_x,
        rec_v,
        err_t,
        err_block,
    ) = _kernel._advance(
        x,
        v,
        stuck,
        fxc,
        fvc,
        fxp,
        fvp,
        has_hist,
        state.time,
        cfg.step_size,
        _n_steps(state.time, horizon, cfg.step_size),
        params.mass,
        params.coupling_stiffness,
        params.plate_stiffness,
        params.plate_velocity,
        fp.f0,
        fp.sigma,
        fp.alpha,
        False,
        stick_skip,
        collect_events,
        store_snapshots,
        sample_stride,
    )
    if status == _kernel.NON_FINITE:
        raise NonFiniteStateError(err_t, err_block)

    history = None
    if has_hist_out:
        history = StepHistory(np.stack((fxc, fvc)), np.stack((fxp, fvp)))
    final = SystemState(t_final, x, v, stuck, history)

    catalog = None
    if collect_events:
        catalog = events_mod.catalog_from_arrays(
            ev_start, ev_end, ev_slip, n_blocks=n, window=(start.time, t_final)
        )

    record = TrajectoryRecord(
        times=np.concatenate(([start.time], rec_t)),
        center_of_mass=np.concatenate(([float(np.mean(start.positions))], rec_com)),
        any_slipping=np.concatenate(([start.any_slipping], rec_any)),
        positions=np.vstack(([start.positions], rec_x)) if store_snapshots else None,
        velocities=np.vstack(([start.velocities], rec_v)) if store_snapshots else None,
    )
    return SimulationResult(start, final, catalog, record)


def warm_up(
    params: ModelParams,
    cfg: IntegratorConfig,
    rng: Optional[np.random.Generator] = None,
) -> SystemState:
    """Build the observation-ready initial state.

    Perturbs positions uniformly in [-delta, delta], integrates the resulting
    transient, and restarts the clock at the first global stick: that instant
    becomes t = 0, with positions shifted together with the plate so that all
    forces are unchanged by the time reset.  A state that is already globally
    stuck (e.g. zero perturbation) is returned immediately.
    """
    state = initial_state(params, cfg, rng)
    force = model.net_elastic_forces(state.positions, 0.0, params)
    if np.all(force <= params.friction.f0):
        return state

    n = params.n_blocks
    x = state.positions.copy()
    v = state.velocities.copy()
    stuck = state.stuck.copy()
    fxc, fvc, fxp, fvp, has_hist = _unpack_history(state, n)
    fp = params.friction
    cap_steps = _n_steps(0.0, cfg.warmup_cap_time, cfg.step_size)

    result = _kernel._advance(
        x,
        v,
        stuck,
        fxc,
        fvc,
        fxp,
        fvp,
        has_hist,
        0.0,
        cfg.step_size,
        cap_steps,
        params.mass,
        params.coupling_stiffness,
        params.plate_stiffness,
        params.plate_velocity,
        fp.f0,
        fp.sigma,
        fp.alpha,
        True,
        False,
        False,
        False,
        max(cap_steps, 1),
    )
    status, _, t_bar = result[0], result[1], result[2]
    if status == _kernel.NON_FINITE:
        raise NonFiniteStateError(result[12], result[13])
    if status != _kernel.HIT_GLOBAL_STICK:
        raise WarmUpError(
            f"no global stick within warm-up cap t={cfg.warmup_cap_time} "
            f"(cap is configurable via warmup_cap)"
        )
    # Relabel the stick time as t=0; shifting positions by the plate advance
    # keeps every elastic force exactly as it was at the stick instant.
    x -= params.plate_velocity * t_bar
    return SystemState(
        time=0.0,
        positions=x,
        velocities=np.zeros(n),
        stuck=np.ones(n, dtype=bool),
        history=None,
    )
