"""Compiled inner loop for long runs.

The arithmetic here mirrors ``model.state_derivative`` and the step functions
in ``integrator`` expression by expression, so that the compiled path and the
pure-numpy path produce bit-identical trajectories (this is asserted by the
test suite).  No fastmath: operation order is part of the contract.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency, kept soft for safety
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


# Status codes returned by _advance.
OK = 0
HIT_GLOBAL_STICK = 1
NON_FINITE = 2

# Stuck phases shorter than this many steps are stepped through normally.
MIN_SKIP_STEPS = 16


@njit(cache=True)
def _field(t, x, v, stuck, m, kc, kp, V, f0, sigma, alpha, fx, fv):
    n = x.shape[0]
    for i in range(n):
        xm = x[i - 1] if i > 0 else x[0]
        xp = x[i + 1] if i < n - 1 else x[n - 1]
        force = kc * (xp - 2.0 * x[i] + xm) + kp * (V * t - x[i])
        if stuck[i] and force <= f0:
            fx[i] = 0.0
            fv[i] = 0.0
        else:
            veff = v[i] if v[i] > 0.0 else 0.0
            fric = f0 * (1.0 - sigma) / (1.0 + 2.0 * alpha * veff / (1.0 - sigma))
            fx[i] = v[i]
            fv[i] = (force - fric) / m


@njit(cache=True)
def _project(t, x, v, stuck, kc, kp, V, f0):
    """Velocity clamp plus stick-flag maintenance; returns True on any flip."""
    n = x.shape[0]
    flips = False
    for i in range(n):
        if v[i] < 0.0:
            v[i] = 0.0
            if not stuck[i]:
                stuck[i] = True
                flips = True
    for i in range(n):
        if stuck[i]:
            xm = x[i - 1] if i > 0 else x[0]
            xp = x[i + 1] if i < n - 1 else x[n - 1]
            force = kc * (xp - 2.0 * x[i] + xm) + kp * (V * t - x[i])
            if force > f0:
                stuck[i] = False
                flips = True
    for i in range(n):
        if v[i] > 0.0 and stuck[i]:
            stuck[i] = False
            flips = True
    return flips


@njit(cache=True)
def _all_true(flags):
    for i in range(flags.shape[0]):
        if not flags[i]:
            return False
    return True


@njit(cache=True)
def _advance(
    x,
    v,
    stuck,
    fxc,
    fvc,
    fxp,
    fvp,
    has_hist,
    t0,
    h,
    n_steps,
    m,
    kc,
    kp,
    V,
    f0,
    sigma,
    alpha,
    stop_at_stick,
    use_skip,
    collect_events,
    store_snaps,
    stride,
):
    """Advance the chain by up to ``n_steps`` fixed steps.

    Mutates x, v, stuck and the four history rows in place.  Returns event
    arrays, stride-sampled records and the final bookkeeping flags.
    """
    n = x.shape[0]

    wa_x = np.empty(n)
    wa_v = np.empty(n)
    g0x = np.empty(n)
    g0v = np.empty(n)
    g1x = np.empty(n)
    g1v = np.empty(n)
    x_prev = np.empty(n)

    ev_cap = 256 if collect_events else 1
    ev_start = np.empty(ev_cap)
    ev_end = np.empty(ev_cap)
    ev_slip = np.zeros((ev_cap, n))
    n_ev = 0
    acc = np.zeros(n)
    ev_open = False
    ev_t0 = 0.0

    rec_cap = n_steps // stride + 3
    rec_t = np.empty(rec_cap)
    rec_com = np.empty(rec_cap)
    rec_any = np.empty(rec_cap, dtype=np.bool_)
    snap_rows = rec_cap if store_snaps else 0
    rec_x = np.empty((snap_rows, n))
    rec_v = np.empty((snap_rows, n))
    n_rec = 0

    com_scale = 1.0 / n
    status = OK
    err_t = 0.0
    err_block = -1
    t = t0
    step = 0

    while step < n_steps:
        if use_skip and (not stop_at_stick) and (not ev_open) and _all_true(stuck):
            # While globally stuck the field is identically zero and each
            # block's resultant grows linearly at rate kp*V; jump to just
            # before the earliest possible threshold crossing.
            cmax = -1.0e300
            for i in range(n):
                xm = x[i - 1] if i > 0 else x[0]
                xp = x[i + 1] if i < n - 1 else x[n - 1]
                c = kc * (xp - 2.0 * x[i] + xm) - kp * x[i]
                if c > cmax:
                    cmax = c
            t_star = (f0 - cmax) / (kp * V)
            k_skip = int((t_star - t) / h) - 1
            remaining = n_steps - step
            if k_skip > remaining:
                k_skip = remaining
            if k_skip >= MIN_SKIP_STEPS:
                # Stepping through a stuck span writes all-zero evaluations
                # into the multistep memory; reproduce that exactly.
                for i in range(n):
                    fxc[i] = 0.0
                    fvc[i] = 0.0
                    fxp[i] = 0.0
                    fvp[i] = 0.0
                has_hist = True
                com = 0.0
                for i in range(n):
                    com += x[i]
                com *= com_scale
                for _ in range(k_skip):
                    t = t + h
                    step += 1
                    if step % stride == 0 or step == n_steps:
                        rec_t[n_rec] = t
                        rec_com[n_rec] = com
                        rec_any[n_rec] = False
                        if store_snaps:
                            for i in range(n):
                                rec_x[n_rec, i] = x[i]
                                rec_v[n_rec, i] = v[i]
                        n_rec += 1
                continue

        for i in range(n):
            x_prev[i] = x[i]

        if not has_hist:
            # Bootstrap with the explicit midpoint rule (order 2).
            _field(t, x, v, stuck, m, kc, kp, V, f0, sigma, alpha, g0x, g0v)
            for i in range(n):
                wa_x[i] = x[i] + 0.5 * h * g0x[i]
                wa_v[i] = v[i] + 0.5 * h * g0v[i]
            _field(t + 0.5 * h, wa_x, wa_v, stuck, m, kc, kp, V, f0, sigma, alpha, g1x, g1v)
            for i in range(n):
                x[i] = x[i] + h * g1x[i]
                v[i] = v[i] + h * g1v[i]
            t = t + h
            for i in range(n):
                fxp[i] = g0x[i]
                fvp[i] = g0v[i]
            _field(t, x, v, stuck, m, kc, kp, V, f0, sigma, alpha, g1x, g1v)
            for i in range(n):
                fxc[i] = g1x[i]
                fvc[i] = g1v[i]
        else:
            # Predict (AB2), evaluate, correct (AM3), evaluate.
            for i in range(n):
                wa_x[i] = x[i] + 0.5 * h * (3.0 * fxc[i] - fxp[i])
                wa_v[i] = v[i] + 0.5 * h * (3.0 * fvc[i] - fvp[i])
            _field(t + h, wa_x, wa_v, stuck, m, kc, kp, V, f0, sigma, alpha, g0x, g0v)
            for i in range(n):
                x[i] = x[i] + (h / 12.0) * (5.0 * g0x[i] + 8.0 * fxc[i] - fxp[i])
                v[i] = v[i] + (h / 12.0) * (5.0 * g0v[i] + 8.0 * fvc[i] - fvp[i])
            t = t + h
            _field(t, x, v, stuck, m, kc, kp, V, f0, sigma, alpha, g1x, g1v)
            for i in range(n):
                fxp[i] = fxc[i]
                fvp[i] = fvc[i]
                fxc[i] = g1x[i]
                fvc[i] = g1v[i]

        has_hist = not _project(t, x, v, stuck, kc, kp, V, f0)
        step += 1

        for i in range(n):
            if not (np.isfinite(x[i]) and np.isfinite(v[i])):
                status = NON_FINITE
                err_t = t
                err_block = i
                break
        if status == NON_FINITE:
            break

        all_stuck = _all_true(stuck)

        if collect_events:
            if (not ev_open) and (not all_stuck):
                ev_open = True
                ev_t0 = t
                for i in range(n):
                    acc[i] = 0.0
            if ev_open:
                for i in range(n):
                    d = x[i] - x_prev[i]
                    if d > 0.0:
                        acc[i] += d
                if all_stuck:
                    if n_ev == ev_cap:
                        new_cap = ev_cap * 2
                        tmp1 = np.empty(new_cap)
                        tmp2 = np.empty(new_cap)
                        tmp3 = np.zeros((new_cap, n))
                        for k in range(ev_cap):
                            tmp1[k] = ev_start[k]
                            tmp2[k] = ev_end[k]
                            for i in range(n):
                                tmp3[k, i] = ev_slip[k, i]
                        ev_start = tmp1
                        ev_end = tmp2
                        ev_slip = tmp3
                        ev_cap = new_cap
                    ev_start[n_ev] = ev_t0
                    ev_end[n_ev] = t
                    for i in range(n):
                        ev_slip[n_ev, i] = acc[i]
                    n_ev += 1
                    ev_open = False

        if stop_at_stick and all_stuck:
            status = HIT_GLOBAL_STICK

        if step % stride == 0 or step == n_steps or status != OK:
            com = 0.0
            for i in range(n):
                com += x[i]
            com *= com_scale
            rec_t[n_rec] = t
            rec_com[n_rec] = com
            rec_any[n_rec] = not all_stuck
            if store_snaps:
                for i in range(n):
                    rec_x[n_rec, i] = x[i]
                    rec_v[n_rec, i] = v[i]
            n_rec += 1

        if status != OK:
            break

    return (
        status,
        step,
        t,
        has_hist,
        ev_start[:n_ev].copy(),
        ev_end[:n_ev].copy(),
        ev_slip[:n_ev].copy(),
        rec_t[:n_rec].copy(),
        rec_com[:n_rec].copy(),
        rec_any[:n_rec].copy(),
        rec_x[: (n_rec if store_snaps else 0)].copy(),
        rec_v[: (n_rec if store_snaps else 0)].copy(),
        err_t,
        err_block,
    )
