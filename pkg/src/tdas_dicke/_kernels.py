"""Compiled integration kernels (classical RK4, method of steps for the delay).

Delayed values are read from cubic Hermite dense output over the stored step
history; the initial history is the constant extension of the initial state.
Ramp schedules are evaluated at every internal Runge-Kutta stage time.

Schedule codes: 0 = constant g, 1 = g(t) = g_final * sqrt(t / t0) capped at
g_final for t >= t0.
"""

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1

_DIVERGE_LIMIT = 1e6  # any |component| beyond this counts as divergence


@njit(cache=True, inline="always")
def _g_of_t(t, sched, g0, g_final, t0):
    if sched == 0:
        return g0
    if t <= 0.0:
        return 0.0
    if t >= t0:
        return g_final
    return g_final * np.sqrt(t / t0)


@njit(cache=True, inline="always")
def _rhs(y, g, omega0, omega, U, kappa, out):
    x1 = y[0]
    x2 = y[1]
    jx = y[2]
    jy = y[3]
    jz = y[4]
    wt = omega + U * jz
    wt0 = omega0 + U * (x1 * x1 + x2 * x2)
    out[0] = -kappa * x1 + wt * x2
    out[1] = -kappa * x2 - wt * x1 - 2.0 * g * jx
    out[2] = -wt0 * jy
    out[3] = wt0 * jx - 4.0 * g * x1 * jz
    out[4] = 4.0 * g * x1 * jy


@njit(cache=True)
def rk4_ode(y0, n_steps, h, omega0, omega, U, kappa,
            sched, g0, g_final, t0,
            stride, out_states, out_g, diag):
    """Plain RK4 for the undelayed system (k = 0 or tau = 0).

    Samples every `stride` steps into out_states/out_g.  diag[0] receives the
    max spin-norm violation, diag[1] the failing step on divergence.
    """
    y = y0.copy()
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    yt = np.empty(5)
    max_drift = 0.0
    n_out = 0
    for n in range(n_steps + 1):
        if n % stride == 0 and n_out < out_states.shape[0]:
            for i in range(5):
                out_states[n_out, i] = y[i]
            out_g[n_out] = _g_of_t(n * h, sched, g0, g_final, t0)
            n_out += 1
        drift = abs(y[2] * y[2] + y[3] * y[3] + y[4] * y[4] - 0.25)
        if drift > max_drift:
            max_drift = drift
        for i in range(5):
            if not np.isfinite(y[i]) or abs(y[i]) > _DIVERGE_LIMIT:
                diag[0] = max_drift
                diag[1] = n
                return NONFINITE
        if n == n_steps:
            break
        t = n * h
        _rhs(y, _g_of_t(t, sched, g0, g_final, t0), omega0, omega, U, kappa, k1)
        for i in range(5):
            yt[i] = y[i] + 0.5 * h * k1[i]
        _rhs(yt, _g_of_t(t + 0.5 * h, sched, g0, g_final, t0), omega0, omega, U, kappa, k2)
        for i in range(5):
            yt[i] = y[i] + 0.5 * h * k2[i]
        _rhs(yt, _g_of_t(t + 0.5 * h, sched, g0, g_final, t0), omega0, omega, U, kappa, k3)
        for i in range(5):
            yt[i] = y[i] + h * k3[i]
        _rhs(yt, _g_of_t(t + h, sched, g0, g_final, t0), omega0, omega, U, kappa, k4)
        for i in range(5):
            y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    diag[0] = max_drift
    diag[1] = -1.0
    return OK


@njit(cache=True, inline="always")
def _hermite(theta, h, y0, y1, f0, f1, out):
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + theta
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    for i in range(5):
        out[i] = h00 * y0[i] + h01 * y1[i] + h * (h10 * f0[i] + h11 * f1[i])


@njit(cache=True)
def rk4_dde(y0, n_steps, h, tau, k, omega0, omega, U, kappa,
            sched, g0, g_final, t0,
            stride, out_states, out_g, hist_y, hist_f, diag):
    """Method-of-steps RK4 with the delayed force k*(x(t-tau) - x(t)) on the
    two quadrature components.

    hist_y/hist_f are ring buffers with at least ceil(tau/h) + 3 rows; on
    return they hold the trailing window of (state, derivative) pairs.
    Requires h <= tau.
    """
    L = hist_y.shape[0]
    y = y0.copy()
    k1 = np.empty(5)
    k2 = np.empty(5)
    k3 = np.empty(5)
    k4 = np.empty(5)
    yt = np.empty(5)
    ydel = np.empty(5)
    stage_out = np.empty(5)
    max_drift = 0.0
    n_out = 0
    for n in range(n_steps + 1):
        if n % stride == 0 and n_out < out_states.shape[0]:
            for i in range(5):
                out_states[n_out, i] = y[i]
            out_g[n_out] = _g_of_t(n * h, sched, g0, g_final, t0)
            n_out += 1
        drift = abs(y[2] * y[2] + y[3] * y[3] + y[4] * y[4] - 0.25)
        if drift > max_drift:
            max_drift = drift
        for i in range(5):
            if not np.isfinite(y[i]) or abs(y[i]) > _DIVERGE_LIMIT:
                diag[0] = max_drift
                diag[1] = n
                return NONFINITE
        if n == n_steps:
            break
        t = n * h
        for stage in range(4):
            if stage == 0:
                c = 0.0
                for i in range(5):
                    yt[i] = y[i]
            elif stage == 1:
                c = 0.5
                for i in range(5):
                    yt[i] = y[i] + 0.5 * h * k1[i]
            elif stage == 2:
                c = 0.5
                for i in range(5):
                    yt[i] = y[i] + 0.5 * h * k2[i]
            else:
                c = 1.0
                for i in range(5):
                    yt[i] = y[i] + h * k3[i]
            tq = t + c * h - tau
            if tq <= 0.0:
                # constant initial history
                for i in range(5):
                    ydel[i] = y0[i]
            else:
                j = int(tq / h)
                if j > n - 1:
                    j = n - 1
                theta = tq / h - j
                if theta > 1.0:
                    theta = 1.0
                _hermite(theta, h, hist_y[j % L], hist_y[(j + 1) % L],
                         hist_f[j % L], hist_f[(j + 1) % L], ydel)
            _rhs(yt, _g_of_t(t + c * h, sched, g0, g_final, t0),
                 omega0, omega, U, kappa, stage_out)
            stage_out[0] += k * (ydel[0] - yt[0])
            stage_out[1] += k * (ydel[1] - yt[1])
            if stage == 0:
                for i in range(5):
                    k1[i] = stage_out[i]
                    hist_y[n % L, i] = y[i]
                    hist_f[n % L, i] = stage_out[i]
            elif stage == 1:
                for i in range(5):
                    k2[i] = stage_out[i]
            elif stage == 2:
                for i in range(5):
                    k3[i] = stage_out[i]
            else:
                for i in range(5):
                    k4[i] = stage_out[i]
        for i in range(5):
            y[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    # store the final state (with its derivative) so the trailing window is complete
    nlast = n_steps % L
    for i in range(5):
        hist_y[nlast, i] = y[i]
    tq = n_steps * h - tau
    if tq <= 0.0:
        for i in range(5):
            ydel[i] = y0[i]
    else:
        j = int(tq / h)
        if j > n_steps - 1:
            j = n_steps - 1
        theta = tq / h - j
        if theta > 1.0:
            theta = 1.0
        _hermite(theta, h, hist_y[j % L], hist_y[(j + 1) % L],
                 hist_f[j % L], hist_f[(j + 1) % L], ydel)
    _rhs(y, _g_of_t(n_steps * h, sched, g0, g_final, t0), omega0, omega, U, kappa, k1)
    k1[0] += k * (ydel[0] - y[0])
    k1[1] += k * (ydel[1] - y[1])
    for i in range(5):
        hist_f[nlast, i] = k1[i]
    diag[0] = max_drift
    diag[1] = -1.0
    return OK
