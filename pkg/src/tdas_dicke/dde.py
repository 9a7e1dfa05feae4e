"""Time integration of the delayed mean-field equations, plus trajectory
post-processing (low-pass filtering, relaxation-time extraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels
from .errors import InvariantViolation, NonFiniteState, StepTooLarge
from .model import FeedbackParams, MeanFieldState, ModelParams

#: Cap on stored samples when no stride is given; keeps long runs in memory.
_MAX_AUTO_SAMPLES = 200_000


class NotConverged:
    """Sentinel value returned by relaxation_time when the trajectory never
    settles inside the target ball."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NotConverged"

    def __bool__(self):
        return False


NOT_CONVERGED = NotConverged()


@dataclass(frozen=True)
class RampSchedule:
    """Square-root coupling sweep: g(t) = g_final * sqrt(t/t0) for t <= t0,
    held at g_final afterwards."""

    t0: float       # sweep timescale [us]
    g_final: float  # target coupling [rad/us]

    def __post_init__(self):
        if self.t0 <= 0 or not math.isfinite(self.g_final):
            raise InvariantViolation("ramp requires t0 > 0 and finite g_final")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.g_final * np.sqrt(np.clip(t / self.t0, 0.0, 1.0))


@dataclass(frozen=True)
class InitialCondition:
    """Initial state plus its constant extension over [-tau, 0]."""

    state: MeanFieldState

    @classmethod
    def from_state(cls, state: MeanFieldState) -> "InitialCondition":
        return cls(state=state)

    @classmethod
    def near_normal(cls, N: float) -> "InitialCondition":
        """Normal phase tipped by 1/sqrt(N) in j_x and j_y, on the sphere exactly.

        Mimics the seeding role of quantum fluctuations in a sweep experiment.
        """
        if N <= 8:
            raise InvariantViolation("near-normal state needs N > 8")
        a = 1.0 / math.sqrt(N)
        return cls(state=MeanFieldState(0.0, 0.0, a, a, -math.sqrt(0.25 - 2.0 / N)))


@dataclass
class Trajectory:
    """Uniformly sampled solution of the (delayed) mean-field equations.

    times has uniform spacing (the storage step); states holds one row
    (x1, x2, jx, jy, jz) per sample; g the coupling used at each sample time.
    The trailing window of raw integrator steps over [t_end - tau, t_end] is
    kept for dense interpolation.
    """

    times: np.ndarray
    states: np.ndarray
    g: np.ndarray
    h: float                      # internal integrator step [us]
    tau: float
    max_constraint_violation: float
    hist_times: Optional[np.ndarray] = field(default=None, repr=False)
    hist_states: Optional[np.ndarray] = field(default=None, repr=False)
    hist_derivs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def photon_number(self) -> np.ndarray:
        return self.states[:, 0] ** 2 + self.states[:, 1] ** 2

    def state_at(self, i: int) -> MeanFieldState:
        return MeanFieldState.from_array(self.states[i])

    @property
    def final_state(self) -> MeanFieldState:
        return self.state_at(-1)

    def sample_dense(self, t: float) -> np.ndarray:
        """Cubic Hermite evaluation on the stored trailing window."""
        if self.hist_times is None:
            raise ValueError("no dense history stored (undelayed run)")
        th = self.hist_times
        if not th[0] <= t <= th[-1]:
            raise ValueError(f"t={t} outside stored window [{th[0]}, {th[-1]}]")
        j = min(int((t - th[0]) / self.h), len(th) - 2)
        u = (t - th[j]) / self.h
        u2, u3 = u * u, u * u * u
        h00 = 2 * u3 - 3 * u2 + 1
        h10 = u3 - 2 * u2 + u
        h01 = -2 * u3 + 3 * u2
        h11 = u3 - u2
        return (h00 * self.hist_states[j] + h01 * self.hist_states[j + 1]
                + self.h * (h10 * self.hist_derivs[j] + h11 * self.hist_derivs[j + 1]))


def default_step(p: ModelParams, f: FeedbackParams) -> float:
    """Step resolving both the delay (tau/20) and the fastest oscillation (~omega)."""
    h = 2.0 * math.pi / (50.0 * max(abs(p.omega), p.kappa))
    if f.k > 0 and f.tau > 0:
        h = min(h, f.tau / 20.0)
    return h


def _pick_stride(n_steps: int, stride: Optional[int]) -> int:
    if stride is not None:
        if stride < 1:
            raise InvariantViolation("stride must be >= 1")
        return int(stride)
    return max(1, int(math.ceil(n_steps / _MAX_AUTO_SAMPLES)))


def _run(p, f, ic, t_end, h, stride, sched, g0, g_final, t0):
    if t_end <= 0:
        raise InvariantViolation("t_end must be positive")
    if h is None:
        h = default_step(p, f)
    if h <= 0:
        raise InvariantViolation("step h must be positive")
    delayed = f.k > 0 and f.tau > 0
    if f.tau > 0 and h > f.tau:
        raise StepTooLarge(f"step h={h} exceeds delay tau={f.tau}")
    n_steps = int(round(t_end / h))
    if n_steps < 1:
        raise InvariantViolation("t_end shorter than one step")
    stride = _pick_stride(n_steps, stride)
    n_steps = int(math.ceil(n_steps / stride)) * stride  # land the last sample on t_end
    n_out = n_steps // stride + 1
    out_states = np.empty((n_out, 5))
    out_g = np.empty(n_out)
    diag = np.empty(2)
    y0 = ic.state.as_array()

    if delayed:
        L = int(math.ceil(f.tau / h)) + 3
        hist_y = np.zeros((L, 5))
        hist_f = np.zeros((L, 5))
        status = _kernels.rk4_dde(y0, n_steps, h, f.tau, f.k,
                                  p.omega0, p.omega, p.U, p.kappa,
                                  sched, g0, g_final, t0,
                                  stride, out_states, out_g, hist_y, hist_f, diag)
    else:
        hist_y = hist_f = None
        status = _kernels.rk4_ode(y0, n_steps, h,
                                  p.omega0, p.omega, p.U, p.kappa,
                                  sched, g0, g_final, t0,
                                  stride, out_states, out_g, diag)
    if status == _kernels.NONFINITE:
        t_fail = diag[1] * h
        raise NonFiniteState(f"state diverged at t = {t_fail:.6g} us", t=t_fail)

    times = np.arange(n_out) * (stride * h)
    traj = Trajectory(times=times, states=out_states, g=out_g, h=h, tau=f.tau,
                      max_constraint_violation=float(diag[0]))
    if delayed:
        # unroll the ring buffer into the trailing window [t_end - tau, t_end]
        L = hist_y.shape[0]
        idx = np.arange(n_steps - (L - 1), n_steps + 1)
        idx = idx[idx >= 0]
        traj.hist_times = idx * h
        traj.hist_states = hist_y[idx % L]
        traj.hist_derivs = hist_f[idx % L]
    return traj


def integrate(p: ModelParams, f: FeedbackParams, ic: InitialCondition,
              t_end: float, h: Optional[float] = None,
              stride: Optional[int] = None) -> Trajectory:
    """Integrate the delayed mean-field equations at constant coupling p.g.

    The feedback force k*(x_i(t-tau) - x_i(t)) acts on the two quadratures
    only.  For k = 0 or tau = 0 this reduces to a plain RK4 integration of the
    instantaneous vector field.  Local accuracy is fourth order; delayed values
    come from cubic Hermite dense output, which preserves that order for
    h <= tau.

    Raises StepTooLarge when tau > 0 and h > tau, and NonFiniteState (with the
    failing time) if the state diverges.
    """
    return _run(p, f, ic, t_end, h, stride, sched=0, g0=p.g, g_final=p.g, t0=1.0)


def integrate_ramp(p: ModelParams, f: FeedbackParams, ramp: RampSchedule,
                   ic: InitialCondition, t_end: float, h: Optional[float] = None,
                   stride: Optional[int] = None) -> Trajectory:
    """Same stepping as integrate, with g replaced by the ramp schedule at
    every internal stage evaluation (p.g is ignored)."""
    return _run(p, f, ic, t_end, h, stride, sched=1, g0=0.0,
                g_final=ramp.g_final, t0=ramp.t0)


def lowpass(series: np.ndarray, cutoff: float, sample_spacing: float) -> np.ndarray:
    """Zero-phase (forward-backward) first-order exponential low-pass filter.

    cutoff is an angular frequency [rad/us]; DC gain is exactly 1, and a pure
    tone at angular frequency w is attenuated by ~(1 + (w/cutoff)^2)^-1 after
    the two passes.
    """
    if cutoff <= 0:
        raise InvariantViolation("cutoff must be positive")
    x = np.asarray(series, dtype=float)
    a = 1.0 - math.exp(-cutoff * sample_spacing)
    y = np.empty_like(x)
    acc = x[0]
    y[0] = acc
    for i in range(1, len(x)):
        acc += a * (x[i] - acc)
        y[i] = acc
    z = np.empty_like(y)
    acc = y[-1]
    z[-1] = acc
    for i in range(len(y) - 2, -1, -1):
        acc += a * (y[i] - acc)
        z[i] = acc
    return z


def relaxation_time(traj: Trajectory, target: MeanFieldState, eps: float = 1e-3
                    ) -> Union[float, NotConverged]:
    """Smallest sampled t* with ||x(t) - target||_2 < eps for every sampled
    t >= t*; NOT_CONVERGED if the trajectory never stays inside the ball."""
    if eps <= 0:
        raise InvariantViolation("eps must be positive")
    d = np.linalg.norm(traj.states - target.as_array()[None, :], axis=1)
    outside = np.nonzero(d >= eps)[0]
    if len(outside) == 0:
        return float(traj.times[0])
    if outside[-1] == len(d) - 1:
        return NOT_CONVERGED
    return float(traj.times[outside[-1] + 1])


def write_trajectory_csv(traj: Trajectory, path, stride: int = 1) -> None:
    """CSV export: t_us,x1,x2,jx,jy,jz,g,photon_number, one row per stride."""
    pn = traj.photon_number
    with open(path, "w") as fh:
        fh.write("t_us,x1,x2,jx,jy,jz,g,photon_number\n")
        for i in range(0, len(traj.times), stride):
            row = [traj.times[i], *traj.states[i], traj.g[i], pn[i]]
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
