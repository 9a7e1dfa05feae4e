"""Core model: parameter types, mean-field vector field, fixed points, and the
optical feedback network algebra.

Unit convention: all angular frequencies and rates are stored in rad/us, all
times in us.  A quantity quoted as "f * 2pi MHz" is stored as f * 2pi rad/us,
so experimental numbers map one-to-one onto stored values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, InvariantViolation, NotAFixedPoint

TWO_PI = 2.0 * math.pi

# Treat |U| below this (rad/us) as the U = 0 branch of the super-radiant
# fixed-point formula, which is a removable singularity of the general form.
U_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the open Dicke model (rad/us, atom count N)."""

    omega0: float  # atomic frequency [rad/us]
    omega: float   # cavity detuning [rad/us]
    U: float       # dispersive nonlinearity [rad/us]
    kappa: float   # total cavity decay rate [rad/us]
    g: float       # linear coupling [rad/us]
    N: float = 1e5  # atom count; only used to build near-normal initial states

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvariantViolation(f"kappa must be positive, got {self.kappa}")
        if not self.omega0 > 0:
            raise InvariantViolation(f"omega0 must be positive, got {self.omega0}")
        if not self.N >= 1:
            raise InvariantViolation(f"N must be >= 1, got {self.N}")

    @classmethod
    def from_2pi_mhz(cls, omega0, omega, U, kappa, g, N=1e5) -> "ModelParams":
        """Build from values quoted in units of 2pi MHz."""
        return cls(omega0=omega0 * TWO_PI, omega=omega * TWO_PI, U=U * TWO_PI,
                   kappa=kappa * TWO_PI, g=g * TWO_PI, N=N)

    def with_g(self, g: float) -> "ModelParams":
        return replace(self, g=g)


@dataclass(frozen=True)
class FeedbackParams:
    """Optical loop description: mirror rates, beam-splitter amplitudes, phase,
    delay, and the derived gain k = r*s*sqrt(kappa_b*kappa_c)."""

    kappa_b: float  # left-mirror decay rate [rad/us]
    kappa_c: float  # right-mirror decay rate [rad/us]
    r: float        # beam-splitter amplitude, r >= 0
    s: float        # beam-splitter amplitude, s >= 0
    phi: float = 0.0  # loop phase [rad]
    tau: float = 0.0  # delay [us]
    k: float = 0.0    # derived gain [rad/us]; filled in automatically

    def __post_init__(self):
        if self.r < 0 or self.s < 0:
            raise InvariantViolation("beam-splitter amplitudes must be nonnegative")
        if abs(self.r**2 + self.s**2 - 2.0) > 1e-12:
            raise InvariantViolation(
                f"r^2 + s^2 must equal 2, got {self.r**2 + self.s**2!r}")
        if self.kappa_b < 0 or self.kappa_c < 0:
            raise InvariantViolation("mirror decay rates must be nonnegative")
        if self.tau < 0:
            raise InvariantViolation("delay must be nonnegative")
        object.__setattr__(self, "k", self.r * self.s * math.sqrt(self.kappa_b * self.kappa_c))

    @classmethod
    def ideal(cls, kappa: float, tau: float, phi: float = 0.0) -> "FeedbackParams":
        """Lossless symmetric loop: r = s = 1, kappa_b = kappa_c = kappa/2, so k = kappa/2."""
        return cls(kappa_b=kappa / 2, kappa_c=kappa / 2, r=1.0, s=1.0, phi=phi, tau=tau)

    @classmethod
    def open_loop(cls, kappa: float) -> "FeedbackParams":
        """No feedback: r = 0 closes the loop arm, k = 0."""
        return cls(kappa_b=kappa / 2, kappa_c=kappa / 2, r=0.0, s=math.sqrt(2.0))

    @classmethod
    def from_gain(cls, kappa: float, k: float, tau: float, phi: float = 0.0) -> "FeedbackParams":
        """Symmetric-mirror loop with a prescribed gain 0 <= k <= kappa/2.

        Solves r*s = k / sqrt(kappa_b*kappa_c) under r^2 + s^2 = 2, taking the
        r <= 1 branch.
        """
        kb = kc = kappa / 2
        q = k / math.sqrt(kb * kc)
        if not 0 <= q <= 1 + 1e-12:
            raise InvariantViolation(f"gain k={k} outside [0, sqrt(kappa_b*kappa_c)]")
        q = min(q, 1.0)
        r = math.sqrt(1.0 - math.sqrt(1.0 - q * q))
        s = math.sqrt(2.0 - r * r)
        return cls(kappa_b=kb, kappa_c=kc, r=r, s=s, phi=phi, tau=tau)


@dataclass(frozen=True)
class MeanFieldState:
    """The five real mean-field variables (x1, x2, j_x, j_y, j_z)."""

    x1: float
    x2: float
    jx: float
    jy: float
    jz: float

    @property
    def alpha(self) -> complex:
        """Rescaled cavity amplitude <a>/sqrt(N) = x1 + i*x2."""
        return complex(self.x1, self.x2)

    @property
    def photon_number(self) -> float:
        """Normalized photon number |alpha|^2."""
        return self.x1 * self.x1 + self.x2 * self.x2

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.jx, self.jy, self.jz])

    @classmethod
    def from_array(cls, y) -> "MeanFieldState":
        return cls(*(float(v) for v in y))

    def spin_norm_error(self) -> float:
        """|j_x^2 + j_y^2 + j_z^2 - 1/4|."""
        return abs(self.jx**2 + self.jy**2 + self.jz**2 - 0.25)

    def parity_image(self) -> "MeanFieldState":
        """Image under the parity transformation (x1, x2, j_x) -> -(x1, x2, j_x)."""
        return MeanFieldState(-self.x1, -self.x2, -self.jx, self.jy, self.jz)


NORMAL_STATE = MeanFieldState(0.0, 0.0, 0.0, 0.0, -0.5)
INVERTED_STATE = MeanFieldState(0.0, 0.0, 0.0, 0.0, 0.5)


class FixedPointKind:
    """Tags for the analytic fixed-point families."""

    NORMAL = "normal"
    INVERTED = "inverted"
    SUPERRADIANT_PLUS = "superradiant_plus"
    SUPERRADIANT_MINUS = "superradiant_minus"

    ALL = (NORMAL, INVERTED, SUPERRADIANT_PLUS, SUPERRADIANT_MINUS)


def critical_coupling(p: ModelParams) -> float:
    """Critical coupling of the normal -> super-radiant transition.

    g_c = sqrt( omega0 [(omega - U/2)^2 + kappa^2] / (4 (omega - U/2)) )

    Raises DomainError when omega - U/2 <= 0, where the formula has no real
    value (the normal phase does not lose stability through this branch).
    """
    wt = p.omega - p.U / 2
    if wt <= 0:
        raise DomainError(
            f"critical coupling undefined for omega - U/2 = {wt} <= 0")
    return math.sqrt(p.omega0 * (wt * wt + p.kappa * p.kappa) / (4.0 * wt))


def superradiant_threshold(p: ModelParams) -> float:
    """Coupling at which the super-radiant pair comes into existence.

    For omega - U/2 > 0 the pair branches off the normal phase at
    critical_coupling(p).  For omega + U/2 < 0 it instead branches off the
    inverted phase (j_z = +1/2), at the coupling where that phase's stationary
    bifurcation occurs.  Raises DomainError if neither branch applies.
    """
    thresholds = []
    if p.omega - p.U / 2 > 0:
        thresholds.append(critical_coupling(p))
    wt_inv = p.omega + p.U / 2
    if wt_inv < 0:
        thresholds.append(math.sqrt(-p.omega0 * (wt_inv * wt_inv + p.kappa * p.kappa)
                                    / (4.0 * wt_inv)))
    if not thresholds:
        raise DomainError("no super-radiant branch point for these parameters")
    return min(thresholds)


def _superradiant_jz(p: ModelParams) -> float:
    """Solve the fixed-point condition for j_z in the super-radiant phase."""
    g2 = p.g * p.g
    if abs(p.U) < U_ZERO_TOL:
        # U = 0 branch: j_z = -g_c^2 / (2 g^2)
        gc = critical_coupling(p)
        return -gc * gc / (2.0 * g2)
    # Quadratic in j_z: U(w0 U + 4g^2) jz^2 + 2 w (w0 U + 4g^2) jz
    #                   + w0 (w^2 + kappa^2) + g^2 U = 0
    a = p.U * (p.omega0 * p.U + 4.0 * g2)
    b = 2.0 * p.omega * (p.omega0 * p.U + 4.0 * g2)
    c = p.omega0 * (p.omega**2 + p.kappa**2) + g2 * p.U
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise DomainError("negative radicand in the super-radiant j_z formula")
    sq = math.sqrt(disc)
    lo = (-b - sq) / (2.0 * a)
    hi = (-b + sq) / (2.0 * a)
    physical = [r for r in (lo, hi) if abs(r) <= 0.5 + 1e-14]
    if not physical:
        raise NotAFixedPoint(
            f"no super-radiant fixed point at g = {p.g} (both j_z roots leave the sphere)")
    # When both roots are admissible, keep the one on the branch that grows
    # continuously out of the threshold (the -sqrt root for omega - U/2 > 0).
    return physical[0] if len(physical) == 1 else (lo if abs(lo) <= 0.5 + 1e-14 else hi)


def fixed_point(kind: str, p: ModelParams) -> MeanFieldState:
    """Analytic fixed point of the mean-field equations.

    The normal and inverted states exist at all parameters.  The super-radiant
    pair requires g above superradiant_threshold(p); NotAFixedPoint is raised
    otherwise.  Feedback does not move any of these points.
    """
    if kind == FixedPointKind.NORMAL:
        return NORMAL_STATE
    if kind == FixedPointKind.INVERTED:
        return INVERTED_STATE
    if kind not in (FixedPointKind.SUPERRADIANT_PLUS, FixedPointKind.SUPERRADIANT_MINUS):
        raise ValueError(f"unknown fixed point kind {kind!r}")
    g_thr = superradiant_threshold(p)
    if p.g <= g_thr:
        raise NotAFixedPoint(
            f"super-radiant phase requires g > {g_thr:.6g} rad/us, got g = {p.g:.6g}")
    jz = _superradiant_jz(p)
    if abs(jz) > 0.5:
        raise DomainError("super-radiant j_z outside the Bloch sphere")
    sign = 1.0 if kind == FixedPointKind.SUPERRADIANT_PLUS else -1.0
    jx = sign * math.sqrt(max(0.25 - jz * jz, 0.0))
    wt = p.omega + p.U * jz
    alpha = -2.0 * p.g * jx / complex(wt, -p.kappa)
    return MeanFieldState(alpha.real, alpha.imag, jx, 0.0, jz)


def mean_field_rhs(x: MeanFieldState, p: ModelParams) -> MeanFieldState:
    """Instantaneous part of the mean-field derivatives (no feedback terms).

    The delayed force k*(x_i(t-tau) - x_i(t)) on the quadratures is applied by
    the integrator, not here.
    """
    wt = p.omega + p.U * x.jz
    wt0 = p.omega0 + p.U * (x.x1**2 + x.x2**2)
    return MeanFieldState(
        -p.kappa * x.x1 + wt * x.x2,
        -p.kappa * x.x2 - wt * x.x1 - 2.0 * p.g * x.jx,
        -wt0 * x.jy,
        wt0 * x.jx - 4.0 * p.g * x.x1 * x.jz,
        4.0 * p.g * x.x1 * x.jy,
    )


def fixed_point_residual(x: MeanFieldState, p: ModelParams) -> float:
    """Max-norm of the instantaneous mean-field derivative at x."""
    return float(np.max(np.abs(mean_field_rhs(x, p).as_array())))


def feedback_gain(f: FeedbackParams) -> float:
    """Feedback gain k = r*s*sqrt(kappa_b*kappa_c); maximal (= sqrt(kb*kc)) at r = s = 1."""
    if abs(f.r**2 + f.s**2 - 2.0) > 1e-12:
        raise InvariantViolation("r^2 + s^2 must equal 2")
    return f.r * f.s * math.sqrt(f.kappa_b * f.kappa_c)


def beam_splitter_matrices(r: float, s: float, phi: float):
    """The two 2x2 unitaries of the feedback network.

    BS1 mixes the fresh vacuum port with the cavity output; BS2 recombines the
    delayed (phase-shifted) arm with the direct arm onto the input mirror.
    """
    ph = np.exp(-1j * phi / 2)
    s1 = ph / math.sqrt(2.0) * np.array(
        [[s, -r * np.exp(1j * phi / 2)],
         [r * np.exp(-1j * phi / 2), s]])
    s2 = ph / math.sqrt(2.0) * np.array(
        [[-r, -s * np.exp(1j * phi / 2)],
         [s * np.exp(-1j * phi / 2), -r]])
    return s1, s2


def effective_input_transform(f: FeedbackParams, c_out_now: complex,
                              c_out_delayed: complex) -> complex:
    """Deterministic part of the field incident on the input mirror.

    Equals (r*s/2) * (c_out(t) - c_out(t - tau)): the loop phase cancels by
    construction of the beam-splitter network, which is what makes the control
    force vanish in steady state.
    """
    return (f.r * f.s / 2.0) * (c_out_now - c_out_delayed)
