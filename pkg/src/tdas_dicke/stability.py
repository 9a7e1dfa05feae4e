"""Linear stability of fixed points under delayed feedback.

Linearizes the mean-field flow (with j_z eliminated through the spin-length
constraint), evaluates the transcendental characteristic determinant

    det[ lambda*I4 - A' - k (exp(-lambda*tau) - 1) B' ] = 0,   B' = diag(1,1,0,0),

and locates the rightmost root lambda_1.  Candidate roots come from a
Chebyshev pseudospectral discretization of the solution-segment generator on
[-tau, 0]; each candidate is polished by Newton iteration on the determinant
with its analytic derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import thread_map
from .errors import DegenerateFixedPoint, DomainError, NotAFixedPoint, SearchFailed
from .model import (FixedPointKind, MeanFieldState, ModelParams, fixed_point,
                    fixed_point_residual)

B_PRIME = np.diag([1.0, 1.0, 0.0, 0.0])

#: Two roots closer than this (times kappa) are considered the same root.
DEDUP_TOL = 1e-9
#: Newton acceptance threshold on the Hadamard-normalized determinant.
NEWTON_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class LinearizedSystem:
    """Reduced 4-variable linearization around a fixed point, plus loop gain/delay."""

    A_prime: np.ndarray          # 4x4 [rad/us]
    k: float                     # feedback gain [rad/us]
    tau: float                   # delay [us]
    omega_tilde: float           # omega + U*jz [rad/us]
    omega0_tilde: float          # omega0 + U*|alpha|^2 [rad/us]
    fixed_point: MeanFieldState
    params: ModelParams

    @property
    def B_prime(self) -> np.ndarray:
        return B_PRIME


@dataclass(frozen=True)
class CharRoot:
    """A characteristic rate lambda with residual metadata."""

    lam: complex                 # [rad/us]
    residual: float              # |det Delta(lam)|
    multiplicity_hint: int = 1


def linearize(p: ModelParams, fp: MeanFieldState, k: float = 0.0,
              tau: float = 0.0) -> LinearizedSystem:
    """Build the reduced linearization A' at a fixed point.

    The j_z elimination divides by jz, so |jz| must stay away from zero;
    DegenerateFixedPoint is raised otherwise.  The input must actually be a
    fixed point (instantaneous derivative below 1e-9).
    """
    res = fixed_point_residual(fp, p)
    if res >= 1e-9:
        raise NotAFixedPoint(f"not a fixed point: residual {res:.3e} rad/us")
    x1, x2, jx, jy, jz = fp.x1, fp.x2, fp.jx, fp.jy, fp.jz
    if abs(jz) <= 1e-9:
        raise DegenerateFixedPoint("reduction requires |j_z| > 1e-9")
    wt = p.omega + p.U * jz
    wt0 = p.omega0 + p.U * (x1 * x1 + x2 * x2)
    g, U = p.g, p.U
    A = np.array([
        [-p.kappa, wt, -U * x2 * jx / jz, -U * x2 * jy / jz],
        [-wt, -p.kappa, -2.0 * g + U * x1 * jx / jz, U * x1 * jy / jz],
        [-2.0 * U * x1 * jy, -2.0 * U * x2 * jy, 0.0, -wt0],
        [2.0 * U * x1 * jx - 4.0 * g * jz, 2.0 * U * x2 * jx,
         wt0 + 4.0 * g * x1 * jx / jz, 4.0 * g * x1 * jy / jz],
    ])
    return LinearizedSystem(A_prime=A, k=float(k), tau=float(tau),
                            omega_tilde=wt, omega0_tilde=wt0,
                            fixed_point=fp, params=p)


def char_matrix(sys: LinearizedSystem, lam: complex) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        fb = sys.k * (np.exp(-lam * sys.tau) - 1.0)
    return lam * np.eye(4) - sys.A_prime - fb * B_PRIME


def char_det(sys: LinearizedSystem, lam: complex) -> complex:
    """Determinant of the 4x4 characteristic matrix at lambda.

    Reduces to det(lambda*I - A') for k = 0 or tau = 0.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        return complex(np.linalg.det(char_matrix(sys, lam)))


def _normalized_residual(sys: LinearizedSystem, lam: complex) -> float:
    """|det| divided by the Hadamard bound (product of row norms); scale-free."""
    M = char_matrix(sys, lam)
    if not np.all(np.isfinite(M)):
        return np.inf
    rows = np.linalg.norm(M, axis=1)
    bound = np.prod(np.maximum(rows, 1e-300))
    return abs(np.linalg.det(M)) / bound


def _newton(sys: LinearizedSystem, lam: complex, iters: int = 60):
    """Newton on det Delta(lambda) via d(det)/det = tr(Delta^-1 Delta')."""
    for _ in range(iters):
        M = char_matrix(sys, lam)
        if not np.all(np.isfinite(M)):
            return lam, False
        with np.errstate(over="ignore", invalid="ignore"):
            dfb = sys.k * sys.tau * np.exp(-lam * sys.tau)
        Mp = np.eye(4) + dfb * B_PRIME
        try:
            trace = np.trace(np.linalg.solve(M, Mp))
        except np.linalg.LinAlgError:
            return lam, True  # exactly singular: lam is a root
        if trace == 0 or not np.isfinite(trace):
            return lam, False
        step = 1.0 / trace
        lam = lam - step
        if abs(step) <= 1e-14 * max(1.0, abs(lam)):
            return lam, True
    return lam, abs(step) <= 1e-10 * max(1.0, abs(lam))


def chebyshev_nodes_and_diff(M: int):
    """Chebyshev extreme points on [-1, 1] and the differentiation matrix."""
    n = np.arange(M + 1)
    x = np.cos(np.pi * n / M)
    c = np.hstack([2.0, np.ones(M - 1), 2.0]) * (-1.0) ** n
    X = np.tile(x, (M + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(M + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def collocation_eigenvalues(A0: np.ndarray, A1: np.ndarray, tau: float,
                            degree: int) -> np.ndarray:
    """Spectrum of the pseudospectral generator of dy/dt = A0 y(t) + A1 y(t-tau).

    Discretizes the solution segment on degree+1 Chebyshev points over
    [-tau, 0]; the rightmost eigenvalues approximate characteristic roots and
    serve as Newton seeds.  Works for complex matrices.
    """
    n = A0.shape[0]
    _, D = chebyshev_nodes_and_diff(degree)
    Dt = D * (2.0 / tau)  # theta = (x - 1) * tau / 2
    dtype = np.promote_types(A0.dtype, A1.dtype)
    S = np.zeros(((degree + 1) * n, (degree + 1) * n), dtype=np.promote_types(dtype, np.float64))
    S[n:, :] = np.kron(Dt[1:, :], np.eye(n))
    S[:n, :n] = A0
    S[:n, degree * n:] += A1
    return np.linalg.eigvals(S)


def _default_degree(sys: LinearizedSystem) -> int:
    # resolve soft-branch roots: |lambda|*tau up to a few times omega0_tilde*tau
    target = 9.0 * abs(sys.omega0_tilde) * sys.tau
    return int(min(128, max(40, target)))


def characteristic_roots(sys: LinearizedSystem, degree: Optional[int] = None,
                         extra_seeds: Sequence[complex] = ()) -> list:
    """All converged characteristic roots inside the search window, sorted by
    descending real part (Im >= 0 representatives of conjugate pairs).

    Window: Re in [-5 kappa, +5 kappa], |Im| <= 3 (|omega_tilde| + kappa).
    """
    p = sys.params
    if sys.k == 0.0 or sys.tau == 0.0:
        cands = list(np.linalg.eigvals(sys.A_prime))
    else:
        if degree is None:
            degree = _default_degree(sys)
        A0 = sys.A_prime - sys.k * B_PRIME
        A1 = sys.k * B_PRIME
        cands = list(collocation_eigenvalues(A0, A1, sys.tau, degree))
    cands.extend(extra_seeds)
    re_lim = 5.0 * p.kappa
    im_lim = 3.0 * (abs(sys.omega_tilde) + p.kappa)
    roots = []
    residuals = []
    for c in cands:
        if not (-re_lim <= c.real <= re_lim and abs(c.imag) <= im_lim):
            continue
        lam, ok = _newton(sys, complex(c))
        res = _normalized_residual(sys, lam)
        residuals.append(res)
        if not ok or res >= NEWTON_RESIDUAL_TOL:
            continue
        if not (-re_lim <= lam.real <= re_lim and abs(lam.imag) <= im_lim):
            continue
        if lam.imag < 0:
            lam = lam.conjugate()
        roots.append(lam)
    if not roots:
        raise SearchFailed("no characteristic root converged in the search window",
                           candidates=cands, residuals=residuals)
    roots.sort(key=lambda z: (-z.real, z.imag))
    dedup = []
    for r in roots:
        if not any(abs(r - o) < DEDUP_TOL * p.kappa for o in dedup):
            dedup.append(r)
    return dedup


def rightmost_root(sys: LinearizedSystem, degree: Optional[int] = None,
                   extra_seeds: Sequence[complex] = ()) -> CharRoot:
    """Root of det Delta(lambda) = 0 with maximal real part in the search
    window.  The sign of Re lambda_1 classifies stability of the fixed point."""
    roots = characteristic_roots(sys, degree=degree, extra_seeds=extra_seeds)
    lam1 = roots[0]
    near = sum(1 for r in roots if abs(r - lam1) < 1e-6 * max(1.0, abs(lam1)))
    return CharRoot(lam=lam1, residual=abs(char_det(sys, lam1)),
                    multiplicity_hint=max(near, 1))


def approx_rightmost(sys: LinearizedSystem) -> CharRoot:
    """Small-delay closed form lambda ~ lambda_(0) + lambda_(1).

    lambda_(0) is purely imaginary in the regimes of interest and lambda_(1),
    proportional to kappa*(1 + k*tau), carries the real part.  Valid for fixed
    points with j_y = 0 and small lambda_1 * tau.
    """
    fp = sys.fixed_point
    if abs(fp.jy) > 1e-12:
        raise DomainError("small-delay approximation requires j_y = 0")
    p = sys.params
    wt, wt0 = sys.omega_tilde, sys.omega0_tilde
    mixed = abs(2.0 * p.g * fp.jz - p.U * fp.alpha * fp.jx) ** 2
    denom = p.kappa**2 + wt**2
    radicand = (wt0**2 + 4.0 * p.g * wt0 * fp.x1 * fp.jx / fp.jz
                + 2.0 * wt * wt0 * mixed / (denom * fp.jz))
    if radicand < -1e-12 * max(wt0**2, 1.0):
        raise DomainError(f"lambda_(0) radicand negative ({radicand:.3e}): "
                          "outside the oscillatory regime")
    lam0 = 1j * math.sqrt(max(radicand, 0.0))
    lam1 = (p.kappa * (1.0 + sys.k * sys.tau)
            * 2.0 * wt * wt0 * mixed / (denom**2 * fp.jz))
    lam = lam0 + lam1
    return CharRoot(lam=lam, residual=abs(char_det(sys, lam)))


@dataclass
class TauScan:
    """Rightmost-root curve along a delay grid at fixed gain."""

    taus: np.ndarray
    k: float
    lambda1: np.ndarray           # complex, NaN where not converged
    residual: np.ndarray
    converged: np.ndarray         # bool
    crossings: list = field(default_factory=list)  # grid indices of branch exchanges

    @property
    def argmin_tau(self) -> float:
        re = np.where(self.converged, self.lambda1.real, np.inf)
        return float(self.taus[int(np.argmin(re))])

    @property
    def min_re(self) -> float:
        re = np.where(self.converged, self.lambda1.real, np.inf)
        return float(np.min(re))


def _flag_crossings(taus, lam, converged):
    """Neighbor pairs where the dominant branch visibly exchanges (cusp)."""
    idx = []
    for i in range(len(taus) - 1):
        if not (converged[i] and converged[i + 1]):
            continue
        scale = max(abs(lam[i].imag), abs(lam[i + 1].imag), 1e-12)
        if abs(lam[i + 1].imag - lam[i].imag) > 0.25 * scale:
            idx.append(i)
            continue
        re0, re1 = lam[i].real, lam[i + 1].real
        if abs(re1 - re0) > 0.5 * max(abs(re0), abs(re1), 1e-15):
            idx.append(i)
    return idx


def scan_tau(p: ModelParams, fp_kind: str, k: float, tau_grid) -> TauScan:
    """rightmost_root along a sorted tau grid, warm-starting Newton from the
    previous grid point on top of the cold pseudospectral candidates."""
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0 or np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be nonempty and strictly increasing")
    fp = fixed_point(fp_kind, p)
    lam = np.full(taus.shape, np.nan + 0j, dtype=complex)
    res = np.full(taus.shape, np.nan)
    conv = np.zeros(taus.shape, dtype=bool)
    prev = None
    first_error = None
    for i, tau in enumerate(taus):
        sys = linearize(p, fp, k=k, tau=tau)
        seeds = (prev,) if prev is not None else ()
        try:
            root = rightmost_root(sys, extra_seeds=seeds)
        except SearchFailed as err:
            first_error = first_error or (i, err)
            continue
        lam[i] = root.lam
        res[i] = root.residual
        conv[i] = True
        prev = root.lam
    if not conv.any():
        i, err = first_error
        raise SearchFailed(f"tau scan failed from grid index {i}: {err}",
                           candidates=err.candidates, residuals=err.residuals)
    return TauScan(taus=taus, k=k, lambda1=lam, residual=res, converged=conv,
                   crossings=_flag_crossings(taus, lam, conv))


@dataclass
class KTauScan:
    """Re lambda_1 surface over a (k, tau) grid."""

    ks: np.ndarray
    taus: np.ndarray
    lambda1: np.ndarray           # (len(ks), len(taus)) complex
    residual: np.ndarray
    converged: np.ndarray

    def argmin_cell(self):
        re = np.where(self.converged, self.lambda1.real, np.inf)
        i, j = np.unravel_index(int(np.argmin(re)), re.shape)
        return float(self.ks[i]), float(self.taus[j])


def scan_k_tau(p: ModelParams, fp_kind: str, k_grid, tau_grid) -> KTauScan:
    """Full (k, tau) surface; rows (fixed k) are independent and evaluated
    concurrently.  Per-cell search failures are recorded, not fatal."""
    ks = np.asarray(k_grid, dtype=float)
    taus = np.asarray(tau_grid, dtype=float)
    if ks.size == 0 or taus.size == 0:
        raise ValueError("grids must be nonempty")
    fp = fixed_point(fp_kind, p)

    def row(k):
        lam = np.full(taus.shape, np.nan + 0j, dtype=complex)
        res = np.full(taus.shape, np.nan)
        conv = np.zeros(taus.shape, dtype=bool)
        prev = None
        for j, tau in enumerate(taus):
            sys = linearize(p, fp, k=k, tau=tau)
            try:
                root = rightmost_root(sys, extra_seeds=(prev,) if prev is not None else ())
            except SearchFailed:
                prev = None
                continue
            lam[j] = root.lam
            res[j] = root.residual
            conv[j] = True
            prev = root.lam
        return lam, res, conv

    rows = thread_map(row, list(ks))
    lam = np.stack([r[0] for r in rows])
    res = np.stack([r[1] for r in rows])
    conv = np.stack([r[2] for r in rows])
    return KTauScan(ks=ks, taus=taus, lambda1=lam, residual=res, converged=conv)


def write_scan_csv(scan, path) -> None:
    """CSV export: k,tau_us,re_lambda1_radus,im_lambda1_radus,residual,converged."""
    header = "k,tau_us,re_lambda1_radus,im_lambda1_radus,residual,converged\n"

    def fmt(v):
        return format(v, ".17g")

    with open(path, "w") as fh:
        fh.write(header)
        if isinstance(scan, TauScan):
            rows = (((scan.k, scan.taus[i], scan.lambda1[i], scan.residual[i],
                      scan.converged[i])) for i in range(len(scan.taus)))
        else:
            rows = ((scan.ks[i], scan.taus[j], scan.lambda1[i, j],
                     scan.residual[i, j], scan.converged[i, j])
                    for i in range(len(scan.ks)) for j in range(len(scan.taus)))
        for k, tau, lam, res, conv in rows:
            fh.write(",".join([fmt(k), fmt(tau), fmt(lam.real), fmt(lam.imag),
                               fmt(res), "1" if conv else "0"]) + "\n")
