"""Radius-parametrized radial cell transformation.

The map sends the reference cell Y = (0,1)^2 with a centered obstacle of
radius ``r0`` onto the same cell with obstacle radius ``r_gamma``, acting only
inside the annulus ``r_min - delta <= |y - x_M| <= r_max + delta``.  It is
built from a scalar radial profile: a five-branch piecewise-linear rescaling
of the distance to the center, smoothed by convolution with the standard
compactly supported bump kernel of width ``delta_tilde = delta/3``.

Evaluation strategy.  The piecewise-linear profile minus the identity is a
sum of four hinge functions ``kappa * (s - b)_+``, so its mollification is a
linear combination of one universal smooth function: the twice-integrated
bump.  That function and its derivative (the bump's CDF) are tabulated once
on a fine grid and evaluated through a single cubic Hermite spline, which
makes value and derivative polynomially consistent, keeps the structural
identities (identity map at r0, identity outside the annulus) exact to
machine precision, and costs O(1) per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import NumericalError


# ---------------------------------------------------------------------------
# Universal mollifier kernel: eta(z) ~ exp(-1/(1-z^2)) normalized to unit mass.
# G2 = second antiderivative with G2(-1) = G2'(-1) = 0, so G2'' = eta and
# G2' = Phi is the kernel CDF with Phi(1) = 1 exactly.
# ---------------------------------------------------------------------------

_KERNEL_INTERVALS = 4096


def _bump_raw(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - t[m] * t[m]))
    return out


def _build_kernel() -> tuple[CubicHermiteSpline, CubicHermiteSpline, float]:
    knots = np.linspace(-1.0, 1.0, _KERNEL_INTERVALS + 1)
    gx, gw = np.polynomial.legendre.leggauss(8)
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    s = mid[:, None] + half[:, None] * gx[None, :]
    w = half[:, None] * gw[None, :]
    inc1 = np.sum(w * _bump_raw(s), axis=1)
    G1 = np.concatenate([[0.0], np.cumsum(inc1)])
    mass = G1[-1]
    # inner integral of eta from each interval start to each quadrature node
    inner = np.empty_like(s)
    for q in range(s.shape[1]):
        hh = 0.5 * (s[:, q] - a)
        mm = 0.5 * (s[:, q] + a)
        ss = mm[:, None] + hh[:, None] * gx[None, :]
        inner[:, q] = np.sum(hh[:, None] * gw[None, :] * _bump_raw(ss), axis=1)
    inc2 = np.sum(w * (G1[:-1][:, None] + inner), axis=1)
    G2 = np.concatenate([[0.0], np.cumsum(inc2)])
    g_knots = G2 / mass
    phi_knots = G1 / mass
    phi_knots[-1] = 1.0
    g_spline = CubicHermiteSpline(knots, g_knots, phi_knots)
    return g_spline, g_spline.derivative(), float(g_spline(1.0))


_G_SPLINE, _PHI_SPLINE, _G_AT_ONE = _build_kernel()
# total kernel mass after normalization; the linear tail of g and the CDF
# plateau both carry it, so the identity properties hold exactly iff it is one
_KERNEL_MASS = 1.0


def _kernel_g(z: np.ndarray) -> np.ndarray:
    """Twice-integrated unit-mass bump; g(z) = 0 for z <= -1, g' = Phi."""
    z = np.asarray(z, dtype=float)
    out = np.where(z >= 1.0, (z - 1.0) * _KERNEL_MASS + _G_AT_ONE, 0.0)
    m = (z > -1.0) & (z < 1.0)
    if np.any(m):
        out[m] = _G_SPLINE(z[m])
    return out


def _kernel_cdf(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.where(z >= 1.0, _KERNEL_MASS, 0.0)
    m = (z > -1.0) & (z < 1.0)
    if np.any(m):
        out[m] = _PHI_SPLINE(z[m])
    return out


# ---------------------------------------------------------------------------
# Parameters and evaluation records
# ---------------------------------------------------------------------------

X_CENTER = np.array([0.5, 0.5])


@dataclass(frozen=True)
class TransformParams:
    """Geometry constants of the radial map.

    ``delta`` is the half-width of the outer/inner identity margins and
    ``delta_tilde = delta/3`` the mollification radius.  The strict
    inequalities keep the obstacle inside the cell with room for the
    transition zone at every admissible radius.
    """

    r_min: float = 0.15
    r_max: float = 0.35
    r0: float = 0.25
    delta: float = 0.12
    quadrature_points: int = 32

    def __post_init__(self):
        if not (0.0 < self.r_min < self.r0 < self.r_max < 0.5):
            raise ValueError("need 0 < r_min < r0 < r_max < 0.5")
        if self.r_min - self.delta <= 0.0:
            raise ValueError("need r_min - delta > 0")
        if self.r_max + self.delta >= 0.5:
            raise ValueError("need r_max + delta < 0.5")

    @property
    def delta_tilde(self) -> float:
        return self.delta / 3.0

    @property
    def breakpoints(self) -> tuple[float, float, float, float]:
        dt = self.delta_tilde
        return (self.r_min - 2 * dt, self.r0 - dt, self.r0 + dt, self.r_max + 2 * dt)

    def check_radius(self, r_gamma) -> None:
        r_gamma = np.asarray(r_gamma, dtype=float)
        if np.any(r_gamma < self.r_min - 1e-14) or np.any(r_gamma > self.r_max + 1e-14):
            raise ValueError(f"obstacle radius outside [{self.r_min}, {self.r_max}]")


@dataclass
class TransformEval:
    """Pointwise evaluation of the map: image, Jacobian, det, radius sensitivity.

    ``dt_psi`` is filled only by the epsilon-scaled evaluation, where the time
    derivative enters through the chain rule with the per-cell radius rate.
    """

    mapped_point: np.ndarray
    jacobian: np.ndarray
    det: float
    dr_derivative: np.ndarray
    dt_psi: np.ndarray | None = None


@dataclass
class CellIndexing:
    epsilon: float
    cell_index: np.ndarray
    macro_part: np.ndarray
    micro_part: np.ndarray


# ---------------------------------------------------------------------------
# Radial profile
# ---------------------------------------------------------------------------

def _hinge_slopes(params: TransformParams, r_gamma):
    """Hinge coefficients of the displacement profile and their r_gamma rates.

    The displacement (profile minus identity) has slope c1-1 between the two
    lower breakpoints and c2-1 between the two upper ones, zero elsewhere.
    """
    den1 = params.r0 - params.r_min + params.delta_tilde
    den2 = params.r_max - params.r0 + params.delta_tilde
    k1 = (np.asarray(r_gamma, dtype=float) - params.r0) / den1
    k3 = (params.r0 - np.asarray(r_gamma, dtype=float)) / den2
    return k1, k3, 1.0 / den1, -1.0 / den2


def profile_raw(params: TransformParams, r_gamma: float, s) -> np.ndarray:
    """Piecewise-linear radial rescaling before smoothing.

    Identity up to ``r_min - 2*delta_tilde``, linear ramp with slope c1 to the
    plateau branch of slope one through (r0, r_gamma), ramp with slope c2 back
    to the identity from ``r_max + 2*delta_tilde`` on.
    """
    params.check_radius(r_gamma)
    s = np.asarray(s, dtype=float)
    b1, b2, b3, b4 = params.breakpoints
    k1, k3, _, _ = _hinge_slopes(params, r_gamma)
    disp = np.select(
        [s <= b1, s <= b2, s <= b3, s <= b4],
        [0.0, k1 * (s - b1), r_gamma - params.r0, k3 * (s - b4)],
        default=0.0,
    )
    return s + disp


def profile(params: TransformParams, r_gamma, r):
    """Smoothed radial profile R and its derivatives.

    Returns ``(R, dR/dr, dR/dr_gamma)``; ``r_gamma`` and ``r`` broadcast
    against each other.  R agrees with the convolution of the raw profile
    with the bump kernel of radius delta_tilde, written as a hinge sum so
    that the identity regions and the plateau value R(r_gamma, r0) = r_gamma
    come out exact.
    """
    params.check_radius(r_gamma)
    r_gamma = np.asarray(r_gamma, dtype=float)
    r = np.asarray(r, dtype=float)
    shape = np.broadcast_shapes(r_gamma.shape, r.shape)
    r_gamma = np.broadcast_to(r_gamma, shape)
    r = np.broadcast_to(r, shape)
    dt = params.delta_tilde
    b1, b2, b3, b4 = params.breakpoints
    k1, k3, dk1, dk3 = _hinge_slopes(params, r_gamma)

    val = np.zeros(shape)
    der = np.zeros(shape)
    drg = np.zeros(shape)
    for kap, dkap, bk, sgn in (
        (k1, dk1, b1, 1.0),
        (k1, dk1, b2, -1.0),
        (k3, dk3, b3, 1.0),
        (k3, dk3, b4, -1.0),
    ):
        z = (r - bk) / dt
        gz = _kernel_g(z)
        val += sgn * kap * dt * gz
        der += sgn * kap * _kernel_cdf(z)
        drg += sgn * dkap * dt * gz
    return r + val, 1.0 + der, drg


# ---------------------------------------------------------------------------
# The cell map and its epsilon-scaled assembly
# ---------------------------------------------------------------------------

def eval_psi_batch(params: TransformParams, r_gamma, y: np.ndarray):
    """Vectorized map evaluation at points ``y`` with shape (m, 2).

    Returns ``(mapped, jac, det, dpsi_drg)`` with shapes (m,2), (m,2,2), (m,),
    (m,2).  ``r_gamma`` is scalar or shape (m,).  Points inside the identity
    core ``|y - x_M| <= r_min - delta`` take an explicit identity branch, so
    the center needs no division.
    """
    params.check_radius(r_gamma)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    m = y.shape[0]
    r_gamma = np.broadcast_to(np.asarray(r_gamma, dtype=float), (m,))
    d = y - X_CENTER
    rho = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)

    mapped = y.copy()
    jac = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()
    det = np.ones(m)
    dpsi = np.zeros((m, 2))

    act = rho > params.r_min - params.delta
    if np.any(act):
        rho_a = rho[act]
        R, dR, dRg = profile(params, r_gamma[act], rho_a)
        u = d[act] / rho_a[:, None]
        mapped[act] = X_CENTER + R[:, None] * u
        P = u[:, :, None] * u[:, None, :]
        eye = np.eye(2)[None, :, :]
        ratio = R / rho_a
        jac[act] = dR[:, None, None] * P + ratio[:, None, None] * (eye - P)
        det[act] = dR * ratio
        dpsi[act] = dRg[:, None] * u
    return mapped, jac, det, dpsi


def eval_psi(params: TransformParams, r_gamma: float, y) -> TransformEval:
    """Map a single point of the closed cell; see :func:`eval_psi_batch`."""
    mapped, jac, det, dpsi = eval_psi_batch(params, r_gamma, np.asarray(y, dtype=float)[None, :])
    return TransformEval(mapped[0], jac[0], float(det[0]), dpsi[0])


def psi_inverse_radius(params: TransformParams, r_gamma: float, target, tol: float = 1e-12,
                       max_iter: int = 200):
    """Solve R(r_gamma, rho) = target for rho by safeguarded Newton.

    R is strictly increasing in rho, so the root is unique; bisection steps
    keep the bracket whenever Newton leaves it.
    """
    params.check_radius(r_gamma)
    target = np.asarray(target, dtype=float)
    scalar = target.ndim == 0
    target = np.atleast_1d(target)
    lo = np.zeros_like(target)
    hi = np.maximum(target + params.delta, 1.0)
    rho = target.copy()  # identity is the right guess outside the annulus
    for _ in range(max_iter):
        R, dR, _ = profile(params, r_gamma, rho)
        err = R - target
        if np.all(np.abs(err) <= tol):
            break
        hi = np.where(err > 0, np.minimum(hi, rho), hi)
        lo = np.where(err < 0, np.maximum(lo, rho), lo)
        step = err / dR
        cand = rho - step
        bad = (cand <= lo) | (cand >= hi)
        cand[bad] = 0.5 * (lo[bad] + hi[bad])
        rho = cand
    else:
        raise NumericalError(f"radial inverse did not converge at r_gamma={r_gamma}")
    return float(rho[0]) if scalar else rho


def eval_psi_inverse(params: TransformParams, r_gamma: float, z) -> np.ndarray:
    """Inverse map of a single point: radial solve plus direction reuse."""
    z = np.asarray(z, dtype=float)
    d = z - X_CENTER
    dist = float(np.hypot(d[0], d[1]))
    if dist <= params.r_min - params.delta:
        return z.copy()
    rho = psi_inverse_radius(params, r_gamma, dist)
    return X_CENTER + (rho / dist) * d


def cell_decompose(epsilon: float, x) -> CellIndexing:
    """Split x into its cell corner and the rescaled in-cell position."""
    x = np.asarray(x, dtype=float)
    k = np.floor(x / epsilon).astype(int)
    macro = epsilon * k
    micro = (x - macro) / epsilon
    return CellIndexing(epsilon, k, macro, micro)


def _micro_coordinates(epsilon: float, x: np.ndarray):
    """Cell indices and in-cell coordinates for points of Omega = [0,1]^2.

    Points on the upper faces are attributed to the last cell so that micro
    coordinates stay in the closed unit cell.
    """
    n = int(round(1.0 / epsilon))
    if abs(n * epsilon - 1.0) > 1e-12:
        raise ValueError("1/epsilon must be an integer")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if np.any(x < -1e-12) or np.any(x > 1.0 + 1e-12):
        raise ValueError("point outside the unit square")
    k = np.minimum(np.floor(x / epsilon).astype(int), n - 1)
    micro = x / epsilon - k
    return n, k, micro


def eval_psi_eps_batch(params: TransformParams, epsilon: float, radii: np.ndarray,
                       radii_rate: np.ndarray, x: np.ndarray):
    """Vectorized epsilon-scaled transformation over points of the unit square.

    ``radii`` and ``radii_rate`` are (n, n) arrays (one value per cell with
    n = 1/epsilon).  Returns ``(mapped, jac, det, dt_psi)``: the Jacobian is
    the cell-level one (the epsilon scaling cancels), while the time
    derivative carries the factor epsilon via the chain rule through the
    per-cell radius rate.
    """
    n, k, micro = _micro_coordinates(epsilon, x)
    radii = np.asarray(radii, dtype=float)
    radii_rate = np.asarray(radii_rate, dtype=float)
    if radii.shape != (n, n):
        raise ValueError(f"expected radii of shape {(n, n)}")
    rg = radii[k[:, 0], k[:, 1]]
    rate = radii_rate[k[:, 0], k[:, 1]]
    mapped_ref, jac, det, dpsi = eval_psi_batch(params, rg, micro)
    mapped = epsilon * k + epsilon * mapped_ref
    dt_psi = epsilon * dpsi * rate[:, None]
    return mapped, jac, det, dt_psi


def eval_psi_eps(params: TransformParams, epsilon: float, radii: np.ndarray,
                 radii_rate: np.ndarray, x) -> TransformEval:
    """Single-point epsilon-scaled transformation; see the batch variant."""
    x = np.asarray(x, dtype=float)
    mapped, jac, det, dt_psi = eval_psi_eps_batch(params, epsilon, radii, radii_rate, x[None, :])
    n, k, micro = _micro_coordinates(epsilon, x[None, :])
    rg = np.asarray(radii, dtype=float)[k[0, 0], k[0, 1]]
    dr = eval_psi_batch(params, rg, micro)[3]
    return TransformEval(mapped[0], jac[0], float(det[0]), dr[0], dt_psi[0])


def pullback_coefficients(params: TransformParams, r_gamma, y: np.ndarray,
                          diffusion: float = 1.0):
    """Transformed diffusion data at reference points: (J, A, Psi_inv).

    A = J * Psi^{-1} D Psi^{-T} is the coefficient of the fixed-domain weak
    form; for the radial map the inverse Jacobian is available in closed form
    from the same projector decomposition as the Jacobian itself.
    """
    params.check_radius(r_gamma)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    m = y.shape[0]
    r_gamma = np.broadcast_to(np.asarray(r_gamma, dtype=float), (m,))
    d = y - X_CENTER
    rho = np.sqrt(d[:, 0] ** 2 + d[:, 1] ** 2)

    J = np.ones(m)
    A = np.broadcast_to(diffusion * np.eye(2), (m, 2, 2)).copy()
    Psi_inv = np.broadcast_to(np.eye(2), (m, 2, 2)).copy()

    act = rho > params.r_min - params.delta
    if np.any(act):
        rho_a = rho[act]
        R, dR, _ = profile(params, r_gamma[act], rho_a)
        u = d[act] / rho_a[:, None]
        P = u[:, :, None] * u[:, None, :]
        eye = np.eye(2)[None, :, :]
        ratio = R / rho_a
        J[act] = dR * ratio
        Pinv = (1.0 / dR)[:, None, None] * P + (rho_a / R)[:, None, None] * (eye - P)
        Psi_inv[act] = Pinv
        A[act] = diffusion * J[act][:, None, None] * np.einsum("mab,mcb->mac", Pinv, Pinv)
    return J, A, Psi_inv
