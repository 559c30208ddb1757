"""Resolved micro-scale solver on the fixed periodic perforated domain.

The evolving geometry is never meshed: the PDE lives on the reference
perforation (holes at radius r0) with pulled-back coefficients built from the
radius-parametrized cell transformation, one obstacle radius per cell evolving
by an explicit surface-averaged reaction balance.  The bulk step mirrors the
macro solver (lumped Jacobian-weighted mass, backward Euler diffusion); the
transformation's advective term and the surface reaction are explicit, which
both carry a factor epsilon and keep the system symmetric.

The unfolding comparator turns a micro state into per-cell pore averages and
measures their distance to a macro solution at the cell centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .fem import element_means, triangle_geometry
from .kinetics import KineticsSpec, eval_f, step_radius
from .sparse import TripletBuffer, finalize, solve_cg
from .transform import TransformParams, eval_psi_batch, pullback_coefficients
from .unitcell import PeriodicMesh, ball_volume

_ALLOWED_INV_EPS = (1, 2, 4, 8, 16)
_EDGE_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass
class MicroMesh:
    """Conforming tiling of scaled reference cells over the unit square."""

    epsilon: float
    n_cells_side: int
    vertices: np.ndarray
    triangles: np.ndarray
    cell_of_element: np.ndarray
    cell_index: np.ndarray          # (n_cells, 2) lattice coordinates
    gamma_edges: np.ndarray         # (n_cells, n_boundary, 2) global node ids
    micro_midpoints: np.ndarray     # per-element in-cell centroid coordinates
    areas: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)
    reference: PeriodicMesh = field(repr=False, default=None)

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return self.n_cells_side ** 2

    def cell_centers(self) -> np.ndarray:
        return self.epsilon * (self.cell_index + 0.5)

    def gamma_edge_lengths(self) -> np.ndarray:
        e = self.vertices[self.gamma_edges[..., 1]] - self.vertices[self.gamma_edges[..., 0]]
        return np.hypot(e[..., 0], e[..., 1])


def build_micro_mesh(reference: PeriodicMesh, epsilon: float) -> MicroMesh:
    """Tile the reference cell; shared-face nodes merge by coordinate keys.

    Works because opposite boundary traces of the reference mesh are bitwise
    identical and the cells are translated by exact binary offsets, so
    coincident nodes carry identical coordinates; the 1e-12 rounding in the
    key is pure safety.
    """
    inv = round(1.0 / epsilon)
    if inv not in _ALLOWED_INV_EPS or abs(inv * epsilon - 1.0) > 1e-12:
        raise ValueError(f"1/epsilon must be one of {_ALLOWED_INV_EPS}")
    n = inv
    ref_v = reference.vertices
    ref_t = reference.triangles
    n_ref = len(ref_v)

    cells = np.array([(i, j) for i in range(n) for j in range(n)], dtype=int)
    coords = np.empty((len(cells) * n_ref, 2))
    for c, (i, j) in enumerate(cells):
        coords[c * n_ref:(c + 1) * n_ref] = epsilon * ref_v + epsilon * np.array([i, j])

    keys = np.round(coords, 12) + 0.0  # normalizes -0.0
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    rep = np.zeros(len(uniq), dtype=int)
    rep[inverse] = np.arange(len(coords))
    vertices = coords[rep]
    spread = np.max(np.abs(coords - vertices[inverse]))
    if spread > 1e-12:
        raise NumericalError(f"micro mesh merge mismatch: coordinate spread {spread:.2e}")

    node_map = inverse.reshape(len(cells), n_ref)
    triangles = node_map[:, ref_t.ravel()].reshape(len(cells), -1, 3).reshape(-1, 3)
    cell_of_element = np.repeat(np.arange(len(cells)), len(ref_t))
    gamma = node_map[:, reference.hole_boundary_facets.ravel()].reshape(len(cells), -1, 2)

    mids_ref = (ref_v[ref_t[:, 0]] + ref_v[ref_t[:, 1]] + ref_v[ref_t[:, 2]]) / 3.0
    micro_mids = np.tile(mids_ref, (len(cells), 1))
    areas, grads = triangle_geometry(vertices, triangles)
    return MicroMesh(epsilon, n, vertices, triangles, cell_of_element, cells,
                     gamma, micro_mids, areas, grads, reference)


@dataclass
class MicroState:
    t: float
    u_hat: np.ndarray
    radii: np.ndarray          # (n, n)
    radii_rate: np.ndarray
    jac_det: np.ndarray        # per element, for the time-difference mass term
    fluid_mass: float
    solid_mass: float
    flux_step: float = 0.0
    source_step: float = 0.0
    defect: float = 0.0
    radius_flux_gap: float = 0.0
    cg_iterations: int = 0


@dataclass
class UnfoldingError:
    epsilon: float
    u_l2_error: float
    r_l2_error: float
    per_cell_means: np.ndarray


class MicroSimulator:
    """Stepper for the transformed substitute problem."""

    def __init__(self, mesh: MicroMesh, params: TransformParams, spec: KineticsSpec,
                 source=None, diffusion: float = 1.0, pinned_radii: bool = False,
                 source_at_reference: bool = False, cg_tol: float = 1e-10):
        self.mesh = mesh
        self.params = params
        self.spec = spec
        self.source = source
        self.diffusion = diffusion
        self.pinned_radii = pinned_radii
        self.source_at_reference = source_at_reference
        self.cg_tol = cg_tol
        m = mesh
        self._cell_r_of_el = m.cell_of_element
        self._edge_len = m.gamma_edge_lengths()
        self._cell_offsets = m.epsilon * m.cell_index.astype(float)

    # -- construction --------------------------------------------------------

    def init(self, u0_field, r0_field) -> MicroState:
        """State at t = 0; pinned mode forces every radius to the reference
        radius so the run is exactly a perforated-domain heat problem."""
        m = self.mesh
        u = np.asarray(u0_field(m.vertices), dtype=float)
        if self.pinned_radii:
            r_cells = np.full(m.n_cells, self.params.r0)
        else:
            r_cells = np.asarray(r0_field(m.cell_centers()), dtype=float)
        radii = r_cells.reshape(m.n_cells_side, m.n_cells_side)
        if np.any(radii < self.spec.r_min - 1e-12) or np.any(radii > self.spec.r_max + 1e-12):
            raise ValueError("initial radii outside [r_min, r_max]")
        jac = self._jacobians(radii)
        state = MicroState(0.0, u, radii, np.zeros_like(radii), jac, 0.0, 0.0)
        state.fluid_mass = float(self._lumped(jac) @ u)
        state.solid_mass = self._solid_mass(radii)
        return state

    def _radii_per_element(self, radii: np.ndarray) -> np.ndarray:
        return radii.reshape(-1)[self._cell_r_of_el]

    def _jacobians(self, radii: np.ndarray) -> np.ndarray:
        if self.pinned_radii:
            return np.ones(len(self.mesh.triangles))
        r_el = self._radii_per_element(radii)
        J, _, _ = pullback_coefficients(self.params, r_el, self.mesh.micro_midpoints,
                                        self.diffusion)
        return J

    def _lumped(self, weight_el: np.ndarray) -> np.ndarray:
        m = self.mesh
        out = np.zeros(m.n_nodes)
        np.add.at(out, m.triangles, (weight_el * m.areas / 3.0)[:, None] * np.ones((1, 3)))
        return out

    def _solid_mass(self, radii: np.ndarray) -> float:
        eps = self.mesh.epsilon
        return float(self.spec.c_s * eps**2 * np.sum(ball_volume(radii)))

    def _surface_integrals(self, u: np.ndarray, radii_cell: np.ndarray,
                           scale: np.ndarray | None = None):
        """Per-cell boundary integral of f(u, r) and the nodal loads of
        (scale * f, phi_i), by two-point Gauss on every hole-boundary edge."""
        m = self.mesh
        edges = m.gamma_edges            # (nc, nb, 2)
        u0 = u[edges[..., 0]]
        u1 = u[edges[..., 1]]
        r_cell = radii_cell[:, None]     # (nc, 1)
        sc = np.ones(m.n_cells) if scale is None else scale
        integral = np.zeros(m.n_cells)
        loads = np.zeros(m.n_nodes)
        for q in _EDGE_GAUSS:
            uq = (1.0 - q) * u0 + q * u1
            fq = eval_f(self.spec, uq, np.broadcast_to(r_cell, uq.shape))
            contrib = 0.5 * self._edge_len * fq
            integral += contrib.sum(axis=1)
            scaled = contrib * sc[:, None]
            np.add.at(loads, edges[..., 0], scaled * (1.0 - q))
            np.add.at(loads, edges[..., 1], scaled * q)
        return integral, loads

    # -- time stepping ---------------------------------------------------------

    def step(self, state: MicroState, dt: float) -> MicroState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        m = self.mesh
        spec = self.spec
        eps = m.epsilon
        t_new = state.t + dt

        # (1) explicit radius update from the surface-averaged rate at the
        # old concentration and old radii
        if self.pinned_radii:
            radii_new = state.radii
            rate = np.zeros_like(state.radii)
        else:
            f_int, _ = self._surface_integrals(state.u_hat, state.radii.reshape(-1))
            f_avg = f_int / self._edge_len.sum(axis=1)
            radii_new = step_radius(spec, state.radii, f_avg.reshape(state.radii.shape), dt)
            rate = (radii_new - state.radii) / dt

        # (2) pulled-back coefficients at the new radii
        if self.pinned_radii:
            n_el = len(m.triangles)
            jac_new = np.ones(n_el)
            coeff = np.broadcast_to(self.diffusion * np.eye(2), (n_el, 2, 2)).copy()
            b_vec = None
            mapped_ref = m.micro_midpoints
        else:
            r_el = self._radii_per_element(radii_new)
            jac_new, coeff, psi_inv = pullback_coefficients(
                self.params, r_el, m.micro_midpoints, self.diffusion)
            mapped_ref, _, _, dpsi_drg = eval_psi_batch(self.params, r_el, m.micro_midpoints)
            rate_el = rate.reshape(-1)[self._cell_r_of_el]
            dt_psi = eps * dpsi_drg * rate_el[:, None]
            b_vec = jac_new[:, None] * np.einsum("tab,tb->ta", psi_inv, dt_psi)

        # (3) backward-Euler bulk solve
        buf = TripletBuffer()
        k_el = np.einsum("tia,tab,tjb->tij", m.grads, coeff, m.grads) * m.areas[:, None, None]
        buf.add_block(np.repeat(m.triangles, 3, axis=1), np.tile(m.triangles, (1, 3)), k_el)
        mass_new = self._lumped(jac_new)
        idx = np.arange(m.n_nodes)
        buf.add_block(idx, idx, mass_new / dt)
        system = finalize(buf, m.n_nodes, m.n_nodes)

        b = self._lumped(state.jac_det) * state.u_hat / dt

        source_step = 0.0
        if self.source is not None:
            pts = m.micro_midpoints if self.source_at_reference else \
                self._cell_offsets[self._cell_r_of_el] + eps * mapped_ref
            fp = np.asarray(self.source(t_new, pts), dtype=float)
            if not np.all(np.isfinite(fp)):
                raise NumericalError(f"source produced non-finite values at t={t_new}")
            np.add.at(b, m.triangles, (jac_new * fp * m.areas / 3.0)[:, None] * np.ones((1, 3)))
            source_step = float(dt * np.sum(jac_new * fp * m.areas))

        # explicit transformation-drift term (B u, grad phi) moved to the rhs
        if b_vec is not None:
            u_mid = element_means(m.triangles, state.u_hat)
            drift = np.einsum("ta,tia->ti", b_vec, m.grads) * (m.areas * u_mid)[:, None]
            np.add.at(b, m.triangles, -drift)

        # explicit surface reaction at (old u, new radii), scaled by the
        # surface Jacobian of the radial map and the epsilon of the weak form
        flux_total = 0.0
        if not self.pinned_radii:
            scale = eps * radii_new.reshape(-1) / self.params.r0
            f_int_new, loads = self._surface_integrals(state.u_hat, radii_new.reshape(-1), scale)
            flux_total = float((scale * f_int_new).sum())
            b -= loads

        u_new, report = solve_cg(system, b, tol=self.cg_tol, x0=state.u_hat,
                                 check_symmetry=False)
        if not report.converged:
            raise NumericalError(
                f"micro CG stalled at t={t_new}: residual {report.final_residual:.2e}")
        if not np.all(np.isfinite(u_new)):
            raise NumericalError(f"non-finite concentration at t={t_new}")

        fluid = float(mass_new @ u_new)
        solid = self._solid_mass(radii_new)
        flux_step = dt * flux_total
        defect = abs(fluid - state.fluid_mass + flux_step - source_step)
        radius_flux_gap = abs((solid - state.solid_mass) - flux_step)
        return MicroState(t_new, u_new, radii_new, rate, jac_new, fluid, solid,
                          flux_step, source_step, defect, radius_flux_gap,
                          report.iterations)

    def run(self, state: MicroState, dt: float, n_steps: int, keep_every: int = 1):
        states = [state]
        for k in range(n_steps):
            state = self.step(state, dt)
            if (k + 1) % keep_every == 0 or k + 1 == n_steps:
                states.append(state)
        return states


# ---------------------------------------------------------------------------
# Unfolding comparator
# ---------------------------------------------------------------------------

def cell_pore_means(mesh: MicroMesh, u: np.ndarray) -> np.ndarray:
    """Pore-area-weighted mean of a nodal field over every cell."""
    el_mean = element_means(mesh.triangles, u)
    sums = np.zeros(mesh.n_cells)
    areas = np.zeros(mesh.n_cells)
    np.add.at(sums, mesh.cell_of_element, mesh.areas * el_mean)
    np.add.at(areas, mesh.cell_of_element, mesh.areas)
    return sums / areas


def unfold_compare(mesh: MicroMesh, state: MicroState, macro_grid, macro_state) -> UnfoldingError:
    """Cell-averaged micro fields against the macro solution at cell centers.

    Errors are scaled L2 norms over the cell lattice, the natural discrete
    form of the averaged two-scale distance.
    """
    eps = mesh.epsilon
    centers = mesh.cell_centers()
    means = cell_pore_means(mesh, state.u_hat)
    u_macro = macro_grid.interpolate(macro_state.u, centers)
    u_err = float(np.sqrt(np.sum(eps**2 * (means - u_macro) ** 2)))
    r_macro = macro_state.r[macro_grid.element_of_point(centers)]
    r_err = float(np.sqrt(np.sum(eps**2 * (state.radii.reshape(-1) - r_macro) ** 2)))
    return UnfoldingError(eps, u_err, r_err, means)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def micro_snapshot_csv(mesh: MicroMesh, state: MicroState) -> str:
    lines = ["x1,x2,u_hat"]
    for (x, y), u in zip(mesh.vertices, state.u_hat):
        lines.append(f"{x:.17g},{y:.17g},{u:.17g}")
    return "\n".join(lines) + "\n"


def cell_series_csv(mesh: MicroMesh, state: MicroState) -> str:
    lines = ["k1,k2,r,r_rate"]
    r = state.radii
    rr = state.radii_rate
    for (i, j) in mesh.cell_index:
        lines.append(f"{i},{j},{r[i, j]:.17g},{rr[i, j]:.17g}")
    return "\n".join(lines) + "\n"
