"""Macroscopic limit system on the unit square.

A porosity-weighted parabolic equation for the concentration, coupled
pointwise to an ODE for the local obstacle radius.  Discretization: P1 nodes
for the concentration on a structured triangulation, piecewise-constant
radius per element, operator splitting with the radius explicit and the
diffusion backward-Euler implicit.  The porosity-weighted mass matrix is
lumped, which makes the discrete mass identity

    (theta u, 1) + c_s (V(r), 1)  changes by  dt (theta f_p, 1)

exact up to the linear-solver residual at every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .fem import element_means, triangle_geometry
from .kinetics import KineticsSpec, eval_f, step_radius
from .sparse import TripletBuffer, finalize, solve_cg
from .unitcell import EffectiveTensorTable, ball_volume, porosity


@dataclass(frozen=True)
class MacroGrid:
    """Uniform triangulation of [0,1]^2: n x n squares, each split along the
    main diagonal (the split direction is invariant under the x/y swap)."""

    n: int
    nodes: np.ndarray
    elements: np.ndarray
    areas: np.ndarray = field(repr=False)
    grads: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, n: int) -> "MacroGrid":
        if n < 2:
            raise ValueError("macro grid needs n >= 2")
        xs = np.linspace(0.0, 1.0, n + 1)
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        nodes = np.stack([gx.ravel(), gy.ravel()], axis=1)

        def nid(ix, iy):
            return ix * (n + 1) + iy

        elems = np.empty((2 * n * n, 3), dtype=int)
        k = 0
        for ix in range(n):
            for iy in range(n):
                a, b = nid(ix, iy), nid(ix + 1, iy)
                c, d = nid(ix + 1, iy + 1), nid(ix, iy + 1)
                elems[k] = (a, b, c)      # lower triangle (below the diagonal)
                elems[k + 1] = (a, c, d)  # upper triangle
                k += 2
        areas, grads = triangle_geometry(nodes, elems)
        return cls(n, nodes, elems, areas, grads)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def midpoints(self) -> np.ndarray:
        return (self.nodes[self.elements[:, 0]] + self.nodes[self.elements[:, 1]]
                + self.nodes[self.elements[:, 2]]) / 3.0

    def element_of_point(self, pts: np.ndarray) -> np.ndarray:
        """Element index containing each point (points on the diagonal and on
        upper-face edges resolve deterministically toward the lower element)."""
        pts = np.atleast_2d(pts)
        ix = np.minimum((pts[:, 0] * self.n).astype(int), self.n - 1)
        iy = np.minimum((pts[:, 1] * self.n).astype(int), self.n - 1)
        s = pts[:, 0] * self.n - ix
        t = pts[:, 1] * self.n - iy
        lower = s >= t
        return 2 * (ix * self.n + iy) + np.where(lower, 0, 1)

    def interpolate(self, nodal: np.ndarray, pts: np.ndarray) -> np.ndarray:
        """P1 interpolation of a nodal field."""
        pts = np.atleast_2d(pts)
        el = self.element_of_point(pts)
        tri = self.elements[el]
        p0 = self.nodes[tri[:, 0]]
        g = self.grads[el]
        vals = nodal[tri]
        # value at p0 plus gradient times offset; exact for P1
        grad_field = np.einsum("ti,tia->ta", vals, g)
        return vals[:, 0] + np.einsum("ta,ta->t", grad_field, pts - p0)


@dataclass
class MacroState:
    t: float
    u: np.ndarray
    r: np.ndarray
    theta: np.ndarray
    fluid_mass: float
    solid_mass: float
    source_step: float = 0.0
    defect: float = 0.0
    cg_iterations: int = 0


class MacroSolver:
    """Time stepper for the coupled concentration/radius system."""

    def __init__(self, grid: MacroGrid, table: EffectiveTensorTable, spec: KineticsSpec,
                 source=None, diffusion: float = 1.0, freeze_radii: bool = False,
                 cg_tol: float = 1e-10):
        self.grid = grid
        self.table = table
        self.spec = spec
        self.source = source
        self.diffusion = diffusion
        self.freeze_radii = freeze_radii
        self.cg_tol = cg_tol

    # -- state construction -------------------------------------------------

    def init(self, u0_field, r0_field) -> MacroState:
        """State at t = 0 from nodal u0 and element-midpoint r0."""
        g = self.grid
        u = np.asarray(u0_field(g.nodes), dtype=float)
        r = np.asarray(r0_field(g.midpoints()), dtype=float)
        if u.shape != (g.n_nodes,) or r.shape != (g.n_elements,):
            raise ValueError("initial fields have wrong shape")
        if np.any(r < self.spec.r_min - 1e-12) or np.any(r > self.spec.r_max + 1e-12):
            raise ValueError("initial radii outside [r_min, r_max]")
        theta = porosity(r)
        state = MacroState(0.0, u, r, theta, 0.0, 0.0)
        state.fluid_mass = float(self._lumped_theta(theta) @ u)
        state.solid_mass = self._solid_mass(r)
        return state

    def _lumped_theta(self, theta: np.ndarray) -> np.ndarray:
        g = self.grid
        m = np.zeros(g.n_nodes)
        np.add.at(m, g.elements, (theta * g.areas / 3.0)[:, None] * np.ones((1, 3)))
        return m

    def _solid_mass(self, r: np.ndarray) -> float:
        return float(self.spec.c_s * np.sum(self.grid.areas * ball_volume(r)))

    # -- time stepping -------------------------------------------------------

    def step(self, state: MacroState, dt: float) -> MacroState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        g = self.grid
        t_new = state.t + dt

        # (1) explicit radius update from the element-mean concentration
        if self.freeze_radii:
            r_new = state.r
        else:
            u_bar = element_means(g.elements, state.u)
            rates = eval_f(self.spec, u_bar, state.r)
            r_new = step_radius(self.spec, state.r, rates, dt)
        theta_new = porosity(r_new)

        # (2) implicit porosity-weighted diffusion with tensor lookup
        A_el, _, _, _ = self.table.lookup_many(r_new)
        k_el = np.einsum("tia,tab,tjb->tij", g.grads, A_el, g.grads)
        k_el *= (self.diffusion * g.areas)[:, None, None]
        buf = TripletBuffer()
        dofs = g.elements
        buf.add_block(np.repeat(dofs, 3, axis=1), np.tile(dofs, (1, 3)), k_el)
        m_new = self._lumped_theta(theta_new)
        idx = np.arange(g.n_nodes)
        buf.add_block(idx, idx, m_new / dt)
        system = finalize(buf, g.n_nodes, g.n_nodes)

        m_old = self._lumped_theta(state.theta)
        b = m_old * state.u / dt

        source_step = 0.0
        if self.source is not None:
            fp = np.asarray(self.source(t_new, g.midpoints()), dtype=float)
            if not np.all(np.isfinite(fp)):
                raise NumericalError(f"source produced non-finite values at t={t_new}")
            loads = (theta_new * fp * g.areas / 3.0)[:, None] * np.ones((1, 3))
            np.add.at(b, g.elements, loads)
            source_step = float(dt * np.sum(theta_new * fp * g.areas))

        dv = self.spec.c_s * (ball_volume(r_new) - ball_volume(state.r)) / dt
        np.add.at(b, g.elements, -(dv * g.areas / 3.0)[:, None] * np.ones((1, 3)))

        u_new, report = solve_cg(system, b, tol=self.cg_tol, x0=state.u, check_symmetry=False)
        if not report.converged:
            raise NumericalError(
                f"macro CG stalled at t={t_new}: residual {report.final_residual:.2e}")
        if not np.all(np.isfinite(u_new)):
            raise NumericalError(f"non-finite concentration at t={t_new}")

        fluid = float(m_new @ u_new)
        solid = self._solid_mass(r_new)
        defect = abs((fluid + solid) - (state.fluid_mass + state.solid_mass) - source_step)
        return MacroState(t_new, u_new, r_new, theta_new, fluid, solid,
                          source_step, defect, report.iterations)

    def run(self, state: MacroState, dt: float, n_steps: int, keep_every: int = 1):
        """Advance n_steps, returning the kept states (always includes both ends)."""
        states = [state]
        for k in range(n_steps):
            state = self.step(state, dt)
            if (k + 1) % keep_every == 0 or k + 1 == n_steps:
                states.append(state)
        return states


@dataclass
class MassBalanceReport:
    per_step_defect: np.ndarray
    max_defect: float
    initial_total: float
    final_total: float

    def as_dict(self) -> dict:
        return {
            "max_defect": self.max_defect,
            "initial_total": self.initial_total,
            "final_total": self.final_total,
            "steps": len(self.per_step_defect),
        }


def mass_balance(states: list[MacroState]) -> MassBalanceReport:
    """Defect of the discrete conservation identity along a state sequence.

    Uses the per-step records, so it is exact regardless of snapshot cadence
    as long as consecutive stored states are consecutive steps.
    """
    if len(states) < 2:
        raise ValueError("mass balance needs at least two states")
    defects = np.array([s.defect for s in states[1:]])
    totals = [s.fluid_mass + s.solid_mass for s in states]
    return MassBalanceReport(defects, float(defects.max()), totals[0], totals[-1])


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def snapshot_csv(grid: MacroGrid, state: MacroState) -> str:
    """One row per element midpoint: x1, x2, u, r, theta."""
    mids = grid.midpoints()
    u_el = element_means(grid.elements, state.u)
    lines = ["x1,x2,u,r,theta"]
    for k in range(grid.n_elements):
        lines.append(",".join(f"{v:.17g}" for v in
                              (mids[k, 0], mids[k, 1], u_el[k], state.r[k], state.theta[k])))
    return "\n".join(lines) + "\n"


def ledger_csv(states: list[MacroState]) -> str:
    lines = ["t,total_mass,solid_mass,fluid_mass,source_integral,defect"]
    acc = 0.0
    for s in states:
        acc += s.source_step
        total = s.fluid_mass + s.solid_mass
        lines.append(",".join(f"{v:.17g}" for v in
                              (s.t, total, s.solid_mass, s.fluid_mass, acc, s.defect)))
    return "\n".join(lines) + "\n"
