"""Perforated reference cell: mesh, periodic cell problems, effective tensors.

The cell Y = (0,1)^2 minus a centered polygonal hole is meshed by blended
rings between the hole polygon and the square boundary.  Directions and ring
nodes are generated octant-symmetrically, so the mesh is bitwise invariant
under the dihedral symmetries of the square and opposite boundary faces carry
identical node traces; periodic pairing and conforming tiling are then exact.

Two routes to the effective diffusion tensor are provided: ``direct`` mode
re-meshes the cell at the requested radius, ``transformed`` mode keeps the
reference mesh and pulls the radius dependence into a variable coefficient.
The two discretize the same tensor and serve as mutual oracles.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshQualityError
from .fem import assemble_stiffness, centroids, element_means, scatter_element_loads, triangle_geometry
from .sparse import solve_cg
from .transform import TransformParams, pullback_coefficients

logger = logging.getLogger(__name__)

_PAIR_DECIMALS = 12


def ball_volume(r, n_dim: int = 2):
    """Volume of the n-ball; the package meshes only n_dim = 2."""
    r = np.asarray(r, dtype=float)
    if n_dim == 2:
        return np.pi * r**2
    if n_dim == 3:
        return 4.0 / 3.0 * np.pi * r**3
    raise ValueError("only n_dim in (2, 3) supported")


def sphere_surface(r, n_dim: int = 2):
    """Surface measure of the (n-1)-sphere bounding the n-ball."""
    r = np.asarray(r, dtype=float)
    if n_dim == 2:
        return 2.0 * np.pi * r
    if n_dim == 3:
        return 4.0 * np.pi * r**2
    raise ValueError("only n_dim in (2, 3) supported")


def porosity(r):
    """Pore volume fraction 1 - pi r^2 of the two-dimensional cell."""
    return 1.0 - ball_volume(r)


# ---------------------------------------------------------------------------
# Mesh construction
# ---------------------------------------------------------------------------

def _octant_dirs(n: int) -> np.ndarray:
    """Unit directions at angles 2*pi*j/n, mirrored bitwise from one octant."""
    m = n // 8
    dirs = np.empty((n, 2))
    for j in range(m + 1):
        if j == 0:
            x, y = 1.0, 0.0
        elif j == m:
            x = y = np.sqrt(0.5)
        else:
            x, y = np.cos(2 * np.pi * j / n), np.sin(2 * np.pi * j / n)
        for idx, (px, py) in (
            (j, (x, y)),
            ((n // 4 - j) % n, (y, x)),
            ((n // 4 + j) % n, (-y, x)),
            ((n // 2 - j) % n, (-x, y)),
            ((n // 2 + j) % n, (-x, -y)),
            ((3 * n // 4 - j) % n, (-y, -x)),
            ((3 * n // 4 + j) % n, (y, -x)),
            ((n - j) % n, (x, -y)),
        ):
            dirs[idx] = (px, py)
    return dirs


def _square_boundary(n: int) -> np.ndarray:
    """n corner-aligned points on the unit-square boundary, uniform arclength,
    index-matched to the direction angles (index 0 at the right edge middle)."""
    m = n // 8
    pts = np.empty((n, 2))
    for j in range(m + 1):
        d = 4.0 * j / n
        x, y = 1.0, 0.5 + d
        for idx, (px, py) in (
            (j, (x, y)),
            ((n // 4 - j) % n, (y, x)),
            ((n // 4 + j) % n, (1.0 - y, x)),
            ((n // 2 - j) % n, (1.0 - x, y)),
            ((n // 2 + j) % n, (1.0 - x, 1.0 - y)),
            ((3 * n // 4 - j) % n, (1.0 - y, 1.0 - x)),
            ((3 * n // 4 + j) % n, (y, 1.0 - x)),
            ((n - j) % n, (x, 1.0 - y)),
        ):
            pts[idx] = (px, py)
    return pts


def _min_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]

    def corner(a, b, c):
        u = b - a
        w = c - a
        cosv = np.sum(u * w, axis=-1) / np.sqrt(np.sum(u * u, axis=-1) * np.sum(w * w, axis=-1))
        return np.degrees(np.arccos(np.clip(cosv, -1.0, 1.0)))

    return np.minimum(np.minimum(corner(p0, p1, p2), corner(p1, p2, p0)), corner(p2, p0, p1))


@dataclass
class PeriodicMesh:
    """Triangulation of the perforated cell with exact periodic node pairing."""

    vertices: np.ndarray
    triangles: np.ndarray
    hole_boundary_facets: np.ndarray  # (n_boundary, 2) node indices on the hole ring
    periodic_partner: np.ndarray      # partner[i] = paired node on the opposite face, else i
    hole_radius: float
    n_boundary: int
    min_angle: float = field(default=0.0)

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    def dof_map(self) -> tuple[np.ndarray, int]:
        """Merge periodically paired nodes into shared degrees of freedom.

        Slave nodes (on the x=1 / y=1 faces) point at their master on the
        opposite face; the top-right corner chains to the origin corner.
        """
        master = self.periodic_partner.copy()
        for _ in range(3):
            master = master[master]
        unique, dof = np.unique(master, return_inverse=True)
        return dof, len(unique)

    def polygon_area(self) -> float:
        """Area of the inscribed hole polygon."""
        ids = self.hole_boundary_facets
        a = self.vertices[ids[:, 0]] - 0.5
        b = self.vertices[ids[:, 1]] - 0.5
        return float(0.5 * np.abs(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])))

    def polygon_perimeter(self) -> float:
        ids = self.hole_boundary_facets
        e = self.vertices[ids[:, 1]] - self.vertices[ids[:, 0]]
        return float(np.sum(np.hypot(e[:, 0], e[:, 1])))


def build_reference_mesh(hole_radius: float, n_boundary: int = 64,
                         target_h: float = 0.05) -> PeriodicMesh:
    """Mesh Y minus the inscribed ``n_boundary``-gon of radius ``hole_radius``.

    Rings blend linearly from the hole polygon to the arclength-uniform square
    boundary; each quad is split along the diagonal giving the better minimum
    angle (a mirror-symmetric criterion).  Raises ``MeshQualityError`` below a
    10 degree minimum angle.
    """
    if n_boundary < 16 or n_boundary % 8 != 0:
        raise ValueError("n_boundary must be >= 16 and divisible by 8")
    if not (0.0 < target_h < 0.25):
        raise ValueError("target_h must lie in (0, 0.25)")
    if not (0.0 < hole_radius < 0.5):
        raise ValueError("hole_radius must lie in (0, 0.5)")

    n = n_boundary
    center = np.array([0.5, 0.5])
    dirs = _octant_dirs(n)
    sq = _square_boundary(n)
    hole = center + hole_radius * dirs
    gap = np.linalg.norm(sq - hole, axis=1)
    n_rings = max(2, int(np.ceil(gap.max() / target_h)))

    verts = np.empty(((n_rings + 1) * n, 2))
    for ring in range(n_rings + 1):
        t = ring / n_rings
        verts[ring * n:(ring + 1) * n] = (1.0 - t) * hole + t * sq

    ring_idx, j_idx = np.meshgrid(np.arange(n_rings), np.arange(n), indexing="ij")
    ring_idx = ring_idx.ravel()
    j_idx = j_idx.ravel()
    a = ring_idx * n + j_idx
    b = ring_idx * n + (j_idx + 1) % n
    c = (ring_idx + 1) * n + (j_idx + 1) % n
    d = (ring_idx + 1) * n + j_idx
    # per quad, pick the diagonal with the better minimum angle; the criterion
    # is mirror symmetric, ties break by index parity (also mirror symmetric)
    q_ac = np.minimum(_min_angles(verts, np.stack([a, b, c], axis=1)),
                      _min_angles(verts, np.stack([a, c, d], axis=1)))
    q_bd = np.minimum(_min_angles(verts, np.stack([a, b, d], axis=1)),
                      _min_angles(verts, np.stack([b, c, d], axis=1)))
    use_ac = (q_ac > q_bd) | ((q_ac == q_bd) & (j_idx % 2 == 0))
    tris = np.empty((2 * n_rings * n, 3), dtype=int)
    tris[0::2] = np.where(use_ac[:, None], np.stack([a, b, c], axis=1), np.stack([a, b, d], axis=1))
    tris[1::2] = np.where(use_ac[:, None], np.stack([a, c, d], axis=1), np.stack([b, c, d], axis=1))

    # enforce positive orientation
    e1 = verts[tris[:, 1]] - verts[tris[:, 0]]
    e2 = verts[tris[:, 2]] - verts[tris[:, 0]]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]

    min_angle = float(_min_angles(verts, tris).min())
    if min_angle < 10.0:
        raise MeshQualityError(
            f"minimum angle {min_angle:.2f} deg below 10 deg "
            f"(hole_radius={hole_radius}, n_boundary={n_boundary}, target_h={target_h})")

    partner = np.arange(len(verts))
    tol = 1e-12
    on_left = np.abs(verts[:, 0]) < tol
    on_bottom = np.abs(verts[:, 1]) < tol
    left_by_y = {round(verts[i, 1], _PAIR_DECIMALS): i for i in np.where(on_left)[0]}
    bottom_by_x = {round(verts[i, 0], _PAIR_DECIMALS): i for i in np.where(on_bottom)[0]}
    for i in np.where(np.abs(verts[:, 0] - 1.0) < tol)[0]:
        partner[i] = left_by_y[round(verts[i, 1], _PAIR_DECIMALS)]
    for i in np.where(np.abs(verts[:, 1] - 1.0) < tol)[0]:
        partner[i] = bottom_by_x[round(verts[i, 0], _PAIR_DECIMALS)]

    facets = np.array([(j, (j + 1) % n) for j in range(n)], dtype=int)
    return PeriodicMesh(verts, tris, facets, partner, hole_radius, n, min_angle)


# ---------------------------------------------------------------------------
# Cell problems and the effective tensor
# ---------------------------------------------------------------------------

@dataclass
class CellSolution:
    direction: int
    w: np.ndarray          # nodal values, periodic pairs equal, zero mean
    residual: float
    iterations: int


def _coefficient(mesh: PeriodicMesh, params: TransformParams | None, radius: float,
                 mode: str, diffusion: float) -> np.ndarray:
    mids = centroids(mesh.vertices, mesh.triangles)
    if mode == "direct":
        return np.broadcast_to(diffusion * np.eye(2), (len(mids), 2, 2)).copy()
    if mode == "transformed":
        if params is None:
            raise ValueError("transformed mode needs TransformParams")
        _, A, _ = pullback_coefficients(params, radius, mids, diffusion)
        return A
    raise ValueError(f"unknown mode {mode!r}")


def solve_cell_problem(mesh: PeriodicMesh, radius: float, mode: str = "transformed",
                       direction: int = 0, params: TransformParams | None = None,
                       diffusion: float = 1.0, tol: float = 1e-10) -> CellSolution:
    """Periodic corrector problem in the given axis direction.

    ``direct`` mode expects ``mesh`` built at ``radius`` with unit coefficient;
    ``transformed`` mode expects the reference mesh (hole at r0) and assembles
    the pulled-back coefficient.  The singular periodic system is solved by CG
    on the mean-free subspace.
    """
    areas, grads = triangle_geometry(mesh.vertices, mesh.triangles)
    coeff = _coefficient(mesh, params, radius, mode, diffusion)
    dof, n_dof = mesh.dof_map()
    K = assemble_stiffness(mesh.triangles, areas, grads, coeff, dof, n_dof)
    ce = coeff[:, :, direction]
    loads = -np.einsum("tia,ta->ti", grads, ce) * areas[:, None]
    b = scatter_element_loads(mesh.triangles, loads, dof, n_dof)
    w_dof, report = solve_cg(K, b, tol=tol, zero_mean_constraint=True, check_symmetry=False)
    w = w_dof[dof]
    w -= w.mean()
    return CellSolution(direction, w, report.final_residual, report.iterations)


def compute_A_hom(mesh: PeriodicMesh, radius: float, solutions: list[CellSolution],
                  mode: str = "transformed", params: TransformParams | None = None,
                  diffusion: float = 1.0) -> np.ndarray:
    """Effective tensor in the symmetric energy form.

    Computes integral of (grad w_i + e_i) . C (grad w_j + e_j) over the cell,
    which coincides with the divergence form of the tensor by the corrector
    equation and is symmetric by construction.
    """
    areas, grads = triangle_geometry(mesh.vertices, mesh.triangles)
    coeff = _coefficient(mesh, params, radius, mode, diffusion)
    fields = []
    for sol in sorted(solutions, key=lambda s: s.direction):
        g = np.einsum("ti,tia->ta", sol.w[mesh.triangles], grads)
        g[:, sol.direction] += 1.0
        fields.append(g)
    a_hom = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            a_hom[i, j] = np.sum(areas * np.einsum("ta,tab,tb->t", fields[i], coeff, fields[j]))
    return 0.5 * (a_hom + a_hom.T)


def effective_tensor(mesh: PeriodicMesh, radius: float, mode: str = "transformed",
                     params: TransformParams | None = None, diffusion: float = 1.0,
                     tol: float = 1e-10) -> np.ndarray:
    sols = [solve_cell_problem(mesh, radius, mode, j, params, diffusion, tol) for j in range(2)]
    return compute_A_hom(mesh, radius, sols, mode, params, diffusion)


# ---------------------------------------------------------------------------
# Radius-parametrized table
# ---------------------------------------------------------------------------

@dataclass
class EffectiveTensorTable:
    """Sorted radius grid with per-radius effective tensors and porosity.

    Tensor lookup interpolates entrywise piecewise-linearly, which preserves
    the monotonicity and bound properties of the tabulated values.  The
    porosity and its radius derivative are analytic.
    """

    radii: np.ndarray
    tensors: np.ndarray      # (m, 2, 2)
    theta: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.tensors = np.asarray(self.tensors, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("table radii must be strictly increasing")

    def lookup(self, r):
        """Interpolated tensor plus analytic porosity and its derivative.

        Radii outside the grid are clamped (and the caller warned through the
        returned clamp flag in :meth:`lookup_many`).
        """
        A, theta, dtheta, _ = self.lookup_many(np.asarray(r, dtype=float)[None])
        return A[0], float(theta[0]), float(dtheta[0])

    def lookup_many(self, r: np.ndarray):
        r = np.asarray(r, dtype=float)
        clamped = (r < self.radii[0]) | (r > self.radii[-1])
        if np.any(clamped):
            logger.warning("tensor lookup clamped %d radii into [%g, %g]",
                           int(np.count_nonzero(clamped)), self.radii[0], self.radii[-1])
        rc = np.clip(r, self.radii[0], self.radii[-1])
        A = np.empty(r.shape + (2, 2))
        for i in range(2):
            for j in range(2):
                A[..., i, j] = np.interp(rc, self.radii, self.tensors[:, i, j])
        return A, porosity(rc), -sphere_surface(rc), bool(np.any(clamped))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("r,A11,A12,A22,theta\n")
        for k in range(len(self.radii)):
            row = (self.radii[k], self.tensors[k, 0, 0], self.tensors[k, 0, 1],
                   self.tensors[k, 1, 1], self.theta[k])
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EffectiveTensorTable":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if lines[0].strip() != "r,A11,A12,A22,theta":
            raise ValueError("unexpected tensor table header")
        rows = [tuple(float(v) for v in ln.split(",")) for ln in lines[1:]]
        radii = np.array([row[0] for row in rows])
        tensors = np.array([[[row[1], row[2]], [row[2], row[3]]] for row in rows])
        theta = np.array([row[4] for row in rows])
        return cls(radii, tensors, theta)


def tabulate(params: TransformParams, r_grid: np.ndarray, n_boundary: int = 64,
             target_h: float = 0.05, diffusion: float = 1.0,
             tol: float = 1e-10) -> EffectiveTensorTable:
    """Tensor table over ``r_grid`` via transformed mode on one reference mesh.

    A single discretization shared across radii makes the tabulated tensors a
    smooth, monotone function of the radius: the geometric error of the
    polygonal hole cancels in radius comparisons.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.size < 5:
        raise ValueError("tensor table needs at least 5 radii")
    if np.any(r_grid < params.r_min) or np.any(r_grid > params.r_max):
        raise ValueError("table radii must lie in [r_min, r_max]")
    mesh = build_reference_mesh(params.r0, n_boundary, target_h)
    tensors = np.empty((r_grid.size, 2, 2))
    for k, r in enumerate(r_grid):
        try:
            tensors[k] = effective_tensor(mesh, float(r), "transformed", params, diffusion, tol)
        except Exception as exc:
            raise type(exc)(f"tensor tabulation failed at r={r}: {exc}") from exc
    return EffectiveTensorTable(r_grid, tensors, porosity(r_grid))


def table_checks(table: EffectiveTensorTable) -> dict[str, bool]:
    """Named invariant checks used by the table command and its tests."""
    sym = float(np.max(np.abs(table.tensors[:, 0, 1] - table.tensors[:, 1, 0])))
    eigmin = float(min(np.linalg.eigvalsh(t).min() for t in table.tensors))
    offdiag = float(np.max(np.abs(table.tensors[:, 0, 1])))
    voigt = bool(np.all(table.tensors[:, 0, 0] <= porosity(table.radii) + 1e-12))
    decreasing = bool(np.all(np.diff(table.tensors[:, 0, 0]) < 0))
    theta_dec = bool(np.all(np.diff(table.theta) < 0))
    return {
        "symmetric_1e-12": sym <= 1e-12,
        "positive_definite": eigmin > 0.0,
        "offdiag_1e-6": offdiag <= 1e-6,
        "voigt_bound": voigt,
        "A11_strictly_decreasing": decreasing,
        "theta_strictly_decreasing": theta_dec,
    }
