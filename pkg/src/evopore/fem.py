"""Shared P1 finite-element pieces for triangle meshes.

All solvers in the package use linear triangles with one-point (centroid)
quadrature for variable coefficients and row-sum lumped mass matrices.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseMatrix, TripletBuffer, finalize


def triangle_geometry(vertices: np.ndarray, triangles: np.ndarray):
    """Areas and P1 basis gradients.

    Returns ``(areas, grads)`` with shapes (nt,) and (nt, 3, 2); triangles
    must be positively oriented.
    """
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    e1 = p1 - p0
    e2 = p2 - p0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    areas = 0.5 * det
    grads = np.empty((len(triangles), 3, 2))
    grads[:, 1, 0] = e2[:, 1] / det
    grads[:, 1, 1] = -e2[:, 0] / det
    grads[:, 2, 0] = -e1[:, 1] / det
    grads[:, 2, 1] = e1[:, 0] / det
    grads[:, 0] = -grads[:, 1] - grads[:, 2]
    return areas, grads


def centroids(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    return (vertices[triangles[:, 0]] + vertices[triangles[:, 1]] + vertices[triangles[:, 2]]) / 3.0


def assemble_stiffness(triangles: np.ndarray, areas: np.ndarray, grads: np.ndarray,
                       coeff: np.ndarray, dof_of_node: np.ndarray, n_dof: int) -> SparseMatrix:
    """Stiffness matrix for coefficient ``coeff`` (nt, 2, 2) at centroids."""
    k_el = np.einsum("tia,tab,tjb->tij", grads, coeff, grads) * areas[:, None, None]
    dofs = dof_of_node[triangles]
    rows = np.repeat(dofs, 3, axis=1)
    cols = np.tile(dofs, (1, 3))
    buf = TripletBuffer()
    buf.add_block(rows, cols, k_el)
    return finalize(buf, n_dof, n_dof)


def scatter_element_loads(triangles: np.ndarray, loads: np.ndarray,
                          dof_of_node: np.ndarray, n_dof: int) -> np.ndarray:
    """Accumulate per-element nodal loads (nt, 3) into a dof vector."""
    b = np.zeros(n_dof)
    np.add.at(b, dof_of_node[triangles], loads)
    return b


def element_means(triangles: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Centroid value of a P1 field on every element."""
    return nodal[triangles].mean(axis=1)
