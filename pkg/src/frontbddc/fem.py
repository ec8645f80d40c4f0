"""Element stiffness for isotropic linear elasticity and subdomain assembly."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateElementError
from .hex8 import gauss_points, jacobians, shape_gradients

__all__ = [
    "ElementMatrix",
    "SubdomainStiffness",
    "elasticity_matrix",
    "element_stiffness",
    "element_stiffness_batch",
    "assemble",
    "assemble_global",
    "assemble_subdomain",
]

_CHUNK = 2048


@dataclass(frozen=True)
class ElementMatrix:
    element: int
    matrix: np.ndarray
    dofs: np.ndarray


@dataclass(frozen=True)
class SubdomainStiffness:
    """Stiffness ``K`` and load ``f`` of one subdomain in its local dof numbering.

    ``dofs[k]`` is the global dof of local dof ``k``; local dofs follow the
    subdomain's sorted node list, three per node.
    """

    index: int
    K: sp.csr_matrix
    f: np.ndarray
    nodes: np.ndarray
    dofs: np.ndarray

    @property
    def n_dofs(self):
        return len(self.dofs)


def elasticity_matrix(material):
    """6x6 Voigt matrix for strains ordered (xx, yy, zz, xy, yz, zx), engineering shear."""
    lam, mu = material.lame_lambda, material.lame_mu
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2.0 * mu
    D[np.arange(3, 6), np.arange(3, 6)] = mu
    return D


def _strain_displacement(dNdx):
    """B matrices (..., 6, 24) from physical shape gradients (..., 3, 8)."""
    shape = dNdx.shape[:-2]
    B = np.zeros(shape + (6, 24))
    dx, dy, dz = dNdx[..., 0, :], dNdx[..., 1, :], dNdx[..., 2, :]
    B[..., 0, 0::3] = dx
    B[..., 1, 1::3] = dy
    B[..., 2, 2::3] = dz
    B[..., 3, 0::3] = dy
    B[..., 3, 1::3] = dx
    B[..., 4, 1::3] = dz
    B[..., 4, 2::3] = dy
    B[..., 5, 0::3] = dz
    B[..., 5, 2::3] = dx
    return B


def element_stiffness_batch(coords, material, order=2):
    """Stiffness matrices (m, 24, 24) for elements with nodal coordinates (m, 8, 3)."""
    pts, wts = gauss_points(order)
    dN = shape_gradients(pts)
    J = jacobians(coords, dN)
    detJ = np.linalg.det(J)
    if (detJ <= 0).any():
        bad = int(np.flatnonzero((detJ <= 0).any(axis=1))[0])
        raise DegenerateElementError(f"element {bad} of the batch has a non-positive Jacobian")
    invJ = np.linalg.inv(J)
    dNdx = np.einsum("mqba,qan->mqbn", invJ, dN)
    B = _strain_displacement(dNdx)
    D = elasticity_matrix(material)
    w = wts[None, :] * detJ
    return np.einsum("mq,mqki,kl,mqlj->mij", w, B, D, B, optimize=True)


def element_stiffness(mesh, element, material=None):
    material = mesh.material if material is None else material
    conn = mesh.elements[element]
    K = element_stiffness_batch(mesh.nodes[conn][None], material)[0]
    dofs = (3 * conn[:, None] + np.arange(3)).ravel()
    return ElementMatrix(int(element), K, dofs)


def assemble(mesh, elements, node_to_local, n_local_nodes, material=None):
    """Sum element matrices of ``elements`` into a sparse matrix over local nodes.

    ``node_to_local`` maps global node ids to local ids (an array indexed by
    global node id).
    """
    material = mesh.material if material is None else material
    elements = np.asarray(elements, dtype=np.int64)
    n = 3 * n_local_nodes
    rows, cols, vals = [], [], []
    for start in range(0, len(elements), _CHUNK):
        chunk = elements[start : start + _CHUNK]
        conn = mesh.elements[chunk]
        Ke = element_stiffness_batch(mesh.nodes[conn], material)
        ldofs = (3 * node_to_local[conn][:, :, None] + np.arange(3)).reshape(len(chunk), 24)
        rows.append(np.repeat(ldofs, 24, axis=1).ravel())
        cols.append(np.tile(ldofs, (1, 24)).ravel())
        vals.append(Ke.ravel())
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def assemble_global(mesh, material=None):
    """Global stiffness matrix (no boundary conditions applied) and load vector."""
    ident = np.arange(mesh.n_nodes)
    K = assemble(mesh, np.arange(mesh.n_elements), ident, mesh.n_nodes, material)
    return K, mesh.load_vector()


def assemble_subdomain(mesh, decomposition, i, material=None):
    """Subassemble the elements of subdomain ``i``.

    Nodal loads at interface nodes go only to the owning (lowest-index)
    subdomain, so the subdomain load vectors sum to the global one.
    """
    elements = decomposition.subdomain_elements[i]
    nodes = decomposition.subdomain_nodes[i]
    if np.any(decomposition.element_part[elements] != i):
        raise RuntimeError(f"element list of subdomain {i} contains foreign elements")
    g2l = np.full(mesh.n_nodes, -1, dtype=np.int64)
    g2l[nodes] = np.arange(len(nodes))
    K = assemble(mesh, elements, g2l, len(nodes), material)
    f = np.zeros(3 * len(nodes))
    owner = decomposition.node_owner
    for (n, d), v in mesh.loads.items():
        if owner[n] == i:
            f[3 * g2l[n] + d] += v
    dofs = (3 * nodes[:, None] + np.arange(3)).ravel()
    return SubdomainStiffness(i, K, f, nodes, dofs)
