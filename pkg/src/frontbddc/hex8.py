"""Reference trilinear hexahedron: node layout, shape-function gradients, Gauss rules."""
import numpy as np

# Natural coordinates of the 8 nodes, bottom face counter-clockwise then top face.
NODE_XI = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)


def gauss_points(order=2):
    """Tensor Gauss-Legendre rule on [-1, 1]^3: points (q, 3) and weights (q,)."""
    x, w = np.polynomial.legendre.leggauss(order)
    px, py, pz = np.meshgrid(x, x, x, indexing="ij")
    wx, wy, wz = np.meshgrid(w, w, w, indexing="ij")
    pts = np.column_stack([px.ravel(), py.ravel(), pz.ravel()])
    return pts, (wx * wy * wz).ravel()


def shape_gradients(xi):
    """Gradients of the 8 shape functions w.r.t. natural coordinates.

    ``xi`` has shape (q, 3); returns (q, 3, 8).
    """
    xi = np.atleast_2d(xi)
    s = NODE_XI  # (8, 3)
    f = 1.0 + xi[:, None, :] * s[None, :, :]  # (q, 8, 3)
    g = np.empty((xi.shape[0], 3, 8))
    g[:, 0, :] = s[:, 0] * f[:, :, 1] * f[:, :, 2] / 8.0
    g[:, 1, :] = s[:, 1] * f[:, :, 0] * f[:, :, 2] / 8.0
    g[:, 2, :] = s[:, 2] * f[:, :, 0] * f[:, :, 1] / 8.0
    return g


def jacobians(coords, dN):
    """Jacobian matrices for a batch of elements.

    coords: (m, 8, 3) nodal coordinates, dN: (q, 3, 8). Returns (m, q, 3, 3)
    with J[e, p, a, b] = d x_b / d xi_a.
    """
    return np.einsum("qan,mnb->mqab", dN, coords)
