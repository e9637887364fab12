"""
Numba kernels for P1 finite element matrices on interval cells and triangles.
"""

import numba
import numpy as np
import scipy.sparse as sp


"""
Numba functions for linear elements on interval cells
"""


@numba.njit
def _interval_entries(cells, h, p):
    # cells: (n, 2) dof pairs, h: cell widths, p: density at cell midpoints
    n = cells.shape[0]
    rows = np.empty(4 * n, dtype=np.int64)
    cols = np.empty(4 * n, dtype=np.int64)
    kvals = np.empty(4 * n)
    mvals = np.empty(4 * n)

    for c in range(n):
        k = p[c] / h[c]
        m = p[c] * h[c] / 6.0
        for a in range(2):
            for b in range(2):
                idx = 4 * c + 2 * a + b
                rows[idx] = cells[c, a]
                cols[idx] = cells[c, b]
                if a == b:
                    kvals[idx] = k
                    mvals[idx] = 2.0 * m
                else:
                    kvals[idx] = -k
                    mvals[idx] = m

    return rows, cols, kvals, mvals


"""
Numba functions for linear elements on triangles
"""


@numba.njit
def triangle_areas(nodes, triangles):
    n = triangles.shape[0]
    areas = np.empty(n)
    for t in range(n):
        i, j, k = triangles[t, 0], triangles[t, 1], triangles[t, 2]
        areas[t] = 0.5 * (
            (nodes[j, 0] - nodes[i, 0]) * (nodes[k, 1] - nodes[i, 1])
            - (nodes[k, 0] - nodes[i, 0]) * (nodes[j, 1] - nodes[i, 1])
        )
    return areas


@numba.njit
def _triangle_entries(nodes, triangles):
    n = triangles.shape[0]
    rows = np.empty(9 * n, dtype=np.int64)
    cols = np.empty(9 * n, dtype=np.int64)
    kvals = np.empty(9 * n)
    mvals = np.empty(9 * n)
    b = np.empty(3)
    c = np.empty(3)

    for t in range(n):
        i, j, k = triangles[t, 0], triangles[t, 1], triangles[t, 2]
        x1, y1 = nodes[i, 0], nodes[i, 1]
        x2, y2 = nodes[j, 0], nodes[j, 1]
        x3, y3 = nodes[k, 0], nodes[k, 1]
        det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
        area = 0.5 * abs(det)

        # gradients of the barycentric coordinates
        b[0] = (y2 - y3) / det
        b[1] = (y3 - y1) / det
        b[2] = (y1 - y2) / det
        c[0] = (x3 - x2) / det
        c[1] = (x1 - x3) / det
        c[2] = (x2 - x1) / det

        for a in range(3):
            for d in range(3):
                idx = 9 * t + 3 * a + d
                rows[idx] = triangles[t, a]
                cols[idx] = triangles[t, d]
                kvals[idx] = area * (b[a] * b[d] + c[a] * c[d])
                mvals[idx] = area / 6.0 if a == d else area / 12.0

    return rows, cols, kvals, mvals


def interval_matrices(cells, h, p, n_dofs):
    """Stiffness and consistent mass of P1 elements on interval cells with midpoint
    density quadrature.

    :param cells: (n, 2) array of dof indices per cell
    :param h: cell widths
    :param p: density at the cell midpoints
    :param n_dofs: total number of degrees of freedom

    :returns: stiffness and mass as CSR matrices
    """

    rows, cols, kvals, mvals = _interval_entries(
        np.ascontiguousarray(cells, dtype=np.int64),
        np.ascontiguousarray(h, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
    )
    K = sp.coo_matrix((kvals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    M = sp.coo_matrix((mvals, (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()
    return K, M


def triangle_matrices(nodes, triangles, min_area: float = 1e-14):
    """Stiffness and consistent mass of P1 elements on a triangle mesh.

    :param nodes: (N, 2) node coordinates
    :param triangles: (T, 3) node indices per triangle
    :param min_area: triangles below this area are rejected, defaults to 1e-14

    :returns: stiffness and mass as CSR matrices
    """

    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)

    areas = np.abs(triangle_areas(nodes, triangles))
    bad = np.flatnonzero(areas < min_area)
    if bad.size:
        raise ValueError(
            f"{bad.size} degenerate triangle(s) with area below {min_area}, "
            f"first at index {bad[0]}"
        )

    rows, cols, kvals, mvals = _triangle_entries(nodes, triangles)
    n = nodes.shape[0]
    K = sp.coo_matrix((kvals, (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((mvals, (rows, cols)), shape=(n, n)).tocsr()
    return K, M
