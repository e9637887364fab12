"""
Identification maps between the P1 space of a metric graph and the P1 space of its
thin neighbourhood mesh.
"""

import math
import logging

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .manifold import (
    REGION_COLLAR,
    REGION_CORE,
    REGION_EDGE,
    ThinMesh,
    assemble_neumann,
)
from .quantum import FemSystem, GraphDofMap, cutoff_functions

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class IdentificationSet:
    """Maps J, J₁ (graph to manifold) and J′, J₁′ (manifold to graph) as matrices in
    dof coordinates, together with the regularity order `order` of the pair. J′ may be
    dense."""

    J: object
    J1: object
    Jp: object
    J1p: object
    eps: float = 1.0
    order: int = 1

    @classmethod
    def identity(cls, dim: int, order: int = 1) -> "IdentificationSet":
        eye = sp.identity(dim, format="csr")
        return cls(J=eye, J1=eye, Jp=eye, J1p=eye, order=order)

    def left_inverse_defect(self) -> float:
        """max |J′J - I| entrywise."""

        JpJ = self.Jp @ self.J
        JpJ = JpJ.toarray() if sp.issparse(JpJ) else np.asarray(JpJ)
        return float(np.max(np.abs(JpJ - np.eye(JpJ.shape[0]))))


def _trapezoid(h_rel: int) -> np.ndarray:
    w = np.ones(h_rel + 1)
    w[[0, -1]] = 0.5
    return w / h_rel


def _vertex_means(mesh: ThinMesh, v: int) -> np.ndarray:
    """Weights c with c·u the mean of a P1 function u over U_v."""

    mask = mesh.vertex_mask(v)
    areas = mesh.areas()[mask]
    tri = mesh.triangles[mask]
    c = np.bincount(
        tri.ravel(), weights=np.repeat(areas / 3, 3), minlength=mesh.n_nodes
    )
    return c / areas.sum()


def mass_adjoint(A, source: FemSystem, target: FemSystem) -> np.ndarray:
    """A* = M⁻¹ Aᵀ M̃ for A mapping `source` dofs to `target` dofs, by a sparse LU
    solve with the source mass matrix."""

    rhs = sp.csr_matrix(A).T @ target.mass
    lu = spla.splu(sp.csc_matrix(source.mass))
    return lu.solve(np.asarray(rhs.toarray(), dtype=float))


def build_identification(
    graph_sys: FemSystem,
    mesh: ThinMesh,
    manifold_sys: FemSystem = None,
    eps: float = None,
) -> IdentificationSet:
    """Build the identification maps for a graph system assembled on the cross-line
    positions of `mesh` (`assemble_kirchhoff(g, h, cells=mesh.edge_cells)`).

    - J puts ε^{-1/2} f_e(x) on every node of the cross-line at x and 0 inside U_v;
    - J₁ also puts ε^{-1/2} f(v) on the nodes inside U_v;
    - J′ is the adjoint M⁻¹JᵀM̃ of J in the two mass inner products. On an edge it is
      ε^{1/2} times the mass-weighted transversal average, projected onto the graph
      P1 space, so J′J = I up to the length lost to the vertex regions and the one
      cell next to each vertex;
    - J₁′ takes ε^{1/2} times the trapezoidal cross-line average at each interior edge
      position plus the cut-off correction ρ⁻(C_∂₋e u - N_e u(0)) +
      ρ⁺(C_∂₊e u - N_e u(ℓ)), and ε^{1/2} C_v u at vertices, C_v u being the mean over
      U_v.

    :param graph_sys: Graph system with a GraphDofMap
    :type graph_sys: FemSystem
    :param mesh: Thin-domain mesh of the embedding of the same graph
    :type mesh: ThinMesh
    :param manifold_sys: Neumann system of `mesh`, assembled when None, defaults to
        None
    :type manifold_sys: FemSystem, optional
    :param eps: Expected ε, checked against `mesh.eps`, defaults to None
    :type eps: float, optional

    :returns: The four maps, J′ as a dense array and the others sparse
    :rtype: IdentificationSet
    """

    dm = graph_sys.dof_map
    if not isinstance(dm, GraphDofMap):
        raise ValueError("`graph_sys` must be assembled by `assemble_kirchhoff`")
    if eps is not None and not math.isclose(eps, mesh.eps, rel_tol=1e-12):
        raise ValueError(f"eps={eps:g} does not match the mesh, built at {mesh.eps:g}")
    if manifold_sys is not None and manifold_sys.dim != mesh.n_nodes:
        raise ValueError(
            f"Manifold system has {manifold_sys.dim} dofs, the mesh "
            f"{mesh.n_nodes} nodes"
        )

    g = dm.graph
    for e in g.edges:
        if e.id not in mesh.edge_cross:
            raise ValueError(f"Edge {e.id} has no tagged region in the mesh")
        x, x_mesh = dm.edge_x[e.id], mesh.edge_x[e.id]
        if x.shape != x_mesh.shape or not np.allclose(x, x_mesh, rtol=0, atol=1e-12):
            raise ValueError(
                f"Graph nodes on edge {e.id} are not aligned with the mesh "
                "cross-lines; "
                "assemble the graph with `cells=mesh.edge_cells`"
            )
    for v in g.vertices:
        if not np.any(mesh.vertex_mask(v)):
            raise ValueError(f"Vertex {v} has no tagged region in the mesh")
    if np.any(~np.isin(mesh.region_kind, [REGION_EDGE, REGION_COLLAR, REGION_CORE])):
        raise ValueError("Mesh contains untagged triangles")
    if manifold_sys is None:
        manifold_sys = assemble_neumann(mesh)

    n_g, n_m = dm.n_dofs, mesh.n_nodes
    down, up = math.sqrt(mesh.eps), 1 / math.sqrt(mesh.eps)
    w = _trapezoid(mesh.h_rel)
    means = {v: _vertex_means(mesh, v) for v in g.vertices}
    support = {v: np.flatnonzero(c) for v, c in means.items()}

    def sparse(triplets, shape):
        rows, cols, vals = (np.concatenate(part) for part in zip(*triplets))
        return sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()

    # graph -> manifold
    edge_part = []
    for e in g.edges:
        cross, dofs = mesh.edge_cross[e.id], dm.edge_dofs[e.id]
        edge_part.append(
            (cross.ravel(), np.repeat(dofs, cross.shape[1]), np.full(cross.size, up))
        )
    vertex_part = [
        (
            mesh.vertex_nodes[v],
            np.full(len(mesh.vertex_nodes[v]), dm.vertex_dof[v]),
            np.full(len(mesh.vertex_nodes[v]), up),
        )
        for v in g.vertices
    ]
    J = sparse(edge_part, (n_m, n_g))
    J1 = sparse(edge_part + vertex_part, (n_m, n_g))

    # manifold -> graph
    j1p_part = []
    for e in g.edges:
        cross, dofs, x = mesh.edge_cross[e.id], dm.edge_dofs[e.id], dm.edge_x[e.id]
        n_across = cross.shape[1]
        rho_minus, rho_plus = cutoff_functions(e.length)

        for i in range(1, len(x) - 1):
            row = np.full(n_across, dofs[i])
            j1p_part.append((row, cross[i], down * w))
            for rho, v, end in (
                (rho_minus(x[i]), e.tail, cross[0]),
                (rho_plus(x[i]), e.head, cross[-1]),
            ):
                if rho > 0:
                    idx = support[v]
                    j1p_part.append(
                        (np.full(idx.size, dofs[i]), idx, down * rho * means[v][idx])
                    )
                    j1p_part.append((row, end, -down * rho * w))

    for v in g.vertices:
        idx = support[v]
        row = np.full(idx.size, dm.vertex_dof[v])
        j1p_part.append((row, idx, down * means[v][idx]))

    ids = IdentificationSet(
        J=J,
        J1=J1,
        Jp=mass_adjoint(J, graph_sys, manifold_sys),
        J1p=sparse(j1p_part, (n_g, n_m)),
        eps=mesh.eps,
        order=1,
    )
    logger.debug(
        "Identification maps built, J'J defect %.3g", ids.left_inverse_defect()
    )
    return ids
