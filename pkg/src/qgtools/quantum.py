"""
Weighted Kirchhoff Laplacian on a metric graph by P1 finite elements, the generalised
eigensolver shared with the thin-domain problem, and the exact spectral maps relating
equilateral metric graphs, discrete Laplacians and decoupled limits.
"""

import math
import logging
import threading

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .graph import DiscreteGraph, MetricGraph, degree
from .discrete import discrete_laplacian, discrete_spectrum
from ._assembly import interval_matrices
from ._utils import (
    BOUND_SLACK,
    DENSE_LIMIT,
    check_dense_size,
    check_positive,
    cluster_eigenvalues,
)

logger = logging.getLogger(__name__)

# shift used by the sparse solver, which factorises K + SHIFT_SIGMA * M
SHIFT_SIGMA = 1.0


class DirichletSetError(ValueError):
    """Raised when λ lies on the Dirichlet set {(kπ/ℓ)²}."""


class FemSystem:
    """A stiffness/mass pair (K, M) with a lazily computed, M-orthonormal spectral
    decomposition. The matrices are never modified after construction; the cache is
    filled once under a lock and read-only afterwards.

    :param stiffness: Symmetric positive semi-definite stiffness matrix
    :param mass: Symmetric positive definite mass matrix
    :param h: Mesh width used for the assembly
    :param dof_map: Layout of the degrees of freedom (GraphDofMap or ThinMesh)
    """

    def __init__(self, stiffness, mass, h: float, dof_map=None):
        self.stiffness = sp.csr_matrix(stiffness)
        self.mass = sp.csr_matrix(mass)
        if self.stiffness.shape != self.mass.shape:
            raise ValueError(
                f"Stiffness {self.stiffness.shape} and mass {self.mass.shape} differ"
            )
        self.h = float(h)
        self.dof_map = dof_map
        self._lock = threading.Lock()
        self._full = None
        self._lowest = {}

    @property
    def dim(self) -> int:
        return self.stiffness.shape[0]

    def decomposition(self, dense_limit: int = DENSE_LIMIT) -> tuple:
        """Full generalised decomposition K V = M V diag(Λ), Vᵀ M V = I.

        :returns: (eigenvalues ascending, eigenvectors as columns)
        :rtype: tuple
        """

        with self._lock:
            if self._full is None:
                check_dense_size(self.dim, dense_limit)
                logger.debug("Dense generalised eigensolve, dimension %d", self.dim)
                try:
                    lam, V = la.eigh(self.stiffness.toarray(), self.mass.toarray())
                except la.LinAlgError as err:
                    raise RuntimeError(
                        f"Generalised eigensolve failed: {err}. Is the mass matrix "
                        "positive definite?"
                    ) from err
                self._full = (lam, V)
            return self._full

    def lowest(
        self, n: int, dense_limit: int = DENSE_LIMIT, sigma: float = SHIFT_SIGMA
    ) -> tuple:
        """The `n` smallest eigenpairs. Dense up to `dense_limit` unknowns, shift-invert
        Lanczos on K + sigma M above it."""

        if not 1 <= n <= self.dim:
            raise ValueError(f"Requested {n} eigenpairs of a {self.dim}-dim system")

        if self.dim <= dense_limit:
            lam, V = self.decomposition(dense_limit)
            return lam[:n], V[:, :n]

        with self._lock:
            if n not in self._lowest:
                logger.debug("Shift-invert eigensolve, dimension %d, n=%d", self.dim, n)
                try:
                    lam, V = spla.eigsh(
                        self.stiffness.tocsc(),
                        k=n,
                        M=self.mass.tocsc(),
                        sigma=-sigma,
                        which="LM",
                    )
                except spla.ArpackNoConvergence as err:
                    raise RuntimeError(
                        f"Shift-invert eigensolve failed: {err}"
                    ) from err
                order = np.argsort(lam)
                lam, V = lam[order], V[:, order]
                # normalise in the mass inner product
                V = V / np.sqrt(np.einsum("ij,ij->j", V, self.mass @ V))
                self._lowest[n] = (lam, V)
            return self._lowest[n]

    def norm(self, u, order: int = 0) -> float:
        """‖u‖₀ = sqrt(uᵀMu) or, for order 1, sqrt(uᵀ(K+M)u)."""

        u = np.asarray(u)
        form = self.mass if order == 0 else self.stiffness + self.mass
        return float(np.sqrt(u @ (form @ u)))


@dataclass(frozen=True)
class GraphDofMap:
    """Degrees of freedom of a P1 discretisation of a metric graph: one shared dof per
    vertex and the node positions/dofs along each edge from tail to head."""

    graph: MetricGraph
    vertex_dof: Mapping
    edge_dofs: Mapping
    edge_x: Mapping

    @property
    def n_dofs(self) -> int:
        return 1 + max(int(d.max()) for d in self.edge_dofs.values())

    @property
    def edge_cells(self) -> dict:
        return {eid: len(x) - 1 for eid, x in self.edge_x.items()}


@dataclass(frozen=True)
class MetricEigenpair:
    eigenvalue: float
    coefficients: np.ndarray
    dof_map: GraphDofMap

    def evaluate(self, edge_id: int, x) -> np.ndarray:
        """Piecewise-linear value at arclength positions `x` on edge `edge_id`."""

        dofs = self.dof_map.edge_dofs[edge_id]
        return np.interp(x, self.dof_map.edge_x[edge_id], self.coefficients[dofs])

    def on_edge(self, edge_id: int):
        return lambda x: self.evaluate(edge_id, x)

    def residual(self, sys: FemSystem) -> float:
        """‖Ku - λMu‖ in the M⁻¹ norm."""

        r = sys.stiffness @ self.coefficients - self.eigenvalue * (
            sys.mass @ self.coefficients
        )
        return float(np.sqrt(r @ spla.spsolve(sys.mass.tocsc(), r)))


def assemble_kirchhoff(
    g: MetricGraph, h: float, cells: Optional[Mapping] = None
) -> FemSystem:
    """Assemble the P1 stiffness and consistent mass of the weighted Kirchhoff
    Laplacian. Vertex dofs are shared between incident edges, so continuity is built in
    and the Kirchhoff condition holds weakly. Density enters by midpoint quadrature.

    :param g: Metric graph with finite edges
    :type g: MetricGraph
    :param h: Target mesh width; each edge gets at least ceil(length / h) cells
    :type h: float
    :param cells: Exact number of cells per edge id, overriding `h` for the listed
        edges, defaults to None
    :type cells: Mapping, optional

    :returns: The assembled system, with a GraphDofMap as `dof_map`
    :rtype: FemSystem
    """

    if not g.is_finite:
        leads = [e.id for e in g.edges if e.is_lead]
        raise ValueError(
            f"Edges {leads} are infinite; truncate them to a finite length first"
        )
    h = check_positive("h", h)
    cells = dict(cells or {})

    vertex_dof = {v: i for i, v in enumerate(g.vertices)}
    n_dofs = len(g.vertices)
    edge_dofs, edge_x = {}, {}
    all_cells, all_h, all_p = [], [], []

    for e in g.edges:
        n_cells = int(cells.get(e.id, max(1, math.ceil(e.length / h - 1e-9))))
        if e.is_loop:
            # the midpoint node acts as the auxiliary vertex of the loop
            n_cells = max(n_cells, 2)
        x = np.linspace(0.0, e.length, n_cells + 1)
        interior = np.arange(n_dofs, n_dofs + n_cells - 1)
        n_dofs += n_cells - 1
        dofs = np.concatenate([[vertex_dof[e.tail]], interior, [vertex_dof[e.head]]])

        edge_dofs[e.id] = dofs.astype(np.int64)
        edge_x[e.id] = x
        all_cells.append(np.column_stack([dofs[:-1], dofs[1:]]))
        all_h.append(np.diff(x))
        all_p.append(e.density(0.5 * (x[:-1] + x[1:])))

    K, M = interval_matrices(
        np.concatenate(all_cells), np.concatenate(all_h), np.concatenate(all_p), n_dofs
    )
    logger.info("Assembled Kirchhoff system: %d dofs, h=%g", n_dofs, h)

    dof_map = GraphDofMap(
        graph=g, vertex_dof=vertex_dof, edge_dofs=edge_dofs, edge_x=edge_x
    )
    return FemSystem(K, M, h, dof_map=dof_map)


def eigenpairs(sys: FemSystem, n: int, **kwargs) -> list:
    """The `n` smallest eigenpairs of a graph system, ascending, M-orthonormal.

    :param sys: System assembled by `assemble_kirchhoff`
    :type sys: FemSystem
    :param n: Number of eigenpairs
    :type n: int

    :returns: List of MetricEigenpair
    :rtype: list
    """

    lam, V = sys.lowest(n, **kwargs)
    return [
        MetricEigenpair(
            eigenvalue=float(lam[i]), coefficients=V[:, i], dof_map=sys.dof_map
        )
        for i in range(n)
    ]


def sample_eigenfunction(pair: MetricEigenpair) -> pd.DataFrame:
    """Nodal values of an eigenfunction as a table (edge_id, x, value)."""

    frames = []
    for eid, x in pair.dof_map.edge_x.items():
        frames.append(
            pd.DataFrame(
                {
                    "edge_id": eid,
                    "x": x,
                    "value": pair.coefficients[pair.dof_map.edge_dofs[eid]],
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def kirchhoff_residual(pair: MetricEigenpair) -> dict:
    """Σ_e p_e(v) f′_e(v) at each vertex, with f′_e(v) the one-sided difference
    quotient pointing away from v."""

    dm = pair.dof_map
    u = pair.coefficients
    res = {v: 0.0 for v in dm.graph.vertices}
    for e in dm.graph.edges:
        d, x = dm.edge_dofs[e.id], dm.edge_x[e.id]
        res[e.tail] += float(e.density(0.0)) * (u[d[1]] - u[d[0]]) / (x[1] - x[0])
        res[e.head] += float(e.density(e.length)) * (u[d[-2]] - u[d[-1]]) / (
            x[-1] - x[-2]
        )
    return res


def dirichlet_spectrum(length: float, lambda_max: float) -> np.ndarray:
    """{(kπ/ℓ)² : k >= 1} up to `lambda_max`."""

    length = check_positive("length", length)
    k_max = int(math.floor(length * math.sqrt(max(lambda_max, 0.0)) / math.pi))
    vals = (np.arange(1, k_max + 2) * math.pi / length) ** 2
    return vals[vals <= lambda_max]


def g_map(lam, length: float):
    """g(λ) = 1 - cos(ℓ√λ)."""

    return 1 - np.cos(length * np.sqrt(lam))


def mu_preimages(mu: float, length: float, lambda_max: float) -> np.ndarray:
    """All λ in (0, lambda_max] with g(λ) = mu, ascending.

    :param mu: Discrete eigenvalue strictly inside (0, 2)
    :type mu: float
    :param length: Common edge length
    :type length: float
    :param lambda_max: Upper cut-off
    :type lambda_max: float

    :returns: The preimages λ_k = ((2kπ ± arccos(1 - mu)) / ℓ)²
    :rtype: np.ndarray
    """

    if not 0 < mu < 2:
        raise ValueError(f"`mu` must lie strictly inside (0, 2), got {mu}")
    length = check_positive("length", length)

    theta = math.acos(1 - mu)
    vals = []
    k = 0
    while True:
        lo = ((2 * k * math.pi + theta) / length) ** 2
        if lo > lambda_max:
            break
        vals.append(lo)
        hi = ((2 * (k + 1) * math.pi - theta) / length) ** 2
        if hi <= lambda_max:
            vals.append(hi)
        k += 1
    return np.asarray(vals)


def metric_spectrum_via_correspondence(
    eigs: Optional[Sequence[float]],
    length: float,
    lambda_max: float,
    graph: DiscreteGraph,
    endpoint_tol: float = 1e-9,
) -> pd.DataFrame:
    """Metric-graph eigenvalues away from the Dirichlet set of an equilateral graph,
    as g-preimages of the discrete spectrum.

    :param eigs: Discrete Laplacian eigenvalues of `graph`; computed when None
    :param length: Common edge length
    :param lambda_max: Upper cut-off
    :param graph: The combinatorial graph; all degrees must be >= 2 and there must be
        no loops
    :param endpoint_tol: Discrete eigenvalues within this of 0 or 2 are dropped,
        defaults to 1e-9

    :returns: Table with columns `eigenvalue`, `mu`, `multiplicity`, ascending
    :rtype: pd.DataFrame
    """

    if graph.has_loops:
        raise ValueError("Spectral correspondence requires a graph without loops")
    low = [v for v, d in graph.degrees.items() if d < 2]
    if low:
        raise ValueError(f"Spectral correspondence requires degree >= 2; see {low}")

    if eigs is None:
        eigs = discrete_spectrum(discrete_laplacian(graph))["eigenvalue"]

    rows = []
    for mu, mult in cluster_eigenvalues(eigs):
        if mu <= endpoint_tol or mu >= 2 - endpoint_tol:
            continue
        for lam in mu_preimages(mu, length, lambda_max):
            rows.append((lam, mu, mult))

    table = pd.DataFrame(rows, columns=["eigenvalue", "mu", "multiplicity"])
    return table.sort_values("eigenvalue").reset_index(drop=True)


def lift_eigenvector(
    a: Sequence[float],
    lam: float,
    sys: FemSystem,
    isometric: bool = True,
    tol: float = 1e-8,
) -> MetricEigenpair:
    """Lift a discrete eigenvector for μ = g(λ) to the metric graph,

        (U a)_e(x) = C (a(∂₋e) sin((ℓ - x)√λ) + a(∂₊e) sin(x√λ)),

    and interpolate it on the dofs of `sys`. With `isometric=True`,
    C = √(2/ℓ) / sin(ℓ√λ), for which ‖U a‖ equals the degree-weighted norm of `a`
    when `a` is an eigenvector and the density is 1. With `isometric=False`,
    C = √ℓ / (√2 sin(ℓ√λ)).

    :param a: Vertex values, ordered as the graph's vertices
    :param lam: Metric eigenvalue λ
    :param sys: System assembled on the equilateral graph
    :param isometric: Choice of normalising constant, defaults to True
    :param tol: Distance to the Dirichlet set below which λ is refused,
        defaults to 1e-8

    :returns: The interpolated lift
    :rtype: MetricEigenpair
    """

    dm = sys.dof_map
    lengths = {e.length for e in dm.graph.edges}
    length = lengths.pop()
    if lengths and max(abs(l - length) for l in lengths) > 1e-12:
        raise ValueError("Lifting needs an equilateral graph")

    omega = math.sqrt(lam)
    s = math.sin(length * omega)
    k = round(length * omega / math.pi)
    if k >= 1 and abs(lam - (k * math.pi / length) ** 2) < tol or abs(s) < tol:
        raise DirichletSetError(f"λ = {lam} lies on the Dirichlet set for ℓ = {length}")

    if isometric:
        const = math.sqrt(2 / length) / s
    else:
        const = math.sqrt(length) / (math.sqrt(2) * s)

    a = np.asarray(a, dtype=float)
    index = {v: i for i, v in enumerate(dm.graph.vertices)}
    u = np.zeros(sys.dim)
    for e in dm.graph.edges:
        x = dm.edge_x[e.id]
        u[dm.edge_dofs[e.id]] = const * (
            a[index[e.tail]] * np.sin((length - x) * omega)
            + a[index[e.head]] * np.sin(x * omega)
        )
    return MetricEigenpair(eigenvalue=float(lam), coefficients=u, dof_map=dm)


def gap_intervals_tree(d0: int, lambda_max: float) -> list:
    """Spectral gaps of the equilateral (unit length) homogeneous tree of degree d0:
    I₀ = (0, ω₀²) and, for k >= 1, ((kπ - ω₀)², (kπ)²) and ((kπ)², (kπ + ω₀)²), where
    ω₀ = arccos(2√(d0 - 1)/d0). Intervals starting below `lambda_max` are returned,
    clipped to it.
    """

    if d0 < 3:
        raise ValueError(f"`d0` must be at least 3, got {d0}")
    w0 = math.acos(2 * math.sqrt(d0 - 1) / d0)

    intervals = [(0.0, w0**2)]
    k = 1
    while (k * math.pi - w0) ** 2 < lambda_max:
        intervals.append(((k * math.pi - w0) ** 2, (k * math.pi) ** 2))
        intervals.append(((k * math.pi) ** 2, (k * math.pi + w0) ** 2))
        k += 1

    return [(lo, min(hi, lambda_max)) for lo, hi in intervals if lo < lambda_max]


def gap_preimages(intervals: Sequence, length: float, lambda_max: float) -> list:
    """Map open μ-intervals of [0, 2] to λ-intervals through g, branch by branch.
    On branch k, ℓ√λ runs over [kπ, (k+1)π] and g is monotone."""

    length = check_positive("length", length)
    out = []
    k = 0
    while (k * math.pi / length) ** 2 < lambda_max:
        for a, b in intervals:
            ends = []
            for mu in (a, b):
                t = math.acos(1 - min(max(mu, 0.0), 2.0))
                t = k * math.pi + t if k % 2 == 0 else (k + 1) * math.pi - t
                ends.append((t / length) ** 2)
            lo, hi = sorted(ends)
            if lo < lambda_max:
                out.append((lo, min(hi, lambda_max)))
        k += 1
    return sorted(out)


def decoupled_spectrum(
    lengths: Sequence[float], lambda_max: float, n_vertices: int
) -> list:
    """Limit spectrum when vertex regions decouple: 0 with multiplicity |V| and the
    Dirichlet values π²k²/ℓ_e² of every edge, multiplicities merged.

    :returns: List of (eigenvalue, multiplicity), ascending
    :rtype: list
    """

    vals = []
    for length in lengths:
        length = check_positive("length", length)
        vals.extend(dirichlet_spectrum(length, lambda_max))

    spectrum = [(0.0, int(n_vertices))] if n_vertices > 0 else []
    return spectrum + cluster_eigenvalues(vals, rtol=1e-12, atol=0.0)


def decoupled_family(n: int, k_max: int) -> pd.DataFrame:
    """Decoupled eigenvalues for edge length ℓ_n = √n/π: π²k²/ℓ_n² = π⁴k²/n, next to
    k²/n, the values the family takes for ℓ_n = π√n. The two differ by a factor π⁴."""

    if n < 1:
        raise ValueError(f"`n` must be at least 1, got {n}")
    k = np.arange(1, k_max + 1)
    length = math.sqrt(n) / math.pi
    return pd.DataFrame(
        {
            "k": k,
            "length": length,
            "eigenvalue": (math.pi * k / length) ** 2,
            "quoted_value": k**2 / n,
        }
    )


def trace_bound_check(
    g: MetricGraph, sys: FemSystem, n_samples: int = 50, seed: int = 0
) -> pd.DataFrame:
    """Test Σ_v |f(v)|² <= 4/(ℓ₀ p₋) ‖f‖₁² on random P1 functions.

    :returns: One row per sample with columns `vertex_sum`, `norm1_sq`, `bound`, `ok`
    :rtype: pd.DataFrame
    """

    rng = np.random.default_rng(seed)
    dm = sys.dof_map
    l0 = min(e.length for e in g.edges)
    p_minus = min(e.density.p_minus(e.length) for e in g.edges)
    const = 4 / (l0 * p_minus)
    vdofs = np.asarray([dm.vertex_dof[v] for v in g.vertices])

    rows = []
    for _ in range(n_samples):
        # random smooth part plus random nodal noise
        f = rng.normal(size=sys.dim) * rng.uniform(0, 1) + rng.normal()
        vertex_sum = float(np.sum(f[vdofs] ** 2))
        norm1_sq = sys.norm(f, order=1) ** 2
        rows.append((vertex_sum, norm1_sq, const * norm1_sq))

    table = pd.DataFrame(rows, columns=["vertex_sum", "norm1_sq", "bound"])
    table["ok"] = table["vertex_sum"] <= table["bound"]
    return table


def cutoff_functions(length: float) -> tuple:
    """Piecewise-affine cut-offs ρ⁻, ρ⁺ on [0, ℓ]: equal to 1 at their vertex and
    vanishing at distance min(1, ℓ/2) from it."""

    a = min(1.0, length / 2)

    def rho_minus(x):
        return np.clip(1 - np.asarray(x, dtype=float) / a, 0.0, 1.0)

    def rho_plus(x):
        return np.clip(1 - (length - np.asarray(x, dtype=float)) / a, 0.0, 1.0)

    return rho_minus, rho_plus


def cutoff_norms(g: MetricGraph, n_quad: int = 4000) -> pd.DataFrame:
    """Weighted norms ‖ρ±‖² and ‖(ρ±)′‖² per edge end, by midpoint quadrature, with
    the bounds p₊ and 2p₊/ℓ₀."""

    l0 = min(e.length for e in g.edges)
    rows = []
    for e in g.edges:
        x = (np.arange(n_quad) + 0.5) * e.length / n_quad
        dx = e.length / n_quad
        p = e.density(x)
        p_plus = e.density.p_plus(e.length)
        for side, rho in zip(("minus", "plus"), cutoff_functions(e.length)):
            r = rho(x)
            dr = (rho(x + dx / 2) - rho(x - dx / 2)) / dx
            rows.append(
                (
                    e.id,
                    side,
                    float(np.sum(r**2 * p) * dx),
                    float(np.sum(dr**2 * p) * dx),
                    p_plus,
                    2 * p_plus / l0,
                )
            )

    table = pd.DataFrame(
        rows,
        columns=[
            "edge_id",
            "side",
            "rho_norm2",
            "drho_norm2",
            "bound_rho",
            "bound_drho",
        ],
    )
    table["ok"] = (table["rho_norm2"] <= table["bound_rho"] + BOUND_SLACK) & (
        table["drho_norm2"] <= table["bound_drho"] + BOUND_SLACK
    )
    return table
