"""
Planar embeddings of metric graphs, the thin neighbourhood X_ε of an embedding as a
region-tagged triangle mesh, its Neumann Laplacian, and the pulled-back metric of a
(possibly curved) edge strip.
"""

import math
import logging
import os

from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from shapely import STRtree
from shapely.geometry import Polygon

from .graph import DensitySpec, EdgeRecord, MetricGraph
from .quantum import FemSystem
from ._assembly import triangle_areas, triangle_matrices
from ._utils import DENSE_LIMIT, check_dense_size, check_positive

logger = logging.getLogger(__name__)

REGION_EDGE = 0
REGION_COLLAR = 1
REGION_CORE = 2
LIST_REGION_KINDS = ["edge", "collar", "core"]
LIST_EMBEDDING_BOUNDS = ["beta0", "kappa0", "l0", "r_minus", "r_plus", "dr0"]

# curve endpoints must meet their vertices, and curve lengths the edge lengths
POSITION_TOL = 1e-8
LENGTH_TOL = 1e-6

# ends closer than this to a half turn are treated as collinear
ANGLE_TOL = 1e-9

# fewest triangles accepted for a local vertex-region solve
MIN_REGION_TRIANGLES = 10


class MeshOverlapError(ValueError):
    """Raised when the thin neighbourhood overlaps itself at the requested ε."""


def _rot90(t: np.ndarray) -> np.ndarray:
    return np.array([-t[1], t[0]])


@dataclass(frozen=True, eq=False)
class EdgeCurve:
    """Arclength-parametrised polyline ψ_e running from the tail to the head vertex.
    Curvature is the signed discrete curvature (turning angle per unit length) with
    respect to the left normal n_e = rot90(ψ_e′)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(
                f"Curve needs an (n >= 2, 2) array of points, got shape {pts.shape}"
            )
        seg = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg <= 0):
            raise ValueError("Curve has repeated consecutive points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_s", np.concatenate([[0.0], np.cumsum(seg)]))

    @classmethod
    def straight(cls, start, end) -> "EdgeCurve":
        return cls(np.array([start, end], dtype=float))

    @classmethod
    def arc(
        cls,
        center,
        radius: float,
        theta0: float,
        theta1: float,
        n_segments: int = 2000,
    ) -> "EdgeCurve":
        """Circular arc from angle `theta0` to `theta1`; counter-clockwise arcs have
        curvature +1/radius."""

        radius = check_positive("radius", radius)
        theta = np.linspace(theta0, theta1, n_segments + 1)
        return cls(
            np.column_stack(
                [center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)]
            )
        )

    @property
    def length(self) -> float:
        return float(self._s[-1])

    @property
    def arclength(self) -> np.ndarray:
        return self._s

    @property
    def is_straight(self) -> bool:
        chord = self.points[-1] - self.points[0]
        d = self.points - self.points[0]
        cross = d[:, 0] * chord[1] - d[:, 1] * chord[0]
        return bool(np.max(np.abs(cross)) <= POSITION_TOL * np.hypot(*chord))

    def position(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.stack(
            [
                np.interp(s, self._s, self.points[:, 0]),
                np.interp(s, self._s, self.points[:, 1]),
            ],
            axis=-1,
        )

    def tangent(self, s) -> np.ndarray:
        """Unit tangent of the segment containing arclength `s`."""

        d = np.diff(self.points, axis=0)
        d = d / np.hypot(*d.T)[:, None]
        idx = np.clip(np.searchsorted(self._s, s, side="right") - 1, 0, len(d) - 1)
        return d[idx]

    def curvature(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.points.shape[0] == 2:
            return np.zeros(s.shape)
        d = np.diff(self.points, axis=0)
        seg = np.hypot(*d.T)
        turn = np.arctan2(
            d[:-1, 0] * d[1:, 1] - d[:-1, 1] * d[1:, 0],
            np.einsum("ij,ij->i", d[:-1], d[1:]),
        )
        kappa = turn / (0.5 * (seg[:-1] + seg[1:]))
        return np.interp(s, self._s[1:-1], kappa)


@dataclass(frozen=True, eq=False)
class EmbeddedGraph:
    """A finite metric graph drawn in the plane: vertex positions, one curve per edge
    and the cross-section radius r_e of each edge (the edge density of the weighted
    graph). Radii default to the edge densities."""

    graph: MetricGraph
    positions: Mapping
    curves: Mapping
    radii: Optional[Mapping] = None

    def __post_init__(self):
        g = self.graph
        positions = {
            int(v): np.asarray(p, dtype=float) for v, p in self.positions.items()
        }
        curves = {int(k): c for k, c in self.curves.items()}
        radii = {e.id: e.density for e in g.edges}
        radii.update({int(k): r for k, r in (self.radii or {}).items()})

        missing = [v for v in g.vertices if v not in positions]
        if missing:
            raise ValueError(f"Vertices {missing} have no position")

        for e in g.edges:
            if e.is_lead:
                raise ValueError(f"Lead {e.id} cannot be embedded")
            if e.id not in curves:
                raise ValueError(f"Edge {e.id} has no curve")
            curve = curves[e.id]
            for end, v in ((curve.points[0], e.tail), (curve.points[-1], e.head)):
                gap = float(np.hypot(*(end - positions[v])))
                if gap > POSITION_TOL:
                    raise ValueError(
                        f"Curve of edge {e.id} misses vertex {v} by {gap:g}"
                    )
            if abs(curve.length - e.length) > LENGTH_TOL:
                raise ValueError(
                    f"Curve of edge {e.id} has length {curve.length:.9g} but the edge "
                    f"is declared with length {e.length:.9g}"
                )

        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "radii", radii)

    def curve(self, edge_id: int) -> EdgeCurve:
        return self.curves[edge_id]

    def radius(self, edge_id: int) -> DensitySpec:
        return self.radii[edge_id]

    def weighted_graph(self) -> MetricGraph:
        """The metric graph whose densities are the cross-section radii."""

        return MetricGraph(
            vertices=self.graph.vertices,
            edges=tuple(
                EdgeRecord(
                    id=e.id,
                    tail=e.tail,
                    head=e.head,
                    length=e.length,
                    density=self.radii[e.id],
                )
                for e in self.graph.edges
            ),
        )


def embed_straight(
    g: MetricGraph, positions: Mapping, radii: Optional[Mapping] = None
) -> EmbeddedGraph:
    """Embed `g` with straight segments between the given vertex positions. The edge
    lengths of `g` must equal the Euclidean distances."""

    curves = {
        e.id: EdgeCurve.straight(positions[e.tail], positions[e.head]) for e in g.edges
    }
    return EmbeddedGraph(graph=g, positions=positions, curves=curves, radii=radii)


def star_embedding(
    n_edges: int = 3,
    length: float = 1.0,
    radius: float = 0.5,
    angles=None,
) -> EmbeddedGraph:
    """Star with centre 0 at the origin and leaves 1..n at the given angles (equally
    spaced by default); every edge runs from the centre outwards."""

    if angles is None:
        angles = 2 * np.pi * np.arange(n_edges) / n_edges
    angles = np.asarray(angles, dtype=float)
    if angles.size != n_edges:
        raise ValueError(f"Expected {n_edges} angles, got {angles.size}")

    density = DensitySpec.constant(radius)
    edges = tuple(
        EdgeRecord(id=i, tail=0, head=i + 1, length=length, density=density)
        for i in range(n_edges)
    )
    g = MetricGraph(vertices=tuple(range(n_edges + 1)), edges=edges)
    positions = {0: (0.0, 0.0)}
    for i, a in enumerate(angles):
        positions[i + 1] = (length * math.cos(a), length * math.sin(a))
    return embed_straight(g, positions)


@dataclass(frozen=True)
class _End:
    """One edge end at a vertex: direction away from the vertex and strip half-width."""

    edge_id: int
    side: str
    t: np.ndarray
    width: float

    @property
    def n(self) -> np.ndarray:
        return _rot90(self.t)

    @property
    def angle(self) -> float:
        return math.atan2(self.t[1], self.t[0])


def _vertex_ends(eg: EmbeddedGraph, v: int, eps: float = 1.0) -> list:
    starting, ending = eg.graph.incident_edges(v)
    ends = []
    for e in starting:
        t = eg.curve(e.id).tangent(0.0)
        r = float(eg.radius(e.id)(0.0))
        ends.append(_End(e.id, "tail", np.asarray(t, dtype=float), eps * r / 2))
    for e in ending:
        t = -eg.curve(e.id).tangent(e.length)
        r = float(eg.radius(e.id)(e.length))
        ends.append(_End(e.id, "head", np.asarray(t, dtype=float), eps * r / 2))
    return sorted(ends, key=lambda end: end.angle)


def _gaps(ends: list) -> np.ndarray:
    """Counter-clockwise angle from each end to the next one."""

    angles = np.asarray([end.angle for end in ends])
    return np.diff(np.append(angles, angles[0] + 2 * np.pi))


@dataclass(frozen=True)
class EmbeddingReport:
    min_angle: float
    max_curvature: float
    r_minus: float
    r_plus: float
    max_dr: float
    l0: float
    bounds: dict
    angle_ok: bool
    angle_radius_ok: bool
    curvature_ok: bool
    radius_ok: bool
    dr_ok: bool
    length_ok: bool

    @property
    def passed(self) -> bool:
        return all(
            (
                self.angle_ok,
                self.angle_radius_ok,
                self.curvature_ok,
                self.radius_ok,
                self.dr_ok,
                self.length_ok,
            )
        )


def check_embedding(
    eg: EmbeddedGraph, bounds: Mapping, n_samples: int = 201
) -> EmbeddingReport:
    """Compare the observed geometry of an embedding with the bounds `{beta0, kappa0,
    l0, r_minus, r_plus, dr0}`: minimal angle between incident edges, maximal
    curvature, radius extrema and slope. Also tests tan(β₀/2) > r₊/ℓ₀, which keeps the
    edge strips apart near every vertex.

    :param eg: Embedded graph
    :type eg: EmbeddedGraph
    :param bounds: Mapping with keys `beta0`, `kappa0`, `l0`, `r_minus`, `r_plus`, `dr0`
    :type bounds: Mapping
    :param n_samples: Samples per edge for curvature and radius, defaults to 201
    :type n_samples: int

    :returns: Observed extrema and per-condition flags
    :rtype: EmbeddingReport
    """

    missing = set(LIST_EMBEDDING_BOUNDS) - set(bounds)
    if missing:
        raise ValueError(f"Embedding bounds missing keys: {sorted(missing)}")

    min_angle = math.pi
    for v in eg.graph.vertices:
        ends = _vertex_ends(eg, v)
        if len(ends) > 1:
            gaps = _gaps(ends)
            smallest = float(np.min(np.minimum(gaps, 2 * np.pi - gaps)))
            min_angle = min(min_angle, smallest)

    max_kappa, max_dr = 0.0, 0.0
    r_lo, r_hi = math.inf, 0.0
    for e in eg.graph.edges:
        s = np.linspace(0.0, e.length, n_samples)
        max_kappa = max(max_kappa, float(np.max(np.abs(eg.curve(e.id).curvature(s)))))
        radius = eg.radius(e.id)
        lo, hi = radius.extrema(0.0, e.length)
        r_lo, r_hi = min(r_lo, lo), max(r_hi, hi)
        max_dr = max(max_dr, float(np.max(np.abs(radius.derivative(s)))))
    l0 = min(e.length for e in eg.graph.edges)

    b = {k: float(bounds[k]) for k in LIST_EMBEDDING_BOUNDS}
    return EmbeddingReport(
        min_angle=min_angle,
        max_curvature=max_kappa,
        r_minus=r_lo,
        r_plus=r_hi,
        max_dr=max_dr,
        l0=l0,
        bounds=b,
        angle_ok=min_angle >= b["beta0"] - ANGLE_TOL,
        angle_radius_ok=math.tan(b["beta0"] / 2) > b["r_plus"] / b["l0"],
        curvature_ok=max_kappa <= b["kappa0"],
        radius_ok=(r_lo >= b["r_minus"]) and (r_hi <= b["r_plus"]),
        dr_ok=max_dr <= b["dr0"],
        length_ok=l0 >= b["l0"],
    )


@dataclass(frozen=True, eq=False)
class ThinMesh:
    """Conforming triangle mesh of X_ε with one region tag per triangle.

    `region_kind` is REGION_EDGE, REGION_COLLAR or REGION_CORE; `region_id` is the edge
    id for edge regions and the vertex id otherwise; `region_edge` is the edge a strip
    triangle (edge or collar) belongs to, -1 for vertex cores. `edge_cross[e]` holds the
    node ids of the cross-lines of edge region e, one row per graph position
    `edge_x[e]`; `vertex_nodes[v]` are the nodes of U_v not on any edge cross-line.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    region_kind: np.ndarray
    region_id: np.ndarray
    region_edge: np.ndarray
    eps: float
    h_rel: int
    l0: float
    h: float
    edge_cross: Mapping
    edge_x: Mapping
    vertex_nodes: Mapping
    embedding: Optional[EmbeddedGraph] = None

    @property
    def offset(self) -> float:
        """Length εℓ₀/2 each edge gives up to its vertex neighbourhoods."""

        return self.eps * self.l0 / 2

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def edge_cells(self) -> dict:
        return {eid: len(x) - 1 for eid, x in self.edge_x.items()}

    def areas(self) -> np.ndarray:
        return np.abs(triangle_areas(self.nodes, self.triangles))

    def edge_mask(self, edge_id: int) -> np.ndarray:
        return (self.region_kind == REGION_EDGE) & (self.region_id == edge_id)

    def vertex_mask(self, v: int) -> np.ndarray:
        return (self.region_kind != REGION_EDGE) & (self.region_id == v)

    def edge_region_area(self, edge_id: int) -> float:
        return float(self.areas()[self.edge_mask(edge_id)].sum())

    def vertex_region_area(self, v: int) -> float:
        return float(self.areas()[self.vertex_mask(v)].sum())


@dataclass(frozen=True, eq=False)
class _Block:
    nodes: np.ndarray
    triangles: np.ndarray
    kind: int
    rid: int
    edge: int
    polygon: Polygon
    grid: Optional[np.ndarray] = None

    @property
    def label(self) -> str:
        return f"{LIST_REGION_KINDS[self.kind]} {self.rid}"


def _grid_triangles(n_rows: int, n_cols: int) -> np.ndarray:
    """Split each cell of a structured (n_rows + 1) x (n_cols + 1) node grid, numbered
    row by row, into the triangles (a, b, c) and (a, c, d)."""

    i, j = np.meshgrid(np.arange(n_rows), np.arange(n_cols), indexing="ij")
    a = (i * (n_cols + 1) + j).ravel()
    b = a + n_cols + 1
    c = b + 1
    d = a + 1
    return np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])


def _strip_block(origin, t, dist, width, h_rel, kind, rid, edge) -> _Block:
    n = _rot90(t)
    y = np.linspace(-width, width, h_rel + 1)
    nodes = (
        origin[None, None, :]
        + dist[:, None, None] * t[None, None, :]
        + y[None, :, None] * n[None, None, :]
    ).reshape(-1, 2)
    grid = np.arange(nodes.shape[0]).reshape(dist.size, h_rel + 1)
    corners = nodes[[grid[0, 0], grid[-1, 0], grid[-1, -1], grid[0, -1]]]
    return _Block(
        nodes=nodes,
        triangles=_grid_triangles(dist.size - 1, h_rel),
        kind=kind,
        rid=rid,
        edge=edge,
        polygon=Polygon(corners),
        grid=grid,
    )


def _edge_block(eg: EmbeddedGraph, e: EdgeRecord, eps, h_rel, offset) -> tuple:
    r = eg.radius(e.id).value
    inner = e.length - 2 * offset
    n_cells = max(1, math.ceil(inner / (2 * eps * r / h_rel) - 1e-9))
    x = np.linspace(0.0, e.length, n_cells + 1)
    dist = offset + x * (inner / e.length)
    block = _strip_block(
        eg.positions[e.tail],
        eg.curve(e.id).tangent(0.0),
        dist,
        eps * r / 2,
        h_rel,
        REGION_EDGE,
        e.id,
        e.id,
    )
    return block, x


def _strip_intersection(a: _End, b: _End) -> tuple:
    # left boundary of a: w_a n_a + s t_a; right boundary of b: -w_b n_b + u t_b
    A = np.column_stack([a.t, -b.t])
    s, u = np.linalg.solve(A, -b.width * b.n - a.width * a.n)
    return float(s), float(u)


def _fan_block(v, pos, boundary, flags, h_rel, h_target) -> _Block:
    pieces = []
    m = len(boundary)
    for k in range(m):
        a, b = boundary[k], boundary[(k + 1) % m]
        side = np.hypot(*(b - a))
        n = h_rel if flags[k] else max(1, math.ceil(side / h_target - 1e-9))
        pieces.append(a[None, :] + np.outer(np.arange(n) / n, b - a))
    ring = np.concatenate(pieces)
    rel = ring - pos
    nxt = np.roll(rel, -1, axis=0)
    if np.any(rel[:, 0] * nxt[:, 1] - rel[:, 1] * nxt[:, 0] <= 0):
        raise MeshOverlapError(
            f"Core region of vertex {v} is not star-shaped around the vertex"
        )

    n_ring = ring.shape[0]
    n_layers = max(1, math.ceil(np.max(np.hypot(*rel.T)) / h_target - 1e-9))
    layers = [pos + (l / n_layers) * rel for l in range(1, n_layers + 1)]
    nodes = np.concatenate([pos[None, :]] + layers)

    k = np.arange(n_ring)
    k1 = (k + 1) % n_ring
    tris = [np.column_stack([np.zeros(n_ring, dtype=int), 1 + k, 1 + k1])]
    for l in range(2, n_layers + 1):
        inner, outer = 1 + (l - 2) * n_ring, 1 + (l - 1) * n_ring
        a, b, c, d = inner + k, outer + k, outer + k1, inner + k1
        tris += [np.column_stack([a, b, c]), np.column_stack([a, c, d])]

    return _Block(
        nodes=nodes,
        triangles=np.concatenate(tris),
        kind=REGION_CORE,
        rid=v,
        edge=-1,
        polygon=Polygon(boundary),
    )


def _vertex_blocks(eg: EmbeddedGraph, v: int, eps, h_rel, offset) -> list:
    pos = eg.positions[v]
    ends = _vertex_ends(eg, v, eps)
    k = len(ends)
    gaps = _gaps(ends)
    if k > 1 and np.min(gaps) <= ANGLE_TOL:
        raise MeshOverlapError(f"Edges leave vertex {v} in the same direction")

    acute = [k > 1 and gaps[i] < np.pi - ANGLE_TOL for i in range(k)]
    c0 = 0.0
    for i in range(k):
        if acute[i]:
            c0 = max(c0, *_strip_intersection(ends[i], ends[(i + 1) % k]))

    if offset - c0 <= 0:
        raise MeshOverlapError(
            f"At eps={eps:g} the strips meeting at vertex {v} overlap up to distance "
            f"{c0:g}, beyond the vertex neighbourhood of depth {offset:g}. Reduce eps "
            "or increase l0."
        )

    blocks = []
    for end in ends:
        n_cells = max(1, math.ceil((offset - c0) / (4 * end.width / h_rel) - 1e-9))
        blocks.append(
            _strip_block(
                pos,
                end.t,
                np.linspace(c0, offset, n_cells + 1),
                end.width,
                h_rel,
                REGION_COLLAR,
                v,
                end.edge_id,
            )
        )

    # core polygon, counter-clockwise; flags mark the segments shared with a collar
    points, flags = [], []
    for i, a in enumerate(ends):
        b = ends[(i + 1) % k]
        base = pos + c0 * a.t
        points += [base - a.width * a.n, base + a.width * a.n]
        flags += [True, False]
        if acute[i]:
            s, _ = _strip_intersection(a, b)
            points.append(pos + a.width * a.n + s * a.t)
            flags.append(False)
        else:
            if abs(gaps[i] - np.pi) <= ANGLE_TOL and abs(a.width - b.width) > 1e-12:
                raise ValueError(
                    f"Collinear edges {a.edge_id} and {b.edge_id} at vertex {v} have "
                    "different radii"
                )
            points += [pos + a.width * a.n, pos - b.width * b.n]
            flags += [False, False]

    tol = 1e-9 * eps
    ring, ring_flags = [], []
    for p, f in zip(points, flags):
        if ring and np.hypot(*(p - ring[-1])) <= tol:
            ring_flags[-1] = f
            continue
        ring.append(p)
        ring_flags.append(f)
    while len(ring) > 1 and np.hypot(*(ring[-1] - ring[0])) <= tol:
        ring.pop()
        ring_flags.pop()

    if len(ring) >= 3 and Polygon(ring).area > 1e-12 * eps**2:
        h_target = 2 * min(end.width for end in ends) / h_rel
        blocks.append(_fan_block(v, pos, ring, ring_flags, h_rel, h_target))
    return blocks


def _check_overlap(blocks: list, eps: float) -> None:
    polygons = [b.polygon for b in blocks]
    tree = STRtree(polygons)
    pairs = tree.query(polygons, predicate="intersects")
    for i, j in zip(*pairs):
        if i >= j:
            continue
        overlap = polygons[i].intersection(polygons[j]).area
        if overlap > 1e-9 * min(polygons[i].area, polygons[j].area):
            raise MeshOverlapError(
                f"At eps={eps:g} region {blocks[i].label} overlaps region "
                f"{blocks[j].label} (area {overlap:.3g})"
            )


def build_thin_mesh(
    eg: EmbeddedGraph, eps: float, h_rel: int = 4, l0: Optional[float] = None
) -> ThinMesh:
    """Mesh the ε-neighbourhood of a straight-edged embedding. Each edge region is the
    strip of width ε r_e between distances εℓ₀/2 from its end vertices, meshed by a
    structured grid with `h_rel` cells across and cells of twice that size lengthwise.
    Each vertex region consists of one collar rectangle per incident edge and, when the
    strips meet at an angle, a polygonal core bounded by the collar ends and the strip
    boundaries, triangulated in layers around the vertex. Coincident nodes are merged so
    the mesh is conforming.

    :param eg: Embedding with straight edges of constant radius and no loops
    :type eg: EmbeddedGraph
    :param eps: Thickness scale ε
    :type eps: float
    :param h_rel: Cells across each strip, defaults to 4
    :type h_rel: int
    :param l0: Vertex-neighbourhood length at unit scale, defaults to the shortest edge
    :type l0: float, optional

    :returns: The tagged mesh
    :rtype: ThinMesh
    """

    eps = check_positive("eps", eps)
    h_rel = int(h_rel)
    if h_rel < 1:
        raise ValueError(f"`h_rel` must be at least 1, got {h_rel}")

    g = eg.graph
    for e in g.edges:
        if e.is_loop:
            raise ValueError(f"Loop {e.id} cannot be drawn as a straight edge")
        if not eg.curve(e.id).is_straight:
            raise ValueError(
                f"Edge {e.id} is curved; only straight edges are meshed. Use "
                "`metric_sample` for curved edges."
            )
        if eg.radius(e.id).kind != "const":
            raise ValueError(f"Edge {e.id} must have a constant radius to be meshed")

    l0 = min(e.length for e in g.edges) if l0 is None else check_positive("l0", l0)
    offset = eps * l0 / 2
    for e in g.edges:
        if 2 * offset >= e.length:
            raise MeshOverlapError(
                f"eps*l0 = {2 * offset:g} leaves no edge region on edge {e.id} of "
                f"length {e.length:g}"
            )

    blocks, edge_blocks, edge_x = [], {}, {}
    for e in g.edges:
        block, x = _edge_block(eg, e, eps, h_rel, offset)
        edge_blocks[e.id] = len(blocks)
        edge_x[e.id] = x
        blocks.append(block)
    for v in g.vertices:
        blocks.extend(_vertex_blocks(eg, v, eps, h_rel, offset))
    _check_overlap(blocks, eps)

    # merge coincident nodes along region interfaces
    sizes = [b.nodes.shape[0] for b in blocks]
    starts = np.concatenate([[0], np.cumsum(sizes)])
    all_nodes = np.concatenate([b.nodes for b in blocks])
    h = eps * min(eg.radius(e.id).value for e in g.edges) / h_rel
    pairs = cKDTree(all_nodes).query_pairs(1e-6 * h, output_type="ndarray")
    adj = sp.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
        shape=(all_nodes.shape[0],) * 2,
    )
    n_comp, labels = connected_components(adj, directed=False)
    first = np.full(n_comp, all_nodes.shape[0])
    np.minimum.at(first, labels, np.arange(all_nodes.shape[0]))
    order = np.argsort(first)
    rank = np.empty(n_comp, dtype=np.int64)
    rank[order] = np.arange(n_comp)
    new_index = rank[labels]

    triangles, kind, rid, redge = [], [], [], []
    for b, start in zip(blocks, starts[:-1]):
        triangles.append(new_index[start + b.triangles])
        n_tri = b.triangles.shape[0]
        kind.append(np.full(n_tri, b.kind))
        rid.append(np.full(n_tri, b.rid))
        redge.append(np.full(n_tri, b.edge))

    edge_cross = {
        eid: new_index[starts[i] + blocks[i].grid] for eid, i in edge_blocks.items()
    }
    on_edges = np.unique(np.concatenate([c.ravel() for c in edge_cross.values()]))
    vertex_nodes = {}
    for v in g.vertices:
        ids = [
            new_index[start : start + b.nodes.shape[0]]
            for b, start in zip(blocks, starts[:-1])
            if b.kind != REGION_EDGE and b.rid == v
        ]
        vertex_nodes[v] = np.setdiff1d(np.concatenate(ids), on_edges)

    mesh = ThinMesh(
        nodes=all_nodes[first[order]],
        triangles=np.concatenate(triangles),
        region_kind=np.concatenate(kind),
        region_id=np.concatenate(rid),
        region_edge=np.concatenate(redge),
        eps=eps,
        h_rel=h_rel,
        l0=l0,
        h=h,
        edge_cross=edge_cross,
        edge_x=edge_x,
        vertex_nodes=vertex_nodes,
        embedding=eg,
    )
    logger.info(
        "Thin mesh at eps=%g: %d nodes, %d triangles",
        eps,
        mesh.n_nodes,
        mesh.n_triangles,
    )
    return mesh


def rectangle_mesh(
    length: float,
    width: float,
    nx: int,
    ny: int,
    region_kind: int = REGION_CORE,
    region_id: int = 0,
) -> ThinMesh:
    """Structured mesh of [0, length] x [0, width] forming a single region. Tagged as a
    vertex core it can be passed to `vertex_region_checks`; tagged as an edge region its
    cross-lines are the columns x = const."""

    length = check_positive("length", length)
    width = check_positive("width", width)
    x = np.linspace(0.0, length, nx + 1)
    y = np.linspace(0.0, width, ny + 1)
    nodes = np.stack(np.meshgrid(x, y, indexing="ij"), axis=-1).reshape(-1, 2)
    triangles = _grid_triangles(nx, ny)
    grid = np.arange(nodes.shape[0]).reshape(nx + 1, ny + 1)
    is_edge = region_kind == REGION_EDGE

    return ThinMesh(
        nodes=nodes,
        triangles=triangles,
        region_kind=np.full(triangles.shape[0], region_kind),
        region_id=np.full(triangles.shape[0], region_id),
        region_edge=np.full(triangles.shape[0], region_id if is_edge else -1),
        eps=1.0,
        h_rel=ny,
        l0=0.0,
        h=min(length / nx, width / ny),
        edge_cross={region_id: grid} if is_edge else {},
        edge_x={region_id: x} if is_edge else {},
        vertex_nodes={} if is_edge else {region_id: grid.ravel()},
    )


def strip_mesh(length: float, width: float, h_rel: int = 8) -> ThinMesh:
    """A single edge region [0, length] x [0, width] with `h_rel` cells across."""

    nx = max(1, math.ceil(length / (2 * width / h_rel) - 1e-9))
    return rectangle_mesh(length, width, nx, h_rel, region_kind=REGION_EDGE)


def assemble_neumann(mesh: ThinMesh) -> FemSystem:
    """P1 stiffness and consistent mass of the flat Laplacian on the mesh. No boundary
    condition is imposed, so the Neumann condition holds naturally.

    :param mesh: Thin-domain mesh
    :type mesh: ThinMesh

    :returns: The assembled system, with the mesh as `dof_map`
    :rtype: FemSystem
    """

    K, M = triangle_matrices(mesh.nodes, mesh.triangles)
    logger.info("Assembled Neumann system: %d dofs", mesh.n_nodes)
    return FemSystem(K, M, mesh.h, dof_map=mesh)


def vertex_region_checks(
    mesh: ThinMesh, v: int, dense_limit: int = DENSE_LIMIT
) -> dict:
    """Volume and first non-zero Neumann eigenvalue of the vertex region U_v rescaled
    to unit thickness (coordinates divided by ε).

    :returns: Dict with `volume`, `lambda2`, `n_triangles` and, for embedded meshes,
        `volume_bound` = Σ_e r_e(v) ℓ₀ / 2
    :rtype: dict
    """

    mask = mesh.vertex_mask(v)
    n_tri = int(mask.sum())
    if n_tri < MIN_REGION_TRIANGLES:
        raise ValueError(
            f"Vertex region {v} has {n_tri} triangle(s), fewer than "
            f"{MIN_REGION_TRIANGLES}. Rebuild the mesh with a larger `h_rel`."
        )

    tri = mesh.triangles[mask]
    used, local = np.unique(tri, return_inverse=True)
    nodes = mesh.nodes[used] / mesh.eps
    check_dense_size(used.size, dense_limit)
    K, M = triangle_matrices(nodes, local.reshape(tri.shape))
    lam = la.eigh(K.toarray(), M.toarray(), eigvals_only=True, subset_by_index=[0, 1])

    result = {
        "volume": float(np.abs(triangle_areas(nodes, local.reshape(tri.shape))).sum()),
        "lambda2": float(lam[1]),
        "n_triangles": n_tri,
    }
    if mesh.embedding is not None:
        # half-widths at ε = 1 are r_e(v) / 2
        widths = [end.width for end in _vertex_ends(mesh.embedding, v)]
        result["volume_bound"] = float(sum(widths) * mesh.l0)
    return result


def export_mesh(mesh: ThinMesh, fpath: str) -> str:
    """Write the mesh as text: a header `n_nodes n_triangles`, one `x y` line per node,
    then one `i j k tag` line per triangle with tag `e<id>` for edge regions and
    `v<id>` for vertex regions."""

    outdir = os.path.dirname(fpath)
    if outdir and not os.path.exists(outdir):
        os.makedirs(outdir)

    with open(fpath, "w") as f:
        f.write(f"{mesh.n_nodes} {mesh.n_triangles}\n")
        np.savetxt(f, mesh.nodes, fmt="%.12g")
        tagged = zip(mesh.triangles, mesh.region_kind, mesh.region_id)
        for (i, j, k), kind, rid in tagged:
            tag = f"e{rid}" if kind == REGION_EDGE else f"v{rid}"
            f.write(f"{i} {j} {k} {tag}\n")
    return fpath


@dataclass(frozen=True, eq=False)
class MetricSample:
    """Pulled-back metric G_ε of an edge strip on a grid of (x, y) in
    [0, ℓ] x [-1/2, 1/2], with its worst-case deviation constants."""

    x: np.ndarray
    y: np.ndarray
    G: np.ndarray
    sqrt_det: np.ndarray
    g_xx_inv: np.ndarray
    o1: float
    o2: float
    O3: float
    o4: float
    volume_deviation: float
    product_deviation: float

    def to_dict(self) -> dict:
        return {
            "o1": self.o1,
            "o2": self.o2,
            "O3": self.O3,
            "o4": self.o4,
            "volume_deviation": self.volume_deviation,
            "product_deviation": self.product_deviation,
        }


def metric_sample(
    eg: EmbeddedGraph,
    edge_id: int,
    eps: float,
    n_x: int = 41,
    n_y: int = 11,
    l0: Optional[float] = None,
) -> MetricSample:
    """Evaluate the metric of the shortened edge strip
    Ψ(x, y) = ψ(s) + ε r(s) y n(s), s = εℓ₀/2 + x(1 - εℓ₀/ℓ), on an n_x x n_y grid:

    G_xx = [(1 + εκry)² + ε²y²ṙ²](1 - εℓ₀/ℓ)², G_xy = ε²rṙy(1 - εℓ₀/ℓ), G_yy = ε²r².

    Reported constants, each a maximum over the grid:

    - o1 = |√det G / (εr(1 - εℓ₀/ℓ)) - 1|, the density deviation;
    - o2 = |g^xx - 1| with g^xx = (G⁻¹)_xx;
    - O3 and o4, the smallest constants with |∂_x u|² <= O3 |du|²_G and
      |∂_y u|² <= o4 |du|²_G. For a covector ξ, sup ξ_x² / ξᵀG⁻¹ξ is the largest
      eigenvalue of e_x e_xᵀ relative to G⁻¹, which is G_xx, and likewise G_yy;
    - `product_deviation` = |μ - 1| over the eigenvalues μ of G⁻¹ relative to the
      product metric diag(1, ε²r²)⁻¹;
    - `volume_deviation` = |√det G / (εr) - 1|, which also counts the shortening.

    :param eg: Embedded graph
    :type eg: EmbeddedGraph
    :param edge_id: Edge to sample
    :type edge_id: int
    :param eps: Thickness scale ε
    :type eps: float
    :param n_x: Grid points along the edge, defaults to 41
    :type n_x: int
    :param n_y: Grid points across, defaults to 11
    :type n_y: int
    :param l0: Vertex-neighbourhood length, defaults to the shortest edge
    :type l0: float, optional

    :returns: Sampled metric and constants
    :rtype: MetricSample
    """

    eps = check_positive("eps", eps)
    e = eg.graph.edge(edge_id)
    curve, radius = eg.curve(edge_id), eg.radius(edge_id)
    l0 = min(f.length for f in eg.graph.edges) if l0 is None else l0
    a = eps * l0 / e.length
    if a >= 1:
        raise ValueError(f"eps*l0 = {eps * l0:g} exceeds the length of edge {edge_id}")

    x = np.linspace(0.0, e.length, n_x)
    y = np.linspace(-0.5, 0.5, n_y)
    s = eps * l0 / 2 + x * (1 - a)
    kappa = curve.curvature(s)[:, None]
    r = radius(s)[:, None]
    dr = radius.derivative(s)[:, None]
    Y = y[None, :]

    stretch = 1 + eps * kappa * r * Y
    if np.any(stretch <= 0):
        bad = np.unravel_index(np.argmin(stretch), stretch.shape)
        raise ValueError(
            f"Metric of edge {edge_id} degenerates at eps={eps:g}: 1 + eps*kappa*r*y = "
            f"{stretch[bad]:.3g} at x={x[bad[0]]:g}, y={y[bad[1]]:g}"
        )

    Gxx = (stretch**2 + eps**2 * Y**2 * dr**2) * (1 - a) ** 2
    Gxy = eps**2 * r * dr * Y * (1 - a) * np.ones_like(Gxx)
    Gyy = eps**2 * r**2 * np.ones_like(Gxx)
    G = np.stack([np.stack([Gxx, Gxy], -1), np.stack([Gxy, Gyy], -1)], -2)

    sqrt_det = eps * r * (1 - a) * np.abs(stretch)
    G_inv = np.linalg.inv(G)
    g_xx_inv = G_inv[..., 0, 0]

    # sup over covectors of xi_x^2 / xi^T G^-1 xi, the inverse Schur complement
    det_inv = G_inv[..., 0, 0] * G_inv[..., 1, 1] - G_inv[..., 0, 1] ** 2
    sharp_x = G_inv[..., 1, 1] / det_inv
    sharp_y = G_inv[..., 0, 0] / det_inv

    scale = np.stack([np.ones_like(r), eps * r], -1) * np.ones_like(Gxx)[..., None]
    relative = scale[..., :, None] * G_inv * scale[..., None, :]
    mu = np.linalg.eigvalsh(relative)

    return MetricSample(
        x=x,
        y=y,
        G=G,
        sqrt_det=sqrt_det,
        g_xx_inv=g_xx_inv,
        o1=float(np.max(np.abs(sqrt_det / (eps * r * (1 - a)) - 1))),
        o2=float(np.max(np.abs(g_xx_inv - 1))),
        O3=float(np.max(sharp_x)),
        o4=float(np.max(sharp_y)),
        volume_deviation=float(np.max(np.abs(sqrt_det / (eps * r) - 1))),
        product_deviation=float(np.max(np.abs(mu - 1))),
    )
