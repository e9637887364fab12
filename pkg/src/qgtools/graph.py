"""
Data model for weighted metric graphs and their combinatorial skeletons, generators for
the standard example families, and the uniformity checks on degree, length and density.
"""

import math
import logging

from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Sequence
from warnings import warn

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

LIST_GRAPH_KINDS = [
    "interval",
    "cycle",
    "star",
    "complete_k4",
    "tree_truncation",
    "sierpinski",
]
LIST_DENSITY_TYPES = ["const", "sampled"]


@dataclass(frozen=True)
class DensitySpec:
    """Edge density p_e, either constant or piecewise linear on a grid of arclength
    positions. The cross-section radius of an embedded edge is the same function
    (r_e = p_e for a one-dimensional cross-section)."""

    kind: Literal["const", "sampled"] = "const"
    value: float = 1.0
    grid: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in LIST_DENSITY_TYPES:
            raise ValueError(
                f"Density type `{self.kind}` not recognised. Must be one of "
                f"{LIST_DENSITY_TYPES}"
            )
        if self.kind == "const":
            if not self.value > 0:
                raise ValueError(f"Constant density must be positive, got {self.value}")
        else:
            grid = np.asarray(self.grid, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if grid.ndim != 1 or grid.size < 2 or grid.size != values.size:
                raise ValueError(
                    "Sampled density needs matching `grid` and `values` of length >= 2"
                )
            if np.any(np.diff(grid) <= 0):
                raise ValueError("Sampled density grid must be strictly increasing")
            if np.any(values <= 0):
                raise ValueError("Sampled density values must be strictly positive")

    @classmethod
    def constant(cls, c: float = 1.0) -> "DensitySpec":
        return cls(kind="const", value=float(c))

    @classmethod
    def sampled(cls, grid: Sequence[float], values: Sequence[float]) -> "DensitySpec":
        return cls(
            kind="sampled",
            grid=tuple(float(x) for x in grid),
            values=tuple(float(p) for p in values),
        )

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.full(x.shape, self.value)
        return np.interp(x, self.grid, self.values)

    def derivative(self, x) -> np.ndarray:
        """Piecewise-constant derivative of the interpolant (zero outside the grid)."""

        x = np.asarray(x, dtype=float)
        if self.kind == "const":
            return np.zeros(x.shape)
        grid = np.asarray(self.grid)
        slopes = np.diff(self.values) / np.diff(grid)
        idx = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, slopes.size - 1)
        inside = (x >= grid[0]) & (x <= grid[-1])
        return np.where(inside, slopes[idx], 0.0)

    def extrema(self, lo: float, hi: float) -> tuple:
        """Exact (min, max) of the interpolant on [lo, hi]."""

        if self.kind == "const":
            return self.value, self.value
        pts = [lo, hi] if math.isfinite(hi) else [lo, self.grid[-1]]
        pts += [x for x in self.grid if lo < x < hi]
        vals = self(np.asarray(pts))
        if not math.isfinite(hi):
            vals = np.append(vals, self.values[-1])
        return float(vals.min()), float(vals.max())

    def p_minus(self, length: float) -> float:
        """Minimum over the near-vertex zone dist(x, ∂e) <= min(1, length/2)."""

        a = min(1.0, length / 2)
        lo = self.extrema(0.0, a)[0]
        if math.isfinite(length):
            lo = min(lo, self.extrema(length - a, length)[0])
        return lo

    def p_plus(self, length: float) -> float:
        return self.extrema(0.0, length)[1]


@dataclass(frozen=True)
class EdgeRecord:
    """An oriented edge from `tail` (∂₋e) to `head` (∂₊e). A lead has infinite length
    and no head vertex."""

    id: int
    tail: int
    head: Optional[int]
    length: float
    density: DensitySpec = field(default_factory=DensitySpec)

    @property
    def is_lead(self) -> bool:
        return self.head is None

    @property
    def is_loop(self) -> bool:
        return self.head == self.tail

    @property
    def ends(self) -> tuple:
        return (self.tail,) if self.is_lead else (self.tail, self.head)


@dataclass(frozen=True)
class MetricGraph:
    """Connected, locally finite metric graph with edge lengths and densities. Loops and
    multi-edges are permitted."""

    vertices: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        object.__setattr__(self, "edges", tuple(self.edges))

        vset = set(self.vertices)
        if len(vset) != len(self.vertices):
            raise ValueError("Vertex ids must be unique")
        if len({e.id for e in self.edges}) != len(self.edges):
            raise ValueError("Edge ids must be unique")

        for e in self.edges:
            for v in e.ends:
                if v not in vset:
                    raise ValueError(f"Edge {e.id} refers to unknown vertex {v}")
            if e.is_lead:
                if not math.isinf(e.length):
                    raise ValueError(f"Lead {e.id} must have infinite length")
            elif not (e.length > 0 and math.isfinite(e.length)):
                raise ValueError(
                    f"Edge {e.id} has length {e.length}; only leads may be infinite "
                    "and every length must be positive"
                )

        if len(self.vertices) > 1 and not nx.is_connected(self.to_networkx()):
            raise ValueError("Metric graph must be connected")

    def edge(self, edge_id: int) -> EdgeRecord:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise KeyError(f"Unknown edge id {edge_id}")

    def incident_edges(self, v: int) -> tuple:
        """Return (E_v⁻, E_v⁺): edges starting at v and edges ending at v. A loop at v
        appears in both."""

        if v not in self.vertices:
            raise KeyError(f"Unknown vertex id {v}")
        starting = tuple(e for e in self.edges if e.tail == v)
        ending = tuple(e for e in self.edges if e.head == v)
        return starting, ending

    @property
    def is_finite(self) -> bool:
        return all(not e.is_lead for e in self.edges)

    def to_networkx(self) -> nx.MultiGraph:
        G = nx.MultiGraph()
        G.add_nodes_from(self.vertices)
        for e in self.edges:
            if not e.is_lead:
                G.add_edge(e.tail, e.head, key=e.id, length=e.length)
        return G


@dataclass(frozen=True)
class DiscreteGraph:
    """Combinatorial graph: vertices and an undirected edge multiset."""

    vertices: tuple
    edges: tuple

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(int(v) for v in self.vertices))
        object.__setattr__(
            self, "edges", tuple((int(a), int(b)) for a, b in self.edges)
        )
        isolated = [v for v, d in self.degrees.items() if d == 0]
        if isolated:
            raise ValueError(f"Discrete graph has isolated vertices: {isolated}")

    @property
    def degrees(self) -> dict:
        deg = {v: 0 for v in self.vertices}
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    @property
    def has_loops(self) -> bool:
        return any(a == b for a, b in self.edges)

    def to_networkx(self) -> nx.MultiGraph:
        G = nx.MultiGraph()
        G.add_nodes_from(self.vertices)
        G.add_edges_from(self.edges)
        return G

    def is_connected(self) -> bool:
        return nx.is_connected(self.to_networkx())


@dataclass(frozen=True)
class UniformityReport:
    d0: int
    l0: float
    p_minus: float
    p_plus: float
    bounds: dict
    degree_ok: bool
    length_ok: bool
    density_ok: bool

    @property
    def passed(self) -> bool:
        return self.degree_ok and self.length_ok and self.density_ok


def degree(g: MetricGraph, v: int) -> int:
    """deg v = |E_v⁺| + |E_v⁻|; a loop counts twice.

    :param g: Metric graph
    :type g: MetricGraph
    :param v: Vertex id
    :type v: int

    :returns: Degree of `v`
    :rtype: int
    """

    starting, ending = g.incident_edges(v)
    return len(starting) + len(ending)


def check_uniform_graph(g: MetricGraph, bounds: Mapping) -> UniformityReport:
    """Compare the observed degree, length and density extrema of `g` with the bounds
    `{d0, l0, p_minus, p_plus}`. The lower density bound is only tested on the
    near-vertex zone of each edge.

    :param g: Metric graph
    :type g: MetricGraph
    :param bounds: Mapping with keys `d0`, `l0`, `p_minus`, `p_plus`
    :type bounds: Mapping

    :returns: Observed values and pass flags
    :rtype: UniformityReport
    """

    missing = {"d0", "l0", "p_minus", "p_plus"} - set(bounds)
    if missing:
        raise ValueError(f"Uniformity bounds missing keys: {sorted(missing)}")

    d0 = max(degree(g, v) for v in g.vertices)
    l0 = min(e.length for e in g.edges)
    p_minus = min(e.density.p_minus(e.length) for e in g.edges)
    p_plus = max(e.density.p_plus(e.length) for e in g.edges)

    return UniformityReport(
        d0=d0,
        l0=l0,
        p_minus=p_minus,
        p_plus=p_plus,
        bounds=dict(bounds),
        degree_ok=d0 <= bounds["d0"],
        length_ok=l0 >= bounds["l0"],
        density_ok=(p_minus >= bounds["p_minus"]) and (p_plus <= bounds["p_plus"]),
    )


def sum_over_edge_ends(g: MetricGraph, a: Mapping) -> float:
    """Σ_e (a(∂₊e) + a(∂₋e)) for a vertex family `a`; a lead contributes its tail
    only."""

    return float(sum(a[v] for e in g.edges for v in (e.tail, e.head) if v is not None))


def sum_over_vertices(g: MetricGraph, a: Mapping = None, b: Mapping = None) -> float:
    """Σ_v deg(v) a(v) for a vertex family `a`, or Σ_v Σ_{e ∈ E_v} b_e for an edge
    family `b`. A loop at v enters E_v twice.

    :param g: Metric graph
    :type g: MetricGraph
    :param a: Vertex family, defaults to None
    :type a: Mapping, optional
    :param b: Edge family keyed by edge id, defaults to None
    :type b: Mapping, optional

    :returns: The sum
    :rtype: float
    """

    if (a is None) == (b is None):
        raise ValueError("Pass exactly one of `a` (vertex family) or `b` (edge family)")
    total = 0.0
    for v in g.vertices:
        starting, ending = g.incident_edges(v)
        if a is not None:
            total += (len(starting) + len(ending)) * a[v]
        else:
            total += sum(b[e.id] for e in starting + ending)
    return float(total)


def _from_pairs(pairs, n_vertices: int, length: float) -> MetricGraph:
    edges = tuple(
        EdgeRecord(id=i, tail=a, head=b, length=length)
        for i, (a, b) in enumerate(pairs)
    )
    return MetricGraph(vertices=tuple(range(n_vertices)), edges=edges)


def _tree_pairs(d0: int, depth: int) -> tuple:
    """Edges (parent, child) of the truncated tree in breadth-first numbering. The
    root gets one extra branch so that it has `d0` children like every other interior
    vertex has `d0 - 1`."""

    T = nx.balanced_tree(d0 - 1, depth)
    n_first = T.number_of_nodes()
    T = nx.disjoint_union(T, nx.balanced_tree(d0 - 1, depth - 1))
    T.add_edge(0, n_first)

    edges = list(nx.bfs_edges(T, 0))
    label = {0: 0}
    label.update({child: k for k, (_, child) in enumerate(edges, start=1)})
    return [(label[a], label[b]) for a, b in edges], T.number_of_nodes()


def _sierpinski_pairs(generation: int) -> tuple:
    """Edge list, vertex count and corner vertices of the generation-`n` graph."""

    pairs = list(nx.cycle_graph(3).edges())
    n_vertices = 3
    corners = (0, 1, 2)

    for _ in range(generation - 1):
        # copies j = 0, 1, 2 with offsets; corner i of copy j is glued to
        # corner j of copy i
        glued = nx.utils.UnionFind(range(3 * n_vertices))
        for i in range(3):
            for j in range(i + 1, 3):
                glued.union(j * n_vertices + corners[i], i * n_vertices + corners[j])

        label = np.empty(3 * n_vertices, dtype=int)
        groups = sorted(glued.to_sets(), key=min)
        for k, group in enumerate(groups):
            label[list(group)] = k

        pairs = [
            (int(label[j * n_vertices + a]), int(label[j * n_vertices + b]))
            for j in range(3)
            for a, b in pairs
        ]
        corners = tuple(int(label[i * n_vertices + corners[i]]) for i in range(3))
        n_vertices = len(groups)

    return pairs, n_vertices, corners


def generate_graph(
    kind: Literal[
        "interval", "cycle", "star", "complete_k4", "tree_truncation", "sierpinski"
    ],
    length: float = 1.0,
    n_edges: int = 3,
    d0: int = 3,
    depth: int = 2,
    generation: int = 1,
) -> MetricGraph:
    """Generate one of the standard example graphs with unit density and all edges of
    the same length (`cycle` splits `length` over three edges).

    :param kind: One of LIST_GRAPH_KINDS
    :type kind: str
    :param length: Edge length (total circumference for `cycle`), defaults to 1.0
    :type length: float
    :param n_edges: Number of edges of a `star`, defaults to 3
    :type n_edges: int
    :param d0: Degree of a `tree_truncation`: the root has `d0` children and every
        interior vertex `d0 - 1`, defaults to 3
    :type d0: int
    :param depth: Number of levels below the root of a `tree_truncation`, defaults to 2
    :type depth: int
    :param generation: Generation of a `sierpinski` graph (1 is the triangle),
        defaults to 1
    :type generation: int

    :returns: The generated metric graph
    :rtype: MetricGraph
    """

    kind = kind.lower()
    if kind not in LIST_GRAPH_KINDS:
        raise ValueError(
            f"Graph kind `{kind}` not recognised. Must be one of {LIST_GRAPH_KINDS}"
        )
    if not (length > 0 and math.isfinite(length)):
        raise ValueError(f"`length` must be finite and positive, got {length}")

    if kind == "interval":
        return _from_pairs(nx.path_graph(2).edges(), 2, length)

    if kind == "cycle":
        return _from_pairs(nx.cycle_graph(3).edges(), 3, length / 3)

    if kind == "star":
        if n_edges < 1:
            raise ValueError(f"`n_edges` must be at least 1, got {n_edges}")
        return _from_pairs(nx.star_graph(n_edges).edges(), n_edges + 1, length)

    if kind == "complete_k4":
        return _from_pairs(nx.complete_graph(4).edges(), 4, length)

    if kind == "tree_truncation":
        if d0 < 2:
            raise ValueError(f"`d0` must be at least 2, got {d0}")
        if depth < 1:
            raise ValueError(f"`depth` must be at least 1, got {depth}")
        pairs, n_vertices = _tree_pairs(d0, depth)
        return _from_pairs(pairs, n_vertices, length)

    # sierpinski
    if generation < 1:
        raise ValueError(f"`generation` must be at least 1, got {generation}")
    pairs, n_vertices, _ = _sierpinski_pairs(generation)
    logger.debug(
        "Sierpinski generation %d: %d vertices, %d edges",
        generation,
        n_vertices,
        len(pairs),
    )
    return _from_pairs(pairs, n_vertices, length)


def to_discrete(g: MetricGraph) -> DiscreteGraph:
    """Strip lengths and densities, keeping the vertex/edge combinatorics. Leads have no
    combinatorial counterpart and are dropped with a warning."""

    leads = [e.id for e in g.edges if e.is_lead]
    if leads:
        warn(f"Leads {leads} have no combinatorial counterpart and are dropped")
    return DiscreteGraph(
        vertices=g.vertices,
        edges=tuple((e.tail, e.head) for e in g.edges if not e.is_lead),
    )
