import math

import numpy as np
import pytest

from qgtools.graph import (
    DensitySpec,
    DiscreteGraph,
    EdgeRecord,
    MetricGraph,
    check_uniform_graph,
    degree,
    generate_graph,
    sum_over_edge_ends,
    sum_over_vertices,
    to_discrete,
)

UNIT_BOUNDS = {"d0": 3, "l0": 1.0, "p_minus": 1.0, "p_plus": 1.0}


def _random_graph(rng, n_vertices=6, n_extra=8):
    pairs = [(v, v + 1) for v in range(n_vertices - 1)]
    for _ in range(n_extra):
        a, b = rng.integers(0, n_vertices, size=2)
        pairs.append((int(a), int(b)))
    edges = tuple(
        EdgeRecord(id=i, tail=a, head=b, length=float(rng.uniform(0.5, 2.0)))
        for i, (a, b) in enumerate(pairs)
    )
    return MetricGraph(vertices=tuple(range(n_vertices)), edges=edges)


def test_degree_star(star3):
    assert degree(star3, 0) == 3
    assert all(degree(star3, v) == 1 for v in (1, 2, 3))


def test_degree_counts_loop_twice():
    loop = EdgeRecord(id=0, tail=0, head=0, length=1.0)
    g = MetricGraph(vertices=(0,), edges=(loop,))
    assert degree(g, 0) == 2


def test_degree_path_middle():
    g = MetricGraph(
        vertices=(0, 1, 2),
        edges=(
            EdgeRecord(id=0, tail=0, head=1, length=1.0),
            EdgeRecord(id=1, tail=1, head=2, length=1.0),
        ),
    )
    assert degree(g, 1) == 2


def test_degree_unknown_vertex(star3):
    with pytest.raises(KeyError):
        degree(star3, 17)


def test_metric_graph_validation():
    with pytest.raises(ValueError, match="unknown vertex"):
        MetricGraph(
            vertices=(0,), edges=(EdgeRecord(id=0, tail=0, head=1, length=1.0),)
        )
    with pytest.raises(ValueError, match="length"):
        MetricGraph(
            vertices=(0, 1), edges=(EdgeRecord(id=0, tail=0, head=1, length=0.0),)
        )
    with pytest.raises(ValueError, match="connected"):
        MetricGraph(
            vertices=(0, 1, 2), edges=(EdgeRecord(id=0, tail=0, head=1, length=1.0),)
        )


def test_density_spec():
    p = DensitySpec.sampled([0.0, 1.0, 2.0], [1.0, 3.0, 2.0])
    assert float(p(0.5)) == pytest.approx(2.0)
    assert p.extrema(0.0, 2.0) == (1.0, 3.0)
    assert float(p.derivative(0.5)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        DensitySpec.sampled([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        DensitySpec.constant(-1.0)


def test_uniform_star_passes(star3):
    report = check_uniform_graph(star3, UNIT_BOUNDS)
    assert report.passed
    assert (report.d0, report.l0) == (3, 1.0)


def test_short_edge_fails_length_bound():
    g = generate_graph("star", n_edges=3, length=0.5)
    report = check_uniform_graph(g, UNIT_BOUNDS)
    assert not report.length_ok
    assert report.degree_ok and report.density_ok


def test_lead_density_lower_bound_only_near_vertex(star3):
    decaying = DensitySpec.sampled([0.0, 1.0, 5.0, 10.0], [1.0, 1.0, 0.1, 0.01])
    lead = EdgeRecord(id=3, tail=0, head=None, length=math.inf, density=decaying)
    g = MetricGraph(vertices=star3.vertices, edges=star3.edges + (lead,))
    report = check_uniform_graph(g, {**UNIT_BOUNDS, "d0": 4})
    assert report.density_ok
    assert report.p_minus == pytest.approx(1.0)


def test_uniformity_missing_bounds(star3):
    with pytest.raises(ValueError, match="p_plus"):
        check_uniform_graph(star3, {"d0": 3, "l0": 1.0, "p_minus": 1.0})


def test_generate_star():
    g = generate_graph("star", n_edges=3, length=1.0)
    assert len(g.vertices) == 4
    assert [e.length for e in g.edges] == [1.0, 1.0, 1.0]


def test_generate_tree_truncation():
    g = generate_graph("tree_truncation", d0=3, depth=2)
    assert len(g.vertices) == 10
    assert degree(g, 0) == 3
    assert all(degree(g, v) == 3 for v in (1, 2, 3))
    assert all(degree(g, v) == 1 for v in range(4, 10))


@pytest.mark.parametrize("generation", [1, 2, 3, 4])
def test_sierpinski_counts_and_degrees(generation):
    g = generate_graph("sierpinski", generation=generation)
    assert len(g.edges) == 3**generation
    assert len(g.vertices) == (3**generation + 3) // 2
    degrees = sorted(degree(g, v) for v in g.vertices)
    assert degrees[:3] == [2, 2, 2]
    if generation >= 2:
        assert set(degrees[3:]) == {4}


def test_cycle_has_three_vertices():
    g = generate_graph("cycle", length=3.0)
    dg = to_discrete(g)
    assert len(dg.vertices) == 3 and len(dg.edges) == 3
    assert all(e.length == pytest.approx(1.0) for e in g.edges)


def test_generate_rejects_unknown_kind():
    with pytest.raises(ValueError, match="not recognised"):
        generate_graph("petersen")


@pytest.mark.parametrize("d0,depth", [(2, 3), (3, 2), (4, 2)])
def test_tree_truncation_is_breadth_first_and_regular(d0, depth):
    g = generate_graph("tree_truncation", d0=d0, depth=depth)
    n_vertices = 1 + d0 * sum((d0 - 1) ** k for k in range(depth))
    assert len(g.vertices) == n_vertices
    assert len(g.edges) == n_vertices - 1
    # every edge points from a smaller label (parent) to a larger one (child)
    assert all(e.tail < e.head for e in g.edges)
    assert degree(g, 0) == d0
    n_interior = 1 + d0 * sum((d0 - 1) ** k for k in range(depth - 1))
    assert all(degree(g, v) == d0 for v in range(1, n_interior))
    assert all(degree(g, v) == 1 for v in range(n_interior, n_vertices))


def test_complete_k4_edges():
    g = generate_graph("complete_k4")
    pairs = {frozenset((e.tail, e.head)) for e in g.edges}
    assert len(pairs) == 6
    assert all(degree(g, v) == 3 for v in g.vertices)


def test_sierpinski_generation_two_glues_corner_pairs():
    g = generate_graph("sierpinski", generation=2)
    copies = [g.edges[3 * j : 3 * j + 3] for j in range(3)]
    members = [{v for e in copy for v in (e.tail, e.head)} for copy in copies]
    assert all(len(m) == 3 for m in members)
    shared = [v for v in g.vertices if sum(v in m for m in members) == 2]
    assert len(shared) == 3
    assert all(degree(g, v) == 4 for v in shared)


def test_to_discrete_preserves_counts(k4):
    dg = to_discrete(k4)
    assert isinstance(dg, DiscreteGraph)
    assert (len(dg.vertices), len(dg.edges)) == (4, 6)
    sierpinski = generate_graph("sierpinski", generation=2)
    dg = to_discrete(sierpinski)
    assert (len(dg.vertices), len(dg.edges)) == (6, 9)


def test_to_discrete_drops_leads(star3):
    lead = EdgeRecord(id=3, tail=0, head=None, length=math.inf)
    g = MetricGraph(vertices=star3.vertices, edges=star3.edges + (lead,))
    with pytest.warns(UserWarning, match="Leads"):
        dg = to_discrete(g)
    assert len(dg.edges) == 3


@pytest.mark.parametrize("seed", range(5))
def test_edge_end_sum_equals_degree_weighted_sum(seed):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    a = {v: float(rng.uniform(0, 1)) for v in g.vertices}
    assert sum_over_edge_ends(g, a) == pytest.approx(sum_over_vertices(g, a=a))


@pytest.mark.parametrize("seed", range(5))
def test_vertex_edge_double_sum(seed):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng)
    b = {e.id: float(rng.uniform(0, 1)) for e in g.edges}
    assert sum_over_vertices(g, b=b) == pytest.approx(2 * sum(b.values()))


def test_sum_over_vertices_needs_one_family(star3):
    with pytest.raises(ValueError):
        sum_over_vertices(star3)
