import math

import numpy as np
import pytest

from qgtools.graph import DensitySpec, EdgeRecord, MetricGraph
from qgtools.manifold import (
    REGION_EDGE,
    EdgeCurve,
    EmbeddedGraph,
    MeshOverlapError,
    assemble_neumann,
    build_thin_mesh,
    check_embedding,
    export_mesh,
    metric_sample,
    rectangle_mesh,
    star_embedding,
    strip_mesh,
    vertex_region_checks,
)

EPS = 0.3

# areas of the 120-degree star with r = 0.5 at unit thickness
CENTRE_AREA = 3 * 0.5 * (0.5 - 0.25 / math.sqrt(3)) + 3 * 0.25 * 0.25 / math.sqrt(3)
LEAF_AREA = 0.25

STAR_BOUNDS = {
    "beta0": np.pi / 2,
    "kappa0": 0.0,
    "l0": 1.0,
    "r_minus": 0.5,
    "r_plus": 0.5,
    "dr0": 0.0,
}


@pytest.fixture(scope="module")
def star_mesh(star_eg):
    return build_thin_mesh(star_eg, EPS, h_rel=6)


@pytest.fixture(scope="module")
def quarter_arc():
    curve = EdgeCurve.arc((0.0, 0.0), 1.0, 0.0, np.pi / 2)
    g = MetricGraph(
        vertices=(0, 1),
        edges=(EdgeRecord(id=0, tail=0, head=1, length=curve.length),),
    )
    return EmbeddedGraph(
        graph=g,
        positions={0: curve.points[0], 1: curve.points[-1]},
        curves={0: curve},
        radii={0: DensitySpec.constant(0.5)},
    )


def test_rectangle_neumann_eigenvalue():
    lam, _ = assemble_neumann(rectangle_mesh(2.0, 1.0, 40, 20)).lowest(2)
    assert lam[0] == pytest.approx(0.0, abs=1e-8)
    assert lam[1] == pytest.approx(np.pi**2 / 4, rel=0.02)


def test_unit_square_double_eigenvalue():
    lam, _ = assemble_neumann(rectangle_mesh(1.0, 1.0, 20, 20)).lowest(3)
    np.testing.assert_allclose(lam[1:], [np.pi**2] * 2, rtol=0.02)


def test_rectangle_vertex_region_checks():
    result = vertex_region_checks(rectangle_mesh(2.0, 1.0, 40, 20), 0)
    assert result["volume"] == pytest.approx(2.0)
    assert result["lambda2"] == pytest.approx(np.pi**2 / 4, rel=0.02)
    assert "volume_bound" not in result


def test_strip_mesh():
    mesh = strip_mesh(4.0, 0.5, 8)
    assert mesh.n_triangles == 2 * 32 * 8
    assert mesh.edge_cross[0].shape == (33, 9)
    assert np.all(mesh.region_kind == REGION_EDGE)
    assert mesh.edge_region_area(0) == pytest.approx(2.0)


def test_star_mesh_areas(star_mesh):
    total = 3 * EPS * 0.5 * (1 - EPS) + (CENTRE_AREA + 3 * LEAF_AREA) * EPS**2
    assert star_mesh.areas().sum() == pytest.approx(total, rel=1e-9)
    for e in range(3):
        assert star_mesh.edge_region_area(e) == pytest.approx(0.105, rel=1e-9)
    assert star_mesh.vertex_region_area(0) == pytest.approx(CENTRE_AREA * EPS**2)
    for v in (1, 2, 3):
        assert star_mesh.vertex_region_area(v) == pytest.approx(LEAF_AREA * EPS**2)


def test_star_mesh_is_conforming(star_mesh):
    tri = np.sort(star_mesh.triangles, axis=1)
    sides = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]])
    _, counts = np.unique(sides, axis=0, return_counts=True)
    assert counts.max() == 2

    lam, _ = assemble_neumann(star_mesh).lowest(2)
    assert lam[0] == pytest.approx(0.0, abs=1e-8)
    assert lam[1] > 1e-3


def test_star_mesh_cross_lines(star_mesh):
    for e in range(3):
        cross = star_mesh.edge_cross[e]
        x = star_mesh.edge_x[e]
        assert cross.shape == (x.size, 7)
        assert x[0] == 0.0 and x[-1] == pytest.approx(1.0)
    on_edges = np.concatenate([c.ravel() for c in star_mesh.edge_cross.values()])
    for nodes in star_mesh.vertex_nodes.values():
        assert np.intersect1d(nodes, on_edges).size == 0


def test_star_vertex_region_checks(star_mesh):
    centre = vertex_region_checks(star_mesh, 0)
    assert centre["volume"] == pytest.approx(CENTRE_AREA, rel=1e-9)
    assert centre["volume_bound"] == pytest.approx(0.75)
    assert centre["volume"] <= centre["volume_bound"]
    assert centre["lambda2"] > 0

    leaf = vertex_region_checks(star_mesh, 1)
    assert leaf["volume"] == pytest.approx(LEAF_AREA, rel=1e-9)
    assert leaf["lambda2"] >= (2 * np.pi) ** 2 * (1 - 1e-9)


def test_vertex_region_needs_enough_triangles(star_eg):
    coarse = build_thin_mesh(star_eg, EPS, h_rel=1)
    with pytest.raises(ValueError, match="h_rel"):
        vertex_region_checks(coarse, 1)


def test_overlapping_strips_raise():
    eg = star_embedding(3, 1.0, 0.5, angles=[0.0, 0.1, np.pi])
    with pytest.raises(MeshOverlapError, match="vertex 0"):
        build_thin_mesh(eg, EPS)


def test_eps_too_large_raises(star_eg):
    with pytest.raises(MeshOverlapError):
        build_thin_mesh(star_eg, 2.5)


def test_curved_edge_is_not_meshed(quarter_arc):
    with pytest.raises(ValueError, match="curved"):
        build_thin_mesh(quarter_arc, 0.1)


def test_embedding_position_mismatch():
    g = MetricGraph(
        vertices=(0, 1), edges=(EdgeRecord(id=0, tail=0, head=1, length=1.0),)
    )
    with pytest.raises(ValueError, match="misses vertex"):
        EmbeddedGraph(
            graph=g,
            positions={0: (0.0, 0.0), 1: (1.0, 0.0)},
            curves={0: EdgeCurve.straight((0.0, 0.0), (0.0, 1.0))},
        )


def test_check_embedding(star_eg):
    report = check_embedding(star_eg, STAR_BOUNDS)
    assert report.passed
    assert report.min_angle == pytest.approx(2 * np.pi / 3)

    strict = check_embedding(star_eg, {**STAR_BOUNDS, "beta0": 2.5})
    assert not strict.angle_ok
    assert not strict.passed


def test_check_embedding_missing_bounds(star_eg):
    with pytest.raises(ValueError, match="beta0"):
        check_embedding(star_eg, {"l0": 1.0})


def test_metric_sample_straight(star_eg):
    sample = metric_sample(star_eg, 0, EPS)
    a = EPS  # eps * l0 / length
    assert sample.o1 == pytest.approx(0.0, abs=1e-12)
    assert sample.volume_deviation == pytest.approx(a)
    assert sample.o2 == pytest.approx(1 / (1 - a) ** 2 - 1)
    assert sample.O3 == pytest.approx((1 - a) ** 2)
    assert sample.o4 == pytest.approx((EPS * 0.5) ** 2)
    assert sample.product_deviation == pytest.approx(1 / (1 - a) ** 2 - 1)
    assert sample.G.shape == (41, 11, 2, 2)


def test_metric_sample_arc(quarter_arc):
    sample = metric_sample(quarter_arc, 0, 0.1)
    # 1 + eps*kappa*r*y with kappa = 1, r = 0.5, |y| <= 1/2
    assert sample.o1 == pytest.approx(0.1 * 0.5 * 0.5, rel=1e-4)
    np.testing.assert_allclose(sample.G[..., 0, 1], 0.0, atol=1e-15)
    assert set(sample.to_dict()) == {
        "o1",
        "o2",
        "O3",
        "o4",
        "volume_deviation",
        "product_deviation",
    }


def test_metric_sample_constants_are_sharp(quarter_arc, rng):
    sample = metric_sample(quarter_arc, 0, 0.2)
    G_inv = np.linalg.inv(sample.G)
    xi = rng.normal(size=(500, 2))
    norms = np.einsum("...ij,ni,nj->n...", G_inv, xi, xi)
    ratio_x = xi[:, 0, None, None] ** 2 / norms
    ratio_y = xi[:, 1, None, None] ** 2 / norms
    assert ratio_x.max() <= sample.O3 * (1 + 1e-12)
    assert ratio_y.max() <= sample.o4 * (1 + 1e-12)
    # attained at xi = G e_x
    np.testing.assert_allclose(sample.O3, sample.G[..., 0, 0].max(), rtol=1e-12)
    np.testing.assert_allclose(sample.o4, sample.G[..., 1, 1].max(), rtol=1e-12)


def test_metric_sample_constants_decrease_with_eps(quarter_arc):
    samples = [metric_sample(quarter_arc, 0, eps) for eps in (0.2, 0.1, 0.05)]
    for name in ("o1", "o2", "o4", "product_deviation"):
        values = [getattr(s, name) for s in samples]
        assert values[0] > values[1] > values[2] > 0, name
    for name in ("o1", "o4"):
        coarse, fine = (getattr(s, name) for s in samples[1:])
        assert fine < 0.6 * coarse, name


def test_metric_sample_degenerate(quarter_arc):
    with pytest.raises(ValueError, match="degenerates"):
        metric_sample(quarter_arc, 0, 5.0, l0=0.1)


def test_export_mesh(tmp_path, star_mesh):
    fpath = export_mesh(star_mesh, str(tmp_path / "mesh" / "star.txt"))
    lines = open(fpath).read().splitlines()
    assert lines[0] == f"{star_mesh.n_nodes} {star_mesh.n_triangles}"
    assert len(lines) == 1 + star_mesh.n_nodes + star_mesh.n_triangles
    tags = {line.split()[-1] for line in lines[1 + star_mesh.n_nodes :]}
    assert tags == {"e0", "e1", "e2", "v0", "v1", "v2", "v3"}


def _transversal_eigenvalue(width: float, nx: int = 40, ny: int = 8) -> float:
    lam, V = assemble_neumann(rectangle_mesh(1.0, width, nx, ny)).decomposition()
    for j in range(1, lam.size):
        grid = V[:, j].reshape(nx + 1, ny + 1)
        # modes constant along the length keep their profile after averaging in x
        if np.ptp(grid.mean(axis=0)) > 0.5 * np.ptp(grid):
            return float(lam[j])
    raise AssertionError("No transversal mode found")


def test_thin_rectangle_transversal_eigenvalue_scales_with_width():
    widths = [0.1, 0.05, 0.025]
    lams = np.array([_transversal_eigenvalue(w) for w in widths])
    expected = (np.pi / np.array(widths)) ** 2
    np.testing.assert_allclose(lams, expected, rtol=0.02)
    np.testing.assert_allclose(lams[1:] / lams[:-1], 4.0, rtol=0.02)


def test_edge_triangle_count_scales_with_h_rel(star_eg):
    coarse = build_thin_mesh(star_eg, EPS, h_rel=4)
    fine = build_thin_mesh(star_eg, EPS, h_rel=8)
    n_coarse = np.count_nonzero(coarse.region_kind == REGION_EDGE)
    n_fine = np.count_nonzero(fine.region_kind == REGION_EDGE)
    assert n_fine / n_coarse == pytest.approx(4.0, rel=0.2)
    assert fine.h == pytest.approx(coarse.h / 2)


def test_neumann_stiffness_annihilates_constants(star_mesh):
    sys = assemble_neumann(star_mesh)
    row_sums = np.asarray(sys.stiffness.sum(axis=1)).ravel()
    np.testing.assert_allclose(row_sums, 0.0, atol=1e-10)
    assert sys.mass.sum() == pytest.approx(star_mesh.areas().sum(), rel=1e-12)
