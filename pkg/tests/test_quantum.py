import math

import numpy as np
import pytest

from qgtools.graph import (
    DensitySpec,
    EdgeRecord,
    MetricGraph,
    generate_graph,
    to_discrete,
)
from qgtools.quantum import (
    DirichletSetError,
    assemble_kirchhoff,
    cutoff_norms,
    decoupled_family,
    decoupled_spectrum,
    dirichlet_spectrum,
    eigenpairs,
    g_map,
    gap_intervals_tree,
    gap_preimages,
    kirchhoff_residual,
    lift_eigenvector,
    metric_spectrum_via_correspondence,
    mu_preimages,
    sample_eigenfunction,
    trace_bound_check,
)

OMEGA_K4 = math.acos(-1 / 3)


@pytest.fixture(scope="module")
def k4_system(k4):
    # 6 edges x 500 cells stays under the dense-solver limit
    return assemble_kirchhoff(k4, 2e-3)


@pytest.fixture(scope="module")
def k4_eigvec():
    # eigenvector of the degree-normalised Laplacian for 4/3 with Σ deg a² = 1
    return np.array([1.0, -1.0, 0.0, 0.0]) / math.sqrt(6)


def test_star_spectrum(star3_system):
    lam, _ = star3_system.lowest(6)
    expected = np.pi**2 * np.array([0, 1 / 4, 1 / 4, 1, 9 / 4, 9 / 4])
    assert star3_system.dim == 3001
    assert lam[0] == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(lam[1:], expected[1:], rtol=1e-4)


def test_eigenpairs_are_mass_orthonormal(star3_system):
    pairs = eigenpairs(star3_system, 4)
    V = np.column_stack([p.coefficients for p in pairs])
    gram = V.T @ (star3_system.mass @ V)
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)


def test_k4_matches_correspondence(k4, k4_system):
    lam, _ = k4_system.lowest(4)
    table = metric_spectrum_via_correspondence(None, 1.0, 5.0, to_discrete(k4))
    assert len(table) == 1
    assert table["eigenvalue"].iloc[0] == pytest.approx(OMEGA_K4**2)
    assert table["multiplicity"].iloc[0] == 3
    np.testing.assert_allclose(lam[1:], [OMEGA_K4**2] * 3, rtol=1e-4)


def test_correspondence_rejects_leaves(star3):
    with pytest.raises(ValueError, match="degree"):
        metric_spectrum_via_correspondence(None, 1.0, 10.0, to_discrete(star3))


@pytest.mark.parametrize("isometric, expected", [(True, 1.0), (False, 0.5)])
def test_lift_norm(k4_system, k4_eigvec, isometric, expected):
    pair = lift_eigenvector(k4_eigvec, OMEGA_K4**2, k4_system, isometric=isometric)
    assert k4_system.norm(pair.coefficients) == pytest.approx(expected, rel=1e-4)


def test_lift_is_eigenfunction(k4_system, k4_eigvec):
    pair = lift_eigenvector(k4_eigvec, OMEGA_K4**2, k4_system)
    np.testing.assert_allclose(
        pair.coefficients[[0, 1, 2, 3]],
        math.sqrt(2) * k4_eigvec,
        atol=1e-12,
    )
    assert pair.residual(k4_system) < 1e-2


def test_lift_refuses_dirichlet_set(k4_system, k4_eigvec):
    with pytest.raises(DirichletSetError):
        lift_eigenvector(k4_eigvec, np.pi**2, k4_system)


def test_lift_needs_equilateral_graph():
    g = MetricGraph(
        vertices=(0, 1, 2),
        edges=(
            EdgeRecord(id=0, tail=0, head=1, length=1.0),
            EdgeRecord(id=1, tail=1, head=2, length=2.0),
        ),
    )
    with pytest.raises(ValueError, match="equilateral"):
        lift_eigenvector([1, 0, 1], 2.0, assemble_kirchhoff(g, 0.1))


def test_kirchhoff_residual_small(star3_system):
    pair = eigenpairs(star3_system, 4)[3]
    assert pair.eigenvalue == pytest.approx(np.pi**2, rel=1e-4)
    res = kirchhoff_residual(pair)
    assert max(abs(r) for r in res.values()) < 0.05


def test_sample_eigenfunction(star3_system):
    pair = eigenpairs(star3_system, 2)[1]
    table = sample_eigenfunction(pair)
    assert list(table.columns) == ["edge_id", "x", "value"]
    assert len(table) == 3 * 1001
    centre = table[table["x"] == 0.0]["value"].to_numpy()
    np.testing.assert_allclose(centre, centre[0])


def test_constant_density_does_not_change_spectrum(star3):
    scaled = MetricGraph(
        vertices=star3.vertices,
        edges=tuple(
            EdgeRecord(
                id=e.id,
                tail=e.tail,
                head=e.head,
                length=e.length,
                density=DensitySpec.constant(0.5),
            )
            for e in star3.edges
        ),
    )
    lam, _ = assemble_kirchhoff(star3, 1e-2).lowest(4)
    lam_scaled, _ = assemble_kirchhoff(scaled, 1e-2).lowest(4)
    np.testing.assert_allclose(lam_scaled, lam, rtol=1e-10, atol=1e-10)


def test_loop_gets_two_cells():
    g = MetricGraph(
        vertices=(0,), edges=(EdgeRecord(id=0, tail=0, head=0, length=1.0),)
    )
    sys = assemble_kirchhoff(g, 10.0)
    assert sys.dim == 2
    lam, _ = assemble_kirchhoff(g, 1e-3).lowest(3)
    # the loop is a circle of circumference 1
    np.testing.assert_allclose(lam[1:], [(2 * np.pi) ** 2] * 2, rtol=1e-4)


def test_leads_must_be_truncated():
    g = MetricGraph(
        vertices=(0, 1),
        edges=(
            EdgeRecord(id=0, tail=0, head=1, length=1.0),
            EdgeRecord(id=1, tail=0, head=None, length=math.inf),
        ),
    )
    with pytest.raises(ValueError, match="infinite"):
        assemble_kirchhoff(g, 0.1)


def test_dirichlet_spectrum():
    np.testing.assert_allclose(dirichlet_spectrum(1.0, 40.0), [np.pi**2, 4 * np.pi**2])
    assert dirichlet_spectrum(1.0, 5.0).size == 0


def test_mu_preimages():
    np.testing.assert_allclose(
        mu_preimages(1.0, 1.0, 30.0), [(np.pi / 2) ** 2, (3 * np.pi / 2) ** 2]
    )
    lam = mu_preimages(4 / 3, 1.0, 200.0)
    np.testing.assert_allclose(g_map(lam, 1.0), 4 / 3)


@pytest.mark.parametrize("mu", [0.0, 2.0, -0.1])
def test_mu_preimages_rejects_endpoints(mu):
    with pytest.raises(ValueError):
        mu_preimages(mu, 1.0, 10.0)


def test_gap_intervals_tree():
    gaps = gap_intervals_tree(3, 30.0)
    assert gaps[0][0] == 0.0
    assert gaps[0][1] == pytest.approx(0.339837**2, rel=1e-5)
    assert gaps[0][1] == pytest.approx(0.115489, rel=1e-5)
    w0 = 0.3398369
    assert gaps[1] == pytest.approx(((np.pi - w0) ** 2, np.pi**2), rel=1e-6)
    assert gaps[2] == pytest.approx((np.pi**2, (np.pi + w0) ** 2), rel=1e-6)
    assert all(hi <= 30.0 for _, hi in gaps)


def test_gap_preimages():
    gaps = gap_preimages([(0.0, 0.5)], 1.0, 10.0)
    assert len(gaps) == 1
    assert gaps[0] == pytest.approx((0.0, (np.pi / 3) ** 2))


def test_gap_preimages_match_tree_gaps():
    lo, hi = 1 - 2 * math.sqrt(2) / 3, 1 + 2 * math.sqrt(2) / 3
    gaps = gap_preimages([(0.0, lo), (hi, 2.0)], 1.0, 30.0)
    np.testing.assert_allclose(
        np.asarray(gaps), np.asarray(gap_intervals_tree(3, 30.0)), rtol=1e-9
    )


def test_decoupled_spectrum():
    spectrum = decoupled_spectrum([1.0, 2.0], 10.0, 3)
    assert [m for _, m in spectrum] == [3, 1, 2]
    np.testing.assert_allclose(
        [v for v, _ in spectrum], [0.0, np.pi**2 / 4, np.pi**2]
    )


def test_decoupled_family():
    table = decoupled_family(4, 3)
    np.testing.assert_allclose(table["eigenvalue"], np.pi**4 * np.array([1, 4, 9]) / 4)
    np.testing.assert_allclose(table["quoted_value"], np.array([1, 4, 9]) / 4)
    np.testing.assert_allclose(table["eigenvalue"] / table["quoted_value"], np.pi**4)


def test_trace_bound(star3, star3_system):
    table = trace_bound_check(star3, star3_system, n_samples=20)
    assert len(table) == 20
    assert table["ok"].all()


def test_cutoff_norms(star3, k4):
    for g in (star3, k4):
        table = cutoff_norms(g)
        assert len(table) == 2 * len(g.edges)
        assert table["ok"].all()


def test_interval_eigenvalues_decrease_at_second_order_under_nested_refinement():
    g = generate_graph("interval", length=1.0)
    exact = (np.pi * np.arange(1, 4)) ** 2
    lams = []
    for n in (20, 40, 80):
        lam, _ = assemble_kirchhoff(g, 1.0 / n, cells={0: n}).lowest(4)
        assert lam[0] == pytest.approx(0.0, abs=1e-8)
        lams.append(lam[1:])
    lams = np.array(lams)
    # conforming nested spaces: upper bounds, monotone in the refinement
    assert np.all(lams > exact)
    assert np.all(np.diff(lams, axis=0) < 0)
    errors = lams - exact
    ratios = errors[:-1] / errors[1:]
    assert np.all((ratios >= 3.5) & (ratios <= 4.5))


def test_cycle_spectrum_has_double_eigenvalues():
    g = generate_graph("cycle", length=1.0)
    sys = assemble_kirchhoff(g, 1e-3)
    lam, _ = sys.lowest(7)
    expected = (2 * np.pi * np.array([1, 1, 2, 2, 3, 3])) ** 2
    assert lam[0] == pytest.approx(0.0, abs=1e-8)
    np.testing.assert_allclose(lam[1:], expected, rtol=1e-4)


def test_lift_residuals_are_higher_order(k4_system, k4_eigvec):
    lam = OMEGA_K4**2
    h = k4_system.h
    pair = lift_eigenvector(k4_eigvec, lam, k4_system)
    norm = k4_system.norm(pair.coefficients)
    assert pair.residual(k4_system) <= lam**2 * h**2 * norm

    # one-sided quotients: Σ_e f'_e(v) - deg(v) λ h f(v) / 2 + O(h³)
    res = kirchhoff_residual(pair)
    for v, r in res.items():
        f_v = pair.coefficients[k4_system.dof_map.vertex_dof[v]]
        assert abs(r + 3 * lam * h * f_v / 2) < 1e-6
