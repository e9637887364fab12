import math

import numpy as np
import pytest

from qgtools.discrete import (
    discrete_laplacian,
    discrete_spectrum,
    sierpinski_levels,
    sierpinski_polynomial,
    spectral_gaps,
    tree_band,
    truncated_tree_spectrum,
)
from qgtools.graph import DiscreteGraph, generate_graph, to_discrete


def test_k4_spectrum(k4):
    table = discrete_spectrum(discrete_laplacian(to_discrete(k4)))
    np.testing.assert_allclose(
        table["eigenvalue"], [0, 4 / 3, 4 / 3, 4 / 3], atol=1e-12
    )
    assert table["est_multiplicity"].tolist() == [1, 3, 3, 3]


def test_bipartite_star_spectrum(star3):
    eigs = discrete_spectrum(discrete_laplacian(to_discrete(star3)))["eigenvalue"]
    np.testing.assert_allclose(eigs, [0, 1, 1, 2], atol=1e-12)


def test_symmetrised_form_is_similar(k4):
    L = discrete_laplacian(to_discrete(k4))
    np.testing.assert_allclose(L.matrix, L.matrix.T)
    walk = np.sort(np.linalg.eigvals(L.random_walk_form()).real)
    np.testing.assert_allclose(walk, np.linalg.eigvalsh(L.matrix), atol=1e-12)


def test_loop_adds_two_to_degree():
    g = DiscreteGraph(vertices=(0, 1), edges=((0, 1), (1, 1)))
    L = discrete_laplacian(g)
    np.testing.assert_array_equal(L.degrees, [1, 3])


def test_disconnected_graph_warns():
    g = DiscreteGraph(vertices=(0, 1, 2, 3), edges=((0, 1), (2, 3)))
    with pytest.warns(UserWarning, match="disconnected"):
        discrete_laplacian(g)


def test_isolated_vertex_rejected():
    with pytest.raises(ValueError, match="isolated"):
        DiscreteGraph(vertices=(0, 1, 2), edges=((0, 1),))


def test_tree_band():
    lo, hi = tree_band(3)
    assert lo == pytest.approx(1 - 2 * math.sqrt(2) / 3)
    assert hi == pytest.approx(1 + 2 * math.sqrt(2) / 3)


def test_truncated_tree_spectrum():
    table = truncated_tree_spectrum(3, 2)
    assert len(table) == 10
    assert table["eigenvalue"].iloc[0] == pytest.approx(0.0, abs=1e-12)
    assert "in_band" in table.columns


def test_sierpinski_levels_zero():
    table = sierpinski_levels(0)
    assert table["value"].tolist() == [0.75, 1.5]


def test_sierpinski_levels_two():
    values = sierpinski_levels(2)["value"].to_numpy()
    assert len(values) == 8
    for expected in (0.75, 1.5, (5 - math.sqrt(13)) / 8, (5 + math.sqrt(13)) / 8):
        assert np.min(np.abs(values - expected)) < 1e-12


@pytest.mark.parametrize("n_levels", [1, 2, 3, 4])
def test_sierpinski_levels_map_back_to_three_quarters(n_levels):
    table = sierpinski_levels(n_levels)
    for z, level in zip(table["value"], table["level"]):
        if level < 0:
            continue
        w = z
        for _ in range(level):
            w = float(sierpinski_polynomial(w))
        assert abs(w - 0.75) < 1e-10


def test_sierpinski_finite_spectrum_baseline():
    g = to_discrete(generate_graph("sierpinski", generation=4))
    eigs = discrete_spectrum(discrete_laplacian(g))["eigenvalue"].to_numpy()
    assert eigs.size == 42
    assert eigs[0] == pytest.approx(0.0, abs=1e-10)
    assert eigs[1] > 1e-6
    assert eigs[-1] <= 2 + 1e-12


def test_sierpinski_generation_four_meets_level_two():
    g = to_discrete(generate_graph("sierpinski", generation=4))
    eigs = discrete_spectrum(discrete_laplacian(g))["eigenvalue"].to_numpy()
    levels = sierpinski_levels(2)
    values = levels["value"].to_numpy()

    counts = [int(np.sum(np.abs(eigs - z) < 1e-8)) for z in values]
    # multiplicity of each D_2 value in the generation-4 spectrum, by level
    expected = {-1: 15, 0: 6, 1: 3, 2: 2}
    assert counts == [expected[level] for level in levels["level"]]
    assert sum(counts) == 35

    nearest = np.min(np.abs(eigs[:, None] - values[None, :]), axis=1)
    outside = np.sort(eigs[nearest > 1e-8])
    np.testing.assert_allclose(
        outside,
        [0.0, (5 - math.sqrt(5)) / 8, (5 + math.sqrt(5)) / 8, 1.25, 1.25, 1.25, 1.25],
        atol=1e-10,
    )


def test_spectral_gaps():
    gaps = spectral_gaps([0.0, 0.5, 0.5, 2.0])
    assert gaps == [(0.0, 0.5), (0.5, 2.0)]


def test_sierpinski_levels_rejects_negative():
    with pytest.raises(ValueError):
        sierpinski_levels(-1)
