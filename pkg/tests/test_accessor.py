import numpy as np
import pytest
import xarray as xr

import qgtools  # noqa: F401  registers the `qg` accessor


@pytest.fixture
def sweep_ds():
    eps = [0.3, 0.15, 0.075]
    graph = np.array([[0.0, 2.4674], [0.0, 2.4674], [0.0, 2.4674]])
    manifold = graph + np.array([[0.0, 0.4], [0.0, 0.2], [0.0, 0.1]])
    return xr.Dataset(
        data_vars={
            "delta": ("eps", [0.8, 0.5, 0.3]),
            "d_spectra": ("eps", [0.1, np.nan, 0.05]),
            "graph_eigenvalue": (("eps", "k"), graph),
            "manifold_eigenvalue": (("eps", "k"), manifold),
            "eigenvalue_error": (("eps", "k"), np.abs(manifold - graph)),
        },
        coords={"eps": eps, "k": [0, 1]},
    )


def test_is_decreasing(sweep_ds):
    assert sweep_ds.qg.is_decreasing("delta")
    assert sweep_ds.qg.is_decreasing("eigenvalue_error", k=1)
    assert not sweep_ds.qg.is_decreasing("eigenvalue_error", k=0)
    assert not sweep_ds.qg.is_decreasing("d_spectra")


def test_order_follows_eps(sweep_ds):
    reversed_ds = sweep_ds.isel(eps=slice(None, None, -1))
    assert reversed_ds.qg.is_decreasing("delta")
    ratios = reversed_ds.qg.ratios("eigenvalue_error", k=1)
    np.testing.assert_allclose(ratios, [0.5, 0.5])


def test_indexed_variable_needs_k(sweep_ds):
    with pytest.raises(ValueError, match="eigenvalue index"):
        sweep_ds.qg.ratios("eigenvalue_error")
    with pytest.raises(ValueError, match="not a sweep variable"):
        sweep_ds.qg.is_decreasing("lambda")


def test_to_table(sweep_ds):
    table = sweep_ds.qg.to_table()
    assert table["eps"].tolist() == [0.3, 0.15, 0.075]
    assert list(table.columns) == [
        "eps",
        "delta",
        "d_spectra",
        "graph_eigenvalue_0",
        "graph_eigenvalue_1",
        "manifold_eigenvalue_0",
        "manifold_eigenvalue_1",
        "eigenvalue_error_0",
        "eigenvalue_error_1",
    ]
