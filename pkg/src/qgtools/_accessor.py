"""Custom 'accessor' for the xarray Datasets returned by `run_sweep`, for monotonicity
summaries and flat CSV tables of an ε sweep.
"""

from typing import Optional

import numpy as np
import pandas as pd
import xarray as xr

from xarray import Dataset

# variables with an eigenvalue index `k`, flattened to one column per k
LIST_INDEXED_VARIABLES = ["graph_eigenvalue", "manifold_eigenvalue", "eigenvalue_error"]


@xr.register_dataset_accessor("qg")
class SweepAccessor:
    def __init__(self, xarray_obj: Dataset):
        self._obj = xarray_obj

    def _series(self, var: str, k: Optional[int]) -> np.ndarray:
        if var not in self._obj.data_vars:
            raise ValueError(
                f"`{var}` is not a sweep variable. Must be one of "
                f"{sorted(self._obj.data_vars)}"
            )
        da = self._obj[var]
        if "k" in da.dims:
            if k is None:
                raise ValueError(f"`{var}` is indexed by `k`; pass an eigenvalue index")
            da = da.isel(k=k)
        # order by decreasing eps
        return da.sortby("eps", ascending=False).values

    def is_decreasing(self, var: str, k: Optional[int] = None) -> bool:
        """True if `var` strictly decreases as ε decreases.

        :param var: Name of a data variable, e.g. `delta` or `eigenvalue_error`
        :type var: str
        :param k: Eigenvalue index for variables over `k`, defaults to None
        :type k: int, optional

        :returns: Whether every step to a smaller ε lowers the value
        :rtype: bool
        """

        values = self._series(var, k)
        if np.any(np.isnan(values)):
            return False
        return bool(np.all(np.diff(values) < 0))

    def ratios(self, var: str, k: Optional[int] = None) -> np.ndarray:
        """Ratios between the values at successive (decreasing) ε."""

        values = self._series(var, k)
        return values[1:] / values[:-1]

    def to_table(self) -> pd.DataFrame:
        """One row per ε with every scalar variable, and `<var>_<k>` columns for the
        eigenvalue variables, ordered by decreasing ε."""

        ds = self._obj.sortby("eps", ascending=False)
        table = pd.DataFrame({"eps": ds["eps"].values})
        for name, da in ds.data_vars.items():
            if "k" in da.dims:
                continue
            table[name] = da.values
        for name in LIST_INDEXED_VARIABLES:
            if name not in ds.data_vars:
                continue
            for k in ds["k"].values:
                table[f"{name}_{int(k)}"] = ds[name].sel(k=k).values
        return table
