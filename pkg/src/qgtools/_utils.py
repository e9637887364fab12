"""
This module contains simple numerical utility functions used across the other modules.
"""

import os

from typing import Iterable, Sequence

import numpy as np
import pandas as pd

# largest matrix dimension handed to a dense eigensolver
DENSE_LIMIT = 4000

# eigenvalues closer than this (relative) are treated as one multiple eigenvalue
MULTIPLICITY_RTOL = 1e-6
MULTIPLICITY_ATOL = 1e-9

# absolute slack granted to every analytic bound check
BOUND_SLACK = 1e-9

# significant digits written to CSV output
CSV_FLOAT_FORMAT = "%.12g"


class SizeLimitError(ValueError):
    """Raised when a dense solve is requested above the configured size limit."""


def check_dense_size(n: int, limit: int = DENSE_LIMIT) -> None:
    """Refuse dense eigensolves above `limit` degrees of freedom.

    :param n: Matrix dimension
    :type n: int
    :param limit: Largest permitted dimension, defaults to DENSE_LIMIT
    :type limit: int
    """

    if n > limit:
        raise SizeLimitError(
            f"Dense eigensolve of dimension {n} exceeds the limit of {limit}. "
            "Reduce the problem size or raise `dense_limit`."
        )


def check_positive(name: str, value: float) -> float:
    """Return `value` as a float, raising ValueError unless it is strictly positive."""

    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"`{name}` must be a finite positive number, got {value}")
    return value


def cluster_eigenvalues(
    values: Iterable[float],
    rtol: float = MULTIPLICITY_RTOL,
    atol: float = MULTIPLICITY_ATOL,
) -> list:
    """Group sorted eigenvalues into clusters of (numerically) equal values.

    Two neighbouring values belong to the same cluster when their gap is below
    `rtol * max(|a|, |b|) + atol`.

    :param values: Eigenvalues, in any order
    :type values: Iterable[float]
    :param rtol: Relative clustering tolerance, defaults to MULTIPLICITY_RTOL
    :type rtol: float
    :param atol: Absolute clustering tolerance, defaults to MULTIPLICITY_ATOL
    :type atol: float

    :returns: List of (mean value, multiplicity) tuples in ascending order
    :rtype: list
    """

    vals = np.sort(np.asarray(list(values), dtype=float))
    clusters = []
    if vals.size == 0:
        return clusters

    start = 0
    for i in range(1, vals.size + 1):
        if i == vals.size or (
            vals[i] - vals[i - 1] > rtol * max(abs(vals[i]), abs(vals[i - 1])) + atol
        ):
            block = vals[start:i]
            clusters.append((float(block.mean()), int(block.size)))
            start = i

    return clusters


def estimate_multiplicity(
    values: Sequence[float],
    rtol: float = MULTIPLICITY_RTOL,
    atol: float = MULTIPLICITY_ATOL,
) -> np.ndarray:
    """For ascending `values`, the size of the cluster each entry belongs to."""

    counts = []
    for _, mult in cluster_eigenvalues(values, rtol=rtol, atol=atol):
        counts.extend([mult] * mult)
    return np.asarray(counts, dtype=int)


def spectrum_table(values: Sequence[float]) -> pd.DataFrame:
    """Tabulate ascending eigenvalues as (index, eigenvalue, est_multiplicity)."""

    values = np.sort(np.asarray(values, dtype=float))
    return pd.DataFrame(
        {
            "index": np.arange(values.size),
            "eigenvalue": values,
            "est_multiplicity": estimate_multiplicity(values),
        }
    )


def write_csv(df: pd.DataFrame, fpath: str) -> str:
    """Write `df` with a header row and 12 significant digits, creating parent
    directories if needed.

    :returns: The path written
    :rtype: str
    """

    outdir = os.path.dirname(fpath)
    if outdir and not os.path.exists(outdir):
        os.makedirs(outdir)

    df.to_csv(fpath, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return fpath
