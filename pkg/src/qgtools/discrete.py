"""
Degree-normalised discrete graph Laplacian, its spectrum, and the analytic spectral sets
of homogeneous trees and of the Sierpinski decimation map.
"""

import math
import logging

from dataclasses import dataclass
from typing import Sequence
from warnings import warn

import numpy as np
import pandas as pd
import scipy.linalg as la

from .graph import DiscreteGraph, generate_graph, to_discrete
from ._utils import DENSE_LIMIT, check_dense_size, cluster_eigenvalues, spectrum_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SymmetrizedLaplacian:
    """S = I - D^{-1/2} A D^{-1/2}, similar to the weighted-space operator
    D^{-1}(D - A) via D^{1/2}."""

    matrix: np.ndarray
    degrees: np.ndarray
    vertices: tuple

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def random_walk_form(self) -> np.ndarray:
        """The non-symmetric operator I - D^{-1} A acting on vertex functions."""

        d = np.sqrt(self.degrees)
        return (self.matrix * d[None, :]) / d[:, None]


def _adjacency(g: DiscreteGraph) -> np.ndarray:
    index = {v: i for i, v in enumerate(g.vertices)}
    n = len(g.vertices)
    A = np.zeros((n, n))
    for a, b in g.edges:
        i, j = index[a], index[b]
        if i == j:
            A[i, i] += 2
        else:
            A[i, j] += 1
            A[j, i] += 1
    return A


def discrete_laplacian(g: DiscreteGraph) -> SymmetrizedLaplacian:
    """Build the symmetrised discrete Laplacian of `g`. Multi-edges add their
    multiplicity to the adjacency matrix, a loop adds 2 to the diagonal and to the
    degree.

    :param g: Combinatorial graph without isolated vertices
    :type g: DiscreteGraph

    :returns: The symmetrised Laplacian together with the degree vector
    :rtype: SymmetrizedLaplacian
    """

    if not g.is_connected():
        warn("Discrete graph is disconnected; eigenvalue 0 is no longer simple")

    A = _adjacency(g)
    deg = A.sum(axis=1)
    dinv = 1.0 / np.sqrt(deg)
    S = np.eye(len(deg)) - dinv[:, None] * A * dinv[None, :]
    S = 0.5 * (S + S.T)

    return SymmetrizedLaplacian(matrix=S, degrees=deg, vertices=g.vertices)


def discrete_spectrum(
    L: SymmetrizedLaplacian, dense_limit: int = DENSE_LIMIT
) -> pd.DataFrame:
    """Ascending eigenvalues of `L` with an estimated multiplicity per entry.

    :param L: Symmetrised Laplacian
    :type L: SymmetrizedLaplacian
    :param dense_limit: Largest dimension for the dense solver, defaults to DENSE_LIMIT
    :type dense_limit: int

    :returns: Table with columns `index`, `eigenvalue`, `est_multiplicity`
    :rtype: pd.DataFrame
    """

    check_dense_size(L.n, dense_limit)
    eigs = la.eigh(L.matrix, eigvals_only=True)
    logger.debug("Discrete spectrum of %d vertices: [%g, %g]", L.n, eigs[0], eigs[-1])
    return spectrum_table(eigs)


def tree_band(d0: int) -> tuple:
    """Spectral band [1 - 2√(d0-1)/d0, 1 + 2√(d0-1)/d0] of the homogeneous tree."""

    if d0 < 3:
        raise ValueError(f"`d0` must be at least 3, got {d0}")
    half = 2 * math.sqrt(d0 - 1) / d0
    return 1 - half, 1 + half


def truncated_tree_spectrum(d0: int, depth: int) -> pd.DataFrame:
    """Spectrum of the finite rooted tree of degree `d0` and given depth, flagging which
    eigenvalues fall inside the band of the infinite tree.

    :returns: Spectrum table with an extra boolean column `in_band`
    :rtype: pd.DataFrame
    """

    lo, hi = tree_band(d0)
    tree = to_discrete(generate_graph("tree_truncation", d0=d0, depth=depth))
    table = discrete_spectrum(discrete_laplacian(tree))
    table["in_band"] = (table["eigenvalue"] >= lo) & (table["eigenvalue"] <= hi)
    return table


def sierpinski_polynomial(z):
    """Decimation map p(z) = z(5 - 4z)."""

    z = np.asarray(z, dtype=float)
    return z * (5 - 4 * z)


def _real_preimages(w: float) -> list:
    # 4 z^2 - 5 z + w = 0
    disc = 25 - 16 * w
    if disc < 0:
        return []
    root = math.sqrt(disc)
    return [z for z in ((5 - root) / 8, (5 + root) / 8) if 0 <= z <= 2]


def sierpinski_levels(n_levels: int, tol: float = 1e-12) -> pd.DataFrame:
    """The level set D_n = {3/2} ∪ p^{-j}{3/4}, j = 0..n_levels, computed by repeated
    quadratic solves.

    :param n_levels: Deepest preimage level
    :type n_levels: int
    :param tol: Values closer than this are merged, keeping the lowest level,
        defaults to 1e-12
    :type tol: float

    :returns: Table with columns `value` and `level`, sorted by value. The isolated
        point 3/2 carries level -1.
    :rtype: pd.DataFrame
    """

    if n_levels < 0:
        raise ValueError(f"`n_levels` must be non-negative, got {n_levels}")

    values = [1.5, 0.75]
    levels = [-1, 0]
    frontier = [0.75]
    for j in range(1, n_levels + 1):
        frontier = [z for w in frontier for z in _real_preimages(w)]
        values.extend(frontier)
        levels.extend([j] * len(frontier))

    table = pd.DataFrame({"value": values, "level": levels})
    table = table.sort_values(["value", "level"], kind="mergesort").reset_index(
        drop=True
    )
    keep = np.concatenate([[True], np.diff(table["value"].to_numpy()) > tol])
    return table[keep].reset_index(drop=True)


def spectral_gaps(eigs: Sequence[float], min_width: float = 1e-6) -> list:
    """Open sub-intervals of [0, 2] free of eigenvalues and wider than `min_width`.

    :param eigs: Eigenvalues of a discrete Laplacian
    :param min_width: Smallest reported gap width, defaults to 1e-6

    :returns: List of (lower, upper) tuples, ascending
    :rtype: list
    """

    points = [v for v, _ in cluster_eigenvalues(eigs)]
    points = [0.0] + [min(max(v, 0.0), 2.0) for v in points] + [2.0]
    gaps = []
    for lo, hi in zip(points[:-1], points[1:]):
        if hi - lo > min_width:
            gaps.append((lo, hi))
    return gaps
