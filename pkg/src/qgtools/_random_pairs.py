"""
Seeded random pairs of finite-dimensional systems with nearly unitary identification
maps, and a property suite checking the closeness estimates on them.
"""

import logging
import warnings

import numpy as np
import pandas as pd
from scipy.linalg import expm
from scipy.stats import ortho_group

from .closeness import (
    SpacePair,
    ScaledSpace,
    adjoint,
    eigenvector_closeness,
    functional_calculus_gap,
    measure_closeness,
    op_norm,
    other_estimate_check,
    quasi_isometry_gap,
    verify_resolvent,
    verify_resolvent_better,
)
from .identification import IdentificationSet
from ._utils import BOUND_SLACK

logger = logging.getLogger(__name__)

MAX_RANDOM_DIM = 12
MAX_GAMMA = 0.05

LIST_SUITE_CHECKS = [
    "bounded_ok",
    "j_iso_ok",
    "resolvent_ok",
    "resolvent_better_ok",
    "calculus_ok",
    "other_estimate_ok",
    "eigenvector_ok",
    "duality_ok",
    "monotonicity_ok",
]


def _stiffness(mass_diag, Q, lam) -> np.ndarray:
    s = np.sqrt(mass_diag)
    K = s[:, None] * (Q * lam[None, :]) @ Q.T * s[None, :]
    return 0.5 * (K + K.T)


def random_pair(dim: int, seed=None, gamma: float = MAX_GAMMA) -> tuple:
    """Random pair (H, M), (H̃, M̃) of dimension `dim` with identification maps.

    M, M̃ are diagonal with entries in [0.5, 2]; H = M^{1/2} Q Λ Qᵀ M^{1/2} with
    Λ ~ U[0, 10] and Q Haar-orthogonal, and H̃ rotates Q and rescales Λ by O(γ). With
    U = M̃^{-1/2} M^{1/2}, the unitary between the two mass inner products,
    J = U(I + γG/√dim) for a Gaussian G, J′ = M⁻¹JᵀM̃ + γG′/(2√dim), J₁ = J and
    J₁′ = J′.

    :param dim: Dimension, between 2 and MAX_RANDOM_DIM
    :type dim: int
    :param seed: Seed or SeedSequence for numpy's default generator, defaults to None
    :param gamma: Perturbation size, at most MAX_GAMMA, defaults to MAX_GAMMA
    :type gamma: float

    :returns: (SpacePair, IdentificationSet)
    :rtype: tuple
    """

    if not 2 <= dim <= MAX_RANDOM_DIM:
        raise ValueError(f"`dim` must be in [2, {MAX_RANDOM_DIM}], got {dim}")
    if not 0 <= gamma <= MAX_GAMMA:
        raise ValueError(f"`gamma` must be in [0, {MAX_GAMMA}], got {gamma}")

    rng = np.random.default_rng(seed)
    m = rng.uniform(0.5, 2.0, dim)
    mt = rng.uniform(0.5, 2.0, dim)
    Q = ortho_group.rvs(dim, random_state=rng)
    lam = np.sort(rng.uniform(0.0, 10.0, dim))

    skew = rng.normal(size=(dim, dim))
    Qt = Q @ expm(gamma * 0.5 * (skew - skew.T))
    lam_t = lam * (1 + gamma * rng.uniform(-1.0, 1.0, dim))

    K, Kt = _stiffness(m, Q, lam), _stiffness(mt, Qt, lam_t)
    source = ScaledSpace.from_matrices(K, np.diag(m))
    target = ScaledSpace.from_matrices(Kt, np.diag(mt))

    U = np.diag(np.sqrt(m / mt))
    J = U @ (np.eye(dim) + gamma * rng.normal(size=(dim, dim)) / np.sqrt(dim))
    Jp = (J.T * mt[None, :]) / m[:, None]
    Jp = Jp + 0.5 * gamma * rng.normal(size=(dim, dim)) / np.sqrt(dim)

    ids = IdentificationSet(J=J, J1=J, Jp=Jp, J1p=Jp, eps=1.0, order=1)
    return SpacePair(source, target), ids


def _eigenvector_trial(pair: SpacePair, ids: IdentificationSet, delta: float) -> bool:
    lam = pair.source.eigenvalues
    if lam[1] - lam[0] < 0.2:
        return True
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = eigenvector_closeness(
                pair, ids, (-1.0, 0.5 * (lam[0] + lam[1])), delta
            )
    except ValueError:
        # interval endpoint too close to the perturbed spectrum
        return True
    return bool(result["passed"])


def _norm_trials(pair: SpacePair, rng, n_orders: int = 3) -> tuple:
    """Duality ‖A‖_{k→k̃} = ‖A*‖_{-k̃→-k} and monotonicity ‖A‖_{k→-k̃} <= ‖A‖_{m→-m̃}
    for a Gaussian A at `n_orders` random orders with k >= m and k̃ >= m̃."""

    src, tgt = pair.source, pair.target
    A = rng.normal(size=(tgt.dim, src.dim))
    A_star = adjoint(A, src, tgt)

    duality_ok = monotonicity_ok = True
    for _ in range(n_orders):
        m, mt = rng.uniform(-2.0, 2.0, 2)
        k, kt = m + rng.uniform(0.0, 2.0), mt + rng.uniform(0.0, 2.0)

        forward = op_norm(A, src, tgt, k, kt)
        backward = op_norm(A_star, tgt, src, -kt, -k)
        duality_ok &= abs(forward - backward) <= 1e-9 * max(1.0, forward)

        weaker = op_norm(A, src, tgt, k, -kt)
        stronger = op_norm(A, src, tgt, m, -mt)
        monotonicity_ok &= weaker <= stronger * (1 + 1e-12) + BOUND_SLACK
    return bool(duality_ok), bool(monotonicity_ok)


def property_suite(trials: int = 100, seed: int = 0) -> pd.DataFrame:
    """Run every closeness estimate on `trials` random pairs.

    Each trial draws its dimension from [2, MAX_RANDOM_DIM] and its pair from an
    independent child of `SeedSequence(seed)`, so single trials can be rerun.

    :param trials: Number of random pairs, defaults to 100
    :type trials: int
    :param seed: Root seed, defaults to 0
    :type seed: int

    :returns: One row per trial with `trial`, `dim`, `delta`, one boolean column per
        entry of LIST_SUITE_CHECKS and the number of `violations`
    :rtype: pd.DataFrame
    """

    if trials < 0:
        raise ValueError(f"`trials` must be non-negative, got {trials}")

    rows = []
    for trial, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        rng = np.random.default_rng(child)
        dim = int(rng.integers(2, MAX_RANDOM_DIM + 1))
        pair, ids = random_pair(dim, seed=rng)

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = measure_closeness(pair, ids, verify=False)
        delta = report.delta
        coefficients = rng.normal(size=4)
        duality_ok, monotonicity_ok = _norm_trials(pair, rng)

        row = {
            "trial": trial,
            "dim": dim,
            "delta": delta,
            "bounded_ok": report.bounded_ok,
            "j_iso_ok": quasi_isometry_gap(pair, ids, delta, seed=trial)[
                "passed"
            ].all(),
            "resolvent_ok": verify_resolvent(pair, ids, delta)["passed"].all(),
            "resolvent_better_ok": verify_resolvent_better(pair, ids, delta)["passed"],
            "calculus_ok": functional_calculus_gap(pair, ids, coefficients, delta)[
                "passed"
            ],
            "other_estimate_ok": other_estimate_check(pair, ids, delta)["passed"].all(),
            "eigenvector_ok": _eigenvector_trial(pair, ids, delta),
            "duality_ok": duality_ok,
            "monotonicity_ok": monotonicity_ok,
        }
        rows.append(row)

    table = pd.DataFrame(rows, columns=["trial", "dim", "delta"] + LIST_SUITE_CHECKS)
    table["violations"] = (~table[LIST_SUITE_CHECKS].astype(bool)).sum(axis=1)
    logger.info(
        "Property suite: %d trials, %d violations",
        trials,
        int(table["violations"].sum()),
    )
    return table
