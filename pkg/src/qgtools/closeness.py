"""
Scales of Hilbert spaces for finite element systems, weighted operator norms, the
measurement of δ-closeness for a pair of systems with identification maps, and numeric
checks of the estimates that δ-closeness implies.
"""

import json
import math
import logging

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence
from warnings import warn

import numpy as np
import pandas as pd
import scipy.linalg as la
import scipy.sparse as sp
import xarray as xr
from scipy.spatial.distance import cdist

from .identification import IdentificationSet, build_identification
from .manifold import EmbeddedGraph, assemble_neumann, build_thin_mesh
from .quantum import FemSystem, assemble_kirchhoff
from ._utils import BOUND_SLACK, DENSE_LIMIT, cluster_eigenvalues

logger = logging.getLogger(__name__)

# eigenvalues of a spectral interval must keep this distance from its endpoints
INTERVAL_MARGIN = 1e-6


def _dense(A) -> np.ndarray:
    return np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)


class ScaledSpace:
    """The scale ℋ_k = dom (H+1)^{k/2} of a system (K, M), realised through the full
    M-orthonormal eigendecomposition: ‖u‖_k = ‖diag((1+λ)^{k/2}) Vᵀ M u‖ for any
    real k.

    :param system: Stiffness/mass pair
    :type system: FemSystem
    :param dense_limit: Largest dimension decomposed densely, defaults to DENSE_LIMIT
    :type dense_limit: int
    """

    def __init__(self, system: FemSystem, dense_limit: int = DENSE_LIMIT):
        self.system = system
        lam, V = system.decomposition(dense_limit)
        self.eigenvalues = np.asarray(lam)
        self.V = np.asarray(V)

    @classmethod
    def from_matrices(cls, stiffness, mass, **kwargs) -> "ScaledSpace":
        return cls(FemSystem(stiffness, mass, h=0.0), **kwargs)

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def mass(self):
        return self.system.mass

    @property
    def stiffness(self):
        return self.system.stiffness

    @cached_property
    def _VtM(self) -> np.ndarray:
        return np.asarray(self.mass @ self.V).T

    def coefficients(self, u) -> np.ndarray:
        return self._VtM @ np.asarray(u)

    def weights(self, k: float) -> np.ndarray:
        return (1.0 + np.clip(self.eigenvalues, 0.0, None)) ** (k / 2)

    def norm(self, u, k: float = 0.0) -> float:
        return float(np.linalg.norm(self.weights(k) * self.coefficients(u)))

    def function(self, phi: Callable) -> np.ndarray:
        """φ(H) = V diag(φ(λ)) Vᵀ M as a dense matrix."""

        return self.V @ (np.asarray(phi(self.eigenvalues))[:, None] * self._VtM)

    def resolvent(self, power: int = 1) -> np.ndarray:
        return self.function(lambda lam: (lam + 1.0) ** (-power))

    def in_interval(self, interval: Sequence, margin: float = INTERVAL_MARGIN):
        """Boolean mask of eigenvalues inside the open `interval`. Raises ValueError
        when an eigenvalue lies within `margin` of an endpoint."""

        lo, hi = interval
        lam = self.eigenvalues
        close = np.minimum(np.abs(lam - lo), np.abs(lam - hi)) < margin
        if np.any(close):
            raise ValueError(
                f"Eigenvalue {lam[close][0]:.6g} lies within {margin:g} of the "
                f"interval ({lo:g}, {hi:g}); move the endpoints into a spectral gap"
            )
        return (lam > lo) & (lam < hi)

    def indicator(self, interval: Sequence, margin: float = INTERVAL_MARGIN):
        mask = self.in_interval(interval, margin).astype(float)
        return self.V @ (mask[:, None] * self._VtM)


@dataclass(frozen=True)
class SpacePair:
    """The unperturbed space (graph side, H) and the perturbed one (manifold side,
    H̃)."""

    source: ScaledSpace
    target: ScaledSpace

    @classmethod
    def from_systems(
        cls, source: FemSystem, target: FemSystem, **kwargs
    ) -> "SpacePair":
        return cls(ScaledSpace(source, **kwargs), ScaledSpace(target, **kwargs))


def op_norm(
    A,
    source: ScaledSpace,
    target: ScaledSpace,
    k_source: float = 0.0,
    k_target: float = 0.0,
) -> float:
    """‖A‖_{k_source → k_target} = sup ‖Au‖_{k_target} / ‖u‖_{k_source}, the largest
    singular value of diag((1+λ̃)^{k_target/2}) Ṽᵀ M̃ A V diag((1+λ)^{-k_source/2}).

    :param A: Matrix of shape (target.dim, source.dim)
    :param source: Domain scale
    :type source: ScaledSpace
    :param target: Range scale
    :type target: ScaledSpace
    :param k_source: Order on the domain, defaults to 0
    :type k_source: float
    :param k_target: Order on the range (negative for dual norms), defaults to 0
    :type k_target: float

    :returns: The weighted operator norm
    :rtype: float
    """

    A = _dense(A)
    if A.shape != (target.dim, source.dim):
        raise ValueError(
            f"Operator of shape {A.shape} does not map a {source.dim}-dim space to a "
            f"{target.dim}-dim space"
        )
    X = target._VtM @ A @ source.V
    X = target.weights(k_target)[:, None] * X * source.weights(-k_source)[None, :]
    return float(la.norm(X, 2))


def form_norm(
    B, source: ScaledSpace, target: ScaledSpace, k_source: float, k_target: float
) -> float:
    """Norm of the sesquilinear form b(u, f) = uᵀ B f with respect to ‖f‖_{k_source}
    and ‖u‖_{k_target}."""

    B = _dense(B)
    if B.shape != (target.dim, source.dim):
        raise ValueError(
            f"Form of shape {B.shape} does not pair a {target.dim}-dim space with a "
            f"{source.dim}-dim space"
        )
    X = target.V.T @ B @ source.V
    X = target.weights(-k_target)[:, None] * X * source.weights(-k_source)[None, :]
    return float(la.norm(X, 2))


def adjoint(A, source: ScaledSpace, target: ScaledSpace) -> np.ndarray:
    """A* = M⁻¹ Aᵀ M̃, the adjoint of A: source → target in the mass inner products."""

    return source.V @ (source.V.T @ (_dense(A).T @ _dense(target.mass)))


def _maps(ids: IdentificationSet) -> tuple:
    return _dense(ids.J), _dense(ids.J1), _dense(ids.Jp), _dense(ids.J1p)


@dataclass(frozen=True)
class DeltaReport:
    """Measured defects of the six closeness conditions and the norms of J, J′. `checks`
    maps each estimate implied by closeness to whether it held at the measured δ (see
    `verify_closeness`); it is empty when verification was skipped."""

    delta_scale: float
    delta_scale_p: float
    delta_adj: float
    delta_comm: float
    delta_inv: float
    delta_inv_p: float
    norm_J: float
    norm_Jp: float
    order: int = 1
    checks: dict = field(default_factory=dict)

    @property
    def delta(self) -> float:
        return max(
            self.delta_scale,
            self.delta_scale_p,
            self.delta_adj,
            self.delta_comm,
            self.delta_inv,
            self.delta_inv_p,
        )

    @property
    def m(self) -> int:
        return max(0, self.order - 2)

    @property
    def bounded_ok(self) -> bool:
        return self.norm_J <= 2 and self.norm_Jp <= 2

    @property
    def verified(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            delta=self.delta,
            m=self.m,
            bounded_ok=self.bounded_ok,
            verified=self.verified,
        )
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def measure_closeness(
    pair: SpacePair,
    ids: IdentificationSet,
    k: Optional[int] = None,
    verify: bool = True,
    seed: int = 0,
) -> DeltaReport:
    """Evaluate each closeness condition as an exact weighted norm of its defect:

    - ‖J - J₁‖_{1→0} and ‖J′ - J₁′‖_{1→0};
    - the form defect M̃J - J′ᵀM in the (0, 0) norm;
    - the form defect K̃J₁ - J₁′ᵀK in the (k, 1) norm;
    - ‖I - J′J‖_{1→0} and ‖I - JJ′‖_{1→0};
    - ‖J‖_{0→0} and ‖J′‖_{0→0}.

    With `verify`, the estimates that follow from closeness are then checked at the
    measured δ and stored in `DeltaReport.checks`.

    :param pair: Graph and manifold scales
    :type pair: SpacePair
    :param ids: Identification maps
    :type ids: IdentificationSet
    :param k: Order of closeness, defaults to `ids.order`
    :type k: int, optional
    :param verify: Run `verify_closeness` on the result, defaults to True
    :type verify: bool
    :param seed: Seed passed to `verify_closeness`, defaults to 0
    :type seed: int

    :returns: The measured defects
    :rtype: DeltaReport
    """

    k = ids.order if k is None else int(k)
    src, tgt = pair.source, pair.target
    J, J1, Jp, J1p = _maps(ids)
    M, Mt = _dense(src.mass), _dense(tgt.mass)
    K, Kt = _dense(src.stiffness), _dense(tgt.stiffness)

    report = DeltaReport(
        delta_scale=op_norm(J - J1, src, tgt, 1, 0),
        delta_scale_p=op_norm(Jp - J1p, tgt, src, 1, 0),
        delta_adj=form_norm(Mt @ J - Jp.T @ M, src, tgt, 0, 0),
        delta_comm=form_norm(Kt @ J1 - J1p.T @ K, src, tgt, k, 1),
        delta_inv=op_norm(np.eye(src.dim) - Jp @ J, src, src, 1, 0),
        delta_inv_p=op_norm(np.eye(tgt.dim) - J @ Jp, tgt, tgt, 1, 0),
        norm_J=op_norm(J, src, tgt, 0, 0),
        norm_Jp=op_norm(Jp, tgt, src, 0, 0),
        order=k,
    )
    if verify:
        checks = verify_closeness(pair, ids, report.delta, seed=seed)
        report = replace(report, checks=checks)
        failed = [name for name, ok in report.checks.items() if not ok]
        if failed:
            logger.warning("Estimates not met at delta=%.4g: %s", report.delta, failed)
    logger.info("Measured delta = %.6g", report.delta)
    if not report.bounded_ok:
        warn(
            f"Identification maps exceed norm 2: |J|={report.norm_J:.3g}, "
            f"|J'|={report.norm_Jp:.3g}"
        )
    return report


def _check(measured: float, bound: float) -> bool:
    return bool(measured <= bound + BOUND_SLACK)


def verify_resolvent(
    pair: SpacePair, ids: IdentificationSet, delta: float, powers: int = 3
) -> pd.DataFrame:
    """‖R̃^j J - J R^j‖_{m→0} against 4jδ for j = 1..powers.

    :returns: Table with columns `j`, `measured`, `bound`, `passed`
    :rtype: pd.DataFrame
    """

    m = max(0, ids.order - 2)
    J = _dense(ids.J)
    rows = []
    for j in range(1, powers + 1):
        D = pair.target.resolvent(j) @ J - J @ pair.source.resolvent(j)
        measured = op_norm(D, pair.source, pair.target, m, 0)
        rows.append((j, measured, 4 * j * delta, _check(measured, 4 * j * delta)))
    return pd.DataFrame(rows, columns=["j", "measured", "bound", "passed"])


def verify_resolvent_better(
    pair: SpacePair, ids: IdentificationSet, delta: float
) -> dict:
    """‖R̃ J₁′* - J₁ R‖_{-1→1} against 4δ, with J₁′* = M̃⁻¹ J₁′ᵀ M the adjoint of
    J₁′."""

    J1p_star = adjoint(ids.J1p, pair.target, pair.source)
    D = pair.target.resolvent() @ J1p_star - _dense(ids.J1) @ pair.source.resolvent()
    measured = op_norm(D, pair.source, pair.target, -1, 1)
    bound = 4 * delta
    return {"measured": measured, "bound": bound, "passed": _check(measured, bound)}


def quasi_isometry_gap(
    pair: SpacePair,
    ids: IdentificationSet,
    delta: float,
    n_samples: int = 20,
    seed: int = 0,
) -> pd.DataFrame:
    """Check ‖f‖ - √(3δ)‖f‖₁ <= ‖Jf‖ <= ‖f‖ + √(3δ)‖f‖₁ on the lowest eigenvectors and
    on random vectors with ‖f‖₁ = 1, and the same for J′ on the manifold side.

    :returns: One row per sampled vector with columns `map`, `norm0`, `norm1`,
        `image_norm`, `lower`, `upper`, `passed`
    :rtype: pd.DataFrame
    """

    rng = np.random.default_rng(seed)
    dp = math.sqrt(3 * max(delta, 0.0))
    rows = []
    for name, A, space, image in (
        ("J", _dense(ids.J), pair.source, pair.target),
        ("Jp", _dense(ids.Jp), pair.target, pair.source),
    ):
        n_eig = min(space.dim, 5)
        samples = [space.V[:, i] for i in range(n_eig)]
        for _ in range(n_samples):
            c = rng.normal(size=space.dim)
            c /= np.linalg.norm(c)
            samples.append(space.V @ (space.weights(-1) * c))
        for f in samples:
            n0, n1 = space.norm(f, 0), space.norm(f, 1)
            nJ = image.norm(A @ f, 0)
            lo, hi = n0 - dp * n1, n0 + dp * n1
            ok = lo - BOUND_SLACK <= nJ <= hi + BOUND_SLACK
            rows.append((name, n0, n1, nJ, lo, hi, ok))
    return pd.DataFrame(
        rows,
        columns=["map", "norm0", "norm1", "image_norm", "lower", "upper", "passed"],
    )


def functional_calculus_gap(
    pair: SpacePair, ids: IdentificationSet, coefficients: Sequence, delta: float
) -> dict:
    """For p(λ) = Σ_j a_j (λ+1)^{-j}, compare ‖p(H̃)J - Jp(H)‖_{m→0} with
    Σ_j |a_j| 4jδ."""

    a = np.asarray(coefficients, dtype=float)

    def p(lam):
        return sum(a_j * (lam + 1.0) ** (-j) for j, a_j in enumerate(a))

    m = max(0, ids.order - 2)
    J = _dense(ids.J)
    D = pair.target.function(p) @ J - J @ pair.source.function(p)
    measured = op_norm(D, pair.source, pair.target, m, 0)
    bound = float(sum(abs(a_j) * 4 * j * delta for j, a_j in enumerate(a)))
    return {"measured": measured, "bound": bound, "passed": _check(measured, bound)}


def indicator_gap(
    pair: SpacePair,
    ids: IdentificationSet,
    interval: Sequence,
    margin: float = INTERVAL_MARGIN,
) -> float:
    """η = ‖𝟙_I(H̃)J - J𝟙_I(H)‖_{m→0} for an interval whose endpoints avoid both
    spectra by `margin`."""

    m = max(0, ids.order - 2)
    J = _dense(ids.J)
    D = pair.target.indicator(interval, margin) @ J - J @ pair.source.indicator(
        interval, margin
    )
    return op_norm(D, pair.source, pair.target, m, 0)


def projection_check(
    pair: SpacePair,
    ids: IdentificationSet,
    interval: Sequence,
    margin: float = INTERVAL_MARGIN,
) -> dict:
    """Dimensions of the spectral projections P = 𝟙_I(H), P̃ = 𝟙_I(H̃) and the smallest
    ratio ‖P̃Jf‖/‖f‖ over f in ran P. The ratio is only expected to exceed 1/2 for
    small δ, so `passed` refers to the equality of dimensions alone.

    :returns: Dict with `dim_p`, `dim_pt`, `min_ratio`, `lower_bound_ok`, `passed`
    :rtype: dict
    """

    in_src = pair.source.in_interval(interval, margin)
    in_tgt = pair.target.in_interval(interval, margin)
    dim_p, dim_pt = int(in_src.sum()), int(in_tgt.sum())

    if dim_p == 0:
        ratio = float("nan")
    elif dim_pt < dim_p:
        ratio = 0.0
    else:
        X = pair.target._VtM[in_tgt] @ _dense(ids.J) @ pair.source.V[:, in_src]
        ratio = float(la.svdvals(X).min())

    return {
        "dim_p": dim_p,
        "dim_pt": dim_pt,
        "min_ratio": ratio,
        "lower_bound_ok": bool(ratio >= 0.5) if dim_p else True,
        "passed": dim_p == dim_pt,
    }


def eigenvector_closeness(
    pair: SpacePair,
    ids: IdentificationSet,
    interval: Sequence,
    delta: float,
    eta: Optional[float] = None,
    margin: float = INTERVAL_MARGIN,
) -> dict:
    """Distance between Jφ and the eigenvector φ̃ = P̃Jφ / ⟨P̃Jφ, Jφ⟩ of H̃, for the
    normalised eigenvector φ of the single eigenvalue λ of H inside `interval`.

    The bound is reported in two forms: `eta1_stated` = 17η + 3δ, and `eta1` =
    17η + 24δ(1+λ), which keeps the ‖φ‖₁ factors and is used for `passed`. The
    companion estimate ‖J′φ̃ - φ‖ <= 2η₁ + δ(1+λ) is checked as well. Both are only
    asserted when ⟨P̃Jφ, Jφ⟩ >= 1/4.

    :param eta: ‖𝟙_I(H̃)J - J𝟙_I(H)‖_{m→0}, measured when None
    :type eta: float, optional

    :returns: Dict with `eigenvalue`, `overlap`, `distance`, `distance_p`, `eta`,
        `eta1_stated`, `eta1`, `eta2`, `valid`, `passed`
    :rtype: dict
    """

    src, tgt = pair.source, pair.target
    mask = src.in_interval(interval, margin)
    if mask.sum() != 1:
        raise ValueError(
            f"Interval {tuple(interval)} contains {int(mask.sum())} eigenvalues of H; "
            "a non-simple or missing eigenvalue has no eigenvector estimate"
        )
    i = int(np.flatnonzero(mask)[0])
    lam = float(src.eigenvalues[i])
    phi = src.V[:, i]

    if eta is None:
        eta = indicator_gap(pair, ids, interval, margin)
    m = max(0, ids.order - 2)
    eta_phi = eta * (1 + max(lam, 0.0)) ** (m / 2)

    J, Jp = _dense(ids.J), _dense(ids.Jp)
    Jphi = J @ phi
    in_tgt = tgt.in_interval(interval, margin)
    c = tgt._VtM[in_tgt] @ Jphi
    overlap = float(c @ c)
    valid = overlap >= 0.25
    if not valid:
        warn(f"<P~ J phi, J phi> = {overlap:.3g} < 1/4; eigenvector bound not asserted")

    if overlap > 0:
        phi_t = tgt.V[:, in_tgt] @ c / overlap
        distance = tgt.norm(Jphi - phi_t)
        distance_p = src.norm(Jp @ phi_t - phi)
    else:
        distance = distance_p = float("nan")

    eta1 = 17 * eta_phi + 24 * delta * (1 + lam)
    eta2 = 2 * eta1 + delta * (1 + lam)
    return {
        "eigenvalue": lam,
        "overlap": overlap,
        "distance": distance,
        "distance_p": distance_p,
        "eta": eta,
        "eta1_stated": 17 * eta_phi + 3 * delta,
        "eta1": eta1,
        "eta2": eta2,
        "valid": valid,
        "passed": (not valid) or (_check(distance, eta1) and _check(distance_p, eta2)),
    }


def other_estimate_check(
    pair: SpacePair, ids: IdentificationSet, delta: float
) -> pd.DataFrame:
    """Estimates derived from closeness for φ(λ) = (λ+1)⁻¹, with η the measured
    ‖φ(H̃)J - Jφ(H)‖_{m→0} and C = 1:

    - ‖φ(H)J′ - J′φ(H̃)‖_{0→-m} <= 2δ + η;
    - ‖φ(H) - J′φ(H̃)J‖_{m→0} <= δ + 2η;
    - ‖φ(H̃) - Jφ(H)J′‖_{0→0} <= 5δ + 2η, for m = 0 only.

    :returns: Table with columns `estimate`, `measured`, `bound`, `passed`
    :rtype: pd.DataFrame
    """

    src, tgt = pair.source, pair.target
    m = max(0, ids.order - 2)
    J, Jp = _dense(ids.J), _dense(ids.Jp)
    R, Rt = src.resolvent(), tgt.resolvent()
    eta = op_norm(Rt @ J - J @ R, src, tgt, m, 0)

    rows = []
    dual = op_norm(R @ Jp - Jp @ Rt, tgt, src, 0, -m)
    rows.append(("dual", dual, 2 * delta + eta))
    sandwich = op_norm(R - Jp @ Rt @ J, src, src, m, 0)
    rows.append(("sandwich", sandwich, delta + 2 * eta))
    if m == 0:
        sandwich_t = op_norm(Rt - J @ R @ Jp, tgt, tgt, 0, 0)
        rows.append(("sandwich_target", sandwich_t, 5 * delta + 2 * eta))

    table = pd.DataFrame(rows, columns=["estimate", "measured", "bound"])
    table["passed"] = [_check(a, b) for a, b in zip(table["measured"], table["bound"])]
    table.attrs["eta"] = eta
    return table


def hausdorff(A: Sequence, B: Sequence) -> float:
    """d(A, B) = max(sup_a d(a, B), sup_b d(b, A)) for finite sets of reals."""

    A = np.asarray(A, dtype=float).reshape(-1, 1)
    B = np.asarray(B, dtype=float).reshape(-1, 1)
    if A.size == 0 or B.size == 0:
        raise ValueError("Hausdorff distance needs two non-empty sets")
    D = cdist(A, B)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def hausdorff_resolvent(A: Sequence, B: Sequence) -> float:
    """d̄(A, B) = d((A+1)⁻¹, (B+1)⁻¹)."""

    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return hausdorff(1 / (A + 1), 1 / (B + 1))


def minmax_bound(eigenvalue: float, delta: float) -> float:
    """Eigenvalue-difference bound obtained from the min-max principle,

    ((λ+2 + q)² / (1 - δ(λ+1+q))) δ  with  q = (λ+2)²δ / (1 - δ(λ+1)).

    :raises ValueError: when a denominator is not positive, the bound being vacuous
    """

    lam = float(eigenvalue)
    first = 1 - delta * (lam + 1)
    if first <= 0:
        raise ValueError(
            f"delta={delta:g} too large for eigenvalue {lam:g}: 1 - delta(lambda+1) = "
            f"{first:.3g} <= 0, the bound is vacuous"
        )
    q = (lam + 2) ** 2 * delta / first
    second = 1 - delta * (lam + 1 + q)
    if second <= 0:
        raise ValueError(
            f"delta={delta:g} too large for eigenvalue {lam:g}: denominator "
            f"{second:.3g} <= 0, the bound is vacuous"
        )
    return (lam + 2 + q) ** 2 / second * delta


def _min_relative_eigenvalue(X, K, M) -> float:
    X = 0.5 * (X + X.T)
    return float(la.eigh(X, K + M, eigvals_only=True, subset_by_index=[0, 0])[0])


def minmax_hypotheses(pair: SpacePair, ids: IdentificationSet, delta: float) -> dict:
    """Smallest eigenvalues, relative to K + M, of the four operators that must be
    non-negative for `minmax_bound` to apply:

    K - J₁ᵀK̃J₁ + δ(K+M), K̃ - J₁′ᵀKJ₁′ + δ(K̃+M̃), J₁ᵀM̃J₁ - M + δ(K+M) and
    J₁′ᵀMJ₁′ - M̃ + δ(K̃+M̃).
    """

    K, M = _dense(pair.source.stiffness), _dense(pair.source.mass)
    Kt, Mt = _dense(pair.target.stiffness), _dense(pair.target.mass)
    _, J1, _, J1p = _maps(ids)

    values = {
        "quad": _min_relative_eigenvalue(K - J1.T @ Kt @ J1 + delta * (K + M), K, M),
        "quad_p": _min_relative_eigenvalue(
            Kt - J1p.T @ K @ J1p + delta * (Kt + Mt), Kt, Mt
        ),
        "norm": _min_relative_eigenvalue(J1.T @ Mt @ J1 - M + delta * (K + M), K, M),
        "norm_p": _min_relative_eigenvalue(
            J1p.T @ M @ J1p - Mt + delta * (Kt + Mt), Kt, Mt
        ),
    }
    values["passed"] = all(v >= -BOUND_SLACK for v in values.values())
    return values


def verify_closeness(
    pair: SpacePair, ids: IdentificationSet, delta: float, seed: int = 0
) -> dict:
    """Pass/fail of each estimate implied by δ-closeness, evaluated at `delta`:
    `resolvent` (powers 1 to 3), `resolvent_better`, `quasi_isometry`,
    `other_estimate` and `minmax_hypotheses`. `seed` draws the random test vectors of
    `quasi_isometry_gap`.

    :returns: Dict of estimate name to bool
    :rtype: dict
    """

    return {
        "resolvent": bool(verify_resolvent(pair, ids, delta)["passed"].all()),
        "resolvent_better": verify_resolvent_better(pair, ids, delta)["passed"],
        "quasi_isometry": bool(
            quasi_isometry_gap(pair, ids, delta, seed=seed)["passed"].all()
        ),
        "other_estimate": bool(other_estimate_check(pair, ids, delta)["passed"].all()),
        "minmax_hypotheses": minmax_hypotheses(pair, ids, delta)["passed"],
    }


def eigenvalue_convergence(
    pair: SpacePair, ids: IdentificationSet, delta: float, n: int
) -> pd.DataFrame:
    """|λ_k - λ̃_k| for the `n` lowest eigenvalues against `minmax_bound`. The bound is
    NaN where it is vacuous; whether its hypotheses hold is stored in
    `table.attrs["hypotheses"]`.

    :returns: Table with columns `k`, `eigenvalue`, `eigenvalue_target`, `difference`,
        `bound`, `within`
    :rtype: pd.DataFrame
    """

    n = min(n, pair.source.dim, pair.target.dim)
    lam, lam_t = pair.source.eigenvalues[:n], pair.target.eigenvalues[:n]
    bounds = []
    for value in lam:
        try:
            bounds.append(minmax_bound(value, delta))
        except ValueError:
            bounds.append(float("nan"))
    if np.any(np.isnan(bounds)):
        warn(f"Min-max bound is vacuous for some eigenvalues at delta={delta:g}")

    table = pd.DataFrame(
        {
            "k": np.arange(n),
            "eigenvalue": lam,
            "eigenvalue_target": lam_t,
            "difference": np.abs(lam - lam_t),
            "bound": bounds,
        }
    )
    table["within"] = table["difference"] <= table["bound"] + BOUND_SLACK
    table.attrs["hypotheses"] = minmax_hypotheses(pair, ids, delta)
    return table


def _isolated(values: np.ndarray, gap: float) -> np.ndarray:
    points = np.asarray([v for v, _ in cluster_eigenvalues(values)])
    if points.size < 2:
        return points
    d = np.diff(points)
    left = np.concatenate([[np.inf], d])
    right = np.concatenate([d, [np.inf]])
    return points[np.minimum(left, right) >= gap]


def spectral_distance_report(
    pair: SpacePair, lambda_max: float, gap: float = 0.5
) -> dict:
    """d̄ between the spectra of H and H̃ restricted to [0, lambda_max], for the whole
    computed spectrum and for its isolated part (clusters at least `gap` away from
    their neighbours).

    :returns: Dict with keys `all` and `discrete`; NaN where a restricted set is empty
    :rtype: dict
    """

    src = pair.source.eigenvalues[pair.source.eigenvalues <= lambda_max]
    tgt = pair.target.eigenvalues[pair.target.eigenvalues <= lambda_max]
    result = {}
    for name, a, b in (
        ("all", src, tgt),
        ("discrete", _isolated(src, gap), _isolated(tgt, gap)),
    ):
        result[name] = hausdorff_resolvent(a, b) if a.size and b.size else float("nan")
    return result


def _sweep_entry(
    eg: EmbeddedGraph,
    eps: float,
    h_rel: int,
    num_eigs: int,
    lambda_max: float,
    l0: Optional[float],
    simple_index: Optional[int],
    seed: int,
) -> dict:
    mesh = build_thin_mesh(eg, eps, h_rel=h_rel, l0=l0)
    manifold_sys = assemble_neumann(mesh)
    graph_sys = assemble_kirchhoff(eg.weighted_graph(), mesh.h, cells=mesh.edge_cells)
    ids = build_identification(graph_sys, mesh, manifold_sys, eps=eps)
    pair = SpacePair.from_systems(graph_sys, manifold_sys)

    report = measure_closeness(pair, ids, seed=seed)
    resolvent = verify_resolvent(pair, ids, report.delta, powers=1)
    entry = report.to_dict()
    entry["resolvent_defect"] = float(resolvent["measured"].iloc[0])
    entry["bound_4delta"] = 4 * report.delta
    entry["verified"] = float(report.verified)
    entry["d_spectra"] = spectral_distance_report(pair, lambda_max)["all"]
    entry["graph_eigenvalue"] = pair.source.eigenvalues[:num_eigs]
    entry["manifold_eigenvalue"] = pair.target.eigenvalues[:num_eigs]

    entry["eigvec_distance"] = float("nan")
    if simple_index is not None:
        lam = pair.source.eigenvalues
        lo = 0.5 * (lam[simple_index - 1] + lam[simple_index]) if simple_index else -0.5
        hi = 0.5 * (lam[simple_index] + lam[simple_index + 1])
        try:
            entry["eigvec_distance"] = eigenvector_closeness(
                pair, ids, (lo, hi), report.delta
            )["distance"]
        except ValueError as err:
            warn(f"Eigenvector closeness skipped at eps={eps:g}: {err}")

    logger.info(
        "eps=%g: delta=%.4g, resolvent defect %.4g",
        eps,
        report.delta,
        entry["resolvent_defect"],
    )
    return entry


def run_sweep(
    eg: EmbeddedGraph,
    eps_values: Sequence[float],
    h_rel: int = 6,
    num_eigs: int = 6,
    lambda_max: float = 30.0,
    l0: Optional[float] = None,
    simple_index: Optional[int] = None,
    max_workers: int = 1,
    seed: int = 0,
) -> xr.Dataset:
    """Build the graph and thin-domain systems for each ε, measure their closeness and
    collect the results.

    :param eg: Straight-edged embedding
    :type eg: EmbeddedGraph
    :param eps_values: Strictly decreasing ε values
    :type eps_values: Sequence[float]
    :param h_rel: Cells across each strip, defaults to 6
    :type h_rel: int
    :param num_eigs: Eigenvalues compared per ε, defaults to 6
    :type num_eigs: int
    :param lambda_max: Spectral window for the Hausdorff distance, defaults to 30
    :type lambda_max: float
    :param l0: Vertex-neighbourhood length, defaults to the shortest edge
    :type l0: float, optional
    :param simple_index: Index of a simple graph eigenvalue whose eigenvector
        closeness is measured, defaults to None
    :type simple_index: int, optional
    :param max_workers: Threads used for independent ε values, defaults to 1
    :type max_workers: int
    :param seed: Seed for the sampled vectors of the verification, defaults to 0
    :type seed: int

    :returns: Dataset over `eps` (and `k` for eigenvalues) with the closeness defects,
        `delta`, `resolvent_defect`, `bound_4delta`, `d_spectra`, `eigvec_distance`,
        `verified` (1 when every estimate of `verify_closeness` held),
        `graph_eigenvalue`, `manifold_eigenvalue` and `eigenvalue_error`
    :rtype: xr.Dataset
    """

    eps_values = [float(e) for e in eps_values]
    if not eps_values:
        raise ValueError("No eps values given")
    if any(e <= 0 for e in eps_values):
        raise ValueError(f"eps values must be positive, got {eps_values}")
    if any(b >= a for a, b in zip(eps_values[:-1], eps_values[1:])):
        raise ValueError(f"eps values must be strictly decreasing, got {eps_values}")

    def task(eps):
        return _sweep_entry(
            eg, eps, h_rel, num_eigs, lambda_max, l0, simple_index, seed
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        entries = list(pool.map(task, eps_values))

    scalars = [
        "delta_scale",
        "delta_scale_p",
        "delta_adj",
        "delta_comm",
        "delta_inv",
        "delta_inv_p",
        "delta",
        "norm_J",
        "norm_Jp",
        "resolvent_defect",
        "bound_4delta",
        "d_spectra",
        "eigvec_distance",
        "verified",
    ]
    data_vars = {
        name: ("eps", np.asarray([entry[name] for entry in entries], dtype=float))
        for name in scalars
    }
    n = min(
        min(len(entry["graph_eigenvalue"]), len(entry["manifold_eigenvalue"]))
        for entry in entries
    )
    graph_eigs = np.stack([entry["graph_eigenvalue"][:n] for entry in entries])
    manifold_eigs = np.stack([entry["manifold_eigenvalue"][:n] for entry in entries])
    data_vars["graph_eigenvalue"] = (("eps", "k"), graph_eigs)
    data_vars["manifold_eigenvalue"] = (("eps", "k"), manifold_eigs)
    data_vars["eigenvalue_error"] = (("eps", "k"), np.abs(manifold_eigs - graph_eigs))

    return xr.Dataset(
        data_vars=data_vars,
        coords={"eps": eps_values, "k": np.arange(n)},
        attrs={"h_rel": h_rel, "lambda_max": lambda_max},
    )
