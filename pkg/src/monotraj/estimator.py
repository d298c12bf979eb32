"""Stacked linear system assembly and the least-squares / ridge solvers.

Each observation i contributes a 3-row block: the residual projector
V_i = I - l_i l_i^T applied to the design block gives the rows of A, and
V_i C_i gives the matching rows of B.  Solving A beta = B in the least
squares sense recovers the polynomial coefficients.  When the system is
ill-conditioned (short windows, near-polynomial camera paths, heavy noise)
the Hoerl-Kennard-Baldwin ridge variant trades a small bias for stability.

Times are affinely mapped to [0, 1] before assembly by default.  That is a
pure reparameterization: the fitted curve and the reported raw-time
coefficients are unchanged, only the conditioning of the power basis
improves.  Pass ``normalize_time=False`` for literal raw-time assembly.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InsufficientDofError,
    InvalidInputError,
    MonotrajError,
    NumericalError,
    RankDeficientError,
    TooFewObservationsError,
)
from .geometry import Observation
from .trajectory import (
    PolynomialTrajectory,
    eval_trajectory,
    min_observations,
    rescale_coefficients,
)

if TYPE_CHECKING:  # pragma: no cover
    from .reconstructability import DegeneracyReport

# Singular values below this fraction of the largest count as zero.
RANK_TOLERANCE = 1e-10

# Order selection prefers the smallest candidate whose ray-error sum is
# within this relative margin of the minimum (the usual simplicity rule:
# extra orders must buy a real improvement, not just absorb noise).  The
# absolute floor keeps exactly-representable data, whose objectives are all
# numerical zeros, from being ranked by garbage bits.
SELECTION_MARGIN_RELATIVE = 0.10
SELECTION_MARGIN_ABSOLUTE = 1e-9

DEFAULT_CANDIDATE_ORDERS = (0, 1, 2, 3)

METHOD_LEAST_SQUARES = "least_squares"
METHOD_RIDGE = "ridge"


@dataclass(frozen=True)
class StackedSystem:
    """The assembled system A beta = B plus the bookkeeping needed to map
    solutions back to raw time and to diagnose conditioning."""

    a_matrix: np.ndarray
    b_vector: np.ndarray
    order: int
    times: np.ndarray
    design_rank: int
    condition_number: float
    time_offset: float
    time_scale: float
    camera_centers: np.ndarray
    rays: np.ndarray

    @property
    def n_observations(self) -> int:
        return len(self.times)

    @property
    def n_columns(self) -> int:
        return 3 * (self.order + 1)


@dataclass(frozen=True)
class SolveReport:
    """Result of one solve: the trajectory plus diagnostics."""

    trajectory: PolynomialTrajectory
    method: str
    ridge_param: float
    objective: float
    condition_number: float
    order_selected: int
    per_time_ray_error: np.ndarray
    residual_norm: float
    paper_literal_ridge: bool = False
    degeneracy: "DegeneracyReport | None" = None
    candidate_objectives: dict[int, float] = field(default_factory=dict)
    skipped_orders: dict[int, str] = field(default_factory=dict)


def validate_observations(observations: Sequence[Observation]) -> None:
    """Dataset-level checks: nonempty, and no two sightings share a time."""
    if len(observations) == 0:
        raise InvalidInputError("need at least one observation")
    times = np.array([o.time for o in observations])
    if np.unique(times).size != times.size:
        raise InvalidInputError("observation times must be distinct")


def assemble_system(
    observations: Sequence[Observation],
    order: int,
    *,
    normalize_time: bool = True,
    allow_underdetermined: bool = False,
) -> StackedSystem:
    """Stack the projected design blocks and right-hand sides.

    Raises TooFewObservationsError when N < ceil(3(K+1)/2) unless
    ``allow_underdetermined`` is set (useful for diagnostics on partial data;
    the solvers will still refuse rank-deficient systems).
    """
    validate_observations(observations)
    k = int(order)
    if k < 0:
        raise InvalidInputError("order must be nonnegative")
    n = len(observations)
    required = min_observations(k)
    if n < required and not allow_underdetermined:
        raise TooFewObservationsError(
            f"order {k} needs at least {required} observations, got {n}",
            required=required,
            got=n,
        )

    times = np.array([o.time for o in observations])
    centers = np.array([o.camera_center for o in observations])
    rays = np.array([o.ray for o in observations])

    if normalize_time:
        offset = float(times.min())
        span = float(times.max() - offset)
        scale = span if span > 0.0 else 1.0
    else:
        offset, scale = 0.0, 1.0
    u = (times - offset) / scale

    projectors = np.eye(3)[None, :, :] - np.einsum("ni,nj->nij", rays, rays)
    powers = u[:, None] ** np.arange(k + 1)
    a = np.einsum("nra,nk->nrak", projectors, powers).reshape(3 * n, 3 * (k + 1))
    b = np.einsum("nra,na->nr", projectors, centers).reshape(3 * n)

    singular = np.linalg.svd(a, compute_uv=False)
    smax = float(singular[0]) if singular.size else 0.0
    rank = int(np.sum(singular > RANK_TOLERANCE * smax)) if smax > 0.0 else 0
    smin = float(singular[-1]) if singular.size else 0.0
    cond = float("inf") if smin == 0.0 else smax / smin

    return StackedSystem(
        a_matrix=a,
        b_vector=b,
        order=k,
        times=times,
        design_rank=rank,
        condition_number=cond,
        time_offset=offset,
        time_scale=scale,
        camera_centers=centers,
        rays=rays,
    )


def _ray_errors(traj: PolynomialTrajectory, times, centers, rays) -> np.ndarray:
    """Per-observation ||lhat - l|| with lhat the direction toward the
    estimated position.  Degenerate if an estimate sits on a camera center."""
    estimates = eval_trajectory(traj, np.asarray(times, dtype=float))
    d = estimates - centers
    dist = np.linalg.norm(d, axis=1)
    if np.any(dist < 1e-9):
        j = int(np.argmin(dist))
        raise DegenerateGeometryError(
            f"estimated position coincides with the camera center at t={times[j]!r}"
        )
    lhat = d / dist[:, None]
    return np.linalg.norm(lhat - rays, axis=1)


def ray_direction_errors(traj: PolynomialTrajectory, observations: Sequence[Observation]) -> np.ndarray:
    """Public wrapper over the sight-ray direction error used for order selection."""
    times = np.array([o.time for o in observations])
    centers = np.array([o.camera_center for o in observations])
    rays = np.array([o.ray for o in observations])
    return _ray_errors(traj, times, centers, rays)


def _make_report(
    system: StackedSystem,
    beta: np.ndarray,
    method: str,
    ridge_param: float,
    residual_norm: float,
    paper_literal: bool = False,
) -> SolveReport:
    coeffs = beta.reshape(3, system.order + 1)
    if system.time_offset != 0.0 or system.time_scale != 1.0:
        coeffs = rescale_coefficients(coeffs, system.time_offset, system.time_scale)
    traj = PolynomialTrajectory(coeffs)
    errors = _ray_errors(traj, system.times, system.camera_centers, system.rays)
    return SolveReport(
        trajectory=traj,
        method=method,
        ridge_param=float(ridge_param),
        objective=float(errors @ errors),
        condition_number=system.condition_number,
        order_selected=system.order,
        per_time_ray_error=errors,
        residual_norm=float(residual_norm),
        paper_literal_ridge=paper_literal,
    )


def _least_squares_beta(system: StackedSystem) -> tuple[np.ndarray, float]:
    if system.design_rank < system.n_columns:
        raise RankDeficientError(
            f"design matrix has rank {system.design_rank} < {system.n_columns}; "
            "the sight-ray geometry does not determine the coefficients",
            rank=system.design_rank,
            full_rank=system.n_columns,
        )
    try:
        beta, *_ = np.linalg.lstsq(system.a_matrix, system.b_vector, rcond=None)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - lapack failure
        raise NumericalError(f"least-squares factorization failed: {exc}") from exc
    residual = float(np.linalg.norm(system.a_matrix @ beta - system.b_vector))
    return beta, residual


def solve_least_squares(system: StackedSystem) -> SolveReport:
    """Minimize ||A beta - B|| by orthogonal factorization (never the
    explicit normal-equation inverse)."""
    beta, residual = _least_squares_beta(system)
    return _make_report(system, beta, METHOD_LEAST_SQUARES, 0.0, residual)


def hkb_ridge_parameter(system: StackedSystem, ls_coeffs) -> float:
    """Closed-form Hoerl-Kennard-Baldwin ridge parameter.

    r = t * d0 / (beta^T (A^T A / N) beta), where t = 3(K+1) is the full
    column rank, d0 = ||B - A beta||^2 / (3N - t) is the residual variance
    estimate of the least-squares solution ``ls_coeffs`` (given in the
    system's own, possibly time-normalized, parameterization), and the Gram
    matrix enters as the per-observation sample covariance A^T A / N.  With
    the raw Gram sum in the denominator the parameter shrinks by a factor N
    and leaves ill-conditioned systems essentially unregularized.
    """
    beta = np.asarray(ls_coeffs, dtype=float).reshape(-1)
    if beta.shape != (system.n_columns,):
        raise InvalidInputError(
            f"ls_coeffs must flatten to length {system.n_columns}, got {beta.shape}"
        )
    t = system.n_columns
    n = len(system.b_vector)
    if n <= t:
        raise InsufficientDofError(
            f"residual variance needs 3N > 3(K+1); got 3N={n}, 3(K+1)={t}"
        )
    fitted = system.a_matrix @ beta
    residual = system.b_vector - fitted
    delta0 = float(residual @ residual) / (n - t)
    energy = float(fitted @ fitted) / system.n_observations
    if energy == 0.0:
        raise DegenerateGeometryError(
            "least-squares solution is identically zero; ridge parameter undefined"
        )
    return t * delta0 / energy


def ridge_solution(
    system: StackedSystem, ridge_param: float, *, paper_literal: bool = False
) -> tuple[np.ndarray, float]:
    """Solve the ridge normal equations (A^T A + r I) beta = A^T B.

    Implemented through the equivalent augmented least-squares problem
    [A; sqrt(r) I] beta = [B; 0], which gives the identical solution without
    squaring the condition number (forming A^T A explicitly loses half the
    digits on ill-conditioned systems, exactly the regime ridge targets).
    ``paper_literal`` flips the regularizer sign to (A^T A - r I) for
    comparison runs; that matrix can be indefinite, so it is solved directly.
    """
    r = float(ridge_param)
    if r < 0.0 or not np.isfinite(r):
        raise InvalidInputError(f"ridge parameter must be finite and >= 0, got {r!r}")
    if paper_literal:
        gram = system.a_matrix.T @ system.a_matrix
        rhs = system.a_matrix.T @ system.b_vector
        try:
            beta = np.linalg.solve(gram - r * np.eye(system.n_columns), rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"subtractive ridge matrix is singular for r={r!r}"
            ) from exc
    elif r == 0.0:
        beta, *_ = np.linalg.lstsq(system.a_matrix, system.b_vector, rcond=None)
    else:
        a_aug = np.vstack([system.a_matrix, np.sqrt(r) * np.eye(system.n_columns)])
        b_aug = np.concatenate([system.b_vector, np.zeros(system.n_columns)])
        beta, *_ = np.linalg.lstsq(a_aug, b_aug, rcond=None)
    residual = float(np.linalg.norm(system.a_matrix @ beta - system.b_vector))
    return beta, residual


def solve_ridge(system: StackedSystem, *, paper_literal: bool = False) -> SolveReport:
    """Ridge solve with the HKB parameter derived from a least-squares pre-solve.

    An exactly consistent system yields r = 0, in which case the ridge
    estimate *is* the least-squares estimate and the report says so.
    """
    beta_ls, _ = _least_squares_beta(system)
    r = hkb_ridge_parameter(system, beta_ls)
    if r == 0.0:
        residual = float(np.linalg.norm(system.a_matrix @ beta_ls - system.b_vector))
        return _make_report(system, beta_ls, METHOD_LEAST_SQUARES, 0.0, residual)
    beta, residual = ridge_solution(system, r, paper_literal=paper_literal)
    return _make_report(system, beta, METHOD_RIDGE, r, residual, paper_literal=paper_literal)


def _solve_with_method(system: StackedSystem, method: str, paper_literal: bool) -> SolveReport:
    if method == METHOD_LEAST_SQUARES:
        return solve_least_squares(system)
    if method == METHOD_RIDGE:
        return solve_ridge(system, paper_literal=paper_literal)
    raise InvalidInputError(f"unknown method {method!r}")


def select_order(
    observations: Sequence[Observation],
    candidate_orders: Sequence[int] = DEFAULT_CANDIDATE_ORDERS,
    method: str = METHOD_RIDGE,
    *,
    normalize_time: bool = True,
    paper_literal: bool = False,
) -> SolveReport:
    """Solve at each candidate order and keep the one whose reconstructed
    sight-rays deviate least from the observed ones.

    Candidates are ranked by the ray-error sum sum_j ||lhat_j - l_j||; the
    winner is the smallest order within SELECTION_MARGIN_RELATIVE of the
    minimum (below SELECTION_MARGIN_ABSOLUTE everything counts as an exact
    fit and the smallest such order wins).  Candidates with too few
    observations are skipped; candidates whose solve fails (rank deficiency,
    coincident camera/estimate) are disqualified.  The returned report's
    ``candidate_objectives`` holds the ranking sums; its ``objective`` field
    stays the squared sum, as in every other report.
    """
    candidates = sorted({int(k) for k in candidate_orders})
    if not candidates:
        raise InvalidInputError("candidate order set must be nonempty")
    if candidates[0] < 0:
        raise InvalidInputError("candidate orders must be nonnegative")

    n = len(observations)
    reports: dict[int, SolveReport] = {}
    objectives: dict[int, float] = {}
    skipped: dict[int, str] = {}
    for k in candidates:
        if n < min_observations(k):
            skipped[k] = "too-few-observations"
            continue
        try:
            system = assemble_system(observations, k, normalize_time=normalize_time)
            report = _solve_with_method(system, method, paper_literal)
        except MonotrajError as exc:
            skipped[k] = exc.code
            continue
        reports[k] = report
        objectives[k] = float(np.sum(report.per_time_ray_error))

    if not reports:
        smallest = candidates[0]
        raise TooFewObservationsError(
            f"no candidate order is solvable with {n} observations "
            f"(smallest candidate {smallest} needs {min_observations(smallest)}); "
            f"skipped: {skipped}",
            required=min_observations(smallest),
            got=n,
        )

    best = min(objectives.values())
    margin = max(SELECTION_MARGIN_RELATIVE * best, SELECTION_MARGIN_ABSOLUTE)
    winner = min(k for k, obj in objectives.items() if obj <= best + margin)
    return dataclasses.replace(
        reports[winner], candidate_objectives=objectives, skipped_orders=skipped
    )
