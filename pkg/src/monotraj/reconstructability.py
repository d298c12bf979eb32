"""Reconstructability index and degeneracy diagnostics.

Stacking a trajectory's positions at the N observation times into a
3N-vector, the part an order-K temporal polynomial cannot represent is the
residual of projecting onto the column space of the stacked design.  The
reconstructability index is the ratio of that inexpressible component for
the camera path over the one for the target path: large values mean the
camera motion is rich relative to the target's and the solve is well posed,
values near or below 1 predict poor or degenerate reconstruction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import IndeterminateError, InvalidInputError, TimeMismatchError
from .estimator import assemble_system
from .geometry import Observation
from .trajectory import stacked_design

# A residual below this fraction of the stacked norm counts as "exactly
# expressible" when forming the index.
EXPRESSIBLE_TOLERANCE = 1e-12

# detect_degeneracy defaults; scenario-scale dependent, override per use.
CONCURRENT_RESIDUAL_M = 1e-6
PARALLEL_DOT_TOLERANCE = 1e-10
EXPRESSIBLE_RELATIVE_RESIDUAL = 1e-6

FLAG_RAYS_CONCURRENT = "rays_concurrent"
FLAG_RAYS_PARALLEL = "rays_parallel"
FLAG_CAMERA_EXPRESSIBLE = "camera_expressible_at_order"
FLAG_RANK_DEFICIENT = "rank_deficient"


@dataclass(frozen=True)
class StackedTrajectory:
    """Positions at N times stacked time-major into a 3N-vector
    (x_0, y_0, z_0, x_1, ...), matching the stacked design's row order."""

    vector: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=float)
        t = np.asarray(self.times, dtype=float)
        if v.ndim != 1 or v.size % 3 != 0:
            raise InvalidInputError(f"stacked vector length must be divisible by 3, got {v.size}")
        if t.ndim != 1 or 3 * t.size != v.size:
            raise InvalidInputError(
                f"times length {t.size} inconsistent with stacked vector length {v.size}"
            )
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(t))):
            raise InvalidInputError("stacked trajectory entries must be finite")
        v = v.copy()
        v.flags.writeable = False
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "times", t)

    @classmethod
    def from_positions(cls, times, positions) -> "StackedTrajectory":
        p = np.asarray(positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3:
            raise InvalidInputError(f"positions must be N x 3, got shape {p.shape}")
        return cls(p.reshape(-1), np.asarray(times, dtype=float))

    @property
    def positions(self) -> np.ndarray:
        return self.vector.reshape(-1, 3)


@dataclass(frozen=True)
class DegeneracyReport:
    """Diagnostic flags for the classic unsolvable configurations."""

    order: int
    common_point: np.ndarray
    common_point_residual: float
    camera_order_fit: dict[int, float]
    rays_concurrent: bool
    rays_parallel: bool
    camera_expressible_at_order: bool
    rank_deficient: bool

    @property
    def flags(self) -> frozenset[str]:
        out = set()
        if self.rays_concurrent:
            out.add(FLAG_RAYS_CONCURRENT)
        if self.rays_parallel:
            out.add(FLAG_RAYS_PARALLEL)
        if self.camera_expressible_at_order:
            out.add(FLAG_CAMERA_EXPRESSIBLE)
        if self.rank_deficient:
            out.add(FLAG_RANK_DEFICIENT)
        return frozenset(out)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "common_point": [float(x) for x in self.common_point],
            "common_point_residual": self.common_point_residual,
            "camera_order_fit": {str(k): v for k, v in sorted(self.camera_order_fit.items())},
            "rays_concurrent": self.rays_concurrent,
            "rays_parallel": self.rays_parallel,
            "camera_expressible_at_order": self.camera_expressible_at_order,
            "rank_deficient": self.rank_deficient,
        }


def null_space_residual(traj: StackedTrajectory, order: int) -> float:
    """Norm of the stacked component outside the order-K polynomial column
    space, computed by an orthogonal-factorization projection."""
    k = int(order)
    if k < 0:
        raise InvalidInputError("order must be nonnegative")
    times = traj.times
    if np.unique(times).size < k + 1:
        raise InvalidInputError(
            f"need at least {k + 1} distinct times for order {k}, "
            f"got {np.unique(times).size}"
        )
    # Normalizing times changes the basis, not the column space, so the
    # residual is identical and far better conditioned for long windows.
    offset = float(times.min())
    span = float(times.max() - offset)
    u = (times - offset) / (span if span > 0.0 else 1.0)
    theta = stacked_design(u, k)
    beta, *_ = np.linalg.lstsq(theta, traj.vector, rcond=None)
    return float(np.linalg.norm(traj.vector - theta @ beta))


def reconstructability_index(
    camera: StackedTrajectory, target: StackedTrajectory, order: int
) -> float:
    """Ratio of camera to target inexpressible components at the given order.

    Returns +inf when the target is exactly expressible (perfect
    reconstruction); raises IndeterminateError when camera and target both
    are (nothing pins the solution down).
    """
    if camera.times.shape != target.times.shape or not np.array_equal(
        camera.times, target.times
    ):
        bad = _mismatched_time_rows(camera.times, target.times)
        raise TimeMismatchError(
            f"camera and target trajectories must share times; mismatched rows: {bad}"
        )
    cam_resid = null_space_residual(camera, order)
    tgt_resid = null_space_residual(target, order)
    cam_zero = cam_resid <= EXPRESSIBLE_TOLERANCE * np.linalg.norm(camera.vector)
    tgt_zero = tgt_resid <= EXPRESSIBLE_TOLERANCE * np.linalg.norm(target.vector)
    if tgt_zero and cam_zero:
        raise IndeterminateError(
            "camera and target are both expressible at this order; "
            "the system admits no definite solution"
        )
    if tgt_zero:
        return float("inf")
    return cam_resid / tgt_resid


def _mismatched_time_rows(a: np.ndarray, b: np.ndarray, limit: int = 10) -> list[int]:
    if a.shape != b.shape:
        return list(range(min(len(a), len(b)), max(len(a), len(b))))[:limit]
    return [int(i) for i in np.nonzero(a != b)[0][:limit]]


def detect_degeneracy(
    observations: Sequence[Observation],
    order: int,
    *,
    concurrent_residual_m: float = CONCURRENT_RESIDUAL_M,
    parallel_dot_tolerance: float = PARALLEL_DOT_TOLERANCE,
    expressible_relative_residual: float = EXPRESSIBLE_RELATIVE_RESIDUAL,
) -> DegeneracyReport:
    """Diagnose the unsolvable configurations on real observation data.

    (a) all sight-rays through one point: best single-point triangulation has
        mean perpendicular residual below ``concurrent_residual_m``;
    (b) all rays parallel: every pairwise |l_i . l_j| within
        ``parallel_dot_tolerance`` of 1 (the at-infinity case of (a), so it
        implies the concurrent flag);
    (c) camera path expressible at the solve order: relative polynomial fit
        residual of the camera centers below ``expressible_relative_residual``;
    (d) rank deficiency of the assembled system.
    """
    if len(observations) < 2:
        raise InvalidInputError("degeneracy detection needs at least 2 observations")
    k = int(order)
    if k < 0:
        raise InvalidInputError("order must be nonnegative")

    times = np.array([o.time for o in observations])
    centers = np.array([o.camera_center for o in observations])
    rays = np.array([o.ray for o in observations])

    projectors = np.eye(3)[None, :, :] - np.einsum("ni,nj->nij", rays, rays)
    normal = projectors.sum(axis=0)
    rhs = np.einsum("nij,nj->i", projectors, centers)
    point, *_ = np.linalg.lstsq(normal, rhs, rcond=None)
    residuals = np.linalg.norm(
        np.einsum("nij,nj->ni", projectors, centers - point[None, :]), axis=1
    )
    mean_residual = float(residuals.mean())

    dots = np.abs(rays @ rays.T)
    off_diagonal = dots[~np.eye(len(rays), dtype=bool)]
    parallel = bool(np.all(off_diagonal > 1.0 - parallel_dot_tolerance))
    # Parallel rays meet at infinity: no finite triangulation residual can
    # reveal it, so the concurrent flag is forced.
    concurrent = parallel or mean_residual < concurrent_residual_m

    camera = StackedTrajectory.from_positions(times, centers)
    centered = centers - centers.mean(axis=0)
    centered_norm = float(np.linalg.norm(centered))
    n_distinct = np.unique(times).size
    fits: dict[int, float] = {}
    for j in range(k + 1):
        if centered_norm <= 1e-300 or j + 1 >= n_distinct:
            # constant camera, or enough parameters to interpolate exactly
            fits[j] = 0.0
        else:
            fits[j] = null_space_residual(camera, j) / centered_norm
    camera_expressible = fits[k] < expressible_relative_residual

    system = assemble_system(list(observations), k, allow_underdetermined=True)
    rank_deficient = system.design_rank < system.n_columns

    return DegeneracyReport(
        order=k,
        common_point=point,
        common_point_residual=mean_residual,
        camera_order_fit=fits,
        rays_concurrent=concurrent,
        rays_parallel=parallel,
        camera_expressible_at_order=camera_expressible,
        rank_deficient=rank_deficient,
    )
