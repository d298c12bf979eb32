"""Sight-ray geometry for monocular observations with known camera poses.

A camera at center C looking along a unit direction l constrains the target
position P through the perpendicular residual (I - l l^T)(C - P).  The
projector I - l l^T removes the component along the ray, so its norm is the
point-to-ray distance.  Everything downstream (system assembly, solvers,
degeneracy checks) is built from these residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, InvalidInputError

# Rays whose norm deviates from 1 by less than this are renormalized
# silently; anything further off is rejected as malformed input.
RAY_NORM_TOLERANCE = 1e-9

_ROTATION_TOL = 1e-10


def _as_vector(value, size: int, name: str) -> np.ndarray:
    v = np.asarray(value, dtype=float)
    if v.shape != (size,):
        raise InvalidInputError(f"{name} must be a length-{size} vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError(f"{name} must be finite")
    return v


def _as_matrix(value, shape: tuple[int, int], name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != shape:
        raise InvalidInputError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} must be finite")
    return m


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: upper-triangular 3x3 with strictly positive diagonal."""

    k_matrix: np.ndarray

    def __post_init__(self):
        k = _as_matrix(self.k_matrix, (3, 3), "k_matrix")
        if np.any(np.abs(np.tril(k, -1)) > 0.0):
            raise InvalidInputError("k_matrix must be upper-triangular")
        if np.any(np.diag(k) <= 0.0):
            raise InvalidInputError("k_matrix diagonal must be strictly positive")
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "k_matrix", k)

    @classmethod
    def from_params(cls, fx: float, fy: float, cx: float, cy: float, skew: float = 0.0):
        return cls(np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]))


@dataclass(frozen=True)
class CameraPose:
    """Camera orientation and optical center in the world frame.

    ``rotation`` is stored exactly as it enters the back-projection formula
    ray = R^T K^-1 p; see :func:`compute_sight_ray`.
    """

    rotation: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        r = _as_matrix(self.rotation, (3, 3), "rotation")
        c = _as_vector(self.center, 3, "center")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ROTATION_TOL:
            raise InvalidInputError("rotation must be orthonormal within 1e-10")
        if abs(np.linalg.det(r) - 1.0) > _ROTATION_TOL:
            raise InvalidInputError("rotation must have determinant +1 within 1e-10")
        r = r.copy()
        r.flags.writeable = False
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class Observation:
    """One timestamped sighting: camera center plus unit ray toward the target.

    The optional ``image_point`` keeps the raw pixel for provenance when the
    ray was derived from an image.
    """

    time: float
    camera_center: np.ndarray
    ray: np.ndarray
    image_point: np.ndarray | None = None

    def __post_init__(self):
        t = float(self.time)
        if not np.isfinite(t):
            raise InvalidInputError("observation time must be finite")
        c = _as_vector(self.camera_center, 3, "camera_center")
        r = _as_vector(self.ray, 3, "ray")
        norm = float(np.linalg.norm(r))
        if abs(norm - 1.0) > RAY_NORM_TOLERANCE:
            raise InvalidInputError(
                f"ray norm {norm!r} deviates from 1 by more than {RAY_NORM_TOLERANCE}"
            )
        r = r / norm
        p = self.image_point
        if p is not None:
            p = _as_vector(p, 2, "image_point")
            p.flags.writeable = False
        c.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "camera_center", c)
        object.__setattr__(self, "ray", r)
        object.__setattr__(self, "image_point", p)


@dataclass(frozen=True)
class ResidualProjector:
    """The symmetric rank-2 projector I - l l^T for a unit ray l."""

    matrix: np.ndarray

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)


def compute_sight_ray(intrinsics: CameraIntrinsics, pose: CameraPose, image_point) -> np.ndarray:
    """Back-project a pixel to a unit world-frame sight-ray.

    The pixel (x, y) is lifted to (x, y, 1); the ray is R^T K^-1 (x, y, 1)
    normalized to unit length.
    """
    p = _as_vector(image_point, 2, "image_point")
    homogeneous = np.array([p[0], p[1], 1.0])
    direction = pose.rotation.T @ np.linalg.solve(intrinsics.k_matrix, homogeneous)
    norm = float(np.linalg.norm(direction))
    if norm < 1e-300:
        raise DegenerateGeometryError("back-projected direction has zero norm")
    return direction / norm


def residual_projector(ray) -> ResidualProjector:
    """Build I - l l^T, renormalizing rays within RAY_NORM_TOLERANCE of unit."""
    r = _as_vector(ray, 3, "ray")
    norm = float(np.linalg.norm(r))
    if abs(norm - 1.0) > RAY_NORM_TOLERANCE:
        raise InvalidInputError(
            f"ray norm {norm!r} deviates from 1 by more than {RAY_NORM_TOLERANCE}"
        )
    unit = r / norm
    m = np.eye(3) - np.outer(unit, unit)
    m.flags.writeable = False
    return ResidualProjector(m)


def point_to_ray_distance(point, obs: Observation) -> float:
    """Perpendicular distance from a world point to the observation's ray line."""
    p = _as_vector(point, 3, "point")
    d = obs.camera_center - p
    residual = d - obs.ray * float(obs.ray @ d)
    return float(np.linalg.norm(residual))
