"""Temporal polynomial motion model.

The target position at time t is (sum a_k t^k, sum b_k t^k, sum c_k t^k);
the three coefficient rows are stored as a 3 x (K+1) matrix.  Flattened
row-major (all a's, then b's, then c's) they form the parameter vector the
solvers estimate, and the per-time design block I_3 kron (t^0 .. t^K)
reproduces the position when multiplied by that vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class PolynomialTrajectory:
    """Per-axis polynomial coefficients; column k holds the t^k terms."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != 3 or c.shape[1] < 1:
            raise InvalidInputError(f"coeffs must be 3 x (K+1), got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("coeffs must be finite")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[1] - 1

    def flatten(self) -> np.ndarray:
        """Row-major parameter vector (a_0..a_K, b_0..b_K, c_0..c_K)."""
        return self.coeffs.reshape(-1)

    @classmethod
    def from_flat(cls, beta, order: int) -> "PolynomialTrajectory":
        b = np.asarray(beta, dtype=float)
        if b.shape != (3 * (order + 1),):
            raise InvalidInputError(
                f"flat coefficient vector must have length {3 * (order + 1)}, got {b.shape}"
            )
        return cls(b.reshape(3, order + 1))


@dataclass(frozen=True)
class DesignBlock:
    """Per-observation design block I_3 kron (t^0, .., t^K)."""

    matrix: np.ndarray


def eval_trajectory(traj: PolynomialTrajectory, time) -> np.ndarray:
    """Evaluate the trajectory at one time (returns a 3-vector) or an array
    of times (returns an N x 3 array).  Uses Horner's scheme."""
    t = np.asarray(time, dtype=float)
    if not np.all(np.isfinite(t)):
        raise InvalidInputError("time must be finite")
    c = traj.coeffs
    acc = np.broadcast_to(c[:, -1], t.shape + (3,)).copy()
    for k in range(c.shape[1] - 2, -1, -1):
        acc = acc * t[..., None] + c[:, k]
    return acc


def design_block(order: int, time: float) -> DesignBlock:
    """Kronecker block mapping the flat coefficient vector to a position."""
    k = _check_order(order)
    t = float(time)
    if not np.isfinite(t):
        raise InvalidInputError("time must be finite")
    powers = t ** np.arange(k + 1)
    return DesignBlock(np.kron(np.eye(3), powers))


def stacked_design(times, order: int) -> np.ndarray:
    """Stack the per-time design blocks into a 3N x 3(K+1) matrix."""
    k = _check_order(order)
    t = np.asarray(times, dtype=float)
    powers = t[:, None] ** np.arange(k + 1)
    out = np.einsum("ra,ik->irak", np.eye(3), powers)
    return out.reshape(3 * len(t), 3 * (k + 1))


def min_observations(order: int) -> int:
    """Smallest N with 2N >= 3(K+1); each sighting contributes two
    independent scalar constraints."""
    k = _check_order(order)
    return -(-3 * (k + 1) // 2)


def rescale_coefficients(coeffs, offset: float, scale: float) -> np.ndarray:
    """Coefficients of p(t) = q((t - offset) / scale) given those of q.

    Used to report raw-time coefficients after solving in normalized time;
    a pure reparameterization, the represented curve is unchanged.
    """
    c = np.asarray(coeffs, dtype=float)
    if scale == 0.0 or not np.isfinite(scale) or not np.isfinite(offset):
        raise InvalidInputError("offset must be finite and scale nonzero")
    kmax = c.shape[-1] - 1
    m = np.zeros((kmax + 1, kmax + 1))
    for k in range(kmax + 1):
        for j in range(k + 1):
            m[j, k] = math.comb(k, j) * (-offset) ** (k - j) / scale**k
    return c @ m.T


def _check_order(order: int) -> int:
    k = int(order)
    if k != order or k < 0:
        raise InvalidInputError(f"order must be a nonnegative integer, got {order!r}")
    return k
