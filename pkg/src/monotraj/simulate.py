"""Synthetic scenario generation and Monte Carlo experiments.

A scenario samples a polynomial target and a camera path at a fixed frame
rate (both endpoints included), forms noiseless sight-rays from camera to
target, then optionally perturbs them: per-trial systematic offsets plus
per-observation random offsets for the camera centers, and ray rotations
about a random axis orthogonal to each ray with normally distributed angle
(again one systematic draw per trial plus one random draw per observation).

Seeding is fully deterministic: trial i of a run with master seed s uses
splitmix64(s XOR i), and the noise / occlusion streams of that trial are
derived from the trial seed with fixed stream tags.  Trials are independent
so they could run concurrently without changing any result; this
implementation runs them sequentially.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateScenarioError,
    IndeterminateError,
    InvalidInputError,
    MonotrajError,
    TooFewObservationsError,
)
from .estimator import (
    METHOD_LEAST_SQUARES,
    METHOD_RIDGE,
    assemble_system,
    select_order,
    solve_least_squares,
    solve_ridge,
)
from .geometry import Observation
from .reconstructability import StackedTrajectory, reconstructability_index
from .trajectory import PolynomialTrajectory, eval_trajectory, min_observations

_MASK64 = (1 << 64) - 1

# Stream tags separating the per-trial noise and occlusion substreams.
_NOISE_STREAM = 0x6E6F6973  # "nois"
_OCCLUSION_STREAM = 0x6F63636C  # "occl"

ORDER_MATCHED = "matched"
ORDER_AUTO = "auto"


def mix64(x: int) -> int:
    """splitmix64 finalizer; the documented seed-derivation mixing function."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK64)


def trial_streams(master_seed: int, trial: int) -> tuple[int, int, int]:
    """(trial seed, noise seed, occlusion seed) for one trial of a run."""
    trial_seed = mix64(master_seed ^ trial)
    return (
        trial_seed,
        mix64(trial_seed ^ _NOISE_STREAM),
        mix64(trial_seed ^ _OCCLUSION_STREAM),
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise magnitudes; positions in meters, angles in degrees."""

    camera_pos_systematic_std: float = 0.0
    camera_pos_random_std: float = 0.0
    ray_angle_systematic_std: float = 0.0
    ray_angle_random_std: float = 0.0

    def __post_init__(self):
        for name in (
            "camera_pos_systematic_std",
            "camera_pos_random_std",
            "ray_angle_systematic_std",
            "ray_angle_random_std",
        ):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise InvalidInputError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)

    @classmethod
    def high(cls) -> "NoiseSpec":
        return cls(1.0, 1.0, 0.3, 0.3)

    @classmethod
    def low(cls) -> "NoiseSpec":
        return cls(0.1, 0.1, 0.1, 0.05)

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @property
    def is_zero(self) -> bool:
        return (
            self.camera_pos_systematic_std == 0.0
            and self.camera_pos_random_std == 0.0
            and self.ray_angle_systematic_std == 0.0
            and self.ray_angle_random_std == 0.0
        )


@dataclass(frozen=True)
class TargetMotion:
    """Polynomial target motion; shipped presets cover uniform linear motion
    (X=10+5t, Y=5t, Z=t) and uniform acceleration (X=10+t^2, Y=13+2t^2,
    Z=0.5t^2)."""

    name: str
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != 3 or c.shape[1] < 1 or not np.all(np.isfinite(c)):
            raise InvalidInputError(f"target coeffs must be a finite 3 x (K+1) matrix, got {c.shape}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def linear(cls) -> "TargetMotion":
        return cls("linear", np.array([[10.0, 5.0], [0.0, 5.0], [0.0, 1.0]]))

    @classmethod
    def accelerated(cls) -> "TargetMotion":
        return cls(
            "accelerated",
            np.array([[10.0, 0.0, 1.0], [13.0, 0.0, 2.0], [0.0, 0.0, 0.5]]),
        )

    @classmethod
    def polynomial(cls, coeffs, name: str = "polynomial") -> "TargetMotion":
        return cls(name, np.asarray(coeffs, dtype=float))

    @property
    def true_order(self) -> int:
        """Highest power with a nonzero coefficient on any axis."""
        nonzero = np.nonzero(np.any(self.coeffs != 0.0, axis=0))[0]
        return int(nonzero[-1]) if nonzero.size else 0

    def positions(self, times) -> np.ndarray:
        return eval_trajectory(PolynomialTrajectory(self.coeffs), np.asarray(times, float))


@dataclass(frozen=True)
class CameraPath:
    """Camera optical-center path.

    kinds:
      circle  - X=100 sin(pi t/10), Y=100 - 100 cos(pi t/10), Z=100
                (radius 100 m at 100 m altitude, one lap per 20 s)
      line    - start + velocity * t
      sampled - user-supplied positions, linearly interpolated in time
    """

    kind: str
    start: np.ndarray | None = None
    velocity: np.ndarray | None = None
    sample_times: np.ndarray | None = None
    sample_positions: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "circle":
            pass
        elif self.kind == "line":
            s = np.asarray(self.start, dtype=float)
            v = np.asarray(self.velocity, dtype=float)
            if s.shape != (3,) or v.shape != (3,):
                raise InvalidInputError("line path needs 3-vector start and velocity")
            object.__setattr__(self, "start", s)
            object.__setattr__(self, "velocity", v)
        elif self.kind == "sampled":
            t = np.asarray(self.sample_times, dtype=float)
            p = np.asarray(self.sample_positions, dtype=float)
            if t.ndim != 1 or p.shape != (t.size, 3) or t.size < 2:
                raise InvalidInputError("sampled path needs N>=2 times and N x 3 positions")
            if np.any(np.diff(t) <= 0):
                raise InvalidInputError("sampled path times must be strictly increasing")
            object.__setattr__(self, "sample_times", t)
            object.__setattr__(self, "sample_positions", p)
        else:
            raise InvalidInputError(f"unknown camera path kind {self.kind!r}")

    @classmethod
    def circle(cls) -> "CameraPath":
        return cls("circle")

    @classmethod
    def line(cls, start=(0.0, 0.0, 100.0), velocity=(10.0, 0.0, 0.0)) -> "CameraPath":
        return cls("line", start=np.asarray(start, float), velocity=np.asarray(velocity, float))

    @classmethod
    def sampled(cls, times, positions) -> "CameraPath":
        return cls(
            "sampled",
            sample_times=np.asarray(times, float),
            sample_positions=np.asarray(positions, float),
        )

    def positions(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        if self.kind == "circle":
            phase = math.pi * t / 10.0
            return np.stack(
                [
                    100.0 * np.sin(phase),
                    100.0 - 100.0 * np.cos(phase),
                    np.full_like(t, 100.0),
                ],
                axis=-1,
            )
        if self.kind == "line":
            return self.start[None, :] + t[:, None] * self.velocity[None, :]
        out = np.stack(
            [np.interp(t, self.sample_times, self.sample_positions[:, a]) for a in range(3)],
            axis=-1,
        )
        return out


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative synthetic experiment: what moves where, sampled how."""

    target: TargetMotion
    camera: CameraPath
    frame_rate: float
    duration: float
    occlusion_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.frame_rate) and self.frame_rate > 0):
            raise InvalidInputError("frame_rate must be positive")
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise InvalidInputError("duration must be positive")
        if self.duration * self.frame_rate < 2:
            raise InvalidInputError("duration * frame_rate must be at least 2")
        if not (0.0 <= self.occlusion_fraction < 1.0):
            raise InvalidInputError("occlusion_fraction must be in [0, 1)")
        n = self.n_samples
        remaining = n - math.floor(self.occlusion_fraction * n)
        needed = min_observations(self.target.true_order)
        if remaining < needed:
            raise InvalidInputError(
                f"occlusion leaves {remaining} of {n} samples, below the "
                f"{needed} needed for order {self.target.true_order}"
            )

    @property
    def n_samples(self) -> int:
        return math.floor(self.duration * self.frame_rate) + 1

    def sample_times(self) -> np.ndarray:
        # Both endpoints included: t_j = j / frame_rate, j = 0 .. floor(d*r).
        return np.arange(self.n_samples) / self.frame_rate


def generate_scenario(
    spec: ScenarioSpec,
) -> tuple[list[Observation], StackedTrajectory, StackedTrajectory]:
    """Sample the noiseless scenario.

    Returns (observations, target truth, camera truth).  Rays point from the
    camera to the target; the construction is deterministic (randomness only
    enters through apply_noise / occlude).
    """
    times = spec.sample_times()
    centers = spec.camera.positions(times)
    targets = spec.target.positions(times)
    diffs = targets - centers
    dists = np.linalg.norm(diffs, axis=1)
    if np.any(dists < 1e-9):
        j = int(np.argmin(dists))
        raise DegenerateScenarioError(
            f"target coincides with the camera at t={times[j]!r}"
        )
    rays = diffs / dists[:, None]
    observations = [
        Observation(time=times[i], camera_center=centers[i], ray=rays[i])
        for i in range(len(times))
    ]
    truth = StackedTrajectory.from_positions(times, targets)
    camera_truth = StackedTrajectory.from_positions(times, centers)
    return observations, truth, camera_truth


def _orthonormal_frames(rays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (u, v) basis of each ray's orthogonal plane."""
    n = len(rays)
    basis = np.eye(3)
    least_aligned = np.argmin(np.abs(rays), axis=1)
    e = basis[least_aligned]
    u = np.cross(rays, e)
    u /= np.linalg.norm(u, axis=1)[:, None]
    v = np.cross(rays, u)
    return u, v


def _rotate_about_orthogonal_axis(
    rays: np.ndarray, azimuths: np.ndarray, angles: np.ndarray
) -> np.ndarray:
    """Rotate each ray by its angle about the in-plane axis at its azimuth.

    The axis is orthogonal to the ray, so Rodrigues reduces to
    l' = l cos(angle) + (axis x l) sin(angle) and the angular deviation of
    l' from l is exactly |angle|.
    """
    u, v = _orthonormal_frames(rays)
    axes = np.cos(azimuths)[:, None] * u + np.sin(azimuths)[:, None] * v
    rotated = (
        rays * np.cos(angles)[:, None] + np.cross(axes, rays) * np.sin(angles)[:, None]
    )
    return rotated / np.linalg.norm(rotated, axis=1)[:, None]


def apply_noise(
    observations: Sequence[Observation], noise: NoiseSpec, seed: int
) -> list[Observation]:
    """Perturb camera centers and ray directions.

    Draw order (fixed, so results are reproducible given the seed):
    systematic center offset, systematic ray angle and azimuth, then the
    per-observation random offsets, angles, and azimuths.
    """
    if noise.is_zero:
        # keep the output bit-identical to the input (renormalizing an
        # already-unit ray can still flip the last bit)
        return list(observations)
    rng = _rng(seed)
    n = len(observations)
    centers = np.array([o.camera_center for o in observations])
    rays = np.array([o.ray for o in observations])

    systematic_offset = rng.normal(0.0, noise.camera_pos_systematic_std, 3)
    systematic_angle = rng.normal(0.0, math.radians(noise.ray_angle_systematic_std))
    systematic_azimuth = rng.uniform(0.0, 2.0 * math.pi)
    random_offsets = rng.normal(0.0, noise.camera_pos_random_std, (n, 3))
    random_angles = rng.normal(0.0, math.radians(noise.ray_angle_random_std), n)
    random_azimuths = rng.uniform(0.0, 2.0 * math.pi, n)

    centers = centers + systematic_offset[None, :] + random_offsets
    rays = _rotate_about_orthogonal_axis(
        rays, np.full(n, systematic_azimuth), np.full(n, systematic_angle)
    )
    rays = _rotate_about_orthogonal_axis(rays, random_azimuths, random_angles)

    return [
        Observation(
            time=o.time,
            camera_center=centers[i],
            ray=rays[i],
            image_point=o.image_point,
        )
        for i, o in enumerate(observations)
    ]


def occlude(
    observations: Sequence[Observation],
    fraction: float,
    seed: int,
    *,
    min_remaining: int = 1,
) -> list[Observation]:
    """Drop floor(fraction * N) observations uniformly without replacement,
    preserving the order of the survivors."""
    if not (0.0 <= fraction < 1.0):
        raise InvalidInputError(f"occlusion fraction must be in [0, 1), got {fraction!r}")
    n = len(observations)
    n_remove = math.floor(fraction * n)
    remaining = n - n_remove
    if remaining < min_remaining:
        raise TooFewObservationsError(
            f"occlusion would leave {remaining} observations, need {min_remaining}",
            required=min_remaining,
            got=remaining,
        )
    if n_remove == 0:
        return list(observations)
    removed = set(_rng(seed).choice(n, size=n_remove, replace=False).tolist())
    return [o for i, o in enumerate(observations) if i not in removed]


@dataclass(frozen=True)
class MethodOutcome:
    """Per-trial result of one solve method; rms fields are None on failure."""

    rms: float | None
    camera_rms: float | None
    selected_order: int | None
    ridge_param: float | None
    objective: float | None
    solve_seconds: float
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    rms_error: float | None
    selected_order: int | None
    eta: float
    per_method: dict[str, MethodOutcome]


@dataclass(frozen=True)
class MethodAggregate:
    method: str
    trials: int
    failures: int
    mean_rms: float | None
    median_rms: float | None
    std_rms: float | None
    mean_objective: float | None
    selection_accuracy: float | None
    mean_eta: float | None
    mean_solve_seconds: float | None


@dataclass(frozen=True)
class ExperimentResult:
    scenario: ScenarioSpec
    noise: NoiseSpec
    methods: tuple[str, ...]
    order_mode: str
    solve_order: int | None
    master_seed: int
    trial_results: tuple[TrialResult, ...]
    aggregates: dict[str, MethodAggregate] = field(default_factory=dict)


def _rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def run_experiment(
    scenario: ScenarioSpec,
    noise: NoiseSpec,
    trials: int,
    methods: Sequence[str] = (METHOD_LEAST_SQUARES, METHOD_RIDGE),
    order: str | int = ORDER_MATCHED,
    candidates: Sequence[int] = (0, 1, 2, 3),
    seed: int | None = None,
    *,
    normalize_time: bool = True,
    paper_literal: bool = False,
    compute_eta: bool = True,
) -> ExperimentResult:
    """Monte Carlo driver: generate -> noise -> occlude -> solve per method.

    ``order`` is "matched" (solve at the target's actual order), "auto"
    (select among ``candidates``), or an explicit integer.  Per-trial errors
    become failure records, never fabricated numbers, and never abort the
    batch.  Deterministic given the master seed.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    methods = tuple(methods)
    if not methods or any(m not in (METHOD_LEAST_SQUARES, METHOD_RIDGE) for m in methods):
        raise InvalidInputError(f"methods must be drawn from"
                                f" {{{METHOD_LEAST_SQUARES}, {METHOD_RIDGE}}}, got {methods!r}")
    if isinstance(order, str) and order not in (ORDER_MATCHED, ORDER_AUTO):
        raise InvalidInputError(f"order must be 'matched', 'auto', or an integer, got {order!r}")

    master = scenario.seed if seed is None else int(seed)
    base_observations, truth, camera_truth = generate_scenario(scenario)
    times_full = scenario.sample_times()
    truth_positions = truth.positions
    camera_positions = camera_truth.positions
    true_order = scenario.target.true_order
    fixed_order: int | None
    if order == ORDER_AUTO:
        fixed_order = None
    elif order == ORDER_MATCHED:
        fixed_order = true_order
    else:
        fixed_order = int(order)

    trial_results: list[TrialResult] = []
    headline = METHOD_RIDGE if METHOD_RIDGE in methods else methods[0]
    for i in range(trials):
        trial_seed, noise_seed, occlusion_seed = trial_streams(master, i)

        observations = apply_noise(base_observations, noise, noise_seed)
        if scenario.occlusion_fraction > 0.0:
            observations = occlude(
                observations, scenario.occlusion_fraction, occlusion_seed
            )

        eta = _trial_eta(observations, times_full, truth_positions,
                         camera_positions, true_order) if compute_eta else float("nan")

        per_method: dict[str, MethodOutcome] = {}
        for m in methods:
            started = _time.perf_counter()
            try:
                if fixed_order is None:
                    report = select_order(
                        observations,
                        candidates,
                        method=m,
                        normalize_time=normalize_time,
                        paper_literal=paper_literal,
                    )
                else:
                    system = assemble_system(
                        observations, fixed_order, normalize_time=normalize_time
                    )
                    if m == METHOD_LEAST_SQUARES:
                        report = solve_least_squares(system)
                    else:
                        report = solve_ridge(system, paper_literal=paper_literal)
                elapsed = _time.perf_counter() - started
                estimates = eval_trajectory(report.trajectory, times_full)
                per_method[m] = MethodOutcome(
                    rms=_rms(estimates, truth_positions),
                    camera_rms=_rms(estimates, camera_positions),
                    selected_order=report.order_selected,
                    ridge_param=report.ridge_param,
                    objective=report.objective,
                    solve_seconds=elapsed,
                )
            except MonotrajError as exc:
                per_method[m] = MethodOutcome(
                    rms=None,
                    camera_rms=None,
                    selected_order=None,
                    ridge_param=None,
                    objective=None,
                    solve_seconds=_time.perf_counter() - started,
                    error=exc.code,
                )

        head = per_method[headline]
        trial_results.append(
            TrialResult(
                trial=i,
                seed=trial_seed,
                rms_error=head.rms,
                selected_order=head.selected_order,
                eta=eta,
                per_method=per_method,
            )
        )

    aggregates = {
        m: _aggregate(m, trial_results, true_order, fixed_order is None)
        for m in methods
    }
    return ExperimentResult(
        scenario=scenario,
        noise=noise,
        methods=methods,
        order_mode=order if isinstance(order, str) else "fixed",
        solve_order=fixed_order,
        master_seed=master,
        trial_results=tuple(trial_results),
        aggregates=aggregates,
    )


def _trial_eta(observations, times_full, truth_positions, camera_positions,
               true_order) -> float:
    """Reconstructability of the trial's surviving sample times, computed on
    the noiseless camera and target paths."""
    kept = np.searchsorted(times_full, [o.time for o in observations])
    times = times_full[kept]
    try:
        return reconstructability_index(
            StackedTrajectory.from_positions(times, camera_positions[kept]),
            StackedTrajectory.from_positions(times, truth_positions[kept]),
            true_order,
        )
    except IndeterminateError:
        return float("nan")


def _aggregate(
    method: str, trial_results: list[TrialResult], true_order: int, auto: bool
) -> MethodAggregate:
    outcomes = [t.per_method[method] for t in trial_results]
    successes = [o for o in outcomes if not o.failed]
    failures = len(outcomes) - len(successes)
    if successes:
        rms = np.array([o.rms for o in successes])
        objectives = np.array([o.objective for o in successes])
        mean_rms, median_rms, std_rms = (
            float(rms.mean()),
            float(np.median(rms)),
            float(rms.std()),
        )
        mean_obj = float(objectives.mean())
        mean_secs = float(np.mean([o.solve_seconds for o in successes]))
        accuracy = (
            float(np.mean([o.selected_order == true_order for o in successes]))
            if auto
            else None
        )
    else:
        mean_rms = median_rms = std_rms = mean_obj = mean_secs = accuracy = None
    etas = [t.eta for t in trial_results]
    mean_eta = float(np.mean(etas)) if etas else None
    return MethodAggregate(
        method=method,
        trials=len(outcomes),
        failures=failures,
        mean_rms=mean_rms,
        median_rms=median_rms,
        std_rms=std_rms,
        mean_objective=mean_obj,
        selection_accuracy=accuracy,
        mean_eta=mean_eta,
        mean_solve_seconds=mean_secs,
    )
