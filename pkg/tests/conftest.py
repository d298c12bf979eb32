"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from monotraj import (
    CameraPath,
    NoiseSpec,
    Observation,
    ScenarioSpec,
    TargetMotion,
    generate_scenario,
)


def random_unit_vectors(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]


def observations_from_paths(times, centers, targets) -> list[Observation]:
    """Noise-free observations with rays pointing from each center to the
    matching target position."""
    times = np.asarray(times, float)
    centers = np.asarray(centers, float)
    targets = np.asarray(targets, float)
    diffs = targets - centers
    rays = diffs / np.linalg.norm(diffs, axis=1)[:, None]
    return [
        Observation(time=t, camera_center=c, ray=r)
        for t, c, r in zip(times, centers, rays)
    ]


def circle_scenario(target=None, duration=6.0, frame_rate=10.0, occlusion=0.0, seed=0):
    return ScenarioSpec(
        target=target if target is not None else TargetMotion.linear(),
        camera=CameraPath.circle(),
        frame_rate=frame_rate,
        duration=duration,
        occlusion_fraction=occlusion,
        seed=seed,
    )


@pytest.fixture
def linear_noise_free():
    """61 noise-free observations of the linear preset over 6 s at 10 Hz."""
    obs, truth, camera = generate_scenario(circle_scenario())
    return obs, truth, camera


@pytest.fixture
def accelerated_noise_free():
    obs, truth, camera = generate_scenario(
        circle_scenario(target=TargetMotion.accelerated())
    )
    return obs, truth, camera


@pytest.fixture
def high_noise():
    return NoiseSpec.high()


@pytest.fixture
def low_noise():
    return NoiseSpec.low()
