"""Observation, trajectory, and result file formats.

Observation files are CSV with one of two headers, auto-detected:

  ray schema    time,camera_x,camera_y,camera_z,ray_x,ray_y,ray_z
  pixel schema  time,camera_x,camera_y,camera_z,r11,...,r33,pixel_x,pixel_y,
                fx,fy,cx,cy,skew

The ray schema carries precomputed unit sight-rays.  The pixel schema
carries the tracked image point plus the per-row rotation (row-major, the R
of ray = R^T K^-1 p) and intrinsics, from which the ray is derived on
ingest.  Rows are sorted by time; duplicate times are schema errors.

Trajectory files are CSV with header time,x,y,z.  Results are JSON; floats
are serialized exactly (Python's repr round-trips doubles), numeric CSV
cells use %.17g for the same reason.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import SchemaError
from .estimator import SolveReport
from .geometry import CameraIntrinsics, CameraPose, Observation, compute_sight_ray
from .reconstructability import StackedTrajectory
from .trajectory import eval_trajectory

RAY_HEADER = ["time", "camera_x", "camera_y", "camera_z", "ray_x", "ray_y", "ray_z"]
PIXEL_HEADER = [
    "time",
    "camera_x",
    "camera_y",
    "camera_z",
    "r11",
    "r12",
    "r13",
    "r21",
    "r22",
    "r23",
    "r31",
    "r32",
    "r33",
    "pixel_x",
    "pixel_y",
    "fx",
    "fy",
    "cx",
    "cy",
    "skew",
]
TRAJECTORY_HEADER = ["time", "x", "y", "z"]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _read_rows(path: Path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = [(i + 1, row) for i, row in enumerate(reader) if row]
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [c.strip() for c in rows[0][1]]
    return header, rows[1:]


def _parse_floats(path: Path, line: int, cells: list[str], count: int) -> list[float]:
    if len(cells) != count:
        raise SchemaError(f"{path}: line {line}: expected {count} columns, got {len(cells)}")
    out = []
    for i, cell in enumerate(cells):
        try:
            out.append(float(cell))
        except ValueError as exc:
            raise SchemaError(
                f"{path}: line {line}: column {i + 1} is not a number: {cell!r}"
            ) from exc
    return out


def _check_sorted_times(path: Path, entries: list[tuple[float, int]]) -> None:
    seen: dict[float, int] = {}
    for t, line in entries:
        if t in seen:
            raise SchemaError(
                f"{path}: duplicate time {t!r} on lines {seen[t]} and {line}; "
                "times must be strictly increasing after sorting"
            )
        seen[t] = line


def read_observations(path: str | Path) -> list[Observation]:
    """Parse an observation file (either schema), sorted by time."""
    path = Path(path)
    header, rows = _read_rows(path)
    if header == RAY_HEADER:
        parsed = _read_ray_rows(path, rows)
    elif header == PIXEL_HEADER:
        parsed = _read_pixel_rows(path, rows)
    else:
        raise SchemaError(
            f"{path}: unrecognized header {header!r}; expected {RAY_HEADER} or {PIXEL_HEADER}"
        )
    if not parsed:
        raise SchemaError(f"{path}: no observation rows")
    _check_sorted_times(path, [(o.time, line) for line, o in parsed])
    parsed.sort(key=lambda pair: pair[1].time)
    return [o for _, o in parsed]


def _read_ray_rows(path: Path, rows) -> list[tuple[int, Observation]]:
    out = []
    for line, cells in rows:
        v = _parse_floats(path, line, cells, 7)
        try:
            obs = Observation(time=v[0], camera_center=v[1:4], ray=v[4:7])
        except Exception as exc:
            raise SchemaError(f"{path}: line {line}: {exc}") from exc
        out.append((line, obs))
    return out


def _read_pixel_rows(path: Path, rows) -> list[tuple[int, Observation]]:
    out = []
    for line, cells in rows:
        v = _parse_floats(path, line, cells, 20)
        try:
            intrinsics = CameraIntrinsics.from_params(
                fx=v[15], fy=v[16], cx=v[17], cy=v[18], skew=v[19]
            )
            pose = CameraPose(rotation=np.array(v[4:13]).reshape(3, 3), center=v[1:4])
            ray = compute_sight_ray(intrinsics, pose, v[13:15])
            obs = Observation(
                time=v[0], camera_center=v[1:4], ray=ray, image_point=v[13:15]
            )
        except Exception as exc:
            raise SchemaError(f"{path}: line {line}: {exc}") from exc
        out.append((line, obs))
    return out


def write_observations(path: str | Path, observations: Sequence[Observation]) -> None:
    """Write the ray schema (lossless at 17 significant digits)."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAY_HEADER)
        for o in observations:
            writer.writerow(
                [_fmt(o.time)]
                + [_fmt(x) for x in o.camera_center]
                + [_fmt(x) for x in o.ray]
            )


def read_trajectory(path: str | Path) -> StackedTrajectory:
    """Parse a trajectory file; an observation file also works, in which case
    the camera centers are taken as the trajectory."""
    path = Path(path)
    header, rows = _read_rows(path)
    if header == TRAJECTORY_HEADER:
        entries = []
        for line, cells in rows:
            v = _parse_floats(path, line, cells, 4)
            entries.append((line, v[0], v[1:4]))
    elif header in (RAY_HEADER, PIXEL_HEADER):
        observations = read_observations(path)
        return StackedTrajectory.from_positions(
            [o.time for o in observations], [o.camera_center for o in observations]
        )
    else:
        raise SchemaError(
            f"{path}: unrecognized header {header!r}; expected {TRAJECTORY_HEADER} "
            "or an observation header"
        )
    if not entries:
        raise SchemaError(f"{path}: no trajectory rows")
    _check_sorted_times(path, [(t, line) for line, t, _ in entries])
    entries.sort(key=lambda e: e[1])
    times = [t for _, t, _ in entries]
    positions = [p for _, _, p in entries]
    return StackedTrajectory.from_positions(times, positions)


def write_trajectory(path: str | Path, trajectory: StackedTrajectory) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for t, p in zip(trajectory.times, trajectory.positions):
            writer.writerow([_fmt(t), _fmt(p[0]), _fmt(p[1]), _fmt(p[2])])


def result_to_dict(
    report: SolveReport,
    times,
    *,
    time_normalization: bool = True,
    truth_rms: float | None = None,
    eta: float | None = None,
) -> dict:
    """JSON-ready solve result: coefficients, diagnostics, per-time estimates."""
    times = np.asarray(times, dtype=float)
    estimates = eval_trajectory(report.trajectory, times)
    out = {
        "order": report.order_selected,
        "method": report.method,
        "ridge_param": report.ridge_param,
        "paper_literal_ridge": report.paper_literal_ridge,
        "time_normalization": time_normalization,
        "coefficients": [[float(c) for c in row] for row in report.trajectory.coeffs],
        "objective": report.objective,
        "residual_norm": report.residual_norm,
        "condition_number": _json_float(report.condition_number),
        "candidate_objectives": {str(k): v for k, v in sorted(report.candidate_objectives.items())},
        "skipped_orders": {str(k): v for k, v in sorted(report.skipped_orders.items())},
        "degeneracy": report.degeneracy.to_dict() if report.degeneracy is not None else None,
        "estimates": [
            {
                "time": float(t),
                "x": float(p[0]),
                "y": float(p[1]),
                "z": float(p[2]),
                "ray_error": float(e),
            }
            for t, p, e in zip(times, estimates, report.per_time_ray_error)
        ],
    }
    if truth_rms is not None:
        out["truth_rms_m"] = truth_rms
    if eta is not None:
        out["eta"] = _json_float(eta)
    return out


def _json_float(x: float):
    # JSON has no inf/nan literals; use strings for those rare diagnostics.
    if x is None or np.isfinite(x):
        return x
    return repr(float(x))


def write_result(path: str | Path, result: dict) -> None:
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")


def read_result(path: str | Path) -> dict:
    with open(path) as fh:
        return json.load(fh)
