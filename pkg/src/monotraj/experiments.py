"""Config-driven experiment grids and their CSV outputs.

A config names a grid of cells (targets x windows x occlusions x orders) and
the Monte Carlo settings shared by every cell.  Shipped presets live in
``monotraj/presets`` and can be referenced by bare name.  All CSV output is
formatted with %.17g so reruns with the same seed are byte-identical and the
files round-trip doubles losslessly.

Config schema (YAML):

    name: fig12a                 # output file stem
    targets: [linear]            # linear | accelerated | {name:, coeffs: 3x(K+1)}
    camera: circle               # circle | {kind: line, start:, velocity:}
                                 #        | {kind: sampled, times:, positions:}
    frame_rate: 10.0             # Hz
    windows: [2.0]               # observation durations, seconds
    occlusions: [0.0]            # fractions in [0, 1)
    noise: high                  # high | low | none | {camera_pos_systematic_std:, ...}
    trials: 1000
    methods: [least_squares, ridge]
    order: matched               # matched | auto | {fixed: 2} | {fixed: [0,1,2,3]}
    candidates: [0, 1, 2, 3]     # auto-mode candidate orders (optional)
    seed: 1203401                # master seed, 64-bit
    time_normalization: true     # optional
    paper_literal_ridge: false   # optional (subtractive regularizer)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Iterable

import yaml

from .errors import ConfigError
from .simulate import (
    ORDER_AUTO,
    ORDER_MATCHED,
    CameraPath,
    ExperimentResult,
    NoiseSpec,
    ScenarioSpec,
    TargetMotion,
    mix64,
    run_experiment,
)

PRESET_NAMES = (
    "fig10",
    "fig11a",
    "fig11b",
    "fig12a",
    "fig12b",
    "fig13",
    "fig15",
    "table1",
)

AGGREGATE_COLUMNS = [
    "config",
    "target",
    "true_order",
    "camera",
    "frame_rate_hz",
    "window_s",
    "occlusion",
    "order_mode",
    "order",
    "method",
    "trials",
    "failures",
    "mean_rms_m",
    "median_rms_m",
    "std_rms_m",
    "mean_objective",
    "selection_accuracy",
    "mean_eta",
]

TRIAL_COLUMNS = [
    "config",
    "target",
    "window_s",
    "occlusion",
    "order_mode",
    "order",
    "method",
    "trial",
    "trial_seed",
    "rms_m",
    "camera_rms_m",
    "selected_order",
    "ridge_param",
    "objective",
    "eta",
    "error",
]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    targets: tuple[TargetMotion, ...]
    camera: CameraPath
    frame_rate: float
    windows: tuple[float, ...]
    occlusions: tuple[float, ...]
    noise: NoiseSpec
    trials: int
    methods: tuple[str, ...]
    order_mode: str  # "matched" | "auto" | "fixed"
    fixed_orders: tuple[int, ...]
    candidates: tuple[int, ...]
    seed: int
    time_normalization: bool = True
    paper_literal_ridge: bool = False


@dataclass(frozen=True)
class CellResult:
    """One grid cell's settings plus its Monte Carlo result."""

    target: TargetMotion
    window: float
    occlusion: float
    order: str | int
    result: ExperimentResult


@dataclass(frozen=True)
class RunOutput:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    aggregate_rows: tuple[dict, ...]
    trial_rows: tuple[dict, ...]


def preset_path(name: str) -> Path:
    ref = resources.files("monotraj").joinpath("presets", f"{name}.yaml")
    with resources.as_file(ref) as p:
        return Path(p)


def load_config(name_or_path: str | Path) -> ExperimentConfig:
    """Load a config from a shipped preset name or a YAML file path."""
    path = Path(name_or_path)
    if not path.suffix and str(name_or_path) in PRESET_NAMES:
        path = preset_path(str(name_or_path))
    if not path.exists():
        raise ConfigError(
            f"config {name_or_path!r} is neither a preset "
            f"({', '.join(PRESET_NAMES)}) nor an existing file"
        )
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    name = _expect_str(raw, "name")
    targets = tuple(_parse_target(t, i) for i, t in enumerate(_expect_list(raw, "targets")))
    camera = _parse_camera(raw.get("camera", "circle"))
    frame_rate = _expect_number(raw, "frame_rate", positive=True)
    windows = tuple(
        _expect_number({"windows": w}, "windows", positive=True)
        for w in _expect_list(raw, "windows")
    )
    occlusions = tuple(
        float(o) for o in raw.get("occlusions", [0.0])
    )
    for o in occlusions:
        if not (0.0 <= o < 1.0):
            raise ConfigError(f"occlusions: every entry must be in [0, 1), got {o!r}")
    noise = _parse_noise(raw.get("noise", "none"))
    trials = int(raw.get("trials", 1000))
    if trials < 1:
        raise ConfigError("trials: must be >= 1")
    methods = tuple(raw.get("methods", ["least_squares", "ridge"]))
    for m in methods:
        if m not in ("least_squares", "ridge"):
            raise ConfigError(f"methods: unknown method {m!r}")
    if not methods:
        raise ConfigError("methods: must be nonempty")
    order_mode, fixed_orders = _parse_order(raw.get("order", "matched"))
    candidates = tuple(int(k) for k in raw.get("candidates", [0, 1, 2, 3]))
    if any(k < 0 for k in candidates) or not candidates:
        raise ConfigError("candidates: must be a nonempty list of orders >= 0")
    if "seed" not in raw:
        raise ConfigError("seed: required")
    seed = int(raw["seed"])
    return ExperimentConfig(
        name=name,
        targets=targets,
        camera=camera,
        frame_rate=frame_rate,
        windows=windows,
        occlusions=occlusions,
        noise=noise,
        trials=trials,
        methods=methods,
        order_mode=order_mode,
        fixed_orders=fixed_orders,
        candidates=candidates,
        seed=seed,
        time_normalization=bool(raw.get("time_normalization", True)),
        paper_literal_ridge=bool(raw.get("paper_literal_ridge", False)),
    )


def _expect_str(raw: dict, key: str) -> str:
    v = raw.get(key)
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{key}: required non-empty string")
    return v


def _expect_list(raw: dict, key: str) -> list:
    v = raw.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key}: required non-empty list")
    return v


def _expect_number(raw: dict, key: str, positive: bool = False) -> float:
    v = raw.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ConfigError(f"{key}: must be a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be positive, got {v!r}")
    return float(v)


def _parse_target(t, index: int) -> TargetMotion:
    if t == "linear":
        return TargetMotion.linear()
    if t == "accelerated":
        return TargetMotion.accelerated()
    if isinstance(t, dict) and "coeffs" in t:
        try:
            return TargetMotion.polynomial(t["coeffs"], name=t.get("name", f"custom{index}"))
        except Exception as exc:
            raise ConfigError(f"targets[{index}].coeffs: {exc}") from exc
    raise ConfigError(
        f"targets[{index}]: expected 'linear', 'accelerated', or a coeffs mapping, got {t!r}"
    )


def _parse_camera(c) -> CameraPath:
    if c == "circle":
        return CameraPath.circle()
    if isinstance(c, dict):
        kind = c.get("kind")
        try:
            if kind == "circle":
                return CameraPath.circle()
            if kind == "line":
                return CameraPath.line(
                    start=c.get("start", (0.0, 0.0, 100.0)),
                    velocity=c.get("velocity", (10.0, 0.0, 0.0)),
                )
            if kind == "sampled":
                return CameraPath.sampled(c["times"], c["positions"])
        except KeyError as exc:
            raise ConfigError(f"camera: sampled path needs {exc} field") from exc
        except Exception as exc:
            raise ConfigError(f"camera: {exc}") from exc
    raise ConfigError(f"camera: expected 'circle' or a kind mapping, got {c!r}")


def _parse_noise(nz) -> NoiseSpec:
    if nz == "high":
        return NoiseSpec.high()
    if nz == "low":
        return NoiseSpec.low()
    if nz in ("none", None):
        return NoiseSpec.none()
    if isinstance(nz, dict):
        allowed = {
            "camera_pos_systematic_std",
            "camera_pos_random_std",
            "ray_angle_systematic_std",
            "ray_angle_random_std",
        }
        unknown = set(nz) - allowed
        if unknown:
            raise ConfigError(f"noise: unknown fields {sorted(unknown)}")
        try:
            return NoiseSpec(**{k: float(v) for k, v in nz.items()})
        except Exception as exc:
            raise ConfigError(f"noise: {exc}") from exc
    raise ConfigError(f"noise: expected 'high', 'low', 'none', or a mapping, got {nz!r}")


def _parse_order(o) -> tuple[str, tuple[int, ...]]:
    if o in ("matched", True):
        return ORDER_MATCHED, ()
    if o == "auto":
        return ORDER_AUTO, ()
    if isinstance(o, int) and not isinstance(o, bool):
        return "fixed", (int(o),)
    if isinstance(o, dict) and "fixed" in o:
        v = o["fixed"]
        ks = v if isinstance(v, list) else [v]
        ks = tuple(int(k) for k in ks)
        if not ks or any(k < 0 for k in ks):
            raise ConfigError("order.fixed: must be an order >= 0 or a list of them")
        return "fixed", ks
    raise ConfigError(f"order: expected 'matched', 'auto', or {{fixed: ...}}, got {o!r}")


def run_config(
    config: ExperimentConfig,
    *,
    trials: int | None = None,
    seed: int | None = None,
    compute_eta: bool = True,
) -> RunOutput:
    """Run every grid cell of a config; cell seeds derive from the master
    seed by cell index so the grid shape alone fixes all randomness."""
    if trials is not None:
        config = replace(config, trials=int(trials))
    if seed is not None:
        config = replace(config, seed=int(seed))

    orders: tuple[str | int, ...]
    if config.order_mode == "fixed":
        orders = config.fixed_orders
    else:
        orders = (config.order_mode,)

    cells: list[CellResult] = []
    index = 0
    for target in config.targets:
        for window in config.windows:
            for occlusion in config.occlusions:
                for order in orders:
                    scenario = ScenarioSpec(
                        target=target,
                        camera=config.camera,
                        frame_rate=config.frame_rate,
                        duration=window,
                        occlusion_fraction=occlusion,
                        seed=mix64(config.seed ^ index),
                    )
                    result = run_experiment(
                        scenario,
                        config.noise,
                        config.trials,
                        methods=config.methods,
                        order=order,
                        candidates=config.candidates,
                        normalize_time=config.time_normalization,
                        paper_literal=config.paper_literal_ridge,
                        compute_eta=compute_eta,
                    )
                    cells.append(
                        CellResult(
                            target=target,
                            window=window,
                            occlusion=occlusion,
                            order=order,
                            result=result,
                        )
                    )
                    index += 1

    aggregate_rows = tuple(_aggregate_rows(config, cells))
    trial_rows = tuple(_trial_rows(config, cells))
    return RunOutput(
        config=config,
        cells=tuple(cells),
        aggregate_rows=aggregate_rows,
        trial_rows=trial_rows,
    )


def _cell_order_fields(cell: CellResult) -> tuple[str, str | int]:
    if cell.order == ORDER_AUTO:
        return ORDER_AUTO, ""
    if cell.order == ORDER_MATCHED:
        return ORDER_MATCHED, cell.target.true_order
    return "fixed", int(cell.order)


def _aggregate_rows(config: ExperimentConfig, cells: list[CellResult]) -> Iterable[dict]:
    for cell in cells:
        order_mode, order = _cell_order_fields(cell)
        for method in config.methods:
            agg = cell.result.aggregates[method]
            yield {
                "config": config.name,
                "target": cell.target.name,
                "true_order": cell.target.true_order,
                "camera": config.camera.kind,
                "frame_rate_hz": config.frame_rate,
                "window_s": cell.window,
                "occlusion": cell.occlusion,
                "order_mode": order_mode,
                "order": order,
                "method": method,
                "trials": agg.trials,
                "failures": agg.failures,
                "mean_rms_m": agg.mean_rms,
                "median_rms_m": agg.median_rms,
                "std_rms_m": agg.std_rms,
                "mean_objective": agg.mean_objective,
                "selection_accuracy": agg.selection_accuracy,
                "mean_eta": agg.mean_eta,
            }


def _trial_rows(config: ExperimentConfig, cells: list[CellResult]) -> Iterable[dict]:
    for cell in cells:
        order_mode, order = _cell_order_fields(cell)
        for trial in cell.result.trial_results:
            for method in config.methods:
                outcome = trial.per_method[method]
                yield {
                    "config": config.name,
                    "target": cell.target.name,
                    "window_s": cell.window,
                    "occlusion": cell.occlusion,
                    "order_mode": order_mode,
                    "order": order,
                    "method": method,
                    "trial": trial.trial,
                    "trial_seed": trial.seed,
                    "rms_m": outcome.rms,
                    "camera_rms_m": outcome.camera_rms,
                    "selected_order": outcome.selected_order,
                    "ridge_param": outcome.ridge_param,
                    "objective": outcome.objective,
                    "eta": trial.eta,
                    "error": outcome.error,
                }


def format_value(v) -> str:
    """Deterministic CSV cell formatting; floats at 17 significant digits."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_csv(path: Path, columns: list[str], rows: Iterable[dict]) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])


def write_outputs(output: RunOutput, out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    aggregate = out_dir / f"{output.config.name}_aggregate.csv"
    trials = out_dir / f"{output.config.name}_trials.csv"
    write_csv(aggregate, AGGREGATE_COLUMNS, output.aggregate_rows)
    write_csv(trials, TRIAL_COLUMNS, output.trial_rows)
    return aggregate, trials
