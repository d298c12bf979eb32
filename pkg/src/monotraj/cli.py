"""Command-line interface.

Subcommands:
  solve              reconstruct a trajectory from an observation file
  experiment         run a Monte Carlo experiment config (preset name or path)
  reconstructability compute the camera/target reconstructability index
  simulate           emit a synthetic observation file from a config

Every failure prints a single machine-parsable line to stderr,
``error[<code>]: <message>``, and exits nonzero.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io_files
from . import reconstructability as reconstructability_defaults
from .errors import MonotrajError, TimeMismatchError
from .estimator import (
    METHOD_LEAST_SQUARES,
    METHOD_RIDGE,
    assemble_system,
    select_order,
    solve_least_squares,
    solve_ridge,
)
from .experiments import PRESET_NAMES, load_config, run_config, write_outputs
from .reconstructability import (
    StackedTrajectory,
    detect_degeneracy,
    reconstructability_index,
)
from .simulate import ScenarioSpec, apply_noise, generate_scenario, occlude, trial_streams
from .trajectory import eval_trajectory

_METHODS = {"ls": METHOD_LEAST_SQUARES, "least_squares": METHOD_LEAST_SQUARES, "ridge": METHOD_RIDGE}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except MonotrajError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="monotraj",
        description="3D trajectory reconstruction of a moving point from monocular sight-rays",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a trajectory from an observation file")
    p_solve.add_argument("input", help="observation CSV (ray or pixel schema)")
    group = p_solve.add_mutually_exclusive_group()
    group.add_argument("--order", type=int, default=None, help="fixed polynomial order")
    group.add_argument(
        "--auto-order",
        action="store_true",
        help="select the order automatically among --candidates",
    )
    p_solve.add_argument(
        "--candidates",
        type=int,
        nargs="+",
        default=[0, 1, 2, 3],
        help="candidate orders for --auto-order (default: 0 1 2 3)",
    )
    p_solve.add_argument(
        "--method", choices=sorted(_METHODS), default="ridge", help="solver (default: ridge)"
    )
    p_solve.add_argument(
        "--paper-literal-ridge",
        action="store_true",
        help="use the subtractive regularizer (A^T A - r I) instead of + r I",
    )
    p_solve.add_argument(
        "--no-time-normalization",
        action="store_true",
        help="assemble in raw time instead of normalizing times to [0, 1]",
    )
    p_solve.add_argument("--truth", default=None, help="trajectory CSV to score against")
    p_solve.add_argument("--out", default=None, help="result JSON path (default: <input>.result.json)")
    _add_degeneracy_threshold_flags(p_solve)
    p_solve.set_defaults(handler=_cmd_solve)

    p_exp = sub.add_parser("experiment", help="run a Monte Carlo experiment config")
    p_exp.add_argument(
        "config", help=f"preset name ({', '.join(PRESET_NAMES)}) or YAML config path"
    )
    p_exp.add_argument("--out", required=True, help="output directory for the CSV files")
    p_exp.add_argument("--trials", type=int, default=None, help="override the config's trial count")
    p_exp.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    p_exp.set_defaults(handler=_cmd_experiment)

    p_rec = sub.add_parser(
        "reconstructability", help="reconstructability index of camera vs target trajectories"
    )
    p_rec.add_argument("camera", help="camera trajectory CSV (or an observation file)")
    p_rec.add_argument("truth", help="target trajectory CSV")
    p_rec.add_argument("--order", type=int, required=True, help="polynomial order")
    _add_degeneracy_threshold_flags(p_rec)
    p_rec.set_defaults(handler=_cmd_reconstructability)

    p_sim = sub.add_parser("simulate", help="emit a synthetic observation file from a config")
    p_sim.add_argument("config", help="preset name or YAML config path")
    p_sim.add_argument("--out", required=True, help="observation CSV to write")
    p_sim.add_argument("--truth-out", default=None, help="also write the target truth CSV")
    p_sim.add_argument("--camera-out", default=None, help="also write the camera truth CSV")
    p_sim.add_argument("--trial", type=int, default=0, help="trial index for the noise draws")
    p_sim.add_argument("--no-noise", action="store_true", help="write the noiseless observations")
    p_sim.add_argument("--target", default=None, help="target name when the config lists several")
    p_sim.add_argument("--window", type=float, default=None, help="window length (default: first)")
    p_sim.add_argument(
        "--occlusion", type=float, default=None, help="occlusion fraction (default: first)"
    )
    p_sim.set_defaults(handler=_cmd_simulate)

    return parser


def _add_degeneracy_threshold_flags(parser) -> None:
    # defaults suit meter-scale scenarios; rescale for other unit systems
    parser.add_argument(
        "--concurrent-residual",
        type=float,
        default=reconstructability_defaults.CONCURRENT_RESIDUAL_M,
        help="mean triangulation residual (m) below which rays count as "
        "concurrent (default: %(default)g)",
    )
    parser.add_argument(
        "--parallel-tolerance",
        type=float,
        default=reconstructability_defaults.PARALLEL_DOT_TOLERANCE,
        help="1 - |dot| tolerance for the all-rays-parallel flag "
        "(default: %(default)g)",
    )
    parser.add_argument(
        "--expressible-residual",
        type=float,
        default=reconstructability_defaults.EXPRESSIBLE_RELATIVE_RESIDUAL,
        help="relative camera polynomial-fit residual below which the camera "
        "path counts as expressible (default: %(default)g)",
    )


def _degeneracy_kwargs(args) -> dict:
    return {
        "concurrent_residual_m": args.concurrent_residual,
        "parallel_dot_tolerance": args.parallel_tolerance,
        "expressible_relative_residual": args.expressible_residual,
    }


def _cmd_solve(args) -> int:
    observations = io_files.read_observations(args.input)
    normalize = not args.no_time_normalization
    method = _METHODS[args.method]

    try:
        if args.order is None or args.auto_order:
            report = select_order(
                observations,
                args.candidates,
                method=method,
                normalize_time=normalize,
                paper_literal=args.paper_literal_ridge,
            )
        else:
            system = assemble_system(observations, args.order, normalize_time=normalize)
            if method == METHOD_LEAST_SQUARES:
                report = solve_least_squares(system)
            else:
                report = solve_ridge(system, paper_literal=args.paper_literal_ridge)
    except MonotrajError as exc:
        _print_degeneracy_flags(
            observations, args.order if args.order is not None else 0,
            _degeneracy_kwargs(args),
        )
        raise exc

    degeneracy = detect_degeneracy(
        observations, report.order_selected, **_degeneracy_kwargs(args)
    )
    report = dataclasses.replace(report, degeneracy=degeneracy)

    times = np.array([o.time for o in observations])
    truth_rms = None
    eta = None
    if args.truth is not None:
        truth = io_files.read_trajectory(args.truth)
        if truth.times.shape != times.shape or not np.array_equal(truth.times, times):
            raise TimeMismatchError(
                "truth times do not match observation times; "
                f"observation count {len(times)}, truth count {len(truth.times)}"
            )
        estimates = eval_trajectory(report.trajectory, times)
        truth_rms = float(np.sqrt(np.mean(np.sum((estimates - truth.positions) ** 2, axis=1))))
        camera = StackedTrajectory.from_positions(
            times, [o.camera_center for o in observations]
        )
        eta = _eta_or_nan(camera, truth, report.order_selected)

    out_path = Path(args.out) if args.out else Path(args.input).with_suffix(".result.json")
    result = io_files.result_to_dict(
        report, times, time_normalization=normalize, truth_rms=truth_rms, eta=eta
    )
    io_files.write_result(out_path, result)

    print(f"observations: {len(observations)}")
    print(f"order: {report.order_selected}" + (" (auto)" if args.order is None or args.auto_order else ""))
    print(f"method: {report.method}")
    print(f"ridge parameter: {report.ridge_param:.6g}")
    print(f"objective (sum squared ray errors): {report.objective:.6g}")
    print(f"condition number: {report.condition_number:.6g}")
    flags = sorted(degeneracy.flags)
    print(f"degeneracy flags: {', '.join(flags) if flags else 'none'}")
    if truth_rms is not None:
        print(f"rms vs truth: {truth_rms:.6g} m")
        print(f"reconstructability: {_format_eta(eta)}")
    print(f"result written to: {out_path}")
    return 0


def _print_degeneracy_flags(observations, order: int, kwargs: dict) -> None:
    """Best-effort diagnostics when a solve is refused."""
    try:
        degeneracy = detect_degeneracy(observations, order, **kwargs)
    except MonotrajError:
        return
    flags = sorted(degeneracy.flags)
    print(f"degeneracy flags: {', '.join(flags) if flags else 'none'}", file=sys.stderr)


def _eta_or_nan(camera, truth, order: int) -> float:
    try:
        return reconstructability_index(camera, truth, order)
    except MonotrajError:
        return float("nan")


def _format_eta(eta: float | None) -> str:
    if eta is None or np.isnan(eta):
        return "indeterminate"
    if np.isinf(eta):
        return "inf"
    return format(eta, ".17g")


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    output = run_config(config, trials=args.trials, seed=args.seed)
    aggregate_path, trials_path = write_outputs(output, Path(args.out))
    for row in output.aggregate_rows:
        rms = row["mean_rms_m"]
        rms_text = f"{rms:.4g} m" if rms is not None else "n/a"
        acc = row["selection_accuracy"]
        acc_text = f"  selection accuracy {acc:.3f}" if acc is not None else ""
        print(
            f"{row['target']:>12s}  window {row['window_s']:g} s  occlusion "
            f"{row['occlusion']:g}  {row['method']:>13s}  mean RMS {rms_text}"
            f"  failures {row['failures']}{acc_text}"
        )
    print(f"aggregate written to: {aggregate_path}")
    print(f"trials written to: {trials_path}")
    return 0


def _cmd_reconstructability(args) -> int:
    camera = io_files.read_trajectory(args.camera)
    truth = io_files.read_trajectory(args.truth)
    try:
        eta = reconstructability_index(camera, truth, args.order)
        print(f"reconstructability: {_format_eta(eta)}")
    except MonotrajError as exc:
        if exc.code == "indeterminate":
            print("reconstructability: indeterminate (camera and target both expressible)")
        else:
            raise
    # Degeneracy flags need sight-rays; report them when the camera file is an
    # observation file, otherwise report what the trajectories alone support.
    try:
        observations = io_files.read_observations(args.camera)
    except MonotrajError:
        observations = None
    if observations is not None:
        degeneracy = detect_degeneracy(observations, args.order, **_degeneracy_kwargs(args))
        flags = sorted(degeneracy.flags)
        print(f"degeneracy flags: {', '.join(flags) if flags else 'none'}")
        print(f"common point residual: {degeneracy.common_point_residual:.6g} m")
        fit = degeneracy.camera_order_fit[args.order]
        print(f"camera order-{args.order} relative fit residual: {fit:.6g}")
    else:
        print("degeneracy flags: unavailable (no sight-rays in the camera file)")
    return 0


def _cmd_simulate(args) -> int:
    config = load_config(args.config)
    target = config.targets[0]
    if args.target is not None:
        matches = [t for t in config.targets if t.name == args.target]
        if not matches:
            names = ", ".join(t.name for t in config.targets)
            print(f"error[config]: no target named {args.target!r} (have: {names})", file=sys.stderr)
            return 2
        target = matches[0]
    window = args.window if args.window is not None else config.windows[0]
    occlusion = args.occlusion if args.occlusion is not None else config.occlusions[0]

    scenario = ScenarioSpec(
        target=target,
        camera=config.camera,
        frame_rate=config.frame_rate,
        duration=window,
        occlusion_fraction=occlusion,
        seed=config.seed,
    )
    observations, truth, camera_truth = generate_scenario(scenario)
    if not args.no_noise:
        _, noise_seed, occlusion_seed = trial_streams(scenario.seed, args.trial)
        observations = apply_noise(observations, config.noise, noise_seed)
        if occlusion > 0.0:
            observations = occlude(observations, occlusion, occlusion_seed)

    io_files.write_observations(args.out, observations)
    print(f"observations written to: {args.out} ({len(observations)} rows)")
    if args.truth_out:
        io_files.write_trajectory(args.truth_out, truth)
        print(f"target truth written to: {args.truth_out}")
    if args.camera_out:
        io_files.write_trajectory(args.camera_out, camera_truth)
        print(f"camera truth written to: {args.camera_out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
