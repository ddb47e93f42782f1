"""Command-line front end: ``simulate``, ``optimize``, ``rollout`` and ``render``.

Exit codes: 0 success, 1 usage or config error, 2 simulation divergence,
3 optimization did not converge.
"""

import argparse
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import default_config, load_config
from .errors import ConfigError, DivergenceError, EvaluationError, SingularMatrixError
from .fileio import (
    TableFormatError,
    format_table,
    read_trajectory,
    write_atomic,
    write_json,
    write_trajectory,
)
from .integrator import RolloutConfig, Trajectory, energy_drift, rollout_with_controls, simulate
from .render import frame_indices, render_svg
from .solver import solve
from .transcription import build_nlp, unpack

ENV_OUT_DIR = "ACROBOT_OUT_DIR"
DEFAULT_OUT_DIR = "acrobot-out"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DIVERGED = 2
EXIT_NOT_CONVERGED = 3



class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; that code is reserved for divergence
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def resolve_out_dir(cli_value, cfg):
    """``--out``, then the config's output directory, then ``$ACROBOT_OUT_DIR``."""
    for candidate in (cli_value, cfg.output_dir, os.environ.get(ENV_OUT_DIR)):
        if candidate:
            return Path(candidate)
    return Path(DEFAULT_OUT_DIR)


def _write_frames(traj, lengths, out_dir, n_frames):
    paths = []
    for i, k in enumerate(frame_indices(traj.times.size, n_frames)):
        path = out_dir / f"frame_{i:03d}.svg"
        write_atomic(path, render_svg(lengths, traj.states[k, : traj.n_links], traj.times[k]))
        paths.append(path)
    return paths


def cmd_simulate(cfg, out_dir, initial=None, duration=None, dt=None, frames=None):
    """Passive rollout; writes ``trajectory.csv`` and optional SVG frames.

    Returns a summary with the relative energy drift.
    """
    x0 = cfg.initial_state if initial is None else np.asarray(initial, dtype=float)
    if x0.size != 2 * cfg.n_links:
        raise UsageError(f"initial state needs {2 * cfg.n_links} values, got {x0.size}")
    horizon = cfg.duration if duration is None else duration
    step = cfg.dt if dt is None else dt
    if not (horizon > 0 and step > 0):
        raise UsageError("duration and dt must be positive")
    traj = simulate(cfg.params, x0, RolloutConfig((0.0, horizon), step))
    # passive runs still carry explicit zero-control columns
    traj = Trajectory(traj.times, traj.states, np.zeros((traj.times.size, cfg.params.n_controls)))
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_dir / "trajectory.csv", traj)
    files = [out_dir / "trajectory.csv"]
    if frames is not None or "svg" in cfg.formats:
        files += _write_frames(traj, cfg.params.lengths, out_dir, frames or cfg.frames)
    drift = energy_drift(cfg.params, traj)
    print(f"simulated {horizon:g} s at dt={step:g}: {traj.times.size} samples")
    print(f"relative energy drift: {drift:.3e}")
    return {"energy_drift": drift, "samples": int(traj.times.size), "files": [str(f) for f in files]}


def cmd_optimize(cfg, out_dir):
    """Solve the swing-up; writes the solution, joint-angle data and a report.

    Returns the :class:`~acrobot.solver.SolveReport`.
    """
    spec = cfg.ocp
    report = solve(build_nlp(spec), cfg.solver)
    states, controls = unpack(report.y_star, spec.n_state, spec.n_control)
    times = spec.times
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(out_dir / "solution.csv", Trajectory(times, states, controls))
    n = cfg.n_links
    write_atomic(
        out_dir / "joint_angles.csv",
        format_table(["t"] + [f"q{i + 1}" for i in range(n)], np.hstack([times[:, None], states[:, :n]])),
    )
    payload = report.as_dict()
    payload["model"] = cfg.model
    payload["n_knots"] = spec.n_knots
    payload["t_final"] = spec.t_final
    payload["max_abs_control"] = float(np.max(np.abs(controls)))
    write_json(out_dir / "report.json", payload)
    print(
        f"status={report.status} cost={report.final_cost:.6g} "
        f"violation={report.final_constraint_violation:.3e} "
        f"outer={report.outer_iterations} evaluations={report.inner_evaluations}"
    )
    return report


def rollout_comparison(cfg, reference, dt):
    """Integrate the reference's controls and compare at its knot times.

    Returns the rollout trajectory, the knot-sampled rollout states and the
    summary dictionary written by :func:`cmd_rollout`.
    """
    if reference.controls is None:
        raise UsageError("solution file has no control columns")
    if reference.n_links != cfg.n_links:
        raise UsageError(f"solution has {reference.n_links} links but the model has {cfg.n_links}")
    if reference.controls.shape[1] != cfg.params.n_controls:
        raise UsageError(
            f"solution has {reference.controls.shape[1]} controls, model expects {cfg.params.n_controls}"
        )
    traj = rollout_with_controls(cfg.params, reference.states[0], reference, dt)
    idx = np.searchsorted(traj.times, reference.times)
    at_knots = traj.states[idx]
    deviation = np.abs(at_knots - reference.states)
    summary = {
        "dt": dt,
        "max_deviation": deviation.max(axis=0).tolist(),
        "final_deviation": deviation[-1].tolist(),
        "max_deviation_overall": float(deviation.max()),
    }
    return traj, at_knots, summary


def cmd_rollout(cfg, solution_path, out_dir, dt=None):
    """Replay a solution's controls; writes a comparison table and deviation summary."""
    reference = read_trajectory(solution_path)
    step = cfg.dt if dt is None else dt
    _, at_knots, summary = rollout_comparison(cfg, reference, step)
    n = cfg.n_links
    names = [f"q{i + 1}" for i in range(n)] + [f"qd{i + 1}" for i in range(n)]
    header = ["t"] + [f"{c}_ref" for c in names] + [f"{c}_sim" for c in names]
    rows = np.hstack([reference.times[:, None], reference.states, at_knots])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_atomic(out_dir / "rollout.csv", format_table(header, rows))
    write_json(out_dir / "rollout_summary.json", summary)
    print("final-state deviation: " + " ".join(f"{c}={v:.3e}" for c, v in zip(names, summary["final_deviation"])))
    print(f"max deviation over knots: {summary['max_deviation_overall']:.3e}")
    return summary


def cmd_render(traj_path, out_dir, n_frames, lengths=None):
    """Write ``n_frames`` SVG frames of a stored trajectory."""
    if n_frames < 1:
        raise UsageError(f"frame count must be at least 1, got {n_frames}")
    traj = read_trajectory(traj_path)
    lengths = (1.0,) * traj.n_links if lengths is None else tuple(lengths)
    if len(lengths) != traj.n_links:
        raise UsageError(f"trajectory has {traj.n_links} links but {len(lengths)} lengths were given")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _write_frames(traj, lengths, out_dir, n_frames)
    print(f"wrote {len(paths)} frames to {out_dir}")
    return paths


def _state_list(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--model", choices=("acrobot2", "acrobot3"), help="model when no --config is given")
    common.add_argument("--out", help=f"output directory (default: config, then ${ENV_OUT_DIR})")
    common.add_argument("--verbose", action="store_true", help="log solver iterations")

    parser = _Parser(prog="acrobot", description="Acrobot simulation and swing-up optimization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="passive simulation")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--initial", type=_state_list, help="initial state q1,..,qn,qd1,..,qdn")
    p.add_argument("--frames", type=int, help="also render N SVG frames")

    sub.add_parser("optimize", parents=[common], help="swing-up trajectory optimization")

    p = sub.add_parser("rollout", parents=[common], help="replay a solution's controls")
    p.add_argument("solution", help="solution table written by optimize")
    p.add_argument("--dt", type=float)

    p = sub.add_parser("render", parents=[common], help="SVG frames of a trajectory")
    p.add_argument("trajectory", help="trajectory table")
    p.add_argument("--frames", type=int, default=None)
    return parser


def _run(args):
    cfg = load_config(args.config) if args.config else default_config(args.model or "acrobot2")
    if args.verbose:
        cfg = dataclasses.replace(cfg, solver=dataclasses.replace(cfg.solver, verbose=True))
    out_dir = resolve_out_dir(args.out, cfg)
    if args.command == "simulate":
        cmd_simulate(cfg, out_dir, args.initial, args.duration, args.dt, args.frames)
        return EXIT_OK
    if args.command == "optimize":
        report = cmd_optimize(cfg, out_dir)
        return EXIT_OK if report.converged else EXIT_NOT_CONVERGED
    if args.command == "rollout":
        cmd_rollout(cfg, args.solution, out_dir, args.dt)
        return EXIT_OK
    lengths = cfg.params.lengths if args.config or args.model else None
    cmd_render(args.trajectory, out_dir, cfg.frames if args.frames is None else args.frames, lengths)
    return EXIT_OK


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s %(message)s")
    try:
        return _run(args)
    except (UsageError, ConfigError, TableFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, SingularMatrixError) as exc:
        print(f"error: simulation diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except EvaluationError as exc:
        print(f"error: optimization failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
