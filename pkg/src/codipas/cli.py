"""Command-line front end: ``codipas {solve,simulate,ode,compare}``.

Exit codes: 0 success, 2 input error, 3 I/O error, 4 learner violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import output
from .config import ConfigError, ExperimentConfig, load_config, parse_matrix, with_overrides
from .dynamics import SYSTEMS, DynamicsSystem, IntegrationError, OdeState, integrate
from .game import GameError, GameSpec, NoiseModel
from .harness import LearnerViolation, compare_to_ode, run_aggregate, run_episode
from .oracle import solve_logit, solve_saddle

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3
EXIT_LEARNER = 4


class InputError(Exception):
    pass


def _parse_matrix_arg(text: str) -> np.ndarray:
    """``"5,2;1,3"`` (rows separated by ``;``) or a JSON/YAML-style ``[[5,2],[1,3]]``."""
    text = text.strip()
    try:
        if text.startswith("["):
            rows = json.loads(text)
        else:
            rows = [[float(x) for x in r.split(",")] for r in text.split(";")]
    except ValueError as e:
        raise InputError(f"cannot parse matrix {text!r}: {e}") from None
    try:
        return np.array(parse_matrix(rows, "--matrix"))
    except ConfigError as e:
        raise InputError(str(e)) from None


def _parse_vector(text: str | None, name: str):
    if text is None:
        return None
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InputError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def _fmt_vec(v) -> str:
    return "[" + ", ".join(f"{x:.12g}" for x in v) + "]"


def _load(args) -> ExperimentConfig | None:
    if args.config is None:
        return None
    try:
        cfg = load_config(args.config)
    except (FileNotFoundError, IsADirectoryError) as e:
        raise InputError(f"cannot read config: {e}") from None
    return with_overrides(cfg, horizon=args.horizon, seeds=args.seeds, epsilon=args.epsilon,
                          out_dir=args.out, plots=True if args.plots else None)


def _out_dir(args, cfg: ExperimentConfig | None) -> Path:
    path = Path(args.out if args.out is not None else (cfg.out_dir if cfg is not None else "out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_all(directory: Path, files: dict[str, str]) -> None:
    # single collector: every file is written here, after all runs finish
    for name, text in files.items():
        output.write_text(directory / name, text)


def _game_from(args, cfg: ExperimentConfig | None) -> GameSpec:
    if getattr(args, "matrix", None) is not None:
        c = args.constant_c if args.constant_c is not None else 0.0
        return GameSpec(_parse_matrix_arg(args.matrix), c, NoiseModel())
    if cfg is None:
        raise InputError("give --matrix or --config")
    return cfg.game()


# ------------------------------------------------------------- commands

def cmd_solve(args) -> int:
    cfg = _load(args)
    spec = _game_from(args, cfg)
    sol = solve_saddle(spec)
    print(f"saddle point: f* = {_fmt_vec(sol.f_star)}  g* = {_fmt_vec(sol.g_star)}  value = {sol.value:.12g}")
    record = {"f_star": sol.f_star.tolist(), "g_star": sol.g_star.tolist(), "value": sol.value}
    eps = args.epsilon
    if eps is not None:
        le = solve_logit(spec, eps)
        print(f"logit equilibrium (epsilon={eps:g}): f = {_fmt_vec(le.f_eps)}  g = {_fmt_vec(le.g_eps)}  "
              f"residual = {le.residual:.3g}  iterations = {le.iterations}")
        record["logit"] = {"epsilon": eps, "f": le.f_eps.tolist(), "g": le.g_eps.tolist(),
                           "residual": le.residual, "iterations": le.iterations, "converged": le.converged}
    line = json.dumps(record)
    print(line)
    if args.out is not None:
        output.write_text(_out_dir(args, cfg) / "solve.json", line + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    if cfg is None:
        raise InputError("simulate needs --config")
    exp = cfg.experiment()
    for msg in filter(None, (exp.p1.timescale_warning(), exp.p2.timescale_warning())):
        print(f"warning: {msg}", file=sys.stderr)
    directory = _out_dir(args, cfg)
    rep = run_aggregate(exp, jobs=args.jobs)
    files = {f"seed_{t.seed}.csv": output.trajectory_csv(t) for t in rep.trajectories}
    files["aggregate.csv"] = output.aggregate_csv(rep)
    files["final_metrics.csv"] = output.final_metrics_csv(rep)
    if cfg.plots:
        for t in rep.trajectories:
            files.update(output.trajectory_plots(t, f"seed_{t.seed}"))
        files.update(output.aggregate_plots(rep))
    _write_all(directory, files)
    last = {k: float(v[-1]) for k, v in rep.mean.items()}
    print(f"{len(rep.seeds)} seed(s), horizon {exp.horizon}: mean final exploitability "
          f"{last['exploitability']:.6g}, dist to saddle {last['dist_saddle_sup']:.6g}")
    print(f"wrote {len(files)} file(s) to {directory}")
    return EXIT_OK


def cmd_ode(args) -> int:
    cfg = _load(args)
    spec = _game_from(args, cfg)
    o = cfg.ode if cfg is not None and cfg.ode is not None else None
    name = args.system or (o.system if o else None)
    if name is None:
        raise InputError(f"give --system (one of: {', '.join(SYSTEMS)})")
    if name not in SYSTEMS:
        raise InputError(f"unknown system {name!r}; valid names: {', '.join(SYSTEMS)}")

    def pick(value, attr, default):
        if value is not None:
            return value
        return getattr(o, attr) if o is not None else default

    eps = pick(args.epsilon, "epsilon", 0.05)
    system = DynamicsSystem(name, spec, eps, pick(args.k1, "k1", 1.0), pick(args.k2, "k2", 1.0),
                            bool(args.p2_adjusted or (o.p2_adjusted if o else False)),
                            pick(args.freeze, "freeze", "none"))
    dt = pick(args.dt, "dt", 1e-3)
    t_end = pick(args.t_end, "t_end", 20.0)
    t0 = args.t0 if args.t0 is not None else (dt if name == "composite_T2" else 0.0)
    m, n = spec.shape
    f0 = _parse_vector(args.init_f, "--init-f")
    g0 = _parse_vector(args.init_g, "--init-g")
    init = OdeState(np.full(m, 1.0 / m) if f0 is None else f0, np.full(n, 1.0 / n) if g0 is None else g0,
                    None, t0)
    traj = integrate(system, init, t_end, dt, args.stride)
    sol = solve_saddle(spec)
    directory = _out_dir(args, cfg)
    files = {f"ode_{name}.csv": output.ode_csv(traj, sol.f_star, sol.g_star)}
    if args.plots or (cfg is not None and cfg.plots):
        files.update(output.ode_plots(traj, sol.f_star, sol.g_star, prefix=f"ode_{name}"))
    _write_all(directory, files)
    s = output.ode_series(traj, sol.f_star, sol.g_star)
    print(f"{name}: t = {traj.times[-1]:.6g}, f = {_fmt_vec(traj.f[-1])}, g = {_fmt_vec(traj.g[-1])}, "
          f"exploitability {s['exploitability'][-1]:.6g}, max renormalization drift {traj.max_drift:.3g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    if cfg is None:
        raise InputError("compare needs --config")
    o = cfg.ode
    name = args.system or (o.system if o else None)
    if name is None:
        raise InputError(f"give --system (one of: {', '.join(SYSTEMS)})")
    if name not in SYSTEMS:
        raise InputError(f"unknown system {name!r}; valid names: {', '.join(SYSTEMS)}")
    spec = _game_from(args, cfg) if args.matrix is not None else cfg.game()
    base = cfg.dynamics() if o is not None else None
    eps = args.epsilon if args.epsilon is not None else (base.epsilon if base else cfg.p1.learner.epsilon)
    system = DynamicsSystem(name, spec, eps, base.k1 if base else 1.0, base.k2 if base else 1.0,
                            base.p2_adjusted if base else False, base.freeze if base else "none")
    exp = cfg.experiment()
    if spec.shape != exp.spec.shape:
        raise InputError(f"ODE game is {spec.shape[0]}x{spec.shape[1]} but the experiment game is "
                         f"{exp.spec.shape[0]}x{exp.spec.shape[1]}")
    dt = args.dt if args.dt is not None else (o.dt if o else 1e-3)
    directory = _out_dir(args, cfg)
    files = {}
    finals = []
    for seed in exp.seeds:
        traj = run_episode(exp, seed)
        tau, dist = compare_to_ode(traj, system, cfg.clock(), dt)
        files[f"compare_seed_{seed}.csv"] = output.distance_csv(traj.times, tau, dist)
        if cfg.plots:
            files[f"compare_seed_{seed}.svg"] = output.distance_plot(tau, dist)
        finals.append((seed, tau[-1], dist[-1]))
    _write_all(directory, files)
    for seed, tau, d in finals:
        print(f"seed {seed}: tau = {tau:.6g}, final distance {d:.6g}")
    return EXIT_OK


# --------------------------------------------------------------- parser

def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (YAML)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    common.add_argument("--plots", action="store_true", help="also write SVG charts")
    common.add_argument("--horizon", type=int, help="override run.horizon")
    common.add_argument("--seeds", type=_seed_list, help="override run.seeds, e.g. 0,1,2")
    common.add_argument("--epsilon", type=float, help="override the logit temperature of both players")

    p = argparse.ArgumentParser(prog="codipas", description="Heterogeneous learning in zero-sum stochastic games.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="saddle point (and logit equilibrium with --epsilon)")
    s.add_argument("--matrix", help='payoff matrix, e.g. "5,2;1,3"')
    s.add_argument("--constant-c", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("simulate", parents=[common], help="run the configured learners over all seeds")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ode", parents=[common], help="integrate a deterministic system")
    s.add_argument("--system", help=f"one of: {', '.join(SYSTEMS)}")
    s.add_argument("--matrix", help='payoff matrix, e.g. "5,2;1,3" (default: the config game)')
    s.add_argument("--constant-c", type=float)
    s.add_argument("--k1", type=float)
    s.add_argument("--k2", type=float)
    s.add_argument("--p2-adjusted", action="store_true")
    s.add_argument("--freeze", choices=("none", "f", "g"))
    s.add_argument("--dt", type=float)
    s.add_argument("--t-end", type=float)
    s.add_argument("--t0", type=float, help="start time (composite_T2 needs t0 > 0; default dt)")
    s.add_argument("--stride", type=int, default=1, help="record every n-th step")
    s.add_argument("--init-f", help="initial player 1 strategy, comma-separated")
    s.add_argument("--init-g", help="initial player 2 strategy, comma-separated")
    s.set_defaults(func=cmd_ode)

    s = sub.add_parser("compare", parents=[common], help="distance between learner paths and an ODE")
    s.add_argument("--system", help=f"one of: {', '.join(SYSTEMS)}")
    s.add_argument("--matrix", help="game for the ODE (default: the config game)")
    s.add_argument("--constant-c", type=float)
    s.add_argument("--dt", type=float)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except LearnerViolation as e:
        print(f"error: learner violation: {e}", file=sys.stderr)
        return EXIT_LEARNER
    except (InputError, GameError, IntegrationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
