"""CSV and SVG writers for trajectories, aggregates and ODE runs.

Every CSV uses a header row, LF line endings and 17 significant digits, so
a value written and read back is the same double. Plots never touch the CSV
bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .dynamics import OdeTrajectory
from .game import GameSpec
from .harness import AggregateReport, Trajectory
from .svg import line_chart


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def trajectory_columns(m: int, n: int) -> list[str]:
    return (["t"] + [f"f_{i}" for i in range(m)] + [f"g_{j}" for j in range(n)]
            + [f"uhat1_{i}" for i in range(m)] + [f"uhat2_{j}" for j in range(n)]
            + ["payoff1", "payoff2", "exploitability", "dist_saddle_sup"])


def render_table(header: list[str], columns: list[np.ndarray], integer_first: bool = False) -> str:
    lines = [",".join(header)]
    for r in range(len(columns[0])):
        cells = []
        for k, col in enumerate(columns):
            v = col[r]
            cells.append(str(int(v)) if integer_first and k == 0 else fmt(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _trajectory_table(times, f, g, u1, u2, p1, p2, expl, dist, integer_time: bool) -> str:
    m, n = f.shape[1], g.shape[1]
    cols = ([np.asarray(times)] + [f[:, i] for i in range(m)] + [g[:, j] for j in range(n)]
            + [u1[:, i] for i in range(m)] + [u2[:, j] for j in range(n)] + [p1, p2, expl, dist])
    return render_table(trajectory_columns(m, n), cols, integer_first=integer_time)


def trajectory_csv(traj: Trajectory) -> str:
    return _trajectory_table(traj.times, traj.f, traj.g, traj.u_hat1, traj.u_hat2, traj.payoff1, traj.payoff2,
                             traj.exploitability, traj.dist_saddle_sup, True)


def aggregate_csv(rep: AggregateReport) -> str:
    """``t`` followed by ``<series>_mean`` and ``<series>_std`` for every trajectory series."""
    keys = list(rep.mean)
    header = ["t"] + [f"{k}_{s}" for k in keys for s in ("mean", "std")]
    cols = [rep.times]
    for k in keys:
        cols += [rep.mean[k], rep.std[k]]
    return render_table(header, cols, integer_first=True)


def final_metrics_csv(rep: AggregateReport) -> str:
    keys = list(next(iter(rep.final.values())))
    lines = [",".join(["seed"] + keys)]
    for seed, row in rep.final.items():
        lines.append(",".join([str(seed)] + [fmt(row[k]) for k in keys]))
    return "\n".join(lines) + "\n"


def ode_series(traj: OdeTrajectory, f_star: np.ndarray, g_star: np.ndarray) -> dict[str, np.ndarray]:
    """Columns of the shared trajectory schema for an ODE run.

    Estimates the system does not carry are filled with the true payoff
    vectors; payoffs are the expected payoffs at the current strategies.
    """
    spec: GameSpec = traj.system.spec
    a = spec.expected_matrix
    u1_true = traj.g @ a.T
    u2_true = spec.constant_c - traj.f @ a
    u1 = u1_true if traj.u_hat1 is None else traj.u_hat1
    p1 = np.einsum("ti,ij,tj->t", traj.f, a, traj.g)
    expl = u1_true.max(axis=1) - (traj.f @ a).min(axis=1)
    dist = np.maximum(np.abs(traj.f - f_star).max(axis=1), np.abs(traj.g - g_star).max(axis=1))
    return {"u_hat1": u1, "u_hat2": u2_true, "payoff1": p1, "payoff2": spec.constant_c - p1,
            "exploitability": expl, "dist_saddle_sup": dist}


def ode_csv(traj: OdeTrajectory, f_star: np.ndarray, g_star: np.ndarray) -> str:
    s = ode_series(traj, f_star, g_star)
    return _trajectory_table(traj.times, traj.f, traj.g, s["u_hat1"], s["u_hat2"], s["payoff1"], s["payoff2"],
                             s["exploitability"], s["dist_saddle_sup"], False)


def distance_csv(steps: np.ndarray, tau: np.ndarray, dist: np.ndarray) -> str:
    return render_table(["t", "tau", "distance"], [np.asarray(steps), tau, dist], integer_first=True)


def write_text(path: Path, text: str) -> None:
    # newline="" keeps LF endings on every platform
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _group_plots(times, data: dict[str, np.ndarray], prefix: str, xlabel: str) -> dict[str, str]:
    groups = {
        "strategies": {k: v for k, v in data.items() if k.startswith(("f_", "g_"))},
        "estimates": {k: v for k, v in data.items() if k.startswith("u_hat")},
        "payoffs": {k: v for k, v in data.items() if k in ("payoff1", "payoff2")},
        "metrics": {k: v for k, v in data.items() if k in ("exploitability", "dist_saddle_sup", "estimate_error")},
    }
    return {f"{prefix}_{name}.svg": line_chart(times, series, title=f"{prefix} {name}", xlabel=xlabel)
            for name, series in groups.items() if series}


def trajectory_plots(traj: Trajectory, prefix: str) -> dict[str, str]:
    return _group_plots(traj.times, traj.series(), prefix, "t")


def aggregate_plots(rep: AggregateReport, prefix: str = "aggregate") -> dict[str, str]:
    return _group_plots(rep.times, rep.mean, prefix, "t")


def ode_plots(traj: OdeTrajectory, f_star: np.ndarray, g_star: np.ndarray, prefix: str = "ode") -> dict[str, str]:
    s = ode_series(traj, f_star, g_star)
    data = {f"f_{i}": traj.f[:, i] for i in range(traj.f.shape[1])}
    data.update({f"g_{j}": traj.g[:, j] for j in range(traj.g.shape[1])})
    for key in ("u_hat1", "u_hat2"):
        data.update({f"{key}_{i}": s[key][:, i] for i in range(s[key].shape[1])})
    data.update({k: s[k] for k in ("payoff1", "payoff2", "exploitability", "dist_saddle_sup")})
    return _group_plots(traj.times, data, prefix, "time")


def distance_plot(tau: np.ndarray, dist: np.ndarray) -> str:
    return line_chart(tau, {"distance": dist}, title="sup-norm distance to ODE", xlabel="tau")

