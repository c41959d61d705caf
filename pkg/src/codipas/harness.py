"""Stochastic learning episodes, seed aggregation and ODE comparison."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, accel
from .dynamics import DynamicsSystem, OdeState, integrate, logit_response
from .game import GameError, GameSpec, RandomSource, as_mixed
from .learners import LearnerConfig, LearnerState, RateSchedule, _inverse_cdf, rate, step
from .oracle import solve_saddle

# CRL0/RL2 steps are capped so that lambda * U <= STEP_MARGIN < 1
STEP_MARGIN = 0.99
CHUNK = 1 << 16

_SCHEME_CODES = {"CRL0": _kernels.CRL0, "CRL1": _kernels.CRL1, "CRL2": _kernels.CRL2,
                 "RL2": _kernels.RL2, "RL3": _kernels.RL3}


class LearnerViolation(RuntimeError):
    """A learner precondition failed mid-episode."""

    def __init__(self, seed: int, step: int, player: int, value: float, reason: str):
        self.seed, self.step, self.player, self.value = seed, step, player, value
        super().__init__(f"seed {seed}, step {step}, player {player}: {reason} (value {value!r})")


@dataclass(frozen=True)
class Experiment:
    spec: GameSpec
    p1: LearnerConfig
    p2: LearnerConfig
    horizon: int
    seeds: tuple = (0,)
    record_stride: int = 1
    initial_f: np.ndarray | None = None
    initial_g: np.ndarray | None = None
    initial_u1: np.ndarray | None = None
    initial_u2: np.ndarray | None = None

    def __post_init__(self):
        m, n = self.spec.shape
        if int(self.horizon) < 1:
            raise GameError(f"horizon must be >= 1, got {self.horizon}")
        if int(self.record_stride) < 1:
            raise GameError(f"record_stride must be >= 1, got {self.record_stride}")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds:
            raise GameError("at least one seed is required")
        for s in seeds:
            if not 0 <= s < 2**64:
                raise GameError(f"seed {s} is not a 64-bit unsigned integer")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "record_stride", int(self.record_stride))
        f = np.full(m, 1.0 / m) if self.initial_f is None else as_mixed(self.initial_f, m)
        g = np.full(n, 1.0 / n) if self.initial_g is None else as_mixed(self.initial_g, n)
        u1 = np.zeros(m) if self.initial_u1 is None else np.asarray(self.initial_u1, dtype=float)
        u2 = np.zeros(n) if self.initial_u2 is None else np.asarray(self.initial_u2, dtype=float)
        if u1.shape != (m,) or u2.shape != (n,):
            raise GameError("initial estimates must match the action counts")
        for name, v in (("initial_f", f), ("initial_g", g), ("initial_u1", u1), ("initial_u2", u2)):
            object.__setattr__(self, name, v)
        for player in (1, 2):
            self.player_constants(player)

    def config(self, player: int) -> LearnerConfig:
        return self.p1 if player == 1 else self.p2

    def player_constants(self, player: int) -> tuple[float, float, float]:
        """``(lambda_cap, rl3_n, rl3_C)`` for a player.

        Sign and range requirements are checked here on the noise-free
        payoffs; excursions caused by noise surface at run time as
        :class:`LearnerViolation`.
        """
        cfg = self.config(player)
        lo, hi = self.spec.payoff_bounds(player)
        a = self.spec.base_matrix if player == 1 else self.spec.constant_c - self.spec.base_matrix
        base_lo, base_hi = float(a.min()), float(a.max())
        k = self.spec.shape[player - 1]
        n = float(k if cfg.rl3_n is None else cfg.rl3_n)
        big_c = float(hi if cfg.rl3_C is None else cfg.rl3_C)
        if cfg.scheme in ("CRL1", "CRL2"):
            return 1.0, n, big_c
        if base_lo < 0:
            raise GameError(f"player {player} uses {cfg.scheme}, which needs nonnegative payoffs, but payoffs "
                            f"reach {base_lo} before noise; raise the constant c")
        if cfg.scheme == "RL3":
            if not big_c > 0 or big_c < base_hi:
                raise GameError(f"player {player}: RL3 constant C={big_c} must be >= the payoff bound {base_hi}")
            return 1.0, n, big_c
        cap = STEP_MARGIN / hi if hi > 0 else 1.0
        return cap, n, big_c

    def n_records(self) -> int:
        h, s = self.horizon, self.record_stride
        return 1 + h // s + (1 if h % s else 0)


@dataclass
class Trajectory:
    seed: int
    times: np.ndarray
    f: np.ndarray
    g: np.ndarray
    u_hat1: np.ndarray
    u_hat2: np.ndarray
    payoff1: np.ndarray
    payoff2: np.ndarray
    exploitability: np.ndarray = field(default=None)
    dist_saddle_sup: np.ndarray = field(default=None)
    estimate_error: np.ndarray = field(default=None)

    def compute_metrics(self, spec: GameSpec, f_star: np.ndarray, g_star: np.ndarray) -> None:
        a = spec.expected_matrix
        u1 = self.g @ a.T
        u2 = spec.constant_c - self.f @ a
        self.exploitability = u1.max(axis=1) - (self.f @ a).min(axis=1)
        self.dist_saddle_sup = np.maximum(np.abs(self.f - f_star).max(axis=1), np.abs(self.g - g_star).max(axis=1))
        self.estimate_error = np.maximum(np.abs(self.u_hat1 - u1).max(axis=1), np.abs(self.u_hat2 - u2).max(axis=1))

    def series(self) -> dict[str, np.ndarray]:
        out = {}
        for name in ("f", "g", "u_hat1", "u_hat2"):
            arr = getattr(self, name)
            for i in range(arr.shape[1]):
                out[f"{name}_{i}"] = arr[:, i]
        for name in ("payoff1", "payoff2", "exploitability", "dist_saddle_sup", "estimate_error"):
            out[name] = getattr(self, name)
        return out


def _kernel_inputs(exp: Experiment):
    schemes = np.array([_SCHEME_CODES[exp.p1.scheme], _SCHEME_CODES[exp.p2.scheme]], dtype=np.int64)
    sched = np.array([[cfg.lam.to_row(), cfg.mu.to_row()] for cfg in (exp.p1, exp.p2)])
    par = np.empty((2, 4))
    for i, cfg in enumerate((exp.p1, exp.p2)):
        cap, n, big_c = exp.player_constants(i + 1)
        par[i] = (cfg.epsilon, n, big_c, cap)
    return schemes, sched, par


_ERRORS = {
    _kernels.ERR_STEP_BOUND: "step bound lambda * U outside [0, 1)",
    _kernels.ERR_RL3_RANGE: "RL3 payoff outside [0, C]",
}


def run_episode(exp: Experiment, seed: int, saddle=None) -> Trajectory:
    """One seeded run of ``exp.horizon`` steps, recorded every ``record_stride`` steps.

    Per step, both players draw actions from their current strategies, one
    payoff sample is shared by both, and each applies its scheme update. Row 0
    is the initial state (payoffs NaN); the final step is always recorded.
    """
    spec = exp.spec
    m, n = spec.shape
    rs = RandomSource(seed)
    gen1, gen2, genv = rs.player(1), rs.player(2), rs.environment()
    schemes, sched, par = _kernel_inputs(exp)
    f, g = exp.initial_f.copy(), exp.initial_g.copy()
    u1, u2 = exp.initial_u1.copy(), exp.initial_u2.copy()
    nrec = exp.n_records()
    rec_t = np.empty(nrec, dtype=np.int64)
    rec_f, rec_g = np.empty((nrec, m)), np.empty((nrec, n))
    rec_u1, rec_u2 = np.empty((nrec, m)), np.empty((nrec, n))
    rec_p1, rec_p2 = np.full(nrec, np.nan), np.full(nrec, np.nan)
    rec_t[0], rec_f[0], rec_g[0], rec_u1[0], rec_u2[0] = 0, f, g, u1, u2
    pos = 1
    has_noise = spec.noise.kind != "none"
    base = np.ascontiguousarray(spec.base_matrix)
    err = np.zeros(4)
    kern = accel.kernels()
    zeros = np.zeros(CHUNK)
    for start in range(0, exp.horizon, CHUNK):
        k = min(CHUNK, exp.horizon - start)
        w1, w2 = gen1.random(k), gen2.random(k)
        wn = genv.random(k) if has_noise else zeros[:k]
        pos = kern.run_block(base, spec.constant_c, spec.noise.lo, spec.noise.hi, has_noise, schemes, sched, par,
                             f, g, u1, u2, start, k, exp.horizon, exp.record_stride, w1, w2, wn,
                             rec_t, rec_f, rec_g, rec_u1, rec_u2, rec_p1, rec_p2, pos, err)
        if pos < 0:
            raise LearnerViolation(seed, int(err[2]), int(err[1]), float(err[3]), _ERRORS.get(err[0], "violation"))
    traj = Trajectory(seed, rec_t, rec_f, rec_g, rec_u1, rec_u2, rec_p1, rec_p2)
    saddle = solve_saddle(spec) if saddle is None else saddle
    traj.compute_metrics(spec, saddle.f_star, saddle.g_star)
    return traj


def run_episode_reference(exp: Experiment, seed: int) -> Trajectory:
    """Step-by-step run through :mod:`codipas.learners`; slow, for cross-checking."""
    spec = exp.spec
    rs = RandomSource(seed)
    gen1, gen2, genv = rs.player(1), rs.player(2), rs.environment()
    states = [LearnerState(exp.initial_f, exp.initial_u1), LearnerState(exp.initial_g, exp.initial_u2)]
    consts = [exp.player_constants(1), exp.player_constants(2)]
    rows = [(0, states[0], states[1], math.nan, math.nan)]
    has_noise = spec.noise.kind != "none"
    for t in range(exp.horizon):
        if t % CHUNK == 0:
            k = min(CHUNK, exp.horizon - t)
            w1, w2 = gen1.random(k), gen2.random(k)
            wn = genv.random(k) if has_noise else np.zeros(k)
        j = t % CHUNK
        a1 = _inverse_cdf(states[0].strategy, w1[j])
        a2 = _inverse_cdf(states[1].strategy, w2[j])
        pay = spec.base_matrix[a1, a2]
        if has_noise:
            pay = pay + spec.noise.draw(wn[j])
        pays = (float(pay), spec.constant_c - float(pay))
        for i, (a, cfg) in enumerate(((a1, exp.p1), (a2, exp.p2))):
            cap, n, big_c = consts[i]
            lam = min(rate(cfg.lam, t), cap)
            states[i] = step(cfg, states[i], a, pays[i], lam, rate(cfg.mu, t), n, big_c)
        done = t + 1
        if done % exp.record_stride == 0 or done == exp.horizon:
            rows.append((done, states[0], states[1], pays[0], pays[1]))
    traj = Trajectory(
        seed,
        np.array([r[0] for r in rows], dtype=np.int64),
        np.array([r[1].strategy for r in rows]),
        np.array([r[2].strategy for r in rows]),
        np.array([r[1].estimates for r in rows]),
        np.array([r[2].estimates for r in rows]),
        np.array([r[3] for r in rows]),
        np.array([r[4] for r in rows]),
    )
    saddle = solve_saddle(spec)
    traj.compute_metrics(spec, saddle.f_star, saddle.g_star)
    return traj


@dataclass
class AggregateReport:
    times: np.ndarray
    seeds: tuple
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]
    final: dict[int, dict[str, float]]
    trajectories: list[Trajectory]


def _episode_job(args):
    exp, seed, backend = args
    accel.set_backend(backend)
    try:
        return run_episode(exp, seed)
    except LearnerViolation as e:
        return e


def run_aggregate(exp: Experiment, jobs: int = 1) -> AggregateReport:
    """Run every seed and reduce to across-seed mean and standard deviation per recorded time."""
    if jobs > 1 and len(exp.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_episode_job, [(exp, s, accel.backend()) for s in exp.seeds]))
    else:
        results = []
        for s in exp.seeds:
            try:
                results.append(run_episode(exp, s))
            except LearnerViolation as e:
                results.append(e)
    for r in results:
        if isinstance(r, LearnerViolation):
            raise r
    return aggregate(results)


def aggregate(trajs: list[Trajectory]) -> AggregateReport:
    series = [t.series() for t in trajs]
    mean, std = {}, {}
    for key in series[0]:
        stack = np.vstack([s[key] for s in series])
        mean[key] = stack.mean(axis=0)
        std[key] = stack.std(axis=0)
    final = {t.seed: {k: float(v[-1]) for k, v in s.items()} for t, s in zip(trajs, series)}
    return AggregateReport(trajs[0].times, tuple(t.seed for t in trajs), mean, std, final, trajs)


def tracking_error(spec: GameSpec, traj: Trajectory, epsilon: float) -> np.ndarray:
    """``||g_t - beta_2(f_t)||_inf`` along a trajectory (fast player 2 tracking its logit response)."""
    return np.array([np.abs(g - logit_response(spec, 2, f, epsilon)).max() for f, g in zip(traj.f, traj.g)])


def sa_clock(schedule: RateSchedule, times: np.ndarray) -> np.ndarray:
    """Stochastic-approximation time ``tau_t = sum_{k<t} rate(k)`` at the given steps."""
    times = np.asarray(times, dtype=np.int64)
    horizon = int(times.max()) if times.size else 0
    cum = np.concatenate([[0.0], np.cumsum(rate_array(schedule, horizon))])
    return cum[times]


def rate_array(schedule: RateSchedule, horizon: int) -> np.ndarray:
    """``rate(schedule, k)`` for ``k = 0..horizon-1``, vectorized."""
    fam, p1, p2, scale = schedule.flatten()
    t = np.arange(horizon, dtype=float)
    if fam == "R1":
        r = 1.0 / (t + 1.0)
    elif fam == "R2":
        r = 1.0 / ((t + 2.0) * np.log(t + 2.0))
    elif fam == "R3":
        r = 1.0 / (np.sqrt(t + 2.0) * np.log(t + 2.0) ** 2)
    elif fam == "R4":
        r = (t + p2) ** (-p1)
    else:
        r = np.full(horizon, p1)
    return scale * r


def compare_to_ode(traj: Trajectory, system: DynamicsSystem, clock: RateSchedule,
                   dt: float = 1e-3, u_hat1=None) -> tuple[np.ndarray, np.ndarray]:
    """Sup-norm distance between a stochastic path and the ODE flow on the SA clock.

    Returns ``(tau, distance)`` at the recorded steps. The ODE starts from the
    trajectory's first recorded state; strategies the system does not carry
    as state (e.g. player 2 in ``composite_T1``) are still compared through
    their derived values.
    """
    m, n = system.spec.shape
    if traj.f.shape[1] != m or traj.g.shape[1] != n:
        raise GameError(f"trajectory is {traj.f.shape[1]}x{traj.g.shape[1]}, system game is {m}x{n}")
    tau = sa_clock(clock, traj.times)
    t0 = tau[0]
    if system.kind == "composite_T2" and t0 <= 0:
        t0 = dt
    u0 = traj.u_hat1[0] if u_hat1 is None else u_hat1
    init = OdeState(traj.f[0], traj.g[0], u0 if system.carries_u_hat1 else None, t0)
    if tau[-1] <= t0:
        return tau, np.zeros_like(tau)
    ode = integrate(system, init, float(tau[-1]), dt)
    fi = np.column_stack([np.interp(tau, ode.times, ode.f[:, i]) for i in range(m)])
    gi = np.column_stack([np.interp(tau, ode.times, ode.g[:, j]) for j in range(n)])
    if system.kind == "composite_T1":
        dist = np.abs(traj.f - fi).max(axis=1)
    elif system.kind == "composite_T2":
        dist = np.abs(traj.g - gi).max(axis=1)
    else:
        dist = np.maximum(np.abs(traj.f - fi).max(axis=1), np.abs(traj.g - gi).max(axis=1))
    return tau, dist


def strictly_dominated(spec: GameSpec, action: int) -> bool:
    """Whether player 1's pure ``action`` is strictly dominated by another pure action."""
    a = spec.expected_matrix
    return any(np.all(a[other] > a[action]) for other in range(a.shape[0]) if other != action)


def dominated_strategy_probe(exp: Experiment, action: int) -> tuple[float, list[Trajectory]]:
    """Seed-mean final probability of a strictly dominated player 1 action.

    Returns the mean and the trajectories. Raises :class:`GameError` if the
    action is not strictly dominated by a pure action in the expected game.
    """
    if not 0 <= action < exp.spec.shape[0]:
        raise GameError(f"action {action} out of range")
    if not strictly_dominated(exp.spec, action):
        raise GameError(f"player 1 action {action} is not strictly dominated")
    trajs = [run_episode(exp, s) for s in exp.seeds]
    return float(np.mean([t.f[-1, action] for t in trajs])), trajs


def tail_slope(times: np.ndarray, values: np.ndarray, fraction: float = 0.1) -> float:
    """Least-squares slope over the last ``fraction`` of recorded points."""
    k = max(2, int(math.ceil(fraction * len(times))))
    return float(np.polyfit(np.asarray(times[-k:], dtype=float), values[-k:], 1)[0])


def with_overrides(exp: Experiment, horizon=None, seeds=None, epsilon=None) -> Experiment:
    changes = {}
    if horizon is not None:
        changes["horizon"] = horizon
    if seeds is not None:
        changes["seeds"] = tuple(seeds)
    if epsilon is not None:
        changes["p1"] = exp.p1.with_epsilon(epsilon)
        changes["p2"] = exp.p2.with_epsilon(epsilon)
    return replace(exp, **changes) if changes else exp
