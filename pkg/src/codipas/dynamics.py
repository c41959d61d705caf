"""Deterministic counterparts of the learning schemes.

Vector fields (replicator, adjusted replicator, smooth best response and the
coupled/two-timescale systems), a fixed-step RK4 integrator, and the explicit
solutions of the smooth best-response and replicator equations against a
given opponent path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import _kernels, accel
from .game import GameError, GameSpec, as_mixed, payoff_vector
from .learners import softmax

SYSTEMS = ("replicator", "adjusted_replicator", "smooth_br", "coupled_thm1", "composite_T1", "composite_T2")
_CODES = {
    "replicator": _kernels.SYS_REPLICATOR,
    "adjusted_replicator": _kernels.SYS_ADJUSTED,
    "smooth_br": _kernels.SYS_SMOOTH_BR,
    "coupled_thm1": _kernels.SYS_COUPLED,
    "composite_T1": _kernels.SYS_T1,
    "composite_T2": _kernels.SYS_T2,
}

BR_TIE_TOL = 1e-9

GPath = Union[np.ndarray, Callable[[float], np.ndarray], tuple]


class IntegrationError(RuntimeError):
    pass


def replicator_field(spec: GameSpec, player: int, own, opp) -> np.ndarray:
    """``own(a) * (u(e_a, opp) - sum_a' own(a') u(e_a', opp))`` with the player's own payoffs."""
    x = as_mixed(own)
    p = payoff_vector(spec, player, opp)
    if p.size != x.size:
        raise GameError(f"strategy has {x.size} entries, player {player} has {p.size} actions")
    return x * (p - x @ p)


def adjusted_replicator_field(spec: GameSpec, player: int, own, opp, k: float = 1.0) -> np.ndarray:
    """Replicator field divided by the average payoff (needs positive payoffs)."""
    x = as_mixed(own)
    p = payoff_vector(spec, player, opp)
    avg = x @ p
    if not avg > 0:
        raise GameError(f"adjusted replicator needs a positive average payoff, got {avg}; "
                        "shift payoffs with the constant c")
    return k * x * (p - avg) / avg


def smooth_br_field(spec: GameSpec, player: int, own, opp, epsilon: float, k: float = 1.0) -> np.ndarray:
    x = as_mixed(own)
    return k * (softmax(payoff_vector(spec, player, opp), epsilon) - x)


def logit_response(spec: GameSpec, player: int, opp, epsilon: float) -> np.ndarray:
    """Boltzmann-Gibbs response of ``player`` to the opponent's mixed strategy."""
    return softmax(payoff_vector(spec, player, opp), epsilon)


@dataclass(frozen=True)
class OdeState:
    f: np.ndarray | None
    g: np.ndarray | None
    u_hat1: np.ndarray | None = None
    time: float = 0.0


def coupled_thm1_field(spec: GameSpec, state: OdeState, epsilon: float, k1: float = 1.0, k2: float = 1.0,
                       p2_adjusted: bool = False) -> OdeState:
    """Payoff estimates of player 1, its smooth best response, and player 2's replicator.

    Returns the time derivative as an :class:`OdeState` with ``time = 1``.
    """
    f, g = state.f, state.g
    u1 = payoff_vector(spec, 1, g)
    df = k1 * (softmax(u1, epsilon) - as_mixed(f))
    if p2_adjusted:
        dg = adjusted_replicator_field(spec, 2, g, f, k2)
    else:
        dg = k2 * replicator_field(spec, 2, g, f)
    du = u1 - np.asarray(state.u_hat1, dtype=float)
    return OdeState(df, dg, du, 1.0)


def composite_T1_field(spec: GameSpec, f, epsilon: float) -> np.ndarray:
    """Player 1's replicator against player 2's logit response ``beta_2(f)``."""
    f = as_mixed(f)
    return replicator_field(spec, 1, f, logit_response(spec, 2, f, epsilon))


def _xi1(spec: GameSpec, g, t: float, f0) -> np.ndarray:
    # f0-weighted logit of the payoff vector at inverse temperature t
    w = t * payoff_vector(spec, 1, g) + np.log(as_mixed(f0))
    return softmax(w, 1.0)


def composite_T2_field(spec: GameSpec, g, t: float, epsilon: float, f0=None) -> np.ndarray:
    """``beta_2(xi_1(g, t)) - g``; non-autonomous, defined for ``t > 0``."""
    if not t > 0:
        raise GameError(f"composite_T2 needs t > 0 (logit temperature 1/t), got {t}")
    g = as_mixed(g)
    m = spec.shape[0]
    f0 = np.full(m, 1.0 / m) if f0 is None else f0
    return logit_response(spec, 2, _xi1(spec, g, t, f0), epsilon) - g


@dataclass(frozen=True)
class DynamicsSystem:
    """A named system on the game ``spec``.

    ``freeze`` holds one player's strategy constant (``"f"`` or ``"g"``), which
    turns the two-player systems into the single-player equations solved in
    closed form below. ``f0`` is the weighting of player 1's logit in
    ``composite_T2`` (uniform by default).
    """

    kind: str
    spec: GameSpec
    epsilon: float = 0.05
    k1: float = 1.0
    k2: float = 1.0
    p2_adjusted: bool = False
    freeze: str = "none"
    f0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SYSTEMS:
            raise GameError(f"unknown system {self.kind!r}; valid names: {', '.join(SYSTEMS)}")
        if not self.epsilon > 0:
            raise GameError(f"epsilon must be > 0, got {self.epsilon}")
        if self.freeze not in ("none", "f", "g"):
            raise GameError(f"freeze must be 'none', 'f' or 'g', got {self.freeze!r}")
        if self.f0 is not None:
            f0 = as_mixed(self.f0, self.spec.shape[0])
            if not np.all(f0 > 0):
                raise GameError("f0 must be interior")

    @property
    def carries_u_hat1(self) -> bool:
        return self.kind == "coupled_thm1"

    def _params(self) -> np.ndarray:
        return np.array([self.epsilon, self.k1, self.k2, float(self.p2_adjusted),
                         float(self.freeze == "f"), float(self.freeze == "g"), self.spec.constant_c])

    def _f0(self) -> np.ndarray:
        m = self.spec.shape[0]
        return np.full(m, 1.0 / m) if self.f0 is None else np.asarray(self.f0, dtype=float)

    def pack(self, state: OdeState) -> np.ndarray:
        m, n = self.spec.shape
        if self.kind == "composite_T1":
            return as_mixed(state.f, m).copy()
        if self.kind == "composite_T2":
            return as_mixed(state.g, n).copy()
        parts = [as_mixed(state.f, m), as_mixed(state.g, n)]
        if self.carries_u_hat1:
            u = payoff_vector(self.spec, 1, state.g) if state.u_hat1 is None else state.u_hat1
            u = np.asarray(u, dtype=float)
            if u.shape != (m,):
                raise GameError(f"u_hat1 must have {m} entries")
            parts.append(u)
        return np.concatenate(parts)

    def simplex_blocks(self) -> np.ndarray:
        m, n = self.spec.shape
        if self.kind == "composite_T1":
            return np.array([[0, m]], dtype=np.int64)
        if self.kind == "composite_T2":
            return np.array([[0, n]], dtype=np.int64)
        return np.array([[0, m], [m, m + n]], dtype=np.int64)

    def unpack(self, y: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """Full ``(f, g, u_hat1)`` for a flat state; derived blocks are filled in."""
        m, n = self.spec.shape
        if self.kind == "composite_T1":
            f = y[:m]
            return f, logit_response(self.spec, 2, f, self.epsilon), None
        if self.kind == "composite_T2":
            g = y[:n]
            return _xi1(self.spec, g, t, self._f0()), g, None
        u = y[m + n:] if self.carries_u_hat1 else None
        return y[:m], y[m:m + n], u

    def field(self, y: np.ndarray, t: float = 0.0) -> np.ndarray:
        """Right-hand side on the flat state (through the active kernel backend)."""
        m, n = self.spec.shape
        out = np.empty_like(y)
        ok = accel.kernels().system_field(_CODES[self.kind], np.ascontiguousarray(self.spec.expected_matrix),
                                          self._params(), self._f0(), float(t), np.ascontiguousarray(y),
                                          m, n, out)
        if not ok:
            raise GameError("adjusted replicator met a non-positive average payoff; shift payoffs with c")
        return out


@dataclass
class OdeTrajectory:
    system: DynamicsSystem
    times: np.ndarray
    states: np.ndarray
    max_drift: float
    f: np.ndarray = field(init=False)
    g: np.ndarray = field(init=False)
    u_hat1: np.ndarray | None = field(init=False)

    def __post_init__(self):
        fs, gs, us = [], [], []
        for t, y in zip(self.times, self.states):
            f, g, u = self.system.unpack(y, t)
            fs.append(f)
            gs.append(g)
            us.append(u)
        self.f = np.array(fs)
        self.g = np.array(gs)
        self.u_hat1 = np.array(us) if self.system.carries_u_hat1 else None

    def final(self) -> OdeState:
        u = None if self.u_hat1 is None else self.u_hat1[-1]
        return OdeState(self.f[-1], self.g[-1], u, float(self.times[-1]))


def integrate(system: DynamicsSystem, init: OdeState, t_end: float, dt: float = 1e-3,
              stride: int = 1) -> OdeTrajectory:
    """Classical RK4 with fixed step ``dt`` from ``init.time`` to ``t_end``.

    After every step the strategy blocks are clipped at zero and renormalized
    when their sum drifts from one by more than 1e-12. Every ``stride``-th
    step (and the last) is recorded.
    """
    if not dt > 0:
        raise GameError(f"dt must be > 0, got {dt}")
    if stride < 1:
        raise GameError(f"stride must be >= 1, got {stride}")
    t0 = float(init.time)
    if t0 < 0:
        raise GameError(f"initial time must be >= 0, got {t0}")
    if system.kind == "composite_T2" and not t0 > 0:
        raise GameError("composite_T2 is undefined at t = 0 (logit temperature 1/t); start at t0 = dt")
    if not t_end > t0:
        raise GameError(f"t_end must exceed the initial time {t0}, got {t_end}")
    y = system.pack(init)
    nsteps = max(1, int(np.ceil((t_end - t0) / dt - 1e-9)))
    nrec = 1 + nsteps // stride + (1 if nsteps % stride else 0)
    rec_t = np.empty(nrec)
    rec_y = np.empty((nrec, y.size))
    err = np.zeros(4)
    m, n = system.spec.shape
    pos = accel.kernels().rk4_integrate(
        _CODES[system.kind], np.ascontiguousarray(system.spec.expected_matrix), system._params(),
        system._f0(), y, t0, float(dt), nsteps, float(t_end), int(stride), system.simplex_blocks(),
        rec_t, rec_y, err)
    if pos < 0:
        if err[0] == _kernels.ERR_ADJUSTED:
            raise IntegrationError(f"adjusted replicator met a non-positive average payoff at t={err[1]:.6g}")
        raise IntegrationError(f"non-finite state at t={err[1]:.6g}")
    return OdeTrajectory(system, rec_t[:pos], rec_y[:pos], float(err[1]))


def _sample_path(g_path: GPath, t: float, stride: float) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(g_path, tuple):
        times, values = (np.asarray(v, dtype=float) for v in g_path)
        if times[0] != 0.0 or not np.isclose(times[-1], t):
            raise GameError("sampled path must span [0, t]")
        return times, values
    if callable(g_path):
        k = max(1, int(np.ceil(t / stride - 1e-9)))
        times = np.linspace(0.0, t, k + 1)
        return times, np.array([as_mixed(g_path(s)) for s in times])
    raise GameError("g_path must be a strategy, a callable or a (times, values) tuple")


def _is_constant(g_path) -> bool:
    return isinstance(g_path, (np.ndarray, list)) and np.ndim(g_path) == 1


def explicit_sbr_solution(spec: GameSpec, f0, g_path: GPath, t: float, epsilon: float,
                          stride: float = 1e-3) -> np.ndarray:
    """Solution at time ``t`` of ``f' = beta_1(g_t) - f`` from ``f0``.

    A constant ``g_path`` uses the closed form
    ``(1 - e^-t) beta_1(g) + e^-t f0``; a time-varying path uses trapezoidal
    quadrature of ``beta_1(g_s) e^s`` on a grid of step ``stride``.
    """
    if t < 0:
        raise GameError(f"t must be >= 0, got {t}")
    f0 = as_mixed(f0, spec.shape[0])
    if t == 0:
        return f0.copy()
    if _is_constant(g_path):
        b = logit_response(spec, 1, g_path, epsilon)
        return -np.expm1(-t) * b + np.exp(-t) * f0
    times, gs = _sample_path(g_path, t, stride)
    z = np.array([logit_response(spec, 1, g, epsilon) for g in gs])
    # weights e^(s - t) keep the integrand bounded
    integral = np.trapezoid(z * np.exp(times - t)[:, None], times, axis=0)
    return np.exp(-t) * f0 + integral


def _payoff_integral(spec: GameSpec, g_path: GPath, t: float, stride: float) -> np.ndarray:
    if _is_constant(g_path):
        return t * payoff_vector(spec, 1, g_path)
    times, gs = _sample_path(g_path, t, stride)
    return spec.expected_matrix @ np.trapezoid(gs, times, axis=0)


def explicit_replicator_solution(spec: GameSpec, f0, g_path: GPath, t: float,
                                 stride: float = 1e-3) -> np.ndarray:
    """Solution at time ``t`` of player 1's replicator equation against ``g_path``.

    ``f(a) ~ f0(a) exp(integral_0^t u1(e_a, g_s) ds)``, integral by trapezoid
    for a time-varying path.
    """
    if t < 0:
        raise GameError(f"t must be >= 0, got {t}")
    f0 = as_mixed(f0, spec.shape[0])
    if not np.all(f0 > 0):
        raise GameError("replicator closed form needs an interior f0")
    w = _payoff_integral(spec, g_path, t, stride) + np.log(f0)
    return softmax(w, 1.0)


def prop1_equivalence_check(spec: GameSpec, g_path: GPath, t: float, stride: float = 1e-3) -> float:
    """Sup-norm gap between the replicator solution (uniform start) and the logit of the time-averaged payoff.

    The averaged payoff vector is ``u1(e_a, gbar_t)`` with
    ``gbar_t = (1/t) integral_0^t g_s ds`` on the same quadrature grid, and the
    logit temperature is ``1/t``.
    """
    if not t > 0:
        raise GameError(f"t must be > 0, got {t}")
    m = spec.shape[0]
    lhs = explicit_replicator_solution(spec, np.full(m, 1.0 / m), g_path, t, stride)
    if _is_constant(g_path):
        gbar = as_mixed(g_path)
    else:
        times, gs = _sample_path(g_path, t, stride)
        gbar = np.trapezoid(gs, times, axis=0) / t
    rhs = softmax(spec.expected_matrix @ gbar, 1.0 / t)
    return float(np.max(np.abs(lhs - rhs)))


def best_response_set(spec: GameSpec, g, tol: float = BR_TIE_TOL) -> np.ndarray:
    """Indices of player 1's pure best responses to ``g`` (ties within ``tol``)."""
    p = payoff_vector(spec, 1, g)
    return np.flatnonzero(p >= p.max() - tol)


def slow_learner_limit(spec: GameSpec, f0, g) -> np.ndarray:
    """``f0`` restricted to the pure best responses to ``g`` and renormalized."""
    f0 = as_mixed(f0, spec.shape[0])
    if not np.all(f0 > 0):
        raise GameError("f0 must be interior")
    br = best_response_set(spec, g)
    out = np.zeros_like(f0)
    out[br] = f0[br] / f0[br].sum()
    return out
