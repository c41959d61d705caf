"""Exact saddle points and logit equilibria of the expected matrix game."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import accel
from .game import GameError, GameSpec, as_mixed, exploitability

MAX_ACTIONS = 12
SADDLE_TOL = 1e-9


@dataclass(frozen=True)
class SaddleSolution:
    f_star: np.ndarray
    g_star: np.ndarray
    value: float


@dataclass(frozen=True)
class LogitEquilibrium:
    f_eps: np.ndarray
    g_eps: np.ndarray
    epsilon: float
    residual: float
    iterations: int
    converged: bool
    history: np.ndarray | None = None


def _solve_square(a: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Equalizing strategy for the column player on a square block.

    Solves ``a y = v 1, sum(y) = 1``; returns None when the bordered system is
    singular.
    """
    k = a.shape[0]
    sys = np.zeros((k + 1, k + 1))
    sys[:k, :k] = a
    sys[:k, k] = -1.0
    sys[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    if np.linalg.cond(sys) > 1e12:
        return None
    sol = np.linalg.solve(sys, rhs)
    return sol[:k], float(sol[k])


def _verify(a: np.ndarray, f: np.ndarray, g: np.ndarray, value: float, tol: float) -> bool:
    return bool(np.max(a @ g) <= value + tol and np.min(f @ a) >= value - tol)


def _candidates(a: np.ndarray):
    m, n = a.shape
    # Extreme optimal strategies live on square, nonsingular blocks, so
    # square supports are enough.
    for k in range(1, min(m, n) + 1):
        for rows in itertools.combinations(range(m), k):
            for cols in itertools.combinations(range(n), k):
                block = a[np.ix_(rows, cols)]
                col = _solve_square(block)
                row = _solve_square(block.T)
                if col is None or row is None:
                    continue
                y, v = col
                x, _ = row
                if y.min() < -SADDLE_TOL or x.min() < -SADDLE_TOL:
                    continue
                f = np.zeros(m)
                g = np.zeros(n)
                f[list(rows)] = np.clip(x, 0.0, None)
                g[list(cols)] = np.clip(y, 0.0, None)
                f /= f.sum()
                g /= g.sum()
                if _verify(a, f, g, v, SADDLE_TOL):
                    yield SaddleSolution(f, g, float(f @ a @ g))


def solve_saddle(spec: GameSpec, enumerate_all: bool = False):
    """Saddle point of the expected game by support enumeration.

    Supports are visited by size, then lexicographically by (rows, cols); the
    first verified pair is returned. With ``enumerate_all`` every verified
    support solution is returned as a list instead.
    """
    a = spec.expected_matrix
    m, n = a.shape
    if m > MAX_ACTIONS or n > MAX_ACTIONS:
        raise GameError(f"support enumeration is capped at {MAX_ACTIONS}x{MAX_ACTIONS}, got {m}x{n}")
    if enumerate_all:
        return list(_candidates(a))
    for sol in _candidates(a):
        return sol
    raise RuntimeError("no saddle point found; the minimax theorem guarantees one")


def solve_logit(spec: GameSpec, epsilon: float, damping: float = 0.5, tol: float = 1e-10,
                max_iters: int = 1_000_000, f0=None, g0=None,
                history: bool = False) -> LogitEquilibrium:
    """Logit (Boltzmann-Gibbs) equilibrium by damped fixed-point iteration.

    The fixed-point residual ``x - beta(x)`` is driven to zero by damped
    Newton steps: each iteration moves a fraction (at most ``damping``) along
    the Newton direction, halving the fraction until the sup-norm residual
    decreases. Plain relaxation toward ``beta(x)`` spirals for small
    ``epsilon`` because the response map rotates; the Newton direction does
    not. ``residual`` is the sup-norm distance of both strategies to their
    logit responses. With ``history`` the per-iteration residuals are kept on
    the result. Non-convergence is reported through ``converged``.
    """
    if not epsilon > 0:
        raise GameError(f"epsilon must be > 0, got {epsilon}")
    if not 0 < damping <= 1:
        raise GameError(f"damping must be in (0, 1], got {damping}")
    if not tol > 0:
        raise GameError(f"tol must be > 0, got {tol}")
    a = np.ascontiguousarray(spec.expected_matrix)
    m, n = a.shape
    f = np.full(m, 1.0 / m) if f0 is None else as_mixed(f0, m).copy()
    g = np.full(n, 1.0 / n) if g0 is None else as_mixed(g0, n).copy()
    # Player 2's logit response is invariant to the constant c, so the
    # minimizer simply sees -a.
    hist = np.full(int(max_iters) if history else 0, np.nan)
    res, iters = accel.kernels().logit_iterate(a, f, g, float(epsilon), float(damping), float(tol),
                                               int(max_iters), hist)
    return LogitEquilibrium(f, g, float(epsilon), float(res), int(iters), bool(res <= tol),
                            hist[:iters] if history else None)


def is_epsilon_saddle(spec: GameSpec, f, g, slack: float) -> bool:
    """Whether ``exploitability(f, g) <= slack``, up to floating-point roundoff in the payoffs."""
    if slack < 0:
        raise GameError(f"slack must be >= 0, got {slack}")
    roundoff = 16 * np.finfo(float).eps * max(1.0, float(np.abs(spec.expected_matrix).max()))
    return exploitability(spec, f, g) <= slack + roundoff
