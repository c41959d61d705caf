"""Two-player zero-sum (constant-sum) stochastic matrix games.

A game is a base payoff matrix ``M`` (rows = player 1 actions, columns =
player 2 actions, entries are payoffs to player 1), a constant ``c`` so that
player 2 collects ``c - U``, and an i.i.d. entrywise noise model. The random
state of the game is the sampled noise itself.

Mixed strategies are plain 1-d float arrays; :func:`as_mixed` validates them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-12


class GameError(ValueError):
    """Invalid game data, strategy or action index."""


def as_mixed(probs, n: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise GameError(f"mixed strategy must be a non-empty vector, got shape {p.shape}")
    if n is not None and p.size != n:
        raise GameError(f"mixed strategy has {p.size} entries, expected {n}")
    # min/max propagate NaN, so these two reductions also catch non-finite entries
    lo, hi = float(p.min()), float(p.max())
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise GameError("mixed strategy has non-finite entries")
    if lo < -tol or hi > 1 + tol:
        raise GameError(f"mixed strategy entries outside [0, 1]: {p}")
    total = float(p.sum())
    if abs(total - 1.0) > max(tol, 1e-15 * p.size):
        raise GameError(f"mixed strategy sums to {total!r}, not 1")
    return p


def is_mixed(probs, tol: float = SIMPLEX_TOL) -> bool:
    try:
        as_mixed(probs, tol=tol)
    except GameError:
        return False
    return True


def vertex(n: int, a: int) -> np.ndarray:
    """Pure strategy ``e_a`` over ``n`` actions."""
    if not 0 <= a < n:
        raise GameError(f"action {a} out of range for {n} actions")
    e = np.zeros(n)
    e[a] = 1.0
    return e


def uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class NoiseModel:
    """Entrywise additive payoff noise.

    ``kind`` is ``"none"`` or ``"uniform"`` (i.i.d. uniform on ``[lo, hi]``).
    """

    kind: str = "none"
    lo: float = 0.0
    hi: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform"):
            raise GameError(f"unknown noise kind {self.kind!r}")
        if self.kind == "none" and (self.lo != 0.0 or self.hi != 0.0):
            raise GameError("noise kind 'none' takes no bounds")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo > self.hi:
            raise GameError(f"noise bounds must satisfy lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> NoiseModel:
        return cls("uniform", float(lo), float(hi))

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def draw(self, w: float) -> float:
        """Map a uniform variate ``w`` in [0, 1) to a noise value."""
        return self.lo + (self.hi - self.lo) * w


@dataclass(frozen=True)
class GameSpec:
    """Base matrix, constant-sum shift and noise model of the stage game."""

    base_matrix: np.ndarray
    constant_c: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        m = np.array(self.base_matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise GameError(f"payoff matrix must be 2-d and non-empty, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise GameError("payoff matrix has non-finite entries")
        if not np.isfinite(self.constant_c):
            raise GameError("constant c must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "base_matrix", m)
        object.__setattr__(self, "constant_c", float(self.constant_c))

    @property
    def shape(self) -> tuple[int, int]:
        return self.base_matrix.shape

    @property
    def expected_matrix(self) -> np.ndarray:
        """Payoff to player 1 averaged over the noise."""
        return self.base_matrix + self.noise.mean

    def payoff_bounds(self, player: int) -> tuple[float, float]:
        """Smallest and largest payoff the player can ever realize."""
        lo = self.base_matrix.min() + self.noise.lo
        hi = self.base_matrix.max() + self.noise.hi
        if player == 1:
            return float(lo), float(hi)
        if player == 2:
            return self.constant_c - float(hi), self.constant_c - float(lo)
        raise GameError(f"player must be 1 or 2, got {player}")


def _check_action(spec: GameSpec, a1: int, a2: int) -> None:
    m, n = spec.shape
    if not (0 <= a1 < m and 0 <= a2 < n):
        raise GameError(f"action pair ({a1}, {a2}) out of range for a {m}x{n} game")


def sample_payoff(spec: GameSpec, rng: np.random.Generator, a1: int, a2: int) -> tuple[float, float]:
    """Realized payoffs ``(u1, u2)`` of one play of ``(a1, a2)``.

    Only the played entry of the noise matrix is drawn; entries are i.i.d., so
    this has the law of reading one entry off a fully sampled state.
    """
    _check_action(spec, a1, a2)
    u1 = spec.base_matrix[a1, a2]
    if spec.noise.kind != "none":
        u1 = u1 + spec.noise.draw(rng.random())
    u1 = float(u1)
    return u1, spec.constant_c - u1


def sample_state(spec: GameSpec, rng: np.random.Generator) -> np.ndarray:
    """Full noise matrix ``S`` for one time step."""
    if spec.noise.kind == "none":
        return np.zeros(spec.shape)
    return spec.noise.lo + (spec.noise.hi - spec.noise.lo) * rng.random(spec.shape)


def expected_value(spec: GameSpec, f, g) -> float:
    """Expected payoff to player 1, ``f^T M g`` plus the noise mean."""
    m, n = spec.shape
    f = as_mixed(f, m)
    g = as_mixed(g, n)
    return float(f @ spec.base_matrix @ g) + spec.noise.mean


def payoff_vector(spec: GameSpec, player: int, opponent_mix) -> np.ndarray:
    """Expected payoff of each pure action of ``player`` against ``opponent_mix``."""
    m, n = spec.shape
    if player == 1:
        return spec.expected_matrix @ as_mixed(opponent_mix, n)
    if player == 2:
        return spec.constant_c - as_mixed(opponent_mix, m) @ spec.expected_matrix
    raise GameError(f"player must be 1 or 2, got {player}")


def exploitability(spec: GameSpec, f, g) -> float:
    """Duality gap ``max_a u1(e_a, g) - min_b u1(f, e_b)``; zero exactly at a saddle point."""
    m, n = spec.shape
    a = spec.expected_matrix
    f = as_mixed(f, m)
    g = as_mixed(g, n)
    return float(np.max(a @ g) - np.min(f @ a))


class RandomSource:
    """Seeded PCG64 streams with independent substreams per (run, player).

    Substreams come from :class:`numpy.random.SeedSequence` spawning, so
    ``RandomSource(seed).player(1)`` is the same stream on every call.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise GameError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._children = np.random.SeedSequence(seed).spawn(3)

    def player(self, i: int) -> np.random.Generator:
        if i not in (1, 2):
            raise GameError(f"player must be 1 or 2, got {i}")
        return np.random.Generator(np.random.PCG64(self._children[i - 1]))

    def environment(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._children[2]))
