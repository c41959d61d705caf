"""Payoff-and-strategy learning schemes as pure one-step updates.

Five schemes are provided: CRL0, CRL1, CRL2, RL2 and RL3. Each ``*_step``
takes a :class:`LearnerState` plus the action played and the payoff observed,
and returns a new state. The per-step episode loop in
:mod:`codipas._kernels` implements the same updates on raw arrays; these
functions are the readable reference and are cross-checked against it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .game import GameError, SIMPLEX_TOL, as_mixed

SCHEMES = ("CRL0", "CRL1", "CRL2", "RL2", "RL3")
FAMILIES = ("R1", "R2", "R3", "R4", "constant", "scaled")

# divisor floor for the importance-weighted estimate update of CRL1/CRL2
PROB_FLOOR = 1e-8


class StepBoundError(GameError):
    """A reinforcement step would leave the simplex (``lambda * U`` outside [0, 1))."""


@dataclass(frozen=True)
class RateSchedule:
    """Deterministic step-size sequence.

    ``R1``: ``1/(t+1)``. ``R2``: ``1/((t+2) log(t+2))``. ``R3``:
    ``1/(sqrt(t+2) log^2(t+2))``. ``R4``: ``1/(t+c')^rho`` with
    ``1/2 < rho <= 1``. ``constant``: ``value`` at every step.
    ``scaled``: ``k`` times a base schedule.

    R2 and R3 are shifted by one step so that ``t = 0`` is finite.
    """

    family: str = "R1"
    rho: float = 1.0
    c_prime: float = 1.0
    value: float = 0.0
    k: float = 1.0
    base: RateSchedule | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise GameError(f"unknown schedule family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "R4":
            if not 0.5 < self.rho <= 1.0:
                raise GameError(f"R4 needs 1/2 < rho <= 1, got {self.rho}")
            if not self.c_prime > 0:
                raise GameError(f"R4 needs c' > 0, got {self.c_prime}")
        if self.family == "constant" and not (self.value >= 0 and math.isfinite(self.value)):
            raise GameError(f"constant rate must be finite and >= 0, got {self.value}")
        if self.family == "scaled":
            if self.base is None:
                raise GameError("scaled schedule needs a base schedule")
            if not self.k > 0:
                raise GameError(f"scale factor must be > 0, got {self.k}")

    @classmethod
    def r1(cls) -> RateSchedule:
        return cls("R1")

    @classmethod
    def r2(cls) -> RateSchedule:
        return cls("R2")

    @classmethod
    def r3(cls) -> RateSchedule:
        return cls("R3")

    @classmethod
    def r4(cls, rho: float, c_prime: float = 1.0) -> RateSchedule:
        return cls("R4", rho=rho, c_prime=c_prime)

    @classmethod
    def constant(cls, value: float) -> RateSchedule:
        return cls("constant", value=value)

    def scaled(self, k: float) -> RateSchedule:
        return RateSchedule("scaled", k=k, base=self)

    def flatten(self) -> tuple[str, float, float, float]:
        """``(family, p1, p2, scale)`` with nested scaling folded into one factor."""
        if self.family == "scaled":
            fam, p1, p2, scale = self.base.flatten()
            return fam, p1, p2, scale * self.k
        if self.family == "R4":
            return "R4", self.rho, self.c_prime, 1.0
        if self.family == "constant":
            return "constant", self.value, 0.0, 1.0
        return self.family, 0.0, 0.0, 1.0

    def to_row(self) -> np.ndarray:
        from . import _kernels

        codes = {"R1": _kernels.R1, "R2": _kernels.R2, "R3": _kernels.R3, "R4": _kernels.R4,
                 "constant": _kernels.CONST}
        fam, p1, p2, scale = self.flatten()
        return np.array([codes[fam], p1, p2, scale], dtype=float)

    def decays_faster_than(self, other: RateSchedule) -> bool | None:
        """Whether ``self(t) / other(t) -> 0``, judged from the families alone.

        Returns None when the families do not settle the question.
        """
        order = {"R1": (1.0, 0), "R2": (1.0, 1), "R3": (0.5, 2), "constant": (0.0, 0)}

        def key(s: RateSchedule):
            fam, p1, _, _ = s.flatten()
            if fam == "R4":
                return (p1, 0)
            if fam == "constant" and p1 == 0.0:
                return None
            return order[fam]

        a, b = key(self), key(other)
        if a is None or b is None:
            return None
        if a[0] != b[0]:
            return a[0] > b[0]
        if a[1] != b[1]:
            return a[1] > b[1]
        return False


def rate(schedule: RateSchedule, t: int) -> float:
    if t < 0:
        raise GameError(f"step index must be >= 0, got {t}")
    fam, p1, p2, scale = schedule.flatten()
    if fam == "R1":
        r = 1.0 / (t + 1.0)
    elif fam == "R2":
        x = t + 2.0
        r = 1.0 / (x * math.log(x))
    elif fam == "R3":
        x = t + 2.0
        r = 1.0 / (math.sqrt(x) * math.log(x) ** 2)
    elif fam == "R4":
        r = (t + p2) ** (-p1)
    else:
        r = p1
    return scale * r


def softmax(u, epsilon: float) -> np.ndarray:
    """Boltzmann-Gibbs weights ``exp(u/eps) / sum exp(u/eps)``."""
    if not epsilon > 0:
        raise GameError(f"epsilon must be > 0, got {epsilon}")
    u = np.asarray(u, dtype=float)
    z = np.exp((u - u.max()) / epsilon)
    return z / z.sum()


def imitative_softmax(strategy, u, epsilon: float) -> np.ndarray:
    """Boltzmann-Gibbs weights multiplied by the current strategy, renormalized."""
    if not epsilon > 0:
        raise GameError(f"epsilon must be > 0, got {epsilon}")
    x = as_mixed(strategy)
    u = np.asarray(u, dtype=float)
    if u.shape != x.shape:
        raise GameError(f"payoff vector has shape {u.shape}, strategy has {x.shape}")
    support = x > 0
    if not support.any():
        raise GameError("strategy puts no weight on any action")
    z = np.zeros_like(x)
    z[support] = x[support] * np.exp((u[support] - u[support].max()) / epsilon)
    return z / z.sum()


def perturb_strategy(strategy, eps: float) -> np.ndarray:
    """Mix with the uniform distribution: ``(1 - eps) x + eps / |A|``."""
    if not 0 <= eps <= 1:
        raise GameError(f"perturbation must be in [0, 1], got {eps}")
    x = as_mixed(strategy)
    return (1.0 - eps) * x + eps / x.size


def choose_action(strategy, rng) -> int:
    """Draw an action by inverse CDF on a single uniform variate."""
    x = as_mixed(strategy)
    w = rng.random()
    return _inverse_cdf(x, w)


def _inverse_cdf(x: np.ndarray, w: float) -> int:
    acc = 0.0
    last = -1
    for i, p in enumerate(x):
        if p > 0.0:
            last = i
            acc += p
            if w < acc:
                return i
    return last


@dataclass(frozen=True)
class LearnerState:
    strategy: np.ndarray
    estimates: np.ndarray
    t: int = 0

    def __post_init__(self):
        x = as_mixed(self.strategy).copy()
        u = np.array(self.estimates, dtype=float)
        if u.shape != x.shape:
            raise GameError(f"estimates have shape {u.shape}, strategy has {x.shape}")
        # a finite sum implies finite entries; overflow falls through to the exact test
        if not math.isfinite(float(u.sum())) and not np.all(np.isfinite(u)):
            raise GameError("estimates must be finite")
        x.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "strategy", x)
        object.__setattr__(self, "estimates", u)

    @classmethod
    def initial(cls, n: int, strategy=None, estimates=None) -> LearnerState:
        """Uniform strategy and zero estimates unless given."""
        x = np.full(n, 1.0 / n) if strategy is None else strategy
        u = np.zeros(n) if estimates is None else estimates
        return cls(x, u, 0)


def _check_action(state: LearnerState, a: int) -> None:
    if not 0 <= a < state.strategy.size:
        raise GameError(f"action {a} out of range for {state.strategy.size} actions")


def _reinforce(x: np.ndarray, a: int, step: float) -> np.ndarray:
    if not 0.0 <= step < 1.0:
        raise StepBoundError(f"lambda * U = {step!r} is outside [0, 1)")
    new = x - step * x
    new[a] += step
    return new


def crl0_step(state: LearnerState, a: int, U: float, lam: float, mu: float) -> LearnerState:
    _check_action(state, a)
    x = _reinforce(state.strategy, a, lam * U)
    u = state.estimates.copy()
    u[a] += mu * (U - u[a])
    return LearnerState(x, u, state.t + 1)


def _boltzmann_step(state, a, U, lam, mu, target):
    _check_action(state, a)
    pa = state.strategy[a]
    x = (1.0 - lam) * state.strategy + lam * target
    u = state.estimates.copy()
    u[a] += mu / max(pa, PROB_FLOOR) * (U - u[a])
    return LearnerState(x, u, state.t + 1)


def crl1_step(state: LearnerState, a: int, U: float, lam: float, mu: float, epsilon: float) -> LearnerState:
    return _boltzmann_step(state, a, U, lam, mu, softmax(state.estimates, epsilon))


def crl2_step(state: LearnerState, a: int, U: float, lam: float, mu: float, epsilon: float) -> LearnerState:
    return _boltzmann_step(state, a, U, lam, mu, imitative_softmax(state.strategy, state.estimates, epsilon))


def rl2_step(state: LearnerState, a: int, U: float, lam: float) -> LearnerState:
    _check_action(state, a)
    return LearnerState(_reinforce(state.strategy, a, lam * U), state.estimates, state.t + 1)


def rl3_step(state: LearnerState, a: int, U: float, n: float, C: float) -> LearnerState:
    """Normalized reinforcement; the growth factor is followed by renormalization."""
    _check_action(state, a)
    if not n > 0:
        raise GameError(f"n must be > 0, got {n}")
    if not 0.0 <= U <= C:
        raise StepBoundError(f"payoff {U!r} is outside [0, C] = [0, {C}]")
    raw = state.strategy * (C * (n + 1.0) / (n * C + U))
    raw[a] += U * (C * (n + 1.0) / (n * C + U))
    return LearnerState(raw / raw.sum(), state.estimates, state.t + 1)


@dataclass(frozen=True)
class LearnerConfig:
    """One player's scheme, rates and scheme constants.

    ``rl3_n`` and ``rl3_C`` default (None) to the action count and to the
    game's largest realizable payoff for that player.
    """

    scheme: str = "CRL1"
    lam: RateSchedule = field(default_factory=RateSchedule.r1)
    mu: RateSchedule = field(default_factory=lambda: RateSchedule.r4(0.6))
    epsilon: float = 0.05
    rl3_n: float | None = None
    rl3_C: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise GameError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise GameError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if self.rl3_n is not None and not self.rl3_n > 0:
            raise GameError(f"rl3_n must be > 0, got {self.rl3_n}")
        if self.rl3_C is not None and not self.rl3_C > 0:
            raise GameError(f"rl3_C must be > 0, got {self.rl3_C}")

    def timescale_warning(self) -> str | None:
        """Message when a CRL1/CRL2 strategy rate is not structurally slower than its payoff rate."""
        if self.scheme not in ("CRL1", "CRL2"):
            return None
        verdict = self.lam.decays_faster_than(self.mu)
        if verdict:
            return None
        return (f"{self.scheme}: strategy rate {self.lam.flatten()[0]} should decay faster than "
                f"payoff rate {self.mu.flatten()[0]} (lambda/mu -> 0)")

    def validate(self) -> None:
        msg = self.timescale_warning()
        if msg:
            warnings.warn(msg, stacklevel=2)

    def with_epsilon(self, epsilon: float) -> LearnerConfig:
        return replace(self, epsilon=epsilon)


def step(config: LearnerConfig, state: LearnerState, a: int, U: float, lam: float, mu: float,
         n: float, C: float) -> LearnerState:
    """Dispatch one update by scheme name."""
    s = config.scheme
    if s == "CRL0":
        return crl0_step(state, a, U, lam, mu)
    if s == "CRL1":
        return crl1_step(state, a, U, lam, mu, config.epsilon)
    if s == "CRL2":
        return crl2_step(state, a, U, lam, mu, config.epsilon)
    if s == "RL2":
        return rl2_step(state, a, U, lam)
    return rl3_step(state, a, U, n, C)


def is_valid_strategy(x, tol: float = SIMPLEX_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.all(x >= -tol) and np.all(x <= 1 + tol) and abs(x.sum() - 1) <= tol)
