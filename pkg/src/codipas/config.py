"""Experiment configuration files (YAML).

A config has four sections plus an optional ``ode`` section::

    game:
      matrix: [[5, 2], [1, 3]]
      constant_c: 0
      noise: {kind: uniform, lo: -1, hi: 1}
    players:
      p1:
        scheme: CRL1
        lam: {family: R1}
        mu: {family: R4, rho: 0.6, c_prime: 1}
        epsilon: 0.05
        rl3_n: null            # RL3 only; default = action count
        rl3_C: null            # RL3 only; default = largest payoff
        initial_strategy: [0.5, 0.5]
        initial_estimates: [0, 0]
      p2: {...}
    run:
      horizon: 8000
      seeds: [0, 1, 2]
      record_stride: 1
    output:
      directory: out/selfplay
      plots: false
    ode:                       # used by `ode` and `compare`
      system: replicator
      epsilon: 0.05
      k1: 1
      k2: 1
      p2_adjusted: false
      freeze: none
      dt: 0.001
      t_end: 20
      clock: p1                # whose strategy rate defines ODE time

Schedules are ``{family: R1|R2|R3}``, ``{family: R4, rho, c_prime}``,
``{family: constant, value}`` or ``{family: scaled, k, base: <schedule>}``.
Unknown keys anywhere are rejected. Omitted keys take the defaults shown by
:func:`dump_config`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .dynamics import SYSTEMS, DynamicsSystem
from .game import GameError, GameSpec, NoiseModel
from .harness import Experiment
from .learners import LearnerConfig, RateSchedule


class ConfigError(GameError):
    """Malformed or invalid configuration document."""


@dataclass(frozen=True)
class PlayerSection:
    learner: LearnerConfig
    initial_strategy: tuple | None = None
    initial_estimates: tuple | None = None


@dataclass(frozen=True)
class OdeSection:
    system: str = "replicator"
    epsilon: float = 0.05
    k1: float = 1.0
    k2: float = 1.0
    p2_adjusted: bool = False
    freeze: str = "none"
    dt: float = 1e-3
    t_end: float = 20.0
    clock: str = "p1"


@dataclass(frozen=True)
class ExperimentConfig:
    matrix: tuple
    constant_c: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    p1: PlayerSection = field(default_factory=lambda: PlayerSection(LearnerConfig()))
    p2: PlayerSection = field(default_factory=lambda: PlayerSection(LearnerConfig()))
    horizon: int = 1000
    seeds: tuple = (0,)
    record_stride: int = 1
    out_dir: str = "out"
    plots: bool = False
    ode: OdeSection | None = None

    def game(self) -> GameSpec:
        return GameSpec(np.array(self.matrix, dtype=float), self.constant_c, self.noise)

    def experiment(self) -> Experiment:
        return Experiment(
            self.game(), self.p1.learner, self.p2.learner, self.horizon, self.seeds, self.record_stride,
            initial_f=self.p1.initial_strategy, initial_g=self.p2.initial_strategy,
            initial_u1=self.p1.initial_estimates, initial_u2=self.p2.initial_estimates,
        )

    def dynamics(self) -> DynamicsSystem:
        o = self.ode or OdeSection()
        return DynamicsSystem(o.system, self.game(), o.epsilon, o.k1, o.k2, o.p2_adjusted, o.freeze)

    def clock(self) -> RateSchedule:
        o = self.ode or OdeSection()
        return (self.p1 if o.clock == "p1" else self.p2).learner.lam


# ---------------------------------------------------------------- parsing

def _check_keys(d, allowed, where: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, extra))}; allowed: {', '.join(allowed)}")
    return d


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite, got {v!r}")
    return float(v)


def _int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}: expected an integer, got {v!r}")
    return v


def _bool(v, where: str) -> bool:
    if not isinstance(v, bool):
        raise ConfigError(f"{where}: expected true/false, got {v!r}")
    return v


def _vector(v, where: str) -> tuple | None:
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}: expected a non-empty list of numbers")
    return tuple(_num(x, f"{where}[{i}]") for i, x in enumerate(v))


def parse_matrix(rows, where: str = "game.matrix") -> tuple:
    if not isinstance(rows, list) or not rows:
        raise ConfigError(f"{where}: expected a non-empty list of rows")
    out = []
    for i, r in enumerate(rows):
        if not isinstance(r, list) or not r:
            raise ConfigError(f"{where}[{i}]: expected a non-empty list")
        out.append(tuple(_num(x, f"{where}[{i}][{j}]") for j, x in enumerate(r)))
    if len({len(r) for r in out}) != 1:
        raise ConfigError(f"{where}: rows have different lengths {[len(r) for r in out]}")
    return tuple(out)


def _schedule(d, where: str) -> RateSchedule:
    d = _check_keys(d, ("family", "rho", "c_prime", "value", "k", "base"), where)
    fam = d.get("family")
    allowed = {"R1": (), "R2": (), "R3": (), "R4": ("rho", "c_prime"), "constant": ("value",),
               "scaled": ("k", "base")}
    if fam not in allowed:
        raise ConfigError(f"{where}.family: expected one of {', '.join(allowed)}, got {fam!r}")
    _check_keys(d, ("family",) + allowed[fam], where)
    try:
        if fam == "R4":
            return RateSchedule.r4(_num(d.get("rho", 1.0), f"{where}.rho"),
                                   _num(d.get("c_prime", 1.0), f"{where}.c_prime"))
        if fam == "constant":
            return RateSchedule.constant(_num(d.get("value", 0.0), f"{where}.value"))
        if fam == "scaled":
            if "base" not in d:
                raise ConfigError(f"{where}: scaled schedule needs a base")
            return _schedule(d["base"], f"{where}.base").scaled(_num(d.get("k", 1.0), f"{where}.k"))
        return RateSchedule(fam)
    except ConfigError:
        raise
    except GameError as e:
        raise ConfigError(f"{where}: {e}") from None


def _player(d, where: str) -> PlayerSection:
    keys = ("scheme", "lam", "mu", "epsilon", "rl3_n", "rl3_C", "initial_strategy", "initial_estimates")
    d = _check_keys(d, keys, where)
    default = LearnerConfig()
    try:
        learner = LearnerConfig(
            scheme=d.get("scheme", default.scheme),
            lam=_schedule(d["lam"], f"{where}.lam") if "lam" in d else default.lam,
            mu=_schedule(d["mu"], f"{where}.mu") if "mu" in d else default.mu,
            epsilon=_num(d.get("epsilon", default.epsilon), f"{where}.epsilon"),
            rl3_n=None if d.get("rl3_n") is None else _num(d["rl3_n"], f"{where}.rl3_n"),
            rl3_C=None if d.get("rl3_C") is None else _num(d["rl3_C"], f"{where}.rl3_C"),
        )
    except ConfigError:
        raise
    except GameError as e:
        raise ConfigError(f"{where}: {e}") from None
    return PlayerSection(learner, _vector(d.get("initial_strategy"), f"{where}.initial_strategy"),
                         _vector(d.get("initial_estimates"), f"{where}.initial_estimates"))


def _ode(d) -> OdeSection:
    d = _check_keys(d, tuple(OdeSection.__dataclass_fields__), "ode")
    base = OdeSection()
    sec = OdeSection(
        system=d.get("system", base.system),
        epsilon=_num(d.get("epsilon", base.epsilon), "ode.epsilon"),
        k1=_num(d.get("k1", base.k1), "ode.k1"),
        k2=_num(d.get("k2", base.k2), "ode.k2"),
        p2_adjusted=_bool(d.get("p2_adjusted", base.p2_adjusted), "ode.p2_adjusted"),
        freeze=d.get("freeze", base.freeze),
        dt=_num(d.get("dt", base.dt), "ode.dt"),
        t_end=_num(d.get("t_end", base.t_end), "ode.t_end"),
        clock=d.get("clock", base.clock),
    )
    if sec.system not in SYSTEMS:
        raise ConfigError(f"ode.system: unknown system {sec.system!r}; valid names: {', '.join(SYSTEMS)}")
    if not sec.dt > 0 or not sec.t_end > 0:
        raise ConfigError("ode.dt and ode.t_end must be > 0")
    if sec.clock not in ("p1", "p2"):
        raise ConfigError(f"ode.clock must be p1 or p2, got {sec.clock!r}")
    return sec


def config_from_dict(doc) -> ExperimentConfig:
    """Build and fully validate a config from a parsed document."""
    doc = _check_keys(doc, ("game", "players", "run", "output", "ode"), "config")
    if "game" not in doc:
        raise ConfigError("config: missing section 'game'")
    game = _check_keys(doc["game"], ("matrix", "constant_c", "noise"), "game")
    if "matrix" not in game:
        raise ConfigError("game: missing key 'matrix'")
    matrix = parse_matrix(game["matrix"])
    noise_d = _check_keys(game.get("noise", {"kind": "none"}), ("kind", "lo", "hi"), "game.noise")
    try:
        noise = NoiseModel(noise_d.get("kind", "none"), _num(noise_d.get("lo", 0.0), "game.noise.lo"),
                           _num(noise_d.get("hi", 0.0), "game.noise.hi"))
    except ConfigError:
        raise
    except GameError as e:
        raise ConfigError(f"game.noise: {e}") from None
    players = _check_keys(doc.get("players", {}), ("p1", "p2"), "players")
    run = _check_keys(doc.get("run", {}), ("horizon", "seeds", "record_stride"), "run")
    output = _check_keys(doc.get("output", {}), ("directory", "plots"), "output")
    seeds = run.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list):
        raise ConfigError("run.seeds: expected a list of integers")
    directory = output.get("directory", "out")
    if not isinstance(directory, str):
        raise ConfigError("output.directory: expected a string")
    cfg = ExperimentConfig(
        matrix=matrix,
        constant_c=_num(game.get("constant_c", 0.0), "game.constant_c"),
        noise=noise,
        p1=_player(players.get("p1", {}), "players.p1"),
        p2=_player(players.get("p2", {}), "players.p2"),
        horizon=_int(run.get("horizon", 1000), "run.horizon"),
        seeds=tuple(_int(s, f"run.seeds[{i}]") for i, s in enumerate(seeds)),
        record_stride=_int(run.get("record_stride", 1), "run.record_stride"),
        out_dir=directory,
        plots=_bool(output.get("plots", False), "output.plots"),
        ode=_ode(doc["ode"]) if doc.get("ode") is not None else None,
    )
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    """Check every field against the game, learner and integrator preconditions."""
    try:
        cfg.experiment()
        if cfg.ode is not None:
            cfg.dynamics()
    except ConfigError:
        raise
    except GameError as e:
        raise ConfigError(str(e)) from None


def load_config(path) -> ExperimentConfig:
    """Read a config file. Raises :class:`ConfigError` on bad content, OSError on I/O failure."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}") from None
    return config_from_dict(doc)


# ---------------------------------------------------------- serialization

def _schedule_dict(s: RateSchedule) -> dict:
    if s.family == "R4":
        return {"family": "R4", "rho": s.rho, "c_prime": s.c_prime}
    if s.family == "constant":
        return {"family": "constant", "value": s.value}
    if s.family == "scaled":
        return {"family": "scaled", "k": s.k, "base": _schedule_dict(s.base)}
    return {"family": s.family}


def _player_dict(p: PlayerSection) -> dict:
    c = p.learner
    return {
        "scheme": c.scheme,
        "lam": _schedule_dict(c.lam),
        "mu": _schedule_dict(c.mu),
        "epsilon": c.epsilon,
        "rl3_n": c.rl3_n,
        "rl3_C": c.rl3_C,
        "initial_strategy": None if p.initial_strategy is None else list(p.initial_strategy),
        "initial_estimates": None if p.initial_estimates is None else list(p.initial_estimates),
    }


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "game": {
            "matrix": [list(r) for r in cfg.matrix],
            "constant_c": cfg.constant_c,
            "noise": {"kind": cfg.noise.kind, "lo": cfg.noise.lo, "hi": cfg.noise.hi},
        },
        "players": {"p1": _player_dict(cfg.p1), "p2": _player_dict(cfg.p2)},
        "run": {"horizon": cfg.horizon, "seeds": list(cfg.seeds), "record_stride": cfg.record_stride},
        "output": {"directory": cfg.out_dir, "plots": cfg.plots},
    }
    if cfg.ode is not None:
        doc["ode"] = dict(vars(cfg.ode))
    return doc


def dump_config(cfg: ExperimentConfig) -> str:
    # repr-exact floats: yaml emits Python's shortest round-trip representation
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def with_overrides(cfg: ExperimentConfig, horizon=None, seeds=None, epsilon=None, out_dir=None,
                   plots=None) -> ExperimentConfig:
    """Command-line values replace the file's; the result is re-validated."""
    changes = {}
    if horizon is not None:
        changes["horizon"] = int(horizon)
    if seeds is not None:
        changes["seeds"] = tuple(int(s) for s in seeds)
    if epsilon is not None:
        changes["p1"] = replace(cfg.p1, learner=cfg.p1.learner.with_epsilon(epsilon))
        changes["p2"] = replace(cfg.p2, learner=cfg.p2.learner.with_epsilon(epsilon))
        if cfg.ode is not None:
            changes["ode"] = replace(cfg.ode, epsilon=epsilon)
    if out_dir is not None:
        changes["out_dir"] = str(out_dir)
    if plots is not None:
        changes["plots"] = bool(plots)
    out = replace(cfg, **changes)
    validate(out)
    return out
