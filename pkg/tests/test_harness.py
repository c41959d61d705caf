from pathlib import Path

import numpy as np
import pytest

from codipas import accel, harness
from codipas.config import load_config
from codipas.dynamics import DynamicsSystem, OdeState, integrate, logit_response
from codipas.game import GameError, GameSpec, NoiseModel, is_mixed
from codipas.harness import (
    Experiment, LearnerViolation, aggregate, compare_to_ode, dominated_strategy_probe, rate_array, run_aggregate,
    run_episode, run_episode_reference, sa_clock, strictly_dominated, tail_slope, tracking_error, with_overrides,
)
from codipas.learners import LearnerConfig, RateSchedule, rate

from conftest import M

SCHEMES = ("CRL0", "CRL1", "CRL2", "RL2", "RL3")


def shifted():
    return GameSpec(M, constant_c=6.0, noise=NoiseModel.uniform(-1, 1))


def assert_same(a, b, exact=True):
    for key, va in a.series().items():
        vb = b.series()[key]
        if exact:
            np.testing.assert_array_equal(va, vb, err_msg=key)
        else:
            np.testing.assert_allclose(va, vb, rtol=1e-10, atol=1e-12, err_msg=key)
    np.testing.assert_array_equal(a.times, b.times)


@pytest.mark.parametrize("s1", SCHEMES)
@pytest.mark.parametrize("s2", ["CRL1", "RL2", "RL3"])
def test_kernel_matches_reference(s1, s2):
    exp = Experiment(shifted(), LearnerConfig(s1, epsilon=0.1), LearnerConfig(s2, epsilon=0.1), horizon=300,
                     record_stride=7)
    assert_same(run_episode(exp, 4), run_episode_reference(exp, 4), exact=False)


@pytest.mark.skipif(not accel.numba_available(), reason="numba not installed")
def test_backends_agree():
    exp = Experiment(shifted(), LearnerConfig("CRL1"), LearnerConfig("RL2"), horizon=5000, record_stride=50)
    prev = accel.backend()
    try:
        accel.set_backend("numpy")
        a = run_episode(exp, 11)
        accel.set_backend("numba")
        b = run_episode(exp, 11)
    finally:
        accel.set_backend(prev)
    assert_same(a, b, exact=False)


def test_unknown_backend():
    with pytest.raises(ValueError):
        accel.set_backend("cuda")


def test_deterministic_replay(noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig("CRL1"), LearnerConfig("CRL1"), horizon=2000)
    assert_same(run_episode(exp, 7), run_episode(exp, 7))
    other = run_episode(exp, 8)
    assert not np.array_equal(other.f, run_episode(exp, 7).f)


def test_chunk_size_independent(monkeypatch, noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig("CRL1"), LearnerConfig("CRL2"), horizon=1000,
                     record_stride=3)
    full = run_episode(exp, 2)
    monkeypatch.setattr(harness, "CHUNK", 7)
    assert_same(run_episode(exp, 2), full)
    assert_same(run_episode_reference(exp, 2), full, exact=False)


def test_horizon_boundaries(security_game):
    with pytest.raises(GameError):
        Experiment(security_game, LearnerConfig(), LearnerConfig(), horizon=0)
    tr = run_episode(Experiment(security_game, LearnerConfig(), LearnerConfig(), horizon=1), 0)
    assert list(tr.times) == [0, 1]
    assert np.isnan(tr.payoff1[0]) and np.isfinite(tr.payoff1[1])
    assert tr.payoff1[1] + tr.payoff2[1] == 0.0


def test_experiment_validation(security_game):
    for kwargs in ({"record_stride": 0}, {"seeds": ()}, {"seeds": (-1,)}, {"initial_u1": [0.0]},
                   {"initial_f": [0.5, 0.6]}):
        with pytest.raises(GameError):
            Experiment(security_game, LearnerConfig(), LearnerConfig(), horizon=10, **kwargs)
    with pytest.raises(GameError, match="raise the constant c"):
        Experiment(security_game, LearnerConfig(), LearnerConfig("RL2"), horizon=10)
    with pytest.raises(GameError, match="RL3 constant"):
        Experiment(shifted(), LearnerConfig(), LearnerConfig("RL3", rl3_C=4.0), horizon=10)


def test_recorded_rows_and_stride(noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig(), LearnerConfig(), horizon=10, record_stride=3)
    tr = run_episode(exp, 0)
    assert list(tr.times) == [0, 3, 6, 9, 10]
    assert exp.n_records() == 5
    for x in np.vstack([tr.f, tr.g]):
        assert is_mixed(x)


def test_both_frozen_gives_constant_series():
    spec = GameSpec(M)
    zero = RateSchedule.constant(0.0)
    cfg = LearnerConfig("CRL1", lam=zero, mu=zero)
    exp = Experiment(spec, cfg, cfg, horizon=500, initial_f=[1, 0], initial_g=[0, 1], initial_u1=[1.0, 2.0],
                     initial_u2=[0.5, 0.5])
    tr = run_episode(exp, 0)
    for key, v in tr.series().items():
        v = v[1:] if key.startswith("payoff") else v
        assert np.all(v == v[0]), key
    # mixed starts keep strategies and estimates fixed even though actions vary
    exp = Experiment(spec, cfg, cfg, horizon=500, initial_f=[0.3, 0.7])
    tr = run_episode(exp, 0)
    assert np.all(tr.f == tr.f[0]) and np.all(tr.u_hat1 == 0) and np.all(tr.exploitability == tr.exploitability[0])


def test_shared_payoff_sample(noisy_security_game):
    exp = Experiment(GameSpec(M, constant_c=6.0, noise=NoiseModel.uniform(-1, 1)), LearnerConfig(),
                     LearnerConfig(), horizon=200)
    tr = run_episode(exp, 1)
    np.testing.assert_allclose(tr.payoff1[1:] + tr.payoff2[1:], 6.0, atol=1e-12)


def test_learner_violation_reports_seed_and_step():
    spec = GameSpec([[5.0]], constant_c=5.5, noise=NoiseModel.uniform(-1, 1))
    exp = Experiment(spec, LearnerConfig(), LearnerConfig("RL2"), horizon=100, seeds=(3,))
    with pytest.raises(LearnerViolation, match="seed 3, step 2, player 2") as info:
        run_episode(exp, 3)
    assert info.value.value < 0
    with pytest.raises(LearnerViolation):
        run_aggregate(exp)


def test_aggregate_statistics(noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig(), LearnerConfig(), horizon=300, seeds=(0, 1, 2),
                     record_stride=10)
    rep = run_aggregate(exp)
    trajs = rep.trajectories
    for key in ("f_0", "u_hat1_1", "exploitability"):
        stack = np.vstack([t.series()[key] for t in trajs])
        np.testing.assert_allclose(rep.mean[key], stack.mean(axis=0))
        np.testing.assert_allclose(rep.std[key], stack.std(axis=0))
        assert np.all(rep.mean[key] >= stack.min(axis=0) - 1e-12)
        assert np.all(rep.mean[key] <= stack.max(axis=0) + 1e-12)
    assert rep.seeds == (0, 1, 2)
    assert rep.final[1]["f_0"] == trajs[1].f[-1, 0]
    single = aggregate([trajs[0]])
    np.testing.assert_array_equal(single.mean["f_0"], trajs[0].f[:, 0])
    assert np.all(single.std["f_0"] == 0)


def test_aggregate_of_constant_series(security_game):
    zero = RateSchedule.constant(0.0)
    cfg = LearnerConfig("CRL1", lam=zero, mu=zero)
    rep = run_aggregate(Experiment(security_game, cfg, cfg, horizon=50, seeds=(0, 1, 2, 3)))
    assert np.all(rep.mean["f_0"] == 0.5) and np.all(rep.std["f_0"] == 0)


def test_parallel_aggregate_matches_serial(noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig(), LearnerConfig(), horizon=500, seeds=(0, 1, 2))
    a, b = run_aggregate(exp), run_aggregate(exp, jobs=2)
    for key in a.mean:
        np.testing.assert_array_equal(a.mean[key], b.mean[key])


def test_with_overrides(noisy_security_game):
    exp = Experiment(noisy_security_game, LearnerConfig(), LearnerConfig(), horizon=50)
    assert with_overrides(exp) is exp
    new = with_overrides(exp, horizon=9, seeds=[4, 5], epsilon=0.2)
    assert (new.horizon, new.seeds, new.p1.epsilon, new.p2.epsilon) == (9, (4, 5), 0.2, 0.2)


# --------------------------------------------------------------- clocks

@pytest.mark.parametrize("sched", [RateSchedule.r1(), RateSchedule.r2(), RateSchedule.r3(), RateSchedule.r4(0.7, 3.0),
                                   RateSchedule.constant(1e-3), RateSchedule.r4(0.6, 10.0).scaled(0.1)])
def test_rate_array_matches_rate(sched):
    arr = rate_array(sched, 500)
    np.testing.assert_allclose(arr, [rate(sched, t) for t in range(500)], rtol=1e-15)


def test_sa_clock():
    np.testing.assert_allclose(sa_clock(RateSchedule.constant(0.01), [0, 10, 250]), [0, 0.1, 2.5])
    tau = sa_clock(RateSchedule.r1(), [0, 1, 3])
    np.testing.assert_allclose(tau, [0, 1, 1 + 1 / 2 + 1 / 3])


def ode_as_trajectory(system, init, rate_value, steps):
    """A fake episode that sits exactly on the ODE flow at its clock times."""
    times = np.arange(0, steps + 1, 10)
    tau = times * rate_value
    ode = integrate(system, init, float(tau[-1]), 1e-3)
    f = np.column_stack([np.interp(tau, ode.times, ode.f[:, i]) for i in range(2)])
    g = np.column_stack([np.interp(tau, ode.times, ode.g[:, i]) for i in range(2)])
    z = np.zeros((len(times), 2))
    nan = np.full(len(times), np.nan)
    return harness.Trajectory(0, times, f, g, z, z, nan, nan)


def test_compare_identical_inputs_zero(security_game):
    system = DynamicsSystem("replicator", security_game)
    traj = ode_as_trajectory(system, OdeState(np.array([0.8, 0.2]), np.array([0.3, 0.7])), 1e-2, 500)
    tau, dist = compare_to_ode(traj, system, RateSchedule.constant(1e-2))
    np.testing.assert_allclose(tau[-1], 5.0)
    assert np.all(dist >= 0) and dist.max() < 1e-12


def test_compare_mismatched_dimensions(security_game):
    system = DynamicsSystem("replicator", GameSpec(np.ones((3, 2))))
    traj = ode_as_trajectory(DynamicsSystem("replicator", security_game),
                             OdeState(np.array([0.5, 0.5]), np.array([0.5, 0.5])), 1e-2, 50)
    with pytest.raises(GameError, match="3x2"):
        compare_to_ode(traj, system, RateSchedule.constant(1e-2))


def test_compare_rl2_against_replicator():
    spec = GameSpec(M, constant_c=6.0)
    lam = RateSchedule.constant(1e-4)
    cfg = LearnerConfig("RL2", lam=lam)
    exp = Experiment(spec, cfg, cfg, horizon=50_000, record_stride=500, initial_f=[1 / 3, 2 / 3],
                     initial_g=[1 / 3, 2 / 3])
    traj = run_episode(exp, 0)
    tau, dist = compare_to_ode(traj, DynamicsSystem("replicator", spec), lam)
    assert tau[-1] == pytest.approx(5.0)
    assert np.all(dist >= 0)
    assert dist[-1] < 0.05


# ------------------------------------------------------------- probes

def test_tracking_error_zero_on_response(security_game):
    f = np.array([[0.3, 0.7], [0.6, 0.4]])
    g = np.array([logit_response(security_game, 2, x, 0.1) for x in f])
    z = np.zeros((2, 2))
    traj = harness.Trajectory(0, np.array([0, 1]), f, g, z, z, z[:, 0], z[:, 0])
    assert tracking_error(security_game, traj, 0.1).max() < 1e-15


def test_strictly_dominated():
    assert strictly_dominated(GameSpec([[2.0, 2.0], [1.0, 1.0]]), 1)
    assert not strictly_dominated(GameSpec([[2.0, 2.0], [1.0, 1.0]]), 0)
    assert not strictly_dominated(GameSpec(M), 0)
    assert not strictly_dominated(GameSpec([[2.0, 1.0], [2.0, 0.0]]), 1)


def test_dominated_probe():
    spec = GameSpec([[2.0, 2.0], [1.0, 1.0]], noise=NoiseModel.uniform(-1, 1))
    cfg = LearnerConfig("CRL1", epsilon=0.01)
    exp = Experiment(spec, cfg, cfg, horizon=20_000, seeds=(0, 1), record_stride=100)
    mean, trajs = dominated_strategy_probe(exp, 1)
    assert mean == pytest.approx(np.mean([t.f[-1, 1] for t in trajs]))
    assert mean < 0.05
    with pytest.raises(GameError, match="not strictly dominated"):
        dominated_strategy_probe(Experiment(GameSpec(M), cfg, cfg, horizon=10), 0)
    with pytest.raises(GameError, match="out of range"):
        dominated_strategy_probe(exp, 5)


def test_tail_slope():
    t = np.arange(100)
    assert tail_slope(t, 3.0 - 0.5 * t) == pytest.approx(-0.5)
    assert tail_slope(t, np.ones(100)) == pytest.approx(0.0)


@pytest.mark.xfail(strict=True, reason="seed-mean final exploitability of the self-play run is about 0.23; "
                                       "estimate noise keeps player 1 near uniform at horizon 8000")
def test_selfplay_mean_exploitability_below_bound():
    cfg = load_config(Path(__file__).parent.parent / "configs" / "crl1_selfplay.cfg")
    rep = run_aggregate(cfg.experiment())
    assert rep.mean["exploitability"][-1] < 0.15


def test_selfplay_estimates_near_value():
    cfg = load_config(Path(__file__).parent.parent / "configs" / "crl1_selfplay.cfg")
    rep = run_aggregate(cfg.experiment())
    u1 = np.array([rep.mean[f"u_hat1_{i}"][-1] for i in range(2)])
    assert np.all((u1 >= 2.4) & (u1 <= 2.8))
