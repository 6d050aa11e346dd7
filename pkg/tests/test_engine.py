import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimtraj.channels import PsaParams
from cimtraj.config import RunConfig
from cimtraj.engine import (
    IsingProblem,
    RoundTripParams,
    antiferromagnetic_pair,
    estimate_amplitude,
    feedback_displacements,
    round_params,
    round_trip,
    run_ensemble,
    run_trajectory,
    squeeze_from_gain,
)
from cimtraj.errors import InvalidArgument
from cimtraj.grid import coherent_state, make_grid, moments, vacuum_state

G = make_grid()
SHORT = RunConfig(rounds=8)


def test_ising_problem_validation():
    assert antiferromagnetic_pair().n_pulse == 2
    with pytest.raises(InvalidArgument):
        IsingProblem([[0, 1], [0.5, 0]])
    with pytest.raises(InvalidArgument):
        IsingProblem([[1, 0], [0, 0]])
    with pytest.raises(InvalidArgument):
        IsingProblem([1, 2, 3])


@given(st.floats(0.5, 1.5), st.floats(0.5, 1.0), st.floats(0.5, 1.0))
def test_squeeze_from_gain_inverts_net_gain(g, T, Tp):
    S = squeeze_from_gain(g, T, Tp)
    assert math.exp(S) * math.sqrt(T * Tp) == pytest.approx(g, rel=1e-12)


def test_table_one_squeeze_rate():
    assert squeeze_from_gain(1.05, 0.99, 1.0) == pytest.approx(math.log(1.05) - 0.5 * math.log(0.99))
    with pytest.raises(InvalidArgument):
        squeeze_from_gain(0.0, 0.9, 1.0)


def test_round_params_never_deamplify():
    cfg = RunConfig(schedule={"kind": "linear-ramp", "g0": 0.5, "g_max": 1.05, "ramp_rounds": 10})
    assert round_params(cfg, 0).psa.S == 0.0
    assert round_params(cfg, 10).psa.S == pytest.approx(squeeze_from_gain(1.05, 0.99, 1.0))


def test_amplitude_estimate_and_feedback():
    assert estimate_amplitude(0.1, 0.99) == pytest.approx(1.0)
    with pytest.raises(InvalidArgument):
        estimate_amplitude(0.1, 1.0)
    d = feedback_displacements([1.0, -2.0], antiferromagnetic_pair(), 0.005)
    np.testing.assert_allclose(d, [0.01, -0.005])
    with pytest.raises(InvalidArgument):
        feedback_displacements([1.0], antiferromagnetic_pair(), 0.005)


def test_round_trip_on_coherent_pair_matches_closed_form():
    # no PSA, no loss: measurement scales amplitudes by sqrt(T), feedback adds -R x_m / sqrt(1-T)
    T, R = 0.9, 0.05
    params = RoundTripParams(PsaParams(0.0, 0.0), T, 1.0, R)
    states = [coherent_state(G, 2.0), coherent_state(G, -1.0)]
    res = round_trip(states, params, antiferromagnetic_pair(), np.full((2, 2), 0.5))
    x_m = res.x_m
    np.testing.assert_allclose(x_m, math.sqrt(1 - T) * np.array([2.0, -1.0]), atol=1e-9)
    est = x_m / math.sqrt(1 - T)
    expected = math.sqrt(T) * np.array([2.0, -1.0]) - R * est[::-1]
    got = [moments(s).mean_x for s in res.states]
    np.testing.assert_allclose(got, expected, atol=1e-9)
    np.testing.assert_allclose(res.before[:, 0], [2.0, -1.0], atol=1e-12)


def test_round_trip_rejects_bad_input():
    params = round_params(SHORT, 0)
    with pytest.raises(InvalidArgument):
        round_trip([vacuum_state(G)], params, antiferromagnetic_pair(), np.zeros((2, 2)))
    with pytest.raises(InvalidArgument):
        round_trip([vacuum_state(G)] * 2, params, antiferromagnetic_pair(), np.full((2, 2), 0.5),
                   process_order=("psa", "loss", "measure", "teleport"))


def test_trajectory_is_deterministic_and_seed_dependent():
    a = run_trajectory(SHORT, 11)
    b = run_trajectory(SHORT, 11)
    c = run_trajectory(SHORT, 12)
    assert np.array_equal(a.x_m, b.x_m)
    assert np.array_equal(a.moments_before, b.moments_before)
    assert not np.array_equal(a.x_m, c.x_m)


def test_trajectory_record_shapes():
    rec = run_trajectory(SHORT.replace(snapshot_rounds=(0, 4, 8)), 3)
    assert rec.rounds == 8
    assert rec.x_m.shape == (8, 2)
    assert rec.moments_before.shape == (8, 2, 5)
    assert rec.positive_mass.shape == (9, 2)
    assert sorted(rec.snapshots) == [0, 4, 8]
    P = rec.success_probability()
    assert P.shape == (9,)
    assert P[0] == pytest.approx(0.5, abs=1e-12)
    assert np.all((P >= 0) & (P <= 1))
    np.testing.assert_allclose(rec.moments_before[0, :, 1], 0.5, atol=1e-12)


def test_mirrored_trajectory_is_the_spin_flip():
    a = run_trajectory(SHORT, 5)
    b = run_trajectory(SHORT, 5, mirror=True)
    np.testing.assert_allclose(b.x_m, -a.x_m, atol=1e-9)
    np.testing.assert_allclose(b.positive_mass, 1 - a.positive_mass, atol=1e-9)


@pytest.mark.parametrize("change", [
    {"loss_mode": "selective", "T_prime": 0.8},
    {"T_prime": 0.9},
    {"feedback_delay": True},
    {"process_order": ("measure", "feedback", "psa", "loss")},
    {"psa_method": "explicit", "x_max": 10.0, "n_points": 129, "rounds": 2},
])
def test_variants_run(change):
    rec = run_trajectory(SHORT.replace(rounds=3).replace(**change), 1)
    assert np.all(np.isfinite(rec.moments_before))


def test_ensemble_is_independent_of_worker_count():
    cfg = SHORT.replace(rounds=4)
    one = run_ensemble(cfg, n_traj=3, base_seed=20, workers=1)
    two = run_ensemble(cfg, n_traj=3, base_seed=20, workers=2)
    assert [r.seed for r in one.records] == [20, 21, 22]
    for a, b in zip(one.records, two.records):
        assert np.array_equal(a.x_m, b.x_m)
        assert np.array_equal(a.positive_mass, b.positive_mass)


def test_failed_trajectories_are_recorded():
    # without gain saturation the amplified state soon outgrows a small grid
    cfg = RunConfig(x_max=10.0, n_points=129, G_tot=1.15, L=0.0, R=0.0, rounds=60)
    res = run_ensemble(cfg, n_traj=2, base_seed=0)
    assert len(res.failures) == 2 and not res.records
    seed, category, message = res.failures[0]
    assert seed == 0 and category == "grid-leak" and re.match(r"round \d+: ", message)
    assert res.completed_fraction == 0.0
