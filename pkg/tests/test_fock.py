import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cimtraj.channels import PsaParams, apply_kraus, displace, loss_channel, measurement_density, psa_step
from cimtraj.errors import InvalidArgument, TruncationOverflow
from cimtraj.fock import (
    DensityMatrixFock,
    _loss_kraus,
    fock_cat,
    fock_coherent,
    fock_displace,
    fock_from_grid,
    fock_loss_and_measure,
    fock_measurement_density,
    fock_moments,
    fock_number_state,
    fock_psa_step,
    fock_squeezed_vacuum,
    fock_thermal,
    fock_vacuum,
    grid_from_fock,
    hermite_functions,
    trace_distance,
)
from cimtraj.grid import cat_state, coherent_state, make_grid, renormalize, squeezed_vacuum

G = make_grid()
D = 60


def test_hermite_functions_are_orthonormal():
    h = hermite_functions(60, G.x)
    gram = (h * G.weights) @ h.T
    np.testing.assert_allclose(gram, np.eye(60), atol=1e-12)


def test_state_constructors():
    assert fock_vacuum().dim == 60
    assert fock_number_state(10, 3).populations()[3] == 1.0
    with pytest.raises(InvalidArgument):
        fock_number_state(10, 10)
    with pytest.raises(InvalidArgument):
        DensityMatrixFock(np.zeros((2, 3)))
    with pytest.raises(InvalidArgument):
        fock_thermal(10, -1.0)


@given(st.floats(-4.0, 4.0))
def test_coherent_moments(x0):
    m = fock_moments(fock_coherent(D, x0))
    assert m.mean_x == pytest.approx(x0, abs=1e-10)
    assert m.var_x == pytest.approx(0.5, abs=1e-9)
    assert m.var_p == pytest.approx(0.5, abs=1e-9)


@given(st.floats(-0.6, 0.6))
def test_squeezed_vacuum_moments_and_grid_agreement(S):
    rho = fock_squeezed_vacuum(D, S)
    m = fock_moments(rho)
    assert m.var_x == pytest.approx(0.5 * math.exp(2 * S), rel=1e-8)
    assert m.var_p == pytest.approx(0.5 * math.exp(-2 * S), rel=1e-8)
    assert trace_distance(grid_from_fock(rho, G), squeezed_vacuum(G, S)) < 1e-8


def test_thermal_state_population():
    p = fock_thermal(D, 2.0).populations()
    n = np.arange(D)
    assert float(np.dot(n, p)) == pytest.approx(2.0, rel=1e-6)


def test_grid_round_trip():
    rho = fock_cat(D, 2.0)
    back = fock_from_grid(grid_from_fock(rho, G), D)
    assert trace_distance(back, rho) < 1e-10
    assert trace_distance(grid_from_fock(rho, G), cat_state(G, 2.0)) < 1e-10


def test_conversion_refuses_lossy_truncation():
    with pytest.raises(TruncationOverflow):
        fock_from_grid(coherent_state(G, 6.0), 10)


@given(st.floats(0.05, 0.999))
def test_loss_kraus_operators_are_complete(T):
    ops = _loss_kraus(30, T)
    total = np.einsum("kab,kac->bc", ops, ops)
    np.testing.assert_allclose(total, np.eye(30), atol=1e-12)


def test_psa_squeezes_vacuum():
    out = fock_psa_step(fock_vacuum(D), 0.3, 0.0)
    assert trace_distance(out, fock_squeezed_vacuum(D, 0.3)) < 1e-8


def test_psa_two_photon_loss_fixed_point():
    rho = fock_vacuum(D)
    out = fock_psa_step(rho, 0.0, 0.002)
    np.testing.assert_allclose(out.values, rho.values, atol=1e-14)


def test_psa_number_state_decay():
    out = fock_psa_step(fock_number_state(20, 2), 0.0, 0.1)
    assert out.populations()[0] == pytest.approx(1 - math.exp(-0.2), abs=1e-9)


def test_truncation_overflow_is_detected():
    with pytest.raises(TruncationOverflow):
        fock_psa_step(fock_coherent(20, 5.0), 0.1, 0.0)


@given(st.floats(0.3, 0.99), st.floats(-2.5, 2.5))
def test_loss_keeps_coherent_states(T, x0):
    out = fock_loss_and_measure(fock_coherent(D, x0), T)
    assert trace_distance(out, fock_coherent(D, math.sqrt(T) * x0)) < 1e-10


# --- oracle agreement with the grid channels -----------------------------------

@given(st.floats(0.5, 0.999), st.floats(-2.0, 2.0))
def test_measurement_matches_grid(T, x_m):
    rho_f = fock_cat(D, 1.5)
    rho_g = grid_from_fock(rho_f, G)
    post_f, p_f = fock_loss_and_measure(rho_f, T, x_m)
    assert p_f == pytest.approx(measurement_density(rho_g, T, x_m), rel=1e-9)
    assert p_f == pytest.approx(fock_measurement_density(rho_f, T, x_m), rel=1e-14)
    post_g = renormalize(apply_kraus(rho_g, T, x_m))
    assert trace_distance(grid_from_fock(post_f, G), post_g) < 1e-8


def test_loss_matches_grid():
    rho_f = fock_cat(D, 2.0)
    out_g = loss_channel(grid_from_fock(rho_f, G), 0.7)
    out_f = fock_loss_and_measure(rho_f, 0.7)
    assert trace_distance(grid_from_fock(out_f, G), out_g) < 1e-8


@given(st.floats(-2.0, 2.0))
def test_displacement_matches_grid(d):
    rho_f = fock_cat(D, 1.5)
    out_f = fock_displace(rho_f, d)
    out_g = displace(grid_from_fock(rho_f, G), d)
    assert trace_distance(grid_from_fock(out_f, G), out_g) < 1e-7


def test_psa_matches_grid():
    rho_f = fock_coherent(D, 2.0)
    out_f = fock_psa_step(rho_f, 0.1, 0.002)
    out_g = psa_step(grid_from_fock(rho_f, G), PsaParams(0.1, 0.002))
    assert trace_distance(grid_from_fock(out_f, G), out_g) < 1e-5


def test_trace_distance_basics():
    a, b = fock_coherent(D, 1.0), fock_coherent(D, -1.0)
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-14)
    # pure states: sqrt(1 - |<a|b>|^2) with |<a|b>|^2 = exp(-2 x0^2)
    assert trace_distance(a, b) == pytest.approx(math.sqrt(1 - math.exp(-2.0)), rel=1e-10)
    with pytest.raises(InvalidArgument):
        trace_distance(a, coherent_state(G, 1.0))
