import math

import numpy as np
import pytest
from scipy.linalg import expm

from biphoton.errors import InvalidParameterError
from biphoton.lindyn import (
    LINEAR_COLUMNS,
    LinearState,
    Trajectory,
    closed_form_trajectory,
    integrate_linear,
    linear_closed_form,
    linear_rhs,
    reference_f,
    reference_f_discrepancy,
)
from biphoton.params import RateSet

SHORT_LIVED = dict(tau_r=0.2, tau_s=0.2, tau_b=1.0)


def matrix_oracle(rates, t):
    """Exact state via the matrix exponential of the linear generator."""
    J = np.column_stack([linear_rhs(e, rates) for e in np.eye(8)])
    return expm(J * t) @ LinearState().as_array()


def test_rhs_decoupled():
    rs = RateSet(tau_r=0.5, tau_s=2.0, tau_b=1.0)
    d = linear_rhs(LinearState(), rs)
    assert (d.n_s, d.n_r, d.n_d, d.f) == (-0.5, -2.0, -1.0, 0.0)
    assert d.c_srd == -rs.A and d.c_rd == -rs.D


def test_rhs_source_bracket():
    d = linear_rhs(LinearState(), RateSet(1.0, 1.0, 1.0, tau3=1.0))
    assert d.f == 2.0


def test_rhs_short_lived_d_slope():
    d = linear_rhs(LinearState(), RateSet.from_coupling(coupling=0.7, **SHORT_LIVED))
    assert d.n_d == -1.0


def test_rhs_accepts_arrays():
    rs = RateSet.from_coupling(coupling=0.3, **SHORT_LIVED)
    y = np.linspace(0.1, 0.8, 8)
    assert np.array_equal(linear_rhs(y, rs), linear_rhs(LinearState.from_array(y), rs).as_array())


def test_closed_form_initial_state():
    s = linear_closed_form(0.0, RateSet.from_coupling(coupling=0.5, **SHORT_LIVED))
    assert s == LinearState()


def test_closed_form_decoupled():
    rs = RateSet(tau_r=0.3, tau_s=3.0, tau_b=1.0)
    for t in (0.1, 1.0, 7.0):
        s = linear_closed_form(t, rs)
        assert s.n_r == pytest.approx(math.exp(-t / 0.3), rel=1e-14)
        assert s.n_s == pytest.approx(math.exp(-t / 3.0), rel=1e-14)
        assert s.n_d == pytest.approx(math.exp(-t), rel=1e-14)
        assert s.f == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_matches_matrix_exponential(seed):
    rng = np.random.default_rng(seed)
    rs = RateSet.from_coupling(10 ** rng.uniform(-1, 1), 10 ** rng.uniform(-1, 1), 1.0,
                               rng.uniform(0, 1))
    for t in (0.05, 0.7, 3.0, 10.0):
        exact = matrix_oracle(rs, t)
        got = linear_closed_form(t, rs).as_array()
        assert np.max(np.abs(got - exact)) <= 1e-12 * np.max(np.abs(exact))


@pytest.mark.parametrize("taus", [
    (2.0, 2.0, 1.0),   # A/2 equals B
    (2.0, 1.0, 2.0),   # A/2 equals 1/tau_s
    (1.0, 1.0, 1.0),   # B = C = D
    (0.5, 0.5, 0.5),
])
def test_closed_form_degenerate_rates(taus):
    rs = RateSet(*taus, tau3=1.25)
    for t in (0.3, 2.0, 6.0):
        exact = matrix_oracle(rs, t)
        got = linear_closed_form(t, rs).as_array()
        assert np.max(np.abs(got - exact)) <= 1e-11 * np.max(np.abs(exact))


def test_closed_form_continuous_across_degeneracy_switch():
    base = linear_closed_form(1.3, RateSet(2.0, 2.0, 1.0, tau3=1.0)).as_array()
    for eps in (1e-12, 1e-10, 1e-8, 1e-6):
        near = linear_closed_form(1.3, RateSet(2.0, 2.0, 1.0 + eps, tau3=1.0)).as_array()
        assert np.max(np.abs(near - base)) < 10 * eps + 1e-14


def test_closed_form_negative_time():
    with pytest.raises(InvalidParameterError):
        linear_closed_form(-1.0, RateSet(**SHORT_LIVED))


def test_integrate_decoupled_exponential():
    rs = RateSet(tau_r=0.5, tau_s=1.0, tau_b=1.0)
    traj = integrate_linear(rs, 10.0, tol=1e-9)
    assert np.max(np.abs(traj.column("n_s") - np.exp(-traj.times))) < 1e-9
    assert np.all(traj.column("f") == 0.0)


def test_correlators_are_exponentials():
    rs = RateSet.from_coupling(coupling=0.8, **SHORT_LIVED)
    traj = integrate_linear(rs, 5.0, tol=1e-9, samples=51)
    for col, rate in (("c_srd", rs.A), ("c_sr", rs.B), ("c_sd", rs.C), ("c_rd", rs.D)):
        c = traj.column(col)
        # relative error control applies above the absolute-tolerance floor
        resolved = c > 1e-6
        assert resolved.sum() >= 5
        assert np.max(np.abs(np.log(c[resolved]) + rate * traj.times[resolved])) < 1e-7


def test_integration_matches_closed_form():
    rs = RateSet.from_coupling(tau_r=0.7, tau_s=3.0, tau_b=1.0, coupling=0.9)
    traj = integrate_linear(rs, 10.0, tol=1e-9)
    exact = closed_form_trajectory(traj.times, rs).values
    rel = np.max(np.abs(traj.values - exact), axis=1) / np.max(np.abs(exact), axis=1)
    assert rel.max() < 1e-6


def test_tolerance_self_convergence():
    rs = RateSet.from_coupling(coupling=0.5, **SHORT_LIVED)
    a = integrate_linear(rs, 10.0, tol=1e-7).final.as_array()
    b = integrate_linear(rs, 10.0, tol=5e-8).final.as_array()
    assert np.max(np.abs(a - b)) < 1e-7


def test_coupled_decay_shape():
    rs = RateSet.from_coupling(coupling=1.0, **SHORT_LIVED)
    traj = integrate_linear(rs, 10.0, tol=1e-9, samples=201)
    d_z = traj.column("n_d") - 0.5
    assert d_z[0] == 0.5
    assert np.all(np.diff(d_z) < 0)
    # the correlated channel speeds up the early decay of D
    early = traj.times <= 0.5
    assert np.all(traj.column("n_d")[early][1:] < np.exp(-traj.times[early][1:]))
    assert traj.final.d_z == pytest.approx(-0.5, abs=1e-3)


def test_long_time_decay():
    rs = RateSet.from_coupling(coupling=1.0, **SHORT_LIVED)
    s = linear_closed_form(60.0, rs)
    assert np.max(np.abs(s.as_array())) < 1e-20


def test_integrate_validation():
    rs = RateSet(**SHORT_LIVED)
    with pytest.raises(InvalidParameterError):
        integrate_linear(rs, 0.0)
    with pytest.raises(InvalidParameterError):
        integrate_linear(rs, 1.0, tol=1e-2)
    with pytest.raises(InvalidParameterError):
        integrate_linear(rs, 1.0, samples=1)


def test_samples_grid():
    traj = integrate_linear(RateSet.from_coupling(coupling=0.2, **SHORT_LIVED), 2.0, samples=5)
    assert np.array_equal(traj.times, np.linspace(0.0, 2.0, 5))
    assert traj.columns == LINEAR_COLUMNS
    assert isinstance(traj.state(2), LinearState)


def test_reference_f_expression_is_not_a_solution():
    rs = RateSet.from_coupling(coupling=1.0, **SHORT_LIVED)
    times = np.linspace(0.0, 10.0, 201)
    assert reference_f(0.0, rs) == 0.0
    assert reference_f_discrepancy(rs, times) > 1e-3
    assert reference_f_discrepancy(rs.with_coupling(0.0), times) == 0.0


def test_trajectory_validation():
    with pytest.raises(InvalidParameterError):
        Trajectory(times=[0.0, 1.0], values=np.zeros((3, 2)), columns=("a", "b"))
    with pytest.raises(InvalidParameterError):
        Trajectory(times=[0.0, 0.0], values=np.zeros((2, 1)), columns=("a",))
    traj = Trajectory(times=[0.0, 1.0], values=[[1.0], [2.0]], columns=("a",))
    assert traj.state(1) == {"a": 2.0} and len(traj) == 2
