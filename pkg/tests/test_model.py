from __future__ import annotations

import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ciser_dtn.model import (
    BASELINE,
    BASELINE_INITIAL,
    ModelParams,
    NegativeState,
    NonFiniteState,
    SirState,
    StateVector,
    ciser_rhs,
    dead_population,
    force_of_infection,
    integrate,
    parse_params,
    read_trajectory_csv,
    sir_rhs,
    time_grid,
    write_trajectory_csv,
)


def test_rhs_at_baseline_initial_state():
    d = ciser_rhs(BASELINE_INITIAL, BASELINE)
    assert d[2] == pytest.approx(-7.1537e-4, abs=5e-8)
    # hand evaluation of each component
    p, x = BASELINE, BASELINE_INITIAL
    lam = p.beta * x.i + p.epsilon * p.beta * x.c
    assert d[0] == pytest.approx(-lam * x.s - p.mu * x.s + p.omega * x.r, rel=1e-14)
    assert d[1] == pytest.approx(lam * x.s - (p.sigma + p.mu) * x.e, rel=1e-14)
    assert d[3] == pytest.approx(p.rho * p.gamma * x.i - (p.tau + p.mu) * x.c, rel=1e-14)
    assert d[4] == pytest.approx(
        (1 - p.rho) * p.gamma * x.i + p.tau * x.c - (p.omega + p.mu) * x.r, rel=1e-14
    )


def test_force_of_infection():
    assert force_of_infection(BASELINE_INITIAL, BASELINE) == pytest.approx(
        BASELINE.beta * (0.02 + 0.084 * 0.03)
    )


def test_infection_free_state_is_fixed_point_with_recruitment():
    d = ciser_rhs(StateVector(1.0, 0.0, 0.0, 0.0, 0.0), BASELINE, recruitment=True)
    assert np.all(d == 0.0)


def test_derivatives_sum_to_minus_mu_times_mass():
    d = ciser_rhs(BASELINE_INITIAL, BASELINE)
    assert d.sum() == pytest.approx(-BASELINE.mu * BASELINE_INITIAL.total(), abs=1e-18)
    d = ciser_rhs(BASELINE_INITIAL, BASELINE, recruitment=True)
    assert d.sum() == pytest.approx(BASELINE.mu * (1.0 - BASELINE_INITIAL.total()), abs=1e-18)


def test_sir_rhs_mass_action():
    p = BASELINE.replace(beta=0.5, gamma=0.1)
    d = sir_rhs(SirState(0.9, 0.1, 0.0), p)
    assert d == pytest.approx([-0.045, 0.035, 0.01])
    assert d.sum() == pytest.approx(0.0, abs=1e-17)


@pytest.mark.parametrize("name", ["beta", "sigma", "gamma", "tau", "omega", "mu"])
def test_negative_rates_rejected(name):
    with pytest.raises(ValueError):
        BASELINE.replace(**{name: -1.0})


@pytest.mark.parametrize("eps", [-0.1, 1.1, math.nan])
def test_epsilon_bounds(eps):
    with pytest.raises(ValueError):
        BASELINE.replace(epsilon=eps)


def test_state_vector_bounds():
    with pytest.raises(ValueError):
        StateVector(1.2, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        StateVector(math.inf, 0, 0, 0, 0)
    assert StateVector(1.0, 0, 0, 0, 0).is_normalized()


def test_dead_population_linear():
    assert dead_population(10.0, 0.5, BASELINE) == pytest.approx(0.5 + 10 * BASELINE.mu)
    with pytest.raises(ValueError):
        dead_population(-1.0, 0.0, BASELINE)


def test_time_grid_ends_exactly():
    g = time_grid(0.0, 730.0, 0.1)
    assert len(g) == 7301 and g[-1] == 730.0
    g = time_grid(0.0, 1.0, 0.3)
    assert list(g[:-1]) == pytest.approx([0.0, 0.3, 0.6, 0.9]) and g[-1] == 1.0


def test_rk4_fourth_order_on_sir():
    p = BASELINE.replace(beta=0.8, gamma=0.2)
    x0 = SirState(0.99, 0.01, 0.0)
    ref = integrate("sir", x0, p, 0.0, 20.0, 0.01).final.as_array()
    errs = [
        np.abs(integrate("sir", x0, p, 0.0, 20.0, h).final.as_array() - ref).max()
        for h in (0.4, 0.2)
    ]
    assert 12.0 < errs[0] / errs[1] < 20.0


def test_conservation_with_dead_tracking():
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 730.0, 0.1)
    total = traj.states.sum(axis=1) + traj.dead
    assert np.max(np.abs(total - 1.0)) <= 1e-12


def test_recruitment_conserves_unit_mass():
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 100.0, 0.1, recruitment=True)
    assert np.max(np.abs(traj.states.sum(axis=1) - 1.0)) <= 1e-12


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_detected():
    p = BASELINE.replace(beta=1e308)
    x0 = StateVector(0.5, 0.0, 0.5, 0.0, 0.0)
    with pytest.raises((NonFiniteState, NegativeState)):
        integrate("ciser", x0, p, 0.0, 10.0, 1.0)


def test_negative_state_detected():
    # a huge step makes the explicit scheme overshoot below zero
    p = BASELINE.replace(sigma=50.0)
    x0 = StateVector(0.5, 0.5, 0.0, 0.0, 0.0)
    with pytest.raises(NegativeState):
        integrate("ciser", x0, p, 0.0, 10.0, 1.0)


def test_integrate_type_checks():
    with pytest.raises(TypeError):
        integrate("ciser", SirState(1, 0, 0), BASELINE, 0, 1, 0.1)
    with pytest.raises(ValueError):
        integrate("seir", BASELINE_INITIAL, BASELINE, 0, 1, 0.1)  # type: ignore[arg-type]


def test_trajectory_csv_round_trip():
    traj = integrate("ciser", BASELINE_INITIAL, BASELINE, 0.0, 5.0, 0.1)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf, ["demo"])
    text = buf.getvalue()
    assert text.splitlines()[1] == "t,S,E,I,C,R"
    times, cols = read_trajectory_csv(io.StringIO(text))
    assert np.array_equal(times, traj.times)
    for k, label in enumerate(traj.labels):
        assert np.array_equal(cols[label], traj.states[:, k])


def test_parse_params_defaults_and_errors():
    pf = parse_params(["beta = 0.5", "# note", "initial = 0.9,0,0.1,0,0"])
    assert pf.params.beta == 0.5 and pf.params.sigma == BASELINE.sigma
    assert pf.initial == StateVector(0.9, 0, 0.1, 0, 0)
    with pytest.raises(ValueError, match="unknown key"):
        parse_params(["zeta = 1"])
    with pytest.raises(ValueError, match=":1:"):
        parse_params(["beta = x"])


fractions = st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5).filter(lambda v: sum(v) > 0)


@settings(max_examples=60, deadline=None)
@given(fractions, st.floats(1e-4, 1.0), st.floats(1e-4, 0.5))
def test_rhs_mass_balance_property(raw, beta, mu):
    total = sum(raw)
    x = StateVector(*(v / total for v in raw))
    p = BASELINE.replace(beta=beta, mu=mu)
    d = ciser_rhs(x, p)
    assert d.sum() == pytest.approx(-mu * x.total(), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(fractions, st.floats(1e-3, 2.0), st.floats(1e-3, 0.2))
def test_short_integration_stays_in_simplex(raw, beta, mu):
    total = sum(raw)
    x = StateVector(*(v / total for v in raw))
    p = ModelParams(beta, 0.3, 0.2, 0.1, 0.05, 0.1, mu, 0.9)
    traj = integrate("ciser", x, p, 0.0, 20.0, 0.1)
    assert traj.states.min() >= 0.0
    assert np.max(np.abs(traj.states.sum(axis=1) + traj.dead - 1.0)) <= 1e-12
