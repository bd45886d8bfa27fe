import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esird import economy
from esird.equilibrium import (
    DegenerateSlopeError,
    ForwardRunner,
    MultipleRootsWarning,
    NoRoot,
    advance_values,
    bellman_residual,
    bellman_values,
    compute_ab,
    compute_limit_utilities,
    phi_closed_form,
    run_recursive_equilibrium,
    solve_xi,
    stationary_values,
    theta_S_of_xi,
    xi_residual,
)
from esird.params_state import EpidemicState, MobilityCosts, MobilityProfile, ValueVector, default_params
from esird.policy import CostsPath
from esird.shooting import values_from_deltas
from oracles import bellman_today, gap_residual, limit_utilities_log1p, scan_root, table_params

P = default_params()
E, C, EPI = P.econ, P.costs, P.epi
TP = table_params()
LIM = compute_limit_utilities(C, E, EPI)
# day-0 values of the accepted baseline equilibrium (recorded from a shooting run)
BASELINE_V0 = ValueVector(928.6317152678910, 925.7560951644557, 937.6148382239917)


def test_phi_infected_matches_hand_evaluation():
    tp, _ = phi_closed_form("I", C, E)
    assert tp == pytest.approx(1 / 0.42564 - 0.49160 / 0.29805, abs=1e-15)
    assert tp == pytest.approx(0.7, abs=1e-4)  # calibration target


def test_phi_clamps():
    hi_cost = MobilityCosts(100, 100, 100, 100, 100, 100)
    lo_cost = MobilityCosts(1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6)
    assert phi_closed_form("S", hi_cost, E) == (0.0, 0.0)
    assert phi_closed_form("R", lo_cost, E) == (1.0, 1.0)


def test_phi_rejects_zero_slope():
    from dataclasses import replace
    with pytest.raises(DegenerateSlopeError):
        phi_closed_form("I", C, replace(E, a1_I=0.0))


def test_compute_ab_examples():
    assert compute_ab(EpidemicState(1, 0, 0, 0), (0.7, 0.7), EPI) == (0.0, 0.0)
    a, b = compute_ab(EpidemicState(0.9, 0.1, 0, 0), (0.7, 0.7), EPI)
    assert a == pytest.approx(0.0102242, abs=1e-12) and b == pytest.approx(0.0102242, abs=1e-12)
    assert compute_ab(EpidemicState(0, 1, 0, 0), (1, 1), EPI) == (EPI.beta_P, EPI.beta_C)


def test_theta_S_examples():
    phi_S = phi_closed_form("S", C, E)
    assert theta_S_of_xi(0.0, 0.01, 0.01, C, E) == phi_S
    assert theta_S_of_xi(123.0, 0.0, 0.0, C, E) == phi_S
    assert theta_S_of_xi(1000.0, 0.01, 0.01, C, E)[0] == 0.0


@given(st.floats(0, 500), st.floats(0, 0.15), st.floats(0, 0.15), st.floats(0, 500))
def test_theta_S_non_increasing_in_gap(x1, a, b, x2):
    lo, hi = sorted((x1, x2))
    t_lo, t_hi = theta_S_of_xi(lo, a, b, C, E), theta_S_of_xi(hi, a, b, C, E)
    assert t_hi[0] <= t_lo[0] and t_hi[1] <= t_lo[1]


def test_residual_is_affine_without_infection():
    st0 = EpidemicState(0.8, 0.0, 0.15, 0.05)
    w = ValueVector(900.0, 890.0, 905.0)
    r0, r1, r2 = (xi_residual(x, w, st0, C, E, EPI) for x in (0.0, 1.0, 7.5))
    d = 1 - E.rho
    assert r1 - r0 == pytest.approx(d, abs=1e-9) and r2 - r0 == pytest.approx(7.5 * d, abs=1e-9)
    root = solve_xi(w, st0, C, E, EPI)
    assert root == pytest.approx(-r0 / d, abs=1e-9)
    assert xi_residual(root, w, st0, C, E, EPI) == pytest.approx(0.0, abs=1e-10)


def test_residual_matches_independent_formula():
    mu = (0.9, 0.05, 0.049, 0.001)
    w = ValueVector(930.0, 926.0, 937.0)
    for x in (0.0, 0.5, 3.0, 40.0):
        assert xi_residual(x, w, EpidemicState(*mu), C, E, EPI) == pytest.approx(gap_residual(x, w.as_tuple(), mu, TP), abs=1e-9)


def test_baseline_day0_brackets_a_root_and_matches_scan():
    st0 = P.initial_state
    r_lo = xi_residual(0.0, BASELINE_V0, st0, C, E, EPI)
    r_hi = xi_residual(LIM.U_R_max, BASELINE_V0, st0, C, E, EPI)
    assert r_lo < 0 < r_hi
    scan, n_changes = scan_root(lambda x: gap_residual(x, BASELINE_V0.as_tuple(), st0.as_tuple(), TP), 0.0, LIM.U_R_max)
    assert n_changes == 1
    assert solve_xi(BASELINE_V0, st0, C, E, EPI) == pytest.approx(scan, abs=1e-8)


def test_no_root_when_residual_positive():
    w = ValueVector(100.0, 926.0, 937.0)  # susceptible value far below what the infected value implies
    with pytest.raises(NoRoot) as exc:
        solve_xi(w, P.initial_state, C, E, EPI)
    assert exc.value.side == "positive"


def test_scan_mode_reports_multiple_roots(monkeypatch):
    import esird.equilibrium as eq
    st0 = EpidemicState(0.8, 0.0, 0.15, 0.05)
    w = ValueVector(900.0, 890.0, 905.0)

    def fake(prob, xi_max, points):
        grid = np.linspace(0, xi_max, points)
        vals = np.where(grid < xi_max / 2, -1.0, 1.0) * np.where(grid > 0.8 * xi_max, -1.0, 1.0)
        idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
        return grid, vals, idx

    monkeypatch.setattr(eq, "_scan_brackets", fake)
    with pytest.warns(MultipleRootsWarning):
        solve_xi(w, st0, C, E, EPI, scan_points=11)


def test_stationary_fixed_point():
    for state in (EpidemicState.disease_free(), EpidemicState(0.4, 0.0, 0.55, 0.05)):
        v = stationary_values(state, C, E, EPI)
        xi = solve_xi(v, state, C, E, EPI)
        assert xi == pytest.approx(v.v_S - v.v_I, abs=1e-9)
        nxt = advance_values(v, xi, state, C, E, EPI)
        assert max(abs(a - b) for a, b in zip(nxt.as_tuple(), v.as_tuple())) <= 1e-9


def test_limit_utilities_ordering_and_symmetry():
    assert LIM.U_S_max == LIM.U_R_max
    assert LIM.U_I_max < LIM.U_R_max


def test_log1p_limit_utilities_fixture():
    lim = compute_limit_utilities(C, P.with_z_form("log1p").econ, EPI)
    ref = limit_utilities_log1p(TP)
    assert (lim.U_S_max, lim.U_I_max, lim.U_R_max) == pytest.approx(ref, abs=1e-9)
    assert (lim.U_S_max, lim.U_I_max) == pytest.approx((-1110.7968530651845, -1107.9119134646921), abs=1e-9)


def _profile_at(xi, state, costs=C):
    a, b = compute_ab(state, phi_closed_form("I", costs, E), EPI)
    return MobilityProfile.from_pairs(theta_S_of_xi(xi, a, b, costs, E), phi_closed_form("I", costs, E),
                                      phi_closed_form("R", costs, E))


def test_inversion_identity_on_baseline_day0():
    st0 = P.initial_state
    xi = solve_xi(BASELINE_V0, st0, C, E, EPI)
    nxt = advance_values(BASELINE_V0, xi, st0, C, E, EPI)
    assert nxt.v_S - nxt.v_I == pytest.approx(xi, abs=1e-12)
    back = bellman_values(nxt, st0, _profile_at(xi, st0), C, E, EPI)
    assert max(abs(a - b) for a, b in zip(back.as_tuple(), BASELINE_V0.as_tuple())) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-7, 0.3), st.floats(0.0, 0.5), st.floats(1e-3, 30), st.floats(0, 5), st.floats(880, 937))
def test_solve_xi_recovers_gap_of_consistent_day(infected, recovered, gap, sr_gap, v_R):
    S = max(0.0, 1.0 - infected - recovered - 0.001)
    mu = (S, infected, 1.0 - S - infected - 0.001, 0.001)
    v_next = (v_R - sr_gap, v_R - sr_gap - gap, v_R)
    w, xi = bellman_today(v_next, mu, TP)
    got = solve_xi(ValueVector(*w), EpidemicState(*mu), C, E, EPI)
    assert got == pytest.approx(xi, abs=1e-7)


def test_disease_free_start_gives_constant_trajectory():
    v = stationary_values(EpidemicState.disease_free(), C, E, EPI)
    tr = run_recursive_equilibrium(EpidemicState.disease_free(), v, CostsPath(C), P, 50)
    assert tr.complete and len(tr) == 51
    assert np.allclose(tr.values, np.array(v.as_tuple()), rtol=0, atol=1e-9)
    assert np.all(tr.mu[:, 0] == 1.0)
    phi = phi_closed_form("S", C, E) + phi_closed_form("I", C, E) + phi_closed_form("R", C, E)
    assert np.allclose(tr.theta, np.array(phi), atol=1e-12)
    assert bellman_residual(tr, P, CostsPath(C)).max_residual <= 1e-9


def test_horizon_zero_has_initial_record_only():
    v = stationary_values(EpidemicState.disease_free(), C, E, EPI)
    tr = run_recursive_equilibrium(EpidemicState.disease_free(), v, CostsPath(C), P, 0)
    assert len(tr) == 1 and tuple(tr.mu[0]) == (1.0, 0.0, 0.0, 0.0)


def test_near_zero_infected_value_is_rejected_immediately():
    v0 = ValueVector(*values_from_deltas(LIM.U_R_max, 0.0, 0.0, 0.999))
    tr = run_recursive_equilibrium(P.initial_state, v0, CostsPath(C), P, 425)
    assert not tr.complete
    assert tr.breach.day == 0 and tr.breach.reason == "no root: residual negative"


def test_infeasible_start_is_rejected():
    tr = run_recursive_equilibrium(P.initial_state, ValueVector(900.0, 910.0, 930.0), CostsPath(C), P, 10)
    assert tr.breach.day == 0 and tr.breach.reason == "v_I <= v_S" and len(tr) == 0


def test_longdouble_and_double_agree_for_short_runs():
    a = run_recursive_equilibrium(P.initial_state, BASELINE_V0, CostsPath(C), P, 40)
    b = run_recursive_equilibrium(P.initial_state, BASELINE_V0, CostsPath(C), P, 40, dtype=np.float64)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-8)


def test_bellman_residual_detects_perturbed_action():
    tr = run_recursive_equilibrium(P.initial_state, BASELINE_V0, CostsPath(C), P, 120)
    assert bellman_residual(tr, P, CostsPath(C)).max_residual <= 1e-6
    bad = tr.truncated(len(tr))
    bad.theta = tr.theta.copy()
    bad.theta[60, 0] -= 0.3
    rep = bellman_residual(bad, P, CostsPath(C))
    assert rep.max_residual > 1e-3 and rep.worst_day == 60 and not rep.argmax_ok
