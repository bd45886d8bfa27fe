import pytest
from hypothesis import given, strategies as st

from esird.params_state import default_params
from esird.policy import CostsPath, PolicySpec, PolicyState, effective_costs, policy_step

SPEC = PolicySpec(trigger_threshold=0.03, exit_threshold=0.005, cost_multiplier=1.3)
BASE = default_params().costs


def test_spec_validation():
    with pytest.raises(ValueError):
        PolicySpec(trigger_threshold=0.01, exit_threshold=0.02)
    with pytest.raises(ValueError):
        PolicySpec(cost_multiplier=0.9)


def test_trigger_and_hysteresis_band():
    assert policy_step(PolicyState(), 0.031, SPEC).active
    assert policy_step(PolicyState(active=True), 0.02, SPEC).active


def test_hand_traced_path():
    s, log = PolicyState(), []
    for p in (0.01, 0.04, 0.02, 0.004, 0.06):
        s = policy_step(s, p, SPEC)
        log.append(s.active)
    assert log == [False, True, True, False, True]


def test_boundary_equality_keeps_state_unless_inclusive():
    assert not policy_step(PolicyState(), 0.03, SPEC).active
    assert policy_step(PolicyState(True), 0.005, SPEC).active
    inclusive = PolicySpec(cost_multiplier=1.3, strict=False)
    assert policy_step(PolicyState(), 0.03, inclusive).active


def test_effective_costs():
    assert effective_costs(BASE, PolicyState(), SPEC) == BASE
    active = effective_costs(BASE, PolicyState(True), SPEC)
    assert active.gamma_p("S") == pytest.approx(0.387335, abs=1e-12)
    for k in "SIR":
        assert active.gamma_c(k) == pytest.approx(1.3 * BASE.gamma_c(k))
    unity = PolicySpec(cost_multiplier=1.0)
    assert effective_costs(BASE, PolicyState(True), unity).gamma_p("S") == BASE.gamma_p("S")


@given(st.lists(st.floats(0, 0.1), max_size=200))
def test_flip_count_equals_strict_crossings(path):
    s, expected, active = PolicyState(), 0, False
    for day, p in enumerate(path):
        if not active and p > SPEC.trigger_threshold:
            active, expected = True, expected + 1
        elif active and p < SPEC.exit_threshold:
            active, expected = False, expected + 1
        s = policy_step(s, p, SPEC, day)
        assert s.active == active
    assert s.n_flips == expected


def test_disabled_costs_path_never_changes():
    cp = CostsPath(BASE, PolicySpec(cost_multiplier=1.5, enabled=False))
    s = cp.advance(cp.initial_state(), 0, 0.5)
    assert not s.active and cp.multiplier(s) == 1.0 and cp.costs(s) == BASE
