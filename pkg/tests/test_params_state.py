from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from esird.params_state import (
    DiseaseClass,
    EpidemicState,
    MobilityCosts,
    MobilityProfile,
    ValueVector,
    default_params,
    load_config,
    params_from_mapping,
    parse_config_text,
    validate_params,
)
from oracles import table_params


def test_four_disease_classes():
    assert [k.value for k in DiseaseClass] == ["S", "I", "R", "D"]


def test_calibrated_defaults_pass_validation():
    assert validate_params(default_params()) == []


def test_shipped_config_matches_table_values_exactly():
    p, ref = default_params(), table_params()
    assert (p.epi.pi_R, p.epi.pi_D, p.epi.beta_P, p.epi.beta_C) == (
        ref["pi_R"], ref["pi_D"], ref["beta_P"], ref["beta_C"])
    assert (p.econ.a0_SR, p.econ.a0_I, p.econ.a1_SR, p.econ.a1_I) == (
        ref["A0"]["S"], ref["A0"]["I"], ref["A1"]["S"], ref["A1"]["I"])
    assert (p.econ.P0, p.econ.P1, p.econ.g, p.econ.M, p.econ.rho) == (
        ref["P0"], ref["P1"], ref["g"], ref["M"], ref["rho"])
    for k in "SIR":
        assert p.costs.gamma_p(k) == ref["gp"][k]
        assert p.costs.gamma_c(k) == ref["gc"][k]
    assert p.population == 60e6 and p.initial_infected == 1.0


def test_recovery_plus_death_bound_is_reported():
    p = default_params()
    bad = replace(p, epi=replace(p.epi, pi_R=0.6, pi_D=0.5))
    assert "pi_R + pi_D < 1" in validate_params(bad)


def test_reversed_cost_ordering_is_reported():
    p = default_params()
    bad = replace(p, costs=replace(p.costs, gamma_p_S=0.5, gamma_p_I=0.4))
    assert "gamma_p(R) <= gamma_p(S) <= gamma_p(I)" in validate_params(bad)


def test_state_rejects_bad_shares():
    with pytest.raises(ValueError):
        EpidemicState(0.5, 0.6, 0.0, 0.0)
    with pytest.raises(ValueError):
        EpidemicState(1.2, -0.2, 0.0, 0.0)


def test_initial_state_is_one_person_in_sixty_million():
    s = default_params().initial_state
    assert s.share_I == 1 / 60e6 and s.share_S == 1 - 1 / 60e6


def test_profile_dead_class_is_immobile_and_validated():
    prof = MobilityProfile.uniform(0.4)
    assert prof.pair(DiseaseClass.D) == (0.0, 0.0)
    with pytest.raises(ValueError):
        MobilityProfile.uniform(1.5)


def test_value_vector_dead_value_and_feasible_range():
    v = ValueVector(2.0, 1.0, 3.0)
    assert v.value("D") == 0.0
    assert v.feasibility_violation(4.0, 2.0) is None
    assert ValueVector(1.0, 2.0, 3.0).feasibility_violation(4.0, 2.5) == "v_I <= v_S"
    assert ValueVector(2.0, 1.0, 4.0).feasibility_violation(4.0, 2.0) is None  # upper bound tolerance
    assert ValueVector(2.0, 1.0, 4.1).feasibility_violation(4.0, 2.0) == "v_R < U_R_max"


@given(st.floats(1.0, 3.0))
def test_uniform_cost_scaling_preserves_ordering(mult):
    c = default_params().costs.scaled(mult)
    assert c.gamma_p("R") <= c.gamma_p("S") <= c.gamma_p("I")
    assert c.gamma_c("R") <= c.gamma_c("S") <= c.gamma_c("I")


def test_config_text_parsing_and_overrides():
    cfg = parse_config_text("# comment\nepi.pi_R = 0.1  # trailing\n\nrun.z_form = log1p\n")
    assert cfg == {"epi.pi_R": "0.1", "run.z_form": "log1p"}
    p = params_from_mapping(cfg, base=default_params())
    assert p.epi.pi_R == 0.1 and p.econ.z_form == "log1p" and p.epi.pi_D == 0.00052
    with pytest.raises(ValueError):
        parse_config_text("no equals sign")


def test_load_config_by_name_and_path(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("econ.g = 5\n")
    assert load_config(f) == {"econ.g": "5"}
    assert "econ.g" in load_config("italy_baseline")
