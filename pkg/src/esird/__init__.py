"""Epidemic with endogenous mobility: SIRD dynamics coupled to a recursive equilibrium of mobility choices."""

from .params_state import (
    DiseaseClass,
    EconomyParams,
    EpidemicState,
    EpidemiologicalParams,
    MobilityCosts,
    MobilityProfile,
    ModelParams,
    ValueVector,
    default_params,
    load_config,
    validate_params,
)
from .policy import CostsPath, PolicySpec, PolicyState
from .epidemic import run_dumb_sird, step_epidemic
from .equilibrium import (
    NoRoot,
    bellman_residual,
    compute_limit_utilities,
    phi_closed_form,
    run_recursive_equilibrium,
    solve_xi,
)
from .shooting import SearchExhausted, ShootingConfig, shoot

__version__ = "0.1.0"
