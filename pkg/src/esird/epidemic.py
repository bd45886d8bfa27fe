"""Population transition with mobility-dependent transmission, and the constant-mobility SIRD run."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import economy
from .params_state import EconomyParams, EpidemicState, EpidemiologicalParams, MobilityProfile
from .trajectory import Trajectory


@dataclass(frozen=True)
class TransitionInputs:
    state: EpidemicState
    profile: MobilityProfile
    epi: EpidemiologicalParams


def transmission_rate(profile: MobilityProfile, epi: EpidemiologicalParams) -> float:
    """Per-day contact rate between the mobility of infected and susceptible agents."""
    return (epi.beta_P * profile.theta_p_I * profile.theta_p_S
            + epi.beta_C * profile.theta_c_I * profile.theta_c_S)


def step_shares(S, I, R, D, tau, pi_R, pi_D):
    """One application of the transition kernel given the infection probability tau."""
    return (S * (1 - tau), S * tau + I * (1 - pi_R - pi_D), R + I * pi_R, D + I * pi_D)


def step_epidemic(inputs: TransitionInputs) -> EpidemicState:
    st, epi = inputs.state, inputs.epi
    tau = st.share_I * transmission_rate(inputs.profile, epi)
    if not 0 <= tau < 1:
        raise ValueError(f"infection probability {tau} outside [0,1)")
    return EpidemicState(*step_shares(*st.as_tuple(), tau, epi.pi_R, epi.pi_D))


def run_dumb_sird(
    mu0: EpidemicState,
    fixed_profile: MobilityProfile,
    epi: EpidemiologicalParams,
    horizon: int,
    econ: EconomyParams | None = None,
) -> Trajectory:
    """Iterate the transition with the same profile every day.

    Economy series are filled when `econ` is given; Z still moves with the
    class shares even though mobility is fixed.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = horizon + 1
    mu = np.empty((n, 4))
    mu[0] = mu0.as_tuple()
    beta = transmission_rate(fixed_profile, epi)
    state = mu0
    for t in range(1, n):
        state = step_epidemic(TransitionInputs(state, fixed_profile, epi))
        mu[t] = state.as_tuple()

    theta = np.tile(
        [fixed_profile.theta_p_S, fixed_profile.theta_c_S, fixed_profile.theta_p_I,
         fixed_profile.theta_c_I, fixed_profile.theta_p_R, fixed_profile.theta_c_R], (n, 1))
    agg = mu[:, 0] * theta[:, 0] + mu[:, 1] * theta[:, 2] + mu[:, 2] * theta[:, 4]
    Z = np.full(n, np.nan)
    prod = np.full(n, np.nan)
    if econ is not None:
        for t in range(n):
            s = EpidemicState(*mu[t])
            snap = economy.snapshot(s, fixed_profile, econ)
            Z[t], prod[t] = snap.Z, snap.production_index
    return Trajectory(
        mu=mu, theta=theta, xi=np.full(n, np.nan), values=np.full((n, 3), np.nan), Z=Z,
        agg_mobility=agg, production=prod, beta=np.full(n, beta),
        policy_active=np.zeros(n, bool), multiplier=np.ones(n), meta={"model": "dumb"},
    )
