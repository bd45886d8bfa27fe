"""Income, prices, consumption, the aggregate income factor Z and flow utility."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params_state import (
    DiseaseClass,
    EconomyParams,
    EpidemicState,
    MobilityCosts,
    MobilityProfile,
    LIVING,
    as_class,
)

Z_FLOOR = 1e-12


@dataclass(frozen=True)
class EconomySnapshot:
    Z: float
    aggregate_mobility: float
    production_index: float


def aggregate_mobility(state: EpidemicState, profile: MobilityProfile) -> float:
    """Population-weighted production mobility of the living classes."""
    return sum(state.share(k) * profile.theta_p(k) for k in LIVING)


def compute_Z(aggregate_mobility: float, g: float, z_form: str = "exp") -> float:
    """Aggregate income factor.

    "exp" is 1 - exp(-g m) floored at Z_FLOOR; "log1p" is the alternative
    bookkeeping 1 + m whose logarithm is ln(1 + m).
    """
    if z_form == "log1p":
        return 1.0 + aggregate_mobility
    return max(-math.expm1(-g * aggregate_mobility), Z_FLOOR)


def z_reference(econ: EconomyParams) -> float:
    """Value of Z that normalizes production under each z form."""
    return 2.0 if econ.z_form == "log1p" else 1.0


def _living(k) -> DiseaseClass:
    k = as_class(k)
    if k is DiseaseClass.D:
        raise ValueError("not defined for the dead state")
    return k


def income(k, theta_p: float, Z: float, econ: EconomyParams) -> float:
    k = _living(k)
    return Z * (econ.a0(k) + econ.a1(k) * theta_p)


def price(theta_c: float, econ: EconomyParams) -> float:
    return 1.0 / (econ.P0 + econ.P1 * theta_c)


def consumption(k, theta, Z: float, econ: EconomyParams) -> float:
    theta_p, theta_c = theta
    return income(k, theta_p, Z, econ) / price(theta_c, econ)


def utility(k, theta, Z: float, costs: MobilityCosts, econ: EconomyParams) -> float:
    """Flow utility; the dead-state constant M enters as "- M"."""
    k = as_class(k)
    if k is DiseaseClass.D:
        return 0.0
    theta_p, theta_c = theta
    c = consumption(k, theta, Z, econ)
    if not c > 0:
        raise ValueError(f"log of non-positive consumption {c}")
    return math.log(c) - costs.gamma_p(k) * theta_p - costs.gamma_c(k) * theta_c - econ.M


def production_index(state: EpidemicState, profile: MobilityProfile, Z: float, econ: EconomyParams) -> float:
    """Aggregate income, equal to about 1 in the disease-free benchmark."""
    total = sum(state.share(k) * (econ.a0(k) + econ.a1(k) * profile.theta_p(k)) for k in LIVING)
    return Z * total / z_reference(econ)


def snapshot(state: EpidemicState, profile: MobilityProfile, econ: EconomyParams) -> EconomySnapshot:
    m = aggregate_mobility(state, profile)
    Z = compute_Z(m, econ.g, econ.z_form)
    return EconomySnapshot(Z, m, production_index(state, profile, Z, econ))
