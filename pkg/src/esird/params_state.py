"""Model constants, epidemic state and the small value types shared by every module."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

SUM_TOL = 1e-12


class DiseaseClass(enum.Enum):
    S = "S"
    I = "I"
    R = "R"
    D = "D"


LIVING = (DiseaseClass.S, DiseaseClass.I, DiseaseClass.R)


def as_class(k) -> DiseaseClass:
    return k if isinstance(k, DiseaseClass) else DiseaseClass(str(k))


@dataclass(frozen=True)
class EpidemicState:
    """Population shares over S, I, R, D. Head counts live elsewhere."""

    share_S: float
    share_I: float
    share_R: float
    share_D: float

    def __post_init__(self):
        shares = self.as_tuple()
        for s in shares:
            if not (-SUM_TOL <= float(s) <= 1.0 + SUM_TOL):
                raise ValueError(f"share outside [0,1]: {s}")
        total = math.fsum(float(s) for s in shares)
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"shares sum to {total!r}, not 1")

    @classmethod
    def initial(cls, infected_share: float) -> "EpidemicState":
        return cls(1.0 - infected_share, infected_share, 0.0, 0.0)

    @classmethod
    def disease_free(cls) -> "EpidemicState":
        return cls(1.0, 0.0, 0.0, 0.0)

    def share(self, k) -> float:
        return getattr(self, "share_" + as_class(k).value)

    def as_tuple(self) -> tuple:
        return (self.share_S, self.share_I, self.share_R, self.share_D)


@dataclass(frozen=True)
class EpidemiologicalParams:
    pi_R: float
    pi_D: float
    beta_P: float
    beta_C: float


@dataclass(frozen=True)
class EconomyParams:
    a0_SR: float
    a0_I: float
    a1_SR: float
    a1_I: float
    P0: float
    P1: float
    g: float
    M: float
    rho: float
    z_form: str = "exp"

    def a0(self, k) -> float:
        return self.a0_I if as_class(k) is DiseaseClass.I else self.a0_SR

    def a1(self, k) -> float:
        return self.a1_I if as_class(k) is DiseaseClass.I else self.a1_SR


@dataclass(frozen=True)
class MobilityCosts:
    """Baseline unit costs of mobility; effective cost is baseline times multiplier."""

    gamma_p_S: float
    gamma_p_I: float
    gamma_p_R: float
    gamma_c_S: float
    gamma_c_I: float
    gamma_c_R: float
    multiplier: float = 1.0

    def gamma_p(self, k) -> float:
        return getattr(self, "gamma_p_" + as_class(k).value) * self.multiplier

    def gamma_c(self, k) -> float:
        return getattr(self, "gamma_c_" + as_class(k).value) * self.multiplier

    def scaled(self, multiplier: float) -> "MobilityCosts":
        return replace(self, multiplier=multiplier)


@dataclass(frozen=True)
class MobilityProfile:
    """Per-class (production, consumption) mobility. The dead do not move."""

    theta_p_S: float
    theta_c_S: float
    theta_p_I: float
    theta_c_I: float
    theta_p_R: float
    theta_c_R: float

    def __post_init__(self):
        for f in fields(self):
            v = float(getattr(self, f.name))
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{f.name}={v} outside [0,1]")

    @classmethod
    def from_pairs(cls, s, i, r) -> "MobilityProfile":
        return cls(s[0], s[1], i[0], i[1], r[0], r[1])

    @classmethod
    def uniform(cls, value: float) -> "MobilityProfile":
        return cls(*(value,) * 6)

    def theta_p(self, k) -> float:
        k = as_class(k)
        return 0.0 if k is DiseaseClass.D else getattr(self, "theta_p_" + k.value)

    def theta_c(self, k) -> float:
        k = as_class(k)
        return 0.0 if k is DiseaseClass.D else getattr(self, "theta_c_" + k.value)

    def pair(self, k) -> tuple:
        return (self.theta_p(k), self.theta_c(k))


@dataclass(frozen=True)
class ValueVector:
    v_S: float
    v_I: float
    v_R: float

    @property
    def v_D(self) -> float:
        return 0.0

    def value(self, k) -> float:
        k = as_class(k)
        return 0.0 if k is DiseaseClass.D else getattr(self, "v_" + k.value)

    def as_tuple(self) -> tuple:
        return (self.v_S, self.v_I, self.v_R)

    def feasibility_violation(self, U_R_max, U_I_max, rel_tol: float = 1e-12):
        """Name of the first violated feasible-range condition, or None.

        The upper bounds are relaxed by rel_tol so that the disease-free
        stationary values, which sit exactly on them, count as feasible.
        """
        x, y, z = self.v_S, self.v_I, self.v_R
        if not y > 0:
            return "v_I > 0"
        if not y <= x:
            return "v_I <= v_S"
        if not x <= z:
            return "v_S <= v_R"
        if not z < U_R_max * (1 + rel_tol):
            return "v_R < U_R_max"
        if not y < U_I_max * (1 + rel_tol):
            return "v_I < U_I_max"
        return None


@dataclass(frozen=True)
class ModelParams:
    epi: EpidemiologicalParams
    econ: EconomyParams
    costs: MobilityCosts
    population: float = 60e6
    initial_infected: float = 1.0

    @property
    def initial_state(self) -> EpidemicState:
        return EpidemicState.initial(self.initial_infected / self.population)

    def with_z_form(self, z_form: str) -> "ModelParams":
        return replace(self, econ=replace(self.econ, z_form=z_form))


def validate_params(params: ModelParams) -> list:
    """Names of violated invariants; an empty list means the parameters pass."""
    e, c, k = params.epi, params.econ, params.costs
    bad = []
    if not (0 < e.pi_R < 1 and 0 < e.pi_D < 1):
        bad.append("pi_R, pi_D in (0,1)")
    if not e.pi_R + e.pi_D < 1:
        bad.append("pi_R + pi_D < 1")
    if not (e.beta_P > 0 and e.beta_C > 0):
        bad.append("beta_P, beta_C > 0")
    if not e.beta_P + e.beta_C < 1:
        bad.append("beta_P + beta_C < 1")
    if not 0 < c.a0_I <= c.a0_SR:
        bad.append("0 < a0_I <= a0_SR")
    if not 0 <= c.a1_I <= c.a1_SR:
        bad.append("0 <= a1_I <= a1_SR")
    if not (c.P0 >= 0 and c.P1 >= 0):
        bad.append("P0, P1 >= 0")
    if not 0 < c.rho < 1:
        bad.append("rho in (0,1)")
    if not c.g > 0:
        bad.append("g > 0")
    if c.z_form not in ("exp", "log1p"):
        bad.append("z_form in {exp, log1p}")
    gammas = [k.gamma_p_S, k.gamma_p_I, k.gamma_p_R, k.gamma_c_S, k.gamma_c_I, k.gamma_c_R]
    if not all(gm > 0 for gm in gammas):
        bad.append("gamma > 0")
    if not k.gamma_p_R <= k.gamma_p_S <= k.gamma_p_I:
        bad.append("gamma_p(R) <= gamma_p(S) <= gamma_p(I)")
    if not k.gamma_c_R <= k.gamma_c_S <= k.gamma_c_I:
        bad.append("gamma_c(R) <= gamma_c(S) <= gamma_c(I)")
    if not k.multiplier >= 1:
        bad.append("multiplier >= 1")
    if not params.population > 0:
        bad.append("population > 0")
    if not 0 <= params.initial_infected <= params.population:
        bad.append("0 <= initial_infected <= population")
    return bad


# ---------------------------------------------------------------------------
# config loading

_SECTIONS = {"epi": EpidemiologicalParams, "econ": EconomyParams, "costs": MobilityCosts}


def parse_config_text(text: str) -> dict:
    """Flat `key = value` lines; `#` starts a comment. Values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value
    return out


def params_from_mapping(cfg: dict, base: ModelParams | None = None) -> ModelParams:
    """Build ModelParams from dotted keys, falling back to `base` for missing ones."""
    parts = {}
    for section, cls in _SECTIONS.items():
        current = getattr(base, section) if base is not None else None
        kwargs = {}
        for f in fields(cls):
            key = f"{section}.{f.name}"
            if key in cfg:
                kwargs[f.name] = cfg[key] if f.type == "str" else float(cfg[key])
            elif current is not None:
                kwargs[f.name] = getattr(current, f.name)
        if "run.z_form" in cfg and section == "econ":
            kwargs["z_form"] = cfg["run.z_form"]
        parts[section] = cls(**kwargs)
    population = float(cfg.get("init.population", base.population if base else 60e6))
    infected = float(cfg.get("init.infected", base.initial_infected if base else 1.0))
    return ModelParams(parts["epi"], parts["econ"], parts["costs"], population, infected)


def shipped_config_text(name: str = "italy_baseline") -> str:
    return resources.files("esird").joinpath("data", f"{name}.cfg").read_text(encoding="utf-8")


def load_config(path_or_name: str | Path = "italy_baseline") -> dict:
    """Read a config file by path, or one of the shipped configs by name."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_config_text(p.read_text(encoding="utf-8"))
    return parse_config_text(shipped_config_text(str(path_or_name)))


def default_params() -> ModelParams:
    return params_from_mapping(load_config("italy_baseline"))

