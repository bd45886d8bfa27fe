"""Prevalence-triggered mobility restrictions with a two-threshold hysteresis."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .params_state import MobilityCosts


@dataclass(frozen=True)
class PolicySpec:
    trigger_threshold: float = 0.03
    exit_threshold: float = 0.005
    cost_multiplier: float = 1.0
    enabled: bool = True
    strict: bool = True

    def __post_init__(self):
        if not self.exit_threshold < self.trigger_threshold:
            raise ValueError("exit_threshold must be below trigger_threshold")
        if not self.cost_multiplier >= 1:
            raise ValueError("cost_multiplier must be >= 1")


@dataclass(frozen=True)
class PolicyState:
    active: bool = False
    flips: tuple = ()  # days on which the state changed

    @property
    def n_flips(self) -> int:
        return len(self.flips)


def _crosses_up(prevalence, threshold, strict):
    return prevalence > threshold if strict else prevalence >= threshold


def _crosses_down(prevalence, threshold, strict):
    return prevalence < threshold if strict else prevalence <= threshold


def policy_step(state: PolicyState, prevalence: float, spec: PolicySpec, day: int | None = None) -> PolicyState:
    """Advance the automaton on today's prevalence."""
    if not spec.enabled:
        return state
    if not state.active and _crosses_up(prevalence, spec.trigger_threshold, spec.strict):
        active = True
    elif state.active and _crosses_down(prevalence, spec.exit_threshold, spec.strict):
        active = False
    else:
        return state
    flips = state.flips + ((len(state.flips) if day is None else day),)
    return PolicyState(active, flips)


def effective_costs(baseline: MobilityCosts, state: PolicyState, spec: PolicySpec) -> MobilityCosts:
    if spec.enabled and state.active:
        return baseline.scaled(baseline.multiplier * spec.cost_multiplier)
    return baseline


class CostsPath:
    """Costs-path provider: the policy automaton owned by a trajectory runner.

    `advance(state, day, prevalence)` returns the next policy state and
    `multiplier(state)` the cost multiplier in force. With spec None (or a
    disabled spec) costs never change.
    """

    def __init__(self, baseline: MobilityCosts, spec: PolicySpec | None = None):
        self.baseline = baseline
        self.spec = spec if spec is not None else PolicySpec(enabled=False)

    @property
    def enabled(self) -> bool:
        return self.spec.enabled and self.spec.cost_multiplier != 1.0

    def initial_state(self) -> PolicyState:
        return PolicyState()

    def advance(self, state: PolicyState, day: int, prevalence: float) -> PolicyState:
        if not self.enabled:
            return state
        return policy_step(state, prevalence, self.spec, day)

    def multiplier(self, state: PolicyState) -> float:
        return self.spec.cost_multiplier if (self.enabled and state.active) else 1.0

    def costs(self, state: PolicyState) -> MobilityCosts:
        return effective_costs(self.baseline, state, self.spec)

    def costs_for_multiplier(self, multiplier: float) -> MobilityCosts:
        return self.baseline if multiplier == 1.0 else self.baseline.scaled(self.baseline.multiplier * multiplier)
