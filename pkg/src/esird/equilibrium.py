"""Recursive equilibrium: closed-form optimizers, the scalar gap equation for
susceptibles, the forward value advance, limit utilities and a Bellman check.

The forward recursion inverts the Bellman equations and amplifies errors in
the infected value by about 1/((1-rho)(1-pi_R-pi_D)) per day, so the runner
works in a configurable floating type (long double by default).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import economy
from .params_state import (
    DiseaseClass,
    EconomyParams,
    EpidemicState,
    EpidemiologicalParams,
    MobilityCosts,
    MobilityProfile,
    ModelParams,
    ValueVector,
    as_class,
)
from .policy import CostsPath, PolicyState
from .trajectory import Trajectory

S, I, R, D = DiseaseClass.S, DiseaseClass.I, DiseaseClass.R, DiseaseClass.D


class DegenerateSlopeError(ValueError):
    pass


class NoRoot(ArithmeticError):
    """The gap equation has no solution in [0, xi_max].

    side is "positive" when the residual is positive on the whole bracket
    (the infected value is too high relative to the susceptible one) and
    "negative" when it is negative everywhere.
    """

    def __init__(self, side: str, day: int | None = None):
        super().__init__(f"no root of the gap equation (residual {side} on bracket)"
                         + ("" if day is None else f" on day {day}"))
        self.side = side
        self.day = day


class MultipleRootsWarning(RuntimeWarning):
    pass


def _clamp(x):
    return 0.0 if x < 0 else (1.0 if x > 1 else x)


# ---------------------------------------------------------------------------
# closed forms

def phi_closed_form(k, costs: MobilityCosts, econ: EconomyParams) -> tuple:
    """Static optimum clamp(1/gamma - intercept/slope) for each channel."""
    k = as_class(k)
    a1 = econ.a1(k)
    if a1 == 0 or econ.P1 == 0:
        raise DegenerateSlopeError("closed form needs positive slopes a1 and P1")
    return (_clamp(1.0 / costs.gamma_p(k) - econ.a0(k) / a1),
            _clamp(1.0 / costs.gamma_c(k) - econ.P0 / econ.P1))


def compute_ab(state: EpidemicState, profile_I, epi: EpidemiologicalParams) -> tuple:
    """Infection rates per unit of susceptible mobility, with beta folded in."""
    return (epi.beta_P * state.share_I * profile_I[0], epi.beta_C * state.share_I * profile_I[1])


def theta_S_of_xi(xi: float, a: float, b: float, costs: MobilityCosts, econ: EconomyParams) -> tuple:
    d = 1.0 - econ.rho
    return (_clamp(1.0 / (costs.gamma_p(S) + d * a * xi) - econ.a0_SR / econ.a1_SR),
            _clamp(1.0 / (costs.gamma_c(S) + d * b * xi) - econ.P0 / econ.P1))


# ---------------------------------------------------------------------------
# limit utilities

@dataclass(frozen=True)
class LimitUtilities:
    U_S_max: float
    U_I_max: float
    U_R_max: float

    def as_values(self) -> ValueVector:
        return ValueVector(self.U_S_max, self.U_I_max, self.U_R_max)


def stationary_values(state: EpidemicState, costs: MobilityCosts, econ: EconomyParams,
                      epi: EpidemiologicalParams) -> ValueVector:
    """Values of a zero-infection steady state that keeps the given class shares.

    Everybody plays the closed-form action, susceptibles face no risk and the
    infected recover or die at the constant daily rates.
    """
    acts = {k: phi_closed_form(k, costs, econ) for k in (S, I, R)}
    m = state.share_S * acts[S][0] + state.share_I * acts[I][0] + state.share_R * acts[R][0]
    Z = economy.compute_Z(m, econ.g, econ.z_form)
    u = {k: economy.utility(k, acts[k], Z, costs, econ) for k in (S, I, R)}
    rho, d = econ.rho, 1.0 - econ.rho
    q = 1.0 - epi.pi_R - epi.pi_D
    v_R = u[R] / rho
    v_S = u[S] / rho
    v_I = (u[I] + d * epi.pi_R * v_R) / (1.0 - d * q)
    return ValueVector(v_S, v_I, v_R)


def _kappa(k, costs: MobilityCosts, econ: EconomyParams) -> float:
    gp, gc = costs.gamma_p(k), costs.gamma_c(k)
    a0, a1 = econ.a0(k), econ.a1(k)
    return (math.log(a1 / gp) + gp * a0 / a1 + math.log(econ.P1 / gc) + gc * econ.P0 / econ.P1 - 2.0)


def compute_limit_utilities(costs: MobilityCosts, econ: EconomyParams,
                            epi: EpidemiologicalParams) -> LimitUtilities:
    """Lifetime utilities once infection has died out.

    Under the exponential Z these are the disease-free stationary values of
    the recursion. Under "log1p" the three closed formulas of the simulation
    procedure are evaluated literally: interior (unclamped) actions, ln(1 + m)
    with m the susceptible production mobility, and no dead-state constant.
    """
    if econ.z_form != "log1p":
        v = stationary_values(EpidemicState.disease_free(), costs, econ, epi)
        return LimitUtilities(v.v_S, v.v_I, v.v_R)
    rho, d = econ.rho, 1.0 - econ.rho
    pi_R, q = epi.pi_R, 1.0 - epi.pi_R - epi.pi_D
    k_sr, k_i = _kappa(S, costs, econ), _kappa(I, costs, econ)
    log_term = math.log(1.0 + 1.0 / costs.gamma_p(S) - econ.a0_SR / econ.a1_SR)
    u_sr = (k_sr + log_term) / rho
    denom = rho * (1.0 - d * q)
    u_i = (rho * k_i + d * pi_R * k_sr) / denom + (1.0 - d * (1.0 - pi_R)) * log_term / denom
    return LimitUtilities(u_sr, u_i, u_sr)


# ---------------------------------------------------------------------------
# one-day kernel

@dataclass(frozen=True)
class _Block:
    """Per-multiplier constants of the day problem, in the working float type."""

    gp_S: object
    gc_S: object
    ratio_p: object
    ratio_c: object
    a0_S: object
    a1_S: object
    P0: object
    P1: object
    M: object
    phi_I: tuple
    phi_R: tuple
    base_I: object  # flow utility of I and R without the ln Z term
    base_R: object


def _block(costs: MobilityCosts, econ: EconomyParams, dtype) -> _Block:
    c = dtype
    phi_I = phi_closed_form(I, costs, econ)
    phi_R = phi_closed_form(R, costs, econ)

    def base(k, act):
        return (np.log((c(econ.a0(k)) + c(econ.a1(k)) * c(act[0])) * (c(econ.P0) + c(econ.P1) * c(act[1])))
                - c(costs.gamma_p(k)) * c(act[0]) - c(costs.gamma_c(k)) * c(act[1]) - c(econ.M))

    return _Block(
        gp_S=c(costs.gamma_p(S)), gc_S=c(costs.gamma_c(S)),
        ratio_p=c(econ.a0_SR) / c(econ.a1_SR), ratio_c=c(econ.P0) / c(econ.P1),
        a0_S=c(econ.a0_SR), a1_S=c(econ.a1_SR), P0=c(econ.P0), P1=c(econ.P1), M=c(econ.M),
        phi_I=(c(phi_I[0]), c(phi_I[1])), phi_R=(c(phi_R[0]), c(phi_R[1])),
        base_I=base(I, phi_I), base_R=base(R, phi_R),
    )


class DayProblem:
    """The gap equation of one day for fixed state, costs and current values w."""

    __slots__ = ("blk", "S", "mIR", "a", "b", "w", "d", "pi_R", "q", "g", "log1p", "zero", "one", "floor")

    def __init__(self, blk: _Block, shares, w, econ: EconomyParams, epi: EpidemiologicalParams, dtype):
        c = dtype
        Sh, Ih, Rh = shares[0], shares[1], shares[2]
        self.blk = blk
        self.S = Sh
        self.mIR = Ih * blk.phi_I[0] + Rh * blk.phi_R[0]
        self.a = c(epi.beta_P) * Ih * blk.phi_I[0]
        self.b = c(epi.beta_C) * Ih * blk.phi_I[1]
        self.w = w
        self.d = c(1) - c(econ.rho)
        self.pi_R = c(epi.pi_R)
        self.q = c(1) - c(epi.pi_R) - c(epi.pi_D)
        self.g = c(econ.g)
        self.log1p = econ.z_form == "log1p"
        self.zero, self.one = c(0), c(1)
        self.floor = c(economy.Z_FLOOR)

    def actions(self, xi):
        blk, d = self.blk, self.d
        tp = self.one / (blk.gp_S + d * self.a * xi) - blk.ratio_p
        tc = self.one / (blk.gc_S + d * self.b * xi) - blk.ratio_c
        return (min(max(tp, self.zero), self.one), min(max(tc, self.zero), self.one))

    def log_z(self, m):
        """(Z, ln Z, d ln Z / dm)."""
        if self.log1p:
            Z = self.one + m
            return Z, np.log(Z), self.one / Z
        e = np.exp(-self.g * m)
        Z = -np.expm1(-self.g * m)
        if Z < self.floor:
            return self.floor, np.log(self.floor), self.zero
        return Z, np.log(Z), self.g * e / Z

    def evaluate(self, xi):
        """Residual, its derivative in xi, next values (S, I, R), actions and Z."""
        blk, d, a, b, w = self.blk, self.d, self.a, self.b, self.w
        one, zero = self.one, self.zero
        dp = blk.gp_S + d * a * xi
        dc = blk.gc_S + d * b * xi
        tp = one / dp - blk.ratio_p
        tc = one / dc - blk.ratio_c
        if tp <= zero:
            tp, dtp = zero, zero
        elif tp >= one:
            tp, dtp = one, zero
        else:
            dtp = -d * a / (dp * dp)
        if tc <= zero:
            tc, dtc = zero, zero
        elif tc >= one:
            tc, dtc = one, zero
        else:
            dtc = -d * b / (dc * dc)
        Z, lz, dlz_dm = self.log_z(self.S * tp + self.mIR)
        W_R = (w[2] - lz - blk.base_R) / d
        W_I = ((w[1] - lz - blk.base_I) / d - self.pi_R * W_R) / self.q
        inc = blk.a0_S + blk.a1_S * tp
        spend = blk.P0 + blk.P1 * tc
        U_S = lz + np.log(inc * spend) - blk.gp_S * tp - blk.gc_S * tc - blk.M
        tau = a * tp + b * tc
        r = d * W_I + d * xi + U_S - d * tau * xi - w[0]

        dlz = dlz_dm * self.S * dtp
        dW_R = -dlz / d
        dW_I = (-dlz / d - self.pi_R * dW_R) / self.q
        dU_S = dlz + (blk.a1_S / inc - blk.gp_S) * dtp + (blk.P1 / spend - blk.gc_S) * dtc
        dr = d * dW_I + d + dU_S - d * tau - d * xi * (a * dtp + b * dtc)
        return r, dr, (W_I + xi, W_I, W_R), (tp, tc), Z

    def residual(self, xi):
        return self.evaluate(xi)[0]

    def solve(self, xi_max, guess=None, max_iter: int = 200):
        """Safeguarded Newton inside the sign bracket [0, xi_max]."""
        zero = self.zero
        r_lo = self.residual(zero)
        if r_lo > 0:
            raise NoRoot("positive")
        if r_lo == 0:
            return zero, self.evaluate(zero)
        r_hi = self.residual(xi_max)
        if r_hi < 0:
            raise NoRoot("negative")
        lo, hi = zero, xi_max
        x = guess if (guess is not None and lo < guess < hi) else (lo + hi) / 2
        eps = np.finfo(type(x)).eps if isinstance(x, np.floating) else np.finfo(float).eps
        for _ in range(max_iter):
            r, dr, *_ = self.evaluate(x)
            if r == 0:
                break
            if r > 0:
                hi = x
            else:
                lo = x
            xn = x - r / dr if dr > 0 else (lo + hi) / 2
            if not lo < xn < hi:
                xn = (lo + hi) / 2
            if abs(xn - x) <= 4 * eps * max(abs(x), 1):
                x = xn
                break
            x = xn
        return x, self.evaluate(x)


def _day_problem(w, state: EpidemicState, costs, econ, epi, dtype=float):
    blk = _block(costs, econ, dtype)
    shares = tuple(dtype(s) for s in state.as_tuple())
    wv = tuple(dtype(x) for x in (w.v_S, w.v_I, w.v_R))
    return DayProblem(blk, shares, wv, econ, epi, dtype)


def xi_residual(xi: float, w: ValueVector, state: EpidemicState, costs: MobilityCosts,
                econ: EconomyParams, epi: EpidemiologicalParams) -> float:
    """Residual of the gap equation for the susceptible/infected value gap xi."""
    return float(_day_problem(w, state, costs, econ, epi).residual(float(xi)))


def _scan_brackets(prob: DayProblem, xi_max: float, points: int):
    grid = np.linspace(0.0, xi_max, points)
    vals = np.array([float(prob.residual(x)) for x in grid])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    return grid, vals, idx


def solve_xi(w: ValueVector, state: EpidemicState, costs: MobilityCosts, econ: EconomyParams,
             epi: EpidemiologicalParams, tol: float = 1e-12, xi_max: float | None = None,
             scan_points: int = 0) -> float:
    """Root of the gap equation on [0, xi_max] (xi_max defaults to U_R_max).

    With scan_points > 0 a sign scan runs first; several sign changes raise
    a MultipleRootsWarning and the smallest root is returned.
    """
    if xi_max is None:
        xi_max = compute_limit_utilities(costs, econ, epi).U_R_max
    prob = _day_problem(w, state, costs, econ, epi)
    if scan_points:
        grid, vals, idx = _scan_brackets(prob, xi_max, scan_points)
        if len(idx) == 0:
            raise NoRoot("positive" if vals[0] > 0 else "negative")
        if len(idx) > 1:
            warnings.warn(f"{len(idx)} sign changes of the gap residual; taking the smallest root",
                          MultipleRootsWarning, stacklevel=2)
        lo, hi = grid[idx[0]], grid[idx[0] + 1]
        x = _bisect(prob.residual, lo, hi, vals[idx[0]])
    else:
        x, _ = prob.solve(xi_max)
    r = float(prob.residual(x))
    if abs(r) > tol:
        x = _bisect(prob.residual, 0.0, xi_max, float(prob.residual(0.0)))
    return float(x)


def _bisect(f, lo, hi, f_lo):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (f_lo > 0):
            lo, f_lo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def advance_values(w: ValueVector, xi_hat: float, state: EpidemicState, costs: MobilityCosts,
                   econ: EconomyParams, epi: EpidemiologicalParams) -> ValueVector:
    """Next-day values implied by today's values and the solved gap."""
    _, _, nxt, _, _ = _day_problem(w, state, costs, econ, epi).evaluate(float(xi_hat))
    return ValueVector(*(float(x) for x in nxt))


def bellman_rhs(k, theta, v_next: ValueVector, Z: float, ab: tuple, costs: MobilityCosts,
                econ: EconomyParams, epi: EpidemiologicalParams) -> float:
    """Right-hand side of the Bellman equation of class k for action theta."""
    k = as_class(k)
    if k is D:
        return 0.0
    d = 1.0 - econ.rho
    u = economy.utility(k, theta, Z, costs, econ)
    if k is S:
        tau = ab[0] * theta[0] + ab[1] * theta[1]
        return u + d * ((1 - tau) * v_next.v_S + tau * v_next.v_I)
    if k is I:
        return u + d * ((1 - epi.pi_R - epi.pi_D) * v_next.v_I + epi.pi_R * v_next.v_R)
    return u + d * v_next.v_R


def bellman_values(v_next: ValueVector, state: EpidemicState, profile: MobilityProfile,
                   costs: MobilityCosts, econ: EconomyParams, epi: EpidemiologicalParams) -> ValueVector:
    """Current values from next-day values and today's actions (the backward map)."""
    Z = economy.compute_Z(economy.aggregate_mobility(state, profile), econ.g, econ.z_form)
    ab = compute_ab(state, profile.pair(I), epi)
    return ValueVector(*(bellman_rhs(k, profile.pair(k), v_next, Z, ab, costs, econ, epi) for k in (S, I, R)))


# ---------------------------------------------------------------------------
# forward runner

@dataclass(frozen=True)
class FeasibilityBreach:
    day: int
    reason: str
    values: tuple | None = None


@dataclass
class EquilibriumTrajectory(Trajectory):
    breach: FeasibilityBreach | None = None
    terminal_state: tuple | None = None
    terminal_values: tuple | None = None
    terminal_policy: PolicyState | None = None

    @property
    def complete(self) -> bool:
        return self.breach is None


@dataclass
class ForwardRun:
    """Raw output of the forward recursion in the working float type."""

    mu: list
    values: list
    actions: list
    xi: list
    Z: list
    active: list
    multiplier: list
    breach: FeasibilityBreach | None
    end_state: tuple
    end_values: tuple
    end_policy: PolicyState
    n_days: int = 0  # days with complete records


def limit_bounds(params: ModelParams, dtype=float) -> tuple:
    """(U_R_max, U_I_max) used by the feasible-range check."""
    v = stationary_values(EpidemicState.disease_free(), params.costs, params.econ, params.epi)
    return dtype(v.v_R), dtype(v.v_I)


class ForwardRunner:
    """Reusable forward recursion for one parameter set and costs path."""

    def __init__(self, params: ModelParams, costs_path: CostsPath, dtype=np.longdouble,
                 feasibility_tol: float = 1e-12):
        self.params = params
        self.costs_path = costs_path
        self.dtype = dtype
        self.tol = feasibility_tol
        self.U_R_max, self.U_I_max = limit_bounds(params, dtype)
        self._blocks = {}
        c = dtype
        self.pi_R, self.pi_D = c(params.epi.pi_R), c(params.epi.pi_D)
        self.q = c(1) - self.pi_R - self.pi_D
        hi = c(1) + c(feasibility_tol)
        self.R_cap, self.I_cap = self.U_R_max * hi, self.U_I_max * hi

    def block(self, multiplier: float) -> _Block:
        blk = self._blocks.get(multiplier)
        if blk is None:
            costs = self.costs_path.costs_for_multiplier(multiplier)
            blk = self._blocks[multiplier] = _block(costs, self.params.econ, self.dtype)
        return blk

    def violation(self, x, y, z):
        if not y > 0:
            return "v_I > 0"
        if not y <= x:
            return "v_I <= v_S"
        if not x <= z:
            return "v_S <= v_R"
        if not z < self.R_cap:
            return "v_R < U_R_max"
        if not y < self.I_cap:
            return "v_I < U_I_max"
        return None

    def run(self, mu0, v0, horizon: int, policy_state: PolicyState | None = None,
            start_day: int = 0) -> ForwardRun:
        """Solve days start_day..start_day+horizon; stops at the first infeasibility."""
        c = self.dtype
        econ, epi = self.params.econ, self.params.epi
        cp = self.costs_path
        mu = tuple(c(x) for x in mu0)
        w = tuple(c(x) for x in v0)
        pstate = policy_state if policy_state is not None else cp.initial_state()
        xi_max = self.U_R_max
        out = ForwardRun([], [], [], [], [], [], [], None, mu, w, pstate)
        bad = self.violation(*w)
        if bad:
            out.breach = FeasibilityBreach(start_day, bad, tuple(float(x) for x in w))
            return out
        guess = None
        pi_R, pi_D, q = self.pi_R, self.pi_D, self.q
        for t in range(start_day, start_day + horizon + 1):
            pstate = cp.advance(pstate, t, float(mu[1]))
            mult = cp.multiplier(pstate)
            prob = DayProblem(self.block(mult), mu, w, econ, epi, c)
            try:
                xi, (_, _, nxt, (tp, tc), Z) = prob.solve(xi_max, guess)
            except NoRoot as exc:
                out.breach = FeasibilityBreach(t, "no root: residual " + exc.side, None)
                out.end_state, out.end_values, out.end_policy = mu, w, pstate
                return out
            guess = xi
            out.mu.append(mu)
            out.values.append(w)
            out.actions.append((tp, tc))
            out.xi.append(xi)
            out.Z.append(Z)
            out.active.append(pstate.active)
            out.multiplier.append(mult)
            out.n_days += 1
            S_, I_, R_, D_ = mu
            tau = prob.a * tp + prob.b * tc
            mu = (S_ * (1 - tau), S_ * tau + I_ * q, R_ + I_ * pi_R, D_ + I_ * pi_D)
            w = nxt
            out.end_state, out.end_values, out.end_policy = mu, w, pstate
            bad = self.violation(*w)
            if bad:
                out.breach = FeasibilityBreach(t + 1, bad, tuple(float(x) for x in w))
                return out
        return out

    def to_trajectory(self, run: ForwardRun, meta: dict | None = None) -> EquilibriumTrajectory:
        econ, epi = self.params.econ, self.params.epi
        n = run.n_days
        mu = np.array(run.mu, dtype=float).reshape(n, 4)
        values = np.array(run.values, dtype=float).reshape(n, 3)
        theta = np.empty((n, 6))
        for t in range(n):
            blk = self.block(run.multiplier[t])
            theta[t] = (float(run.actions[t][0]), float(run.actions[t][1]),
                        float(blk.phi_I[0]), float(blk.phi_I[1]), float(blk.phi_R[0]), float(blk.phi_R[1]))
        Z = np.array(run.Z, dtype=float)
        agg = mu[:, 0] * theta[:, 0] + mu[:, 1] * theta[:, 2] + mu[:, 2] * theta[:, 4]
        income = (mu[:, 0] * (econ.a0_SR + econ.a1_SR * theta[:, 0])
                  + mu[:, 1] * (econ.a0_I + econ.a1_I * theta[:, 2])
                  + mu[:, 2] * (econ.a0_SR + econ.a1_SR * theta[:, 4]))
        production = Z * income / economy.z_reference(econ)
        beta = epi.beta_P * theta[:, 2] * theta[:, 0] + epi.beta_C * theta[:, 3] * theta[:, 1]
        return EquilibriumTrajectory(
            mu=mu, theta=theta, xi=np.array(run.xi, dtype=float), values=values, Z=Z,
            agg_mobility=agg, production=production, beta=beta,
            policy_active=np.array(run.active, dtype=bool), multiplier=np.array(run.multiplier, dtype=float),
            meta=dict(meta or {}), breach=run.breach,
            terminal_state=tuple(float(x) for x in run.end_state),
            terminal_values=tuple(float(x) for x in run.end_values),
            terminal_policy=run.end_policy,
        )


def run_recursive_equilibrium(mu0: EpidemicState, v0: ValueVector, costs_path: CostsPath,
                              params: ModelParams, horizon: int, dtype=np.longdouble,
                              feasibility_tol: float = 1e-12) -> EquilibriumTrajectory:
    """Forward recursion from (mu0, v0) for days 0..horizon.

    Day t solves the gap equation, fixes the actions, advances values to t+1
    and moves the population. The run stops at the first day whose values
    leave the feasible range or whose gap equation has no root; the
    trajectory then records the days before it and `breach` says why.
    """
    runner = ForwardRunner(params, costs_path, dtype, feasibility_tol)
    run = runner.run(mu0.as_tuple(), v0.as_tuple(), horizon)
    return runner.to_trajectory(run, {"v0": v0.as_tuple()})


# ---------------------------------------------------------------------------
# Bellman verification

@dataclass(frozen=True)
class BellmanReport:
    max_residual: float
    worst_day: int
    worst_class: str
    max_argmax_gap: float  # distance of own action to the grid argmax, per component
    argmax_ok: bool
    days_checked: int

    def __float__(self):
        return self.max_residual


def bellman_residual(traj: Trajectory, params: ModelParams, costs_path: CostsPath,
                     grid_points: int = 201, include_last: bool = False) -> BellmanReport:
    """Largest Bellman-equation violation along a trajectory.

    For each checked day and living class the right-hand side is maximized
    over a grid_points x grid_points action grid plus the recorded action.
    The per-day residual is the larger of |sup - v| and |rhs(own) - v|, so
    both wrong values and a wrongly recorded action show up. Z is recomputed
    from the recorded shares and actions. The argmax check compares the
    recorded action with the grid argmax, one cell being 1/(grid_points-1).
    """
    econ, epi = params.econ, params.epi
    d = 1.0 - econ.rho
    q = 1.0 - epi.pi_R - epi.pi_D
    grid = np.linspace(0.0, 1.0, grid_points)
    cell = 1.0 / (grid_points - 1)
    GP, GC = np.meshgrid(grid, grid, indexing="ij")
    n = len(traj)
    last = n if include_last and getattr(traj, "terminal_values", None) is not None else n - 1
    worst = (0.0, 0, "S")
    gap_max = 0.0
    for t in range(last):
        state = traj.state(t)
        prof = traj.profile(t)
        v = traj.values[t]
        v_next = traj.values[t + 1] if t + 1 < n else np.array(traj.terminal_values)
        m = traj.multiplier[t]
        mult = 1.0 if not np.isfinite(m) else float(m)
        costs = costs_path.costs_for_multiplier(mult)
        Z = economy.compute_Z(economy.aggregate_mobility(state, prof), econ.g, econ.z_form)
        lz = math.log(Z)
        a, b = compute_ab(state, prof.pair(I), epi)
        for j, k in enumerate((S, I, R)):
            a0, a1 = econ.a0(k), econ.a1(k)
            gp, gc = costs.gamma_p(k), costs.gamma_c(k)
            base = lz + np.log((a0 + a1 * GP) * (econ.P0 + econ.P1 * GC)) - gp * GP - gc * GC - econ.M
            if k is S:
                tau = a * GP + b * GC
                rhs = base + d * ((1 - tau) * v_next[0] + tau * v_next[1])
            elif k is I:
                rhs = base + d * (q * v_next[1] + epi.pi_R * v_next[2])
            else:
                rhs = base + d * v_next[2]
            own = bellman_rhs(k, prof.pair(k), ValueVector(*v_next), Z, (a, b), costs, econ, epi)
            sup = max(float(rhs.max()), own)
            res = max(abs(sup - v[j]), abs(own - v[j]))
            if res > worst[0]:
                worst = (res, t, k.value)
            i_p, i_c = np.unravel_index(int(np.argmax(rhs)), rhs.shape)
            gap = max(abs(grid[i_p] - prof.theta_p(k)), abs(grid[i_c] - prof.theta_c(k)))
            gap_max = max(gap_max, gap)
    return BellmanReport(float(worst[0]), int(worst[1]), worst[2], float(gap_max), bool(gap_max <= cell * (1 + 1e-9)), last)
