"""Shooting driver: search initial utility offsets whose forward recursion
stays feasible over the horizon and lands on the terminal reference.

Search, in order:

1. coarse grid over the offset triple (delta_R, delta_S, delta_I), each axis
   {0} plus a log grid on [grid_min, grid_max]; runs stop at the first
   infeasible day and the best cell is the longest feasible prefix, ties
   broken by distance to the stationary values at the final state;
2. refinement around that cell. For fixed (v_S(0), v_R(0)) the infected
   value v_I(0) is bracketed and bisected: a trial whose values run too high
   (above the continuation reference at its last day, or without a root of
   the gap equation because the residual stays positive) moves the upper
   end, a trial that runs too low moves the lower end. Once both ends survive
   the horizon the bisection switches to regula falsi on the terminal
   mismatch of v_I. The pair (v_S(0), v_R(0)) is then replaced by the
   discounted valuation of the resulting path, closed at its last day with
   the continuation reference, with step halving whenever the correction
   stops shrinking.

A result is accepted when it covers the full horizon and its terminal
values are within the relative band of the continuation reference at the
terminal state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import economy
from .equilibrium import (
    EquilibriumTrajectory,
    ForwardRun,
    ForwardRunner,
    phi_closed_form,
    stationary_values,
)
from .params_state import DiseaseClass, EpidemicState, ModelParams, ValueVector
from .policy import CostsPath, PolicyState

S, I, R = DiseaseClass.S, DiseaseClass.I, DiseaseClass.R

DTYPES = {"longdouble": np.longdouble, "double": np.float64}


class SearchExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class ShootingConfig:
    delta_R: float | None = None
    delta_S: float | None = None
    delta_I: float | None = None
    horizon: int = 425
    grid_points: int = 12
    grid_min: float = 1e-8
    grid_max: float = 0.5
    band: float = 1e-3
    feasibility_tol: float = 1e-12
    terminal: str = "tail"  # "tail" or "stationary"
    tail_days: int = 2000
    max_outer: int = 40
    outer_tol: float = 1e-7  # relative size of the last valuation correction
    inner_tol: float = 1e-11  # relative terminal mismatch of v_I
    precision: str = "longdouble"
    grid_precision: str = "double"

    def __post_init__(self):
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.terminal not in ("tail", "stationary"):
            raise ValueError("terminal must be 'tail' or 'stationary'")
        if self.precision not in DTYPES or self.grid_precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}")
        for dl in (self.delta_R, self.delta_S, self.delta_I):
            if dl is not None and not 0 <= dl < 1:
                raise ValueError("offsets must lie in [0, 1)")

    @property
    def fixed_deltas(self):
        ds = (self.delta_R, self.delta_S, self.delta_I)
        return ds if all(x is not None for x in ds) else None


def delta_grid(config: ShootingConfig) -> np.ndarray:
    n = config.grid_points
    if n <= 1:
        return np.zeros(1)
    return np.concatenate(([0.0], np.geomspace(config.grid_min, config.grid_max, n - 1)))


def values_from_deltas(U_R_max, delta_R, delta_S, delta_I) -> tuple:
    v_R = U_R_max * (1 - delta_R)
    v_S = v_R * (1 - delta_S)
    return (v_S, v_S * (1 - delta_I), v_R)


def deltas_from_values(U_R_max, v) -> tuple:
    v_S, v_I, v_R = (float(x) for x in v)
    return (1 - v_R / float(U_R_max), 1 - v_S / v_R, 1 - v_I / v_S)


# ---------------------------------------------------------------------------
# continuation reference

class Continuation:
    """Values at a state obtained by continuing with closed-form actions.

    The population is moved forward for `days` with every class playing its
    static optimum under the policy automaton, closed with the stationary
    values at the final shares, and valued backward. With days = 0 this is
    the stationary limit at the given state.
    """

    def __init__(self, params: ModelParams, costs_path: CostsPath, days: int):
        self.params = params
        self.costs_path = costs_path
        self.days = days
        self._consts = {}

    def _const(self, mult):
        k = self._consts.get(mult)
        if k is None:
            costs = self.costs_path.costs_for_multiplier(mult)
            econ, epi = self.params.econ, self.params.epi
            acts = [phi_closed_form(c, costs, econ) for c in (S, I, R)]
            base = []
            for c, act in zip((S, I, R), acts):
                base.append(math.log((econ.a0(c) + econ.a1(c) * act[0]) * (econ.P0 + econ.P1 * act[1]))
                            - costs.gamma_p(c) * act[0] - costs.gamma_c(c) * act[1] - econ.M)
            beta = epi.beta_P * acts[1][0] * acts[0][0] + epi.beta_C * acts[1][1] * acts[0][1]
            k = self._consts[mult] = (acts, base, beta, costs)
        return k

    def __call__(self, state, policy_state: PolicyState, start_day: int = 0) -> tuple:
        econ, epi = self.params.econ, self.params.epi
        cp = self.costs_path
        d = 1.0 - econ.rho
        q = 1.0 - epi.pi_R - epi.pi_D
        pi_R, pi_D = epi.pi_R, epi.pi_D
        shares = state.as_tuple() if isinstance(state, EpidemicState) else state
        Sh, Ih, Rh, Dh = (float(x) for x in shares)
        pstate = policy_state
        rec = []
        for t in range(self.days):
            pstate = cp.advance(pstate, start_day + t, Ih)
            mult = cp.multiplier(pstate)
            rec.append((Sh, Ih, Rh, mult))
            tau = self._const(mult)[2] * Ih
            Sh, Ih, Rh, Dh = Sh * (1 - tau), Sh * tau + Ih * q, Rh + Ih * pi_R, Dh + Ih * pi_D
        total = Sh + Ih + Rh + Dh
        end = EpidemicState(Sh / total, Ih / total, Rh / total, Dh / total)
        fin = stationary_values(end, self.costs_path.baseline, econ, epi)
        vS, vI, vR = fin.v_S, fin.v_I, fin.v_R
        g, zf = econ.g, econ.z_form
        for Sh, Ih, Rh, mult in reversed(rec):
            acts, base, beta, _ = self._const(mult)
            m = Sh * acts[0][0] + Ih * acts[1][0] + Rh * acts[2][0]
            lz = math.log(economy.compute_Z(m, g, zf))
            tau = beta * Ih
            vS, vI, vR = (lz + base[0] + d * ((1 - tau) * vS + tau * vI),
                          lz + base[1] + d * (q * vI + pi_R * vR),
                          lz + base[2] + d * vR)
        return (vS, vI, vR)


def terminal_reference(state, policy_state: PolicyState, costs_path: CostsPath, params: ModelParams,
                       mode: str = "tail", tail_days: int = 2000) -> tuple:
    days = tail_days if mode == "tail" else 0
    return Continuation(params, costs_path, days)(state, policy_state)


# ---------------------------------------------------------------------------
# path valuation

def path_valuation(runner: ForwardRunner, run: ForwardRun, end_values) -> tuple:
    """Discounted values at day 0 of the realized path, closed with end_values."""
    econ, epi = runner.params.econ, runner.params.epi
    d = 1.0 - econ.rho
    q = 1.0 - epi.pi_R - epi.pi_D
    vS, vI, vR = (float(x) for x in end_values)
    for t in range(run.n_days - 1, -1, -1):
        blk = runner.block(run.multiplier[t])
        Sh, Ih, Rh, _ = (float(x) for x in run.mu[t])
        tp, tc = float(run.actions[t][0]), float(run.actions[t][1])
        lz = math.log(float(run.Z[t]))
        uS = (lz + math.log((econ.a0_SR + econ.a1_SR * tp) * (econ.P0 + econ.P1 * tc))
              - float(blk.gp_S) * tp - float(blk.gc_S) * tc - econ.M)
        uI = lz + float(blk.base_I)
        uR = lz + float(blk.base_R)
        tau = Ih * (epi.beta_P * float(blk.phi_I[0]) * tp + epi.beta_C * float(blk.phi_I[1]) * tc)
        vS, vI, vR = (uS + d * ((1 - tau) * vS + tau * vI),
                      uI + d * (q * vI + epi.pi_R * vR),
                      uR + d * vR)
    return (vS, vI, vR)


# ---------------------------------------------------------------------------
# search

@dataclass
class _Trial:
    v_I: object
    run: ForwardRun
    side: str  # "low" or "high"
    mismatch: float  # v_I at the last day minus the reference there
    reference: tuple


class _Search:
    def __init__(self, mu0, config: ShootingConfig, costs_path: CostsPath, params: ModelParams):
        self.mu0 = tuple(mu0.as_tuple())
        self.config = config
        self.costs_path = costs_path
        self.params = params
        self.dtype = DTYPES[config.precision]
        self.runner = ForwardRunner(params, costs_path, self.dtype, config.feasibility_tol)
        self.reference = Continuation(params, costs_path,
                                      config.tail_days if config.terminal == "tail" else 0)
        self.U_R_max = self.runner.U_R_max
        self.n_runs = 0

    # -- helpers
    def ref_at_end(self, run: ForwardRun) -> tuple:
        return self.reference(run.end_state, run.end_policy, run.n_days)

    def complete(self, run: ForwardRun) -> bool:
        return run.breach is None

    def trial(self, v_S, v_I, v_R) -> _Trial:
        self.n_runs += 1
        run = self.runner.run(self.mu0, (v_S, v_I, v_R), self.config.horizon)
        if run.breach is not None and run.breach.reason.startswith("no root"):
            side = "high" if run.breach.reason.endswith("positive") else "low"
            ref = self.ref_at_end(run)
            return _Trial(v_I, run, side, float(run.end_values[1]) - ref[1], ref)
        ref = self.ref_at_end(run)
        mismatch = float(run.end_values[1] - self.dtype(ref[1]))
        return _Trial(v_I, run, "high" if mismatch > 0 else "low", mismatch, ref)

    @staticmethod
    def _score(t: _Trial):
        return (t.run.n_days, -abs(t.mismatch))

    # -- inner: v_I(0) for fixed v_S(0), v_R(0)
    def inner(self, v_S, v_R, hint=None, width=None) -> _Trial:
        c = self.dtype
        v_S, v_R = c(v_S), c(v_R)
        tiny = v_S * c(1e-9)
        lo_b, hi_b = tiny, v_S
        lo = hi = None
        best = None

        def consider(t):
            nonlocal best
            if best is None or self._score(t) > self._score(best):
                best = t
            return t

        if hint is not None and tiny < c(hint) < v_S:
            h = c(width) if width is not None else v_S * c(1e-6)
            for _ in range(40):
                a, b = max(c(hint) - h, lo_b), min(c(hint) + h, hi_b)
                ta = lo if (lo is not None and lo.v_I == a) else consider(self.trial(v_S, a, v_R))
                tb = hi if (hi is not None and hi.v_I == b) else consider(self.trial(v_S, b, v_R))
                ok_a, ok_b = ta.side == "low", tb.side == "high"
                if ok_a:
                    lo = ta
                if ok_b:
                    hi = tb
                if ok_a and ok_b:
                    break
                if a == lo_b and b == hi_b:
                    break
                h *= 8
        if lo is None:
            lo = consider(self.trial(v_S, lo_b, v_R))
        if hi is None:
            hi = consider(self.trial(v_S, hi_b, v_R))
        if lo.side != "low" or hi.side != "high":
            return best

        tol = self.config.inner_tol
        side_kept = None
        for _ in range(400):
            both = self.complete(lo.run) and self.complete(hi.run)
            if both:
                f_lo, f_hi = lo.mismatch, hi.mismatch
                if side_kept == "lo":
                    f_lo *= 0.5
                elif side_kept == "hi":
                    f_hi *= 0.5
                x = (lo.v_I * c(f_hi) - hi.v_I * c(f_lo)) / c(f_hi - f_lo)
                if not lo.v_I < x < hi.v_I:
                    x = (lo.v_I + hi.v_I) / 2
            else:
                x = (lo.v_I + hi.v_I) / 2
            if x == lo.v_I or x == hi.v_I:
                break
            t = consider(self.trial(v_S, x, v_R))
            if self.complete(t.run) and abs(t.mismatch) <= tol * max(abs(t.reference[1]), 1.0):
                break
            if t.side == "low":
                side_kept = "hi" if side_kept != "hi" and both else None
                lo = t
            else:
                side_kept = "lo" if side_kept != "lo" and both else None
                hi = t
        return best

    def in_range(self, x) -> bool:
        return bool(0 < x[0] <= x[1] < float(self.U_R_max) * (1 + self.config.feasibility_tol))

    def band_error(self, t: _Trial) -> float:
        ref = t.reference
        return max(abs(float(t.run.end_values[j]) - ref[j]) / abs(ref[j]) for j in range(3))

    # -- grid phase
    def grid(self) -> tuple:
        cfg = self.config
        dt = DTYPES[cfg.grid_precision]
        runner = ForwardRunner(self.params, self.costs_path, dt, cfg.feasibility_tol)
        econ, epi = self.params.econ, self.params.epi
        costs = self.costs_path.baseline
        best = None
        deltas = delta_grid(cfg)
        for dR in deltas:
            for dS in deltas:
                for dI in deltas:
                    v0 = values_from_deltas(float(self.U_R_max), dR, dS, dI)
                    run = runner.run(self.mu0, v0, cfg.horizon)
                    self.n_runs += 1
                    if run.n_days:
                        end = np.array(run.end_state, dtype=float)
                        end = end / end.sum()
                        ref = stationary_values(EpidemicState(*end), costs, econ, epi).as_tuple()
                        dist = max(abs(float(run.end_values[j]) - ref[j]) / abs(ref[j]) for j in range(3))
                    else:
                        dist = math.inf
                    key = (run.n_days, -dist)
                    if best is None or key > best[0]:
                        best = (key, (dR, dS, dI), v0)
        return best

    # -- outer
    def solve(self):
        cfg = self.config
        c = self.dtype
        info = {"n_grid_runs": 0}
        grid_best = self.grid() if cfg.grid_points > 0 else None
        info["n_grid_runs"] = self.n_runs
        if grid_best is not None:
            info["grid_best"] = {"deltas": list(grid_best[1]), "feasible_days": grid_best[0][0]}
            x = np.array([grid_best[2][0], grid_best[2][2]], dtype=float)
            hint = grid_best[2][1]
        else:
            v = stationary_values(EpidemicState(*self.mu0), self.costs_path.baseline,
                                  self.params.econ, self.params.epi)
            x = np.array([v.v_S, v.v_R])
            hint = v.v_I
        width = None
        lam, prev_norm, strikes = 1.0, math.inf, 0
        best = None
        history = []
        for it in range(cfg.max_outer):
            t = self.inner(c(x[0]), c(x[1]), hint, width)
            full = self.complete(t.run) and t.run.n_days == cfg.horizon + 1
            val = path_valuation(self.runner, t.run, t.reference)
            corr = np.array([val[0] - x[0], val[2] - x[1]])
            norm = float(np.max(np.abs(corr)))
            band = self.band_error(t) if full else math.inf
            history.append({"iteration": it, "start": x.tolist(), "feasible_days": t.run.n_days,
                            "correction": corr.tolist(), "band_error": band})
            key = (full, band <= cfg.band, -norm)
            if best is None or key > best[0]:
                best = (key, t, x.copy(), norm, band, it)
            if full and norm <= cfg.outer_tol * abs(x[0]):
                break
            # full steps while the correction keeps shrinking; halve after two
            # stalls in a row and grow back after strong progress
            if norm > 0.9 * prev_norm:
                strikes += 1
                if strikes >= 2:
                    lam, strikes = max(lam * 0.5, 1.0 / 64), 0
            else:
                strikes = 0
                if norm < 0.5 * prev_norm:
                    lam = min(lam * 2.0, 1.0)
            prev_norm = norm
            step = lam
            for _ in range(12):
                nxt = x + step * corr
                if self.in_range(nxt):
                    break
                step *= 0.5
            else:
                history.append({"iteration": it + 1, "start": (x + step * corr).tolist(),
                                "status": "outside feasible range"})
                break
            hint = float(t.v_I) + step * (val[1] - float(t.v_I))
            width = max(4 * step * norm, abs(float(t.v_I)) * 1e-9)
            x = nxt
        info["history"] = history
        return best, info


def _finish(search: _Search, trial: _Trial, extra: dict) -> EquilibriumTrajectory:
    cfg = search.config
    v0 = (trial.run.values[0] if trial.run.n_days else
          (search.dtype(0),) * 3)
    meta = {
        "v0": [float(x) for x in v0],
        "v0_repr": [repr(x) for x in v0],
        "deltas": list(deltas_from_values(search.U_R_max, v0)),
        "terminal_reference": list(trial.reference),
        "band_error": search.band_error(trial) if trial.run.breach is None else None,
        "terminal_mode": cfg.terminal,
        "precision": cfg.precision,
        "n_forward_runs": search.n_runs,
    }
    meta.update(extra)
    return search.runner.to_trajectory(trial.run, meta)


def shoot(mu0: EpidemicState, config: ShootingConfig, costs_path: CostsPath,
          params: ModelParams) -> EquilibriumTrajectory:
    """Search initial values and return an accepted equilibrium trajectory over days 0..horizon."""
    search = _Search(mu0, config, costs_path, params)
    c = search.dtype
    if mu0.share_I == 0 or config.fixed_deltas is not None:
        if config.fixed_deltas is not None:
            v0 = values_from_deltas(search.U_R_max, *(c(x) for x in config.fixed_deltas))
        else:
            v = stationary_values(mu0, costs_path.baseline, params.econ, params.epi)
            v0 = (c(v.v_S), c(v.v_I), c(v.v_R))
        t = search.trial(*v0)
        full = t.run.breach is None
        if not full or search.band_error(t) > config.band:
            why = t.run.breach.reason if t.run.breach else f"band error {search.band_error(t):.3g}"
            raise SearchExhausted(f"offset triple rejected: {why}")
        return _finish(search, t, {"search": "fixed" if config.fixed_deltas else "disease-free"})

    best, info = search.solve()
    if best is None:
        raise SearchExhausted("no trial could be evaluated")
    (full, in_band, _), t, x, norm, band, it = best
    if not (full and in_band):
        last = info["history"][-1] if info["history"] else {}
        raise SearchExhausted(
            f"no feasible trajectory within the terminal band (best: "
            f"{t.run.n_days} of {config.horizon + 1} days, band error {band:.3g}; "
            f"last iterate: {last.get('status', 'evaluated')})")
    extra = {"search": "grid+refine", "outer_iterations": len(info["history"]),
             "accepted_iteration": it, "valuation_correction": norm}
    extra.update({k: v for k, v in info.items() if k != "history"})
    extra["history"] = info["history"]
    return _finish(search, t, extra)
