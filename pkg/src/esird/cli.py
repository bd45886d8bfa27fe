"""Command-line entry point.

    esird dumb CONFIG -o OUT        constant-mobility SIRD run
    esird esird CONFIG -o OUT       equilibrium run (shooting search)
    esird scenario CONFIG -o OUT    named policy scenarios (policy[i].* keys)
    esird sweep CONFIG -o OUT       scenarios plus a multiplier x exit grid
    esird verify TRAJECTORY.csv     Bellman residual of a written trajectory

CONFIG is a path or the name of a shipped config. Keys missing from the file
fall back to the shipped italy_baseline values. Exit codes: 0 success,
2 validation, 3 solver failure, 4 I/O. Failures also print one JSON line
on stderr.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import click
import numpy as np

from .epidemic import run_dumb_sird
from .equilibrium import NoRoot, bellman_residual
from .metrics import compute_metrics, frontier_points
from .params_state import (
    MobilityProfile,
    ModelParams,
    default_params,
    load_config,
    params_from_mapping,
    validate_params,
)
from .policy import CostsPath, PolicySpec
from .shooting import SearchExhausted, ShootingConfig, shoot
from .trajectory import CSV_COLUMNS, Trajectory

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
WORKERS_ENV = "ESIRD_WORKERS"


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    policy: PolicySpec | None


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    shooting: ShootingConfig
    horizon: int
    scenarios: tuple
    workers: int = 1
    loss_mode: str = "mean"
    name: str = "esird"
    dumb_profile: MobilityProfile = MobilityProfile.from_pairs((1.0, 1.0), (0.7, 0.7), (1.0, 1.0))
    sweep_multipliers: tuple = ()
    sweep_exits: tuple = ()
    sweep_trigger: float = 0.03


_POLICY_KEY = re.compile(r"^policy\[(\d+)\]\.(\w+)$")


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _policy(mult: float, trigger: float, exit_: float, strict: bool = True) -> PolicySpec | None:
    if mult == 1.0:
        return None
    return PolicySpec(trigger_threshold=trigger, exit_threshold=exit_, cost_multiplier=mult, strict=strict)


def _scenarios(cfg: dict) -> tuple:
    groups = {}
    for key, value in cfg.items():
        m = _POLICY_KEY.match(key)
        if m:
            groups.setdefault(int(m.group(1)), {})[m.group(2)] = value
    out = []
    for i in sorted(groups):
        g = groups[i]
        unknown = set(g) - {"name", "multiplier", "trigger", "exit", "strict"}
        if unknown:
            raise ValueError(f"policy[{i}]: unknown keys {sorted(unknown)}")
        mult = float(g.get("multiplier", 1.0))
        spec = _policy(mult, float(g.get("trigger", 0.03)), float(g.get("exit", 0.005)),
                       _bool(g.get("strict", "true")))
        out.append(ScenarioSpec(g.get("name", f"policy{i}"), spec))
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ValueError("scenario names must be unique")
    return tuple(out)


def _shooting(cfg: dict, horizon: int) -> ShootingConfig:
    kwargs = {"horizon": horizon}
    for f in fields(ShootingConfig):
        key = f"shoot.{f.name}"
        if key not in cfg:
            continue
        raw = cfg[key]
        if f.type == "int":
            kwargs[f.name] = int(raw)
        elif f.type == "str":
            kwargs[f.name] = raw
        elif raw.lower() in ("", "none"):
            kwargs[f.name] = None
        else:
            kwargs[f.name] = float(raw)
    return ShootingConfig(**kwargs)


def build_run_config(cfg: dict) -> RunConfig:
    params = params_from_mapping(cfg, base=default_params())
    problems = validate_params(params)
    if problems:
        raise ValueError("invalid parameters: " + ", ".join(problems))
    horizon = int(cfg.get("run.horizon", 425))
    if horizon < 1:
        raise ValueError("run.horizon must be >= 1")
    th = tuple(float(cfg.get(f"dumb.theta_{k}", d)) for k, d in (("S", 1.0), ("I", 0.7), ("R", 1.0)))
    return RunConfig(
        params=params,
        shooting=_shooting(cfg, horizon),
        horizon=horizon,
        scenarios=_scenarios(cfg),
        workers=int(cfg.get("run.workers", 1)),
        loss_mode=cfg.get("run.loss_mode", "mean"),
        name=cfg.get("run.name", "esird"),
        dumb_profile=MobilityProfile.from_pairs((th[0], th[0]), (th[1], th[1]), (th[2], th[2])),
        sweep_multipliers=_floats(cfg.get("sweep.multipliers", "")),
        sweep_exits=_floats(cfg.get("sweep.exits", "")),
        sweep_trigger=float(cfg.get("sweep.trigger", 0.03)),
    )


def read_run_config(config: str) -> RunConfig:
    try:
        cfg = load_config(config)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise CliError(EXIT_IO, "IOError", str(exc)) from exc
    try:
        return build_run_config(cfg)
    except (ValueError, TypeError) as exc:
        raise CliError(EXIT_VALIDATION, "ValidationError", str(exc)) from exc


# ---------------------------------------------------------------------------
# output

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for row in traj.rows():
        buf.write(",".join(_fmt(x) for x in row) + "\n")
    return buf.getvalue()


def read_trajectory_csv(path: Path) -> Trajectory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise ValueError("unexpected trajectory columns")
        return Trajectory.from_rows([[float(x) for x in r] for r in reader])


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def metrics_csv(rows: dict) -> str:
    names = list(rows)
    if not names:
        return ""
    cols = list(next(iter(rows.values())))
    lines = [",".join(["scenario"] + cols)]
    for n in names:
        lines.append(",".join([n] + [_fmt(rows[n][c]) for c in cols]))
    return "\n".join(lines) + "\n"


def frontier_csv(metrics: dict) -> str:
    lines = ["scenario,economic_loss,death_rate,dominated,dominated_by"]
    if metrics:
        for p in frontier_points(metrics):
            lines.append(f"{p.name},{_fmt(p.economic_loss)},{_fmt(p.death_rate)},{int(p.dominated)},"
                         + ";".join(p.dominated_by))
    return "\n".join(lines) + "\n"


def _error_line(kind: str, message: str, **extra):
    click.echo(json.dumps({"error": kind, "message": message, **extra}), err=True)


# ---------------------------------------------------------------------------
# runs

def _solve(rc: RunConfig, policy: PolicySpec | None):
    costs_path = CostsPath(rc.params.costs, policy)
    return shoot(rc.params.initial_state, rc.shooting, costs_path, rc.params)


def _metrics(rc: RunConfig, traj) -> dict:
    return compute_metrics(traj, rc.params.population, rc.horizon, rc.loss_mode, rc.params.econ.rho).to_dict()


def run_scenario(rc: RunConfig, spec: ScenarioSpec) -> dict:
    """Worker: one scenario, returned as plain data so results can cross processes."""
    try:
        traj = _solve(rc, spec.policy)
    except (SearchExhausted, NoRoot) as exc:
        return {"name": spec.name, "error": type(exc).__name__, "message": str(exc)}
    m = _metrics(rc, traj)
    m["deltas"] = traj.meta["deltas"]
    m["policy_days_active"] = int(traj.policy_active.sum())
    return {"name": spec.name, "metrics": m, "csv": trajectory_csv(traj)}


def resolve_workers(requested: int | None, rc: RunConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, requested if requested is not None else rc.workers)


def run_scenarios(rc: RunConfig, specs, workers: int) -> list:
    if workers <= 1 or len(specs) <= 1:
        return [run_scenario(rc, s) for s in specs]
    with ProcessPoolExecutor(max_workers=min(workers, len(specs))) as pool:
        return list(pool.map(run_scenario, [rc] * len(specs), specs))


def write_scenario_outputs(out: Path, results: list) -> list:
    metrics, failures = {}, []
    for r in results:
        if "error" in r:
            failures.append(r)
            continue
        metrics[r["name"]] = r["metrics"]
        _write(out / "trajectories" / f"{r['name']}.csv", r["csv"])
    _write(out / "metrics.json", _json(metrics))
    _write(out / "metrics.csv", metrics_csv(metrics))
    _write(out / "frontier.csv", frontier_csv(_as_metrics(metrics)))
    if failures:
        _write(out / "failures.json", _json({f["name"]: {"error": f["error"], "message": f["message"]}
                                             for f in failures}))
    return failures


def _as_metrics(rows: dict) -> dict:
    from .metrics import ScenarioMetrics
    names = {f.name for f in fields(ScenarioMetrics)}
    return {n: ScenarioMetrics(**{k: v for k, v in m.items() if k in names}) for n, m in rows.items()}


def sweep_specs(rc: RunConfig) -> tuple:
    specs = list(rc.scenarios)
    seen = {s.name for s in specs}
    for mult in rc.sweep_multipliers:
        for ex in rc.sweep_exits or (0.005,):
            name = f"m{mult:g}_exit{ex:g}"
            if name not in seen:
                specs.append(ScenarioSpec(name, _policy(mult, rc.sweep_trigger, ex)))
                seen.add(name)
    return tuple(specs)


# ---------------------------------------------------------------------------
# commands

def _guard(fn):
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs) or EXIT_OK
        except CliError as exc:
            _error_line(exc.kind, str(exc), **exc.extra)
            code = exc.code
        except (SearchExhausted, NoRoot) as exc:
            _error_line(type(exc).__name__, str(exc))
            code = EXIT_SOLVER
        except OSError as exc:
            _error_line("IOError", str(exc))
            code = EXIT_IO
        sys.exit(code)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


_out_option = click.option("-o", "--out", "out", type=click.Path(file_okay=False, path_type=Path),
                           default=Path("."), show_default=True, help="Output directory.")
_jobs_option = click.option("-j", "--jobs", type=int, default=None,
                            help=f"Worker processes (overridden by ${WORKERS_ENV}).")


@click.group()
def main():
    """Epidemic with endogenous mobility: SIRD and equilibrium runs."""


@main.command()
@click.argument("config", default="italy_baseline")
@_out_option
@_guard
def dumb(config, out):
    """Constant-mobility SIRD run."""
    rc = read_run_config(config)
    p = rc.params
    traj = run_dumb_sird(p.initial_state, rc.dumb_profile, p.epi, rc.horizon, p.econ)
    _write(out / "trajectory.csv", trajectory_csv(traj))
    _write(out / "metrics.json", _json({"dumb": _metrics(rc, traj)}))


@main.command()
@click.argument("config", default="italy_baseline")
@_out_option
@_guard
def esird(config, out):
    """Equilibrium run with the shooting search (no policy)."""
    rc = read_run_config(config)
    traj = _solve(rc, None)
    _write(out / "trajectory.csv", trajectory_csv(traj))
    m = _metrics(rc, traj)
    m["deltas"] = traj.meta["deltas"]
    _write(out / "metrics.json", _json({rc.name: m}))


def _run_many(rc: RunConfig, specs, out: Path, jobs):
    results = run_scenarios(rc, specs, resolve_workers(jobs, rc))
    failures = write_scenario_outputs(out, results)
    for f in failures:
        _error_line(f["error"], f["message"], scenario=f["name"])
    return EXIT_SOLVER if failures else EXIT_OK


@main.command()
@click.argument("config", default="table3")
@_out_option
@_jobs_option
@_guard
def scenario(config, out, jobs):
    """Named policy scenarios from policy[i].* keys."""
    rc = read_run_config(config)
    return _run_many(rc, rc.scenarios, out, jobs)


@main.command()
@click.argument("config", default="table3")
@_out_option
@_jobs_option
@_guard
def sweep(config, out, jobs):
    """Scenarios plus the sweep.multipliers x sweep.exits grid, with the frontier file."""
    rc = read_run_config(config)
    return _run_many(rc, sweep_specs(rc), out, jobs)


@main.command()
@click.argument("trajectory", type=click.Path(dir_okay=False, path_type=Path))
@click.option("--config", "config", default="italy_baseline", help="Config used for the run.")
@click.option("--multiplier", type=float, default=1.0, show_default=True,
              help="Cost multiplier on days flagged policy_active.")
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--grid-points", type=int, default=201, show_default=True)
@_guard
def verify(trajectory, config, multiplier, tol, grid_points):
    """Bellman residual of a trajectory CSV; exit 3 when above tol."""
    rc = read_run_config(config)
    try:
        traj = read_trajectory_csv(trajectory)
    except (ValueError, StopIteration) as exc:
        raise CliError(EXIT_VALIDATION, "ValidationError", f"bad trajectory file: {exc}") from exc
    traj.multiplier = np.where(traj.policy_active, multiplier, 1.0)
    spec = _policy(multiplier, 0.03, 0.005)
    rep = bellman_residual(traj, rc.params, CostsPath(rc.params.costs, spec), grid_points)
    ok = rep.max_residual <= tol and rep.argmax_ok
    click.echo(json.dumps({
        "max_residual": rep.max_residual, "worst_day": rep.worst_day, "worst_class": rep.worst_class,
        "max_argmax_gap": rep.max_argmax_gap, "argmax_ok": rep.argmax_ok,
        "days_checked": rep.days_checked, "tol": tol, "ok": ok,
    }))
    return EXIT_OK if ok else EXIT_SOLVER


if __name__ == "__main__":
    main()
