"""Scenario summary statistics and the loss/death trade-off frontier."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .trajectory import Trajectory

HOSPITALIZATION_SHARE = 0.068
LOSS_MODES = ("mean", "sum", "discounted")


@dataclass(frozen=True)
class ScenarioMetrics:
    peak_prevalence_share: float
    peak_prevalence: float
    peak_day: int
    cumulative_deaths: float
    min_production: float
    min_mobility: float
    economic_loss: float
    mobility_loss: float
    terminal_S: float
    terminal_I: float
    terminal_R: float
    terminal_D: float
    bed_demand: float

    def to_dict(self) -> dict:
        return asdict(self)


def _aggregate_loss(x: np.ndarray, mode: str, rho: float) -> float:
    dev = x - 1.0
    if mode == "mean":
        return float(dev.mean())
    if mode == "sum":
        return float(dev.sum())
    if mode == "discounted":
        return float(np.sum(dev * (1.0 - rho) ** np.arange(len(dev))))
    raise ValueError(f"loss mode must be one of {LOSS_MODES}")


def compute_metrics(traj: Trajectory, population: float, horizon: int = 425,
                    loss_mode: str = "mean", rho: float = 0.0) -> ScenarioMetrics:
    """Summary over days 0..horizon.

    Losses are deviations from the disease-free benchmark of 1, averaged over
    the horizon by default ("sum" and "discounted" are available for
    sensitivity checks; "discounted" uses the factor (1 - rho)^t).
    """
    if len(traj) < horizon + 1:
        raise ValueError(f"trajectory has {len(traj)} days, need {horizon + 1}")
    mu = traj.mu[: horizon + 1]
    prod = traj.production[: horizon + 1]
    mob = traj.agg_mobility[: horizon + 1]
    peak_day = int(np.argmax(mu[:, 1]))
    peak_share = float(mu[peak_day, 1])
    peak = peak_share * population
    return ScenarioMetrics(
        peak_prevalence_share=peak_share,
        peak_prevalence=peak,
        peak_day=peak_day,
        cumulative_deaths=float(mu[horizon, 3]) * population,
        min_production=float(np.min(prod)),
        min_mobility=float(np.min(mob)),
        economic_loss=_aggregate_loss(prod, loss_mode, rho),
        mobility_loss=_aggregate_loss(mob, loss_mode, rho),
        terminal_S=float(mu[horizon, 0]),
        terminal_I=float(mu[horizon, 1]),
        terminal_R=float(mu[horizon, 2]),
        terminal_D=float(mu[horizon, 3]),
        bed_demand=HOSPITALIZATION_SHARE * peak,
    )


@dataclass(frozen=True)
class FrontierPoint:
    name: str
    economic_loss: float
    death_rate: float
    dominated: bool
    dominated_by: tuple = ()


def frontier_points(metrics, names=None) -> list:
    """(economic loss, death rate) per scenario with Pareto-dominance flags.

    `metrics` is a list of ScenarioMetrics or a {name: ScenarioMetrics} mapping.
    A higher economic loss (closer to zero) and a lower death rate are better;
    a point is dominated iff another is weakly better in both and strictly
    better in one. Points are returned sorted by economic loss.
    """
    if isinstance(metrics, dict):
        names, items = list(metrics), list(metrics.values())
    else:
        items = list(metrics)
        names = list(names) if names is not None else [str(i) for i in range(len(items))]
    if not items:
        raise ValueError("need at least one scenario")
    pts = []
    for n, m in zip(names, items):
        total = m.terminal_S + m.terminal_I + m.terminal_R + m.terminal_D
        pts.append((n, m.economic_loss, m.terminal_D / total))
    out = []
    for i, (n, loss, dr) in enumerate(pts):
        by = tuple(o for j, (o, l2, d2) in enumerate(pts)
                   if j != i and l2 >= loss and d2 <= dr and (l2 > loss or d2 < dr))
        out.append(FrontierPoint(n, loss, dr, bool(by), by))
    order = sorted(range(len(out)), key=lambda i: (out[i].economic_loss, i))
    return [out[i] for i in order]
