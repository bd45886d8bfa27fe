"""Time-indexed record shared by the dumb SIRD runner and the equilibrium solver."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params_state import EpidemicState, MobilityProfile, ValueVector

CSV_COLUMNS = (
    "day", "mu_S", "mu_I", "mu_R", "mu_D",
    "theta_p_S", "theta_c_S", "theta_p_I", "theta_c_I", "theta_p_R", "theta_c_R",
    "xi", "v_S", "v_I", "v_R", "Z", "agg_mobility", "production", "beta_t", "policy_active",
)


@dataclass
class Trajectory:
    """Per-day arrays for days 0..n-1.

    mu is (n, 4) over S, I, R, D; theta is (n, 6) in the order
    (p_S, c_S, p_I, c_I, p_R, c_R); values is (n, 3) over S, I, R.
    Fields that a run does not produce (values and xi for the dumb model) are NaN.
    """

    mu: np.ndarray
    theta: np.ndarray
    xi: np.ndarray
    values: np.ndarray
    Z: np.ndarray
    agg_mobility: np.ndarray
    production: np.ndarray
    beta: np.ndarray
    policy_active: np.ndarray
    multiplier: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def days(self) -> np.ndarray:
        return np.arange(len(self.mu))

    def state(self, t: int) -> EpidemicState:
        return EpidemicState(*(float(x) for x in self.mu[t]))

    def profile(self, t: int) -> MobilityProfile:
        return MobilityProfile(*(float(x) for x in self.theta[t]))

    def value_vector(self, t: int) -> ValueVector:
        return ValueVector(*(float(x) for x in self.values[t]))

    def truncated(self, n: int) -> "Trajectory":
        arrays = {k: getattr(self, k)[:n] for k in _ARRAY_FIELDS}
        return Trajectory(**arrays, meta=dict(self.meta))

    def rows(self):
        for t in range(len(self)):
            yield (
                t, *self.mu[t], *self.theta[t], self.xi[t], *self.values[t],
                self.Z[t], self.agg_mobility[t], self.production[t], self.beta[t],
                int(self.policy_active[t]),
            )

    @classmethod
    def from_rows(cls, rows) -> "Trajectory":
        a = np.array(rows, dtype=float).reshape(-1, len(CSV_COLUMNS))
        return cls(
            mu=a[:, 1:5], theta=a[:, 5:11], xi=a[:, 11], values=a[:, 12:15], Z=a[:, 15],
            agg_mobility=a[:, 16], production=a[:, 17], beta=a[:, 18],
            policy_active=a[:, 19].astype(bool), multiplier=np.full(len(a), np.nan),
        )


_ARRAY_FIELDS = (
    "mu", "theta", "xi", "values", "Z", "agg_mobility", "production", "beta",
    "policy_active", "multiplier",
)
