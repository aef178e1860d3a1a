"""Bridge noise schedules: per-step diffusion weights, accumulated variances,
mean weights, and the two noise-variance laws.

The bridge interpolates a target batch x0 (t=0) toward a source batch y
(t=T).  The marginal at timestep t is Gaussian with mean
``mu_x0[t]*x0 + mu_y[t]*y`` and variance ``sigma2[t]``.  Two variants:

* ``soft``   -- variance grows monotonically to gamma at t=T, so the
  end-point is a noise-added source image (a Gaussian neighborhood of y
  rather than y itself).
* ``pinned`` -- the classic bridge: zero variance at both end-points,
  peak variance at the mid-point.

Per-step weights g_t come from the quadratic bump (T - |2t - T|)^2
evaluated at half-integer midpoints t - 1/2 and normalized to sum to one;
the midpoint grid keeps every g_t strictly positive so all one-step
transitions are well defined, and the normalization pins the accumulated
variance s2 to exactly 1 at t=T (hence sigma2_T = gamma for ``soft``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VARIANTS = ("soft", "pinned")


class ScheduleError(ValueError):
    """Invalid schedule configuration or non-realizable variance curve."""


@dataclass(frozen=True)
class ScheduleConfig:
    """Timestep count, end-point noise scale, and variance-law variant."""

    T: int
    gamma: float = 2.2
    variant: str = "soft"

    def __post_init__(self):
        if int(self.T) != self.T or self.T < 2:
            raise ScheduleError(f"T must be an integer >= 2, got {self.T!r}")
        if not (self.gamma > 0):
            raise ScheduleError(f"gamma must be positive, got {self.gamma!r}")
        if self.variant not in VARIANTS:
            raise ScheduleError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


@dataclass(frozen=True)
class ScheduleTable:
    """Immutable per-timestep tables for t = 0..T.

    g[0] is defined as 0; g[1..T] are the normalized per-step weights.
    s2 is their running sum (s2[0] = 0, s2[T] = 1), sbar2 = 1 - s2,
    mu_x0 = sbar2 and mu_y = s2 (a convex combination), and sigma2 is the
    variant's noise variance.
    """

    T: int
    gamma: float
    variant: str
    g: np.ndarray
    s2: np.ndarray
    sbar2: np.ndarray
    mu_x0: np.ndarray
    mu_y: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        for arr in (self.g, self.s2, self.sbar2, self.mu_x0, self.mu_y, self.sigma2):
            arr.flags.writeable = False


@dataclass(frozen=True)
class StepParams:
    """Coefficients of the one-step Gaussian transition at timestep t:
    x_t = a*x_{t-1} + b*y + sqrt(sigma2_step)*eps."""

    a: float
    b: float
    sigma2_step: float


def diffusion_coefficient(t, T: int):
    """Unnormalized per-step diffusion weight (T - |2t - T|)^2.

    Symmetric about T/2 with its peak value T^2 there; defined on the open
    interval 0 < t < T.  ``t`` may be a scalar or an array.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0) or np.any(t >= T):
        raise ScheduleError(f"t must lie strictly inside (0, {T})")
    val = (T - np.abs(2.0 * t - T)) ** 2
    return float(val) if val.ndim == 0 else val


def build_schedule(config: ScheduleConfig) -> ScheduleTable:
    """Tabulate the schedule for t = 0..T from a validated config."""
    T = int(config.T)
    mid = np.arange(1, T + 1, dtype=np.float64) - 0.5
    raw = diffusion_coefficient(mid, T)
    g = np.zeros(T + 1, dtype=np.float64)
    g[1:] = raw / raw.sum()

    s2 = np.cumsum(g)
    s2[T] = 1.0  # exact by construction; removes cumsum roundoff at the end-point
    sbar2 = 1.0 - s2
    mu_x0 = sbar2.copy()
    mu_y = s2.copy()

    if config.variant == "soft":
        sigma2 = config.gamma * np.sqrt(s2)
    else:
        sigma2 = s2 * (1.0 - s2)

    return ScheduleTable(T=T, gamma=float(config.gamma), variant=config.variant,
                         g=g, s2=s2, sbar2=sbar2, mu_x0=mu_x0, mu_y=mu_y, sigma2=sigma2)


def transition_params(table: ScheduleTable, t: int) -> StepParams:
    """One-step transition coefficients consistent with the tabulated marginals.

    a_t scales x_{t-1}, b_t weights the source, and sigma2_step is the added
    noise variance sigma2_t - a_t^2 * sigma2_{t-1}.  Raises if the variance
    curve is not realizable as a Gaussian Markov chain.
    """
    if not 1 <= t <= table.T:
        raise ScheduleError(f"t must be in 1..{table.T}, got {t}")
    a = table.mu_x0[t] / table.mu_x0[t - 1]
    b = table.mu_y[t] - a * table.mu_y[t - 1]
    s2_step = table.sigma2[t] - a * a * table.sigma2[t - 1]
    if s2_step < -1e-12 * max(1.0, table.sigma2[t]):
        raise ScheduleError(
            f"negative one-step variance {s2_step:g} at t={t}: schedule is not Markov-realizable")
    return StepParams(a=float(a), b=float(b), sigma2_step=float(max(s2_step, 0.0)))


def export_csv(table: ScheduleTable, fp) -> None:
    """Write the table as CSV (header ``t,g,s2,mu_x0,mu_y,sigma2``) with 17
    significant digits, one row per t = 0..T."""
    fp.write("t,g,s2,mu_x0,mu_y,sigma2\n")
    for t in range(table.T + 1):
        row = (table.g[t], table.s2[t], table.mu_x0[t], table.mu_y[t], table.sigma2[t])
        fp.write(f"{t}," + ",".join(f"{v:.17g}" for v in row) + "\n")
