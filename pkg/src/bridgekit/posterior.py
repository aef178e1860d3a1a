"""Reverse-step Gaussian posterior q(x_{t-1} | x_t, y, x0_hat) in closed form.

The posterior is the product of two Gaussians in x_{t-1}: the one-step
transition likelihood of x_t and the (t-1)-marginal around the target
estimate.  Completing the square gives a Gaussian with mean

    m = c_xt * x_t + c_y * y + c_x0 * x0_hat

whose coefficients sum to one, and variance v = sigma2_step * sigma2[t-1]
/ sigma2[t].  The ``pinned`` variant's final step (sigma2_T = 0) is handled
by its analytic limit: conditioning on x_T = y adds nothing, so the
posterior is the (t-1)-marginal itself.

:func:`bayes_oracle_1d` recomputes the same posterior two independent ways
(generic Gaussian-product algebra in information form, and brute-force grid
integration) and is the arbiter for the closed-form coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import RngStreams
from .schedule import ScheduleTable, transition_params


class OracleMismatchError(RuntimeError):
    """Grid integration disagreed with the Gaussian-product closed form."""


@dataclass(frozen=True)
class PosteriorCoeffs:
    """Mean coefficients (of x_t, y, x0_hat) and variance of the reverse step."""

    c_xt: float
    c_y: float
    c_x0: float
    v: float


def posterior_coeffs(table: ScheduleTable, t: int) -> PosteriorCoeffs:
    """Closed-form posterior coefficients at timestep t (1..T)."""
    if not 1 <= t <= table.T:
        raise ValueError(f"t must be in 1..{table.T}, got {t}")
    s2_t = table.sigma2[t]
    s2_prev = table.sigma2[t - 1]
    if s2_t == 0.0:
        # degenerate final step of the pinned variant: x_t carries no
        # information beyond y, so the posterior is the (t-1)-marginal
        return PosteriorCoeffs(c_xt=0.0, c_y=float(table.mu_y[t - 1]),
                               c_x0=float(table.mu_x0[t - 1]), v=float(s2_prev))
    p = transition_params(table, t)
    ratio = s2_prev / s2_t
    c_xt = ratio * p.a
    c_y = table.mu_y[t - 1] - table.mu_y[t] * ratio * p.a
    c_x0 = table.mu_x0[t - 1] * p.sigma2_step / s2_t
    v = p.sigma2_step * s2_prev / s2_t
    return PosteriorCoeffs(c_xt=float(c_xt), c_y=float(c_y), c_x0=float(c_x0), v=float(v))


def posterior_coeff_arrays(table: ScheduleTable, t_arr) -> tuple[np.ndarray, ...]:
    """Vectorized :func:`posterior_coeffs` over a per-element timestep array.

    Returns (c_xt, c_y, c_x0, v) arrays aligned with ``t_arr``.
    """
    t_arr = np.asarray(t_arr, dtype=np.int64)
    if t_arr.min() < 1 or t_arr.max() > table.T:
        raise ValueError(f"timesteps must be in 1..{table.T}")
    s2_t = table.sigma2[t_arr]
    s2_prev = table.sigma2[t_arr - 1]
    a = table.mu_x0[t_arr] / table.mu_x0[t_arr - 1]
    s2_step = np.maximum(s2_t - a * a * s2_prev, 0.0)

    degenerate = s2_t == 0.0
    denom = np.where(degenerate, 1.0, s2_t)
    ratio = s2_prev / denom
    c_xt = np.where(degenerate, 0.0, ratio * a)
    c_y = np.where(degenerate, table.mu_y[t_arr - 1],
                   table.mu_y[t_arr - 1] - table.mu_y[t_arr] * ratio * a)
    c_x0 = np.where(degenerate, table.mu_x0[t_arr - 1],
                    table.mu_x0[t_arr - 1] * s2_step / denom)
    v = np.where(degenerate, s2_prev, s2_step * s2_prev / denom)
    return c_xt, c_y, c_x0, v


def posterior_sample(x_t, y, x0_hat, t, table: ScheduleTable, streams: RngStreams, *,
                     purpose: str = "reverse.posterior", step: int = 0,
                     indices=None) -> np.ndarray:
    """Draw x_{t-1} from the reparametrized posterior m + sqrt(v)*eps.

    ``t`` is an integer in 1..T or a per-element integer array.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if not (x_t.shape == y.shape == x0_hat.shape):
        raise ValueError(f"shape mismatch: {x_t.shape}, {y.shape}, {x0_hat.shape}")
    B = x_t.shape[0]
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.int64), (B,))
    c_xt, c_y, c_x0, v = posterior_coeff_arrays(table, t_arr)

    def col(vals):
        return vals.reshape(vals.shape + (1,) * (x_t.ndim - 1))

    out = col(c_xt) * x_t + col(c_y) * y + col(c_x0) * x0_hat
    if np.any(v > 0):
        if indices is None:
            indices = np.arange(B)
        fields = [(step, int(i), int(tt)) for i, tt in zip(indices, t_arr)]
        out += col(np.sqrt(v)) * streams.batch_normal(x_t.shape, purpose, fields)
    return out


def bayes_oracle_1d(table: ScheduleTable, t: int, x_t: float, y: float,
                    x0: float) -> tuple[float, float]:
    """Scalar posterior (mean, var) computed two independent ways.

    (i) generic product of the two Gaussian factors in information form;
    (ii) grid integration over x_{t-1} with 2**14 points on +/- 12 sd around
    the factor means.  Raises :class:`OracleMismatchError` if they disagree
    beyond 1e-6.  Returns (i).
    """
    if not 1 <= t <= table.T:
        raise ValueError(f"t must be in 1..{table.T}, got {t}")
    x_t, y, x0 = float(x_t), float(y), float(x0)
    s2_t = table.sigma2[t]
    s2_prev = table.sigma2[t - 1]
    m2 = table.mu_x0[t - 1] * x0 + table.mu_y[t - 1] * y

    if s2_t == 0.0:
        # x_t = y exactly; the posterior is the (t-1)-marginal (grid skipped)
        return m2, float(s2_prev)
    if s2_prev == 0.0:
        # t = 1: the (t-1)-marginal is a point mass at m2 (grid skipped)
        return m2, 0.0

    p = transition_params(table, t)
    lam1 = p.a * p.a / p.sigma2_step
    eta1 = p.a * (x_t - p.b * y) / p.sigma2_step
    lam2 = 1.0 / s2_prev
    lam = lam1 + lam2
    mean = (eta1 + lam2 * m2) / lam
    var = 1.0 / lam

    centers = [m2]
    sds = [np.sqrt(s2_prev)]
    if p.a != 0.0:
        centers.append((x_t - p.b * y) / p.a)
        sds.append(np.sqrt(p.sigma2_step) / abs(p.a))
    span = 12.0 * max(sds)
    u = np.linspace(min(centers) - span, max(centers) + span, 2 ** 14)
    logf = (-0.5 * (x_t - p.a * u - p.b * y) ** 2 / p.sigma2_step
            - 0.5 * (u - m2) ** 2 / s2_prev)
    w = np.exp(logf - logf.max())
    z = np.trapezoid(w, u)
    grid_mean = np.trapezoid(w * u, u) / z
    grid_var = np.trapezoid(w * (u - grid_mean) ** 2, u) / z

    if abs(grid_mean - mean) > 1e-6 or abs(grid_var - var) > 1e-6:
        raise OracleMismatchError(
            f"t={t}: closed form ({mean:.12g}, {var:.12g}) vs "
            f"grid ({grid_mean:.12g}, {grid_var:.12g})")
    return float(mean), float(var)
