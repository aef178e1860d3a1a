"""Self-contained verification suites behind the ``verify`` subcommand.

Each suite re-derives expected behavior by an independent route (explicit
summation, recursive composition, Gaussian-product algebra plus grid
integration, telescoping identities, analytic fixed points) and checks the
library against it.  CI gates on these without any training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .posterior import bayes_oracle_1d, posterior_coeffs, posterior_sample
from .rng import ZeroStreams
from .sampler import SamplerOptions, reverse_chain, self_consistent_estimate
from .schedule import ScheduleConfig, build_schedule, transition_params

DEFAULT_T_GRID = (4, 32, 256)
VARIANTS = ("soft", "pinned")


@dataclass
class CheckResult:
    suite: str
    variant: str
    T: int
    detail: str
    passed: bool


def _schedule_checks(variant: str, T: int) -> CheckResult:
    table = build_schedule(ScheduleConfig(T=T, gamma=2.2, variant=variant))
    ok = abs(table.g.sum() - 1.0) <= 1e-12
    ok &= table.s2[0] == 0.0 and abs(table.s2[T] - 1.0) <= 1e-12
    ok &= bool(np.all(table.g[1:] > 0))
    ok &= bool(np.all(table.mu_x0 + table.mu_y == 1.0))
    if variant == "soft":
        ok &= bool(np.all(np.diff(table.sigma2) > 0)) and table.sigma2[T] == 2.2
    else:
        ok &= table.sigma2[T] == 0.0
        ok &= bool(np.all(np.abs(table.sigma2 - table.sigma2[::-1]) <= 1e-12))
    return CheckResult("schedule-invariants", variant, T, "sums/convexity/variance law", ok)


def _markov_checks(variant: str, T: int) -> CheckResult:
    table = build_schedule(ScheduleConfig(T=T, gamma=2.2, variant=variant))
    m_x0, m_y, var = 1.0, 0.0, 0.0
    worst = 0.0
    for t in range(1, T + 1):
        p = transition_params(table, t)
        m_x0 = p.a * m_x0
        m_y = p.a * m_y + p.b
        var = p.a * p.a * var + p.sigma2_step
        worst = max(worst, abs(m_x0 - table.mu_x0[t]), abs(m_y - table.mu_y[t]),
                    abs(var - table.sigma2[t]))
    return CheckResult("markov-composition", variant, T, f"max dev {worst:.2e}", worst <= 1e-9)


def _posterior_checks(variant: str, T: int, n_inputs: int, seed: int) -> list[CheckResult]:
    table = build_schedule(ScheduleConfig(T=T, gamma=2.2, variant=variant))
    rng = np.random.default_rng(seed)
    results = []
    for t in range(1, T + 1):
        c = posterior_coeffs(table, t)
        sum_ok = abs(c.c_xt + c.c_y + c.c_x0 - 1.0) <= 1e-12
        worst = 0.0
        for _ in range(n_inputs):
            x_t, y, x0 = rng.uniform(-3, 3, 3)
            mean, var = bayes_oracle_1d(table, t, x_t, y, x0)
            implied = c.c_xt * x_t + c.c_y * y + c.c_x0 * x0
            worst = max(worst, abs(mean - implied), abs(var - c.v))
        results.append(CheckResult("posterior-oracle", variant, T,
                                   f"t={t} max dev {worst:.2e}",
                                   sum_ok and worst <= 1e-9))
    return results


def _telescoping_check(variant: str, T: int) -> CheckResult:
    table = build_schedule(ScheduleConfig(T=T, gamma=2.2, variant=variant))
    rng = np.random.default_rng(17)
    x0 = rng.uniform(-1, 1, (3, 5))
    y = rng.uniform(-1, 1, (3, 5))
    result = reverse_chain(lambda x_t, t, yy, prev: x0, y, table,
                           SamplerOptions(seed=0), streams=ZeroStreams())
    dev = float(np.max(np.abs(result.x0 - x0)))
    return CheckResult("reverse-telescoping", variant, T, f"max dev {dev:.2e}", dev <= 1e-6)


def _posterior_sampling_check(variant: str, T: int) -> CheckResult:
    # zero-noise single steps along the noise-free path stay on it
    table = build_schedule(ScheduleConfig(T=T, gamma=2.2, variant=variant))
    rng = np.random.default_rng(23)
    x0 = rng.uniform(-1, 1, (2, 4))
    y = rng.uniform(-1, 1, (2, 4))
    worst = 0.0
    for t in range(1, T + 1):
        x_t = table.mu_x0[t] * x0 + table.mu_y[t] * y
        got = posterior_sample(x_t, y, x0, t, table, ZeroStreams())
        want = table.mu_x0[t - 1] * x0 + table.mu_y[t - 1] * y
        worst = max(worst, float(np.max(np.abs(got - want))))
    return CheckResult("posterior-mean-path", variant, T, f"max dev {worst:.2e}", worst <= 1e-9)


def _recursion_check() -> CheckResult:
    c = 0.4
    contraction = lambda x_t, t, y, prev: 0.5 * prev + c
    x_t = np.zeros((1, 8))
    opts = SamplerOptions(rel_tol=0.01, r_max=16, seed=0)
    est, used = self_consistent_estimate(contraction, x_t, 1, x_t, opts)
    resid = np.linalg.norm(contraction(x_t, 1, x_t, est) - est) / np.linalg.norm(est)
    ok = resid < opts.rel_tol and abs(est.mean() - 2 * c) < 0.02 and used < opts.r_max
    return CheckResult("self-consistency", "-", 0,
                       f"residual {resid:.2e}, {used} recursions", ok)


SUITES = ("schedule", "posterior", "sampler")


def run_all(*, suites=SUITES, t_grid=DEFAULT_T_GRID, posterior_T: int = 32,
            posterior_inputs: int = 100, seed: int = 1234) -> list[CheckResult]:
    """Run the selected suites; ``suites`` defaults to all of them."""
    unknown = set(suites) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown verify suites: {sorted(unknown)}")
    results: list[CheckResult] = []
    for variant in VARIANTS:
        for T in t_grid:
            if "schedule" in suites:
                results.append(_schedule_checks(variant, T))
                results.append(_markov_checks(variant, T))
            if "sampler" in suites:
                results.append(_telescoping_check(variant, T))
            if "posterior" in suites:
                results.append(_posterior_sampling_check(variant, T))
        if "posterior" in suites:
            results.extend(_posterior_checks(variant, posterior_T, posterior_inputs, seed))
    if "sampler" in suites:
        results.append(_recursion_check())
    return results


def format_table(results: list[CheckResult]) -> str:
    lines = [f"{'suite':<22} {'variant':<8} {'T':>4}  {'status':<6} detail"]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{r.suite:<22} {r.variant:<8} {r.T:>4}  {status:<6} {r.detail}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results)} checks, {n_fail} failed")
    return "\n".join(lines)
