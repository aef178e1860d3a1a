"""Verify the reverse-step posterior against its independent oracles.

The closed-form coefficients are checked three ways: generic Gaussian
product algebra, brute-force grid integration, and the telescoping identity
(a perfect target estimate walks the noise-free path back to the target
exactly).  This is the same battery the `bridgekit verify` command runs.
"""

import numpy as np

from bridgekit import verify
from bridgekit.posterior import bayes_oracle_1d, posterior_coeffs
from bridgekit.schedule import ScheduleConfig, build_schedule

table = build_schedule(ScheduleConfig(T=8, gamma=2.0, variant="soft"))

print("=== posterior coefficients sum to one ===")
print(f"{'t':>3} {'c_xt':>9} {'c_y':>9} {'c_x0':>9} {'v':>9}")
for t in range(1, 9):
    c = posterior_coeffs(table, t)
    print(f"{t:>3} {c.c_xt:>9.4f} {c.c_y:>9.4f} {c.c_x0:>9.4f} {c.v:>9.4f}"
          f"   (sum {c.c_xt + c.c_y + c.c_x0:.12f})")

print("\n=== scalar oracle: closed form vs grid integration ===")
rng = np.random.default_rng(3)
for t in (1, 4, 8):
    x_t, y, x0 = rng.uniform(-2, 2, 3)
    mean, var = bayes_oracle_1d(table, t, x_t, y, x0)
    c = posterior_coeffs(table, t)
    implied = c.c_xt * x_t + c.c_y * y + c.c_x0 * x0
    print(f"t={t}: oracle mean {mean:+.6f} vs coefficients {implied:+.6f}, var {var:.6f}")

print("\n=== full verification table ===")
results = verify.run_all(t_grid=(4, 32))
print(verify.format_table(results))
