"""
Checking a step-size schedule before training with it
=====================================================

With s_t = eta_t sqrt(t) and alpha_t the running sum of s, the weights
tau_t = s_t / alpha_t should sum to infinity, have summable squares and
go to zero. validate_schedule checks finite-horizon versions of all three.
"""

import numpy as np

from rmda.core import Schedule, validate_schedule

cases = {
    "constant 0.1": Schedule("constant", 0.1),
    "eta * sqrt(t) = t^0.75": lambda t: np.asarray(t, float) ** 0.25,
    "s_t = 1.0001^t": lambda t: 1.0001 ** np.asarray(t, float) / np.sqrt(t),
    "s_t = t^-2": lambda t: np.asarray(t, float) ** -2.5,
}

for name, eta in cases.items():
    r = validate_schedule(eta, 10 ** 6)
    print(f"{name:>24}: {'pass' if r.passed else 'FAIL'}"
          f"  sum tau {r.tau_sum:8.3f}  last tau {r.tau_last:.2e}"
          f"  (diverges {r.tau_sum_diverges}, sq converges {r.tau_sq_sum_converges},"
          f" vanishes {r.tau_vanishes})")

# same thing from the command line, on a preset's schedule:
#   rmda validate-schedule synthetic-logreg
