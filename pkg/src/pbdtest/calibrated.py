"""Calibrated absolute constants for the membership test.

Fixed by the pre-build sweep in ``oracles.calibration_report`` (regenerate
via ``pbdtest oracle --suite calibration --seed 0``) over a corpus of
pivot/perturbation pairs at TV = 0.35 eps with sigma_hat in {16, 25, 50}
and eps in {0.1, 0.15, 0.2}:

* the sample constant is the smallest grid value that simultaneously keeps
  the closed-form spread Var/E^2 of the count statistic at or under 0.05
  on the far corpus and puts the acceptance threshold at least 2.5 noise
  standard deviations above zero in the close regime (realised: spread
  <= 0.024, close margin 2.66);
* the threshold constant is the far-corpus floor (smallest implied
  constant, 0.177) divided by a 1.5x safety margin and rounded down to
  0.1, leaving the far cases 5.7+ standard deviations above threshold.

Bump CALIBRATION_VERSION whenever either value changes.
"""

CALIBRATION_VERSION = 1

# C1: Poissonized sample rate multiplier, k = ceil(C1 * sqrt(sigma_hat * logt(1/eps)) / eps^2).
L2_SAMPLE_CONST = 80.0

# c: statistic acceptance threshold is 0.25 * c * eps^2 / (sigma_hat * sqrt(logt(1/eps))).
L2_FAR_CONST = 0.1
