"""Frozen calibration data.  Regenerated by scripts/calibrate.py; do not
edit by hand."""

EXPANDERS: dict = {'one_exp': {'degree': 8,
             'expansion': 1,
             'k': 5,
             'left': 40,
             'pass_rate': 1.0,
             'right': 40,
             'seed': 0,
             'trials': 100},
 'poly_exp': {'degree': 9,
              'expansion': 8,
              'k': 5,
              'left': 40,
              'pass_rate': 0.975,
              'right': 4096,
              'seed': 0,
              'trials': 40},
 'rich_exp': {'degree': 16,
              'expansion': 14,
              'k': 5,
              'left': 40,
              'pass_rate': 1.0,
              'right': 2048,
              'seed': 0,
              'trials': 40},
 'three_exp': {'degree': 9,
               'expansion': 3,
               'k': 4,
               'left': 40,
               'pass_rate': 1.0,
               'right': 40,
               'seed': 0,
               'trials': 100}}

# fitted constant c for the fast-path probe bound c * D * log2(N)
FAST_PROBE_CONSTANT: int | None = 2

# seed whose first factor verifies on attempt 0 at N=40, K=4, eps=1/4
RICH_DEMO_SEED: int = 0
