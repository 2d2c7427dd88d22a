"""Freeze the slow variable and average the drift over the fast invariant law.

For ou-sin the frozen fast equation is an OU process centred at x with unit
variance, so the averaged drift is exp(-1/2) sin x.  The Monte Carlo estimate
carries a batch-means standard error we can compare against.
"""

import math

import numpy as np

from fastslow import averaging, systems
from fastslow.noise import SeedSpec

hyp = systems.get_system("ou-sin")

print(f"{'x':>6} {'estimate':>10} {'se':>8} {'exact':>10} {'z':>6}")
for j, x in enumerate(np.linspace(-2, 2, 5)):
    mu = averaging.sample_invariant_measure([x], hyp, 5.0, 200.0, 100, SeedSpec(3, j), n_chains=8)
    d = averaging.averaged_drift(hyp, mu, 0.0, [x])
    exact = math.exp(-0.5) * math.sin(x)
    print(f"{x:6.2f} {d.value[0]:10.5f} {d.stderr[0]:8.5f} {exact:10.5f} {(d.value[0] - exact) / d.stderr[0]:6.2f}")

c = averaging.contraction_estimate([1.0], [3.0], [-1.0], hyp, 3.0, 200, SeedSpec(3, 99))
print(f"two frozen copies merge at rate {c.rate:.3f}")
