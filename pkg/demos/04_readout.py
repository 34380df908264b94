"""
Only all atoms together see the fringe
======================================

Each atom meets its own beamsplitter.  The product of all outcomes
oscillates with the phase, any smaller group of atoms looks like coin
flips.
"""

import numpy as np

from cattrap.interference import (
    MeasurementModel,
    expectation_product,
    fringe_scan,
    marginal_distribution,
    sample_outcomes,
)

cat = MeasurementModel.from_visibility(3, 0.95, theta=0.2)

fringe = fringe_scan(cat, points=12)
for delta, e in zip(fringe.delta, fringe.expectation):
    bar = "#" * int(round(20 * (1 + e)))
    print(f"{delta:5.2f} {e:+.3f} {bar}")
print(f"fringe amplitude {fringe.amplitude:.3f}")

# two of three atoms: flat at every phase
for delta in (0.0, 1.0, 2.0):
    m = MeasurementModel(3, cat.alpha, cat.beta, cat.theta, delta)
    probs = np.array(list(marginal_distribution(m, [0, 1]).values()))
    print(f"delta {delta}: pair marginal {np.round(probs, 6)}")

shots = sample_outcomes(cat, 20000, seed=7)
print(f"sampled product {shots.mean:+.4f} +- {shots.stderr:.4f}, exact {expectation_product(cat):+.4f}")
