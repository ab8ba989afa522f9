"""From a rating history to pools of short-term transition matrices.

Runs the Aalen-Johansen estimator over the bundled synthetic history on
disjoint 1, 3, 6 and 12 month windows, then recombines the pools into
bootstrap time series and checks their qualitative properties.
"""
import numpy as np

from ratingsde import demo, synth, validator
from ratingsde.aalen_johansen import estimate

np.set_printoptions(precision=4, suppress=True)

history = demo.load_demo_history()
print(f"{history.n_entities} entities, events from {history.date_range()[0]} to {history.date_range()[1]}")

# one matrix for the whole of 2015
R = estimate(history, demo.START.replace(year=2015), demo.START.replace(year=2016))
print("2015 one-year matrix:\n", R)
print("flags:", validator.check_matrix(R))

pools = demo.demo_pools()
for span, pool in pools.items():
    mean = pool.samples[:, 0].mean(axis=0)
    print(f"{span:>2} months: {pool.n_samples:>3} matrices, mean default column {mean[:, -1]}")

sizes = [p.n_samples for p in pools.values()]
print("distinct ordered series:", synth.n_combinations(sizes))

targets = synth.bootstrap_series(pools, 10000, seed=0)
print("\nproperties of 10000 bootstrap series")
print(validator.report(targets).to_text())

filtered = synth.bootstrap_series(pools, 10000, seed=0, filter_irs=True)
print("same, redrawing series that violate iRS")
print(validator.report(filtered).to_text())
