"""
Refit a noiseless synthetic 'BB' curve with the multiplicative random search.

The start point comes from a coarse grid scan; every accepted trial lowers
the RMS deviation. With a fixed shrink factor the search can stall in a
flat valley well before it reaches the generating parameters.
"""
from elastic_default.calib import SearchConfig, bucket_params, fit, synthetic_curve

true = bucket_params("ebc", "BB")
data = synthetic_curve("ebc", true, label="BB")
res = fit("ebc", data, SearchConfig(q=0.9, n_trials=10_000, seed=0))

print("start    ", res.initial_params)
print("fitted   ", {k: round(v, 4) for k, v in res.params.items()})
print("true     ", true)
print("rho      ", res.objective, "after", len(res.trace) - 1, "accepted steps")
