"""
One default curve computed three ways: closed form, PDE and Monte Carlo.

Contact killing at the wall with the 'A' bucket parameters in units where
sigma = 1. The three columns should agree to PDE accuracy and MC noise.
"""
import numpy as np

from elastic_default import mc, pde
from elastic_default.calib import bucket_params
from elastic_default.contact import ContactParams, ebc_pd_sharp
from elastic_default.model import KillingMeasure, ModelParams

p = bucket_params("ebc", "A")
params = ModelParams.from_drift(1.0, p["at"], p["x0t"])
killing = KillingMeasure.dirac(p["kct"])
tenors = np.array([1.0, 5.0, 10.0, 20.0, 30.0])

closed = ebc_pd_sharp(tenors, ContactParams(p["x0t"], p["at"], 0.5, p["kct"]))
grid = pde.PdeGrid(t_max=30.0)
sol = pde.solve(params, killing, grid=grid)
num = sol.term_structure(tenors)
sim = mc.simulate(params, killing, cfg=mc.McConfig(n_paths=200_000, dt=0.5, t_max=30.0, seed=1),
                  tenors=tenors)

print(f"{'t':>5} {'closed':>10} {'pde':>10} {'mc':>10} {'mc se':>9}")
for row in zip(tenors, closed, num.pd, sim.pd, sim.stderr):
    print("{:5.0f} {:10.6f} {:10.6f} {:10.6f} {:9.6f}".format(*row))
print("PDE probability ledger residual:", sol.balance_residual())
