"""
A soft Gaussian killing layer next to the wall.

For weak killing the first-order closed form tracks the PDE; the gap grows
like (kc t)^2. The 'A' bucket Gaussian curve is printed beside the contact
curve for comparison.
"""
import math

import numpy as np

from elastic_default import pde
from elastic_default.calib import bucket_params, model_curve
from elastic_default.model import KillingMeasure, ModelParams
from elastic_default.perturb import gaussian_pd

x0, tau = 1.0, 0.09
params = ModelParams.from_drift(1.0, 0.0, x0)
tenors = np.array([1.0, 2.0, 5.0])
for kc in (0.01, 0.04, 0.16):
    sol = pde.solve(params, KillingMeasure.gaussian(kc, math.sqrt(tau)), grid=pde.PdeGrid(t_max=5.0))
    ref = sol.term_structure(tenors).pd
    approx = gaussian_pd(tenors, x0, kc, tau)
    gap = (approx - ref) / (kc * tenors) ** 2
    print(f"kc={kc:<5} pde={np.round(ref, 5)} first order={np.round(approx, 5)} "
          f"gap/(kc t)^2={np.round(gap, 3)}")

t = np.arange(1.0, 31.0)
ebc = model_curve("ebc", bucket_params("ebc", "A"))(t)
gauss = model_curve("gauss", bucket_params("gauss", "A"))(t)
print("bucket A, P(10), P(30): contact", ebc[[9, 29]].round(4), " gaussian", gauss[[9, 29]].round(4))
