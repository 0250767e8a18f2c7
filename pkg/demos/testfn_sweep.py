"""Mass of the glued test function against its small-eps expansion.

In the flat constant-Qt case the gap decays like L^-4; with Taylor data the
eps^2 coefficient is recovered by Richardson extrapolation.
"""

import numpy as np

from paneitz_lab import blowup
from paneitz_lab.blowup import TaylorData, TestFnParams, predicted_eps2_coefficient

print("flat case, eps = 1e-3")
for L in (10.0, 20.0, 40.0, 80.0):
    res = blowup.testfn_mass_expansion(TestFnParams(1e-3, L, TaylorData(Qp=3.0)))
    print(f"  L={L:5.0f}  gap={res.gap:+.3e}  gap*L^4={res.gap * L**4:+.1f}")

tay = TaylorData(a=(0.3, -0.2, 0.1, 0.0), a_sym=np.diag([0.5, -0.3, 0.2, 0.1]), Qp=3.0, b=(0.2, 0.0, -0.1, 0.3))
eps = (4e-3, 2e-3, 1e-3)
excess = [blowup.testfn_mass_expansion(TestFnParams(e, 40.0, tay), include_eps2=False).excess for e in eps]
c2 = np.linalg.solve(np.array([[1.0, e * e, e**3] for e in eps]), excess)[1]
print(f"\nTaylor case: Richardson eps^2 coefficient {c2:.4f}, predicted {predicted_eps2_coefficient(tay):.4f}")
