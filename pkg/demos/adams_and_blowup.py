"""Adams-Fontana deficit and concentration diagnostics.

On the round S^4 the deficit log int e^{4u} - (1/8 pi^2) int u P u - 4 mean(u)
is maximal, equal to log |S^4|, exactly along the conformal dilations.
"""

import math

import numpy as np

from paneitz_lab import Field, make_model, minimize_II_eps
from paneitz_lab.paneitz import K_CRITICAL as K
from paneitz_lab.variational import adams_check, blowup_diagnostics, sphere_dilation

sphere = make_model("sphere", l_max=128)
rep = adams_check(sphere, samples=500, seed=1)
print(f"sphere: max deficit over random fields {rep.max_deficit:.6f}, log|S^4| = {math.log(8 * math.pi**2 / 3):.6f}")
for t, d in rep.ladder:
    print(f"  dilation t={t:4.0f}: deficit {d:.6f}")

d = blowup_diagnostics(make_model("sphere", l_max=512), sphere_dilation(make_model("sphere", l_max=512), 40.0), Qt=3.0)
print(f"\ndilation t=40 seen as a bubble: m={d.m:.4f}, r={d.r_scale:.4f}, lambda={d.lam}, profile gap {d.profile_gap:.1e}")

torus = make_model("torus", n=8)
qt = Field.from_function(torus, lambda x1, x2, x3, x4: K * (1 + 0.3 * np.cos(2 * np.pi * x1)))
res = minimize_II_eps(torus, qt, 4.0, tol=1e-8)
diag = blowup_diagnostics(torus, res)
print(f"\ntorus minimizer with modulated Qt: {res.iterations} iterations, max at {diag.x_max}, m={diag.m:.4f}")
for r, q, val, slope in diag.scaling_table:
    print(f"  r={r:.3f} q={q:.0f}  int_B |grad u|^q = {val:.3e}  (log-log slope {slope:.2f})")
