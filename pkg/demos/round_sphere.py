"""Round S^4: the functional II_eps, its minimizer and the threshold Lambda.

With Qt equal to the round Q-curvature the minimizer is constant and every
quantity has a closed form, so this script doubles as a sanity check of the
whole pipeline.
"""

import math

from paneitz_lab import lambda_const, make_model, minimize_II_eps
from paneitz_lab.paneitz import K_CRITICAL as K
from paneitz_lab.variational import euler_lagrange_residual

model = make_model("sphere", l_max=16)
print(f"model: {model!r}, volume {model.volume:.6f}")

print("\nminimizing II_eps from a random start (Qt = 3)")
print(f"{'eps':>5} {'iters':>6} {'value':>14} {'closed form':>14} {'EL residual':>12}")
for eps in (4.0, 2.0, 1.0, 0.5):
    res = minimize_II_eps(model, 3.0, eps, tol=1e-8, seed=7)
    resid = euler_lagrange_residual(model, 3.0, eps, res.u).sup_norm()
    print(f"{eps:5.1f} {res.iterations:6d} {res.value:14.8f} {-(K - eps) * math.log(K):14.8f} {resid:12.2e}")

big = make_model("sphere", l_max=256)
lam = lambda_const(big, 3.0, "north")
print(f"\nLambda at the north pole: {lam:.6f} (exact {-K * math.log(K):.6f})")
