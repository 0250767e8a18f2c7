"""The standard bubble w = -log(1 + lam r^2) and the annulus capacity problem."""

import math

from paneitz_lab.blowup import (
    CapacityProblem,
    bubble_energy,
    bubble_lambda,
    bubble_mass,
    capacity_oracle,
    capacity_solve,
)

print("total bubble mass Qt(p) * int e^{4w} (should be 8 pi^2 = %.10f)" % (8 * math.pi**2))
for q in (1.0, 3.0, 12.0):
    print(f"  Qt(p)={q:5.1f}  lambda={bubble_lambda(q):.5f}  Qt(p)*mass={q * bubble_mass(bubble_lambda(q)):.10f}")

print("\nbubble energy on B_L minus its logarithmic growth (lambda = 1)")
for L in (10, 30, 100, 300):
    gap = bubble_energy(1.0, L) - 16 * math.pi**2 * math.log1p(L * L) - 8 * math.pi**2 / 3
    print(f"  L={L:4d}  gap={gap:+.6f}  gap*L^2={gap * L * L:+.3f}  (-16 pi^2 = {-16 * math.pi**2:.3f})")

prob = CapacityProblem(r=0.1, R=1.0, P1=1.0, P2=0.0, Q1=0.0, Q2=0.0)
sol = capacity_solve(prob)
print(f"\ncapacity: A={sol.A:.10f} B={sol.B:.10f} energy={sol.energy:.10f}")
for n in (500, 1000, 2000, 4000):
    e = capacity_oracle(prob, n)
    print(f"  finite differences n={n:5d}: {e:.10f}  rel err {(e - sol.energy) / sol.energy:+.2e}")
