"""Build the truncated invariant X_n for a short chain and look at its shape.

Run with ``python3 demos/normal_form.py``.
"""

from kgadiabatic import ModelParams, build_invariant
from kgadiabatic.normal_form import xdot_crosscheck
from kgadiabatic.poly import p, q

params = ModelParams(N=12, eps=0.05, beta=10.0)
print(f"chain N={params.N}, eps={params.eps}, omega={params.omega:.6f}")

inv = build_invariant(params, n=3)
state = inv.state

# the first correction is the flow average of H1
w = params.omega
print("\nTheta_1 coefficients (expected eps/(2 omega) and 3/(32 omega^2)):")
print(f"  p5 p6 : {inv.theta1.coeff({5: (1, 0), 6: (1, 0)}).real:.15f}  vs {params.eps / (2 * w):.15f}")
print(f"  p5^4  : {inv.theta1.coeff({5: (4, 0)}).real:.15f}  vs {3 / (32 * w * w):.15f}")

print("\nladder residuals |Theta_s - L0 chi_s - Psi_s| / |Psi_s|:")
for s in range(1, 4):
    print(f"  s={s}: {state.ladder_residual(s):.2e}   terms in chi_s: {len(state.chi[s])}")

print("\nlayers of P_3 and dX_3/dt (degree, radius, margin to the norm bound):")
for name in ("P_n", "Xn_dot"):
    for row in inv.report[name]:
        print(f"  {name:7s} degree {row['degree']:2d}  radius {row['radius']} <= {row['radius_max']}"
              f"  margin {row['margin']:.3g}")
print(f"structure ok: {inv.report['ok']}")
print(f"[X_3, H] vs [P_3, H1] relative difference: {xdot_crosscheck(inv):.2e}")

# polynomials are ordinary Python objects
f = q(1) * p(2) + 0.5 * q(3) ** 2
print(f"\nexample polynomial: {f}")
