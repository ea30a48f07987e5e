"""
Deterministic scaling quantities
================================

The window centre sigma_t, the curvature kappa and the Malthusian parameter
for a few fitness laws.  Everything here is deterministic.
"""
import math

from competing_growth import kappa, make_model, malthusian_bb, malthusian_selection_mutation, solve_sigma
from competing_growth.scaling import sanity_asymptotics

gnedenko = make_model("gnedenko")

# sigma_t has a closed form for Gnedenko fitness; the solver reproduces it
for t in (10.0, 1e2, 1e4, 1e6):
    closed = math.sqrt(t + 1.0) - 1.0
    print(f"t = {t:8.0e}  sigma_t = {solve_sigma(gnedenko, 1.0, t):.12f}  closed form = {closed:.12f}")

# the asymptotic ratios drift towards 1, 1 and 0
rep = sanity_asymptotics(gnedenko, 1.0, [1e2, 1e4, 1e6])
print("derivative ratio", [round(v, 4) for v in rep.derivative_ratio])
print("curvature ratio ", [round(v, 4) for v in rep.curvature_ratio])

# kappa is the limit of m'' m x / m'^2; for the power tail it is (rho + 1)/rho
for rho in (0.5, 1.0, 2.0):
    k = kappa(make_model("power_rho", rho=rho))
    print(f"rho = {rho}: kappa = {k.value:.6f}, expected {(rho + 1) / rho:.6f}")

# Malthusian parameters
uniform = make_model("weibull_alpha", alpha=1.0)
print("BB tree, uniform fitness:", malthusian_bb(uniform))
print("selection-mutation, Gnedenko, beta = 0.75:", malthusian_selection_mutation(gnedenko, 0.75, 1.0))
