"""Compare the closed-form bounds with a Monte Carlo run of the network.

Concrete and abstract networks share their Brownian and Poisson drivers; the
concrete side is steered by the interface.  The empirical mean squared output
gap must stay below the moment bound.
"""

import numpy as np

from jlssabs import build_abstraction, case_study as cs, compose
from jlssabs import bounds as bd
from jlssabs import simulate as sim

net = cs.build_network(d=0.5)
P = cs.projections()
kappa = {"1": 3.0, "2": 3.0, "3": 2.5, "4": 2.5}
mode = {"1": "identity", "2": "identity", "3": "behavior", "4": "behavior"}
res = {i: build_abstraction(net[i].sys, P[i], kappa[i], pi=1.0, bhat_mode=mode[i])
       for i in net.ids}
cert = compose(net, res, zero_input=("3", "4"))

x0, xh0 = cs.initial_states()
inputs = sim.read_input_csv("demos/data/inputs.csv")
cfg = sim.SimConfig(dt=1e-3, horizon=15.0, trials=200, master_seed=42, inputs=inputs,
                    x0=x0, xh0=xh0, box=cs.SAFE_BOX, store_paths=False)
ens = sim.run_coupled(net, res, cfg, cert)

g = bd.GainSlopes.from_certificate(cert)
V0 = ens.info["V0"]
bound = bd.moment_bound(g, V0, inputs.sup_norm_sq(), 0.0, ens.t)
mean, se = sim.estimate_moment_gap(ens)
print(f"V0 = {V0:.4f}; slopes a={g.a:.3f} h={g.h:.3f} r_e={g.r_e:.3f}")
print(f"{'t':>5} {'mean gap^2':>12} {'3 SE':>10} {'bound':>10}")
for j in np.linspace(0, len(ens.t) - 1, 7).astype(int):
    print(f"{ens.t[j]:5.1f} {mean[j]:12.5f} {3 * se[j]:10.5f} {bound[j]:10.4f}")

for eps in (0.5, 1.0, 2.0):
    frac, (lo, hi) = sim.estimate_sup_exceedance(ens, eps, 15.0)
    b = bd.sup_probability_bound(g, V0, eps, 15.0, g.r_e * inputs.sup_norm_sq())
    print(f"P(sup gap >= {eps}) ~ {frac:.3f} [{lo:.3f}, {hi:.3f}], bound {b:.3g}")
print("mean squared distance to the safe box at T:", sim.estimate_set_distance(ens)[-1])
