"""Certify the network of four abstractions with the small-gain condition.

First with the gains of our own certificates, then with the rounded gains
quoted for the example, at coupling strength d = 1/2 and d = 1.
"""

import numpy as np

from jlssabs import Infeasible, build_abstraction, case_study as cs, compose
from jlssabs.composition import build_gain_matrices, small_gain_margin

np.set_printoptions(precision=4, suppress=True)

net = cs.build_network(d=0.5)
P = cs.projections()
kappa = {"1": 3.0, "2": 3.0, "3": 2.5, "4": 2.5}
mode = {"1": "identity", "2": "identity", "3": "behavior", "4": "behavior"}
res = {i: build_abstraction(net[i].sys, P[i], kappa[i], pi=1.0, bhat_mode=mode[i])
       for i in net.ids}

cert = compose(net, res, zero_input=("3", "4"))
print("own certificates:")
print("  Lambda diag =", np.diag(cert.Lambda), "\n  Delta =\n", cert.Delta)
print(f"  spectral radius {cert.radius:.4f}, mu = {cert.mu}")
print("  composite slopes:", {k: round(v, 4) for k, v in cert.literal.items()})

print("\nquoted gains:")
for d in (0.5, 1.0):
    netd = cs.build_network(d)
    Lam, Delta = build_gain_matrices(netd, cs.quoted_gains(d))
    print(f"  d={d}: mu=[2,2,1,1] margin {small_gain_margin(Lam, Delta, [2, 2, 1, 1])}")
    try:
        c = compose(netd, cs.quoted_gains(d))
        print(f"    certified, spectral radius {c.radius:.7f}")
    except Infeasible as exc:
        print(f"    rejected: spectral radius {exc.radius:.7f}")
