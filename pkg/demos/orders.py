"""Comparing two kernels by their generating functions.

A dominated pair is certified, the crossing pair is refuted in both
directions, and the smallest box [delta, 1]^N on which an order holds is
located for a pair whose pgfs cross once.

Run with ``python demos/orders.py``.
"""

import numpy as np

from branchlab import gallery, orders
from branchlab.kernel import Config, ExplicitLaw, Kernel, SiteSpace

mu, nu = gallery.incomparable_pair()
for a, b, name in ((mu, nu, "mu <= nu"), (nu, mu, "nu <= mu")):
    v = orders.order_check_grid(a, b, 0.0)
    print(f"{name}: {v.status.value}, witness {v.witness}")

# one site: mu = 0.2 + 0.8 t^3 and nu = t^2 cross near t = 0.64, so the
# order only holds on boxes that start above the crossing
space = SiteSpace(("a",))
one = lambda n: Config(((0, n),)) if n else Config()
k_mu = Kernel(space, (ExplicitLaw(((one(0), 0.2), (one(3), 0.8))),))
k_nu = Kernel(space, (ExplicitLaw(((one(2), 1.0),)),))
print("smallest certified delta:", orders.smallest_certified_delta(k_mu, k_nu))

rng = np.random.default_rng(1)
big, small = orders.random_dominated_pair(rng)
verdict, coupling = orders.stochastic_order_check(big.laws[0], small.laws[0])
print(f"stochastic order at site s0: {verdict.status.value}, coupling has {len(coupling.joint)} atoms")
print(f"pgf order on [0,1]^2: {orders.certify_order(big, small, 0.0).status.value}")
