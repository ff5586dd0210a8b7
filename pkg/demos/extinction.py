"""Global and local extinction on the path example.

Each particle at site n has one child at n+1 with probability p_n and none
otherwise.  Global extinction from site 0 is 1 - prod p_n, while any finite
set is visited only finitely often, so local extinction there is certain.

Run with ``python demos/extinction.py``.
"""

import numpy as np

from branchlab import gallery
from branchlab.genfun import eval_G, q_global, q_local, residual

bundle = gallery.moyal1(N=40)
k = bundle.kernel

glob = q_global(k)
oracle = bundle.oracle("q_global")
print(f"q(0) computed {glob.vector[0]:.15f}  closed form {oracle[0]:.15f}")
print(f"max |q - oracle| = {np.max(np.abs(glob.vector - oracle)):.2e}, residual {residual(k, glob.vector):.2e}")

loc = q_local(k, ["0", "1", "2"])
print("local extinction in {0,1,2}:", np.round(loc.q_local[:5], 12))
lo, hi = loc.bracket
print(f"bracket width at site 0: {hi[0] - lo[0]:.2e}")

# other fixed points sit strictly between q and 1
z = gallery.moyal1_fixed_point(None, 0.75, 40)
print(f"fixed point through z0=0.75: z1={z[1]:.12f}, |G(z)-z| interior {np.max(np.abs(eval_G(k, z) - z)[:-1]):.1e}")
