"""Seeded simulation against exact answers.

Monte Carlo extinction for a supercritical two-type geometric process is compared
with the fixed point, and the martingale z^eta_n is checked against G^n(z).
Setting BRANCHLAB_THREADS changes speed but never the numbers.

Run with ``python demos/simulation.py``.
"""

from branchlab import gallery, simulate
from branchlab.genfun import q_global
from branchlab.kernel import Config

k = gallery.geometric_kernel([1.8, 1.4], [[0.3, 0.7], [0.6, 0.4]], labels=["a", "b"]).kernel
q = q_global(k).vector
print("exact q:", q.round(6))

est = simulate.mc_extinction(k, "a", ["a", "b"], 20_000, horizon=60, seed=3)
print(f"MC q(a): {est.point:.4f} +- {est.std_error:.4f}  counts {est.classification_counts}")

rep = simulate.martingale_test(k, Config(((0, 1), (1, 1))), [0.6, 0.7], 8, 20_000, seed=5)
print(f"E[z^eta_8] {rep.empirical_mean:.4f} vs predicted {rep.predicted:.4f} (z-score {rep.z_score:+.2f})")

tr = simulate.run(k, Config(((0, 1),)), 25, pop_cap=5000, rng_seed=11)
print(f"one trajectory stopped by {tr.stopped_reason.value} after {len(tr.generations) - 1} generations")
