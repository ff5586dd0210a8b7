"""Named example kernels with closed-form oracles.

``moyal1``
    A single particle moving right: at site ``n`` it has one child at
    ``n+1`` with probability ``p_n`` and none otherwise.  With
    ``sum (1 - p_n) < inf`` the process survives globally with probability
    ``prod_{i>=n} p_i`` but every finite set is eventually left.
``moyal2``
    As ``moyal1`` with an extra step back to ``n-1`` with probability ``r_n``.
``geometric``
    Geometric offspring counts with mean ``m_x`` and a dispersal matrix.
``incomparable``
    Two kernels on two sites whose generating functions cross.

Sequence specs
--------------
``p`` (and ``r`` for ``moyal2``) accept

* ``{"form": "dyadic", "c": c}``: ``p_n = exp(-c 2^{-n-1})``; tail products
  are ``exp(-c 2^{-n})`` in closed form.  This is the default with
  ``c = ln 2``.
* ``{"form": "power", "c": c, "a": a}``: ``p_n = 1 - c (n+1)^{-a}``,
  summable only for ``a > 1``.
* a list of values ``p_0, p_1, ...``; later terms are taken to be 1.

``r`` accepts a list (later terms 0) or ``{"form": "fraction", "s": s}``
meaning ``r_n = s (1 - p_n)`` for ``n >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConstraintViolated, DivergentTail, OutOfBasin
from .genfun import eval_G
from .kernel import Boundary, Config, Dispersal, ExplicitLaw, GeometricLaw, Kernel, MultinomialLaw, SiteSpace

__all__ = [
    "ExampleBundle",
    "p_values",
    "tail_product",
    "tail_deficit",
    "log_tail_product",
    "moyal1",
    "moyal1_fixed_point",
    "moyal2",
    "moyal2_fixed_point",
    "geometric_kernel",
    "incomparable_pair",
    "multinomial_from_geometric",
    "BUILDERS",
]

DEFAULT_P = {"form": "dyadic", "c": math.log(2.0)}
_TAIL_TERMS = 10**6


@dataclass
class ExampleBundle:
    """A kernel with named reference values.

    ``oracles`` maps a name to ``{"value": ..., "note": ...}``; ``kind`` in
    the entry says whether the value is exact or only a bound.
    """

    name: str
    kernel: Kernel
    oracles: dict = field(default_factory=dict)
    citation: str = ""

    def oracle(self, name: str):
        return self.oracles[name]["value"]

    def oracles_to_dict(self) -> dict:
        out = {}
        for key, entry in self.oracles.items():
            val = entry["value"]
            if isinstance(val, np.ndarray):
                val = val.tolist()
            out[key] = {**entry, "value": val}
        return {"example": self.name, "citation": self.citation, "oracles": out}


# -- sequence specs ------------------------------------------------------------------


def _normalize(spec):
    if spec is None:
        return dict(DEFAULT_P)
    if isinstance(spec, Mapping):
        return dict(spec)
    return {"form": "list", "values": [float(v) for v in spec]}


def p_values(spec, n: int) -> np.ndarray:
    """``p_0, ..., p_{n-1}`` for a sequence spec."""
    spec = _normalize(spec)
    idx = np.arange(n, dtype=float)
    form = spec["form"]
    if form == "dyadic":
        return np.exp(-float(spec["c"]) * 2.0 ** (-idx - 1))
    if form == "power":
        c, a = float(spec["c"]), float(spec["a"])
        if a <= 1:
            raise DivergentTail(f"sum of c (n+1)^-a diverges for a = {a}")
        return 1.0 - c * (idx + 1) ** (-a)
    if form == "list":
        vals = np.ones(n)
        given = spec["values"][:n]
        vals[: len(given)] = given
        return vals
    raise ValueError(f"unknown sequence form {form!r}")


def log_tail_product(spec, n: int) -> float:
    """``log prod_{i >= n} p_i``."""
    spec = _normalize(spec)
    form = spec["form"]
    if form == "dyadic":
        return -float(spec["c"]) * 2.0**-n
    if form == "list":
        vals = spec["values"]
        return math.fsum(math.log(v) for v in vals[n:]) if n < len(vals) else 0.0
    if form == "power":
        c, a = float(spec["c"]), float(spec["a"])
        if a <= 1:
            raise DivergentTail(f"sum of c (n+1)^-a diverges for a = {a}")
        i = np.arange(n, n + _TAIL_TERMS, dtype=float)
        logs = np.log1p(-c * (i + 1) ** (-a))
        # remaining terms: log(1 - u) ~ -u, integrated
        rest = -c * (n + _TAIL_TERMS + 0.5) ** (1 - a) / (a - 1)
        return math.fsum(logs.tolist()) + rest
    raise ValueError(f"unknown sequence form {form!r}")


def tail_product(spec, n: int) -> float:
    """``prod_{i >= n} p_i``."""
    return math.exp(log_tail_product(spec, n))


def tail_deficit(spec, n: int) -> float:
    """``1 - prod_{i >= n} p_i`` without cancellation."""
    return -math.expm1(log_tail_product(spec, n))


def _check_p(p: np.ndarray):
    if np.any(p <= 0) or np.any(p > 1):
        raise ConstraintViolated("p_n must lie in (0, 1]")


def _path_space(n: int) -> SiteSpace:
    idx = np.arange(n)
    return SiteSpace(tuple(str(i) for i in range(n)), np.abs(idx[:, None] - idx[None, :]).astype(float))


def _step_law(moves, n_sites):
    support = []
    stay = 1.0
    for target, prob in moves:
        if prob <= 0:
            continue
        cfg = Config(((target, 1),)) if 0 <= target < n_sites else Config(outside=1)
        support.append((cfg, prob))
        stay -= prob
    if stay > 0:
        support.append((Config(), stay))
    return ExplicitLaw(tuple(support))


# -- moyal1 / moyal2 -----------------------------------------------------------------


def moyal1(p=None, N: int = 40, boundary: Boundary | str = Boundary.SURVIVE_OUTSIDE) -> ExampleBundle:
    """Right-moving single particle on ``0..N-1``; ``G(z|n) = 1 - p_n + p_n z(n+1)``."""
    pv = p_values(p, N)
    _check_p(pv)
    laws = tuple(_step_law([(n + 1, float(pv[n]))], N) for n in range(N))
    kernel = Kernel(_path_space(N), laws, boundary)
    q = np.array([tail_deficit(p, n) for n in range(N)])
    return ExampleBundle(
        "moyal1",
        kernel,
        {
            "q_global": {"value": q, "kind": "exact", "note": "1 - prod_{i>=n} p_i"},
            "q_local_finite": {"value": np.ones(N), "kind": "exact", "note": "every finite set is left for good"},
        },
        "moyal1",
    )


def moyal1_fixed_point(p=None, z0: float = 0.9, N: int = 40) -> np.ndarray:
    """Fixed point of the ``moyal1`` generating function with ``z(0) = z0``.

    Built from ``z_{n+1} = 1 - (1 - z_n) / p_n``, i.e.
    ``1 - z_n = (1 - z0) / prod_{i<n} p_i``.

    Raises
    ------
    OutOfBasin
        If ``z0`` is not in ``(q(0,X), 1]``; below that the recursion leaves ``[0, 1]``.
    """
    q0 = tail_deficit(p, 0)
    if not q0 < z0 <= 1.0:
        raise OutOfBasin(f"z0 = {z0} must lie in ({q0}, 1]")
    pv = p_values(p, N)
    _check_p(pv)
    gap = (1.0 - z0) / np.concatenate(([1.0], np.cumprod(pv[:-1])))
    return 1.0 - gap


def _r_values(r, p_arr: np.ndarray) -> np.ndarray:
    n = len(p_arr)
    rv = np.zeros(n)
    if isinstance(r, Mapping):
        if r.get("form") != "fraction":
            raise ValueError("r spec must be a list or {'form': 'fraction', 's': s}")
        rv = float(r["s"]) * (1.0 - p_arr)
        rv[0] = 0.0
    elif r is not None:
        vals = [float(v) for v in r][:n]
        rv[: len(vals)] = vals
    if rv[0] != 0.0:
        raise ConstraintViolated("r_0 must be 0")
    if np.any(rv < 0):
        raise ConstraintViolated("r_n must be nonnegative")
    if np.any(1.0 - p_arr - rv <= 0):
        bad = int(np.flatnonzero(1.0 - p_arr - rv <= 0)[0])
        raise ConstraintViolated(f"1 - p_n - r_n must be positive (fails at n = {bad})")
    return rv


def moyal2(p=None, r=None, N: int = 40, boundary: Boundary | str = Boundary.SURVIVE_OUTSIDE) -> ExampleBundle:
    """``moyal1`` plus one child at ``n-1`` with probability ``r_n`` (``r_0 = 0``).

    Only an upper bound on the global extinction vector is known in closed
    form: ``q(n,X) <= 1 - prod_{i>=n} p_i``.
    """
    pv = p_values(p, N)
    _check_p(pv)
    rv = _r_values(r, pv)
    laws = tuple(_step_law([(n + 1, float(pv[n])), (n - 1, float(rv[n]))], N) for n in range(N))
    kernel = Kernel(_path_space(N), laws, boundary)
    bound = np.array([tail_deficit(p, n) for n in range(N)])
    return ExampleBundle(
        "moyal2",
        kernel,
        {
            "q_global_upper": {"value": bound, "kind": "upper_bound", "note": "1 - prod_{i>=n} p_i"},
            "r": {"value": rv, "kind": "parameter", "note": "backward step probabilities"},
        },
        "moyal2",
    )


def moyal2_fixed_point(p=None, r=None, z0: float = 0.9, N: int = 40) -> np.ndarray:
    """Fixed point of the ``moyal2`` generating function started from ``z0``.

    Uses ``z_{n+1} = 1 + (1 - z_{n-1}) r_n / p_n - (1 - z_n) / p_n``.

    Raises
    ------
    OutOfBasin
        If an iterate leaves ``[0, 1]``.
    """
    pv = p_values(p, N)
    _check_p(pv)
    rv = _r_values(r, pv)
    if not 0.0 <= z0 <= 1.0:
        raise OutOfBasin(f"z0 = {z0} outside [0, 1]")
    w = np.empty(N)
    w[0] = 1.0 - z0
    for n in range(N - 1):
        back = w[n - 1] if n >= 1 else 0.0
        w[n + 1] = (w[n] - rv[n] * back) / pv[n]
        if not 0.0 <= w[n + 1] <= 1.0:
            raise OutOfBasin(f"recursion leaves [0, 1] at n = {n + 1}")
    return 1.0 - w


# -- geometric and the incomparable pair ---------------------------------------------


def geometric_kernel(
    means: Sequence[float],
    dispersal: Sequence[Sequence[float]] | None = None,
    boundary: Boundary | str = Boundary.KILL,
    labels: Sequence[str] | None = None,
) -> ExampleBundle:
    """Geometric offspring numbers with means ``means[x]`` placed by ``dispersal``.

    ``G(z) = 1 / (1 + M (1 - z))`` with ``M = diag(means) P``.  For a single
    type the global extinction probability is ``min(1, 1/m)``.
    """
    means = [float(m) for m in means]
    n = len(means)
    if dispersal is None:
        dispersal = np.eye(n)
    P = np.asarray(dispersal, dtype=float)
    if P.shape not in ((n, n), (n, n + 1)):
        raise ValueError(f"dispersal must be {n}x{n} or {n}x{n + 1}")
    laws = []
    for x in range(n):
        row = P[x, :n]
        out = float(P[x, n]) if P.shape[1] == n + 1 else 0.0
        laws.append(GeometricLaw(means[x], Dispersal.from_row(row, out)))
    space = SiteSpace(tuple(labels) if labels else tuple(str(i) for i in range(n)))
    kernel = Kernel(space, tuple(laws), boundary)
    oracles = {}
    if n == 1 and P[0, 0] == 1.0:
        oracles["q_global"] = {"value": np.array([min(1.0, 1.0 / means[0])]), "kind": "exact", "note": "min(1, 1/m)"}
    return ExampleBundle("geometric", kernel, oracles, "geometric")


def incomparable_pair():
    """Two kernels on sites ``1, 2`` with crossing generating functions.

    ``G_mu(z) = (5/6) z1 z2 + 1/6`` and ``G_nu(z) = (4/5) ((5 z1 + z2) / 6)^2 + 1/5``
    at both sites.  ``G_mu <= G_nu`` on the diagonal, but on the edge
    ``z2 = 1`` the inequality reverses for ``z1`` in ``(1/10, 1)``.
    """
    space = SiteSpace(("1", "2"))
    mu = ExplicitLaw(((Config(((0, 1), (1, 1))), 5 / 6), (Config(), 1 / 6)))
    nu = MultinomialLaw(((0, 1 / 5), (2, 4 / 5)), Dispersal.from_row([5 / 6, 1 / 6]))
    return Kernel(space, (mu, mu)), Kernel(space, (nu, nu))


def _incomparable_bundle() -> tuple[ExampleBundle, ExampleBundle]:
    k_mu, k_nu = incomparable_pair()
    z = np.array([0.5, 1.0])
    gm, gn = eval_G(k_mu, z)[0], eval_G(k_nu, z)[0]
    note = {"value": {"z": z.tolist(), "G_mu": float(gm), "G_nu": float(gn)}, "kind": "exact", "note": "edge point"}
    return (
        ExampleBundle("incomparable_mu", k_mu, {"edge_point": note}, "incomparable"),
        ExampleBundle("incomparable_nu", k_nu, {"edge_point": note}, "incomparable"),
    )


def _geometric_default():
    return geometric_kernel([2.0])


BUILDERS = {
    "moyal1": lambda: [moyal1()],
    "moyal2": lambda: [moyal2(r={"form": "fraction", "s": 0.5})],
    "geometric": lambda: [_geometric_default()],
    "incomparable": lambda: list(_incomparable_bundle()),
}


def multinomial_from_geometric(kernel: Kernel, quantile: float = 1 - 1e-12) -> Kernel:
    """Replace each geometric law by a multinomial one with the pmf truncated at ``quantile``.

    The truncated mass is put on the largest count so the result stays a
    probability law.
    """
    laws = []
    for law in kernel.laws:
        if isinstance(law, GeometricLaw):
            pmf, tail = law.total_pmf(quantile)
            pmf = pmf.copy()
            pmf[-1] += tail
            laws.append(MultinomialLaw(tuple(enumerate(pmf.tolist())), law.dispersal))
        else:
            laws.append(law)
    return Kernel(kernel.space, tuple(laws), kernel.boundary)
