"""Stochastic, pgf and germ orders between kernels.

Three relations are checked, from strongest to weakest:

``stochastic``
    ``mu_x`` dominates ``nu_x`` in the usual stochastic order on
    configurations.  Decided exactly (up to float tolerance) as a
    transportation problem solved by maximum flow.
``pgf``
    ``G_mu(z) <= G_nu(z)`` for every ``z`` in ``[0,1]^N``.
``germ``
    ``G_mu(z) <= G_nu(z)`` on the box ``[delta,1]^N``.

Inequalities between generating functions are falsified by a grid search
and certified by Bernstein enclosures of ``G_nu - G_mu`` on the box (see
:mod:`branchlab.bernstein`).  Both sides use the same tolerance ``eps`` so a
verdict is never both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import networkx as nx
import numpy as np

from . import bernstein
from .errors import (
    DispersalMismatch,
    GridTooLarge,
    InvalidKernelError,
    OrderNotCertified,
    UnsupportedVariant,
)
from .genfun import eval_G, q_global, q_local
from .kernel import (
    MASS_TOL,
    Config,
    Dispersal,
    ExplicitLaw,
    GeometricLaw,
    Kernel,
    MultinomialLaw,
    SiteSpace,
    mean_matrix,
    validate,
)

__all__ = [
    "Relation",
    "Status",
    "OrderVerdict",
    "CouplingCertificate",
    "germ_check_multinomial",
    "order_check_grid",
    "stochastic_order_check",
    "stochastic_order_kernels",
    "order_chain_test",
    "theorem_inequality_check",
    "geometric_order_equivalence",
    "smallest_certified_delta",
    "random_dominated_pair",
    "random_germ_pair",
]

EPS = MASS_TOL
DEFAULT_SPACING = 1 / 64
MIN_SPACING = 1 / 1024
MAX_GRID_POINTS = 10**7
FLOW_TOL = 1e-9
_CHUNK = 1 << 16


class Relation(str, Enum):
    STOCHASTIC = "stochastic"
    PGF = "pgf"
    GERM = "germ"


class Status(str, Enum):
    CERTIFIED = "certified"
    FALSIFIED = "falsified"
    INCONCLUSIVE = "inconclusive"

    @property
    def exit_code(self) -> int:
        return {"certified": 0, "falsified": 1, "inconclusive": 2}[self.value]


@dataclass
class OrderVerdict:
    """Outcome of an order check.

    ``margin`` is the smallest observed gap: the minimum of ``G_nu - G_mu``
    over the evaluated grid, or ``min_U mu(U) - nu(U)`` over upper sets for
    the stochastic order.  ``witness`` is present exactly when ``status`` is
    falsified.
    """

    relation: Relation
    delta: float
    status: Status
    witness: dict | None = None
    margin: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status is Status.CERTIFIED

    @property
    def falsified(self) -> bool:
        return self.status is Status.FALSIFIED

    def to_dict(self) -> dict:
        return {
            "relation": self.relation.value,
            "delta": float(self.delta),
            "status": self.status.value,
            "witness": self.witness,
            "margin": float(self.margin),
        }


@dataclass
class CouplingCertificate:
    """Ordered coupling: ``joint`` lists ``(upper, lower, mass)`` with ``upper >= lower``."""

    joint: list
    upper_residual: float
    lower_residual: float

    def check(self, tol: float = FLOW_TOL) -> bool:
        ordered = all(f.dominates(g) for f, g, _ in self.joint)
        return ordered and self.upper_residual <= tol and self.lower_residual <= tol

    def to_dict(self, space: SiteSpace | None = None) -> dict:
        def cfg(c: Config):
            d = {(space.labels[s] if space else str(s)): k for s, k in c.entries}
            if c.outside:
                d["@outside"] = c.outside
            return d

        return {
            "joint": [{"upper": cfg(f), "lower": cfg(g), "mass": m} for f, g, m in self.joint],
            "upper_residual": self.upper_residual,
            "lower_residual": self.lower_residual,
        }


def _require_valid(*kernels: Kernel):
    for k in kernels:
        rep = validate(k)
        if not rep.ok:
            raise InvalidKernelError(rep)


# -- germ order for multinomial families --------------------------------------


def _phi_rational(law):
    if isinstance(law, MultinomialLaw):
        return law.pmf_array(), None
    return np.array([1.0]), np.array([1.0 + law.mean, -law.mean])


def _phi_eval(law, t: np.ndarray) -> np.ndarray:
    if isinstance(law, MultinomialLaw):
        return np.polynomial.polynomial.polyval(t, law.pmf_array())
    return 1.0 / (1.0 + law.mean * (1.0 - t))


def _same_dispersal(a, b, tol: float = 1e-12) -> bool:
    da, db = dict(a.entries), dict(b.entries)
    keys = set(da) | set(db)
    return abs(a.outside - b.outside) <= tol and all(abs(da.get(k, 0.0) - db.get(k, 0.0)) <= tol for k in keys)


def germ_check_multinomial(k_mu: Kernel, k_nu: Kernel, delta: float = 0.0, grid: int = 65, eps: float = EPS) -> OrderVerdict:
    """Compare total-offspring pgfs ``phi_mu <= phi_nu`` on ``[delta, 1]`` site by site.

    For multinomial (or geometric) kernels sharing their dispersal rows this
    is equivalent to the germ order at ``delta``.

    Parameters
    ----------
    grid : int
        Number of grid points on ``[delta, 1]`` used for falsification.

    Raises
    ------
    DispersalMismatch
        If the kernels differ in size or any pair of dispersal rows differs
        by more than ``1e-12``.
    """
    _check_delta(delta)
    _require_valid(k_mu, k_nu)
    if k_mu.size != k_nu.size:
        raise DispersalMismatch("kernels have different numbers of sites")
    for x, (a, b) in enumerate(zip(k_mu.laws, k_nu.laws)):
        if not isinstance(a, (MultinomialLaw, GeometricLaw)) or not isinstance(b, (MultinomialLaw, GeometricLaw)):
            raise UnsupportedVariant(f"site {x}: germ_check_multinomial needs multinomial or geometric laws")
        if not _same_dispersal(a.dispersal, b.dispersal):
            raise DispersalMismatch(f"site {x}: dispersal rows differ")
    t = np.linspace(delta, 1.0, max(int(grid), 2))
    margin = math.inf
    worst = None
    pending = []
    for x, (a, b) in enumerate(zip(k_mu.laws, k_nu.laws)):
        gap = _phi_eval(b, t) - _phi_eval(a, t)
        i = int(np.argmin(gap))
        if gap[i] < margin:
            margin, worst = float(gap[i]), (x, float(t[i]))
        if gap[i] < -eps:
            continue
        num = bernstein.difference_numerator(_phi_rational(b), _phi_rational(a), 1)
        pending.append((x, num))
    if margin < -eps:
        x, tx = worst
        return OrderVerdict(Relation.GERM, delta, Status.FALSIFIED, {"site": k_mu.labels[x], "t": tx, "gap": margin}, margin)
    status = Status.CERTIFIED
    for x, num in pending:
        enc = bernstein.certify_nonnegative(num, [delta], [1.0], eps, min_width=1.0 / (16 * (len(t) - 1)))
        if enc.status == "falsified":
            tx = float(enc.witness[0])
            gap = float(_phi_eval(k_nu.laws[x], np.array([tx]))[0] - _phi_eval(k_mu.laws[x], np.array([tx]))[0])
            if gap < -eps:
                return OrderVerdict(Relation.GERM, delta, Status.FALSIFIED, {"site": k_mu.labels[x], "t": tx, "gap": gap}, gap)
            status = Status.INCONCLUSIVE
        elif enc.status != "certified":
            status = Status.INCONCLUSIVE
    return OrderVerdict(Relation.GERM, delta, status, None, margin)


# -- grid check of G_mu <= G_nu ----------------------------------------------


def _check_delta(delta):
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"delta must lie in [0, 1), got {delta}")


def _axis_points(delta: float, spacing: float) -> int:
    return math.ceil((1.0 - delta) / spacing - 1e-12) + 1


def _grid_scan(k_mu: Kernel, k_nu: Kernel, delta: float, m: int):
    n = k_mu.size
    axis = np.linspace(delta, 1.0, m)
    total = m**n
    best = (math.inf, None, None)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        z = axis[np.stack(np.unravel_index(idx, (m,) * n), axis=1)]
        d = eval_G(k_nu, z) - eval_G(k_mu, z)
        flat = int(np.argmin(d))
        row, col = divmod(flat, n)
        if d[row, col] < best[0]:
            best = (float(d[row, col]), z[row].copy(), col)
    return best


def _rational_differences(k_mu: Kernel, k_nu: Kernel):
    n = k_mu.size
    out = []
    for a, b in zip(k_mu.laws, k_nu.laws):
        ra = bernstein.law_rational(a, n, k_mu.outside_value)
        rb = bernstein.law_rational(b, n, k_nu.outside_value)
        out.append(bernstein.difference_numerator(rb, ra, n))
    return out


def order_check_grid(
    k_mu: Kernel,
    k_nu: Kernel,
    delta: float = 0.0,
    spacing: float = DEFAULT_SPACING,
    min_spacing: float = MIN_SPACING,
    eps: float = EPS,
    max_points: int = MAX_GRID_POINTS,
) -> OrderVerdict:
    """Check ``G_mu <= G_nu`` on ``[delta, 1]^N``.

    The grid with the given ``spacing`` is scanned for a negative coordinate
    of ``D = G_nu - G_mu``; the argmin is returned as witness.  If none is
    found, each ``D(.|x)`` (a rational function with positive denominator)
    is certified nonnegative by Bernstein enclosures, subdividing down to the
    grid spacing.  Undecided cases halve the spacing until ``min_spacing``.

    ``relation`` is ``pgf`` when ``delta == 0`` and ``germ`` otherwise.

    Raises
    ------
    GridTooLarge
        If the initial grid has more than ``max_points`` points.
    """
    _check_delta(delta)
    _require_valid(k_mu, k_nu)
    if k_mu.size != k_nu.size:
        raise ValueError("kernels must share the site space")
    n = k_mu.size
    relation = Relation.PGF if delta == 0.0 else Relation.GERM
    m = _axis_points(delta, spacing)
    if m**n > max_points:
        raise GridTooLarge(f"{m}^{n} grid points exceed the guard {max_points}")
    numerators = None
    h = spacing
    while True:
        margin, z, col = _grid_scan(k_mu, k_nu, delta, m)
        if margin < -eps:
            witness = {"z": [float(v) for v in z], "site": k_mu.labels[col], "gap": margin}
            return OrderVerdict(relation, delta, Status.FALSIFIED, witness, margin)
        if numerators is None:
            numerators = _rational_differences(k_mu, k_nu)
        undecided = False
        lo, hi = [delta] * n, [1.0] * n
        for num in numerators:
            enc = bernstein.certify_nonnegative(num, lo, hi, eps, min_width=h)
            if enc.status == "falsified":
                zw = np.asarray(enc.witness)
                d = eval_G(k_nu, zw) - eval_G(k_mu, zw)
                c = int(np.argmin(d))
                if d[c] < -eps:
                    witness = {"z": [float(v) for v in zw], "site": k_mu.labels[c], "gap": float(d[c])}
                    return OrderVerdict(relation, delta, Status.FALSIFIED, witness, float(d[c]))
                undecided = True
            elif enc.status != "certified":
                undecided = True
        if not undecided:
            return OrderVerdict(relation, delta, Status.CERTIFIED, None, margin, {"spacing": h})
        h /= 2
        m = _axis_points(delta, h)
        if h < min_spacing * (1 - 1e-12) or m**n > max_points:
            return OrderVerdict(relation, delta, Status.INCONCLUSIVE, None, margin, {"spacing": 2 * h})


def smallest_certified_delta(k_mu: Kernel, k_nu: Kernel, levels: int = 10, **kwargs) -> float | None:
    """Smallest ``delta`` on the ladder ``0, 1/2, 3/4, ..., 1 - 2^-levels`` with a certified germ order."""
    for j in range(levels + 1):
        delta = 1.0 - 2.0**-j if j else 0.0
        if order_check_grid(k_mu, k_nu, delta, **kwargs).certified:
            return delta
    return None


# -- stochastic order ---------------------------------------------------------


def _atoms(law):
    merged = {}
    for cfg, p in law.support:
        if p > 0:
            merged[cfg] = merged.get(cfg, 0.0) + p
    return list(merged.items())


def stochastic_order_check(law_mu, law_nu) -> tuple[OrderVerdict, CouplingCertificate | None]:
    """Decide ``mu >= nu`` in the stochastic order for two explicit laws.

    Mass flows from each ``nu`` atom ``g`` to the ``mu`` atoms ``f >= g``.
    The order holds iff the maximum flow carries all of ``nu``.  Otherwise the
    ``nu`` atoms on the source side of a minimum cut generate an upper set
    ``U`` with ``mu(U) < nu(U)``, which is returned as witness.

    Raises
    ------
    UnsupportedVariant
        If either law is not an :class:`ExplicitLaw`.
    """
    if not isinstance(law_mu, ExplicitLaw) or not isinstance(law_nu, ExplicitLaw):
        raise UnsupportedVariant("stochastic order checks need explicit laws")
    mu, nu = _atoms(law_mu), _atoms(law_nu)
    g = nx.DiGraph()
    g.add_node("s")
    g.add_node("t")
    for j, (cfg, p) in enumerate(nu):
        g.add_edge("s", ("nu", j), capacity=p)
    for i, (cfg, p) in enumerate(mu):
        g.add_edge(("mu", i), "t", capacity=p)
    for j, (gc, _) in enumerate(nu):
        for i, (fc, _) in enumerate(mu):
            if fc.dominates(gc):
                g.add_edge(("nu", j), ("mu", i))
    value, flow = nx.maximum_flow(g, "s", "t", flow_func=nx.algorithms.flow.edmonds_karp)
    total_nu = math.fsum(p for _, p in nu)
    margin = value - total_nu
    if margin >= -FLOW_TOL:
        joint = []
        for j, (gc, _) in enumerate(nu):
            for (_, i), v in flow[("nu", j)].items():
                if v > 0:
                    joint.append((mu[i][0], gc, float(v)))
        up = [math.fsum(m for f, _, m in joint if f == cfg) for cfg, _ in mu]
        down = [math.fsum(m for _, gg, m in joint if gg == cfg) for cfg, _ in nu]
        cert = CouplingCertificate(
            joint,
            max((abs(a - p) for a, (_, p) in zip(up, mu)), default=0.0),
            max((abs(a - p) for a, (_, p) in zip(down, nu)), default=0.0),
        )
        return OrderVerdict(Relation.STOCHASTIC, 0.0, Status.CERTIFIED, None, min(margin, 0.0)), cert
    # source side of the residual graph (tolerant of float dust)
    seen = {"s"}
    stack = ["s"]
    while stack:
        u = stack.pop()
        for v in g.successors(u):
            cap = g[u][v].get("capacity", math.inf)
            if v not in seen and cap - flow[u][v] > 1e-13:
                seen.add(v)
                stack.append(v)
        for v in g.predecessors(u):
            if v not in seen and flow[v][u] > 1e-13:
                seen.add(v)
                stack.append(v)
    gens = [nu[j][0] for (tag, j) in (n for n in seen if isinstance(n, tuple)) if tag == "nu"]
    mu_up = math.fsum(p for f, p in mu if any(f.dominates(gc) for gc in gens))
    nu_up = math.fsum(p for gc, p in nu if any(gc.dominates(h) for h in gens))
    witness = {
        "upper_set_generators": [_cfg_dict(c) for c in sorted(gens, key=lambda c: (c.size, c.entries))],
        "mu_mass": mu_up,
        "nu_mass": nu_up,
    }
    return OrderVerdict(Relation.STOCHASTIC, 0.0, Status.FALSIFIED, witness, mu_up - nu_up), None


def _cfg_dict(c: Config) -> dict:
    d = {str(s): k for s, k in c.entries}
    if c.outside:
        d["@outside"] = c.outside
    return d


def stochastic_order_kernels(k_mu: Kernel, k_nu: Kernel):
    """Site-by-site stochastic order; returns the combined verdict and per-site certificates."""
    if k_mu.size != k_nu.size:
        raise ValueError("kernels must share the site space")
    certs = {}
    margin = 0.0
    for x, (a, b) in enumerate(zip(k_mu.laws, k_nu.laws)):
        v, cert = stochastic_order_check(a, b)
        if v.falsified:
            v.witness = {"site": k_mu.labels[x], **v.witness}
            return v, certs
        certs[k_mu.labels[x]] = cert
        margin = min(margin, v.margin)
    return OrderVerdict(Relation.STOCHASTIC, 0.0, Status.CERTIFIED, None, margin), certs


# -- consistency reports --------------------------------------------------------


def order_chain_test(k_mu: Kernel, k_nu: Kernel, seed: int = 0, deltas: Iterable[float] = (0.25, 0.5)) -> dict:
    """Check the implications stochastic => pgf => germ on one pair.

    A violation is a certified stronger order whose weaker consequence is
    falsified or left inconclusive.  ``seed`` draws one extra ``delta`` in
    ``[0, 0.95)`` so repeated calls probe different boxes.
    """
    rng = np.random.default_rng(seed)
    deltas = sorted(set(float(d) for d in deltas) | {round(float(rng.uniform(0.0, 0.95)), 6)})
    stoch, _ = stochastic_order_kernels(k_mu, k_nu)
    pgf = order_check_grid(k_mu, k_nu, 0.0)
    germ = {d: order_check_grid(k_mu, k_nu, d) for d in deltas}
    violations = []
    if stoch.certified and not pgf.certified:
        violations.append(f"stochastic certified but pgf {pgf.status.value}")
    if pgf.certified:
        for d, v in germ.items():
            if not v.certified:
                violations.append(f"pgf certified but germ at delta={d} {v.status.value}")
    return {
        "stochastic": stoch.to_dict(),
        "pgf": pgf.to_dict(),
        "germ": [v.to_dict() for v in germ.values()],
        "violations": violations,
        "ok": not violations,
    }


def _is_multinomial_pair(k_mu: Kernel, k_nu: Kernel) -> bool:
    fam = (MultinomialLaw, GeometricLaw)
    if k_mu.size != k_nu.size:
        return False
    return all(
        isinstance(a, fam) and isinstance(b, fam) and _same_dispersal(a.dispersal, b.dispersal)
        for a, b in zip(k_mu.laws, k_nu.laws)
    )


def certify_order(k_mu: Kernel, k_nu: Kernel, delta: float) -> OrderVerdict:
    """Germ (``delta > 0``) or pgf order by the cheapest applicable method."""
    if _is_multinomial_pair(k_mu, k_nu):
        v = germ_check_multinomial(k_mu, k_nu, delta)
        if delta == 0.0:
            v.relation = Relation.PGF
        return v
    return order_check_grid(k_mu, k_nu, delta)


def theorem_inequality_check(
    k_mu: Kernel, k_nu: Kernel, delta: float, A: Iterable, tol: float = 1e-8, verdict: OrderVerdict | None = None
) -> dict:
    """Compare local extinction vectors of an ordered pair.

    With ``G_mu <= G_nu`` on ``[delta,1]^N`` the vectors must satisfy
    ``q_mu(x,A) <= q_nu(x,A) (1 - delta) + delta``.  When ``nu`` survives
    strongly in ``A`` (``sup q_nu(.,X) < 1`` and ``q_nu(.,A) = q_nu(.,X)``)
    the report also checks that ``mu`` does.

    Raises
    ------
    OrderNotCertified
        If the order at ``delta`` is not certified.
    """
    _check_delta(delta)
    if verdict is None:
        verdict = certify_order(k_mu, k_nu, delta)
    if not verdict.certified:
        raise OrderNotCertified(f"order at delta={delta} is {verdict.status.value}")
    A = list(A)
    qm = q_local(k_mu, A, with_bracket=False).q_local
    qn = q_local(k_nu, A, with_bracket=False).q_local
    bound = qn * (1.0 - delta) + delta
    excess = qm - bound
    bad = [k_mu.labels[i] for i in np.flatnonzero(excess > tol)]
    report = {
        "delta": float(delta),
        "A": [k_mu.labels[i] for i in k_mu.sites(A)],
        "q_mu": qm.tolist(),
        "q_nu": qn.tolist(),
        "max_excess": float(excess.max()),
        "violations": bad,
        "holds": not bad,
    }
    gn = q_global(k_nu).vector
    if gn.max() < 1.0 - tol and np.max(np.abs(qn - gn)) <= tol:
        gm = q_global(k_mu).vector
        strong = bool(gm.max() < 1.0 - tol and np.max(np.abs(qm - gm)) <= tol)
        report["strong_survival"] = {"nu": True, "mu": strong}
        report["holds"] = report["holds"] and strong
    return report


def geometric_order_equivalence(k_mu: Kernel, k_nu: Kernel, delta: float = 0.5) -> dict:
    """For geometric kernels: entrywise ``M_mu >= M_nu`` iff pgf order iff germ order.

    Raises
    ------
    UnsupportedVariant
        If any law is not geometric.
    """
    for k in (k_mu, k_nu):
        if not all(isinstance(law, GeometricLaw) for law in k.laws):
            raise UnsupportedVariant("geometric_order_equivalence needs geometric kernels")
    mm, mn = mean_matrix(k_mu), mean_matrix(k_nu)
    gap = min(float((mm.entries - mn.entries).min()), float((mm.outside - mn.outside).min()))
    moments = gap >= -1e-12
    pgf = order_check_grid(k_mu, k_nu, 0.0)
    germ = order_check_grid(k_mu, k_nu, delta)
    want = Status.CERTIFIED if moments else Status.FALSIFIED
    consistent = pgf.status is want and germ.status is want
    return {
        "moments": {"holds": moments, "margin": gap},
        "pgf": pgf.to_dict(),
        "germ": germ.to_dict(),
        "consistent": consistent,
    }


# -- random pairs ------------------------------------------------------------------


def _merge(pairs):
    out = {}
    for cfg, p in pairs:
        out[cfg] = out.get(cfg, 0.0) + p
    return tuple(sorted(out.items(), key=lambda cp: (cp[0].size, cp[0].entries)))


def random_dominated_pair(rng: np.random.Generator, n_sites: int = 2, atoms: int = 4, max_count: int = 3):
    """Random explicit kernels ``(mu, nu)`` with ``mu >= nu`` stochastically at every site.

    ``nu`` is obtained from ``mu`` by splitting each atom and thinning the
    children counts of every piece binomially, which is an ordered coupling.
    """
    space = SiteSpace(tuple(f"s{i}" for i in range(n_sites)))
    mus, nus = [], []
    for _ in range(n_sites):
        k = int(rng.integers(1, atoms + 1))
        cfgs = [Config.from_counts(rng.integers(0, max_count + 1, size=n_sites)) for _ in range(k)]
        w = rng.dirichlet(np.ones(k))
        mu = _merge(zip(cfgs, w))
        lower = []
        for cfg, p in mu:
            r = int(rng.integers(1, 3))
            for piece in p * rng.dirichlet(np.ones(r)):
                keep = rng.uniform()
                dense = cfg.dense(n_sites)
                lower.append((Config.from_counts(rng.binomial(dense, keep)), piece))
        nu = _merge(lower)
        mus.append(ExplicitLaw(_renormalize(mu)))
        nus.append(ExplicitLaw(_renormalize(nu)))
    return Kernel(space, tuple(mus)), Kernel(space, tuple(nus))


def _renormalize(pairs):
    total = math.fsum(p for _, p in pairs)
    return tuple((c, p / total) for c, p in pairs)


def _spectral_radius(k: Kernel) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mean_matrix(k).entries))))


def random_germ_pair(rng: np.random.Generator, n_sites: int = 5, delta: float = 0.0, max_total: int = 4, tries: int = 10_000):
    """Random multinomial kernels with a shared dispersal and a certified germ order at ``delta``.

    Half of the draws (by coin flip) build ``mu`` by pushing mass of ``nu``'s
    total-count pmf upwards, which gives the pgf order; the rest draw ``mu``
    freely and keep it only when the order certifies.  Pairs whose mean
    matrices are close to critical are rejected so fixed-point iterations
    converge quickly.  Returns ``(mu, nu, verdict)``.
    """
    space = SiteSpace(tuple(f"s{i}" for i in range(n_sites)))
    for _ in range(tries):
        disp = [Dispersal.from_row(rng.dirichlet(np.full(n_sites, 0.7))) for _ in range(n_sites)]
        nu_pmf, mu_pmf = [], []
        for _x in range(n_sites):
            p = rng.dirichlet(np.ones(max_total + 1))
            if rng.uniform() < 0.5:
                q = p.copy()
                for j in range(max_total):
                    moved = q[j] * rng.uniform(0, 0.6)
                    q[j] -= moved
                    q[j + 1] += moved
            else:
                q = rng.dirichlet(np.ones(max_total + 1))
            nu_pmf.append(p)
            mu_pmf.append(q)

        def build(pmfs):
            laws = [MultinomialLaw(tuple(enumerate(pm / pm.sum())), d) for pm, d in zip(pmfs, disp)]
            return Kernel(space, tuple(laws))

        k_mu, k_nu = build(mu_pmf), build(nu_pmf)
        if any(abs(_spectral_radius(k) - 1.0) < 0.15 for k in (k_mu, k_nu)):
            continue
        v = germ_check_multinomial(k_mu, k_nu, delta)
        if v.certified:
            return k_mu, k_nu, v
    raise RuntimeError("no certified pair found")

