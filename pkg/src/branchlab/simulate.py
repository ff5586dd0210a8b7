"""Seeded Monte Carlo simulation of branching processes.

Replicas are simulated in batches as a dense ``(R, N)`` array of particle
counts.  One generation applies each site's law to all of its particles at
once: explicit laws by a multinomial draw over the support, multinomial
laws by a multinomial draw of total counts followed by a multinomial
placement, geometric laws by a negative binomial total followed by the same
placement.

Random streams are attached to fixed-size chunks of replicas: chunk ``c``
of a run with master seed ``s`` uses ``Philox(SeedSequence([s, c]))``.
Results therefore do not depend on how many worker threads process the
chunks (set ``BRANCHLAB_THREADS`` to cap them).
"""

from __future__ import annotations

import io
import math
import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import InvalidKernelError, NoMetric, PreconditionUnverified
from .genfun import eval_G, eval_G_iterate, q_local
from .kernel import Boundary, Config, ExplicitLaw, Kernel, MultinomialLaw, validate

__all__ = [
    "StopReason",
    "Trajectory",
    "McEstimate",
    "MartingaleReport",
    "DisplacementSeries",
    "make_rng",
    "step",
    "run",
    "mc_extinction",
    "martingale_test",
    "displacement_stats",
    "growth_test",
    "trajectory_csv",
]

CHUNK = 4096


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for substream ``stream`` of master seed ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def thread_count() -> int:
    env = os.environ.get("BRANCHLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, min(8, os.cpu_count() or 1))


def _chunks(replicas: int, chunk: int = CHUNK):
    return [(c, min(chunk, replicas - c * chunk)) for c in range(math.ceil(replicas / chunk))]


def _map_chunks(fn, chunks):
    workers = min(thread_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


class _Stepper:
    """Precomputed sampling tables for one kernel."""

    def __init__(self, kernel: Kernel):
        rep = validate(kernel)
        if not rep.ok:
            raise InvalidKernelError(rep)
        self.n = kernel.size
        self.keep_outside = kernel.boundary is Boundary.SURVIVE_OUTSIDE
        self.tables = []
        for law in kernel.laws:
            if isinstance(law, ExplicitLaw):
                probs = np.array([p for _, p in law.support])
                mat = np.array([c.dense(self.n) for c, _ in law.support], dtype=np.int64).reshape(len(probs), self.n)
                out = np.array([c.outside for c, _ in law.support], dtype=np.int64)
                self.tables.append(("explicit", probs / probs.sum(), mat, out))
            else:
                sites = np.array([s for s, _ in law.dispersal.entries], dtype=np.int64)
                row = np.array([p for _, p in law.dispersal.entries] + [law.dispersal.outside])
                row = row / row.sum()
                if isinstance(law, MultinomialLaw):
                    pmf = law.pmf_array()
                    self.tables.append(("multinomial", pmf / pmf.sum(), sites, row))
                else:
                    self.tables.append(("geometric", 1.0 / (1.0 + law.mean), sites, row))

    def advance(self, counts: np.ndarray, outside: np.ndarray, rng: np.random.Generator):
        """One generation for every row of ``counts``; returns new ``(counts, outside)``."""
        new = np.zeros_like(counts)
        born_out = np.zeros(len(counts), dtype=np.int64)
        for x in range(self.n):
            col = counts[:, x]
            rows = np.flatnonzero(col)
            if rows.size == 0:
                continue
            c = col[rows]
            kind, a, b, d = self.tables[x]
            if kind == "explicit":
                draws = rng.multinomial(c, a)
                new[rows] += draws @ b
                born_out[rows] += draws @ d
                continue
            if kind == "multinomial":
                totals = rng.multinomial(c, a) @ np.arange(len(a))
            else:
                totals = rng.negative_binomial(c, a)
            if len(d) == 1:
                if d[0] > 0 and len(b):
                    new[rows, b[0]] += totals
                else:
                    born_out[rows] += totals
                continue
            placed = rng.multinomial(totals, d)
            new[rows[:, None], b[None, :]] += placed[:, :-1]
            born_out[rows] += placed[:, -1]
        if self.keep_outside:
            outside = outside + born_out
        else:
            outside = np.zeros_like(outside)
        return new, outside


_STEPPERS: "weakref.WeakKeyDictionary[Kernel, _Stepper]" = weakref.WeakKeyDictionary()


def _stepper(kernel: Kernel) -> _Stepper:
    st = _STEPPERS.get(kernel)
    if st is None:
        st = _STEPPERS[kernel] = _Stepper(kernel)
    return st


def step(kernel: Kernel, config: Config, rng: np.random.Generator) -> Config:
    """Next generation of a single configuration.

    Outside children are dropped under ``kill`` and added to the permanent
    ``outside`` counter under ``survive_outside``.
    """
    st = _stepper(kernel)
    counts = config.dense(kernel.size)[None, :]
    out = np.array([config.outside], dtype=np.int64)
    new, out = st.advance(counts, out, rng)
    return Config.from_counts(new[0], int(out[0]))


class StopReason(str, Enum):
    HORIZON = "horizon"
    EXTINCT = "extinct"
    POPULATION_CAP = "population_cap"


@dataclass
class Trajectory:
    generations: list
    stopped_reason: StopReason
    seed: dict
    labels: tuple = ()
    metric: np.ndarray | None = None

    def to_dict(self) -> dict:
        def cfg(c: Config):
            d = {self.labels[s]: k for s, k in c.entries}
            if c.outside:
                d["@outside"] = c.outside
            return d

        return {
            "generations": [cfg(c) for c in self.generations],
            "stopped_reason": self.stopped_reason.value,
            "seed": self.seed,
        }


def run(kernel: Kernel, init: Config, horizon: int, pop_cap: int = 10**6, rng_seed: int = 0) -> Trajectory:
    """Simulate one trajectory until extinction, ``horizon`` or ``pop_cap``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = make_rng(rng_seed, 0)
    gens = [init]
    reason = StopReason.HORIZON
    cur = init
    for _ in range(horizon):
        if cur.size == 0:
            reason = StopReason.EXTINCT
            break
        cur = step(kernel, cur, rng)
        gens.append(cur)
        if cur.size > pop_cap:
            reason = StopReason.POPULATION_CAP
            break
    else:
        if cur.size == 0:
            reason = StopReason.EXTINCT
    return Trajectory(gens, reason, {"master_seed": int(rng_seed), "stream": 0}, kernel.labels, kernel.space.metric)


# -- batched replicas -------------------------------------------------------------


@dataclass
class _Batch:
    dead: np.ndarray  # no particle left inside the truncation
    capped: np.ndarray
    escaped: np.ndarray  # dead inside but with outside survivors that count as visits to A
    last_visit: np.ndarray
    stop_gen: np.ndarray
    max_pop: np.ndarray  # (R, len(checkpoints)), running maximum of the population


def _simulate_batch(kernel, init: Config, size, horizon, pop_cap, a_mask, rng, checkpoints=(), outside_in_A=False) -> _Batch:
    # Outside particles never reproduce, so a row stops once its inside is empty.
    st = _stepper(kernel)
    counts = np.tile(init.dense(kernel.size), (size, 1))
    outside = np.full(size, init.outside, dtype=np.int64)
    capped = np.zeros(size, bool)
    stop_gen = np.full(size, horizon, dtype=np.int64)
    visits0 = counts[:, a_mask].sum(axis=1) > 0
    if outside_in_A:
        visits0 |= outside > 0
    last_visit = np.where(visits0, 0, -1).astype(np.int64)
    running = counts.sum(axis=1) + outside
    max_pop = np.zeros((size, len(checkpoints)), dtype=np.int64)
    inside = counts.sum(axis=1)
    dead = inside == 0
    stop_gen[dead] = 0
    active = np.flatnonzero(~dead)
    cps = {g: i for i, g in enumerate(checkpoints)}
    for g in range(1, horizon + 1):
        if active.size:
            c, o = st.advance(counts[active], outside[active], rng)
            counts[active] = c
            outside[active] = o
            inside = c.sum(axis=1)
            total = inside + o
            running[active] = np.maximum(running[active], total)
            hit = c[:, a_mask].sum(axis=1) > 0
            if outside_in_A:
                hit |= o > 0
            last_visit[active[hit]] = g
            died = inside == 0
            over = total > pop_cap
            dead[active[died]] = True
            capped[active[over & ~died]] = True
            stop_gen[active[died | over]] = g
            active = active[~(died | over)]
        if g in cps:
            max_pop[:, cps[g]] = running
    escaped = dead & (outside > 0) if outside_in_A else np.zeros(size, bool)
    return _Batch(dead, capped, escaped, last_visit, stop_gen, max_pop)


def _classify(b: _Batch, horizon: int, margin: int):
    recent = (b.last_visit >= 0) & (b.stop_gen - b.last_visit < margin)
    surviving = b.escaped | (b.capped & recent)
    extinct = (b.dead & ~b.escaped) | (~b.dead & ~b.capped & ~recent)
    undecided = ~(extinct | surviving)
    return extinct, surviving, undecided


def _outside_counts(kernel: Kernel, a_mask, outside_in_A) -> bool:
    if kernel.boundary is not Boundary.SURVIVE_OUTSIDE:
        return False
    return bool(a_mask.all()) if outside_in_A is None else bool(outside_in_A)


@dataclass
class McEstimate:
    """Monte Carlo extinction-in-``A`` estimate over decided replicas."""

    point: float
    std_error: float
    replicas: int
    classification_counts: dict
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "std_error": self.std_error,
            "replicas": self.replicas,
            "classification_counts": dict(self.classification_counts),
            "seed": self.seed,
        }


def mc_extinction(
    kernel: Kernel,
    x,
    A: Iterable,
    replicas: int,
    horizon: int = 100,
    pop_cap: int = 10_000,
    last_visit_margin: int = 10,
    seed: int = 0,
    outside_in_A: bool | None = None,
) -> McEstimate:
    """Estimate ``q(x, A)`` from ``replicas`` independent runs started from one particle at ``x``.

    A replica counts as extinct in ``A`` when it dies, or when it reaches
    the horizon below ``pop_cap`` without visiting ``A`` during the last
    ``last_visit_margin`` generations.  It counts as surviving when its
    population exceeds ``pop_cap`` shortly after a visit to ``A`` (or, under
    ``survive_outside``, once a particle has left the truncation).  Anything
    else is undecided and excluded from the estimate.

    Particles that leave the truncation under ``survive_outside`` count as
    staying in ``A`` forever when ``outside_in_A`` holds (by default when
    ``A`` is the whole truncation), matching :func:`branchlab.genfun.q_local`.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    xi = kernel.space.index(x)
    a_mask = np.zeros(kernel.size, bool)
    a_mask[list(kernel.sites(A))] = True
    flag = _outside_counts(kernel, a_mask, outside_in_A)
    init = Config(((xi, 1),))

    def work(chunk):
        c, size = chunk
        b = _simulate_batch(kernel, init, size, horizon, pop_cap, a_mask, make_rng(seed, c), (), flag)
        e, s, u = _classify(b, horizon, last_visit_margin)
        return int(e.sum()), int(s.sum()), int(u.sum())

    res = _map_chunks(work, _chunks(replicas))
    ext = sum(r[0] for r in res)
    sur = sum(r[1] for r in res)
    und = sum(r[2] for r in res)
    decided = ext + sur
    if decided:
        p = ext / decided
        se = math.sqrt(p * (1 - p) / decided)
    else:
        p, se = math.nan, math.nan
    counts = {"extinct_in_A": ext, "surviving_in_A": sur, "undecided": und}
    return McEstimate(p, se, replicas, counts, int(seed))


@dataclass
class MartingaleReport:
    z: list
    k: int
    empirical_mean: float
    predicted: float
    z_score: float
    std_error: float
    replicas: int
    W_samples: list = field(repr=False, default_factory=list)
    seed: int = 0
    capped: int = 0

    def to_dict(self, samples: bool = False) -> dict:
        d = {
            "z": self.z,
            "k": self.k,
            "empirical_mean": self.empirical_mean,
            "predicted": self.predicted,
            "z_score": self.z_score,
            "std_error": self.std_error,
            "replicas": self.replicas,
            "capped": self.capped,
            "seed": self.seed,
        }
        if samples:
            d["W_samples"] = self.W_samples
        return d


def predicted_moment(kernel: Kernel, init: Config, z, k: int) -> float:
    """``prod_x G^k(z)(x)^init(x)``, outside particles weighted by the boundary value."""
    gk = eval_G_iterate(kernel, z, k)
    val = math.prod(float(gk[s]) ** c for s, c in init.entries)
    return val * kernel.outside_value**init.outside


def martingale_test(
    kernel: Kernel, init: Config, z, k: int, replicas: int, seed: int = 0, pop_cap: int = 10**6
) -> MartingaleReport:
    """Compare the sample mean of ``z^eta_k`` with ``G^k(z)^eta_0``.

    A replica whose population passes ``pop_cap`` at generation ``m < k`` is
    stopped there and scored with ``G^(k-m)(z)^eta_m``, its conditional mean
    given the first ``m`` generations.  The number of such replicas is
    reported as ``capped``; with ``z < 1`` their scores are negligible.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = np.full(kernel.size, float(z))
    if np.any(z < 0) or np.any(z > 1):
        raise ValueError("z must lie in [0,1]^N")
    st = _stepper(kernel)
    zout = kernel.outside_value
    # ahead[j] = G^j(z), used to score capped replicas
    ahead = [z]
    for _ in range(k):
        ahead.append(eval_G(kernel, ahead[-1]))

    def score(counts, out, j):
        with np.errstate(under="ignore"):
            return np.prod(ahead[j][None, :] ** counts, axis=1) * zout**out

    def work(chunk):
        c, size = chunk
        rng = make_rng(seed, c)
        counts = np.tile(init.dense(kernel.size), (size, 1))
        out = np.full(size, init.outside, dtype=np.int64)
        live = np.arange(size)
        w = np.empty(size)
        capped = 0
        for g in range(k):
            big = counts.sum(axis=1) + out > pop_cap
            if big.any():
                w[live[big]] = score(counts[big], out[big], k - g)
                capped += int(big.sum())
                keep = ~big
                counts, out, live = counts[keep], out[keep], live[keep]
            counts, out = st.advance(counts, out, rng)
        w[live] = score(counts, out, 0)
        return w, capped

    res = _map_chunks(work, _chunks(replicas))
    w = np.concatenate([r[0] for r in res])
    capped = sum(r[1] for r in res)
    emp = math.fsum(w.tolist()) / replicas
    pred = predicted_moment(kernel, init, z, k)
    se = float(np.std(w, ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    if se > 0:
        zs = (emp - pred) / se
    else:
        zs = 0.0 if abs(emp - pred) <= 1e-12 else math.copysign(math.inf, emp - pred)
    return MartingaleReport(z.tolist(), int(k), emp, pred, zs, se, int(replicas), w.tolist(), int(seed), capped)


@dataclass
class DisplacementSeries:
    M: list
    m: list
    on_extinct: float = 0.0

    def to_dict(self) -> dict:
        return {"M": self.M, "m": self.m}


def displacement_stats(trajectory: Trajectory, x0) -> DisplacementSeries:
    """Largest and smallest distance from ``x0`` among occupied sites, per generation.

    Both are 0 in generations without particles inside the truncation.
    """
    if trajectory.metric is None:
        raise NoMetric("site space has no metric")
    i0 = x0 if isinstance(x0, (int, np.integer)) else trajectory.labels.index(str(x0))
    d = trajectory.metric[i0]
    big, small = [], []
    for cfg in trajectory.generations:
        occ = [s for s, _ in cfg.entries]
        if occ:
            big.append(float(d[occ].max()))
            small.append(float(d[occ].min()))
        else:
            big.append(0.0)
            small.append(0.0)
    return DisplacementSeries(big, small)


def growth_test(
    kernel: Kernel,
    A: Iterable,
    replicas: int,
    horizon: int,
    seed: int = 0,
    x=None,
    thresholds=(10, 100, 1000),
    last_visit_margin: int = 10,
    min_q: float = 1e-8,
) -> dict:
    """Population growth on survival in ``A``.

    Requires ``inf_x q(x, A) > min_q`` (checked with :func:`q_local`).  Among
    replicas classified surviving in ``A``, reports for each threshold the
    fraction whose population has exceeded it by half the horizon and by the
    horizon.  The second fraction is never smaller than the first.

    Raises
    ------
    PreconditionUnverified
        If the infimum of ``q(., A)`` over the truncation is not above ``min_q``.
    """
    A = list(A)
    q = q_local(kernel, A, with_bracket=False).q_local
    if q.min() <= min_q:
        raise PreconditionUnverified(f"inf q(., A) = {q.min():.3g} is not above {min_q:g}")
    xi = int(np.argmin(q)) if x is None else kernel.space.index(x)
    a_mask = np.zeros(kernel.size, bool)
    a_mask[list(kernel.sites(A))] = True
    flag = _outside_counts(kernel, a_mask, None)
    init = Config(((xi, 1),))
    cap = 10 * max(thresholds)
    checkpoints = tuple(sorted({max(1, horizon // 2), horizon}))

    def work(chunk):
        c, size = chunk
        b = _simulate_batch(kernel, init, size, horizon, cap, a_mask, make_rng(seed, c), checkpoints, flag)
        _, s, _ = _classify(b, horizon, last_visit_margin)
        mp = b.max_pop[s]
        return int(s.sum()), [[int((mp[:, j] > t).sum()) for t in thresholds] for j in range(len(checkpoints))]

    res = _map_chunks(work, _chunks(replicas))
    surv = sum(r[0] for r in res)
    fractions = {}
    for j, g in enumerate(checkpoints):
        hits = [sum(r[1][j][i] for r in res) for i in range(len(thresholds))]
        fractions[str(g)] = {str(t): (h / surv if surv else None) for t, h in zip(thresholds, hits)}
    monotone = all(
        (fractions[str(checkpoints[0])][str(t)] or 0) <= (fractions[str(checkpoints[-1])][str(t)] or 0)
        for t in thresholds
    )
    return {
        "start": kernel.labels[xi],
        "inf_q": float(q.min()),
        "replicas": int(replicas),
        "surviving": surv,
        "fractions": fractions,
        "monotone": monotone,
        "seed": int(seed),
    }


def trajectory_csv(trajectory: Trajectory, x0=None) -> str:
    """Per-generation ``generation,total,occupied_sites,M,m`` table.

    ``M`` and ``m`` are left empty when the site space has no metric.
    """
    disp = None
    if trajectory.metric is not None:
        if x0 is None:
            first = trajectory.generations[0].entries
            x0 = first[0][0] if first else 0
        disp = displacement_stats(trajectory, x0)
    buf = io.StringIO()
    buf.write("generation,total,occupied_sites,M,m\n")
    for g, cfg in enumerate(trajectory.generations):
        big = repr(disp.M[g]) if disp else ""
        small = repr(disp.m[g]) if disp else ""
        buf.write(f"{g},{cfg.size},{len(cfg.entries)},{big},{small}\n")
    return buf.getvalue()
