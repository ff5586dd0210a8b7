"""Generating function evaluation and monotone fixed-point computations.

``G(z|x) = sum_f mu_x(f) prod_y z(y)^f(y)`` is evaluated in closed form for
every law type: a product expansion for explicit laws, ``phi_x(Pz(x))`` for
multinomial laws and ``1 / (1 + m_x (1 - Pz(x)))`` for geometric ones.  The
region beyond the truncation reads as ``1`` under the ``kill`` boundary and as
``0`` under ``survive_outside``.

Extinction vectors are monotone limits of iterates of ``G``:

* global extinction ``q(X) = lim G^k(0)``;
* local extinction ``q(A) = lim G^k(h)``, where ``h`` is the probability that
  the progeny of a particle never enters ``A``.  ``G^k(h)(x)`` is the
  probability that nobody visits ``A`` from generation ``k`` on, which
  increases to ``q(x, A)``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

import numpy as np
from scipy.sparse import csr_matrix

from .errors import DimensionMismatch, InvalidKernelError, NotConverged, OutOfRange
from .kernel import Boundary, ExplicitLaw, GeometricLaw, Kernel, MultinomialLaw, space_time, validate

__all__ = [
    "Direction",
    "IterationResult",
    "LocalExtinctionResult",
    "DeltaCondition",
    "eval_G",
    "eval_G_iterate",
    "eval_phi",
    "iterate",
    "q_global",
    "avoidance_vector",
    "q_local",
    "q_local_spacetime",
    "check_delta_condition",
    "residual",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 100_000


class _Evaluator:
    """Vectorised ``G`` for one kernel; accepts ``z`` of shape ``(B, N)``."""

    def __init__(self, kernel: Kernel):
        report = validate(kernel)
        if not report.ok:
            raise InvalidKernelError(report)
        n = kernel.size
        self.n = n
        self.zout = kernel.outside_value

        expl = [x for x, law in enumerate(kernel.laws) if isinstance(law, ExplicitLaw)]
        self.expl_sites = np.array(expl, dtype=np.int64)
        cfg_prob, cfg_out, cfg_nonempty = [], [], []
        ent_site, ent_count, cfg_start, law_start = [], [], [], []
        for x in expl:
            law_start.append(len(cfg_prob))
            for cfg, p in kernel.laws[x].support:
                cfg_prob.append(p)
                cfg_out.append(cfg.outside)
                if cfg.entries:
                    cfg_nonempty.append(len(cfg_prob) - 1)
                    cfg_start.append(len(ent_site))
                    for s, c in cfg.entries:
                        ent_site.append(s)
                        ent_count.append(c)
        self.cfg_prob = np.array(cfg_prob)
        self.cfg_out_factor = self.zout ** np.array(cfg_out, dtype=float)
        self.cfg_nonempty = np.array(cfg_nonempty, dtype=np.int64)
        self.ent_site = np.array(ent_site, dtype=np.int64)
        self.ent_count = np.array(ent_count, dtype=float)
        self.cfg_start = np.array(cfg_start, dtype=np.int64)
        self.law_start = np.array(law_start, dtype=np.int64)

        disp = [x for x, law in enumerate(kernel.laws) if not isinstance(law, ExplicitLaw)]
        self.disp_sites = np.array(disp, dtype=np.int64)
        rows, cols, vals = [], [], []
        out = np.zeros(len(disp))
        for i, x in enumerate(disp):
            d = kernel.laws[x].dispersal
            for s, p in d.entries:
                rows.append(i)
                cols.append(s)
                vals.append(p)
            out[i] = d.outside
        self.P = csr_matrix((vals, (rows, cols)), shape=(len(disp), n))
        self.disp_const = out * (1.0 - self.zout)

        mult = [i for i, x in enumerate(disp) if isinstance(kernel.laws[x], MultinomialLaw)]
        geom = [i for i, x in enumerate(disp) if isinstance(kernel.laws[x], GeometricLaw)]
        self.mult_rows = np.array(mult, dtype=np.int64)
        self.geom_rows = np.array(geom, dtype=np.int64)
        if mult:
            pmfs = [kernel.laws[disp[i]].pmf_array() for i in mult]
            width = max(len(p) for p in pmfs)
            self.pmf = np.zeros((len(mult), width))
            for j, p in enumerate(pmfs):
                self.pmf[j, : len(p)] = p
        self.geom_mean = np.array([kernel.laws[disp[i]].mean for i in geom])

    def __call__(self, z: np.ndarray) -> np.ndarray:
        # Every branch works with deficits 1 - (...), so G(1) = 1 holds exactly
        # under kill even when a law's mass is off by rounding.
        b = z.shape[0]
        out = np.empty((b, self.n))
        if len(self.expl_sites):
            prods = np.tile(self.cfg_out_factor, (b, 1))
            if len(self.ent_site):
                powers = z[:, self.ent_site] ** self.ent_count
                prods[:, self.cfg_nonempty] *= np.multiply.reduceat(powers, self.cfg_start, axis=1)
            terms = self.cfg_prob * (1.0 - prods)
            out[:, self.expl_sites] = 1.0 - np.add.reduceat(terms, self.law_start, axis=1)
        if len(self.disp_sites):
            u = np.asarray(self.P @ (1.0 - z).T).T + self.disp_const
            np.clip(u, 0.0, 1.0, out=u)
            if len(self.mult_rows):
                tm = 1.0 - u[:, self.mult_rows]
                pw = np.ones_like(tm)
                acc = np.zeros_like(tm)
                for k in range(1, self.pmf.shape[1]):
                    pw *= tm
                    acc += self.pmf[:, k] * (1.0 - pw)
                out[:, self.disp_sites[self.mult_rows]] = 1.0 - acc
            if len(self.geom_rows):
                ug = u[:, self.geom_rows]
                out[:, self.disp_sites[self.geom_rows]] = 1.0 / (1.0 + self.geom_mean * ug)
        np.clip(out, 0.0, 1.0, out=out)
        return out


_cache: "weakref.WeakKeyDictionary[Kernel, _Evaluator]" = weakref.WeakKeyDictionary()


def _evaluator(kernel: Kernel) -> _Evaluator:
    ev = _cache.get(kernel)
    if ev is None:
        ev = _cache[kernel] = _Evaluator(kernel)
    return ev


def _G1(kernel: Kernel, z: np.ndarray) -> np.ndarray:
    return _evaluator(kernel)(z[None, :])[0]


def _as_vector(kernel: Kernel, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        z = np.full(kernel.size, float(z))
    if z.shape[-1] != kernel.size or z.ndim > 2:
        raise DimensionMismatch(f"expected trailing dimension {kernel.size}, got shape {z.shape}")
    if np.any(z < 0) or np.any(z > 1) or np.any(np.isnan(z)):
        raise OutOfRange("z must lie in [0,1]^N")
    return z


def eval_G(kernel: Kernel, z) -> np.ndarray:
    """Evaluate the generating function.

    Parameters
    ----------
    kernel : Kernel
    z : array_like
        Point of ``[0,1]^N``, or a batch of shape ``(B, N)``.  A scalar is
        broadcast to the constant vector.

    Returns
    -------
    ndarray
        ``G(z)`` with the same shape as ``z``.
    """
    z = _as_vector(kernel, z)
    if z.ndim == 1:
        return _G1(kernel, z)
    return _evaluator(kernel)(z)


def eval_G_iterate(kernel: Kernel, z, k: int) -> np.ndarray:
    """``G^(k)(z)``, the ``k``-fold composition."""
    z = _as_vector(kernel, z)
    ev = _evaluator(kernel)
    batch = z if z.ndim == 2 else z[None, :]
    for _ in range(k):
        batch = ev(batch)
    return batch if z.ndim == 2 else batch[0]


def eval_phi(kernel: Kernel, x, t: float) -> float:
    """Generating function of the total number of children of a particle at ``x``.

    Children placed outside the truncation are counted like any other, so this
    is ``sum_n rho_x(n) t^n``; it agrees with ``G(t 1 | x)`` whenever the law of
    ``x`` sends no mass outside.
    """
    if not 0.0 <= t <= 1.0:
        raise OutOfRange(f"t={t} not in [0,1]")
    law = kernel.laws[kernel.space.index(x)]
    if isinstance(law, GeometricLaw):
        return 1.0 / (1.0 + law.mean * (1.0 - t))
    pmf = law.total_pmf() if isinstance(law, ExplicitLaw) else law.pmf_array()
    return float(np.polynomial.polynomial.polyval(t, pmf))


def residual(kernel: Kernel, z) -> float:
    """Sup-norm of ``G(z) - z``."""
    z = _as_vector(kernel, z)
    return float(np.max(np.abs(_G1(kernel, z) - z)))


class Direction(str, Enum):
    UP = "up"
    DOWN = "down"
    NONE = "none"


@dataclass(frozen=True, eq=False)
class IterationResult:
    vector: np.ndarray
    iterations: int
    residual: float
    monotone_direction: Direction
    converged: bool
    trace: list | None = field(default=None, repr=False)

    def to_dict(self, labels=None) -> dict:
        d = {
            "vector": self.vector.tolist(),
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "direction": self.monotone_direction.value,
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d


def iterate(
    kernel: Kernel,
    z0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    keep_trace: bool = False,
) -> IterationResult:
    """Iterate ``z <- G(z)`` from ``z0`` until the sup-norm step drops below ``tol``.

    The direction is read off ``G(z0)`` against ``z0``: ``up`` when
    ``G(z0) >= z0`` (the iterates then increase), ``down`` when ``G(z0) <= z0``.

    Raises
    ------
    NotConverged
        After ``max_iter`` applications; the exception carries the partial result.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = _as_vector(kernel, z0).astype(float, copy=True)
    if z.ndim != 1:
        raise DimensionMismatch("iterate expects a single vector")
    ev = _evaluator(kernel)
    g = ev(z[None, :])[0]
    if np.all(g >= z):
        direction = Direction.UP
    elif np.all(g <= z):
        direction = Direction.DOWN
    else:
        direction = Direction.NONE
    trace = [z.copy()] if keep_trace else None
    it = 1
    while True:
        step = float(np.max(np.abs(g - z)))
        z = g
        if trace is not None:
            trace.append(z.copy())
        g = ev(z[None, :])[0]
        res = float(np.max(np.abs(g - z)))
        if step < tol and res <= tol:
            return IterationResult(z, it, res, direction, True, trace)
        if it >= max_iter:
            partial = IterationResult(z, it, res, direction, False, trace)
            raise NotConverged(f"no convergence after {it} iterations (residual {res:.3g})", partial)
        it += 1


def q_global(kernel: Kernel, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> IterationResult:
    """Global extinction probability vector, the smallest fixed point of ``G``."""
    return iterate(kernel, np.zeros(kernel.size), tol, max_iter)


def _site_mask(kernel: Kernel, A: Iterable) -> np.ndarray:
    idx = kernel.sites(A)
    if not idx:
        raise ValueError("site set A must be nonempty")
    mask = np.zeros(kernel.size, dtype=bool)
    mask[list(idx)] = True
    return mask


def _effective_kernel(kernel: Kernel, A, outside_in_A: bool | None) -> Kernel:
    # Under survive_outside, escaped particles stand for the untruncated tail.
    # They count as visiting A only when A stands for a set containing that
    # tail, by default when A is the whole truncation.
    if kernel.boundary is Boundary.SURVIVE_OUTSIDE:
        if outside_in_A is None:
            outside_in_A = len(kernel.sites(A)) == kernel.size
        if not outside_in_A:
            return kernel.with_boundary(Boundary.KILL)
    return kernel


def avoidance_vector(
    kernel: Kernel,
    A: Iterable,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    outside_in_A: bool | None = None,
):
    """Probability that the progeny of one particle (itself included) never enters ``A``.

    Decreasing limit of ``h_{m+1}(x) = 1(x not in A) G(h_m | x)`` from ``h_0 = 1(. not in A)``.
    See :func:`q_local` for ``outside_in_A``.
    """
    A = list(A)
    kernel = _effective_kernel(kernel, A, outside_in_A)
    outside_a = (~_site_mask(kernel, A)).astype(float)
    ev = _evaluator(kernel)
    h = outside_a.copy()
    for _ in range(max_iter):
        nxt = outside_a * ev(h[None, :])[0]
        step = float(np.max(h - nxt))
        h = nxt
        if step < tol:
            return h
    raise NotConverged("avoidance iteration did not converge", h)


@dataclass(frozen=True, eq=False)
class LocalExtinctionResult:
    q_local: np.ndarray
    k_used: int
    h: np.ndarray
    bracket: tuple
    increment: float
    residual: float

    def to_dict(self, labels=None) -> dict:
        d = {
            "vector": self.q_local.tolist(),
            "iterations": self.k_used,
            "residual": self.residual,
            "last_increment": self.increment,
            "avoidance": self.h.tolist(),
            "bracket": [self.bracket[0].tolist(), self.bracket[1].tolist()],
            "converged": True,
            "direction": Direction.UP.value,
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d


def _q_local_single(kernel, A, k_max, tol, outside_in_A=None):
    kernel = _effective_kernel(kernel, A, outside_in_A)
    h = avoidance_vector(kernel, A, tol, k_max)
    ev = _evaluator(kernel)
    z = h
    for k in range(1, k_max + 1):
        nxt = ev(z[None, :])[0]
        inc = float(np.max(np.abs(nxt - z)))
        z = nxt
        if inc < tol:
            res = float(np.max(np.abs(ev(z[None, :])[0] - z)))
            return z, k, h, inc, res
    raise NotConverged(f"local extinction iteration did not stabilise within k_max={k_max}", z)


def q_local(
    kernel: Kernel,
    A: Iterable,
    k_max: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    with_bracket: bool = True,
    outside_in_A: bool | None = None,
) -> LocalExtinctionResult:
    """Probability of extinction in ``A``: ``lim_k G^k(h)`` with ``h`` the avoidance vector.

    Parameters
    ----------
    outside_in_A : bool, optional
        Only used under ``survive_outside``: whether particles that left the
        truncation count as visiting ``A`` forever.  Defaults to ``True``
        exactly when ``A`` is the whole truncation.  Under ``kill`` they
        never visit ``A``.

    Notes
    -----
    ``bracket`` holds two extreme readings of the particles that leave the
    truncation: they visit ``A`` forever (lower) or never again (upper).
    The countable-space answer lies between them.  With no mass leaving the
    truncation both entries equal ``q_local``.
    """
    A = list(A)
    q, k, h, inc, res = _q_local_single(kernel, A, k_max, tol, outside_in_A)
    if with_bracket and kernel.has_outside_mass:
        lower = _q_local_single(kernel.with_boundary(Boundary.SURVIVE_OUTSIDE), A, k_max, tol, True)[0]
        upper = _q_local_single(kernel.with_boundary(Boundary.KILL), A, k_max, tol)[0]
        bracket = (lower, upper)
    else:
        bracket = (q, q)
    return LocalExtinctionResult(q, k, h, bracket, inc, res)


def q_local_spacetime(
    kernel: Kernel,
    A: Iterable,
    k: int,
    horizon: int | None = None,
    tol: float = DEFAULT_TOL,
    outside_in_A: bool | None = None,
):
    """Local extinction through the space-time layering.

    Builds the space-time kernel on ``X x {0..horizon}`` and returns, for every
    ``x``, the probability that a particle at ``(x, 0)`` has no descendant in
    ``A x {k..horizon}``.  For ``k`` and ``horizon - k`` large this tends to ``q(x, A)``.
    """
    horizon = 2 * k if horizon is None else horizon
    if not 0 <= k <= horizon:
        raise ValueError("need 0 <= k <= horizon")
    A = list(A)
    st = space_time(_effective_kernel(kernel, A, outside_in_A), horizon)
    n = kernel.size
    targets = [t * n + a for t in range(k, horizon + 1) for a in kernel.sites(A)]
    h = avoidance_vector(st, targets, tol, max_iter=horizon + 10, outside_in_A=True)
    return h[:n]


class DeltaCondition(NamedTuple):
    holds: bool
    n: int | None
    sup_bound: float | None


def check_delta_condition(kernel: Kernel, delta: float, n_max: int = 100, atol: float = 1e-14) -> DeltaCondition:
    """Search for the smallest ``n <= n_max`` with ``G^(n)(delta 1) <= delta 1``.

    When found, ``sup_x q(x, X) <= delta``.  ``atol`` absorbs rounding in the
    comparison.
    """
    if not 0.0 <= delta < 1.0:
        raise OutOfRange("delta must lie in [0,1)")
    ev = _evaluator(kernel)
    z = np.full(kernel.size, float(delta))
    for n in range(1, n_max + 1):
        z = ev(z[None, :])[0]
        if np.all(z <= delta + atol):
            return DeltaCondition(True, n, float(delta))
    return DeltaCondition(False, None, None)
