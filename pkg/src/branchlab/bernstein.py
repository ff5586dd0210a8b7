"""Dense multivariate polynomials and Bernstein range enclosures on boxes.

A polynomial in ``N`` variables is a dense coefficient array ``c`` with
``c[i1, ..., iN]`` the coefficient of ``z1^i1 ... zN^iN``.  On a box, the
Bernstein coefficients of ``c`` bound its range: the polynomial lies between
their minimum and maximum, and the corner coefficients equal the values at
the box corners.  Subdividing the box tightens the bound.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from numpy.polynomial import polynomial as npoly

from .kernel import ExplicitLaw, GeometricLaw, MultinomialLaw


def constant(value: float, nvars: int) -> np.ndarray:
    return np.full((1,) * nvars, float(value))


def variable(k: int, nvars: int) -> np.ndarray:
    shape = [1] * nvars
    shape[k] = 2
    c = np.zeros(shape)
    c[(0,) * k + (1,) + (0,) * (nvars - k - 1)] = 1.0
    return c


def _pad(c: np.ndarray, shape) -> np.ndarray:
    if c.shape == tuple(shape):
        return c
    out = np.zeros(shape)
    out[tuple(slice(0, s) for s in c.shape)] = c
    return out


def add(a: np.ndarray, b: np.ndarray, scale_b: float = 1.0) -> np.ndarray:
    shape = tuple(max(x, y) for x, y in zip(a.shape, b.shape))
    return _pad(a, shape) + scale_b * _pad(b, shape)


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    shape = tuple(x + y - 1 for x, y in zip(a.shape, b.shape))
    out = np.zeros(shape)
    for idx in zip(*np.nonzero(a)):
        sl = tuple(slice(i, i + s) for i, s in zip(idx, b.shape))
        out[sl] += a[idx] * b
    return out


def evaluate(c: np.ndarray, z) -> float:
    val = c
    for zk in z:
        val = npoly.polyval(zk, val, tensor=False) if val.ndim > 1 else npoly.polyval(zk, val)
    return float(val)


def law_rational(law, nvars: int, zout: float):
    """``G(.|x)`` for one law as ``(numerator, denominator)`` polynomials.

    ``denominator`` is ``None`` for polynomial laws.  Geometric laws give
    ``1 / (1 + m - m L(z))`` with ``L(z) = Pz(x)``; that denominator is
    positive on ``[0,1]^N``.
    """
    if isinstance(law, ExplicitLaw):
        width = [1] * nvars
        for cfg, _ in law.support:
            for s, k in cfg.entries:
                width[s] = max(width[s], k + 1)
        num = np.zeros(width)
        for cfg, p in law.support:
            idx = [0] * nvars
            for s, k in cfg.entries:
                idx[s] = k
            num[tuple(idx)] += p * zout**cfg.outside
        return num, None
    lin = constant(law.dispersal.outside * zout, nvars)
    for s, p in law.dispersal.entries:
        lin = add(lin, variable(s, nvars), p)
    if isinstance(law, MultinomialLaw):
        pmf = law.pmf_array()
        acc = constant(pmf[-1], nvars)
        for k in range(len(pmf) - 2, -1, -1):
            acc = add(mul(acc, lin), constant(pmf[k], nvars))
        return acc, None
    if isinstance(law, GeometricLaw):
        m = law.mean
        return constant(1.0, nvars), add(constant(1.0 + m, nvars), lin, -m)
    raise TypeError(f"unsupported law {type(law).__name__}")


def difference_numerator(upper, lower, nvars: int) -> np.ndarray:
    """Numerator of ``upper - lower`` for two rational pairs, over a positive denominator."""
    an, ad = upper
    bn, bd = lower
    one = constant(1.0, nvars)
    ad = one if ad is None else ad
    bd = one if bd is None else bd
    return add(mul(an, bd), mul(bn, ad), -1.0)


def _axis_matrix(deg: int, lo: float, hi: float) -> np.ndarray:
    # power basis in z -> Bernstein basis in s, where z = lo + (hi - lo) s
    w = hi - lo
    shift = np.zeros((deg + 1, deg + 1))
    for i in range(deg + 1):
        for j in range(i + 1):
            shift[j, i] = comb(i, j) * lo ** (i - j) * w**j
    to_bern = np.zeros((deg + 1, deg + 1))
    for k in range(deg + 1):
        for j in range(k + 1):
            to_bern[k, j] = comb(k, j) / comb(deg, j)
    return to_bern @ shift


def bernstein_coefficients(c: np.ndarray, lo, hi) -> np.ndarray:
    b = c
    for axis, deg in enumerate(c.shape):
        m = _axis_matrix(deg - 1, float(lo[axis]), float(hi[axis]))
        b = np.moveaxis(np.tensordot(m, b, axes=([1], [axis])), 0, axis)
    return b


@dataclass
class Enclosure:
    """Outcome of :func:`certify_nonnegative`.

    ``status`` is ``certified`` (nonnegative up to ``eps`` on the whole box),
    ``falsified`` (``witness`` is a point with value below ``-eps``) or
    ``inconclusive``.  ``lower`` is the smallest Bernstein coefficient seen on
    the final cover.
    """

    status: str
    lower: float
    witness: tuple | None = None
    value: float | None = None
    boxes: int = 0


def certify_nonnegative(c, lo, hi, eps: float = 1e-12, min_width: float = 1 / 1024, max_boxes: int = 4096) -> Enclosure:
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if not np.any(c):
        return Enclosure("certified", 0.0)
    stack = [(lo, hi)]
    lower = np.inf
    boxes = 0
    undecided = False
    while stack:
        blo, bhi = stack.pop()
        boxes += 1
        b = bernstein_coefficients(c, blo, bhi)
        bmin = float(b.min())
        if bmin >= -eps:
            lower = min(lower, bmin)
            continue
        for corner in np.ndindex(*(2,) * c.ndim):
            pt = tuple(bhi[k] if corner[k] else blo[k] for k in range(c.ndim))
            val = evaluate(c, pt)
            if val < -eps:
                return Enclosure("falsified", bmin, pt, val, boxes)
        mid = 0.5 * (blo + bhi)
        val = evaluate(c, mid)
        if val < -eps:
            return Enclosure("falsified", bmin, tuple(mid), val, boxes)
        widths = bhi - blo
        axis = int(np.argmax(widths))
        if widths[axis] <= min_width or boxes + len(stack) >= max_boxes:
            lower = min(lower, bmin)
            undecided = True
            continue
        left_hi = bhi.copy()
        left_hi[axis] = mid[axis]
        right_lo = blo.copy()
        right_lo[axis] = mid[axis]
        stack.append((blo, left_hi))
        stack.append((right_lo, bhi))
    return Enclosure("inconclusive" if undecided else "certified", float(lower), boxes=boxes)
