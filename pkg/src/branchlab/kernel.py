"""Site spaces, configurations, reproduction laws and kernels.

A kernel is a finite truncation of a multitype branching process: ``N``
labelled sites, one reproduction law per site, and a boundary policy saying
what happens to children placed beyond the truncation.  Children sent
outside are recorded in :attr:`Config.outside` (for explicit laws) or in
:attr:`Dispersal.outside` (for multinomial and geometric laws).

The JSON kernel format read by :func:`kernel_from_dict` is::

    {"space": {"labels": [...], "metric": [[...]]},
     "laws": [{"type": "explicit", "support": [{"config": [[label, n], ...], "p": w}, ...]},
              {"type": "multinomial", "total_pmf": [[n, p], ...], "dispersal": {label: p}},
              {"type": "geometric", "mean": m, "dispersal": {label: p}}],
     "boundary": "kill" | "survive_outside"}

The reserved label ``"@outside"`` addresses the region beyond the truncation.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InfiniteMean, KernelFormatError, NotSurjective

__all__ = [
    "OUTSIDE_LABEL",
    "MASS_TOL",
    "Boundary",
    "SiteSpace",
    "Config",
    "Dispersal",
    "ExplicitLaw",
    "MultinomialLaw",
    "GeometricLaw",
    "Kernel",
    "MomentMatrix",
    "TotalOffspring",
    "Issue",
    "ValidationReport",
    "validate",
    "mean_matrix",
    "total_offspring_pmf",
    "space_time",
    "projection_check",
    "kernel_from_dict",
    "kernel_to_dict",
    "load_kernel",
    "save_kernel",
    "kernel_hash",
    "renormalize",
]

OUTSIDE_LABEL = "@outside"
MASS_TOL = 1e-12


class Boundary(str, Enum):
    KILL = "kill"
    SURVIVE_OUTSIDE = "survive_outside"


@dataclass(frozen=True, eq=False)
class SiteSpace:
    """Finite, labelled set of sites with an optional distance matrix."""

    labels: tuple
    metric: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        if len(self.labels) == 0:
            raise ValueError("site space must contain at least one site")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("site labels must be distinct")
        if OUTSIDE_LABEL in self.labels:
            raise ValueError(f"{OUTSIDE_LABEL!r} is reserved")
        if self.metric is not None:
            d = np.asarray(self.metric, dtype=float)
            n = len(self.labels)
            if d.shape != (n, n):
                raise ValueError(f"metric must be {n}x{n}, got {d.shape}")
            if np.any(d < 0) or np.any(np.diag(d) != 0) or not np.allclose(d, d.T, atol=0):
                raise ValueError("metric must be symmetric, nonnegative, zero on the diagonal")
            d.setflags(write=False)
            object.__setattr__(self, "metric", d)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.labels)})

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.size:
                raise IndexError(f"site index {label} out of range")
            return int(label)
        try:
            return self._index[str(label)]
        except KeyError:
            raise KeyError(f"unknown site label {label!r}") from None

    def indices(self, labels: Iterable) -> tuple:
        return tuple(sorted({self.index(s) for s in labels}))


@dataclass(frozen=True)
class Config:
    """Finitely supported particle configuration (an element of S_X).

    ``entries`` is a sorted tuple of ``(site, count)`` with ``count >= 1``;
    ``outside`` counts particles beyond the truncation.
    """

    entries: tuple = ()
    outside: int = 0

    def __post_init__(self):
        merged = {}
        for site, count in self.entries:
            site, count = int(site), int(count)
            if count < 0:
                raise ValueError("particle counts must be nonnegative")
            if count:
                merged[site] = merged.get(site, 0) + count
        if self.outside < 0:
            raise ValueError("outside count must be nonnegative")
        object.__setattr__(self, "entries", tuple(sorted(merged.items())))
        object.__setattr__(self, "outside", int(self.outside))

    @classmethod
    def from_counts(cls, counts: Mapping[int, int] | Sequence[int], outside: int = 0) -> "Config":
        if isinstance(counts, Mapping):
            items = counts.items()
        else:
            items = enumerate(np.asarray(counts).tolist())
        return cls(tuple((int(k), int(v)) for k, v in items if v), outside)

    @property
    def size(self) -> int:
        """Total number of particles, outside ones included."""
        return sum(c for _, c in self.entries) + self.outside

    def __len__(self):
        return self.size

    def dense(self, n: int) -> np.ndarray:
        v = np.zeros(n, dtype=np.int64)
        for site, count in self.entries:
            v[site] = count
        return v

    def get(self, site: int) -> int:
        for s, c in self.entries:
            if s == site:
                return c
        return 0

    def shifted(self, offset: int) -> "Config":
        return Config(tuple((s + offset, c) for s, c in self.entries), self.outside)

    def dominates(self, other: "Config") -> bool:
        """Coordinatewise ``self >= other`` (outside counts included)."""
        if self.outside < other.outside:
            return False
        mine = dict(self.entries)
        return all(mine.get(s, 0) >= c for s, c in other.entries)


@dataclass(frozen=True)
class Dispersal:
    """Sparse probability row ``p(x, .)`` plus the mass sent outside."""

    entries: tuple = ()
    outside: float = 0.0

    def __post_init__(self):
        merged = {}
        for site, p in self.entries:
            merged[int(site)] = merged.get(int(site), 0.0) + float(p)
        object.__setattr__(self, "entries", tuple(sorted((s, p) for s, p in merged.items() if p != 0.0)))
        object.__setattr__(self, "outside", float(self.outside))

    @classmethod
    def from_row(cls, row: Sequence[float], outside: float = 0.0) -> "Dispersal":
        return cls(tuple((i, float(p)) for i, p in enumerate(row) if p), outside)

    @property
    def total(self) -> float:
        return math.fsum([p for _, p in self.entries] + [self.outside])

    def dense(self, n: int) -> np.ndarray:
        row = np.zeros(n)
        for site, p in self.entries:
            row[site] = p
        return row

    def shifted(self, offset: int) -> "Dispersal":
        return Dispersal(tuple((s + offset, p) for s, p in self.entries), self.outside)


@dataclass(frozen=True)
class ExplicitLaw:
    """Finite list of ``(Config, probability)`` pairs."""

    support: tuple

    def __post_init__(self):
        object.__setattr__(self, "support", tuple((c, float(p)) for c, p in self.support))

    def total_pmf(self) -> np.ndarray:
        top = max((c.size for c, _ in self.support), default=0)
        pmf = np.zeros(top + 1)
        for c, p in self.support:
            pmf[c.size] += p
        return pmf

    def mean_row(self, n: int) -> tuple[np.ndarray, float]:
        row = np.zeros(n)
        out = 0.0
        for c, p in self.support:
            for site, count in c.entries:
                row[site] += p * count
            out += p * c.outside
        return row, out

    @property
    def max_children(self) -> int:
        return max((c.size for c, _ in self.support), default=0)


@dataclass(frozen=True)
class MultinomialLaw:
    """Total-count pmf ``[(n, rho(n)), ...]`` with independent placement."""

    total_pmf: tuple
    dispersal: Dispersal

    def __post_init__(self):
        object.__setattr__(self, "total_pmf", tuple((int(n), float(p)) for n, p in self.total_pmf))

    def pmf_array(self) -> np.ndarray:
        top = max((n for n, _ in self.total_pmf), default=0)
        pmf = np.zeros(top + 1)
        for n, p in self.total_pmf:
            pmf[n] += p
        return pmf

    @property
    def mean(self) -> float:
        return math.fsum(n * p for n, p in self.total_pmf)

    def mean_row(self, n: int) -> tuple[np.ndarray, float]:
        m = self.mean
        return m * self.dispersal.dense(n), m * self.dispersal.outside

    @property
    def max_children(self) -> int:
        return max((n for n, p in self.total_pmf if p > 0), default=0)


@dataclass(frozen=True)
class GeometricLaw:
    """Geometric total count ``rho(n) = (1/(1+m)) (m/(1+m))^n`` with mean ``m``."""

    mean: float
    dispersal: Dispersal

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))

    def mean_row(self, n: int) -> tuple[np.ndarray, float]:
        return self.mean * self.dispersal.dense(n), self.mean * self.dispersal.outside

    def total_pmf(self, quantile: float = 1 - MASS_TOL) -> tuple[np.ndarray, float]:
        m = self.mean
        ratio = m / (1.0 + m)
        # smallest n with P(count <= n) = 1 - ratio**(n+1) >= quantile
        n = 0 if ratio == 0 else max(0, math.ceil(math.log1p(-quantile) / math.log(ratio) - 1))
        k = np.arange(n + 1)
        pmf = (1.0 / (1.0 + m)) * ratio**k
        return pmf, ratio ** (n + 1)


Law = Union[ExplicitLaw, MultinomialLaw, GeometricLaw]


@dataclass(frozen=True, eq=False)
class Kernel:
    """A site space with one reproduction law per site.

    Kernels are immutable; derived evaluators are cached per instance.
    """

    space: SiteSpace
    laws: tuple
    boundary: Boundary = Boundary.KILL

    def __post_init__(self):
        object.__setattr__(self, "laws", tuple(self.laws))
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def size(self) -> int:
        return self.space.size

    @property
    def labels(self) -> tuple:
        return self.space.labels

    def with_boundary(self, boundary: Boundary | str) -> "Kernel":
        return replace(self, boundary=Boundary(boundary))

    @property
    def outside_value(self) -> float:
        """Generating variable assigned to the region beyond the truncation."""
        return 0.0 if self.boundary is Boundary.SURVIVE_OUTSIDE else 1.0

    @property
    def has_outside_mass(self) -> bool:
        for law in self.laws:
            if isinstance(law, ExplicitLaw):
                if any(c.outside and p > 0 for c, p in law.support):
                    return True
            elif law.dispersal.outside > 0:
                return True
        return False

    def lipschitz_constants(self) -> np.ndarray:
        """Per-site bound on the sup-norm Lipschitz constant of ``G(.|x)``.

        Maximum support size for tabulated laws; ``m (1 + m)`` for geometric ones.
        """
        out = np.empty(self.size)
        for x, law in enumerate(self.laws):
            if isinstance(law, GeometricLaw):
                out[x] = law.mean * (1.0 + law.mean)
            else:
                out[x] = law.max_children
        return out

    def sites(self, labels: Iterable) -> tuple:
        return self.space.indices(labels)


# -- validation ---------------------------------------------------------------


class Issue(NamedTuple):
    severity: str
    site: int | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    issues: tuple
    triviality_flag: bool

    @property
    def errors(self):
        return [i for i in self.issues if i.severity == "error"]

    def to_dict(self):
        return {
            "ok": self.ok,
            "triviality_flag": self.triviality_flag,
            "issues": [i._asdict() for i in self.issues],
        }


def _check_prob_list(probs, site, what, issues):
    probs = list(probs)
    if any(not math.isfinite(p) for p in probs):
        issues.append(Issue("error", site, f"{what}: non-finite probability"))
        return
    if any(p < 0 for p in probs):
        issues.append(Issue("error", site, f"{what}: negative probability"))
    mass = math.fsum(probs)
    if abs(mass - 1.0) > MASS_TOL:
        issues.append(Issue("error", site, f"{what}: mass {mass:.17g} != 1"))


def _check_dispersal(disp, n, site, issues):
    for s, _ in disp.entries:
        if not 0 <= s < n:
            issues.append(Issue("error", site, f"dispersal references site index {s} outside 0..{n - 1}"))
    _check_prob_list([p for _, p in disp.entries] + [disp.outside], site, "dispersal", issues)


def validate(kernel: Kernel) -> ValidationReport:
    """Report every problem with ``kernel``; never raises on bad data.

    Errors cover probability mass, negative entries and bad site indices.
    ``triviality_flag`` is set when every site has exactly one child almost
    surely.  For ``N <= 64`` the communicating-class form of the
    non-triviality assumption is also checked and reported as a warning.
    """
    issues: list[Issue] = []
    n = kernel.size
    if len(kernel.laws) != n:
        issues.append(Issue("error", None, f"{len(kernel.laws)} laws for {n} sites"))
        return ValidationReport(False, tuple(issues), False)

    one_child = []
    for x, law in enumerate(kernel.laws):
        if isinstance(law, ExplicitLaw):
            if not law.support:
                issues.append(Issue("error", x, "explicit law has empty support"))
            seen = set()
            for cfg, _ in law.support:
                if cfg in seen:
                    issues.append(Issue("error", x, f"duplicate support entry {cfg}"))
                seen.add(cfg)
                for s, _ in cfg.entries:
                    if not 0 <= s < n:
                        issues.append(Issue("error", x, f"config references site index {s} outside 0..{n - 1}"))
            _check_prob_list([p for _, p in law.support], x, "explicit law", issues)
            one_child.append(math.fsum(p for c, p in law.support if c.size == 1))
        elif isinstance(law, MultinomialLaw):
            counts = [k for k, _ in law.total_pmf]
            if any(k < 0 for k in counts):
                issues.append(Issue("error", x, "negative offspring count in total_pmf"))
            if len(set(counts)) != len(counts):
                issues.append(Issue("error", x, "duplicate offspring count in total_pmf"))
            _check_prob_list([p for _, p in law.total_pmf], x, "total_pmf", issues)
            _check_dispersal(law.dispersal, n, x, issues)
            one_child.append(math.fsum(p for k, p in law.total_pmf if k == 1))
        elif isinstance(law, GeometricLaw):
            if not (law.mean > 0 and math.isfinite(law.mean)):
                issues.append(Issue("error", x, f"geometric mean must be positive and finite, got {law.mean}"))
            _check_dispersal(law.dispersal, n, x, issues)
            one_child.append(0.0)
        else:
            issues.append(Issue("error", x, f"unknown law type {type(law).__name__}"))
            one_child.append(0.0)

    ok = not any(i.severity == "error" for i in issues)
    trivial = all(abs(w - 1.0) <= MASS_TOL for w in one_child)
    if ok and n <= 64:
        issues.extend(_communicating_class_issues(kernel))
    return ValidationReport(ok, tuple(issues), trivial)


def _communicating_class_issues(kernel: Kernel) -> list[Issue]:
    m = mean_matrix(kernel).entries
    ncomp, comp = connected_components(csr_matrix(m > 0), directed=True, connection="strong")
    issues = []
    for c in range(ncomp):
        members = np.flatnonzero(comp == c)
        # a singleton class without a self-loop has no y <-> x partner; skip it
        if len(members) == 1 and m[members[0], members[0]] == 0:
            continue
        if all(_prob_one_child_in(kernel.laws[y], members, kernel.size) >= 1 - MASS_TOL for y in members):
            labels = ", ".join(kernel.labels[i] for i in members)
            issues.append(
                Issue(
                    "warning",
                    int(members[0]),
                    f"communicating class {{{labels}}} keeps exactly one child inside the class almost surely",
                )
            )
    return issues


def _prob_one_child_in(law, members, n) -> float:
    inside = np.zeros(n, dtype=bool)
    inside[members] = True
    if isinstance(law, ExplicitLaw):
        return math.fsum(p for c, p in law.support if sum(k for s, k in c.entries if inside[s]) == 1)
    pc = float(law.dispersal.dense(n)[inside].sum())
    if isinstance(law, MultinomialLaw):
        return math.fsum(p * k * pc * (1 - pc) ** (k - 1) for k, p in law.total_pmf if k >= 1)
    m = law.mean
    return pc * m / (1 + m * pc) ** 2


# -- first moments --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Mean offspring matrix ``m[x, y]``; ``outside[x]`` is the mean sent beyond the truncation."""

    entries: np.ndarray
    row_sums: np.ndarray
    outside: np.ndarray


def mean_matrix(kernel: Kernel) -> MomentMatrix:
    n = kernel.size
    rows = np.zeros((n, n))
    out = np.zeros(n)
    for x, law in enumerate(kernel.laws):
        if isinstance(law, GeometricLaw) and not math.isfinite(law.mean):
            raise InfiniteMean(f"site {x} has infinite mean")
        rows[x], out[x] = law.mean_row(n)
    return MomentMatrix(rows, rows.sum(axis=1), out)


@dataclass(frozen=True, eq=False)
class TotalOffspring:
    """Law of the total number of children: ``pmf[n]`` plus untabulated ``tail`` mass."""

    pmf: np.ndarray
    tail: float = 0.0


def total_offspring_pmf(kernel: Kernel, x, quantile: float = 1 - MASS_TOL) -> TotalOffspring:
    """Distribution of ``|f|`` under the law of site ``x`` (outside children included).

    Geometric laws are tabulated up to ``quantile``; the rest is returned as ``tail``.
    """
    law = kernel.laws[kernel.space.index(x)]
    if isinstance(law, ExplicitLaw):
        return TotalOffspring(law.total_pmf())
    if isinstance(law, MultinomialLaw):
        return TotalOffspring(law.pmf_array())
    pmf, tail = law.total_pmf(quantile)
    return TotalOffspring(pmf, tail)


# -- space-time transform -------------------------------------------------------


def space_time(kernel: Kernel, horizon: int) -> Kernel:
    """Space-time version of ``kernel`` on ``X x {0..horizon}``.

    Site ``(x, n)`` has index ``n * N + x`` and label ``"<x>@<n>"``.  A particle
    at ``(x, n)`` with ``n < horizon`` reproduces like ``x`` and puts all its
    children in layer ``n + 1``; layer ``horizon`` is sterile.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = kernel.size
    labels = [f"{lab}@{t}" for t in range(horizon + 1) for lab in kernel.labels]
    laws = []
    for t in range(horizon):
        off = (t + 1) * n
        for law in kernel.laws:
            if isinstance(law, ExplicitLaw):
                laws.append(ExplicitLaw(tuple((c.shifted(off), p) for c, p in law.support)))
            else:
                laws.append(replace(law, dispersal=law.dispersal.shifted(off)))
    sterile = ExplicitLaw(((Config(), 1.0),))
    laws.extend([sterile] * n)
    return Kernel(SiteSpace(tuple(labels)), tuple(laws), kernel.boundary)


def projection_check(kernel_x: Kernel, kernel_v: Kernel, g: Sequence, samples: int = 64, seed: int = 0):
    """Test whether ``kernel_x`` projects onto ``kernel_v`` through the site map ``g``.

    Compares ``G_X(z o g | x)`` with ``G_V(z | g(x))`` at ``samples`` random
    points ``z`` of ``[0,1]^V``.

    Returns
    -------
    (bool, float)
        Whether the maximal deviation is at most ``1e-10``, and that deviation.
    """
    from .genfun import eval_G

    gmap = np.array([kernel_v.space.index(v) for v in g], dtype=np.int64)
    if len(gmap) != kernel_x.size:
        raise ValueError("site map must assign an image to every site of kernel_x")
    if set(gmap.tolist()) != set(range(kernel_v.size)):
        raise NotSurjective("site map is not surjective")
    rng = np.random.default_rng(seed)
    z = rng.random((samples, kernel_v.size))
    lhs = eval_G(kernel_x, z[:, gmap])
    rhs = eval_G(kernel_v, z)[:, gmap]
    dev = float(np.max(np.abs(lhs - rhs)))
    return dev <= 1e-10, dev


# -- JSON ingestion ---------------------------------------------------------------


def _site_ref(space: SiteSpace, label):
    if label == OUTSIDE_LABEL:
        return None
    try:
        return space.index(label)
    except (KeyError, IndexError) as exc:
        raise KernelFormatError(str(exc)) from None


def _parse_dispersal(space, raw) -> Dispersal:
    if isinstance(raw, Mapping):
        entries, outside = [], 0.0
        for label, p in raw.items():
            idx = _site_ref(space, label)
            if idx is None:
                outside += float(p)
            else:
                entries.append((idx, float(p)))
        return Dispersal(tuple(entries), outside)
    if isinstance(raw, list):
        row = [float(p) for p in raw]
        if len(row) == space.size + 1:
            return Dispersal.from_row(row[:-1], row[-1])
        if len(row) != space.size:
            raise KernelFormatError(f"dispersal row has length {len(row)}, expected {space.size}")
        return Dispersal.from_row(row)
    raise KernelFormatError("dispersal must be a mapping label -> p or a list")


def _parse_config(space, raw) -> Config:
    entries, outside = [], 0
    for pair in raw:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise KernelFormatError(f"config entries must be [label, count] pairs, got {pair!r}")
        label, count = pair
        if int(count) != count or count < 0:
            raise KernelFormatError(f"particle count must be a nonnegative integer, got {count!r}")
        idx = _site_ref(space, label)
        if idx is None:
            outside += int(count)
        else:
            entries.append((idx, int(count)))
    return Config(tuple(entries), outside)


def kernel_from_dict(data: Mapping) -> Kernel:
    try:
        space_raw = data["space"]
        metric = space_raw.get("metric")
        space = SiteSpace(tuple(space_raw["labels"]), None if metric is None else np.asarray(metric, float))
        laws_raw = data["laws"]
        boundary = Boundary(data.get("boundary", "kill"))
    except (KeyError, TypeError, ValueError) as exc:
        raise KernelFormatError(f"malformed kernel: {exc}") from None
    if not isinstance(laws_raw, list):
        raise KernelFormatError("'laws' must be an array")
    laws = []
    for i, raw in enumerate(laws_raw):
        try:
            kind = raw["type"]
            if kind == "explicit":
                support = tuple((_parse_config(space, e["config"]), float(e["p"])) for e in raw["support"])
                laws.append(ExplicitLaw(support))
            elif kind == "multinomial":
                pmf = tuple((int(n), float(p)) for n, p in raw["total_pmf"])
                laws.append(MultinomialLaw(pmf, _parse_dispersal(space, raw["dispersal"])))
            elif kind == "geometric":
                laws.append(GeometricLaw(float(raw["mean"]), _parse_dispersal(space, raw["dispersal"])))
            else:
                raise KernelFormatError(f"law {i}: unknown type {kind!r}")
        except KernelFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise KernelFormatError(f"law {i}: {exc}") from None
    return Kernel(space, tuple(laws), boundary)


def _dispersal_to_dict(space, disp):
    out = {space.labels[s]: p for s, p in disp.entries}
    if disp.outside:
        out[OUTSIDE_LABEL] = disp.outside
    return out


def _config_to_list(space, cfg):
    pairs = [[space.labels[s], c] for s, c in cfg.entries]
    if cfg.outside:
        pairs.append([OUTSIDE_LABEL, cfg.outside])
    return pairs


def kernel_to_dict(kernel: Kernel) -> dict:
    space = kernel.space
    laws = []
    for law in kernel.laws:
        if isinstance(law, ExplicitLaw):
            laws.append(
                {
                    "type": "explicit",
                    "support": [{"config": _config_to_list(space, c), "p": p} for c, p in law.support],
                }
            )
        elif isinstance(law, MultinomialLaw):
            laws.append(
                {
                    "type": "multinomial",
                    "total_pmf": [[n, p] for n, p in law.total_pmf],
                    "dispersal": _dispersal_to_dict(space, law.dispersal),
                }
            )
        else:
            laws.append({"type": "geometric", "mean": law.mean, "dispersal": _dispersal_to_dict(space, law.dispersal)})
    sp = {"labels": list(space.labels)}
    if space.metric is not None:
        sp["metric"] = space.metric.tolist()
    return {"space": sp, "laws": laws, "boundary": kernel.boundary.value}


def load_kernel(path) -> Kernel:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise KernelFormatError(f"{path}: {exc}") from None
    return kernel_from_dict(data)


def save_kernel(kernel: Kernel, path) -> None:
    with open(path, "w") as fh:
        json.dump(kernel_to_dict(kernel), fh, indent=1)
        fh.write("\n")


def kernel_hash(kernel: Kernel) -> str:
    blob = json.dumps(kernel_to_dict(kernel), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def renormalize(kernel: Kernel) -> Kernel:
    """Rescale every probability list of ``kernel`` to total mass 1.

    Only applied on explicit request; :func:`validate` never does it.
    """

    def scaled(pairs):
        total = math.fsum(p for _, p in pairs)
        return tuple((k, p / total) for k, p in pairs) if total > 0 else tuple(pairs)

    def disp(d: Dispersal) -> Dispersal:
        total = d.total
        if total <= 0:
            return d
        return Dispersal(tuple((s, p / total) for s, p in d.entries), d.outside / total)

    laws = []
    for law in kernel.laws:
        if isinstance(law, ExplicitLaw):
            laws.append(ExplicitLaw(scaled(law.support)))
        elif isinstance(law, MultinomialLaw):
            laws.append(MultinomialLaw(scaled(law.total_pmf), disp(law.dispersal)))
        else:
            laws.append(GeometricLaw(law.mean, disp(law.dispersal)))
    return Kernel(kernel.space, tuple(laws), kernel.boundary)
