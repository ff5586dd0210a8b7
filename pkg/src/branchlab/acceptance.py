"""Acceptance sweep: ten numbered criteria, each a function returning a :class:`Criterion`.

Run them with ``branchlab report`` or ``pytest tests/test_acceptance.py -s``.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path

import numpy as np

from . import gallery, genfun, orders, simulate
from .kernel import Config, Dispersal, Kernel, MultinomialLaw, SiteSpace, save_kernel


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    elapsed: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.name} ({self.elapsed:.2f}s)"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "name": self.name,
            "passed": self.passed,
            "elapsed": self.elapsed,
            "details": self.details,
        }


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def _single_geometric(m: float) -> Kernel:
    return gallery.geometric_kernel([m]).kernel


# 1 -------------------------------------------------------------------------------


def criterion_1() -> Criterion:
    def work():
        return {m: genfun.q_global(_single_geometric(m)).vector[0] for m in (2.0, 3.0)}

    q, dt = _timed(work)
    errs = {str(m): abs(v - 1.0 / m) for m, v in q.items()}
    ok = all(e <= 1e-10 for e in errs.values()) and dt < 0.1
    return Criterion(1, "single-type geometric q_global = 1/m", ok, dt, {"errors": errs, "budget_s": 0.1})


# 2 -------------------------------------------------------------------------------


def criterion_2() -> Criterion:
    def work():
        b = gallery.moyal1(N=40)
        q = genfun.q_global(b.kernel).vector
        kill = b.kernel.with_boundary("kill")
        br = genfun.q_local(kill, kill.labels).bracket
        return b, q, br

    (b, q, br), dt = _timed(work)
    n = np.arange(21)
    closed = 1.0 - 2.0 ** (-(2.0**-n))
    err = float(np.max(np.abs(q[:21] - closed)))
    oracle = b.oracle("q_global")
    inside = bool(np.all(br[0] <= oracle + 1e-9) and np.all(oracle <= br[1] + 1e-9))
    ok = err <= 1e-9 and inside and dt < 1.0
    return Criterion(2, "moyal1 global extinction oracle and kill bracket", ok, dt, {"max_error": err, "bracket_contains": inside})


# 3 -------------------------------------------------------------------------------


def criterion_3() -> Criterion:
    def work():
        k = gallery.moyal1(N=40).kernel
        out = {}
        for z0 in (0.6, 0.75, 0.9):
            z = gallery.moyal1_fixed_point(None, z0, 40)
            res = float(np.max(np.abs(genfun.eval_G(k, z) - z)[:-1]))
            out[str(z0)] = {
                "residual": res,
                "decreasing": bool(np.all(np.diff(z) < 0)),
                "sup_at_0": int(np.argmax(z)) == 0,
            }
        return out

    out, dt = _timed(work)
    ok = all(v["residual"] <= 1e-12 and v["decreasing"] and v["sup_at_0"] for v in out.values())
    return Criterion(3, "moyal1 fixed-point family", ok, dt, out)


# 4 -------------------------------------------------------------------------------


def criterion_4() -> Criterion:
    def work():
        k = gallery.moyal1(N=40).kernel
        finite = list(range(6))
        full = list(range(40))
        qf = genfun.q_local(k, finite).q_local
        qx = genfun.q_local(k, full).q_local
        qg = genfun.q_global(k).vector
        gaps = {}
        for boundary in ("survive_outside", "kill"):
            kb = k.with_boundary(boundary)
            for name, A in (("finite", finite), ("full", full)):
                a = genfun.q_local(kb, A, with_bracket=False).q_local
                s = genfun.q_local_spacetime(kb, A, 100, 200)
                gaps[f"{boundary}/{name}"] = float(np.max(np.abs(a - s)))
        return qf, qx, qg, gaps

    (qf, qx, qg, gaps), dt = _timed(work)
    e1 = float(np.max(np.abs(qf - 1.0)))
    e2 = float(np.max(np.abs(qx - qg)))
    ok = e1 <= 1e-9 and e2 <= 1e-9 and all(g <= 1e-8 for g in gaps.values())
    return Criterion(4, "local extinction: finite vs full set, two algorithms", ok, dt, {"finite_err": e1, "full_err": e2, "spacetime_gaps": gaps})


# 5 -------------------------------------------------------------------------------


def criterion_5(trials: int = 200, seed: int = 20240501) -> Criterion:
    def work():
        rng = np.random.default_rng(seed)
        counts = {"stochastic": 0, "pgf": 0, "germ": 0, "violations": 0}
        for i in range(trials):
            n = int(rng.integers(1, 4))
            k_mu, k_nu = orders.random_dominated_pair(rng, n)
            r = orders.order_chain_test(k_mu, k_nu, seed=i)
            counts["stochastic"] += r["stochastic"]["status"] == "certified"
            counts["pgf"] += r["pgf"]["status"] == "certified"
            counts["germ"] += all(g["status"] == "certified" for g in r["germ"])
            counts["violations"] += len(r["violations"])
        return counts

    c, dt = _timed(work)
    ok = c["stochastic"] == c["pgf"] == c["germ"] == trials and c["violations"] == 0 and dt < 60
    return Criterion(5, "order chain on dominated random pairs", ok, dt, c)


# 6 -------------------------------------------------------------------------------


def criterion_6() -> Criterion:
    def work():
        k_mu, k_nu = gallery.incomparable_pair()
        out = {}
        for d in (0.0, 0.25, 0.5, 0.75, 0.85):
            fwd = orders.order_check_grid(k_mu, k_nu, d)
            bwd = orders.order_check_grid(k_nu, k_mu, d)
            out[str(d)] = {"mu_over_nu": fwd.to_dict(), "nu_over_mu": bwd.to_dict()}
        t = np.linspace(0.0, 1.0, 1001)[:-1]
        zz = np.stack([t, t], axis=1)
        diag = float(np.max(genfun.eval_G(k_mu, zz) - genfun.eval_G(k_nu, zz)))
        return out, diag

    (out, diag), dt = _timed(work)
    both = all(v["mu_over_nu"]["status"] == "falsified" and v["nu_over_mu"]["status"] == "falsified" for v in out.values())
    edge = True
    for v in out.values():
        w = v["mu_over_nu"]["witness"] or {}
        z = w.get("z", [0, 0])
        edge &= z[1] == 1.0 and 0.1 < z[0] < 1.0
    ok = both and edge and diag <= 0.0
    return Criterion(6, "incomparable pair", ok, dt, {"falsified_both_ways": both, "edge_witness": edge, "diag_max_gap": diag, "verdicts": out})


# 7 -------------------------------------------------------------------------------


def criterion_7(pairs: int = 200, seed: int = 7) -> Criterion:
    def work():
        rng = np.random.default_rng(seed)
        checked, violations, worst = 0, 0, -math.inf
        for delta in (0.0, 0.25, 0.5):
            for _ in range(pairs):
                k_mu, k_nu, v = orders.random_germ_pair(rng, 5, delta)
                single = [k_mu.labels[int(rng.integers(5))]]
                for A in (single, list(k_mu.labels)):
                    r = orders.theorem_inequality_check(k_mu, k_nu, delta, A, 1e-8, verdict=v)
                    checked += 1
                    violations += len(r["violations"])
                    worst = max(worst, r["max_excess"])
        return checked, violations, worst

    (checked, violations, worst), dt = _timed(work)
    ok = violations == 0 and dt < 300
    return Criterion(7, "germ-order extinction inequality on random pairs", ok, dt, {"checks": checked, "violations": violations, "max_excess": worst})


# 8 -------------------------------------------------------------------------------


def criterion_8(seeds: int = 100, replicas: int = 100_000) -> Criterion:
    def work():
        k = _single_geometric(2.0)
        inside = 0
        for s in range(seeds):
            e = simulate.mc_extinction(k, "0", ["0"], replicas, horizon=100, pop_cap=10_000, last_visit_margin=10, seed=s)
            inside += abs(e.point - 0.5) <= 3 * e.std_error
        rng = np.random.default_rng(88)
        zs = []
        k2 = _two_site_multinomial()
        for i in range(20):
            kern = k if i % 2 == 0 else k2
            z = rng.uniform(0.0, 1.0, size=kern.size)
            steps = int(rng.integers(1, 4))
            init = Config(((0, 1),)) if kern is k else Config(((0, 1), (1, 1)))
            zs.append(simulate.martingale_test(kern, init, z, steps, 20_000, seed=1000 + i).z_score)
        return inside, zs

    (inside, zs), dt = _timed(work)
    ok = inside >= 95 and all(-4 < z < 4 for z in zs) and dt < 180
    return Criterion(8, "Monte Carlo consistency", ok, dt, {"seeds_within_3se": inside, "martingale_z": zs})


def _two_site_multinomial() -> Kernel:
    space = SiteSpace(("a", "b"))
    laws = (
        MultinomialLaw(((0, 0.2), (1, 0.3), (2, 0.5)), Dispersal.from_row([0.3, 0.7])),
        MultinomialLaw(((0, 0.35), (3, 0.65)), Dispersal.from_row([0.6, 0.4])),
    )
    return Kernel(space, laws)


# 9 -------------------------------------------------------------------------------


def brute_force_multinomial(kernel: Kernel, z: np.ndarray) -> np.ndarray:
    """``G`` of a multinomial kernel by summing over every placement of every total count."""
    n = kernel.size
    zfull = np.append(z, kernel.outside_value)
    out = np.zeros(n)
    for x, law in enumerate(kernel.laws):
        row = np.append(law.dispersal.dense(n), law.dispersal.outside)
        acc = 0.0
        for total, prob in law.total_pmf:
            for ks in itertools.product(range(total + 1), repeat=n + 1):
                if sum(ks) != total:
                    continue
                coef = factorial(total)
                term = 1.0
                for k, p, zz in zip(ks, row, zfull):
                    coef //= factorial(k)
                    term *= (p * zz) ** k
                acc += prob * coef * term
        out[x] = acc
    return out


def criterion_9(points: int = 1000, seed: int = 9) -> Criterion:
    def work():
        rng = np.random.default_rng(seed)
        worst_m = 0.0
        for i in range(points):
            n = int(rng.integers(1, 4))
            laws = []
            for _ in range(n):
                top = int(rng.integers(0, 5))
                pmf = rng.dirichlet(np.ones(top + 1))
                row = rng.dirichlet(np.ones(n + 1))
                laws.append(MultinomialLaw(tuple(enumerate(pmf)), Dispersal.from_row(row[:n], row[n])))
            k = Kernel(SiteSpace(tuple(f"s{j}" for j in range(n))), tuple(laws), "kill" if i % 2 else "survive_outside")
            z = rng.uniform(size=n)
            worst_m = max(worst_m, float(np.max(np.abs(genfun.eval_G(k, z) - brute_force_multinomial(k, z)))))
        worst_g = 0.0
        for _ in range(20):
            n = int(rng.integers(1, 4))
            means = rng.uniform(0.2, 4.0, size=n)
            P = rng.dirichlet(np.ones(n), size=n)
            gk = gallery.geometric_kernel(means, P).kernel
            mk = gallery.multinomial_from_geometric(gk)
            zs = rng.uniform(size=(50, n))
            worst_g = max(worst_g, float(np.max(np.abs(genfun.eval_G(gk, zs) - genfun.eval_G(mk, zs)))))
        return worst_m, worst_g

    (wm, wg), dt = _timed(work)
    ok = wm <= 1e-12 and wg <= 1e-9
    return Criterion(9, "closed forms vs enumeration and truncated series", ok, dt, {"multinomial_max_err": wm, "geometric_max_err": wg})


# 10 ------------------------------------------------------------------------------


def _cli(argv, threads: int) -> tuple[int, str]:
    from .cli import main

    old = os.environ.get("BRANCHLAB_THREADS")
    os.environ["BRANCHLAB_THREADS"] = str(threads)
    buf = io.StringIO()
    try:
        with contextlib.redirect_stdout(buf):
            code = main(argv)
    finally:
        if old is None:
            os.environ.pop("BRANCHLAB_THREADS", None)
        else:
            os.environ["BRANCHLAB_THREADS"] = old
    return code, buf.getvalue()


def criterion_10() -> Criterion:
    def work():
        with tempfile.TemporaryDirectory() as tmp:
            tmp = Path(tmp)
            geo = tmp / "geo.json"
            save_kernel(_single_geometric(2.0), geo)
            moy = tmp / "moyal1.json"
            save_kernel(gallery.moyal1(N=40).kernel, moy)
            two = tmp / "two.json"
            save_kernel(_two_site_multinomial(), two)
            commands = [
                ["simulate", "run", "-k", str(geo), "--init", "0:3", "--horizon", "20", "--seed", "5", "--csv", "run.csv"],
                ["simulate", "mc", "-k", str(geo), "--site", "0", "--set", "0", "--replicas", "20000", "--seed", "11"],
                ["simulate", "martingale", "-k", str(two), "--init", "a:1,b:2", "--z", "0.3,0.8", "--steps", "3", "--replicas", "20000", "--seed", "3"],
                ["simulate", "displacement", "-k", str(moy), "--init", "0:1", "--horizon", "30", "--seed", "2"],
                ["simulate", "growth", "-k", str(geo), "--set", "0", "--replicas", "10000", "--horizon", "30", "--seed", "4"],
            ]
            out = {}
            for i, cmd in enumerate(commands):
                d = tmp / f"run{i}"
                code1, first = _cli(["--out-dir", str(d)] + cmd, 1)
                stem = f"{cmd[0]}-{cmd[1]}"
                file1 = (d / f"{stem}.json").read_bytes()
                code8, again = _cli(["rerun", str(d / f"{stem}.manifest.json")], 8)
                file8 = (d / f"{stem}.json").read_bytes()
                out[stem] = code1 == code8 == 0 and first == again and file1 == file8
            return out

    out, dt = _timed(work)
    return Criterion(10, "simulate outputs identical across thread counts", all(out.values()), dt, out)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_all(only=None) -> list[Criterion]:
    results = []
    for i, fn in CRITERIA.items():
        if only and i not in only:
            continue
        try:
            results.append(fn())
        except Exception as e:  # a crash is a failed criterion, reported with its cause
            results.append(Criterion(i, fn.__name__, False, 0.0, {"error": f"{type(e).__name__}: {e}"}))
    return results


def main() -> int:  # pragma: no cover
    res = run_all()
    for r in res:
        print(r.line())
    return 0 if all(r.passed for r in res) else 1
