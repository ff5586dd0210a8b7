"""Command-line interface.

Every command prints one JSON document on stdout and writes it, together
with a run manifest, to ``--out-dir`` (default: the current directory).
Manifests record the argument vector, so ``branchlab rerun MANIFEST``
repeats a run exactly.

Exit codes: 0 success or certified, 1 falsified or failed check,
2 inconclusive, 64 usage error, 65 malformed or invalid input data.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import gallery, genfun, orders, simulate
from .errors import (
    BranchlabError,
    InvalidKernelError,
    KernelFormatError,
    NotConverged,
    OrderNotCertified,
    PreconditionUnverified,
)
from .kernel import Config, kernel_hash, load_kernel, renormalize, save_kernel, validate

EX_OK, EX_FAIL, EX_INCONCLUSIVE, EX_USAGE, EX_DATAERR = 0, 1, 2, 64, 65


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


# -- argument helpers --------------------------------------------------------------


_RENORMALIZE = False


def _kernel(path):
    try:
        k = load_kernel(path)
    except FileNotFoundError as e:
        raise KernelFormatError(f"cannot read {path}: {e.strerror}") from None
    return renormalize(k) if _RENORMALIZE else k


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _z(kernel, text: str) -> np.ndarray:
    vals = _floats(text)
    if len(vals) == 1:
        return np.full(kernel.size, vals[0])
    return np.array(vals)


def _sites(kernel, text: str) -> list:
    labels = [s for s in text.split(",") if s]
    if not labels:
        raise UsageError("empty site set")
    try:
        kernel.sites(labels)
    except (KeyError, IndexError) as e:
        raise UsageError(str(e)) from None
    return labels


def _config(kernel, text: str) -> Config:
    counts = {}
    for part in text.split(","):
        if not part:
            continue
        label, _, num = part.partition(":")
        try:
            idx = kernel.space.index(label)
            counts[idx] = counts.get(idx, 0) + (int(num) if num else 1)
        except (KeyError, ValueError) as e:
            raise UsageError(f"bad configuration entry {part!r}: {e}") from None
    return Config(tuple(counts.items()))


# -- commands ----------------------------------------------------------------------
# Each returns (result, exit_code, kernels, seed, extra_outputs).


def cmd_validate(a):
    k = _kernel(a.kernel)
    rep = validate(k)
    return rep.to_dict(), (EX_OK if rep.ok else EX_FAIL), [k], None, {}


def cmd_genfun(a):
    k = _kernel(a.kernel)
    if a.action == "eval":
        z = _z(k, a.z)
        val = genfun.eval_G_iterate(k, z, a.steps) if a.steps > 1 else genfun.eval_G(k, z)
        res = {"z": z.tolist(), "steps": a.steps, "labels": list(k.labels), "G": val.tolist()}
    else:
        res = {"site": a.site, "t": a.t, "phi": genfun.eval_phi(k, a.site, a.t)}
    return res, EX_OK, [k], None, {}


def _vector_csv(a, k, vec) -> dict:
    if not a.csv:
        return {}
    rows = ["label,value"] + [f"{lab},{float(v)!r}" for lab, v in zip(k.labels, vec)]
    return {a.csv: "\n".join(rows) + "\n"}


def cmd_fixpoint(a):
    k = _kernel(a.kernel)
    try:
        if a.action == "global":
            r = genfun.q_global(k, a.tol, a.max_iter)
            return r.to_dict(k.labels), EX_OK, [k], None, _vector_csv(a, k, r.vector)
        if not a.set:
            raise UsageError("fixpoint local needs --set")
        A = _sites(k, a.set)
        r = genfun.q_local(k, A, a.max_iter, a.tol)
        res = r.to_dict(k.labels)
        if a.spacetime:
            st = genfun.q_local_spacetime(k, A, a.spacetime, tol=a.tol)
            res["spacetime"] = {"k": a.spacetime, "vector": st.tolist(), "max_gap": float(np.max(np.abs(st - r.q_local)))}
        return res, EX_OK, [k], None, _vector_csv(a, k, r.q_local)
    except NotConverged as e:
        part = e.result
        vec = part.vector if hasattr(part, "vector") else part
        return {"converged": False, "message": str(e), "vector": np.asarray(vec).tolist()}, EX_INCONCLUSIVE, [k], None, {}


def cmd_check_delta(a):
    k = _kernel(a.kernel)
    r = genfun.check_delta_condition(k, a.delta, a.n_max)
    res = {"delta": a.delta, "holds": r.holds, "n": r.n, "sup_bound": r.sup_bound}
    return res, (EX_OK if r.holds else EX_INCONCLUSIVE), [k], None, {}


def cmd_order(a):
    if a.action == "stochastic":
        ka, kb = _kernel(a.a), _kernel(a.b)
        v, certs = orders.stochastic_order_kernels(ka, kb)
        res = v.to_dict()
        if v.certified:
            res["certificates"] = {x: c.to_dict(ka.space) for x, c in certs.items()}
        return res, v.status.exit_code, [ka, kb], None, {}
    ka, kb = _kernel(a.a), _kernel(a.b)
    if a.action == "germ":
        if orders._is_multinomial_pair(ka, kb) and not a.grid_only:
            v = orders.germ_check_multinomial(ka, kb, a.delta)
        else:
            v = orders.order_check_grid(ka, kb, a.delta, a.spacing)
        return v.to_dict(), v.status.exit_code, [ka, kb], None, {}
    if a.action == "pgf":
        v = orders.order_check_grid(ka, kb, 0.0, a.spacing)
        return v.to_dict(), v.status.exit_code, [ka, kb], None, {}
    if a.action == "chain":
        r = orders.order_chain_test(ka, kb, a.seed)
        return r, (EX_OK if r["ok"] else EX_FAIL), [ka, kb], a.seed, {}
    if a.action == "theorem":
        if not a.set:
            raise UsageError("order theorem needs --set")
        A = _sites(ka, a.set)
        r = orders.theorem_inequality_check(ka, kb, a.delta, A, a.tol)
        return r, (EX_OK if r["holds"] else EX_FAIL), [ka, kb], None, {}
    raise UsageError(a.action)


def cmd_simulate(a, out_dir: Path):
    k = _kernel(a.kernel)
    extra = {}
    if a.action in ("run", "displacement"):
        init = _config(k, a.init) if a.init else Config(((0, 1),))
        tr = simulate.run(k, init, a.horizon, a.pop_cap, a.seed)
        if a.action == "run":
            res = tr.to_dict()
            if a.csv:
                extra[a.csv] = simulate.trajectory_csv(tr)
        else:
            x0 = a.x0 if a.x0 is not None else k.labels[init.entries[0][0]]
            d = simulate.displacement_stats(tr, x0)
            res = {"x0": x0, "stopped_reason": tr.stopped_reason.value, **d.to_dict()}
    elif a.action == "mc":
        if not a.set:
            raise UsageError("simulate mc needs --set")
        r = simulate.mc_extinction(k, a.site, _sites(k, a.set), a.replicas, a.horizon, a.pop_cap, a.margin, a.seed)
        res = r.to_dict()
    elif a.action == "martingale":
        init = _config(k, a.init) if a.init else Config(((0, 1),))
        r = simulate.martingale_test(k, init, _z(k, a.z), a.steps, a.replicas, a.seed)
        res = r.to_dict()
    elif a.action == "growth":
        if not a.set:
            raise UsageError("simulate growth needs --set")
        res = simulate.growth_test(k, _sites(k, a.set), a.replicas, a.horizon, a.seed)
    else:
        raise UsageError(a.action)
    res["master_seed"] = a.seed
    return res, EX_OK, [k], a.seed, extra


def cmd_example(a, out_dir: Path):
    if a.name not in gallery.BUILDERS:
        raise UsageError(f"unknown example {a.name!r}; choose from {sorted(gallery.BUILDERS)}")
    bundles = gallery.BUILDERS[a.name]()
    written = []
    for b in bundles:
        kp = out_dir / f"{b.name}.json"
        op = out_dir / f"{b.name}.oracle.json"
        save_kernel(b.kernel, kp)
        op.write_text(_dumps(b.oracles_to_dict()))
        written += [str(kp), str(op)]
    return {"example": a.name, "files": written}, EX_OK, [b.kernel for b in bundles], None, {"__written__": written}


def cmd_report(a, out_dir: Path):
    from . import acceptance

    only = [int(v) for v in a.only.split(",")] if a.only else None
    results = acceptance.run_all(only)
    res = {"criteria": [r.to_dict() for r in results], "passed": all(r.passed for r in results)}
    for r in results:
        print(r.line(), file=sys.stderr)
    return res, (EX_OK if res["passed"] else EX_FAIL), [], None, {}


# -- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="branchlab", description="Multitype branching processes: extinction, orders, simulation.")
    p.add_argument("--out-dir", default=".", help="directory for result and manifest files")
    p.add_argument("--renormalize", action="store_true", help="rescale kernel probabilities to mass 1 after loading")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # the global options are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--renormalize", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    s = add("validate", help="validate a kernel file")
    s.add_argument("-k", "--kernel", required=True)

    s = add("genfun", help="evaluate G or the total-offspring pgf")
    s.add_argument("action", choices=["eval", "phi"])
    s.add_argument("-k", "--kernel", required=True)
    s.add_argument("--z", default="1", help="scalar or comma-separated vector")
    s.add_argument("--steps", type=int, default=1, help="number of compositions of G")
    s.add_argument("--site")
    s.add_argument("--t", type=float, default=1.0)

    s = add("fixpoint", help="global or local extinction vectors")
    s.add_argument("action", choices=["global", "local"])
    s.add_argument("-k", "--kernel", required=True)
    s.add_argument("--set", help="comma-separated site labels of A")
    s.add_argument("--tol", type=float, default=1e-12)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--spacetime", type=int, default=0, help="also compute the space-time value with this k")
    s.add_argument("--csv", help="also write the vector as label,value CSV to this file name")

    s = add("check-delta", help="search n with G^n(delta) <= delta")
    s.add_argument("-k", "--kernel", required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--n-max", type=int, default=100)

    s = add("order", help="order checks between two kernels")
    s.add_argument("action", choices=["germ", "pgf", "stochastic", "chain", "theorem"])
    s.add_argument("-a", required=True, help="kernel mu (the larger one)")
    s.add_argument("-b", required=True, help="kernel nu")
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--spacing", type=float, default=orders.DEFAULT_SPACING)
    s.add_argument("--grid-only", action="store_true", help="use the grid check even for multinomial pairs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--set")
    s.add_argument("--tol", type=float, default=1e-8)

    s = add("simulate", help="Monte Carlo simulation")
    s.add_argument("action", choices=["run", "mc", "martingale", "displacement", "growth"])
    s.add_argument("-k", "--kernel", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--init", help="configuration like 'a:2,b:1'")
    s.add_argument("--horizon", type=int, default=100)
    s.add_argument("--pop-cap", type=int, default=10_000)
    s.add_argument("--replicas", type=int, default=10_000)
    s.add_argument("--margin", type=int, default=10, help="last-visit margin for mc")
    s.add_argument("--site", help="starting site for mc")
    s.add_argument("--set")
    s.add_argument("--z", default="0.5")
    s.add_argument("--steps", type=int, default=1)
    s.add_argument("--x0")
    s.add_argument("--csv", help="per-generation CSV file name (run)")

    s = add("example", help="write a gallery kernel and its oracles")
    s.add_argument("name")

    s = add("report", help="run the acceptance criteria")
    s.add_argument("--only", help="comma-separated criterion numbers")

    s = add("rerun", help="repeat the run recorded in a manifest")
    s.add_argument("manifest")
    return p


def _dispatch(args, out_dir):
    c = args.command
    if c == "validate":
        return cmd_validate(args)
    if c == "genfun":
        if args.action == "phi" and args.site is None:
            raise UsageError("genfun phi needs --site")
        return cmd_genfun(args)
    if c == "fixpoint":
        return cmd_fixpoint(args)
    if c == "check-delta":
        return cmd_check_delta(args)
    if c == "order":
        return cmd_order(args)
    if c == "simulate":
        if args.action == "mc" and args.site is None:
            raise UsageError("simulate mc needs --site")
        return cmd_simulate(args, out_dir)
    if c == "example":
        return cmd_example(args, out_dir)
    if c == "report":
        return cmd_report(args, out_dir)
    raise UsageError(f"unknown command {c}")


def _stem(args) -> str:
    action = getattr(args, "action", None) or getattr(args, "name", None)
    return "-".join(x for x in (args.command, action) if x)


def _write_outputs(args, argv, out_dir: Path, result, kernels, seed, extra, wall) -> list[str]:
    stem = _stem(args)
    outputs = list(extra.pop("__written__", []))
    for name, text in extra.items():
        path = out_dir / name
        path.write_text(text)
        outputs.append(str(path))
    rp = out_dir / f"{stem}.json"
    rp.write_text(_dumps(result))
    outputs.append(str(rp))
    params = {k: v for k, v in vars(args).items() if k not in ("command",)}
    hashes = [kernel_hash(k) for k in kernels]
    manifest = {
        "command": " ".join(x for x in (args.command, getattr(args, "action", None)) if x),
        "argv": list(argv),
        "parameters": params,
        "kernel_hash": hashes[0] if len(hashes) == 1 else (hashes or None),
        "seed": seed,
        "outputs": outputs,
        "wall_time": wall,
    }
    mp = out_dir / f"{stem}.manifest.json"
    mp.write_text(_dumps(manifest))
    return outputs


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EX_USAGE
    if args.command == "rerun":
        try:
            recorded = json.loads(Path(args.manifest).read_text())["argv"]
        except (OSError, ValueError, KeyError) as e:
            print(_dumps({"error": "DataFormat", "message": f"bad manifest: {e}"}), file=sys.stderr, end="")
            return EX_DATAERR
        return main(recorded)
    global _RENORMALIZE
    _RENORMALIZE = args.renormalize
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        result, code, kernels, seed, extra = _dispatch(args, out_dir)
    except (KernelFormatError, InvalidKernelError) as e:
        print(_dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr, end="")
        return EX_DATAERR
    except (OrderNotCertified, PreconditionUnverified) as e:
        print(_dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr, end="")
        return EX_INCONCLUSIVE
    except (UsageError, BranchlabError, ValueError, KeyError, IndexError) as e:
        print(_dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr, end="")
        return EX_USAGE
    wall = time.perf_counter() - t0
    _write_outputs(args, argv, out_dir, result, kernels, seed, extra, wall)
    sys.stdout.write(_dumps(result))
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
