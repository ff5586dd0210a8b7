import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from branchlab import cli, orders, schemas
from branchlab.gallery import incomparable_pair, moyal1
from branchlab.kernel import kernel_to_dict, save_kernel


def run(argv, out: Path, capsys):
    code = cli.main(["--out-dir", str(out), *argv])
    captured = capsys.readouterr()
    result = json.loads(captured.out) if captured.out.strip() else None
    error = json.loads(captured.err) if captured.err.strip().startswith("{") else None
    if result is not None:
        stem = cli._stem(cli.build_parser().parse_args(["--out-dir", str(out), *argv]))
        jsonschema.validate(result, schemas.for_output(stem))
        manifest = json.loads((out / f"{stem}.manifest.json").read_text())
        jsonschema.validate(manifest, schemas.load("manifest"))
        assert json.loads((out / f"{stem}.json").read_text()) == result
    if error is not None:
        jsonschema.validate(error, schemas.load("error"))
    return code, result, error


@pytest.fixture
def files(tmp_path):
    paths = {}
    save_kernel(moyal1().kernel, tmp_path / "moyal1.json")
    mu, nu = incomparable_pair()
    save_kernel(mu, tmp_path / "mu.json")
    save_kernel(nu, tmp_path / "nu.json")
    dm, dn = orders.random_dominated_pair(np.random.default_rng(0))
    save_kernel(dm, tmp_path / "dom_mu.json")
    save_kernel(dn, tmp_path / "dom_nu.json")
    (tmp_path / "geo.json").write_text(json.dumps({
        "space": {"labels": ["a"]},
        "laws": [{"type": "geometric", "mean": 2.0, "dispersal": {"a": 1.0}}],
        "boundary": "kill",
    }))
    (tmp_path / "geo3.json").write_text(json.dumps({
        "space": {"labels": ["a"]},
        "laws": [{"type": "geometric", "mean": 3.0, "dispersal": {"a": 1.0}}],
    }))
    for name in ("moyal1", "mu", "nu", "dom_mu", "dom_nu", "geo", "geo3"):
        paths[name] = str(tmp_path / f"{name}.json")
    return paths


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


class TestExamples:
    def test_fixpoint_global_moyal1(self, files, out, capsys):
        code, res, _ = run(["fixpoint", "global", "-k", files["moyal1"], "--tol", "1e-12"], out, capsys)
        assert code == 0 and res["vector"][0] == pytest.approx(0.5, abs=1e-10)

    def test_germ_identical(self, files, out, capsys):
        code, res, _ = run(["order", "germ", "-a", files["mu"], "-b", files["mu"], "--delta", "0.5"], out, capsys)
        assert code == 0 and res["status"] == "certified"

    def test_pgf_incomparable(self, files, out, capsys):
        code, res, _ = run(["order", "pgf", "-a", files["mu"], "-b", files["nu"]], out, capsys)
        assert code == 1 and res["status"] == "falsified"
        z = res["witness"]["z"]
        assert z[1] == 1.0 and 0.1 < z[0] < 1


class TestCommands:
    def test_validate(self, files, out, capsys):
        code, res, _ = run(["validate", "-k", files["moyal1"]], out, capsys)
        assert code == 0 and res["ok"]

    def test_validate_bad_mass(self, tmp_path, out, capsys):
        d = {"space": {"labels": ["a"]},
             "laws": [{"type": "explicit", "support": [{"config": [["a", 1]], "p": 0.5}, {"config": [], "p": 0.4}]}]}
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(d))
        code, res, _ = run(["validate", "-k", str(p)], out, capsys)
        assert code == 1 and not res["ok"]
        code, _, err = run(["fixpoint", "global", "-k", str(p)], out, capsys)
        assert code == 65 and err["error"] == "InvalidKernelError"
        code, res, _ = run(["--renormalize", "fixpoint", "global", "-k", str(p)], out, capsys)
        assert code == 0

    def test_genfun(self, files, out, capsys):
        code, res, _ = run(["genfun", "eval", "-k", files["geo"], "--z", "0.5"], out, capsys)
        assert res["G"] == [0.5]
        code, res, _ = run(["genfun", "eval", "-k", files["geo"], "--z", "0", "--steps", "3"], out, capsys)
        assert res["G"][0] == pytest.approx(7 / 15, abs=1e-15)  # 0 -> 1/3 -> 3/7 -> 7/15 under 1/(3 - 2z)
        code, res, _ = run(["genfun", "phi", "-k", files["geo"], "--site", "a", "--t", "0.5"], out, capsys)
        assert res["phi"] == 0.5

    def test_fixpoint_local_with_spacetime_and_csv(self, files, out, capsys):
        code, res, _ = run(["fixpoint", "local", "-k", files["moyal1"], "--set", "3", "--spacetime", "60",
                            "--csv", "q.csv"], out, capsys)
        assert code == 0
        assert max(res["vector"]) == pytest.approx(1.0, abs=1e-9)
        assert res["spacetime"]["max_gap"] <= 1e-8
        rows = (out / "q.csv").read_text().splitlines()
        assert rows[0] == "label,value" and rows[1].startswith("0,")

    def test_fixpoint_not_converged(self, files, out, capsys):
        code, res, _ = run(["fixpoint", "global", "-k", files["moyal1"], "--max-iter", "3"], out, capsys)
        assert code == 2 and res["converged"] is False

    def test_check_delta(self, files, out, capsys):
        code, res, _ = run(["check-delta", "-k", files["geo"], "--delta", "0.5"], out, capsys)
        assert code == 0 and res["n"] == 1
        code, res, _ = run(["check-delta", "-k", files["geo"], "--delta", "0"], out, capsys)
        assert code == 2 and not res["holds"]

    def test_order_stochastic(self, files, out, capsys):
        code, res, _ = run(["order", "stochastic", "-a", files["dom_mu"], "-b", files["dom_nu"]], out, capsys)
        assert code == 0 and res["certificates"]
        code, res, _ = run(["order", "stochastic", "-a", files["dom_nu"], "-b", files["dom_mu"]], out, capsys)
        assert code in (0, 1)

    def test_order_stochastic_parametric(self, files, out, capsys):
        code, _, err = run(["order", "stochastic", "-a", files["geo"], "-b", files["geo"]], out, capsys)
        assert code == 64 and err["error"] == "UnsupportedVariant"

    def test_order_chain(self, files, out, capsys):
        code, res, _ = run(["order", "chain", "-a", files["dom_mu"], "-b", files["dom_nu"], "--seed", "3"], out, capsys)
        assert code == 0 and res["ok"]

    def test_order_theorem(self, files, out, capsys):
        code, res, _ = run(["order", "theorem", "-a", files["geo3"], "-b", files["geo"], "--set", "a"], out, capsys)
        assert code == 0 and res["q_mu"][0] == pytest.approx(1 / 3, abs=1e-9)
        code, _, err = run(["order", "theorem", "-a", files["geo"], "-b", files["geo3"], "--set", "a"], out, capsys)
        assert code == 2 and err["error"] == "OrderNotCertified"

    def test_simulate_run_and_csv(self, files, out, capsys):
        code, res, _ = run(["simulate", "run", "-k", files["moyal1"], "--init", "0:1", "--horizon", "5",
                            "--csv", "traj.csv"], out, capsys)
        assert code == 0 and res["generations"][0] == {"0": 1}
        assert (out / "traj.csv").read_text().startswith("generation,total,occupied_sites,M,m\n")

    def test_simulate_other_actions(self, files, out, capsys):
        g = files["geo"]
        assert run(["simulate", "mc", "-k", g, "--site", "a", "--set", "a", "--replicas", "500"], out, capsys)[0] == 0
        assert run(["simulate", "martingale", "-k", g, "--z", "0.4", "--steps", "2", "--replicas", "500"],
                   out, capsys)[0] == 0
        assert run(["simulate", "displacement", "-k", files["moyal1"], "--horizon", "4"], out, capsys)[0] == 0
        assert run(["simulate", "growth", "-k", g, "--set", "a", "--replicas", "300", "--horizon", "20"],
                   out, capsys)[0] == 0

    def test_growth_precondition(self, files, out, capsys):
        labels = ",".join(str(i) for i in range(40))
        code, _, err = run(["simulate", "growth", "-k", files["moyal1"], "--set", labels, "--replicas", "10"],
                           out, capsys)
        assert code == 2 and err["error"] == "PreconditionUnverified"

    def test_displacement_without_metric(self, files, out, capsys):
        code, _, err = run(["simulate", "displacement", "-k", files["geo"]], out, capsys)
        assert code == 64 and err["error"] == "NoMetric"

    def test_example(self, out, capsys):
        code, res, _ = run(["example", "moyal1"], out, capsys)
        assert code == 0
        oracle = json.loads((out / "moyal1.oracle.json").read_text())
        jsonschema.validate(oracle, schemas.load("oracle"))
        jsonschema.validate(json.loads((out / "moyal1.json").read_text()), schemas.load("kernel"))

    def test_report_single(self, out, capsys):
        code, res, _ = run(["report", "--only", "1"], out, capsys)
        assert code == 0 and res["passed"] and len(res["criteria"]) == 1


class TestErrors:
    def test_usage(self, out, capsys):
        assert cli.main(["--out-dir", str(out), "nosuch"]) == 64
        assert cli.main(["--out-dir", str(out), "fixpoint", "local", "-k", "x.json"]) in (64, 65)

    def test_local_needs_set(self, files, out, capsys):
        code, _, _ = run(["fixpoint", "local", "-k", files["moyal1"]], out, capsys)
        assert code == 64

    def test_unknown_site(self, files, out, capsys):
        code, _, _ = run(["fixpoint", "local", "-k", files["moyal1"], "--set", "zz"], out, capsys)
        assert code == 64

    def test_malformed_file(self, tmp_path, out, capsys):
        p = tmp_path / "m.json"
        p.write_text("[1, 2")
        code, _, err = run(["validate", "-k", str(p)], out, capsys)
        assert code == 65 and err["error"] == "KernelFormatError"

    def test_missing_file(self, tmp_path, out, capsys):
        code, _, _ = run(["validate", "-k", str(tmp_path / "none.json")], out, capsys)
        assert code == 65


class TestManifest:
    def test_contents(self, files, out, capsys):
        run(["simulate", "mc", "-k", files["geo"], "--site", "a", "--set", "a", "--replicas", "100", "--seed", "4"],
            out, capsys)
        m = json.loads((out / "simulate-mc.manifest.json").read_text())
        assert m["seed"] == 4 and m["command"] == "simulate mc"
        assert m["kernel_hash"] == cli.kernel_hash(cli.load_kernel(files["geo"]))
        assert str(out / "simulate-mc.json") in m["outputs"]

    def test_rerun_reproduces_bytes(self, files, out, capsys):
        run(["simulate", "mc", "-k", files["geo"], "--site", "a", "--set", "a", "--replicas", "5000"], out, capsys)
        first = (out / "simulate-mc.json").read_bytes()
        (out / "simulate-mc.json").unlink()
        assert cli.main(["rerun", str(out / "simulate-mc.manifest.json")]) == 0
        capsys.readouterr()
        assert (out / "simulate-mc.json").read_bytes() == first

    def test_rerun_bad_manifest(self, tmp_path, capsys):
        p = tmp_path / "m.json"
        p.write_text("{}")
        assert cli.main(["rerun", str(p)]) == 65


def test_global_options_after_subcommand(files, tmp_path, capsys):
    out = tmp_path / "late"
    assert cli.main(["fixpoint", "global", "-k", files["geo"], "--out-dir", str(out)]) == 0
    assert (out / "fixpoint-global.json").exists()


def test_module_entry_point(files, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "branchlab", "--out-dir", str(tmp_path), "genfun", "phi", "-k", files["geo"],
         "--site", "a", "--t", "1"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["phi"] == 1.0


def test_kernel_files_match_schema(files):
    for path in files.values():
        jsonschema.validate(json.loads(Path(path).read_text()), schemas.load("kernel"))
    jsonschema.validate(kernel_to_dict(moyal1(N=3).kernel), schemas.load("kernel"))
