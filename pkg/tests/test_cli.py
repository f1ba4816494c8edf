import csv
import json
import subprocess
import sys
from math import pi, sqrt

import numpy as np
import pytest

from shell_benard.cli import dumps, main
from shell_benard.spectrum import degenerate_aspect_ratio


def run(tmp_path, command, config=None, seed=0, out="out"):
    argv = [command, "--out", str(tmp_path / out), "--seed", str(seed)]
    if config is not None:
        path = tmp_path / f"{command}-{out}.json"
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    code = main(argv)
    result = None
    summary = tmp_path / out / f"{command}.json"
    if summary.exists():
        result = json.loads(summary.read_text(encoding="utf-8"))
    return code, result


def test_dumps_precision():
    text = dumps({"b": 0.1, "a": [1, True, None, float("inf")], "c": "é"})
    assert '"b": 0.10000000000000001' in text
    assert text.index('"a"') < text.index('"b"')
    data = json.loads(text)
    assert data["a"] == [1, True, None, None] and data["c"] == "é"


def test_critical_lc1(tmp_path):
    code, res = run(tmp_path, "critical")
    assert code == 0
    assert res["l_c"] == 1 and res["degenerate"] is False
    assert res["R_c"] == pytest.approx(27 * pi**4 / 4, rel=1e-12)
    assert res["config"]["r"] == pytest.approx(2 / pi)


def test_critical_lc2(tmp_path):
    code, res = run(tmp_path, "critical", {"r": 2 * sqrt(3) / pi})
    assert code == 0 and res["l_c"] == 2


def test_critical_degenerate(tmp_path):
    code, res = run(tmp_path, "critical", {"r": degenerate_aspect_ratio(1)})
    assert code == 0 and res["degenerate"] is True


def test_spectrum(tmp_path):
    code, res = run(tmp_path, "spectrum", {"m_all": True, "l_max": 2})
    assert code == 0
    with open(tmp_path / "out" / "spectrum.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    crit = [r for r in rows if (r["branch"], r["l"], r["n"]) == ("plus", "1", "1")]
    assert len(crit) == 3
    assert all(abs(float(r["beta"])) < 1e-10 for r in crit)
    assert len(rows) == res["rows"]


def test_spectrum_toroidal_independent_of_lambda(tmp_path):
    tables = []
    for i, lam in enumerate([0.0, 10.0, 40.0]):
        run(tmp_path, "spectrum", {"lambda": lam}, out=f"o{i}")
        with open(tmp_path / f"o{i}" / "spectrum.csv", newline="") as fh:
            tables.append([r["beta"] for r in csv.DictReader(fh) if r["branch"] == "toroidal"])
    assert tables[0] == tables[1] == tables[2]


def test_spectrum_empty_range(tmp_path):
    code, res = run(tmp_path, "spectrum", {"l_min": 3, "l_max": 2, "n_max": 0})
    assert code == 0 and res["rows"] == 0
    assert (tmp_path / "out" / "spectrum.csv").read_bytes() == b"branch,l,m,n,beta,b\r\n"


@pytest.mark.parametrize("l_c,q", [(1, 3 * pi**3 * 91773 / (400000 * 81)),
                                   (2, 2291405 * pi**3 / 214754176)])
def test_reduce(tmp_path, l_c, q):
    code, res = run(tmp_path, "reduce", {"l_c": l_c})
    assert code == 0
    assert res["q"] == pytest.approx(q, rel=1e-6)
    assert res["validation"] == "PASS"
    coeffs = json.loads((tmp_path / "out" / "coefficients.json").read_text())
    assert coeffs["l_c"] == l_c and "thermal(0,0,2)" in coeffs["coefficients"]


def test_reduce_lc3_unvalidated(tmp_path):
    code, res = run(tmp_path, "reduce", {"l_c": 3})
    assert code == 0
    assert res["closed_form_q"] is None
    assert res["validation"].startswith("unvalidated")
    assert res["q"] > 0


def test_reduce_degenerate_exit_code(tmp_path):
    code, _ = run(tmp_path, "reduce", {"l_c": 1, "r": degenerate_aspect_ratio(1)})
    assert code == 3


def test_reduce_wrong_lc(tmp_path):
    code, _ = run(tmp_path, "reduce", {"l_c": 2, "r": 2 / pi})
    assert code == 2


def test_evolve(tmp_path):
    code, res = run(tmp_path, "evolve", {"reconstruct": True, "n_out": 101})
    assert code == 0
    assert res["beta_plus"] > 0
    assert res["logistic_max_error"] < 1e-6
    assert res["N_final"] == pytest.approx(res["attractor"]["radius"] ** 2, rel=1e-6)
    assert res["attractor"]["all_steady"] is True
    with open(tmp_path / "out" / "trajectory.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x0", "y1", "z1", "N"] and len(rows) == 102
    meta = json.loads((tmp_path / "out" / "fields.json").read_text())
    data = np.fromfile(tmp_path / "out" / "fields.bin", dtype="<f8")
    assert data.size == 4 * int(np.prod(meta["shape"]))
    assert meta["max_imag"] < 1e-12
    T = data.reshape([4] + meta["shape"])[3]
    assert np.abs(T).max() > 0


def test_evolve_below_threshold(tmp_path):
    code, res = run(tmp_path, "evolve", {"epsilon": -0.05, "x0": [0.1, 0.0, 0.0]})
    assert code == 0
    assert res["beta_plus"] < 0
    assert res["N_final"] < res["N_initial"]
    assert res["attractor"]["radius"] is None


def test_evolve_bad_x0(tmp_path):
    code, _ = run(tmp_path, "evolve", {"x0": [1.0, 2.0]})
    assert code == 2


def test_friction_consistent(tmp_path):
    # the law inverts exactly at σ₀/σ₁ = 1 for h/a = π/√(2 l(l+1))
    code, res = run(tmp_path, "friction", {"a": 1.0, "h": pi / sqrt(12.0), "l_c": 2, "sigma0": 1e-6})
    assert code == 0
    assert res["sigma_ratio"] == pytest.approx(1.0, rel=1e-12)


def test_friction_lc0_usage_error(tmp_path):
    code, _ = run(tmp_path, "friction", {"l_c": 0})
    assert code == 2


@pytest.mark.parametrize("config", [{"r": -1.0}, {"bogus": 1}, {"r": "x"}, [1, 2]])
def test_bad_config(tmp_path, config):
    code, _ = run(tmp_path, "critical", config)
    assert code == 2


def test_missing_config_file(tmp_path):
    assert main(["critical", "--config", str(tmp_path / "nope.json")]) == 2


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


@pytest.mark.parametrize("command", ["spectrum", "critical", "reduce", "evolve", "friction"])
def test_deterministic(tmp_path, command):
    config = {"reconstruct": True} if command == "evolve" else None
    run(tmp_path, command, config, seed=7, out="a")
    run(tmp_path, command, config, seed=7, out="b")
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "shell_benard", "critical"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["l_c"] == 1
