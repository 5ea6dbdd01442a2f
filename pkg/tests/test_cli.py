import csv
import hashlib
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ivquant.auxmix import MixtureTable
from ivquant.cli import main, validate_config
from ivquant.config import RunConfig
from ivquant.simharness import gen_simple
from ivquant.storage import read_metadata, write_csv_columns

CONFIG = """
[data]
path = data.csv
[first_stage]
linear = z
[second_stage]
linear = x
smooth = d:6
[variance]
linear = d
[mcmc]
iters = 260
burnin = 60
thin = 2
seed = 5
[output]
dir = out
"""


@pytest.fixture
def workdir(tmp_path):
    data = gen_simple(150, 9)
    cols = dict(data.columns)
    cols["x"] = np.random.default_rng(1).normal(size=150)
    write_csv_columns(tmp_path / "data.csv", cols)
    (tmp_path / "run.ini").write_text(CONFIG)
    return tmp_path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_outputs(workdir, capsys):
    assert main(["fit", "--config", str(workdir / "run.ini")]) == 0
    out = workdir / "out"
    for name in ("draws.csv", "atoms.csv", "model.json", "metadata.txt", "summary.csv"):
        assert (out / name).exists()
    meta = read_metadata(out / "metadata.txt")
    for key in ("config_sha256", "seed", "version", "data_sha256", "sampler_seconds"):
        assert meta[key]
    assert meta["retained"] == "100"
    summary = rows(out / "summary.csv")
    assert [(r["equation"], r["variable"]) for r in summary] == [
        ("gamma", "const"), ("gamma", "z"), ("beta", "const"), ("beta", "x"),
        ("alpha", "const"), ("alpha", "d")]
    assert all(float(r["inefficiency"]) > 0 for r in summary)
    assert all(float(r["lower95"]) <= float(r["mean"]) <= float(r["upper95"]) for r in summary)


def test_fit_is_byte_identical(workdir):
    digests = []
    for run in ("a", "b"):
        assert main(["--quiet", "fit", "--config", str(workdir / "run.ini"),
                     "--out-dir", str(workdir / run)]) == 0
        digests.append([hashlib.sha256((workdir / run / f).read_bytes()).hexdigest()
                        for f in ("draws.csv", "atoms.csv", "summary.csv", "model.json")])
    assert digests[0] == digests[1]
    main(["--quiet", "fit", "--config", str(workdir / "run.ini"), "--out-dir",
          str(workdir / "c"), "--seed", "6"])
    assert (workdir / "c" / "draws.csv").read_bytes() != (workdir / "a" / "draws.csv").read_bytes()


def test_missing_instrument_column(workdir, capsys):
    (workdir / "run.ini").write_text(CONFIG.replace("linear = z", "linear = iv"))
    assert main(["fit", "--config", str(workdir / "run.ini")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: kind=SchemaError") and "'iv'" in err


def test_config_error_exit_code(workdir, capsys):
    assert main(["fit", "--config", str(workdir / "nope.ini")]) == 2
    (workdir / "run.ini").write_text(CONFIG.replace("burnin = 60", "burnin = 900"))
    assert main(["fit", "--config", str(workdir / "run.ini")]) == 2
    assert "burnin" in capsys.readouterr().err


def test_quantiles(workdir, capsys):
    main(["--quiet", "fit", "--config", str(workdir / "run.ini")])
    out = workdir / "out"
    assert main(["quantiles", "--draws", str(out), "--grid=-2:2:4"]) == 0
    res = rows(out / "quantiles.csv")
    assert len(res) == 4 * 5
    assert sorted({float(r["p"]) for r in res}) == [0.01, 0.1, 0.5, 0.9, 0.99]
    keys = [(float(r["d"]), float(r["p"])) for r in res]
    assert keys == sorted(keys)
    for g in range(4):
        block = [float(r["posterior_mean"]) for r in res[5 * g:5 * g + 5]]
        assert block == sorted(block)
    assert "crossing violations: 0" in capsys.readouterr().out

    single = workdir / "one.csv"
    assert main(["quantiles", "--draws", str(out), "--grid", "0.5:0.5:1", "--p", "0.3",
                 "--fixed", "x=1.0", "--out", str(single), "--density=-1:1:3,-1:1:4"]) == 0
    assert len(rows(single)) == 1
    dens = rows(workdir / "density.csv")
    assert len(dens) == 12 and all(float(r["density"]) > 0 for r in dens)


def test_quantiles_default_grid_and_errors(workdir, capsys):
    main(["--quiet", "fit", "--config", str(workdir / "run.ini")])
    out = workdir / "out"
    assert main(["--quiet", "quantiles", "--draws", str(out), "--p", "0.5"]) == 0
    assert len(rows(out / "quantiles.csv")) == 100
    assert main(["quantiles", "--draws", str(out), "--p", "0.5,1.0"]) == 2
    assert main(["quantiles", "--draws", str(out), "--grid", "a:b:c"]) == 2
    assert main(["quantiles", "--draws", str(workdir / "missing")]) == 2


def test_standardized_fit_back_transforms(workdir):
    text = CONFIG.replace("path = data.csv", "path = data.csv\nstandardize = true")
    text = text.replace("smooth = d:6", "").replace("linear = x", "linear = d")
    text = text.replace("iters = 260", "iters = 1200")
    (workdir / "std.ini").write_text(text)
    (workdir / "raw.ini").write_text(text.replace("standardize = true", "standardize = false"))
    med = {}
    for tag in ("std", "raw"):
        assert main(["--quiet", "fit", "--config", str(workdir / f"{tag}.ini"), "--out-dir",
                     str(workdir / tag), "--variant", "restricted"]) == 0
        main(["--quiet", "quantiles", "--draws", str(workdir / tag), "--grid=-2:2:3", "--p", "0.5"])
        med[tag] = np.array([[float(r[k]) for k in ("posterior_mean", "lower95", "upper95")]
                             for r in rows(workdir / tag / "quantiles.csv")])
    assert "y_scale" in read_metadata(workdir / "std" / "metadata.txt")
    # same posterior up to prior scaling and Monte-Carlo noise
    half = 0.5 * (med["raw"][:, 2] - med["raw"][:, 1])
    assert np.all(np.abs(med["std"][:, 0] - med["raw"][:, 0]) < half)


def test_simulate_shape(tmp_path):
    assert main(["--quiet", "simulate", "--design", "simple", "--n", "200", "--R", "2",
                 "--iters", "40", "--burnin", "10", "--thin", "3", "--M", "2",
                 "--out-dir", str(tmp_path), "--save-data"]) == 0
    res = rows(tmp_path / "bias_rmse_simple.csv")
    assert len(res) == 3 * 3 * 100
    assert list(res[0]) == ["design", "variant", "p", "d", "bias", "rmse"]
    assert {r["variant"] for r in res} == {"proposed", "restricted", "uncorrected"}
    assert (tmp_path / "data_simple_r001.csv").exists()


def test_simulate_bad_input(tmp_path):
    assert main(["simulate", "--design", "viii", "--out-dir", str(tmp_path)]) == 2
    assert main(["simulate", "--design", "i", "--variants", "other", "--out-dir", str(tmp_path)]) == 2


def _snapshot(root):
    return {p: p.read_bytes() for p in Path(root).rglob("*") if p.is_file()}


def test_validate(workdir, capsys):
    before = _snapshot(workdir)
    assert main(["validate", "--config", str(workdir / "run.ini")]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out
    assert _snapshot(workdir) == before

    (workdir / "big.ini").write_text(CONFIG.replace("smooth = d:6", "smooth = d:400"))
    assert main(["validate", "--config", str(workdir / "big.ini")]) == 2
    assert "FAIL knots: d: K=400 exceeds n=150" in capsys.readouterr().out


def test_validate_reports_corrupt_table_row(workdir):
    cfg = RunConfig.from_file(workdir / "run.ini")
    t = MixtureTable.default()
    var = t.variances.copy()
    var[3] = 0.40612
    report = dict((name, (ok, msg)) for name, ok, msg in
                  validate_config(cfg, MixtureTable(t.weights, t.means, var)))
    assert report["mixture_table"] == (False, "checksum mismatch in row(s) [4]")


def test_validate_bad_priors(workdir, capsys):
    (workdir / "p.ini").write_text(CONFIG + "[prior]\nt2 = -1\n")
    assert main(["validate", "--config", str(workdir / "p.ini")]) == 2
    assert "FAIL priors: non-positive: ['t2']" in capsys.readouterr().out


def test_console_script(workdir):
    proc = subprocess.run([sys.executable, "-m", "ivquant.cli", "validate", "--config",
                           str(workdir / "run.ini")], capture_output=True, text=True)
    assert proc.returncode == 0
    proc = subprocess.run([sys.executable, "-m", "ivquant.cli", "fit", "--config",
                           str(workdir / "absent.ini")], capture_output=True, text=True)
    assert proc.returncode == 2 and "kind=ConfigError" in proc.stderr
