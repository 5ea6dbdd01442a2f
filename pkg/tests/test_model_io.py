import numpy as np
import pytest

from ivquant import numkit
from ivquant.config import RunConfig, parse_smooth
from ivquant.errors import ConfigError, SchemaError
from ivquant.model import (PRESETS, Dataset, EquationDecl, ModelSpec, Priors, SmoothDecl,
                           build_design, prior_preset, smooth_spec)
from ivquant.quantile import structural_quantile
from ivquant.sampler import run_chain
from ivquant.simharness import gen_simple
from ivquant.storage import read_csv_columns, read_draws, write_csv_columns, write_draws


def test_resolved_defaults():
    data = gen_simple(300, 2)
    pr = Priors().resolve(data)
    assert np.sqrt(pr.m10) == pytest.approx(4 * data.d.std(ddof=1))
    assert np.sqrt(pr.m20) == pytest.approx(4 * data.y.std(ddof=1))
    assert pr.e0 == pytest.approx(np.cov(data.d, data.y)[0, 1] / data.d.var(ddof=1))
    assert (pr.a_phi, pr.b_phi, pr.v_beta0, pr.T10, pr.Te0, pr.s1, pr.s2) == \
        (0.001, 0.001, 100.0, 100.0, 10.0, 2.0, 1.0)


def test_presets():
    de = prior_preset("deflate-eta")
    assert (de.Te0, de.e1, de.e2, de.a1, de.a2) == (1.0, 2.0, 1.0, 2.0, 0.4)
    inf = prior_preset("inflate-eta", t1=3.0)
    assert (inf.Te0, inf.a2, inf.t1) == (60.0, 10.0, 3.0)
    assert set(PRESETS) == {"default", "deflate-eta", "inflate-eta"}
    with pytest.raises(ConfigError):
        prior_preset("bogus")
    assert Priors(t2=-1.0).check_positive() == ["t2"]


def test_dataset_checks():
    with pytest.raises(SchemaError):
        Dataset({"y": np.zeros(3), "d": np.zeros(4)})
    data = Dataset({"y": np.zeros(3), "d": np.array([1.0, np.nan, 2.0])})
    with pytest.raises(SchemaError, match="'d'"):
        data.require(["d"])
    with pytest.raises(SchemaError, match="'z'"):
        build_design(smooth_spec(), Dataset({"y": np.zeros(3), "d": np.arange(3.0)}))


def test_design_structure_with_dummy_interaction():
    gen = np.random.default_rng(0)
    n = 200
    cols = {"y": gen.normal(size=n), "d": gen.normal(size=n), "z": gen.normal(size=n),
            "D": (gen.random(n) < 0.4).astype(float), "x": gen.normal(size=n)}
    spec = ModelSpec(EquationDecl(("x",), (SmoothDecl("z", 6),)),
                     EquationDecl(("x", "D"), (SmoothDecl("d", 6), SmoothDecl("d", 5, by="D"))),
                     EquationDecl((), (SmoothDecl("d", 4),)))
    des = build_design(spec, Dataset(cols))
    assert des.second.n_coef == 1 + 2 + 9 + 8
    assert des.second.coef_names()[:4] == ["beta.const", "beta.x", "beta.D", "beta.s(d)[0]"]
    assert "beta.s(d:D)[0]" in des.second.coef_names()
    block = des.second.matrix[:, des.second.term_slices()[1]]
    assert np.all(block[cols["D"] == 0] == 0)
    assert np.allclose(des.second.matrix[:, des.second.term_slices()[0]].sum(axis=0), 0, atol=1e-10)


def test_restricted_drops_variance_terms():
    data = gen_simple(80, 1)
    des = build_design(smooth_spec("restricted", n_interior=5), data)
    assert des.variance.n_coef == 1 and des.second.n_coef == 9


def test_parse_smooth():
    assert parse_smooth("d") == SmoothDecl("d")
    assert parse_smooth("d:12") == SmoothDecl("d", 12)
    assert parse_smooth("age:auto:2@female") == SmoothDecl("age", None, 2, "female")
    for bad in ("", ":3", "d:x", "d:3:2:1"):
        with pytest.raises(ConfigError):
            parse_smooth(bad)


CONFIG = """
[data]
path = data.csv   # relative to this file
[first_stage]
linear = z
[second_stage]
smooth = d:10, d:6@D
[variance]
smooth = d
[prior]
preset = inflate-eta
Te0 = 5
[mcmc]
iters = 300
burnin = 100
thin = 2
seed = 8
"""


def test_config_parsing(tmp_path):
    cfg = RunConfig.from_string(CONFIG, base=tmp_path)
    assert cfg.data_path == tmp_path / "data.csv"
    assert cfg.second.smooth[1] == SmoothDecl("d", 6, 3, "D")
    assert cfg.priors().Te0 == 5.0 and cfg.priors().a2 == 10.0
    assert (cfg.iters, cfg.burnin, cfg.thin, cfg.seed) == (300, 100, 2, 8)
    assert cfg.columns() == ["y", "d", "z", "D"]
    assert cfg.problems() == []
    assert cfg.digest() == RunConfig.from_string(CONFIG, base=tmp_path).digest()


@pytest.mark.parametrize("text,needle", [
    ("[first_stage]\nlinear=z\n", r"\[data\] path"),
    ("[data]\npath=a.csv\n[prior]\nbogus=1\n", "bogus"),
    ("[data]\npath=a.csv\n[prior]\nTe0=abc\n", "Te0"),
    ("[data]\npath=a.csv\n[mcmc]\niters=ten\n", "numeric"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        RunConfig.from_string(text)


def test_config_problems():
    cfg = RunConfig.from_string("[data]\npath=a.csv\n[model]\nvariant=other\n[mcmc]\niters=5\n"
                                "burnin=5\nthin=0\n[second_stage]\nsmooth=d:1:5\n")
    text = " ".join(cfg.problems())
    for needle in ("variant", "iters > burnin", "thin", "K must be", "degree"):
        assert needle in text


def test_csv_reader(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("y,d\n1,2\n3,4\n")
    cols = read_csv_columns(p)
    assert np.array_equal(cols["d"], [2.0, 4.0])
    for body, needle in (("y,d\n1,\n", "missing"), ("y,d\n1,NA\n", "missing"),
                         ("y,d\n1,x\n", "non-numeric"), ("y,d\n1\n", "expected 2")):
        p.write_text(body)
        with pytest.raises(SchemaError, match=needle):
            read_csv_columns(p)
    with pytest.raises(SchemaError):
        read_csv_columns(tmp_path / "none.csv")
    write_csv_columns(p, {"a": np.array([0.1, 1e-20])})
    assert np.array_equal(read_csv_columns(p)["a"], [0.1, 1e-20])


def test_draws_roundtrip(tmp_path):
    data = gen_simple(120, 3)
    data.columns["D"] = (np.arange(120) % 3 == 0).astype(float)
    spec = ModelSpec(EquationDecl(("z",)),
                     EquationDecl((), (SmoothDecl("d", 5), SmoothDecl("d", 4, 2, "D"))),
                     EquationDecl(("d",)), priors=prior_preset("deflate-eta"))
    draws = run_chain(spec, data, 60, 20, 2, seed=3)
    write_draws(draws, tmp_path)
    back = read_draws(tmp_path, dict(iters=60, burnin=20, thin=2, seed=3))
    assert np.array_equal(back.matrix(), draws.matrix())
    assert back.column_names() == draws.column_names()
    assert all(np.array_equal(a, b) for a, b in zip(back.atoms, draws.atoms))
    assert back.design.priors == draws.design.priors
    grid = np.linspace(-2, 2, 5)
    q1 = structural_quantile(draws, grid, [0.2, 0.8], fixed={"D": 1.0}, rng=numkit.RngStream(1))
    q2 = structural_quantile(back, grid, [0.2, 0.8], fixed={"D": 1.0}, rng=numkit.RngStream(1))
    assert np.array_equal(q1.mean, q2.mean)


def test_read_draws_missing(tmp_path):
    with pytest.raises(SchemaError, match="draws.csv"):
        read_draws(tmp_path)
