import numpy as np
import pytest
from scipy import stats

from ivquant.errors import ConfigError, SchemaError
from ivquant.simharness import (DESIGNS, SIMPLE_COMPONENTS, FitPlan, ReplicationResult, bias_rmse,
                                common_grid, component_correlations, gen_setting, get_design,
                                run_study, true_quantile)


def test_component_correlations():
    rho = component_correlations(SIMPLE_COMPONENTS)
    eta = SIMPLE_COMPONENTS[:, 2]
    assert np.allclose(rho, eta / np.sqrt(1 + eta**2), atol=1e-15)
    assert rho[0] == pytest.approx(2 / np.sqrt(5), abs=1e-15)
    assert np.allclose(rho[:2], [0.894, 0.287], atol=5e-4)
    # the third value is 0.62470; the published three-digit figure is truncated
    assert round(rho[2], 3) == 0.625


def test_correlation_against_simulation():
    gen = np.random.default_rng(0)
    v = gen.normal(size=400_000)
    e = 0.8 * v + gen.normal(size=400_000)
    assert component_correlations([[0, 0, 0.8, 1, 1]])[0] == pytest.approx(np.corrcoef(v, e)[0, 1], abs=0.005)


def test_first_stage_error_mean():
    data = gen_setting("simple", 1_000_000, 1)
    v = data.d - 2 * data.columns["z"]
    assert abs(v.mean()) < 3 * np.sqrt(1 + 2 / 3) / 1000


def test_setting_functions():
    assert DESIGNS["i"].f(0.0) == pytest.approx(2.0)
    assert DESIGNS["iii"].g(0.0) == pytest.approx(1.5)
    expected = 3 / np.sqrt(np.pi) + np.exp(-1.0) / np.sqrt(4 * np.pi) + 0.1
    assert DESIGNS["ii"].s(1.0) == pytest.approx(expected, rel=1e-12)
    assert DESIGNS["v"].t(0.0) == pytest.approx(4 / np.sqrt(2 * np.pi))
    assert DESIGNS["i"].t(0.3) == 1.0
    assert DESIGNS["simple"].g(0.0) == 1.0 and DESIGNS["simple"].s(0.0) == 1.0


def test_generator_determinism_and_streams():
    a = gen_setting("ii", 50, 3, stream_id=1)
    b = gen_setting("ii", 50, 3, stream_id=1)
    c = gen_setting("ii", 50, 3, stream_id=2)
    assert all(np.array_equal(a.columns[k], b.columns[k]) for k in "ydz")
    assert not np.allclose(a.d, c.d)


def test_unknown_design():
    with pytest.raises(ConfigError):
        get_design("vii")


def test_true_quantile_simple():
    assert true_quantile("simple", [0.0], [0.5])[0, 0] == pytest.approx(1.0, abs=1e-8)
    q = true_quantile("simple", np.linspace(-2, 2, 5), np.linspace(0.05, 0.95, 19))
    assert np.all(np.diff(q, axis=1) > 0)


def test_true_quantile_symmetric_reduction():
    base = DESIGNS["iii"]
    sym = type(base)("sym", base.f, base.g, base.s, components=np.array([[0.0, 0.0, 0.5, 1, 1]]))
    d = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(true_quantile(sym, d, [0.5])[:, 0], base.g(d), atol=1e-8)
    assert np.allclose(true_quantile(sym, d, [0.9])[:, 0],
                       base.g(d) + stats.norm.ppf(0.9) * np.sqrt(base.s(d)), atol=1e-7)


def _result(offsets, d=np.zeros(3), p=np.array([0.5])):
    truth = np.ones((len(d), len(p)))
    return [ReplicationResult(r, d, p, {"m": truth + c}, truth) for r, c in enumerate(offsets)]


def test_bias_rmse_definitions():
    b, r = bias_rmse(_result([0.0, 0.0]), "m")
    assert np.all(b == 0) and np.all(r == 0)
    b, r = bias_rmse(_result([0.3]), "m")
    assert np.allclose(b, 0.3) and np.allclose(r, 0.3)
    b, r = bias_rmse(_result([0.4, -0.4]), "m")
    assert np.allclose(b, 0.0) and np.allclose(r, 0.4)


def test_bias_rmse_grid_mismatch():
    res = _result([0.1]) + _result([0.1], d=np.ones(3))
    with pytest.raises(SchemaError):
        bias_rmse(res, "m")


def test_common_grid():
    ds = [gen_setting("simple", 100, 1, r) for r in range(3)]
    g = common_grid(ds, 50)
    assert g[0] == max(x.d.min() for x in ds) and g[-1] == min(x.d.max() for x in ds)


def test_run_study_structure():
    plans = [FitPlan("proposed"), FitPlan("restricted", "restricted")]
    res = run_study("simple", 80, 2, plans, seed=5, iters=40, burnin=10, thin=2,
                    p_levels=(0.1, 0.9), grid_size=7, M=3)
    assert len(res) == 2
    for r in res:
        assert set(r.estimates) == {"proposed", "restricted"}
        assert r.estimates["proposed"].shape == (7, 2) == r.truth.shape
    again = run_study("simple", 80, 2, plans, seed=5, iters=40, burnin=10, thin=2,
                      p_levels=(0.1, 0.9), grid_size=7, M=3)
    assert np.array_equal(res[1].estimates["restricted"], again[1].estimates["restricted"])
