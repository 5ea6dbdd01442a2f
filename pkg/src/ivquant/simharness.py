"""Simulation designs, true structural quantiles and replication studies.

Every design shares a three-component error mixture with equal weights;
the instrument is drawn from a standard normal. Settings ``iv``-``vi``
repeat ``i``-``iii`` with a first-stage variance multiplier ``t(z)``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from . import numkit
from .errors import ConfigError, SchemaError
from .model import Dataset, ModelSpec, linear_spec, prior_preset, smooth_spec
from .quantile import mixture_quantiles, structural_quantile
from .sampler import run_chain

# (mu1, mu2, eta, tau, sigma)
SIMPLE_COMPONENTS = np.array([
    [1.0, -1.0, 2.0, 1.0, 1.0],
    [0.0, 0.0, 0.3, 1.0, 1.0],
    [-1.0, 1.0, 0.8, 1.0, 1.0],
])


def _npdf(x, mean, var):
    return stats.norm.pdf(x, mean, np.sqrt(var))


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class SimDesign:
    """Data-generating process.

    ``f`` is the first-stage mean (including any intercept), ``g`` the
    second-stage mean (including any intercept), ``s`` the second-stage
    variance multiplier and ``t`` the first-stage variance multiplier.
    """

    name: str
    f: Callable
    g: Callable
    s: Callable
    t: Callable = _one
    components: np.ndarray = field(default_factory=lambda: SIMPLE_COMPONENTS.copy())
    smooth: bool = True

    @property
    def weights(self) -> np.ndarray:
        k = len(self.components)
        return np.full(k, 1.0 / k)


def _f_i(z):
    return 1.5 * z + 2.0 * np.exp(-16.0 * z**2)


def _g_i(d):
    return 1.0 + np.sin(d)


def _s_i(d):
    return np.exp(0.5 - 0.3 * d**2)


def _f_ii(z):
    return np.exp(-0.5 * z)


def _g_ii(d):
    return d - 0.5 * d**2


def _s_ii(d):
    return 3.0 * _npdf(d, 1.0, 0.5) + _npdf(d, -1.0, 2.0) + 0.1


def _f_iii(z):
    return 2.0 * z


def _g_iii(d):
    return 3.0 * stats.norm.cdf(d / np.sqrt(2.0))


def _s_iii(d):
    return np.exp(0.2 * d)


def _t_iv(z):
    return np.exp(-0.2 * z)


def _t_v(z):
    return 4.0 * _npdf(z, 0.0, 1.0)


def _t_vi(z):
    return 4.0 * (_npdf(z, 1.0, 0.5) + _npdf(z, -1.0, 0.5))


DESIGNS = {
    "simple": SimDesign("simple", lambda z: 0.0 + 2.0 * z, lambda d: 1.0 + 1.0 * d,
                        lambda d: np.exp(0.0 + 0.3 * d), smooth=False),
    "i": SimDesign("i", _f_i, _g_i, _s_i),
    "ii": SimDesign("ii", _f_ii, _g_ii, _s_ii),
    "iii": SimDesign("iii", _f_iii, _g_iii, _s_iii),
    "iv": SimDesign("iv", _f_i, _g_i, _s_i, _t_iv),
    "v": SimDesign("v", _f_ii, _g_ii, _s_ii, _t_v),
    "vi": SimDesign("vi", _f_iii, _g_iii, _s_iii, _t_vi),
}


def get_design(name: str) -> SimDesign:
    try:
        return DESIGNS[name]
    except KeyError:
        raise ConfigError(f"unknown design {name!r}; choose from {list(DESIGNS)}") from None


def component_correlations(components=SIMPLE_COMPONENTS, s: float = 1.0) -> np.ndarray:
    """corr(v, eta*(v - mu1) + e) for each component at scale ``s``."""
    c = np.asarray(components, dtype=float)
    eta, tau, sigma = c[:, 2], c[:, 3], c[:, 4]
    return eta * tau / np.sqrt(tau * (s * sigma + eta**2 * tau))


def gen_setting(design: SimDesign | str, n: int, seed: int, stream_id: int = 0) -> Dataset:
    if isinstance(design, str):
        design = get_design(design)
    if n < 10:
        raise ConfigError("need n >= 10")
    gen = numkit.RngStream(seed, stream_id).gen
    z = gen.standard_normal(n)
    comp = gen.integers(0, len(design.components), n)
    mu1, mu2, eta, tau, sigma = design.components[comp].T
    v = mu1 + np.sqrt(design.t(z) * tau) * gen.standard_normal(n)
    d = design.f(z) + v
    e = mu2 + np.sqrt(design.s(d) * sigma) * gen.standard_normal(n)
    y = design.g(d) + eta * (v - mu1) + e
    return Dataset({"y": y, "d": d, "z": z})


def gen_simple(n: int, seed: int, stream_id: int = 0) -> Dataset:
    return gen_setting(DESIGNS["simple"], n, seed, stream_id)


def true_quantile(design: SimDesign | str, d, p) -> np.ndarray:
    """g(d) + Q_e(p) with e an equal-weight mixture of N(mu2, s(d) sigma).

    Returns an array of shape ``(len(d), len(p))``.
    """
    if isinstance(design, str):
        design = get_design(design)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    c = design.components
    sd = np.sqrt(design.s(d)[:, None] * c[None, :, 4])
    q = mixture_quantiles(design.weights[None, :], c[None, :, 1], sd, p)
    return design.g(d)[:, None] + q


def model_for(design: SimDesign, variant: str, n: int, preset: str = "default") -> ModelSpec:
    priors = prior_preset(preset)
    if design.smooth:
        return smooth_spec(variant, priors)
    return linear_spec(variant, priors)


@dataclass
class FitPlan:
    """One model fitted to every replication."""

    label: str
    variant: str = "proposed"
    preset: str = "default"


def default_plans(variants=("proposed", "restricted", "uncorrected")) -> list[FitPlan]:
    return [FitPlan(v, v) for v in variants]


@dataclass
class ReplicationResult:
    rep: int
    d: np.ndarray
    p: np.ndarray
    estimates: dict[str, np.ndarray]  # label -> G x P posterior means
    truth: np.ndarray
    seconds: dict[str, float] = field(default_factory=dict)


def common_grid(datasets: list[Dataset], size: int = 100) -> np.ndarray:
    lo = max(ds.d.min() for ds in datasets)
    hi = min(ds.d.max() for ds in datasets)
    if not hi > lo:
        raise SchemaError("replications share no common range of d")
    return np.linspace(lo, hi, size)


def _fit_one(args):
    (design_name, n, rep, plan, seed, grid, p, iters, burnin, thin, M) = args
    design = get_design(design_name)
    data = gen_setting(design, n, seed, stream_id=rep)
    spec = model_for(design, plan.variant, n, plan.preset)
    stream = 1_000_000 + 1000 * rep + _plan_index(plan)
    draws = run_chain(spec, data, iters, burnin, thin, seed, stream_id=stream)
    qg = structural_quantile(draws, grid, p, M=M, rng=numkit.RngStream(seed, stream + 500))
    return rep, plan.label, qg.mean, draws.info["seconds"]


def _plan_index(plan: FitPlan) -> int:
    # stable small integer per (variant, preset) so streams do not depend on plan order
    variants = ("proposed", "restricted", "uncorrected")
    presets = ("default", "deflate-eta", "inflate-eta")
    return 10 * variants.index(plan.variant) + presets.index(plan.preset)


def run_study(design_name: str, n: int, R: int, plans: list[FitPlan] | None = None,
              seed: int = 1, iters: int = 6000, burnin: int = 1000, thin: int = 5,
              p_levels=(0.1, 0.5, 0.9), grid_size: int = 100, M: int = 10,
              workers: int | None = None, progress=None) -> list[ReplicationResult]:
    """Generate R datasets, fit every plan to each, collect posterior-mean quantiles."""
    design = get_design(design_name)
    plans = plans or default_plans()
    datasets = [gen_setting(design, n, seed, stream_id=r) for r in range(R)]
    grid = common_grid(datasets, grid_size)
    p = np.asarray(p_levels, dtype=float)
    tasks = [(design_name, n, r, plan, seed, grid, p, iters, burnin, thin, M)
             for r in range(R) for plan in plans]
    workers = workers or 1
    results = {r: ReplicationResult(r, grid, p, {}, true_quantile(design, grid, p)) for r in range(R)}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = pool.map(_fit_one, tasks)
            for rep, label, mean, secs in outputs:
                results[rep].estimates[label] = mean
                results[rep].seconds[label] = secs
                if progress:
                    progress(rep, label)
    else:
        for task in tasks:
            rep, label, mean, secs = _fit_one(task)
            results[rep].estimates[label] = mean
            results[rep].seconds[label] = secs
            if progress:
                progress(rep, label)
    return [results[r] for r in range(R)]


def bias_rmse(results: list[ReplicationResult], label: str) -> tuple[np.ndarray, np.ndarray]:
    """Per grid point and level: mean error and root mean squared error over replications."""
    if not results:
        raise SchemaError("no replications")
    ref = results[0]
    for r in results[1:]:
        if r.d.shape != ref.d.shape or not np.array_equal(r.d, ref.d) or not np.array_equal(r.p, ref.p):
            raise SchemaError("replications do not share the same grid")
    err = np.stack([r.estimates[label] - r.truth for r in results])
    return err.mean(axis=0), np.sqrt((err**2).mean(axis=0))


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
