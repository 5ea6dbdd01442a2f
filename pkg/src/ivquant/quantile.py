"""Posterior predictive error law, structural quantile curves, diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import numkit
from .errors import BracketError, DomainError, EmptyChain
from .sampler import ChainDraws

QUANTILE_TOL = 1e-8


@dataclass
class PredictiveMixture:
    """One posterior draw of G: held atoms plus M draws standing in for G0.

    The remainder mass ``1 - sum(weights)`` is spread evenly over the G0
    draws.
    """

    weights: np.ndarray
    atoms: np.ndarray  # k x 5: mu1, mu2, eta, tau, sigma
    remainder: float
    g0: np.ndarray  # M x 5, same columns

    def components(self) -> tuple[np.ndarray, np.ndarray]:
        """All weights and atoms, G0 draws last."""
        m = len(self.g0)
        w = np.concatenate([self.weights, np.full(m, self.remainder / m if m else 0.0)])
        return w, np.vstack([self.atoms, self.g0]) if m else self.atoms

    def total_mass(self) -> float:
        return float(self.weights.sum() + (self.remainder if len(self.g0) else 0.0))


def draw_g0(design, scalars_t: dict[str, float], m: int, rng) -> np.ndarray:
    """``m`` atoms from the base measure at one draw's hyperparameters."""
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    pr = design.priors
    mu1 = gen.normal(scalars_t["theta1"], np.sqrt(pr.m10), m)
    mu2 = gen.normal(scalars_t["theta2"], np.sqrt(pr.m20), m)
    if design.spec.fix_eta:
        eta = np.zeros(m)
    else:
        eta = gen.normal(scalars_t["theta_e"], np.sqrt(scalars_t["phi_e"]), m)
    tau = numkit.sample_invgamma(pr.t1, pr.t2, gen, m)
    sigma = numkit.sample_invgamma(pr.s1, pr.s2, gen, m)
    return np.column_stack([mu1, mu2, eta, tau, sigma])


def predictive_mixtures(draws: ChainDraws, M: int = 10, rng=None) -> list[PredictiveMixture]:
    if len(draws) == 0:
        raise EmptyChain("no retained draws")
    if M < 0:
        raise DomainError("M must be nonnegative")
    rng = rng if rng is not None else numkit.RngStream(draws.seed, 1 + draws.info.get("stream_id", 0))
    out = []
    for t, atoms in enumerate(draws.atoms):
        scal = {k: v[t] for k, v in draws.scalars.items()}
        w = atoms[:, 0]
        out.append(PredictiveMixture(w, atoms[:, 1:], max(0.0, 1.0 - w.sum()),
                                     draw_g0(draws.design, scal, M, rng) if M else np.empty((0, 5))))
    return out


def _bvn_density(e1, e2, mu1, mu2, eta, tau, ssig):
    dv = e1 - mu1
    de = e2 - mu2 - eta * dv
    return np.exp(-0.5 * (dv * dv / tau + de * de / ssig)) / (2 * np.pi * np.sqrt(tau * ssig))


def mixture_density(mix: PredictiveMixture, e1, e2, s: float = 1.0) -> np.ndarray:
    e1 = np.asarray(e1, dtype=float)[..., None]
    e2 = np.asarray(e2, dtype=float)[..., None]
    w, at = mix.components()
    dens = _bvn_density(e1, e2, at[:, 0], at[:, 1], at[:, 2], at[:, 3], s * at[:, 4])
    return dens @ w


def error_density(draws: ChainDraws, e1_grid, e2_grid, M: int = 10, s: float = 1.0,
                  rng=None) -> np.ndarray:
    """Posterior predictive density of (first-stage, second-stage) errors.

    Evaluated on the outer grid ``e1_grid x e2_grid`` at variance-function
    value ``s``; returns an array of shape ``(len(e1_grid), len(e2_grid))``.
    """
    mixes = predictive_mixtures(draws, M, rng)
    E1, E2 = np.meshgrid(np.asarray(e1_grid, float), np.asarray(e2_grid, float), indexing="ij")
    total = np.zeros_like(E1)
    for mix in mixes:
        total += mixture_density(mix, E1, E2, s)
    return total / len(mixes)


def _cdf(e, w, mu, sd):
    return np.sum(w * special.ndtr((e[..., None] - mu) / sd), axis=-1)


def error_cdf(mix: PredictiveMixture, e, s: float = 1.0):
    """F(e | s) of the second-stage error for one draw of G."""
    w, at = mix.components()
    e = np.asarray(e, dtype=float)
    return _cdf(e, w, at[:, 1], np.sqrt(s * at[:, 4]))


def mixture_quantiles(w, mu, sd, p, tol: float = QUANTILE_TOL) -> np.ndarray:
    """Vectorized bisection for quantiles of normal mixtures.

    ``w``, ``mu``, ``sd`` have shape ``(..., K)``; ``p`` has shape ``(P,)``.
    Returns ``(..., P)``. Every level shares one bracket and one iteration
    count per mixture, so results are nondecreasing in ``p``.
    """
    w, mu, sd = np.broadcast_arrays(np.asarray(w, float), np.asarray(mu, float),
                                    np.asarray(sd, float))
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise DomainError("probability levels must lie in (0, 1)")
    wn = w / w.sum(axis=-1, keepdims=True)
    center = np.sum(wn * mu, axis=-1)
    live = wn > 0
    half = (10.0 * np.max(np.where(live, sd, 0.0), axis=-1)
            + np.max(np.where(live, np.abs(mu - center[..., None]), 0.0), axis=-1))
    pmin, pmax = p.min(), p.max()
    for _ in range(3):
        lo, hi = center - half, center + half
        ok = (_cdf(lo, wn, mu, sd) <= pmin) & (_cdf(hi, wn, mu, sd) >= pmax)
        if ok.all():
            break
        half = np.where(ok, half, 2.0 * half)
    else:
        raise BracketError("could not bracket the quantile after widening twice")
    n_iter = max(1, int(math.ceil(math.log2(max(2 * half.max(), tol) / tol))))
    lo = np.repeat(lo[..., None], len(p), axis=-1)
    hi = np.repeat(hi[..., None], len(p), axis=-1)
    wn, mu, sd = wn[..., None, :], mu[..., None, :], sd[..., None, :]
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = np.sum(wn * special.ndtr((mid[..., None] - mu) / sd), axis=-1) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def error_quantile(mix: PredictiveMixture, p: float, s: float = 1.0) -> float:
    w, at = mix.components()
    return float(mixture_quantiles(w, at[:, 1], np.sqrt(s * at[:, 4]), [p])[0])


@dataclass
class QuantileGrid:
    """Structural quantiles over a grid of the endogenous covariate.

    ``mean``, ``lower`` and ``upper`` have shape ``(G, P)``; ``samples``
    (when kept) has shape ``(T, G, P)``.
    """

    label: str
    d: np.ndarray
    p: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    samples: np.ndarray | None = None

    def rows(self):
        """Long-format rows (label, d, p, mean, lower95, upper95) sorted by (d, p)."""
        for g, dv in enumerate(self.d):
            for j, pv in enumerate(self.p):
                yield (self.label, dv, pv, self.mean[g, j], self.lower[g, j], self.upper[g, j])


def grid_columns(design, dgrid, fixed: dict[str, float] | None = None) -> dict[str, np.ndarray]:
    """Covariate columns along the grid; other covariates fixed (default: sample mean)."""
    fixed = dict(fixed or {})
    dgrid = np.asarray(dgrid, dtype=float)
    cols = {}
    for label, mean in design.covariate_means.items():
        cols[label] = np.full(len(dgrid), float(fixed.get(label, mean)))
    cols[design.endogenous] = dgrid
    return cols


def structural_quantile(draws: ChainDraws, dgrid, p_levels, fixed=None, M: int = 10, rng=None,
                        label: str = "S", keep_samples: bool = False, level: float = 0.95,
                        chunk_elems: int = 2_000_000) -> QuantileGrid:
    """Posterior of intercept + second-stage terms + error quantile along ``dgrid``."""
    des = draws.design
    mixes = predictive_mixtures(draws, M, rng)
    cols = grid_columns(des, dgrid, fixed)
    X = des.second.rows(cols)
    W = des.variance.rows(cols)
    p = np.asarray(p_levels, dtype=float)
    loc = draws.beta @ X.T  # T x G
    if des.spec.unit_scale:
        scale = np.ones_like(loc)
    else:
        scale = np.exp(draws.alpha @ W.T)
    T, G = loc.shape
    kmax = max(len(m.components()[0]) for m in mixes)
    wpad = np.zeros((T, kmax))
    mupad = np.zeros((T, kmax))
    sigpad = np.ones((T, kmax))
    for t, m in enumerate(mixes):
        w, at = m.components()
        wpad[t, :len(w)] = w
        mupad[t, :len(w)] = at[:, 1]
        sigpad[t, :len(w)] = at[:, 4]
    samples = np.empty((T, G, len(p)))
    step = max(1, chunk_elems // max(1, G * len(p) * kmax))
    for a in range(0, T, step):
        b = min(T, a + step)
        sd = np.sqrt(scale[a:b, :, None] * sigpad[a:b, None, :])
        q = mixture_quantiles(wpad[a:b, None, :], mupad[a:b, None, :], sd, p)
        samples[a:b] = loc[a:b, :, None] + q
    tail = 0.5 * (1.0 - level)
    lower, upper = np.quantile(samples, [tail, 1.0 - tail], axis=0)
    return QuantileGrid(label, np.asarray(dgrid, float), p, samples.mean(axis=0), lower, upper,
                        samples if keep_samples else None)


def parzen(u):
    u = np.abs(np.asarray(u, dtype=float))
    return np.where(u <= 0.5, 1 - 6 * u**2 + 6 * u**3, np.where(u <= 1, 2 * (1 - u) ** 3, 0.0))


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    x = np.asarray(x, dtype=float) - np.mean(x)
    n = len(x)
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    return acov / acov[0]


def inefficiency_factor(series, full_output: bool = False):
    """1 + 2 * sum of Parzen-weighted autocorrelations.

    The bandwidth is ``min(200, len(series) // 5)``. A constant series
    gives 1.0; with ``full_output=True`` the return is
    ``(value, zero_variance)``.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 100:
        raise DomainError("inefficiency factor needs at least 100 draws")
    if np.ptp(x) == 0:
        return (1.0, True) if full_output else 1.0
    L = min(200, len(x) // 5)
    rho = autocorrelation(x, L)[1:]
    value = float(1.0 + 2.0 * np.sum(parzen(np.arange(1, L + 1) / L) * rho))
    return (value, False) if full_output else value
