"""Gibbs sampler for the IV location-scale model with a DP mixture error.

One sweep updates, in order: stick weights, slice variables, the
retrospective atom extension, assignments, the DP precision, atoms,
base-measure hyperparameters, the identifiability recentering, the
joint mean coefficients of both equations, the variance-function
coefficients (auxiliary mixture) and the smoothing variances. Every step
draws from an exact full conditional.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2

from . import dpm, numkit
from .auxmix import MixtureTable
from .dpm import BaseMeasure, DPState, HyperPriors
from .errors import ConfigError, IVQuantError, SamplerError
from .model import Dataset, Design, ModelSpec, build_design

RESID_FLOOR = 1e-300


@dataclass
class CoefState:
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    phi_f: np.ndarray
    phi_g: np.ndarray
    phi_h: np.ndarray

    def copy(self) -> "CoefState":
        return CoefState(*(getattr(self, f).copy() for f in
                           ("gamma", "beta", "alpha", "phi_f", "phi_g", "phi_h")))

    def intercepts(self) -> dict[str, float]:
        return dict(gamma0=self.gamma[0], beta0=self.beta[0], alpha0=self.alpha[0])

    def set_intercepts(self, values: dict[str, float]):
        self.gamma[0] = values["gamma0"]
        self.beta[0] = values["beta0"]
        self.alpha[0] = values["alpha0"]


@dataclass
class ChainDraws:
    """Thinned posterior draws.

    ``atoms[t]`` is a ``k* x 6`` array with columns
    (pi, mu1, mu2, eta, tau, sigma) for retained draw ``t``.
    """

    design: Design
    iterations: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    phi: np.ndarray
    scalars: dict[str, np.ndarray]
    atoms: list[np.ndarray]
    total: int
    burnin: int
    thin: int
    seed: int
    info: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.iterations)

    @property
    def phi_names(self) -> list[str]:
        names = []
        for tag, eq in (("phi_f", self.design.first), ("phi_g", self.design.second),
                        ("phi_h", self.design.variance)):
            names += [f"{tag}({t.label})" for t in eq.terms]
        return names

    def column_names(self) -> list[str]:
        return (self.design.first.coef_names() + self.design.second.coef_names()
                + self.design.variance.coef_names() + self.phi_names + list(self.scalars))

    def matrix(self) -> np.ndarray:
        cols = [self.gamma, self.beta, self.alpha, self.phi]
        cols += [v[:, None] for v in self.scalars.values()]
        return np.hstack(cols)

    def series(self, name: str) -> np.ndarray:
        return self.matrix()[:, self.column_names().index(name)]


def retained_count(total: int, burnin: int, thin: int) -> int:
    return (total - burnin) // thin


def _block_sum(rows: np.ndarray, weights: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return (rows * weights[:, None]).T @ cols


def update_mean_coefficients(design: Design, dp: DPState, coefs: CoefState, svals, rng) -> CoefState:
    """Joint Gaussian draw of (gamma, beta) given the mixture state."""
    Z, X = design.first.matrix, design.second.matrix
    k = dp.k
    eta = dp.eta[k]
    inv_ss = 1.0 / (svals * dp.sigma[k])
    p11 = 1.0 / dp.tau[k] + eta * eta * inv_ss
    p12 = -eta * inv_ss
    p22 = inv_ss
    y1 = design.d - dp.mu1[k]
    y2 = design.y - dp.mu2[k]
    pz = Z.shape[1]
    prec = np.empty((pz + X.shape[1],) * 2)
    prec[:pz, :pz] = _block_sum(Z, p11, Z) + design.first.prior_precision(coefs.phi_f)
    prec[:pz, pz:] = _block_sum(Z, p12, X)
    prec[pz:, :pz] = prec[:pz, pz:].T
    prec[pz:, pz:] = _block_sum(X, p22, X) + design.second.prior_precision(coefs.phi_g)
    rhs = np.concatenate([Z.T @ (p11 * y1 + p12 * y2), X.T @ (p12 * y1 + p22 * y2)])
    draw, _ = numkit.sample_mvn_precision(prec, rhs, rng)
    coefs.gamma = design.first.project_constant(draw[:pz])
    coefs.beta = design.second.project_constant(draw[pz:])
    return coefs


def variance_transform(design: Design, dp: DPState, coefs: CoefState):
    """Return (y*, number of floored residuals) for the log-variance regression."""
    k = dp.k
    r1 = design.d - design.first.matrix @ coefs.gamma
    r2 = design.y - design.second.matrix @ coefs.beta
    e = r2 - dp.mu2[k] - dp.eta[k] * (r1 - dp.mu1[k])
    e2 = e * e
    floored = int(np.count_nonzero(e2 < RESID_FLOOR))
    ystar = np.log(np.maximum(e2, RESID_FLOOR)) - np.log(dp.sigma[k])
    return ystar, floored


def update_variance_coefficients(design: Design, dp: DPState, coefs: CoefState,
                                 table: MixtureTable, rng) -> tuple[CoefState, int]:
    """Auxiliary-mixture draw of the log-variance coefficients.

    Returns the updated state and the count of zero residuals floored
    before taking logs.
    """
    W = design.variance.matrix
    ystar, floored = variance_transform(design, dp, coefs)
    logp = table.log_component_density(ystar - W @ coefs.alpha)
    h = numkit.sample_categorical_rows(logp, rng)
    inv_z = 1.0 / table.variances[h]
    prec = _block_sum(W, inv_z, W) + design.variance.prior_precision(coefs.phi_h)
    rhs = W.T @ ((ystar - table.means[h]) * inv_z)
    draw, _ = numkit.sample_mvn_precision(prec, rhs, rng)
    coefs.alpha = design.variance.project_constant(draw)
    return coefs, floored


def update_smoothing(design: Design, coefs: CoefState, rng, include_variance: bool = True) -> CoefState:
    """phi ~ IG(a_phi + rank/2, b_phi + c' Delta c / 2) for every smooth term."""
    pr = design.priors
    groups = [("phi_f", design.first, coefs.gamma), ("phi_g", design.second, coefs.beta)]
    if include_variance:
        groups.append(("phi_h", design.variance, coefs.alpha))
    for attr, eq, coef in groups:
        phis = getattr(coefs, attr).copy()
        for j, (t, sl) in enumerate(zip(eq.terms, eq.term_slices())):
            c = coef[sl]
            phis[j] = numkit.sample_invgamma(pr.a_phi + 0.5 * t.penalty_rank,
                                             pr.b_phi + 0.5 * c @ t.penalty @ c, rng)
        setattr(coefs, attr, phis)
    return coefs


def initial_cluster_count(n: int) -> int:
    return max(1, min(10, n // 20))


def initial_labels(resid: np.ndarray, k0: int) -> np.ndarray:
    """Deterministic k-means labels on standardized residuals.

    Gibbs moves merge surplus clusters quickly but rarely split a wide
    one, so chains start from several clusters.
    """
    n = len(resid)
    if k0 <= 1 or n < 2 * k0:
        return np.zeros(n, dtype=np.intp)
    sd = resid.std(axis=0)
    z = (resid - resid.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    _, labels = kmeans2(z, k0, minit="++", seed=np.random.default_rng(0))
    return labels


class GibbsSampler:
    """Holds the design, current state and sweep schedule for one chain."""

    def __init__(self, spec: ModelSpec, data: Dataset, table: MixtureTable | None = None,
                 check_invariants: bool = False, init_clusters: int | None = None):
        self.spec = spec
        self.init_clusters = init_clusters
        self.design = build_design(spec, data)
        self.table = table or MixtureTable.default()
        self.table.validate()
        self.check_invariants = check_invariants
        self.floored_residuals = 0
        self.coefs, self.dp = self._initial_state()
        self._refresh()

    def _pls(self, eq, target):
        A = eq.matrix.T @ eq.matrix + eq.prior_precision(np.ones(len(eq.terms)))
        return eq.project_constant(numkit.solve_spd(A, eq.matrix.T @ target))

    def _initial_state(self):
        des, pr = self.design, self.design.priors
        gamma = self._pls(des.first, des.d)
        beta = self._pls(des.second, des.y)
        alpha = np.zeros(des.variance.n_coef)
        coefs = CoefState(gamma, beta, alpha, np.ones(len(des.first.terms)),
                          np.ones(len(des.second.terms)), np.ones(len(des.variance.terms)))
        base = BaseMeasure(0.0, 0.0, pr.m10, pr.m20, pr.e0, pr.e2 / max(pr.e1 - 1.0, 1.0),
                           pr.t1, pr.t2, pr.s1, pr.s2)
        hyper = HyperPriors(pr.T10, pr.T20, pr.e0, pr.Te0, pr.e1, pr.e2, pr.a1, pr.a2)
        if self.spec.fixed_atom is not None:
            atom = self.spec.fixed_atom
            dp = DPState.single_cluster(des.n, atom, base, hyper, fix_eta=self.spec.fix_eta)
            dp.omega[:] = 1.0
            return coefs, dp
        r1 = des.d - des.first.matrix @ gamma
        r2 = des.y - des.second.matrix @ beta
        k0 = self.init_clusters if self.init_clusters is not None else initial_cluster_count(des.n)
        labels = initial_labels(np.column_stack([r1, r2]), k0)
        dp = DPState.from_labels(labels, np.column_stack([r1, r2]), base, hyper, a=1.0,
                                 fix_eta=self.spec.fix_eta)
        dp, shifted = dpm.recenter(dp, coefs.intercepts(), scale=not self.spec.unit_scale)
        coefs.set_intercepts(shifted)
        return coefs, dp

    def _refresh(self):
        des = self.design
        self.r1 = des.d - des.first.matrix @ self.coefs.gamma
        self.r2 = des.y - des.second.matrix @ self.coefs.beta
        if self.spec.unit_scale:
            self.svals = np.ones(des.n)
        else:
            self.svals = np.exp(des.variance.matrix @ self.coefs.alpha)

    @property
    def resid(self) -> np.ndarray:
        return np.column_stack([self.r1, self.r2])

    def sweep(self, rng):
        dp = self.dp
        if self.spec.fixed_atom is None:
            dpm.update_sticks(dp, rng)
            dpm.update_slices(dp, rng)
            dpm.extend_atoms(dp, rng)
            dpm.update_assignments(dp, self.resid, self.svals, rng)
            dpm.update_precision(dp, rng)
            dpm.update_atoms(dp, self.resid, self.svals, rng)
            dpm.update_base_hyper(dp, rng)
            _, shifted = dpm.recenter(dp, self.coefs.intercepts(), scale=not self.spec.unit_scale)
            self.coefs.set_intercepts(shifted)
        update_mean_coefficients(self.design, dp, self.coefs, self.svals, rng)
        if not self.spec.unit_scale:
            _, floored = update_variance_coefficients(self.design, dp, self.coefs, self.table, rng)
            self.floored_residuals += floored
        update_smoothing(self.design, self.coefs, rng, include_variance=not self.spec.unit_scale)
        self._refresh()
        if self.check_invariants:
            dp.check()

    def snapshot(self) -> tuple[np.ndarray, dict[str, float], np.ndarray]:
        c, dp = self.coefs, self.dp
        coef_row = np.concatenate([c.gamma, c.beta, c.alpha, c.phi_f, c.phi_g, c.phi_h])
        scalars = dict(a=dp.a, theta1=dp.base.theta1, theta2=dp.base.theta2,
                       theta_e=dp.base.theta_e, phi_e=dp.base.phi_e,
                       n_clusters=float(len(np.unique(dp.k))), kstar=float(dp.n_atoms))
        atoms = np.column_stack([dp.weights, dp.mu1, dp.mu2, dp.eta, dp.tau, dp.sigma])
        return coef_row, scalars, atoms

    def run(self, iters: int, burnin: int, thin: int, seed: int, stream_id: int = 0,
            progress=None) -> ChainDraws:
        if not iters > burnin >= 0 or thin < 1:
            raise ConfigError("need iters > burnin >= 0 and thin >= 1")
        rng = numkit.RngStream(seed, stream_id)
        des = self.design
        rows, scal, atoms, its = [], [], [], []
        t0 = time.perf_counter()
        for it in range(1, iters + 1):
            try:
                self.sweep(rng)
            except IVQuantError as exc:
                raise SamplerError(it, exc) from exc
            if it > burnin and (it - burnin) % thin == 0:
                r, s, a = self.snapshot()
                rows.append(r)
                scal.append(s)
                atoms.append(a)
                its.append(it)
            if progress is not None:
                progress(it)
        elapsed = time.perf_counter() - t0
        pz, px, pw = des.first.n_coef, des.second.n_coef, des.variance.n_coef
        nphi = len(des.first.terms) + len(des.second.terms) + len(des.variance.terms)
        mat = np.array(rows).reshape(len(rows), pz + px + pw + nphi)
        names = self.snapshot()[1] if not scal else scal[0]
        scalars = {k: np.array([s[k] for s in scal], dtype=float) for k in names}
        return ChainDraws(
            design=des, iterations=np.array(its, dtype=int),
            gamma=mat[:, :pz], beta=mat[:, pz:pz + px], alpha=mat[:, pz + px:pz + px + pw],
            phi=mat[:, pz + px + pw:], scalars=scalars, atoms=atoms,
            total=iters, burnin=burnin, thin=thin, seed=seed,
            info=dict(stream_id=stream_id, seconds=elapsed,
                      floored_residuals=self.floored_residuals, variant=self.spec.variant))


def run_chain(spec: ModelSpec, data: Dataset, iters: int, burnin: int, thin: int, seed: int,
              stream_id: int = 0, check_invariants: bool = False,
              init_clusters: int | None = None) -> ChainDraws:
    return GibbsSampler(spec, data, check_invariants=check_invariants,
                        init_clusters=init_clusters).run(
        iters, burnin, thin, seed, stream_id)
