"""Dirichlet-process mixture of bivariate normals: state and Gibbs updates.

Each atom ``(mu1, mu2, eta, tau, sigma)`` describes the joint law of the
first-stage residual ``v ~ N(mu1, tau)`` and the second-stage residual
``r2 = eta * (v - mu1) + e`` with ``e ~ N(mu2, s_i * sigma)``. Stick
weights follow the stick-breaking construction and the infinite mixture
is handled with slice variables plus retrospective extension.

All update functions modify the state in place and return it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit
from .errors import InvariantViolation, TruncationOverflow

LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Atom:
    mu1: float
    mu2: float
    eta: float
    tau: float
    sigma: float

    def covariance(self, s: float = 1.0) -> np.ndarray:
        """Joint covariance of (v, r2) at variance-function value ``s``."""
        return atom_covariance(self.eta, self.tau, self.sigma, s)


def atom_covariance(eta, tau, sigma, s=1.0) -> np.ndarray:
    # L diag(tau, s*sigma) L' with L = [[1, 0], [eta, 1]]
    return np.array([[tau, eta * tau], [eta * tau, s * sigma + eta * eta * tau]])


@dataclass
class BaseMeasure:
    """G0: independent normal/normal/normal/IG/IG laws for an atom."""

    theta1: float = 0.0
    theta2: float = 0.0
    m10: float = 100.0
    m20: float = 100.0
    theta_e: float = 0.0
    phi_e: float = 1.0
    t1: float = 2.0
    t2: float = 2.0
    s1: float = 2.0
    s2: float = 1.0

    def sample(self, rng, size: int, fix_eta: bool = False) -> dict[str, np.ndarray]:
        gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
        mu1 = gen.normal(self.theta1, np.sqrt(self.m10), size)
        mu2 = gen.normal(self.theta2, np.sqrt(self.m20), size)
        eta = gen.normal(self.theta_e, np.sqrt(self.phi_e), size)
        tau = numkit.sample_invgamma(self.t1, self.t2, gen, size)
        sigma = numkit.sample_invgamma(self.s1, self.s2, gen, size)
        if fix_eta:
            eta = np.zeros(size)
        return dict(mu1=mu1, mu2=mu2, eta=eta, tau=tau, sigma=sigma)


@dataclass
class HyperPriors:
    """Hyperpriors on G0 and on the DP precision ``a ~ G(a1, a2)``."""

    T10: float = 100.0
    T20: float = 100.0
    e0: float = 0.0
    Te0: float = 10.0
    e1: float = 2.0
    e2: float = 2.0
    a1: float = 2.0
    a2: float = 2.0


ATOM_FIELDS = ("mu1", "mu2", "eta", "tau", "sigma")


@dataclass
class DPState:
    k: np.ndarray
    u: np.ndarray
    omega: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    eta: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    a: float
    base: BaseMeasure
    hyper: HyperPriors
    fix_eta: bool = False
    max_atoms: int | None = None
    n_extended: int = field(default=0, compare=False)

    @classmethod
    def single_cluster(cls, n: int, atom: Atom, base: BaseMeasure, hyper: HyperPriors,
                       a: float = 1.0, fix_eta: bool = False) -> "DPState":
        one = lambda v: np.array([float(v)])  # noqa: E731
        return cls(k=np.zeros(n, dtype=np.intp), u=np.full(n, 0.5), omega=one(0.5),
                   mu1=one(atom.mu1), mu2=one(atom.mu2),
                   eta=one(0.0 if fix_eta else atom.eta), tau=one(atom.tau),
                   sigma=one(atom.sigma), a=a, base=base, hyper=hyper, fix_eta=fix_eta)

    @classmethod
    def from_labels(cls, labels, resid, base: BaseMeasure, hyper: HyperPriors, a: float = 1.0,
                    fix_eta: bool = False, min_size: int = 3) -> "DPState":
        """State with atoms set to per-cluster moments of the residuals.

        Labels are renumbered by decreasing cluster size. Clusters smaller
        than ``min_size`` get pooled moments. Stick weights match the
        cluster shares.
        """
        labels = np.asarray(labels)
        resid = np.asarray(resid, dtype=float)
        n = len(labels)
        _, inv, cnt = np.unique(labels, return_inverse=True, return_counts=True)
        order = np.argsort(-cnt, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        k = rank[inv].astype(np.intp)
        nk = cnt[order]

        def moments(r):
            c = r - r.mean(axis=0)
            v1 = max(c[:, 0].var(), 1e-3)
            eta = 0.0 if fix_eta else float(np.mean(c[:, 0] * c[:, 1]) / v1)
            return eta, v1, max((r[:, 1] - eta * r[:, 0]).var(), 1e-3)

        pooled = moments(resid)
        atoms = []
        for j in range(len(nk)):
            r = resid[k == j]
            shape = moments(r) if len(r) >= min_size else pooled
            atoms.append((r[:, 0].mean(), r[:, 1].mean()) + shape)
        mu1, mu2, eta, tau, sigma = (np.array(c) for c in zip(*atoms))
        pi = nk / n
        left = 1.0 - np.concatenate([[0.0], np.cumsum(pi)[:-1]])
        omega = np.minimum(pi / left, 0.999)
        w = stick_weights(omega)
        # leftover mass < every weight, so the midpoint keeps both slice invariants
        u = 0.5 * (w[k] + (1.0 - w.sum()))
        return cls(k=k, u=u, omega=omega, mu1=mu1, mu2=mu2, eta=eta, tau=tau,
                   sigma=sigma, a=a, base=base, hyper=hyper, fix_eta=fix_eta)

    @property
    def n(self) -> int:
        return len(self.k)

    @property
    def n_atoms(self) -> int:
        return len(self.omega)

    @property
    def weights(self) -> np.ndarray:
        """Stick-breaking weights pi_k for the available atoms."""
        return stick_weights(self.omega)

    def counts(self) -> np.ndarray:
        return np.bincount(self.k, minlength=self.n_atoms)

    def atom(self, j: int) -> Atom:
        return Atom(*(float(getattr(self, f)[j]) for f in ATOM_FIELDS))

    def copy(self) -> "DPState":
        arrays = {f: getattr(self, f).copy() for f in ("k", "u", "omega") + ATOM_FIELDS}
        return replace(self, base=replace(self.base), hyper=replace(self.hyper), **arrays)

    def _truncate(self, size: int):
        for f in ("omega",) + ATOM_FIELDS:
            setattr(self, f, getattr(self, f)[:size])

    def _append(self, omega: np.ndarray, atoms: dict[str, np.ndarray]):
        self.omega = np.concatenate([self.omega, omega])
        for f in ATOM_FIELDS:
            setattr(self, f, np.concatenate([getattr(self, f), atoms[f]]))

    def check(self):
        """Raise InvariantViolation if any structural invariant fails."""
        pi = self.weights
        if self.k.max() >= self.n_atoms:
            raise InvariantViolation("assignment refers to a missing atom")
        if np.any(pi < 0) or pi.sum() > 1 + 1e-12:
            raise InvariantViolation("stick weights out of range")
        if np.any(self.u >= pi[self.k]):
            raise InvariantViolation("slice variable not below its assigned weight")
        if np.cumsum(pi)[-1] <= 1 - self.u.min():
            raise InvariantViolation("available atoms do not cover the slice mass")
        if np.any(self.tau <= 0) or np.any(self.sigma <= 0):
            raise InvariantViolation("non-positive atom variance")


def stick_weights(omega: np.ndarray) -> np.ndarray:
    rest = np.concatenate([[1.0], np.cumprod(1.0 - omega)[:-1]])
    return omega * rest


def update_sticks(state: DPState, rng) -> DPState:
    """omega_k ~ Beta(1 + n_k, n - sum_{l<=k} n_l + a) for every held atom."""
    nk = state.counts()
    tail = state.n - np.cumsum(nk)
    state.omega = numkit.sample_beta(1.0 + nk, tail + state.a, rng)
    return state


def update_slices(state: DPState, rng) -> DPState:
    """u_i ~ U(0, pi_{k_i})."""
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    pik = state.weights[state.k]
    if np.any(pik <= 0):
        raise InvariantViolation("an observation is assigned to an atom with zero weight")
    state.u = gen.random(state.n) * pik
    return state


def extend_atoms(state: DPState, rng) -> DPState:
    """Keep exactly the k* atoms whose weights cover 1 - min(u).

    Atoms past k* are dropped; new sticks ~ Beta(1, a) and atoms ~ G0
    are appended until the covered mass exceeds ``1 - min(u)``.
    """
    threshold = 1.0 - state.u.min()
    cap = state.max_atoms or 10 * state.n
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    while True:
        hit = np.flatnonzero(np.cumsum(state.weights) > threshold)
        if hit.size:
            state._truncate(int(hit[0]) + 1)
            return state
        if state.n_atoms >= cap:
            raise TruncationOverflow(f"more than {cap} mixture components needed "
                                     f"(min slice {state.u.min():.3g})")
        w = numkit.sample_beta(1.0, state.a, gen, 1)
        state._append(w, state.base.sample(gen, 1, state.fix_eta))
        state.n_extended += 1


def _loglik_matrix(state: DPState, r1, r2, s) -> np.ndarray:
    """log N((r1, r2); atom k) for every observation/atom pair, n x K."""
    dv = r1[:, None] - state.mu1[None, :]
    tau = state.tau[None, :]
    ssig = s[:, None] * state.sigma[None, :]
    de = r2[:, None] - state.mu2[None, :] - state.eta[None, :] * dv
    return -LOG2PI - 0.5 * (np.log(tau) + np.log(ssig) + dv * dv / tau + de * de / ssig)


def update_assignments(state: DPState, resid, svals, rng) -> DPState:
    """k_i drawn among atoms with pi_k > u_i, weighted by bivariate likelihood.

    ``resid`` is an ``n x 2`` array of (first-stage, second-stage)
    residuals that exclude the atom means.
    """
    resid = np.asarray(resid, dtype=float)
    ll = _loglik_matrix(state, resid[:, 0], resid[:, 1], np.asarray(svals, dtype=float))
    eligible = state.weights[None, :] > state.u[:, None]
    if not eligible.any(axis=1).all():
        raise InvariantViolation("an observation has no eligible atom")
    ll = np.where(eligible, ll, -np.inf)
    state.k = numkit.sample_categorical_rows(ll, rng)
    return state


def update_precision(state: DPState, rng) -> DPState:
    """Escobar-West auxiliary-variable update for the DP precision."""
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    n = state.n
    nstar = len(np.unique(state.k))
    a1, a2 = state.hyper.a1, state.hyper.a2
    r = gen.beta(state.a + 1.0, n)
    rate = a2 - np.log(r)
    odds = (a1 + nstar - 1.0) / (n * rate)
    shape = a1 + nstar if gen.random() < odds / (1.0 + odds) else a1 + nstar - 1.0
    state.a = float(numkit.sample_gamma(shape, rate, gen))
    return state


def update_atoms(state: DPState, resid, svals, rng) -> DPState:
    """Redraw every held atom from its full conditional.

    Order within an atom: (mu1, mu2) jointly, eta, tau, sigma. Atoms
    with no observations are drawn from G0.
    """
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    resid = np.asarray(resid, dtype=float)
    r1, r2 = resid[:, 0], resid[:, 1]
    s = np.asarray(svals, dtype=float)
    K = state.n_atoms
    k = state.k
    nk = np.bincount(k, minlength=K)
    base = state.base
    sum_ = lambda w: np.bincount(k, weights=w, minlength=K)  # noqa: E731

    # (mu1, mu2): precision sum of Sigma_ki^{-1} plus diag(1/M10, 1/M20)
    eta_i = state.eta[k]
    inv_ss = 1.0 / (s * state.sigma[k])
    inv_tau = 1.0 / state.tau
    p11 = nk * inv_tau + sum_(eta_i * eta_i * inv_ss) + 1.0 / base.m10
    p12 = -sum_(eta_i * inv_ss)
    p22 = sum_(inv_ss) + 1.0 / base.m20
    b1 = inv_tau * sum_(r1) + sum_(eta_i * eta_i * inv_ss * r1 - eta_i * inv_ss * r2) \
        + base.theta1 / base.m10
    b2 = sum_(inv_ss * r2 - eta_i * inv_ss * r1) + base.theta2 / base.m20
    det = p11 * p22 - p12 * p12
    m1 = (p22 * b1 - p12 * b2) / det
    m2 = (p11 * b2 - p12 * b1) / det
    # lower Cholesky factor of the 2x2 precision, then solve L' x = z
    l11 = np.sqrt(p11)
    l21 = p12 / l11
    l22 = np.sqrt(p22 - l21 * l21)
    z1, z2 = gen.standard_normal(K), gen.standard_normal(K)
    x2 = z2 / l22
    x1 = (z1 - l21 * x2) / l11
    state.mu1 = m1 + x1
    state.mu2 = m2 + x2

    dv = r1 - state.mu1[k]
    if not state.fix_eta:
        w = 1.0 / (s * state.sigma[k])
        prec = sum_(dv * dv * w) + 1.0 / base.phi_e
        mean = (sum_(dv * (r2 - state.mu2[k]) * w) + base.theta_e / base.phi_e) / prec
        state.eta = mean + gen.standard_normal(K) / np.sqrt(prec)

    state.tau = numkit.sample_invgamma(base.t1 + 0.5 * nk, base.t2 + 0.5 * sum_(dv * dv), gen)
    de = r2 - state.mu2[k] - state.eta[k] * dv
    state.sigma = numkit.sample_invgamma(base.s1 + 0.5 * nk, base.s2 + 0.5 * sum_(de * de / s), gen)
    return state


def update_base_hyper(state: DPState, rng) -> DPState:
    """Redraw theta1, theta2, theta_e and phi_e given the held atoms."""
    gen = rng.gen if isinstance(rng, numkit.RngStream) else rng
    b, h = state.base, state.hyper
    K = state.n_atoms
    T1 = 1.0 / (K / b.m10 + 1.0 / h.T10)
    b.theta1 = gen.normal(T1 / b.m10 * state.mu1.sum(), np.sqrt(T1))
    T2 = 1.0 / (K / b.m20 + 1.0 / h.T20)
    b.theta2 = gen.normal(T2 / b.m20 * state.mu2.sum(), np.sqrt(T2))
    if state.fix_eta:
        return state
    Te = 1.0 / (K / b.phi_e + 1.0 / h.Te0)
    b.theta_e = gen.normal(Te * (state.eta.sum() / b.phi_e + h.e0 / h.Te0), np.sqrt(Te))
    ssq = np.sum((state.eta - b.theta_e) ** 2)
    b.phi_e = float(numkit.sample_invgamma(h.e1 + 0.5 * K, h.e2 + 0.5 * ssq, gen))
    return state


def recenter(state: DPState, intercepts: dict[str, float], scale: bool = True):
    """Move the observation-average atom location/scale into the intercepts.

    ``intercepts`` holds ``gamma0``, ``beta0`` and ``alpha0``; a shifted
    copy is returned with the state. With ``scale=False`` the log sigma
    constraint is skipped (used when the variance function is fixed).
    """
    out = dict(intercepts)
    m1 = state.mu1[state.k].mean()
    m2 = state.mu2[state.k].mean()
    state.mu1 = state.mu1 - m1
    state.mu2 = state.mu2 - m2
    out["gamma0"] = intercepts["gamma0"] + m1
    out["beta0"] = intercepts["beta0"] + m2
    if scale:
        ms = np.log(state.sigma[state.k]).mean()
        state.sigma = state.sigma * np.exp(-ms)
        out["alpha0"] = intercepts["alpha0"] + ms
    return state, out
