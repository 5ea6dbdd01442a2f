"""Random variates and small dense SPD linear algebra used by the samplers.

Inverse-gamma variates use the (shape, rate) convention throughout:
density proportional to ``x**(-shape - 1) * exp(-rate / x)``, so the
mean is ``rate / (shape - 1)``. Conjugate updates add half sums of
squares to the rate.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .errors import DomainError, EmptySupport, SingularCovariance


class RngStream:
    """Reproducible, splittable random stream.

    A ``(seed, stream_id)`` pair maps to an independent PCG64 generator
    through :class:`numpy.random.SeedSequence` spawn keys, so every chain
    or replication can own its own stream.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        if seed < 0 or stream_id < 0:
            raise DomainError("seed and stream_id must be nonnegative")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def child(self, stream_id: int) -> "RngStream":
        """Another stream derived from the same seed."""
        return RngStream(self.seed, stream_id)


def _as_gen(rng) -> np.random.Generator:
    return rng.gen if isinstance(rng, RngStream) else rng


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises SingularCovariance naming the pivot."""
    a = np.asarray(a, dtype=float)
    c, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise SingularCovariance(info - 1)
    if info < 0:
        raise DomainError(f"invalid argument {-info} to dpotrf")
    return c


def sample_mvn(mean, cov, rng) -> np.ndarray:
    """Draw from N(mean, cov) via the Cholesky factor of ``cov``.

    An exactly-zero covariance returns ``mean`` unchanged.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise DomainError("covariance dimension does not match mean length")
    if not cov.any():
        return mean.copy()
    chol = cholesky(cov)
    return mean + chol @ _as_gen(rng).standard_normal(mean.size)


def sample_mvn_precision(precision, rhs, rng):
    """Draw from N(P^{-1} rhs, P^{-1}) given the precision ``P``.

    Returns ``(draw, mean)``. This is the form every Gaussian full
    conditional in the sampler takes.
    """
    chol = cholesky(precision)
    mean = solve_triangular(chol, rhs, lower=True, check_finite=False)
    mean = solve_triangular(chol.T, mean, lower=False, check_finite=False)
    z = _as_gen(rng).standard_normal(len(rhs))
    draw = mean + solve_triangular(chol.T, z, lower=False, check_finite=False)
    return draw, mean


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for symmetric positive definite ``a``."""
    chol = cholesky(a)
    x = solve_triangular(chol, np.asarray(b, dtype=float), lower=True, check_finite=False)
    return solve_triangular(chol.T, x, lower=False, check_finite=False)


def sample_invgamma(shape, rate, rng, size=None):
    """Inverse-gamma variate(s) with density ~ x^(-shape-1) exp(-rate/x)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise DomainError(f"inverse gamma needs shape>0, rate>0; got {shape}, {rate}")
    return rate / _as_gen(rng).gamma(shape, 1.0, size=size)


def sample_gamma(shape, rate, rng, size=None):
    """Gamma variate(s) with the (shape, rate) parameterization."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise DomainError(f"gamma needs shape>0, rate>0; got {shape}, {rate}")
    return _as_gen(rng).gamma(shape, 1.0, size=size) / rate


def sample_beta(a, b, rng, size=None):
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise DomainError(f"beta needs a>0, b>0; got {a}, {b}")
    return _as_gen(rng).beta(a, b, size=size)


def sample_categorical(weights, rng) -> int:
    """Index drawn with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.isfinite(w).all():
        raise DomainError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0:
        raise EmptySupport("all categorical weights are zero")
    cum = np.cumsum(w)
    idx = int(np.searchsorted(cum, _as_gen(rng).random() * total, side="right"))
    # guards against the uniform landing on a trailing zero-weight run
    return min(idx, int(np.flatnonzero(w)[-1]))


def sample_categorical_rows(logw, rng) -> np.ndarray:
    """One categorical draw per row of a log-weight matrix.

    Entries equal to ``-inf`` are excluded. Rows must each have at least
    one finite entry.
    """
    logw = np.asarray(logw, dtype=float)
    top = logw.max(axis=1, keepdims=True)
    if not np.isfinite(top).all():
        raise EmptySupport("a row has no admissible category")
    w = np.exp(logw - top)
    cum = np.cumsum(w, axis=1)
    target = _as_gen(rng).random(len(w)) * cum[:, -1]
    idx = (cum <= target[:, None]).sum(axis=1)
    return np.minimum(idx, w.shape[1] - 1)
