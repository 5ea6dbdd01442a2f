"""B-spline bases, knot placement, centering and difference penalties."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariate, DomainError, SchemaError


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot sequence of length ``2*degree + n_interior + 1``.

    The first and last ``degree + 1`` knots coincide with the data range
    and the ``n_interior + 1`` distinct values are equidistant.
    """

    degree: int
    n_interior: int
    knots: np.ndarray

    @property
    def n_basis(self) -> int:
        return self.n_interior + self.degree

    @property
    def lower(self) -> float:
        return float(self.knots[0])

    @property
    def upper(self) -> float:
        return float(self.knots[-1])


def knot_rule(n: int, cap: int = 40) -> int:
    """Default number of interior knots, ``min(cap, n/4)``."""
    return int(min(cap, n // 4))


def make_knots(x, n_interior: int, degree: int) -> KnotVector:
    x = np.asarray(x, dtype=float)
    if n_interior < 2:
        raise DomainError(f"need at least 2 interior knots, got {n_interior}")
    if degree < 0:
        raise DomainError("degree must be nonnegative")
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DegenerateCovariate("covariate is constant; cannot place knots")
    inner = np.linspace(lo, hi, n_interior + 1)
    knots = np.concatenate([np.full(degree, lo), inner, np.full(degree, hi)])
    return KnotVector(degree, n_interior, knots)


def _basis(x: np.ndarray, kv: KnotVector) -> np.ndarray:
    t = kv.knots
    m = kv.degree
    nb = kv.n_basis
    # degree-0 indicator of the half-open cell [t_j, t_{j+1}); the last
    # nonempty cell is closed on the right so x == upper is covered
    last = len(t) - m - 2
    cell = np.searchsorted(t, x, side="right") - 1
    cell = np.clip(cell, m, last)
    b = np.zeros((len(x), len(t) - 1))
    b[np.arange(len(x)), cell] = 1.0
    for p in range(1, m + 1):
        nxt = np.zeros((len(x), len(t) - 1 - p))
        for j in range(len(t) - 1 - p):
            left = t[j + p] - t[j]
            right = t[j + p + 1] - t[j + 1]
            if left > 0:
                nxt[:, j] += (x - t[j]) / left * b[:, j]
            if right > 0:
                nxt[:, j] += (t[j + p + 1] - x) / right * b[:, j + 1]
        b = nxt
    return b[:, :nb]


def basis_matrix(x, kv: KnotVector) -> tuple[np.ndarray, int]:
    """Basis values for every element of ``x``.

    Points outside the knot range are clamped to the boundary. Returns
    the ``len(x) x n_basis`` matrix and the number of clamped points.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    outside = (x < kv.lower) | (x > kv.upper)
    xc = np.clip(x, kv.lower, kv.upper)
    return _basis(xc, kv), int(outside.sum())


def basis_row(x: float, kv: KnotVector) -> np.ndarray:
    row, clamped = basis_matrix([x], kv)
    if clamped:
        warnings.warn(f"x={x} outside knot range [{kv.lower}, {kv.upper}]; clamped", stacklevel=2)
    return row[0]


def penalty_matrix(p: int, order: int = 2) -> np.ndarray:
    """``D'D`` for the ``order``-th difference operator on ``p`` coefficients."""
    if order < 1 or order >= p:
        raise DomainError(f"difference order {order} must be in [1, {p - 1}]")
    d = np.diff(np.eye(p), n=order, axis=0)
    return d.T @ d


@dataclass
class SplineTerm:
    """A centered P-spline term for one covariate.

    ``offsets`` are the training column means of the raw basis; they are
    subtracted from every evaluation so that fitted functions keep the
    training-data centering. ``by`` names an optional dummy column that
    multiplies each centered row.
    """

    covariate: str
    knots: KnotVector
    offsets: np.ndarray
    penalty: np.ndarray
    order: int = 2
    by: str | None = None
    clamp_count: int = field(default=0, compare=False)

    @property
    def n_coef(self) -> int:
        return self.knots.n_basis

    @property
    def label(self) -> str:
        return f"{self.covariate}:{self.by}" if self.by else self.covariate

    @property
    def penalty_rank(self) -> int:
        return self.n_coef - self.order

    @classmethod
    def fit(cls, covariate: str, x, n_interior: int, degree: int = 3,
            order: int = 2, by: str | None = None) -> "SplineTerm":
        kv = make_knots(x, n_interior, degree)
        raw, _ = basis_matrix(x, kv)
        return cls(covariate, kv, raw.mean(axis=0), penalty_matrix(kv.n_basis, order), order, by)

    def evaluate(self, x, dummy=None) -> np.ndarray:
        raw, clamped = basis_matrix(x, self.knots)
        if clamped:
            self.clamp_count += clamped
            warnings.warn(f"{clamped} value(s) of {self.covariate!r} outside the training "
                          "range were clamped to the boundary knot", stacklevel=2)
        out = raw - self.offsets
        if self.by is not None:
            if dummy is None:
                raise SchemaError(f"term {self.label!r} needs values for {self.by!r}")
            out = out * np.asarray(dummy, dtype=float).reshape(-1, 1)
        return out


def design_matrix(columns, term: SplineTerm) -> np.ndarray:
    """Centered (and optionally dummy-scaled) design for ``term``.

    ``columns`` maps column labels to arrays.
    """
    if term.covariate not in columns:
        raise SchemaError(f"column {term.covariate!r} not found")
    dummy = None
    if term.by is not None:
        if term.by not in columns:
            raise SchemaError(f"column {term.by!r} not found")
        dummy = columns[term.by]
    return term.evaluate(columns[term.covariate], dummy)
