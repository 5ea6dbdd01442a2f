"""Datasets, model declarations, priors and design matrices."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dpm import Atom
from .errors import ConfigError, SchemaError
from .splines import SplineTerm, knot_rule

VARIANTS = ("proposed", "restricted", "uncorrected")


@dataclass
class Dataset:
    """Named columns plus the roles of response, endogenous and instrument."""

    columns: dict[str, np.ndarray]
    response: str = "y"
    endogenous: str = "d"
    instrument: str = "z"

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")

    @property
    def n(self) -> int:
        return len(self.columns[self.response])

    @property
    def y(self) -> np.ndarray:
        return self.columns[self.response]

    @property
    def d(self) -> np.ndarray:
        return self.columns[self.endogenous]

    def require(self, labels):
        for label in labels:
            if label not in self.columns:
                raise SchemaError(f"column {label!r} not found in data")
            if not np.isfinite(self.columns[label]).all():
                raise SchemaError(f"column {label!r} has missing or non-finite values")


@dataclass(frozen=True)
class SmoothDecl:
    """A smooth term request; ``n_interior=None`` uses the min(40, n/4) rule."""

    covariate: str
    n_interior: int | None = None
    degree: int = 3
    by: str | None = None


@dataclass(frozen=True)
class EquationDecl:
    linear: tuple[str, ...] = ()
    smooth: tuple[SmoothDecl, ...] = ()

    def labels(self) -> list[str]:
        out = list(self.linear)
        for s in self.smooth:
            out.append(s.covariate)
            if s.by:
                out.append(s.by)
        return out


@dataclass
class Priors:
    a_phi: float = 0.001
    b_phi: float = 0.001
    v_gamma0: float = 100.0
    v_beta0: float = 100.0
    v_alpha0: float = 100.0
    v_linear: float = 100.0
    T10: float = 100.0
    T20: float = 100.0
    m10: float | None = None
    m20: float | None = None
    e0: float | None = None
    Te0: float = 10.0
    e1: float = 2.0
    e2: float = 2.0
    t1: float = 2.0
    t2: float = 2.0
    s1: float = 2.0
    s2: float = 1.0
    a1: float = 2.0
    a2: float = 2.0

    def resolve(self, data: Dataset) -> "Priors":
        """Fill data-dependent defaults: sqrt(M10), sqrt(M20) = 4 sample SDs; e0 = cov/var."""
        d, y = data.d, data.y
        out = replace(self)
        if out.m10 is None:
            out.m10 = float((4.0 * d.std(ddof=1)) ** 2)
        if out.m20 is None:
            out.m20 = float((4.0 * y.std(ddof=1)) ** 2)
        if out.e0 is None:
            out.e0 = float(np.cov(d, y, ddof=1)[0, 1] / d.var(ddof=1))
        return out

    def check_positive(self) -> list[str]:
        bad = []
        for name, value in asdict(self).items():
            if name == "e0" or value is None:
                continue
            if not value > 0:
                bad.append(name)
        return bad


PRESETS = {
    "default": {},
    "deflate-eta": dict(Te0=1.0, e1=2.0, e2=1.0, a1=2.0, a2=0.4),
    "inflate-eta": dict(Te0=60.0, e1=2.0, e2=2.0, a1=2.0, a2=10.0),
}


def prior_preset(name: str, **overrides) -> Priors:
    if name not in PRESETS:
        raise ConfigError(f"unknown prior preset {name!r}; choose from {sorted(PRESETS)}")
    return Priors(**{**PRESETS[name], **overrides})


@dataclass
class ModelSpec:
    first: EquationDecl
    second: EquationDecl
    variance: EquationDecl
    variant: str = "proposed"
    priors: Priors = field(default_factory=Priors)
    penalty_order: int = 2
    fixed_atom: Atom | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def fix_eta(self) -> bool:
        return self.variant == "uncorrected"

    @property
    def unit_scale(self) -> bool:
        return self.variant == "restricted"

    def labels(self) -> list[str]:
        labels = self.first.labels() + self.second.labels()
        if not self.unit_scale:
            labels += self.variance.labels()
        return list(dict.fromkeys(labels))


def linear_spec(variant: str = "proposed", priors: Priors | None = None, instrument: str = "z",
                endogenous: str = "d") -> ModelSpec:
    """Linear mean and variance functions in one instrument and the endogenous variable."""
    return ModelSpec(EquationDecl(linear=(instrument,)), EquationDecl(linear=(endogenous,)),
                     EquationDecl(linear=(endogenous,)), variant, priors or Priors())


def smooth_spec(variant: str = "proposed", priors: Priors | None = None, n_interior: int | None = None,
                degree: int = 3, instrument: str = "z", endogenous: str = "d") -> ModelSpec:
    """One smooth term per equation: f(instrument), g(endogenous), h(endogenous)."""
    return ModelSpec(EquationDecl(smooth=(SmoothDecl(instrument, n_interior, degree),)),
                     EquationDecl(smooth=(SmoothDecl(endogenous, n_interior, degree),)),
                     EquationDecl(smooth=(SmoothDecl(endogenous, n_interior, degree),)),
                     variant, priors or Priors())


@dataclass
class EquationDesign:
    """Design matrix of one equation: intercept, linear columns, smooth blocks.

    Coefficient order is (intercept, linear..., smooth blocks...).
    """

    name: str
    linear: tuple[str, ...]
    terms: list[SplineTerm]
    matrix: np.ndarray
    intercept_var: float
    linear_var: float

    @property
    def n_coef(self) -> int:
        return self.matrix.shape[1]

    def term_slices(self) -> list[slice]:
        start = 1 + len(self.linear)
        out = []
        for t in self.terms:
            out.append(slice(start, start + t.n_coef))
            start += t.n_coef
        return out

    def coef_names(self) -> list[str]:
        names = [f"{self.name}.const"] + [f"{self.name}.{c}" for c in self.linear]
        for t in self.terms:
            names += [f"{self.name}.s({t.label})[{j}]" for j in range(t.n_coef)]
        return names

    def rows(self, columns: dict[str, np.ndarray]) -> np.ndarray:
        """Design rows at new covariate values (same centering as training)."""
        n = len(next(iter(columns.values())))
        parts = [np.ones((n, 1))]
        for c in self.linear:
            if c not in columns:
                raise SchemaError(f"column {c!r} not found")
            parts.append(np.asarray(columns[c], dtype=float).reshape(-1, 1))
        for t in self.terms:
            if t.covariate not in columns or (t.by and t.by not in columns):
                raise SchemaError(f"columns for term {t.label!r} not found")
            parts.append(t.evaluate(columns[t.covariate], columns[t.by] if t.by else None))
        return np.hstack(parts)

    def prior_precision(self, phis) -> np.ndarray:
        """Block-diagonal prior precision for smoothing variances ``phis``.

        Spline blocks get ``penalty / phi`` plus ``J / p`` on the constant
        direction, which the centered design cannot see; see
        :func:`project_constant`.
        """
        p = self.n_coef
        prec = np.zeros((p, p))
        prec[0, 0] = 1.0 / self.intercept_var
        for j in range(len(self.linear)):
            prec[1 + j, 1 + j] = 1.0 / self.linear_var
        for t, sl, phi in zip(self.terms, self.term_slices(), phis):
            prec[sl, sl] = t.penalty / phi + 1.0 / t.n_coef
        return prec

    def project_constant(self, coef: np.ndarray) -> np.ndarray:
        """Remove the unidentified constant component of each spline block."""
        coef = coef.copy()
        for sl in self.term_slices():
            coef[sl] -= coef[sl].mean()
        return coef


def _equation_design(name, decl: EquationDecl, data: Dataset, spec: ModelSpec,
                     intercept_var: float) -> EquationDesign:
    terms = []
    for s in decl.smooth:
        k = s.n_interior if s.n_interior is not None else knot_rule(data.n)
        terms.append(SplineTerm.fit(s.covariate, data.columns[s.covariate], k, s.degree,
                                    spec.penalty_order, s.by))
    eq = EquationDesign(name, tuple(decl.linear), terms, np.empty((0, 0)),
                        intercept_var, spec.priors.v_linear)
    eq.matrix = eq.rows(data.columns)
    return eq


@dataclass
class Design:
    spec: ModelSpec
    priors: Priors
    first: EquationDesign
    second: EquationDesign
    variance: EquationDesign
    d: np.ndarray
    y: np.ndarray
    covariate_means: dict[str, float]
    endogenous: str
    instrument: str

    @property
    def n(self) -> int:
        return len(self.y)


def build_design(spec: ModelSpec, data: Dataset) -> Design:
    data.require([data.response, data.endogenous] + spec.labels())
    priors = spec.priors.resolve(data)
    first = _equation_design("gamma", spec.first, data, spec, priors.v_gamma0)
    second = _equation_design("beta", spec.second, data, spec, priors.v_beta0)
    vdecl = EquationDecl() if spec.unit_scale else spec.variance
    variance = _equation_design("alpha", vdecl, data, spec, priors.v_alpha0)
    means = {k: float(v.mean()) for k, v in data.columns.items()}
    return Design(spec, priors, first, second, variance, data.d.copy(), data.y.copy(),
                  means, data.endogenous, data.instrument)
