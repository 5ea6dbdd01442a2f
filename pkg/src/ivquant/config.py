"""Run configuration: an INI file with one section per equation.

Example::

    [data]
    path = data.csv
    response = y
    endogenous = d
    instrument = z
    standardize = false

    [first_stage]
    linear =
    smooth = z

    [second_stage]
    linear = x1, x2
    smooth = d, d:20:3@D

    [variance]
    smooth = d

    [model]
    variant = proposed

    [prior]
    preset = default
    # any Priors field may be overridden, e.g. Te0 = 5

    [mcmc]
    iters = 11000
    burnin = 1000
    thin = 5
    seed = 1

    [output]
    dir = out

Smooth terms are written ``covariate[:K[:degree]][@dummy]``; ``K`` may be
``auto`` for the min(40, n/4) rule. Relative data and output paths are
resolved against the directory holding the config file.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import VARIANTS, EquationDecl, ModelSpec, Priors, SmoothDecl, prior_preset


def parse_smooth(text: str) -> SmoothDecl:
    text = text.strip()
    body, _, by = text.partition("@")
    parts = body.split(":")
    cov = parts[0].strip()
    if not cov:
        raise ConfigError(f"empty covariate in smooth term {text!r}")
    k = None
    degree = 3
    try:
        if len(parts) > 1 and parts[1].strip() not in ("", "auto"):
            k = int(parts[1])
        if len(parts) > 2:
            degree = int(parts[2])
    except ValueError:
        raise ConfigError(f"bad smooth term {text!r}; expected covariate[:K[:degree]][@dummy]") from None
    if len(parts) > 3:
        raise ConfigError(f"bad smooth term {text!r}")
    return SmoothDecl(cov, k, degree, by.strip() or None)


def _split(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _equation(cp, section: str) -> EquationDecl:
    if not cp.has_section(section):
        return EquationDecl()
    sec = cp[section]
    return EquationDecl(_split(sec.get("linear", "")),
                        tuple(parse_smooth(s) for s in _split(sec.get("smooth", ""))))


@dataclass
class RunConfig:
    data_path: Path
    response: str = "y"
    endogenous: str = "d"
    instrument: str = "z"
    standardize: bool = False
    first: EquationDecl = field(default_factory=EquationDecl)
    second: EquationDecl = field(default_factory=EquationDecl)
    variance: EquationDecl = field(default_factory=EquationDecl)
    variant: str = "proposed"
    penalty_order: int = 2
    preset: str = "default"
    prior_overrides: dict[str, float] = field(default_factory=dict)
    iters: int = 11000
    burnin: int = 1000
    thin: int = 5
    seed: int = 1
    out_dir: Path = Path("out")
    source_text: str = ""

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text(encoding="utf-8")
        return cls.from_string(text, base=path.parent)

    @classmethod
    def from_string(cls, text: str, base: Path = Path(".")) -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from None
        if not cp.has_section("data") or "path" not in cp["data"]:
            raise ConfigError("config needs [data] path")
        d = cp["data"]
        data_path = Path(d["path"])
        if not data_path.is_absolute():
            data_path = base / data_path
        known = {f.name for f in fields(Priors)}
        overrides = {}
        preset = "default"
        if cp.has_section("prior"):
            for key, value in cp["prior"].items():
                if key == "preset":
                    preset = value.strip()
                elif key in known:
                    try:
                        overrides[key] = float(value)
                    except ValueError:
                        raise ConfigError(f"prior {key} must be numeric, got {value!r}") from None
                else:
                    raise ConfigError(f"unknown prior setting {key!r}")
        m = cp["mcmc"] if cp.has_section("mcmc") else {}
        model = cp["model"] if cp.has_section("model") else {}
        out = cp["output"] if cp.has_section("output") else {}
        out_dir = Path(out.get("dir", "out"))
        if not out_dir.is_absolute():
            out_dir = base / out_dir
        try:
            cfg = cls(
                data_path=data_path,
                response=d.get("response", "y"), endogenous=d.get("endogenous", "d"),
                instrument=d.get("instrument", "z"),
                standardize=d.get("standardize", "false").lower() in ("1", "true", "yes", "on"),
                first=_equation(cp, "first_stage"), second=_equation(cp, "second_stage"),
                variance=_equation(cp, "variance"),
                variant=model.get("variant", "proposed"),
                penalty_order=int(model.get("penalty_order", 2)),
                preset=preset, prior_overrides=overrides,
                iters=int(m.get("iters", 11000)), burnin=int(m.get("burnin", 1000)),
                thin=int(m.get("thin", 5)), seed=int(m.get("seed", 1)),
                out_dir=out_dir, source_text=text,
            )
        except ValueError as exc:
            raise ConfigError(f"bad numeric setting: {exc}") from None
        return cfg

    def problems(self) -> list[str]:
        """Static checks that need no data."""
        out = []
        if self.variant not in VARIANTS:
            out.append(f"variant {self.variant!r} not in {VARIANTS}")
        if not self.iters > self.burnin >= 0:
            out.append(f"need iters > burnin >= 0 (iters={self.iters}, burnin={self.burnin})")
        if self.thin < 1:
            out.append(f"thin must be >= 1, got {self.thin}")
        if self.seed < 0:
            out.append("seed must be nonnegative")
        for eq in (self.first, self.second, self.variance):
            for s in eq.smooth:
                if s.n_interior is not None and s.n_interior < 2:
                    out.append(f"smooth {s.covariate}: K must be >= 2")
                if not 0 <= s.degree <= 3:
                    out.append(f"smooth {s.covariate}: degree must be in 0..3")
        return out

    def priors(self) -> Priors:
        return prior_preset(self.preset, **self.prior_overrides)

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.first, self.second, self.variance, self.variant, self.priors(),
                         self.penalty_order)

    def columns(self) -> list[str]:
        labels = [self.response, self.endogenous, self.instrument]
        for eq in (self.first, self.second, self.variance):
            labels += eq.labels()
        return list(dict.fromkeys(labels))

    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode()).hexdigest()
