"""On-disk formats for chains and model structure.

A fit directory holds:

``draws.csv``
    one row per retained draw; ``iter`` then every coefficient,
    smoothing variance and DP scalar, named as in the header.
``atoms.csv``
    long format ``iter,k,pi,mu1,mu2,eta,tau,sigma``; one row per held
    mixture component per retained draw.
``model.json``
    model structure needed to evaluate design rows again (knots,
    centering offsets, linear labels, resolved priors).
``metadata.txt``
    ``key = value`` lines (run config, seed, hashes, timings). Lines
    starting with ``#`` are comments.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .dpm import Atom
from .errors import SchemaError
from .model import Design, EquationDecl, EquationDesign, ModelSpec, Priors, SmoothDecl
from .sampler import ChainDraws
from .splines import KnotVector, SplineTerm

ATOM_COLUMNS = ("pi", "mu1", "mu2", "eta", "tau", "sigma")


def fmt(x: float) -> str:
    return repr(float(x))


def write_draws(draws: ChainDraws, out_dir: Path):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mat = draws.matrix()
    with open(out_dir / "draws.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter"] + draws.column_names())
        for it, row in zip(draws.iterations, mat):
            w.writerow([int(it)] + [fmt(v) for v in row])
    with open(out_dir / "atoms.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iter", "k") + ATOM_COLUMNS)
        for it, atoms in zip(draws.iterations, draws.atoms):
            for k, row in enumerate(atoms):
                w.writerow([int(it), k] + [fmt(v) for v in row])
    with open(out_dir / "model.json", "w", encoding="utf-8") as fh:
        json.dump(design_to_dict(draws.design), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _eq_to_dict(eq: EquationDesign) -> dict:
    return dict(name=eq.name, linear=list(eq.linear), intercept_var=eq.intercept_var,
                linear_var=eq.linear_var,
                terms=[dict(covariate=t.covariate, by=t.by, degree=t.knots.degree,
                            n_interior=t.knots.n_interior, knots=t.knots.knots.tolist(),
                            offsets=t.offsets.tolist(), order=t.order) for t in eq.terms])


def _eq_from_dict(d: dict) -> EquationDesign:
    from .splines import penalty_matrix

    terms = []
    for t in d["terms"]:
        kv = KnotVector(t["degree"], t["n_interior"], np.array(t["knots"]))
        terms.append(SplineTerm(t["covariate"], kv, np.array(t["offsets"]),
                                penalty_matrix(kv.n_basis, t["order"]), t["order"], t["by"]))
    return EquationDesign(d["name"], tuple(d["linear"]), terms, np.empty((0, 0)),
                          d["intercept_var"], d["linear_var"])


def _decl(eq: EquationDesign) -> EquationDecl:
    return EquationDecl(eq.linear, tuple(SmoothDecl(t.covariate, t.knots.n_interior,
                                                    t.knots.degree, t.by) for t in eq.terms))


def design_to_dict(design: Design) -> dict:
    spec = design.spec
    return dict(
        variant=spec.variant, penalty_order=spec.penalty_order,
        fixed_atom=asdict(spec.fixed_atom) if spec.fixed_atom else None,
        priors=asdict(design.priors),
        first=_eq_to_dict(design.first), second=_eq_to_dict(design.second),
        variance=_eq_to_dict(design.variance),
        covariate_means=design.covariate_means,
        endogenous=design.endogenous, instrument=design.instrument,
    )


def design_from_dict(d: dict) -> Design:
    first, second, variance = (_eq_from_dict(d[k]) for k in ("first", "second", "variance"))
    priors = Priors(**d["priors"])
    spec = ModelSpec(_decl(first), _decl(second), _decl(variance), d["variant"], priors,
                     d["penalty_order"], Atom(**d["fixed_atom"]) if d.get("fixed_atom") else None)
    return Design(spec, priors, first, second, variance, np.empty(0), np.empty(0),
                  dict(d["covariate_means"]), d["endogenous"], d["instrument"])


def read_draws(out_dir: Path, metadata: dict | None = None) -> ChainDraws:
    out_dir = Path(out_dir)
    for name in ("draws.csv", "atoms.csv", "model.json"):
        if not (out_dir / name).exists():
            raise SchemaError(f"{name} not found in {out_dir}")
    with open(out_dir / "model.json", encoding="utf-8") as fh:
        design = design_from_dict(json.load(fh))
    with open(out_dir / "draws.csv", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r] for r in reader]).reshape(-1, len(header))
    its = rows[:, 0].astype(int)
    cols = {name: rows[:, j] for j, name in enumerate(header)}
    pz, px, pw = (len(eq.coef_names()) for eq in (design.first, design.second, design.variance))
    names = header[1:]
    mat = rows[:, 1:]
    nphi = sum(len(eq.terms) for eq in (design.first, design.second, design.variance))
    scalar_names = names[pz + px + pw + nphi:]
    atoms_by_iter: dict[int, list] = {int(i): [] for i in its}
    with open(out_dir / "atoms.csv", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for r in reader:
            atoms_by_iter[int(r[0])].append([float(v) for v in r[2:]])
    meta = metadata if metadata is not None else (
        read_metadata(out_dir / "metadata.txt") if (out_dir / "metadata.txt").exists() else {})
    return ChainDraws(
        design=design, iterations=its, gamma=mat[:, :pz], beta=mat[:, pz:pz + px],
        alpha=mat[:, pz + px:pz + px + pw], phi=mat[:, pz + px + pw:pz + px + pw + nphi],
        scalars={k: cols[k] for k in scalar_names},
        atoms=[np.array(atoms_by_iter[int(i)]).reshape(-1, 6) for i in its],
        total=int(meta.get("iters", 0)), burnin=int(meta.get("burnin", 0)),
        thin=int(meta.get("thin", 1)), seed=int(meta.get("seed", 0)),
        info=dict(stream_id=int(meta.get("stream_id", 0))))


def write_metadata(path: Path, values: dict):
    lines = ["# ivquant run metadata: key = value"]
    for k, v in values.items():
        lines.append(f"{k} = {v}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_metadata(path: Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    """Numeric columns of a UTF-8 CSV with a header row; empty cells are rejected."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"data file {path} not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        data: list[list[float]] = [[] for _ in header]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for j, cell in enumerate(row):
                cell = cell.strip()
                if cell == "" or cell.lower() in ("na", "nan"):
                    raise SchemaError(f"{path}:{lineno}: missing value in column {header[j]!r}")
                try:
                    data[j].append(float(cell))
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: non-numeric value {cell!r} "
                                      f"in column {header[j]!r}") from None
    return {h: np.array(v) for h, v in zip(header, data)}


def write_csv_columns(path: Path, columns: dict[str, np.ndarray]):
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*(columns[n] for n in names)):
            w.writerow([fmt(v) for v in row])
