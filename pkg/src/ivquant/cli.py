"""Command-line entry point: ``ivquant {fit,quantiles,simulate,validate}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration or schema error.
Errors are reported on stderr as a single ``error: kind=<Type> message=<text>``
line.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, numkit
from .auxmix import MixtureTable
from .config import RunConfig
from .errors import ConfigError, IVQuantError, SamplerError, SchemaError
from .model import VARIANTS, Dataset, PRESETS, build_design
from .quantile import error_density, inefficiency_factor, structural_quantile
from .sampler import GibbsSampler
from .simharness import DESIGNS, FitPlan, bias_rmse, gen_setting, run_study
from .splines import knot_rule
from .storage import (read_csv_columns, read_draws, read_metadata, sha256_file,
                      write_csv_columns, write_draws, write_metadata, fmt)

USAGE_ERRORS = (ConfigError, SchemaError)


class Reporter:
    """Serializes terminal output."""

    def __init__(self, quiet: bool = False, stream=None):
        self.quiet = quiet
        self.stream = stream or sys.stdout

    def info(self, msg: str):
        if not self.quiet:
            print(msg, file=self.stream, flush=True)


def _fail(exc: Exception) -> int:
    cause = exc.cause if isinstance(exc, SamplerError) else exc
    print(f"error: kind={type(cause).__name__} message={exc}", file=sys.stderr)
    return 2 if isinstance(cause, USAGE_ERRORS) else 1


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if getattr(args, "prior_preset", None):
        cfg.preset = args.prior_preset
    if getattr(args, "out_dir", None):
        cfg.out_dir = Path(args.out_dir)
    return cfg


def load_dataset(cfg: RunConfig) -> Dataset:
    cols = read_csv_columns(cfg.data_path)
    for label in cfg.columns():
        if label not in cols:
            raise SchemaError(f"column {label!r} not found in {cfg.data_path}")
    return Dataset(cols, cfg.response, cfg.endogenous, cfg.instrument)


def standardize(data: Dataset) -> tuple[Dataset, dict[str, float]]:
    consts = dict(y_center=float(data.y.mean()), y_scale=float(data.y.std(ddof=1)),
                  d_center=float(data.d.mean()), d_scale=float(data.d.std(ddof=1)))
    cols = dict(data.columns)
    cols[data.response] = (data.y - consts["y_center"]) / consts["y_scale"]
    cols[data.endogenous] = (data.d - consts["d_center"]) / consts["d_scale"]
    return Dataset(cols, data.response, data.endogenous, data.instrument), consts


def summary_rows(draws):
    """Posterior mean, 95% interval and inefficiency factor for intercepts and linear effects."""
    des = draws.design
    rows = []
    for eq, mat in ((des.first, draws.gamma), (des.second, draws.beta), (des.variance, draws.alpha)):
        for j, var in enumerate(("const",) + eq.linear):
            x = mat[:, j]
            lo, hi = np.quantile(x, [0.025, 0.975])
            ineff = inefficiency_factor(x) if len(x) >= 100 else float("nan")
            rows.append((eq.name, var, x.mean(), lo, hi, ineff))
    return rows


def cmd_fit(args, reporter: Reporter) -> int:
    cfg = load_config(args)
    problems = cfg.problems()
    if problems:
        raise ConfigError("; ".join(problems))
    data = load_dataset(cfg)
    consts = {}
    if cfg.standardize:
        data, consts = standardize(data)
    spec = cfg.model_spec()
    reporter.info(f"fit: n={data.n} variant={cfg.variant} preset={cfg.preset} "
                  f"iters={cfg.iters} burnin={cfg.burnin} thin={cfg.thin} seed={cfg.seed}")
    t0 = time.perf_counter()
    sampler = GibbsSampler(spec, data)
    draws = sampler.run(cfg.iters, cfg.burnin, cfg.thin, cfg.seed)
    out = cfg.out_dir
    write_draws(draws, out)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["equation", "variable", "mean", "lower95", "upper95", "inefficiency"])
        for eq, var, mean, lo, hi, ineff in summary_rows(draws):
            w.writerow([eq, var, f"{mean:.6g}", f"{lo:.6g}", f"{hi:.6g}", f"{ineff:.3g}"])
    meta = dict(version=__version__, command="fit", config_sha256=cfg.digest(),
                data_path=cfg.data_path, data_sha256=sha256_file(cfg.data_path),
                seed=cfg.seed, stream_id=0, iters=cfg.iters, burnin=cfg.burnin, thin=cfg.thin,
                retained=len(draws), variant=cfg.variant, prior_preset=cfg.preset,
                prior_overrides=",".join(f"{k}:{v}" for k, v in cfg.prior_overrides.items()),
                standardize=str(cfg.standardize).lower(),
                endogenous_min=fmt(data.d.min()), endogenous_max=fmt(data.d.max()),
                floored_residuals=draws.info["floored_residuals"],
                sampler_seconds=f"{draws.info['seconds']:.3f}",
                total_seconds=f"{time.perf_counter() - t0:.3f}")
    meta.update({k: fmt(v) for k, v in consts.items()})
    write_metadata(out / "metadata.txt", meta)
    reporter.info(f"fit: wrote {len(draws)} draws to {out}")
    return 0


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None


def _parse_range(text: str, what: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{what} must be lo:hi:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"cannot parse {what} {text!r}") from None
    if count < 1 or (count > 1 and not hi >= lo):
        raise ConfigError(f"bad {what} {text!r}")
    return np.linspace(lo, hi, count) if count > 1 else np.array([lo])


def _parse_fixed(text: str | None) -> dict[str, float]:
    out = {}
    for item in (text or "").split(","):
        if not item.strip():
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"fixed covariate must be name=value, got {item!r}")
        out[key.strip()] = _parse_floats(value, "fixed covariate value")[0]
    return out


def cmd_quantiles(args, reporter: Reporter) -> int:
    run_dir = Path(args.draws)
    meta = read_metadata(run_dir / "metadata.txt") if (run_dir / "metadata.txt").exists() else {}
    p = np.array(_parse_floats(args.p, "probability levels"))
    if p.size == 0 or np.any((p <= 0) | (p >= 1)):
        raise ConfigError(f"probability levels must lie in (0, 1); got {args.p}")
    if args.grid:
        grid = _parse_range(args.grid, "grid")
    elif "endogenous_min" in meta:
        grid = np.linspace(float(meta["endogenous_min"]), float(meta["endogenous_max"]), 100)
    else:
        raise ConfigError("no --grid given and no endogenous range in metadata")
    draws = read_draws(run_dir, meta)
    fixed = _parse_fixed(args.fixed)
    std = meta.get("standardize") == "true"
    eval_grid = grid
    if std:
        eval_grid = (grid - float(meta["d_center"])) / float(meta["d_scale"])
    seed = args.seed if args.seed is not None else int(meta.get("seed", 0))
    rng = numkit.RngStream(seed, 7)
    qg = structural_quantile(draws, eval_grid, p, fixed=fixed, M=args.M, rng=rng,
                             label=args.label)
    mean, lower, upper = qg.mean, qg.lower, qg.upper
    if std:
        c, s = float(meta["y_center"]), float(meta["y_scale"])
        mean, lower, upper = c + s * mean, c + s * lower, c + s * upper
    crossings = int(np.sum(np.diff(mean, axis=1) < 0))
    out = Path(args.out) if args.out else run_dir / "quantiles.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["grid_label", "d", "p", "posterior_mean", "lower95", "upper95"])
        for g, dv in enumerate(grid):
            for j, pv in enumerate(p):
                w.writerow([args.label, fmt(dv), fmt(pv), fmt(mean[g, j]), fmt(lower[g, j]),
                            fmt(upper[g, j])])
    reporter.info(f"quantiles: {len(grid)} grid points x {len(p)} levels -> {out} "
                  f"(crossing violations: {crossings})")
    if args.density:
        e1_spec, _, e2_spec = args.density.partition(",")
        e1 = _parse_range(e1_spec, "density e1 range")
        e2 = _parse_range(e2_spec, "density e2 range")
        dens = error_density(draws, e1, e2, M=args.M, rng=numkit.RngStream(seed, 8))
        E1, E2 = np.meshgrid(e1, e2, indexing="ij")
        dpath = out.with_name("density.csv")
        write_csv_columns(dpath, {"e1": E1.ravel(), "e2": E2.ravel(), "density": dens.ravel()})
        reporter.info(f"quantiles: error density -> {dpath}")
    return 0


def cmd_simulate(args, reporter: Reporter) -> int:
    if args.design not in DESIGNS:
        raise ConfigError(f"unknown design {args.design!r}; choose from {list(DESIGNS)}")
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}")
    presets = [s.strip() for s in args.presets.split(",") if s.strip()]
    for s in presets:
        if s not in PRESETS:
            raise ConfigError(f"unknown prior preset {s!r}")
    if not args.iters > args.burnin >= 0 or args.thin < 1:
        raise ConfigError("need iters > burnin >= 0 and thin >= 1")
    plans = []
    for v in variants:
        for s in (presets if v == "proposed" else presets[:1]):
            label = v if s == "default" else f"{v}[{s}]"
            plans.append(FitPlan(label, v, s))
    p = np.array(_parse_floats(args.p, "probability levels"))
    if np.any((p <= 0) | (p >= 1)):
        raise ConfigError("probability levels must lie in (0, 1)")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reporter.info(f"simulate: design={args.design} n={args.n} R={args.R} fits={[pl.label for pl in plans]}")
    t0 = time.perf_counter()
    results = run_study(args.design, args.n, args.R, plans, seed=args.seed, iters=args.iters,
                        burnin=args.burnin, thin=args.thin, p_levels=p, grid_size=args.grid_size,
                        M=args.M, workers=args.threads,
                        progress=lambda r, lab: reporter.info(f"  replication {r} {lab} done"))
    path = out / f"bias_rmse_{args.design}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["design", "variant", "p", "d", "bias", "rmse"])
        for plan in plans:
            bias, rmse = bias_rmse(results, plan.label)
            for j, pv in enumerate(p):
                for g, dv in enumerate(results[0].d):
                    w.writerow([args.design, plan.label, fmt(pv), fmt(dv), fmt(bias[g, j]),
                                fmt(rmse[g, j])])
    if args.save_data:
        for r in range(args.R):
            ds = gen_setting(args.design, args.n, args.seed, stream_id=r)
            write_csv_columns(out / f"data_{args.design}_r{r:03d}.csv", ds.columns)
    write_metadata(out / f"simulate_{args.design}.txt", dict(
        version=__version__, command="simulate", design=args.design, n=args.n, R=args.R,
        fits=",".join(pl.label for pl in plans), seed=args.seed, iters=args.iters,
        burnin=args.burnin, thin=args.thin, p=args.p, grid_size=args.grid_size, M=args.M,
        seconds=f"{time.perf_counter() - t0:.1f}"))
    reporter.info(f"simulate: wrote {path}")
    return 0


def validate_config(cfg: RunConfig, table: MixtureTable | None = None) -> list[tuple[str, bool, str]]:
    """Dry-run checks; returns (check, passed, detail) triples. Nothing is written."""
    report = []
    problems = cfg.problems()
    report.append(("controls", not problems, "; ".join(problems) or "ok"))
    data = None
    try:
        data = load_dataset(cfg)
        missing = [c for c in cfg.columns() if not np.isfinite(data.columns[c]).all()]
        report.append(("schema", not missing, f"non-finite values in {missing}" if missing
                       else f"{data.n} rows, columns present"))
    except IVQuantError as exc:
        report.append(("schema", False, str(exc)))
    if data is not None:
        issues = []
        for eq in (cfg.first, cfg.second, cfg.variance):
            for s in eq.smooth:
                k = s.n_interior if s.n_interior is not None else knot_rule(data.n)
                x = data.columns.get(s.covariate)
                if k < 2:
                    issues.append(f"{s.covariate}: K={k} < 2")
                if k > data.n:
                    issues.append(f"{s.covariate}: K={k} exceeds n={data.n}")
                if x is not None and len(np.unique(x)) < 2:
                    issues.append(f"{s.covariate}: constant covariate")
        report.append(("knots", not issues, "; ".join(issues) or "ok"))
    bad = []
    try:
        priors = cfg.priors()
        bad = priors.check_positive()
        if data is not None and not bad:
            build_design(cfg.model_spec(), data)
        report.append(("priors", not bad, f"non-positive: {bad}" if bad else "ok"))
    except IVQuantError as exc:
        report.append(("priors", False, str(exc)))
    has_iv = cfg.instrument in cfg.first.labels()
    report.append(("instrument", has_iv, "ok" if has_iv else
                   f"instrument {cfg.instrument!r} does not enter the first stage"))
    table = table or MixtureTable.default()
    failed = table.checksum_failures()
    report.append(("mixture_table", not failed,
                   f"checksum mismatch in row(s) {failed}" if failed else "10 rows verified"))
    return report


def cmd_validate(args, reporter: Reporter) -> int:
    cfg = load_config(args)
    report = validate_config(cfg)
    for name, ok, detail in report:
        reporter.info(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in report) else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out-dir")
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--prior-preset", choices=sorted(PRESETS))

    common(sub.add_parser("fit", help="run the Gibbs sampler and write draws"))
    common(sub.add_parser("validate", help="dry-run configuration checks"))

    q = sub.add_parser("quantiles", help="structural quantile curves from a fit directory")
    q.add_argument("--draws", required=True, help="fit output directory")
    q.add_argument("--grid", help="lo:hi:count in the endogenous covariate")
    q.add_argument("--p", default="0.01,0.1,0.5,0.9,0.99")
    q.add_argument("--fixed", help="name=value,... for non-grid covariates (default: sample means)")
    q.add_argument("--M", type=int, default=10, help="base-measure draws per posterior draw")
    q.add_argument("--label", default="S")
    q.add_argument("--out")
    q.add_argument("--seed", type=int)
    q.add_argument("--density", help="e1lo:e1hi:n,e2lo:e2hi:n to also write density.csv")

    s = sub.add_parser("simulate", help="replicated simulation study with bias/RMSE output")
    s.add_argument("--design", required=True)
    s.add_argument("--n", type=int, default=200)
    s.add_argument("--R", type=int, default=20)
    s.add_argument("--variants", default="proposed,restricted,uncorrected")
    s.add_argument("--presets", default="default", help="prior presets applied to the proposed variant")
    s.add_argument("--iters", type=int, default=6000)
    s.add_argument("--burnin", type=int, default=1000)
    s.add_argument("--thin", type=int, default=5)
    s.add_argument("--p", default="0.1,0.5,0.9")
    s.add_argument("--grid-size", type=int, default=100)
    s.add_argument("--M", type=int, default=10)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out-dir", default="sim_out")
    s.add_argument("--save-data", action="store_true")
    return parser


COMMANDS = dict(fit=cmd_fit, quantiles=cmd_quantiles, simulate=cmd_simulate, validate=cmd_validate)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    reporter = Reporter(args.quiet)
    try:
        return COMMANDS[args.command](args, reporter)
    except IVQuantError as exc:
        return _fail(exc)
    except OSError as exc:
        print(f"error: kind={type(exc).__name__} message={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
