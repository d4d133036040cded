"""
Command line interface.

Reports go to stdout (or ``--out``) as JSON or CSV; warnings and progress go
to stderr. Figures are written only when ``--figures DIR`` is given.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bandwidth import select_aicc, select_hs
from .errors import GplmError
from .family import get_family
from .gplm import GplmFit, fit_gplm
from .inference import (
    deviance_table,
    max_abs_correlation,
    pointwise_ci,
    significance_trace,
    test_gplm,
)
from .integrate import smoother_df
from .kernel_grid import SmoothConfig
from .local_fit import Dataset
from .simulate import EXAMPLES, SELECTORS, Cell, Dgp, qq_dump, run_cells, run_outcomes

__all__ = ["main", "DatasetSpec", "InputError", "build_parser"]

SCHEMA_VERSION = "1.0"
EXAMPLE_ALIASES = {"1": "ex1", "3": "ex3", "4": "ex4"}

log = logging.getLogger("gplm_deviance")


class InputError(GplmError, ValueError):
    """Bad input file or inconsistent flags."""


# ---------------------------------------------------------------- input


@dataclass(frozen=True)
class DatasetSpec:
    """Where a dataset lives and how its columns map onto the model."""

    path: str
    response: str
    smooth: str
    linear: tuple = ()
    family: str = "bernoulli"
    log_shift: float | None = None

    def load(self) -> Dataset:
        fam = get_family(self.family)
        try:
            handle = open(self.path, newline="", encoding="utf-8")
        except OSError as exc:
            raise InputError(f"cannot open {self.path}: {exc.strerror}") from exc
        with handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise InputError(f"{self.path}: empty file or missing header row")
            header = [h.strip() for h in reader.fieldnames]
            reader.fieldnames = header
            wanted = [self.response, self.smooth, *self.linear]
            missing = [c for c in wanted if c not in header]
            if missing:
                raise InputError(f"{self.path}: missing column(s) {', '.join(missing)}")
            rows, blanks = [], []
            for line, rec in enumerate(reader, start=2):
                vals = []
                for col in wanted:
                    raw = (rec.get(col) or "").strip()
                    if raw == "" or raw.lower() in ("na", "nan"):
                        blanks.append(line)
                        break
                    try:
                        vals.append(float(raw))
                    except ValueError:
                        raise InputError(f"{self.path} line {line}: column {col} is not numeric ({raw!r})") from None
                else:
                    rows.append(vals)
        if blanks:
            raise InputError(f"{self.path}: missing values on line(s) {_lines(blanks)}")
        if not rows:
            raise InputError(f"{self.path}: no data rows")
        arr = np.array(rows)
        y, x = arr[:, 0], arr[:, 1]
        bad = np.flatnonzero(~fam.valid_response(y))
        if bad.size:
            raise InputError(
                f"{self.path}: response outside the {fam.name} range on line(s) {_lines(bad + 2)}"
            )
        if self.log_shift is not None:
            shifted = x + self.log_shift
            neg = np.flatnonzero(shifted <= 0)
            if neg.size:
                raise InputError(f"{self.path}: log({self.smooth} + {self.log_shift:g}) undefined on line(s) {_lines(neg + 2)}")
            x = np.log(shifted)
        z = arr[:, 2:] if self.linear else None
        return Dataset(x=x, y=y, z=z)


def _lines(idx, limit=20):
    idx = [int(i) for i in idx]
    text = ", ".join(str(i) for i in idx[:limit])
    return text + (f" (and {len(idx) - limit} more)" if len(idx) > limit else "")


# ---------------------------------------------------------------- output


def _clean(obj):
    """Make a report JSON-safe: arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _fmt(v) -> str:
    # shortest repr that round-trips, so CSV and JSON carry the same doubles
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    return str(v)


def to_json(command: str, body: dict) -> str:
    return json.dumps(_clean({"schema_version": SCHEMA_VERSION, "command": command, **body}), indent=2) + "\n"


def to_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _emit(text: str, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- helpers


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise InputError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _support(text: str):
    vals = _floats(text, "--range")
    if len(vals) != 2:
        raise InputError("--range takes two numbers, e.g. 0,1")
    return tuple(vals)


def _config(args, h=None, data=None) -> SmoothConfig:
    if args.range is not None:
        support = _support(args.range)
    elif data is not None:
        support = (float(data.x.min()), float(data.x.max()))
    else:
        support = (0.0, 1.0)
    return SmoothConfig(
        h=float(args.h if h is None else h),
        degree=args.degree,
        support=support,
        n_grid=args.grid,
        correction=args.correction,
    )


def _spec(args) -> DatasetSpec:
    linear = tuple(c.strip() for c in args.linear.split(",") if c.strip()) if args.linear else ()
    return DatasetSpec(args.data, args.response, args.smooth, linear, args.family, args.log_shift)


def _curve_of(fit):
    return fit.curve if isinstance(fit, GplmFit) else fit


def _figures(args):
    return Path(args.figures) if getattr(args, "figures", None) else None


# ---------------------------------------------------------------- commands


def cmd_fit(args) -> int:
    spec = _spec(args)
    data = spec.load()
    fam = get_family(spec.family)
    cfg = _config(args, data=data)
    fit = fit_gplm(data, fam, cfg, step2=args.step2)
    curve = _curve_of(fit)
    band = pointwise_ci(fit, level=args.level, variance=args.variance)
    table = deviance_table(fit, data)
    body = {
        "dataset": {"path": spec.path, "n": data.n, "response": spec.response, "smooth": spec.smooth,
                    "linear": list(spec.linear), "family": fam.name, "log_shift": spec.log_shift},
        "config": _cfg_dict(cfg),
        "curve": {"x": band.x, "m": band.estimate, "se": band.se, "lower": band.lower,
                  "upper": band.upper, "reliable": band.reliable, "level": band.level,
                  "variance": band.variance},
        "deviance_table": table.to_dict(),
        "df": curve.df,
        "integrated_loglik": curve.int_loglik,
    }
    if isinstance(fit, GplmFit):
        body["alpha"] = dict(zip(spec.linear, fit.alpha))
        body["z_mean"] = dict(zip(spec.linear, fit.z_mean))
        body["m_shift"] = float(fit.z_mean @ fit.alpha)
        body["theta_star"] = fit.theta_ss
        body["mu_star"] = fit.mu_ss
        body["diagnostics"] = {
            "converged": fit.converged,
            "iterations": fit.iterations,
            "step2": fit.step2,
            "history": [{"alpha": a, "integrated_loglik": ll} for a, ll in fit.history],
            "corr_z_x": {c: max_abs_correlation(data.z[:, k], data.x) for k, c in enumerate(spec.linear)},
            "separated_grid_points": curve.n_separated,
        }
    else:
        body["theta_star"] = curve.theta_star
        body["mu_star"] = curve.mu_star
        body["diagnostics"] = {"converged": curve.converged, "separated_grid_points": curve.n_separated}
    if curve.n_separated:
        log.warning("%d grid point(s) with separated windows; their intervals are unreliable", curve.n_separated)
    _emit(to_json("fit", body), args.out)
    if (fig := _figures(args)) is not None:
        from .plots import plot_curve

        plot_curve(band, fig / "curve.png", x_obs=data.x, title=f"h = {cfg.h:g}")
    return 0


def cmd_test(args) -> int:
    spec = _spec(args)
    data = spec.load()
    fam = get_family(spec.family)
    cfg = _config(args, data=data)
    fit = fit_gplm(data, fam, cfg, step2=args.step2)
    res = test_gplm(fit, data, fam, cfg)
    _emit(to_json("test", {"config": _cfg_dict(cfg), "result": res.to_dict()}), args.out)
    return 0


def cmd_trace(args) -> int:
    spec = _spec(args)
    data = spec.load()
    fam = get_family(spec.family)
    hs = _floats(args.hs, "--hs")
    cfg = _config(args, h=hs[0], data=data)
    rows = significance_trace(data, fam, cfg, hs)
    for r in rows:
        if r.error:
            log.warning("h=%g failed: %s", r.h, r.error)
    _emit(to_csv(["h", "df", "statistic", "p"], [(r.h, r.df, r.statistic, r.p_value) for r in rows]), args.out)
    if (fig := _figures(args)) is not None:
        from .plots import plot_trace

        plot_trace(rows, fig / "trace.png")
    return 0 if all(not r.error for r in rows) else 1


def cmd_bandwidth(args) -> int:
    spec = _spec(args)
    data = spec.load()
    fam = get_family(spec.family)
    hs = _floats(args.candidates, "--candidates")
    cfg = _config(args, h=hs[0], data=data)
    if args.method == "aicc":
        choice = select_aicc(data, fam, cfg, hs)
    else:
        choice = select_hs(data, fam, cfg, hs, standardize=args.method == "hs-std")
    body = choice.to_dict()
    body["errors"] = {f"{c.h:g}": c.error for c in choice.candidates if c.error}
    _emit(to_json("bandwidth", body), args.out)
    return 0


def _example(name: str) -> str:
    name = EXAMPLE_ALIASES.get(name, name)
    if name not in EXAMPLES:
        raise InputError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)} (or 1, 3, 4)")
    return name


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise InputError("simulate requires --seed")
    example = _example(args.example)
    bandwidth = args.h if args.h in SELECTORS else float(args.h)
    cands = tuple(_floats(args.candidates, "--candidates")) if args.candidates else None
    cells = [
        Cell(
            Dgp(example, a, args.n, args.design, not args.raw_z, args.seed),
            bandwidth, args.reps, cands, args.degree,
        )
        for a in _floats(args.a, "--a")
    ]
    report = run_cells(cells, level=args.level, workers=args.workers)
    for c in report.cells:
        if c.flagged:
            log.warning("%s: %d of %d replicates failed", c.label, c.failures, c.replicates)
    rows = report.rows()
    if args.format == "csv":
        cols = ["example", "a", "n", "design", "orthogonalize_z", "bandwidth", "replicates",
                "rejections", "failures", "denominator", "rate", "mean_df", "flagged"]
        text = to_csv(cols, [[r[c] for c in cols] for r in rows])
    else:
        text = to_json("simulate", {"seed": args.seed, "level": report.level,
                                    "rng": report.seed_note, "cells": rows})
    _emit(text, args.out)
    if args.qq:
        dump = qq_dump(cells[0], outcomes=run_outcomes(cells[0], args.workers))
        Path(args.qq).parent.mkdir(parents=True, exist_ok=True)
        Path(args.qq).write_text(
            f"# df={_fmt(dump.df)} ks={_fmt(dump.ks)}\n" + to_csv(["statistic", "chisq_quantile"], dump.rows()),
            encoding="utf-8",
        )
        if (fig := _figures(args)) is not None:
            from .plots import plot_qq

            plot_qq(dump, fig / "qq.png")
    return 0


def cmd_df(args) -> int:
    support = _support(args.range) if args.range else (0.0, 1.0)
    if args.design == "fixed":
        x = np.linspace(support[0], support[1], args.n)
    else:
        if args.seed is None:
            raise InputError("a random design requires --seed")
        x = np.random.default_rng(args.seed).uniform(support[0], support[1], args.n)
    cfg = SmoothConfig(h=args.h, degree=args.degree, support=support, n_grid=args.grid, correction=args.correction)
    tr = smoother_df(x, cfg)
    _emit(to_json("df", {"config": _cfg_dict(cfg), "n": args.n, "design": args.design,
                         "trace": tr, "df": tr - 1.0}), args.out)
    return 0


def _cfg_dict(cfg: SmoothConfig) -> dict:
    return {"h": cfg.h, "degree": cfg.degree, "support": list(cfg.support), "n_grid": cfg.n_grid,
            "correction": cfg.correction, "kernel": cfg.kernel}


# ---------------------------------------------------------------- parser


def _smoothing(p, need_h=True):
    if need_h:
        p.add_argument("--h", type=float, required=True, help="bandwidth")
    p.add_argument("--degree", type=int, default=1, help="local polynomial degree (default 1)")
    p.add_argument("--grid", type=int, default=201, help="number of grid points (default 201)")
    p.add_argument("--range", help="integration support a,b (default: data range)")
    p.add_argument("--correction", choices=("grid", "analytic", "none"), default="grid",
                   help="boundary correction of the kernel weights")


def _dataset(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="response column")
    p.add_argument("--smooth", required=True, help="column entering nonparametrically")
    p.add_argument("--linear", default="", help="comma-separated linear columns")
    p.add_argument("--family", default="bernoulli", help="bernoulli, poisson or gaussian")
    p.add_argument("--log-shift", type=float, default=None, metavar="C",
                   help="replace the smooth column x by log(x + C)")
    p.add_argument("--step2", choices=("profile", "offset"), default="profile",
                   help="update rule for the linear coefficients")


def _output(p, figures=True):
    p.add_argument("--out", help="write the report here instead of stdout")
    if figures:
        p.add_argument("--figures", metavar="DIR", help="write figures into DIR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gplm-deviance", description="Integrated analysis of deviance for GPLMs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit and report curve, coefficients and deviance table")
    _dataset(p)
    _smoothing(p)
    p.add_argument("--level", type=float, default=0.95, help="pointwise band level")
    p.add_argument("--variance", choices=("sandwich", "inverse"), default="sandwich")
    _output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="integrated likelihood ratio test of m(x) = const")
    _dataset(p)
    _smoothing(p)
    _output(p, figures=False)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("trace", help="significance trace over bandwidths (CSV)")
    _dataset(p)
    _smoothing(p, need_h=False)
    p.add_argument("--hs", required=True, help="comma-separated bandwidths")
    _output(p)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("bandwidth", help="select a bandwidth by AICc or maximum statistic")
    _dataset(p)
    _smoothing(p, need_h=False)
    p.add_argument("--method", choices=SELECTORS, default="aicc",
                   help="hs-std maximises the standardized statistic (T - df)/sqrt(2 df)")
    p.add_argument("--candidates", required=True, help="comma-separated bandwidths")
    _output(p, figures=False)
    p.set_defaults(func=cmd_bandwidth)

    p = sub.add_parser("simulate", help="Monte Carlo rejection rates")
    p.add_argument("--example", required=True, help=f"one of {', '.join(EXAMPLES)} (or 1, 3, 4)")
    p.add_argument("--a", default="0", help="amplitude(s), comma-separated")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--design", choices=("fixed", "random"), default="random")
    p.add_argument("--raw-z", action="store_true", help="skip orthogonalizing Z against (1, x)")
    p.add_argument("--h", default="0.2", help="bandwidth, 'aicc', 'hs' or 'hs-std'")
    p.add_argument("--candidates", help="bandwidth candidates for aicc/hs")
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None, help="base seed (required)")
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--qq", metavar="PATH", help="also write a qq dump CSV for the first cell")
    _output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("df", help="tr(H*) for a design, no responses needed")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--design", choices=("fixed", "random"), default="fixed")
    p.add_argument("--seed", type=int, default=None, help="seed for a random design")
    _smoothing(p)
    _output(p, figures=False)
    p.set_defaults(func=cmd_df)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # "--range -0.5,1" would otherwise read the negative bound as a flag
    joined = []
    it = iter(argv)
    for a in it:
        if a == "--range":
            nxt = next(it, None)
            joined.append("--range" if nxt is None else f"--range={nxt}")
        else:
            joined.append(a)
    args = parser.parse_args(joined)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return args.func(args)
    except (GplmError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, InputError) else 1


if __name__ == "__main__":
    sys.exit(main())
