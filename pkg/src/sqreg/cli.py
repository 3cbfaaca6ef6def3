"""Command-line front end.

Subcommands: ``fit`` (spline quantile regression), ``qr`` (per-level
quantile regression), ``select`` (smoothing-parameter criterion curve),
``boot`` (bootstrap confidence bands), ``simulate`` (Monte Carlo accuracy
experiments).  Outputs are long-format CSVs plus a JSON sidecar embedding
the resolved configuration, seed, and solver diagnostics; identical
configuration and seed reproduce outputs byte for byte.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver failure.
"""

import argparse
import csv
import json
import sys
import warnings

import numpy as np

from . import __version__
from .assembly import Dataset
from .bootstrap import band
from .exceptions import DataError, SolverError
from .fit import fit_qr, fit_sqr
from .selection import select_spar
from .simlab import SimModel, run_mc
from .splines import make_grid

__all__ = ["main", "load_csv", "build_lagged_design"]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.run(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 4
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="sqreg",
        description="Spline quantile regression: smooth coefficient paths "
                    "across quantile levels.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("fit", "fit a spline quantile regression"),
                            ("qr", "fit per-level quantile regression"),
                            ("select", "smoothing-parameter criterion curve"),
                            ("boot", "bootstrap confidence band")):
        p = sub.add_parser(name, help=help_text)
        _add_data_options(p)
        _add_grid_options(p)
        if name != "qr":
            _add_smoothing_options(p, require_spar=(name != "select"))
        if name == "boot":
            p.add_argument("--boot", type=int, default=1000, metavar="B",
                           help="number of bootstrap replicates")
            p.add_argument("--block-len", type=int, default=10,
                           help="moving-block length (1 = pair resampling)")
            p.add_argument("--blocks", action="store_true",
                           help="use the moving-block scheme")
            p.add_argument("--level", type=float, default=0.90,
                           help="nominal band coverage")
            p.add_argument("--deriv", action="store_true",
                           help="band for the derivatives instead of the "
                                "coefficients")
            p.add_argument("--jobs", type=int, default=1,
                           help="parallel workers for the replicates")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True, metavar="PREFIX",
                       help="output prefix; writes PREFIX.csv and "
                            "PREFIX.json")
        p.set_defaults(run={"fit": _cmd_fit, "qr": _cmd_qr,
                            "select": _cmd_select, "boot": _cmd_boot}[name])

    p = sub.add_parser("simulate", help="Monte Carlo accuracy experiment")
    p.add_argument("--model", required=True,
                   choices=["linear14", "qar15", "rancoef17"])
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--methods", default="linear,cubic",
                   help="comma-separated subset of linear,cubic")
    p.add_argument("--spar-grid", default="0:4:0.5", metavar="LO:HI:STEP",
                   help="spar grid as lo:hi:step")
    _add_grid_options(p, defaults=(0.05, 0.95, 0.02))
    p.add_argument("--subset-step", type=float, default=None,
                   help="also fit with knots thinned to this step and "
                        "interpolate back")
    p.add_argument("--point-taus", default=None,
                   help="comma-separated levels for pointwise MAE "
                        "(e.g. 0.25,0.5,0.75)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, metavar="PREFIX")
    p.set_defaults(run=_cmd_simulate)
    return parser


def _add_data_options(p):
    p.add_argument("--input", required=True, help="CSV file with headers")
    p.add_argument("--y", required=True, help="response column")
    p.add_argument("--x", default="", help="comma-separated covariates")
    p.add_argument("--lag", default="",
                   help="lagged regressors as col:lag pairs, e.g. 'x:1,y:1' "
                        "(response lags are placed first)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--intercept", dest="intercept", action="store_true",
                   default=True, help="prepend a constant column (default)")
    g.add_argument("--no-intercept", dest="intercept", action="store_false")
    p.add_argument("--center-x", default="", metavar="COLS",
                   help="design columns to center (comma list or 'all')")
    p.add_argument("--scale-x", default="", metavar="COLS",
                   help="design columns to scale to unit standard deviation")


def _add_grid_options(p, defaults=(0.05, 0.95, 0.05)):
    p.add_argument("--tau-min", type=float, default=defaults[0])
    p.add_argument("--tau-max", type=float, default=defaults[1])
    p.add_argument("--tau-step", type=float, default=defaults[2])


def _add_smoothing_options(p, require_spar):
    p.add_argument("--method", default="cubic", choices=["linear", "cubic"])
    g = p.add_mutually_exclusive_group(required=require_spar)
    g.add_argument("--spar", type=float, default=None,
                   help="log-scale smoothing parameter")
    g.add_argument("--c", type=float, default=None, dest="c_raw",
                   help="raw smoothing scalar")
    g.add_argument("--auto", choices=["aic", "bic"], default=None,
                   help="select spar by criterion grid search")
    p.add_argument("--spar-grid", default=None, metavar="LO:HI:STEP",
                   help="grid for --auto (default -1:4:0.1)")
    p.add_argument("--weights", default=None,
                   help="file with one penalty weight per knot")


# ----------------------------------------------------------------------
# data loading


def load_csv(path, y_col, x_cols=(), lag_spec=(), intercept=True,
             center=(), scale=()):
    """Load a dataset from a headed CSV file.

    Rows with missing cells in the selected columns are dropped (with a
    warning); unparseable cells raise a DataError naming the row and
    column.  Returns (Dataset, column names, number of dropped rows).
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    header = [h.strip() for h in header]
    needed = [y_col] + [c for c, _ in lag_spec] + list(x_cols)
    for col in needed:
        if col not in header:
            raise DataError(f"{path}: missing column {col!r}")
    if not rows:
        raise DataError(f"{path}: no data rows")

    col_idx = {c: header.index(c) for c in set(needed)}
    values = {c: np.full(len(rows), np.nan) for c in col_idx}
    keep = np.ones(len(rows), dtype=bool)
    for i, row in enumerate(rows):
        for c, j in col_idx.items():
            cell = row[j].strip() if j < len(row) else ""
            if cell == "" or cell.upper() in ("NA", "NAN"):
                keep[i] = False
                continue
            try:
                values[c][i] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: unparseable cell at row {i + 2}, "
                    f"column {c!r}: {cell!r}") from None
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} rows with missing cells")
    series = {c: v[keep] for c, v in values.items()}
    if series[y_col].size == 0:
        raise DataError(f"{path}: no usable rows after dropping missing")

    X, y, names = build_lagged_design(series, y_col, x_cols, lag_spec,
                                      intercept)
    names = list(names)
    X = _center_scale(X, names, center, scale)
    return Dataset(X, y), names, dropped


def build_lagged_design(series, y_col, x_cols, lag_spec, intercept):
    """Assemble (X, y, names) with lagged regressors.

    Lags of the response column come first (ascending lag), then the
    remaining lagged columns in the order given, then plain covariates.
    The first max-lag rows are consumed by the lag construction.
    """
    maxlag = max((k for _, k in lag_spec), default=0)
    if maxlag < 0 or any(k < 1 for _, k in lag_spec):
        raise DataError("lags must be positive integers")
    T = series[y_col].size
    if T <= maxlag:
        raise DataError(f"series too short ({T} rows) for lag {maxlag}")
    n = T - maxlag
    cols, names = [], []
    if intercept:
        cols.append(np.ones(n))
        names.append("intercept")
    own = sorted([(c, k) for c, k in lag_spec if c == y_col],
                 key=lambda e: e[1])
    others = [(c, k) for c, k in lag_spec if c != y_col]
    for c, k in own + others:
        cols.append(series[c][maxlag - k:T - k])
        names.append(f"{c}_lag{k}")
    for c in x_cols:
        cols.append(series[c][maxlag:])
        names.append(c)
    if not cols:
        raise DataError("no design columns selected")
    return np.column_stack(cols), series[y_col][maxlag:], names


def _center_scale(X, names, center, scale):
    X = X.copy()
    for spec, doing in ((center, "center"), (scale, "scale")):
        if not spec:
            continue
        cols = names if spec == "all" else [s.strip()
                                            for s in spec.split(",")]
        for c in cols:
            if c == "intercept":
                continue
            if c not in names:
                raise DataError(f"cannot {doing} unknown column {c!r}")
            j = names.index(c)
            if doing == "center":
                X[:, j] -= X[:, j].mean()
            else:
                sd = X[:, j].std()
                if sd <= 0:
                    raise DataError(f"column {c!r} has zero variance")
                X[:, j] /= sd
    return X


def _parse_lag(spec):
    if not spec:
        return []
    out = []
    for item in spec.split(","):
        try:
            col, k = item.rsplit(":", 1)
            out.append((col.strip(), int(k)))
        except ValueError:
            raise DataError(f"bad lag entry {item!r}; "
                            "expected col:lag") from None
    return out


def _parse_cols(spec):
    return [c.strip() for c in spec.split(",") if c.strip()]


def _parse_spar_grid(spec):
    if spec is None:
        return None
    try:
        lo, hi, step = (float(v) for v in spec.split(":"))
        count = round((hi - lo) / step)
        return np.round(lo + step * np.arange(count + 1), 10)
    except ValueError:
        raise DataError(f"bad spar grid {spec!r}; expected lo:hi:step"
                        ) from None


def _load_weights(path, L):
    if path is None:
        return None
    try:
        w = np.loadtxt(path, ndmin=1)
    except OSError as exc:
        raise DataError(f"cannot read weights: {exc}") from None
    if w.size != L:
        raise DataError(f"weights file has {w.size} entries, expected {L}")
    return w


# ----------------------------------------------------------------------
# output


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_sidecar(path, command, args, extra):
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("run",) and not callable(v)}
    payload = {"tool": "sqreg", "version": __version__,
               "sidecar_schema": 1, "command": command,
               "config": config, **extra}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=str)
        fh.write("\n")


def _report_dict(report):
    return {"status": report.status, "iterations": report.iterations,
            "gap": report.gap, "primal_residual": report.primal_residual,
            "dual_residual": report.dual_residual}


def _prepare(args):
    grid = make_grid(args.tau_min, args.tau_max, args.tau_step)
    data, names, dropped = load_csv(
        args.input, args.y, _parse_cols(args.x), _parse_lag(args.lag),
        args.intercept, args.center_x, args.scale_x)
    return grid, data, names, dropped


def _resolve_smoothing(args, data, grid, weights):
    """Returns (spar, c) with selection resolved, plus curve or None."""
    if args.auto is not None:
        curve = select_spar(data, grid, args.method,
                            spar_grid=_parse_spar_grid(args.spar_grid),
                            criterion_kind=args.auto, weights=weights)
        return curve.chosen_spar[args.auto], None, curve
    return args.spar, args.c_raw, None


# ----------------------------------------------------------------------
# commands


def _cmd_fit(args):
    grid, data, names, dropped = _prepare(args)
    weights = _load_weights(args.weights, grid.L)
    spar, c, curve = _resolve_smoothing(args, data, grid, weights)
    fit = fit_sqr(data, grid, args.method, spar=spar, c=c, weights=weights,
                  colnames=names)
    coefs = fit.coefficients(grid.levels)
    derivs = fit.derivatives(grid.levels)
    rows = [(tau, name, coefs[l, j], derivs[l, j])
            for l, tau in enumerate(grid.levels)
            for j, name in enumerate(names)]
    _write_csv(args.out + ".csv",
               ["tau", "coef_name", "estimate", "deriv"], rows)
    extra = {"n": data.n, "p": data.p, "dropped_rows": dropped,
             "spar": fit.spar, "c": fit.c,
             "solver": _report_dict(fit.report)}
    if curve is not None:
        extra["selection"] = {"criterion": args.auto,
                              "chosen_spar": curve.chosen_spar}
    _write_sidecar(args.out + ".json", "fit", args, extra)


def _cmd_qr(args):
    grid, data, names, dropped = _prepare(args)
    fit = fit_qr(data, grid, colnames=names)
    rows = [(tau, name, fit.per_level_coefs[l, j])
            for l, tau in enumerate(grid.levels)
            for j, name in enumerate(names)]
    _write_csv(args.out + ".csv", ["tau", "coef_name", "estimate"],
               rows)
    _write_sidecar(args.out + ".json", "qr", args,
                   {"n": data.n, "p": data.p, "dropped_rows": dropped,
                    "solver": _report_dict(fit.report)})


def _cmd_select(args):
    grid, data, names, dropped = _prepare(args)
    weights = _load_weights(args.weights, grid.L)
    kind = args.auto or "bic"
    curve = select_spar(data, grid, args.method,
                        spar_grid=_parse_spar_grid(args.spar_grid),
                        criterion_kind=kind, weights=weights)
    rows = [(s, a, b, sg, mb) for s, a, b, sg, mb in
            zip(curve.spar_grid, curve.aic, curve.bic, curve.sigma_bar,
                curve.m_bar)]
    _write_csv(args.out + ".csv", ["spar", "aic", "bic", "sigma_bar",
                                   "m_bar"], rows)
    _write_sidecar(args.out + ".json", "select", args,
                   {"n": data.n, "p": data.p, "dropped_rows": dropped,
                    "chosen_spar": curve.chosen_spar,
                    "failures": curve.failures})


def _cmd_boot(args):
    grid, data, names, dropped = _prepare(args)
    weights = _load_weights(args.weights, grid.L)
    spar, c, curve = _resolve_smoothing(args, data, grid, weights)
    fit = fit_sqr(data, grid, args.method, spar=spar, c=c, weights=weights,
                  colnames=names)
    target = "deriv" if args.deriv else "coef"
    scheme = "blocks" if args.blocks else "pairs"
    bd = band(data, grid, {"method": args.method, "c": fit.c,
                           "weights": weights},
              B=args.boot, scheme=scheme, block_len=args.block_len,
              level=args.level, target=target, seed=args.seed,
              n_jobs=args.jobs)
    coefs = fit.coefficients(grid.levels)
    derivs = fit.derivatives(grid.levels)
    rows = [(tau, name, coefs[l, j], derivs[l, j], bd.lower[l, j],
             bd.upper[l, j])
            for l, tau in enumerate(grid.levels)
            for j, name in enumerate(names)]
    _write_csv(args.out + ".csv",
               ["tau", "coef_name", "estimate", "deriv", "lower", "upper"],
               rows)
    extra = {"n": data.n, "p": data.p, "dropped_rows": dropped,
             "spar": fit.spar, "c": fit.c, "band": {
                 "level": bd.level, "B": bd.B, "target": bd.target,
                 "scheme": scheme, "block_len": bd.block_len,
                 "failed_replicates": bd.n_failed},
             "solver": _report_dict(fit.report)}
    if curve is not None:
        extra["selection"] = {"criterion": args.auto,
                              "chosen_spar": curve.chosen_spar}
    _write_sidecar(args.out + ".json", "boot", args, extra)


def _cmd_simulate(args):
    grid = make_grid(args.tau_min, args.tau_max, args.tau_step)
    subset_grid = None
    if args.subset_step is not None:
        subset_grid = make_grid(args.tau_min, args.tau_max, args.subset_step)
    methods = tuple(_parse_cols(args.methods))
    point_taus = None
    if args.point_taus:
        point_taus = [float(v) for v in _parse_cols(args.point_taus)]
    spar_grid = _parse_spar_grid(args.spar_grid)
    model = SimModel(args.model, args.n)
    report = run_mc(model, grid, methods=methods, spar_grid=spar_grid,
                    runs=args.runs, seed=args.seed, subset_grid=subset_grid,
                    point_taus=point_taus, n_jobs=args.jobs)
    rows = [("", "qr", report.mae_qr)]
    for m in methods:
        for si, spar in enumerate(report.spar_grid):
            rows.append((spar, m, report.mae_by_spar[m][si]))
        if subset_grid is not None:
            for si, spar in enumerate(report.spar_grid):
                rows.append((spar, m + "_subset",
                             report.subset_mae_by_spar[m][si]))
    _write_csv(args.out + ".csv", ["spar", "method", "mae"], rows)
    extra = {"runs_effective": report.runs_effective,
             "failures": report.failures}
    if point_taus is not None:
        extra["point_mae"] = {
            "taus": list(map(float, report.point_taus)),
            "qr": report.point_mae_qr.tolist(),
            **{m: report.point_mae_by_spar[m].tolist() for m in methods}}
    _write_sidecar(args.out + ".json", "simulate", args, extra)


if __name__ == "__main__":
    sys.exit(main())
