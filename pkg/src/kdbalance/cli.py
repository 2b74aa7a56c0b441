"""Command-line front end.

Five subcommands: `weights` fits balancing weights for a CSV and writes them
to a weights file; `estimate` reports a treatment-effect estimate (from a
scheme or a saved weights file); `simulate` runs a repeated-simulation study
and prints the summary table; `bootstrap` resamples a CSV to attach spread to
the estimates; `diagnose` writes per-covariate weighted ECDF and density
series for plotting.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 solver failure.
Terminal output is rounded to 5 decimals; files written with --out carry full
precision. Option precedence for `simulate`: command-line flag, then --config
JSON entry, then the built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .balancing import (
    BalanceScheme,
    MomentConstraints,
    Target,
    estimate_ate,
    estimate_att,
    solve_weights_detailed,
)
from .baselines import fit_propensity_logistic, ipw_ate_weights, ipw_att_weights, unadjusted_weights
from .dataio import (
    CsvSchema,
    covariate_names,
    fmt5,
    nsw_schema,
    read_csv,
    read_weights,
    write_table,
    write_weights,
)
from .diagnostics import (
    WeightedSample,
    balance_report,
    mean_ks,
    mean_t,
    silverman_bandwidth,
    weighted_density_series,
    weighted_ecdf,
)
from .errors import DataError, SchemeMismatch, SolverError, UsageError
from .kernel import median_bandwidth
from .model import ATE_SCHEMES, ATT_SCHEMES, WeightScheme
from .qp import trace_text
from .simlab import (
    DISPLAY_NAMES,
    KangSchaferConfig,
    Sim2Config,
    bootstrap,
    monte_carlo,
    summary_rows,
)


class _Parser(argparse.ArgumentParser):
    """Argument errors raise instead of exiting, so dispatch owns exit codes."""

    def error(self, message):
        raise UsageError(message)


def _add_schema_flags(p):
    p.add_argument("--treatment-col", default=None, help="treatment column name (default T)")
    p.add_argument("--outcome-col", default=None, help="outcome column name (default Y)")
    p.add_argument(
        "--covariate-cols",
        default=None,
        help="comma-separated covariate columns (default: all remaining)",
    )
    p.add_argument(
        "--nsw",
        action="store_true",
        default=None,
        help="use the job-training study column layout",
    )


def _add_weight_flags(p):
    p.add_argument(
        "--scheme",
        choices=["kdbc", "kdm1", "ipw", "unad"],
        default=None,
        help="weighting scheme (default kdbc)",
    )
    p.add_argument("--target", choices=["ate", "att"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="uniform-shrinkage penalty")
    p.add_argument("--sigma2", type=float, default=None, help="kernel bandwidth (default: median heuristic)")
    p.add_argument(
        "--square-median",
        action="store_true",
        default=None,
        help="median heuristic variant: sigma = median distance, squared",
    )


def _schema_from(args) -> CsvSchema:
    base = nsw_schema() if getattr(args, "nsw", None) else CsvSchema()
    kw = {}
    if args.treatment_col is not None:
        kw["treatment_column"] = args.treatment_col
    if args.outcome_col is not None:
        kw["outcome_column"] = args.outcome_col
    if args.covariate_cols is not None:
        cols = tuple(c.strip() for c in args.covariate_cols.split(",") if c.strip())
        if not cols:
            raise UsageError("--covariate-cols must name at least one column")
        kw["covariate_columns"] = cols
    return dataclasses.replace(base, **kw) if kw else base


def _target_from(args) -> Target:
    return Target.ATT if args.target == "att" else Target.ATE


def _resolve_bandwidth(args, data) -> float:
    if args.sigma2 is not None:
        if args.sigma2 <= 0:
            raise UsageError("--sigma2 must be positive")
        return float(args.sigma2)
    return median_bandwidth(data.X, square_median=bool(args.square_median)).sigma2


def _compute_weights(args, data):
    """Returns (weights, sigma2, solver solution or None)."""
    scheme_name = args.scheme or "kdbc"
    target = _target_from(args)
    lam = 0.0 if args.lam is None else args.lam
    s2 = _resolve_bandwidth(args, data)
    if scheme_name == "unad":
        return unadjusted_weights(data), s2, None
    if scheme_name == "ipw":
        model = fit_propensity_logistic(data)
        if model.separated:
            print("warning: propensity fit shows separation; weights use clipped probabilities",
                  file=sys.stderr)
        w = ipw_ate_weights(model, data) if target is Target.ATE else ipw_att_weights(model, data)
        return w, s2, None
    moments = MomentConstraints.FIRST_MOMENT if scheme_name == "kdm1" else MomentConstraints.NONE
    scheme = BalanceScheme(target=target, moment_constraints=moments, lam=lam)
    w, sol = solve_weights_detailed(data, scheme, s2)
    return w, s2, sol


def _print_table(rows):
    if not rows:
        return
    cols = list(rows[0].keys())
    cells = [[fmt5(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    def line(vals):
        return "  ".join(
            v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(vals, widths))
        )
    print(line(cols))
    for row in cells:
        print(line(row))


# -- weights ----------------------------------------------------------------------


def _cmd_weights(args) -> int:
    data = read_csv(args.csv, _schema_from(args))
    w, s2, sol = _compute_weights(args, data)
    write_weights(args.out, w, data)
    if args.trace is not None:
        if sol is None:
            raise UsageError("--trace is only available for kdbc/kdm1 schemes")
        with open(args.trace, "w") as fh:
            fh.write(trace_text(sol))
    rep = balance_report(data, w, s2)
    print(f"scheme: {w.scheme.value}")
    print(f"lambda: {fmt5(w.lam)}")
    print(f"sigma2: {fmt5(s2)}")
    if sol is not None:
        print(f"iterations: {sol.iterations}")
    for key, val in (
        ("rw", rep.rw), ("KD", rep.kd), ("maxASMD", rep.max_asmd),
        ("meanASMD", rep.mean_asmd), ("meanKS", rep.mean_ks), ("meanT", rep.mean_t),
    ):
        print(f"{key}: {fmt5(val)}")
    print(f"weights written to {args.out}")
    return 0


# -- estimate ---------------------------------------------------------------------


def _infer_target(w, args) -> Target:
    in_ate = w.scheme in ATE_SCHEMES
    in_att = w.scheme in ATT_SCHEMES
    if in_ate and in_att:  # unadjusted weights serve either estimand
        return _target_from(args)
    if args.target is not None:
        want = _target_from(args)
        ok = in_ate if want is Target.ATE else in_att
        if not ok:
            raise SchemeMismatch(f"{w.scheme.value} weights do not target the {args.target.upper()}")
        return want
    return Target.ATE if in_ate else Target.ATT


def _cmd_estimate(args) -> int:
    data = read_csv(args.csv, _schema_from(args))
    if args.weights is not None:
        w, groups = read_weights(args.weights)
        if groups.size != data.n or not np.array_equal(groups, data.T):
            raise SchemeMismatch("weights file group labels do not match the dataset")
        target = _infer_target(w, args)
    else:
        w, _, _ = _compute_weights(args, data)
        target = _target_from(args)
    est = estimate_ate(data, w) if target is Target.ATE else estimate_att(data, w)
    label = "ATE" if target is Target.ATE else "ATT"
    print(f"{label}: {fmt5(est)}")
    print(f"scheme: {w.scheme.value}")
    if args.out is not None:
        write_table(
            args.out,
            [{"estimand": label, "estimate": est, "scheme": w.scheme.value, "lambda": w.lam}],
        )
    return 0


# -- simulate ---------------------------------------------------------------------

_SIM_COMMON = {
    "design": "kang-schafer",
    "methods": "oracle,unad,ipw,kdbc,kdm1",
    "target": "ate",
    "reps": 500,
    "seed": 0,
    "jobs": 1,
    "lambda": None,
    "lambda_grid": None,
    "n": 200,
    "gamma": None,
    "sigma2_outcome": 10.0,
}
_SIM_KANG = {"rho": 0.0, "delta_t": "X", "delta_o": "X"}
_SIM_SIM2 = {"p_treat": 0.5, "alpha1": 0.8, "alpha2": 0.2, "alpha3": 1.0, "alpha4": 2.0}
_CONFIG_ALIASES = {"lambda": "lam"}  # JSON key -> argparse dest


def _load_config(path) -> dict:
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def _merged(args, cfg: dict, defaults: dict) -> dict:
    """flag > config entry > default, key by key."""
    out = {}
    for key, dflt in defaults.items():
        dest = _CONFIG_ALIASES.get(key, key)
        val = getattr(args, dest, None)
        if val is None and key in cfg:
            val = cfg[key]
        out[key] = dflt if val is None else val
    return out


def _parse_methods(spec) -> tuple:
    if isinstance(spec, (list, tuple)):
        return tuple(spec)
    return tuple(m.strip() for m in str(spec).split(",") if m.strip())


def _parse_grid(spec) -> tuple:
    if isinstance(spec, (list, tuple)):
        return tuple(float(v) for v in spec)
    try:
        return tuple(float(v.strip()) for v in str(spec).split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"bad lambda grid {spec!r}") from exc


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config) if args.config else {}
    design = args.design or cfg.get("design") or _SIM_COMMON["design"]
    if design not in ("kang-schafer", "sim2"):
        raise UsageError(f"unknown design '{design}'")
    defaults = dict(_SIM_COMMON, **(_SIM_KANG if design == "kang-schafer" else _SIM_SIM2))
    unknown = set(cfg) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    v = _merged(args, cfg, defaults)
    if v["lambda"] is not None and v["lambda_grid"] is not None:
        raise UsageError("give either --lambda or --lambda-grid, not both")
    try:
        if design == "kang-schafer":
            kw = dict(
                N=int(v["n"]),
                sigma2_outcome=float(v["sigma2_outcome"]),
                rho=float(v["rho"]),
                delta_T=str(v["delta_t"]),
                delta_O=str(v["delta_o"]),
                seed=int(v["seed"]),
            )
            if v["gamma"] is not None:
                kw["gamma"] = float(v["gamma"])
            config = KangSchaferConfig(**kw)
            default_grid = (0.0,)
        else:
            kw = dict(
                N=int(v["n"]),
                p_treat=float(v["p_treat"]),
                alpha1=float(v["alpha1"]),
                alpha2=float(v["alpha2"]),
                alpha3=float(v["alpha3"]),
                alpha4=float(v["alpha4"]),
                sigma2_outcome=float(v["sigma2_outcome"]),
                seed=int(v["seed"]),
            )
            if v["gamma"] is not None:
                kw["gamma"] = float(v["gamma"])
            config = Sim2Config(**kw)
            default_grid = config.lambda_grid
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if v["lambda_grid"] is not None:
        lam_list = _parse_grid(v["lambda_grid"])
    elif v["lambda"] is not None:
        lam_list = (float(v["lambda"]),)
    else:
        lam_list = default_grid
    methods = _parse_methods(v["methods"])
    target = Target.ATT if str(v["target"]) == "att" else Target.ATE
    rows = []
    for lam in lam_list:
        mc = monte_carlo(
            config, methods, reps=int(v["reps"]), target=target, lam=lam, jobs=int(v["jobs"])
        )
        rows.extend(summary_rows(mc))
        if mc.failed:
            print(f"note: {mc.failed} of {mc.requested} draws failed at lambda={lam:g}",
                  file=sys.stderr)
    _print_table(rows)
    if args.out is not None:
        write_table(args.out, rows)
    return 0


# -- bootstrap --------------------------------------------------------------------


def _cmd_bootstrap(args) -> int:
    data = read_csv(args.csv, _schema_from(args))
    methods = _parse_methods(args.methods or "unad,ipw,kdbc,kdm1")
    target = _target_from(args)
    lam = 0.0 if args.lam is None else args.lam
    summary = bootstrap(
        data,
        methods,
        b=args.b,
        seed=args.seed,
        target=target,
        lam=lam,
        jobs=args.jobs,
        within_group=bool(args.within_group),
    )
    label = "ATE" if target is Target.ATE else "ATT"
    rows = [
        {
            "method": DISPLAY_NAMES[m.name],
            "lambda": lam,
            label: m.mean,
            "sd": m.sd,
            "failures": m.failures,
        }
        for m in summary.methods
    ]
    _print_table(rows)
    if summary.failed:
        print(f"note: {summary.failed} of {summary.draws} resamples failed", file=sys.stderr)
    if args.out is not None:
        write_table(args.out, rows)
    return 0


# -- diagnose ---------------------------------------------------------------------


def _cmd_diagnose(args) -> int:
    schema = _schema_from(args)
    data = read_csv(args.csv, schema)
    names = covariate_names(args.csv, schema)
    if args.weights is not None:
        w, groups = read_weights(args.weights)
        if groups.size != data.n or not np.array_equal(groups, data.T):
            raise SchemeMismatch("weights file group labels do not match the dataset")
        s2 = _resolve_bandwidth(args, data)
    else:
        w, s2, _ = _compute_weights(args, data)
    if args.covariates is not None:
        wanted = [c.strip() for c in args.covariates.split(",") if c.strip()]
        for c in wanted:
            if c not in names:
                raise UsageError(f"unknown covariate '{c}' (have: {', '.join(names)})")
        selected = [(names.index(c), c) for c in wanted]
    else:
        selected = list(enumerate(names))
    rep = balance_report(data, w, s2)
    print(f"scheme: {w.scheme.value}")
    print(f"sigma2: {fmt5(s2)}")
    print(f"rw: {fmt5(rep.rw)}")
    print(f"KD: {fmt5(rep.kd)}")
    t = data.T == 1
    per_rows = []
    for d, name in selected:
        col = data.X[:, d : d + 1]
        per_rows.append(
            {
                "covariate": name,
                "ASMD": rep.per_covariate_asmd[d],
                "KS": mean_ks(data, w, col),
                "t": mean_t(data, w, col),
            }
        )
    _print_table(per_rows)
    grid_points = args.grid_points
    written = []
    for d, name in selected:
        s1 = WeightedSample(data.X[t, d], w.p)
        s0 = WeightedSample(data.X[~t, d], w.q)
        f1, f0 = weighted_ecdf(s1), weighted_ecdf(s0)
        pooled = np.unique(data.X[:, d])
        ecdf_path = f"{args.out_prefix}_ecdf_{name}.csv"
        write_table(
            ecdf_path,
            [
                {"value": float(x), "treated_cdf": float(f1(x)), "control_cdf": float(f0(x))}
                for x in pooled
            ],
        )
        h = max(silverman_bandwidth(s1), silverman_bandwidth(s0))
        lo, hi = float(pooled[0]) - 3.0 * h, float(pooled[-1]) + 3.0 * h
        grid = np.linspace(lo, hi, grid_points)
        _, d1 = weighted_density_series(s1, grid)
        _, d0 = weighted_density_series(s0, grid)
        dens_path = f"{args.out_prefix}_density_{name}.csv"
        write_table(
            dens_path,
            [
                {"grid": float(g), "treated_density": float(a), "control_density": float(b)}
                for g, a, b in zip(grid, d1, d0)
            ],
        )
        written.extend([ecdf_path, dens_path])
    for path in written:
        print(f"wrote {path}")
    return 0


# -- parser and dispatch ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kdbalance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="fit balancing weights for a CSV dataset")
    p.add_argument("--csv", required=True)
    _add_schema_flags(p)
    _add_weight_flags(p)
    p.add_argument("--out", required=True, help="weights file to write")
    p.add_argument("--trace", default=None, help="write the solver iteration trace here")
    p.set_defaults(func=_cmd_weights)

    p = sub.add_parser("estimate", help="estimate a treatment effect")
    p.add_argument("--csv", required=True)
    _add_schema_flags(p)
    _add_weight_flags(p)
    p.add_argument("--weights", default=None, help="reuse a saved weights file")
    p.add_argument("--out", default=None, help="write the estimate row as CSV")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="run a repeated-simulation study")
    p.add_argument("--design", choices=["kang-schafer", "sim2"], default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sigma2-outcome", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--delta-t", choices=["X", "U"], default=None)
    p.add_argument("--delta-o", choices=["X", "U"], default=None)
    p.add_argument("--p-treat", type=float, default=None)
    p.add_argument("--alpha1", type=float, default=None)
    p.add_argument("--alpha2", type=float, default=None)
    p.add_argument("--alpha3", type=float, default=None)
    p.add_argument("--alpha4", type=float, default=None)
    p.add_argument("--methods", default=None, help="comma-separated subset of oracle,unad,ipw,kdbc,kdm1")
    p.add_argument("--target", choices=["ate", "att"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--lambda-grid", default=None, help="comma-separated penalties to sweep")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file of option defaults")
    p.add_argument("--out", default=None, help="write the summary table as CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("bootstrap", help="bootstrap estimates for a CSV dataset")
    p.add_argument("--csv", required=True)
    _add_schema_flags(p)
    _add_weight_flags(p)
    p.add_argument("--methods", default=None)
    p.add_argument("--b", type=int, default=200, help="number of resamples")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--within-group", action="store_true", default=None,
                   help="resample treated and control rows separately")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bootstrap)

    p = sub.add_parser("diagnose", help="write weighted ECDF/density series per covariate")
    p.add_argument("--csv", required=True)
    _add_schema_flags(p)
    _add_weight_flags(p)
    p.add_argument("--weights", default=None, help="reuse a saved weights file")
    p.add_argument("--covariates", default=None, help="comma-separated subset to plot")
    p.add_argument("--grid-points", type=int, default=256)
    p.add_argument("--out-prefix", default="diagnose")
    p.set_defaults(func=_cmd_diagnose)

    return parser


def cli_dispatch(argv=None) -> int:
    """Parse and run one invocation, mapping failures to exit codes."""
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help
        code = exc.code
        return int(code) if code is not None else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    raise SystemExit(cli_dispatch(sys.argv[1:]))
