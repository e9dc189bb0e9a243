"""Command-line interface.

Every output table starts with a ``#`` comment line carrying the package
version, the seed and a hash of the run configuration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .censoring import fit_censoring_km
from .data import load_dataset, save_dataset
from .dataprep import extract_subdataset, load_raw_panel
from .evaluation import ScoredSample, bootstrap_auc, likelihood_score, roc_curve, time_auc
from .exceptions import ParseError, SchemaError, SurvMidasError
from .midas import aggregate, parse_dictionary
from .model import FittedModel, load_model, save_model
from .selection import (ALPHA_GRID, METHODS, CvPlan, cross_validate, repeated_split_protocol,
                        training_weights)
from .simulation import ScenarioSpec, StudyConfig, run_study, simulate_dataset
from .solver import PenaltySpec, SolverOptions, fit, fit_path, lambda_path, predict_prob

logger = logging.getLogger("survmidas")


class UsageError(Exception):
    """Invalid flag combination detected after parsing."""


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _config_hash(args) -> str:
    # output destinations do not change results, so reruns elsewhere hash alike
    skip = {"func", "verbose", "threads", "out", "model", "plot", "report", "pairs",
            "export_km", "export_dict"}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in skip}
    blob = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _header(args) -> str:
    return f"survmidas {__version__} command={args.command} seed={args.seed} config={_config_hash(args)}"


def _write_table(path, rows, fields, args):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# {_header(args)}\n")
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    logger.info("wrote %s", path)


def _need_out(args, what="--out"):
    if args.out is None:
        raise UsageError(f"{args.command} requires {what}")
    return Path(args.out)


def _load(args):
    return load_dataset(args.input, args.s, args.m, reporting_delay=args.reporting_delay)


def _dictionary(args, d):
    return parse_dictionary(args.dict, args.L, d)


def _solver(args):
    return SolverOptions(tol=args.tol, max_iter=args.max_iter)


def _export_extras(args, ds, dictionary):
    if getattr(args, "export_km", None):
        rows = [{"time": float(u), "survival": float(v)} for u, v in fit_censoring_km(ds).to_rows()]
        _write_table(args.export_km, rows, ["time", "survival"], args)
    if getattr(args, "export_dict", None):
        rows = [{"lag": j + 1, **{f"w{l + 1}": float(dictionary.w[j, l]) for l in range(dictionary.L)}}
                for j in range(dictionary.d)]
        _write_table(args.export_dict, rows, ["lag"] + [f"w{l + 1}" for l in range(dictionary.L)], args)


def _model_from(fit_result, ds, dictionary, t):
    return FittedModel(fit_result.beta, ds.covariate_names, dictionary, fit_result.lam,
                       fit_result.alpha, ds.s, t, ds.m, ds.reporting_delay)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    out = _need_out(args)
    if args.data_only:
        spec = ScenarioSpec(args.scenario[0], args.n_list[0], k=args.K, target_censoring=args.target_censoring,
                            seed=args.seed, rho=args.rho)
        sim = simulate_dataset(spec)
        save_dataset(sim.dataset, out, header_comment=_header(args))
        logger.info("censoring rate %.3f (gamma %.4g)", sim.censoring_rate, sim.gamma)
        return 0
    specs = tuple(ScenarioSpec(sc, n, k=args.K, target_censoring=args.target_censoring,
                               seed=args.seed, rho=args.rho)
                  for sc in args.scenario for n in args.n_list)
    plan = CvPlan(k=args.k, n_lambda=args.n_lambda, ratio=args.ratio, solver=_solver(args))
    cfg = StudyConfig(specs, args.reps, tuple(args.percentiles), tuple(args.methods), plan,
                       n_jobs=args.threads)
    res = run_study(cfg)
    rows = res.rows()
    fields = ["scenario", "n", "horizon", "percentile", "method", "auc_mean", "auc_sd",
              "mse_x1", "mse_x2", "reps"]
    _write_table(out, rows, fields, args)
    if args.plot:
        from .plotting import plot_auc_summary
        plot_auc_summary([{"group": f"S{r['scenario']} N={r['n']} {r['horizon']}", "method": r["method"],
                           "auc": r["auc_mean"], "sd": r["auc_sd"] if np.isfinite(r["auc_sd"]) else 0.0}
                          for r in rows], args.plot, title="mean test AUC")
    return 0


def cmd_prep(args):
    out = _need_out(args)
    raw = load_raw_panel(args.input, m=args.m)
    ds, report = extract_subdataset(raw, args.s, args.c1, args.c2, args.step, args.m2_rule,
                                    n_jobs=args.threads)
    save_dataset(ds, out, header_comment=_header(args))
    if args.report:
        _write_table(args.report, [c.as_row() for c in report],
                     ["a", "b", "n_ab", "p_ab", "uncensored", "admissible", "selected"], args)
    pick = next(c for c in report if c.selected)
    print(json.dumps({"a": pick.a, "b": pick.b, "n": pick.n_ab, "p": pick.p_ab,
                      "uncensored": pick.uncensored}))
    return 0


def cmd_fit(args):
    if (args.lam is None) == (args.path is None):
        raise UsageError("fit needs exactly one of --lambda and --path")
    if args.path is not None and len(args.path) != 2:
        raise UsageError("--path takes n,ratio")
    ds = _load(args)
    dictionary = _dictionary(args, ds.d)
    _export_extras(args, ds, dictionary)
    w, _ = training_weights(ds, args.t, args.drop_censored)
    x = aggregate(ds, dictionary)
    if args.lam is not None:
        res = fit(x, w, PenaltySpec.for_design(x, args.alpha, args.lam), _solver(args))
        model = _model_from(res, ds, dictionary, args.t)
    else:
        lams = lambda_path(x, w, args.alpha, int(args.path[0]), args.path[1])
        fits = fit_path(x, w, args.alpha, lams, _solver(args))
        rows = []
        for res in fits:
            p = predict_prob(res, x.x)
            if args.metric == "auc":
                metric = time_auc(ScoredSample(p, ds.time, ds.status, args.t))
            else:
                metric = likelihood_score(p, w)
            rows.append({"lambda": res.lam, "alpha": res.alpha,
                         "nonzero": int(np.count_nonzero(res.beta[1:])),
                         "objective": res.objective, "train_metric": float(metric),
                         "converged": int(res.converged), "diverged": int(res.diverged)})
        if args.out:
            _write_table(args.out, rows, list(rows[0]), args)
        usable = [r for r in fits if not r.diverged]
        if not usable:
            raise SurvMidasError("every fit on the path diverged")
        res = usable[-1]
        model = _model_from(res, ds, dictionary, args.t)
    if args.model:
        save_model(model, args.model)
    print(json.dumps({"lambda": res.lam, "alpha": res.alpha, "converged": res.converged,
                      "diverged": res.diverged, "iterations": res.iterations, "kkt_residual": res.kkt_residual,
                      "nonzero": int(np.count_nonzero(res.beta[1:]))}))
    return 0


def cmd_cv(args):
    ds = _load(args)
    dictionary = _dictionary(args, ds.d)
    _export_extras(args, ds, dictionary)
    plan = CvPlan(k=args.k, metric=args.metric, alpha_grid=tuple(args.alpha_grid),
                  n_lambda=args.n_lambda, ratio=args.ratio, seed=args.seed,
                  oversample=args.oversample, drop_censored=args.drop_censored,
                  kappa=args.kappa, n_jobs=args.threads, solver=_solver(args))
    res = cross_validate(ds, args.t, dictionary, plan)
    if args.out:
        rows = [{"alpha": a, "lambda": lam, "mean": m, "sd": s} for a, lam, m, s in res.table()]
        _write_table(args.out, rows, ["alpha", "lambda", "mean", "sd"], args)
    if args.model:
        save_model(_model_from(res.fit, ds, dictionary, args.t), args.model)
    print(json.dumps({"alpha": res.best_alpha, "lambda": res.best_lambda, "metric": res.metric,
                      "score": float(np.nanmax(res.mean)), "converged": res.fit.converged}))
    return 0


def cmd_predict(args):
    out = _need_out(args)
    model = load_model(args.model)
    ds = load_dataset(args.input, model.s, model.m, covariates=model.names,
                      reporting_delay=model.reporting_delay)
    prob = model.predict(ds)
    rows = [{"id": ds.ids[i], "time": float(ds.time[i]), "status": int(ds.status[i]),
             "prob": float(prob[i])} for i in range(ds.n)]
    _write_table(out, rows, ["id", "time", "status", "prob"], args)
    return 0


def _read_scores(path):
    with Path(path).open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    score_col = "prob" if "prob" in header else "score"
    for c in (score_col, "time", "status"):
        if c not in header:
            raise SchemaError(f"{path}: missing column {c!r}")
    idx = [header.index(c) for c in (score_col, "time", "status")]
    data = np.empty((len(rows) - 1, 3))
    for r, row in enumerate(rows[1:]):
        for c, i in enumerate(idx):
            try:
                data[r, c] = float(row[i])
            except (ValueError, IndexError):
                raise ParseError(f"{path}: row {r + 2}, column {header[i]!r}: cannot parse",
                                 row=r + 2, column=header[i]) from None
    return data[:, 0], data[:, 1], data[:, 2].astype(int)


def cmd_evaluate(args):
    scores, time, status = _read_scores(args.scores)
    sample = ScoredSample(scores, time, status, args.t)
    curve = roc_curve(sample, args.kappa)
    summary = {"t": args.t, "auc": curve.auc, "kappa": curve.kappa, "n": len(sample)}
    if args.bootstrap:
        boot = bootstrap_auc(sample, args.bootstrap, args.seed, args.kappa, n_jobs=args.threads)
        summary.update({"ci_lo": boot.ci[0], "ci_hi": boot.ci[1], "boot_mean": boot.mean,
                        "boot_skipped": boot.skipped})
    if args.out:
        rows = [{"threshold": float(c), "fpr": float(f), "tpr": float(s)}
                for c, f, s in zip(curve.thresholds, curve.fpr, curve.tpr)]
        _write_table(args.out, rows, ["threshold", "fpr", "tpr"], args)
    if args.plot:
        from .plotting import plot_roc
        plot_roc(curve, args.plot, labels=["model"])
    print(json.dumps(summary))
    return 0


def cmd_compare(args):
    ds = _load(args)
    plan = CvPlan(k=args.k, metric=args.metric, n_lambda=args.n_lambda, ratio=args.ratio,
                  seed=args.seed, oversample=args.oversample, drop_censored=args.drop_censored,
                  kappa=args.kappa, n_jobs=args.threads, solver=_solver(args))
    res = repeated_split_protocol(ds, args.t, args.methods, args.splits, args.bootstrap,
                                  args.seed, plan)
    rows = [{"method": m, "auc": mean, "ci_lo": lo, "ci_hi": hi} for m, mean, lo, hi in res.summary()]
    out = _need_out(args)
    _write_table(out, rows, ["method", "auc", "ci_lo", "ci_hi"], args)
    if args.pairs:
        pairs = [{"a": a, "b": b, "p_value": res.p_value(a, b)}
                 for a in res.methods for b in res.methods if a != b]
        _write_table(args.pairs, pairs, ["a", "b", "p_value"], args)
    if args.plot:
        from .plotting import plot_auc_summary
        plot_auc_summary([{"method": m, "auc": mean, "lo": lo, "hi": hi}
                          for m, mean, lo, hi in res.summary()], args.plot,
                         title=f"bootstrap AUC at t = {args.t:g}")
    return 0


# ---------------------------------------------------------------- parser

def _add_data_args(p):
    p.add_argument("--input", required=True, type=Path, help="dataset CSV")
    p.add_argument("--s", type=float, required=True, help="conditioning age in years")
    p.add_argument("--m", type=int, default=4, help="observations per year")
    p.add_argument("--reporting-delay", action="store_true",
                   help="most recent lag unavailable (d = s*m - 1)")


def _add_dict_args(p):
    p.add_argument("--dict", default="gegenbauer:-0.5",
                   help="jacobi:a,b | legendre | gegenbauer:a | chebyshev1 | chebyshev2 | "
                        "unrestricted | latest")
    p.add_argument("--L", type=int, default=3, help="dictionary size")
    p.add_argument("--export-km", type=Path, help="write the censoring survival curve CSV")
    p.add_argument("--export-dict", type=Path, help="write the dictionary matrix CSV")


def _add_solver_args(p):
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=10000)


def _add_cv_args(p):
    p.add_argument("--k", type=int, default=5, help="number of folds")
    p.add_argument("--metric", choices=("auc", "likelihood"), default="auc")
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--ratio", type=float, default=None, help="lambda_min / lambda_max")
    p.add_argument("--oversample", type=float, default=None, help="target event share")
    p.add_argument("--drop-censored", action="store_true",
                   help="baseline: drop units censored before t instead of weighting")
    p.add_argument("--kappa", type=float, default=None, help="ROC neighbourhood half-width")


def _global_flags(suppress):
    g = argparse.ArgumentParser(add_help=False)

    def default(v):
        return argparse.SUPPRESS if suppress else v

    g.add_argument("--seed", type=int, default=default(0), help="master random seed")
    g.add_argument("--threads", type=int, default=default(1), help="worker count")
    g.add_argument("--out", type=Path, default=default(None), help="main output file")
    g.add_argument("-v", "--verbose", action="count", default=default(0))
    return g


def build_parser() -> argparse.ArgumentParser:
    top = _global_flags(suppress=False)
    # subcommand copies must not overwrite values given before the subcommand
    common = _global_flags(suppress=True)

    parser = argparse.ArgumentParser(prog="survmidas", parents=[top],
                                     description="Censored MIDAS logistic regression toolkit.")
    parser.add_argument("--version", action="version", version=f"survmidas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo AUC / weight-recovery table")
    p.add_argument("--scenario", type=int, nargs="+", default=[1], choices=(1, 2, 3))
    p.add_argument("--n", dest="n_list", type=int, nargs="+", default=[1200])
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--K", type=int, default=50, help="number of covariates")
    p.add_argument("--rho", type=float, default=None, help="override AR(1) persistence")
    p.add_argument("--target-censoring", type=float, default=0.81)
    p.add_argument("--percentiles", type=_floats, default=(10, 30, 50))
    p.add_argument("--methods", type=_names, default=("lasso_u", "lasso_m", "sg_lasso_m"))
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--n-lambda", type=int, default=100)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--data-only", action="store_true",
                   help="write one simulated dataset (first scenario and N) instead of the table")
    p.add_argument("--plot", type=Path, help="SVG summary of mean AUCs")
    _add_solver_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("prep", parents=[common], help="extract a complete sub-dataset")
    p.add_argument("--input", required=True, type=Path, help="raw panel CSV with missing cells")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--c1", type=int, default=25)
    p.add_argument("--c2", type=int, default=25)
    p.add_argument("--step", type=int, default=50)
    p.add_argument("--m2-rule", choices=("min", "max"), default="min")
    p.add_argument("--report", type=Path, help="grid report CSV")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("fit", parents=[common], help="fit at one lambda or along a path")
    _add_data_args(p)
    _add_dict_args(p)
    _add_solver_args(p)
    p.add_argument("--t", type=float, required=True, help="prediction horizon")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--path", type=_floats, default=None, help="n,ratio")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--metric", choices=("auc", "likelihood"), default="auc",
                   help="training metric reported along --path")
    p.add_argument("--drop-censored", action="store_true")
    p.add_argument("--model", type=Path, help="write the fitted model JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", parents=[common], help="cross-validate (alpha, lambda)")
    _add_data_args(p)
    _add_dict_args(p)
    _add_solver_args(p)
    _add_cv_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--alpha-grid", type=_floats, default=ALPHA_GRID)
    p.add_argument("--model", type=Path, help="write the refitted model JSON")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("predict", parents=[common], help="score a dataset with a saved model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="time-dependent ROC of a score file")
    p.add_argument("--scores", required=True, type=Path,
                   help="CSV with prob (or score), time and status columns")
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--bootstrap", type=int, default=0, help="bootstrap replicates")
    p.add_argument("--plot", type=Path, help="SVG ROC plot")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="repeated-split bootstrap comparison")
    _add_data_args(p)
    _add_solver_args(p)
    _add_cv_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--methods", type=_names, default=("lasso_u", "lasso_m", "sg_lasso_m", "logistic"))
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--pairs", type=Path, help="pairwise bootstrap p-value CSV")
    p.add_argument("--plot", type=Path, help="SVG AUC summary")
    p.set_defaults(func=cmd_compare)
    return parser


def _validate(args):
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    for name in getattr(args, "methods", ()) or ():
        if name not in METHODS:
            raise UsageError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _validate(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"survmidas {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SurvMidasError, ValueError, OSError) as exc:
        print(f"survmidas {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
