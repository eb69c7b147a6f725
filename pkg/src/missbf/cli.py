"""Command-line interface: ``missbf <command> [options]``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .amputation import AmputationSpec, ampute
from .data import (
    MODEL_PRIORS,
    AnalysisConfig,
    Dataset,
    global_missing_fraction,
    load_csv,
    validate,
    write_csv,
)
from .errormodel import ErrorCovSpec, imputed_error_log_bf
from .exceptions import ConfigError, DomainError, EmptyDatasetError, MissbfError, ValidationError
from .imputation import augmented_gibbs, write_draws_csv
from .models import MAX_P, impute_then_select_baseline, posterior_over_models

logger = logging.getLogger("missbf")

# arguments that never change results and so stay out of config echoes
_UNECHOED = {"func", "out_dir", "threads", "verbose"}


def _write_json(path: Path, obj) -> None:
    with path.open("w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config(args) -> AnalysisConfig:
    return AnalysisConfig(
        g_prime=args.g_prime, draws=args.draws, burn_in=args.burn_in, thin=args.thin,
        seed=args.seed, model_prior=args.model_prior, threads=args.threads,
    )


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _UNECHOED}


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args) -> Dataset:
    path = Path(args.csv)
    if not path.is_file():
        raise ValidationError(f"no such file: {path}")
    return load_csv(path, args.response)


def _column_indices(d: Dataset, names) -> list[int]:
    idx = []
    for nm in names:
        if nm not in d.covariate_names:
            raise ConfigError(f"unknown covariate {nm!r}; have {list(d.covariate_names)}")
        idx.append(d.covariate_names.index(nm))
    return idx


def _rng(cfg: AnalysisConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed))


def _check_diagnostics(d, cfg, out: Path, for_bf: bool = True):
    diag = validate(d, cfg, for_bf=for_bf)
    _write_json(out / "diagnostics.json", diag.to_dict())
    for w in diag.warnings:
        logger.warning("%s", w)
    if not diag.ok:
        raise ValidationError("; ".join(diag.fatal))
    return diag


# ------------------------------------------------------------------ commands

def cmd_select(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    d = _load(args)
    if d.p > MAX_P:
        raise ConfigError(f"exhaustive enumeration limited to p <= {MAX_P} (got p={d.p})")
    _check_diagnostics(d, cfg, out)
    engines: dict[str, dict] = {}
    summaries = {}
    draws = None
    if d.has_missing_covariates:
        draws = augmented_gibbs(d, cfg, _rng(cfg))
        if args.dump_draws:
            write_draws_csv(draws, d, out / "draws.csv")
    summaries["imputed"] = posterior_over_models(d, cfg, draws, "imputed")
    if d.is_complete:
        summaries["oracle"] = posterior_over_models(d, cfg, bf_engine="oracle")
    else:
        try:
            summaries["deletion"] = posterior_over_models(d, cfg, bf_engine="listwise")
        except (EmptyDatasetError, DomainError) as exc:
            engines["deletion"] = {"available": False, "reason": str(exc)}
    if args.its:
        summaries["its"] = impute_then_select_baseline(d, args.its, cfg, draws=draws, rng=_rng(cfg))
    for name, s in summaries.items():
        s.write(out, f"select_{name}")
        engines[name] = {"available": True, "hpm": str(s.hpm), "mpm": str(s.mpm)}
    _write_comparison(out / "select_inclusion.csv", d, summaries, engines)
    _write_json(out / "select.json", {
        "config_echo": {"cli": _echo(args)},
        "engines": {k: engines[k] for k in sorted(engines)},
    })
    for name in sorted(engines):
        e = engines[name]
        print(f"{name:9s} " + (f"hpm={e['hpm']} mpm={e['mpm']}" if e["available"]
                                else f"unavailable: {e['reason']}"))
    return 0


def _write_comparison(path, d, summaries, engines):
    order = [e for e in ("oracle", "imputed", "deletion", "its") if e in engines]
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["variable"] + order) + "\n")
        for j, nm in enumerate(d.covariate_names):
            cells = [repr(float(summaries[e].inclusion[j])) if e in summaries else "NA"
                     for e in order]
            fh.write(",".join([nm] + cells) + "\n")


def _psi_spec(text: str, d: Dataset) -> ErrorCovSpec:
    kind, _, arg = text.partition(":")
    if kind == "identity" and not arg:
        return ErrorCovSpec.identity()
    if kind == "diag":
        return ErrorCovSpec.diag_from_covariate(_column_indices(d, [arg])[0])
    if kind == "fixed":
        path = Path(arg)
        if not path.is_file():
            raise ValidationError(f"no such Psi file: {path}")
        return ErrorCovSpec.fixed(np.loadtxt(path, delimiter=",", ndmin=2))
    raise ConfigError(f"bad Psi spec {text!r}: use identity, diag:<covariate> or fixed:<csv>")


def cmd_compare_errors(args) -> int:
    cfg = _config(args)
    out = _out_dir(args)
    d = _load(args)
    _check_diagnostics(d, cfg, out, for_bf=False)
    x1 = _column_indices(d, args.x1)
    psi1, psi2 = _psi_spec(args.psi1, d), _psi_spec(args.psi2, d)
    used = sorted(set(x1) | set(psi1.depends_on) | set(psi2.depends_on))
    draws = None
    if used and np.isnan(d.X[:, used]).any():
        draws = augmented_gibbs(d, cfg, _rng(cfg))
        if args.dump_draws:
            write_draws_csv(draws, d, out / "draws.csv")
    bf = imputed_error_log_bf(d, x1, psi1, psi2, draws)
    result = {
        "config_echo": {"cli": _echo(args)},
        "x1": [d.covariate_names[j] for j in x1],
        "psi1": psi1.to_dict(),
        "psi2": psi2.to_dict(),
        "log_bf": bf.value,
        "mc_std_error": bf.mc_std_error,
        "j_used": bf.j_used,
        "skipped": bf.skipped,
    }
    _write_json(out / "compare_errors.json", result)
    se = "" if bf.mc_std_error is None else f" (MC se {bf.mc_std_error:.3g})"
    print(f"log B12 = {bf.value:.6g}{se}")
    return 0


def cmd_ampute(args) -> int:
    out = _out_dir(args)
    d = _load(args)
    targets = _column_indices(d, args.targets) if args.targets else list(range(d.p))
    drivers = _column_indices(d, args.drivers) if args.drivers else []
    spec = AmputationSpec(args.mechanism, tuple(targets), args.prob, tuple(drivers))
    amputed = ampute(d, spec, _rng(_config(args)))
    write_csv(amputed, out / "amputed.csv")
    frac = global_missing_fraction(amputed)
    per_var = {d.covariate_names[j]: float(np.isnan(amputed.X[:, j]).mean()) for j in targets}
    _write_json(out / "ampute.json", {
        "config_echo": {"cli": _echo(args)},
        "global_missing_fraction": frac,
        "per_variable_missing_fraction": per_var,
    })
    print(f"global missing fraction {frac:.3f}")
    return 0


def _finish_report(report, args) -> int:
    report.config_echo = {"cli": _echo(args), **report.config_echo}
    report.write(_out_dir(args))
    for a in report.aggregates():
        if a["method"] == "data":
            continue
        cell = " ".join(f"{f}={a[f]}" for f in report.cell_fields)
        print(f"{cell} {a['method']:8s} {a['metric']:14s} mean={a['mean']:.4g} sd={a['sd']:.3g}")
    if report.failures:
        print(f"{len(report.failures)} method runs failed (see report.json)", file=sys.stderr)
    return 0


def cmd_sim_exp1(args) -> int:
    report = experiments.sim_exp1(
        _config(args), rhos=args.rho, mechanisms=args.mechanism, levels=args.level,
        reps=args.reps, n=args.n, methods=args.methods, its_m=args.its_m,
    )
    return _finish_report(report, args)


def cmd_sim_s1(args) -> int:
    report = experiments.sim_s1(
        _config(args), scenarios=args.scenario, rhos=args.rho, missing=args.missing,
        mechanism=args.mechanism, reps=args.reps, n=args.n,
    )
    return _finish_report(report, args)


def cmd_sim_s3(args) -> int:
    report = experiments.sim_s3(
        _config(args), levels=args.level, mechanism=args.mechanism, reps=args.reps, n=args.n,
    )
    return _finish_report(report, args)


def cmd_rerun(args) -> int:
    path = Path(args.report)
    if not path.is_file():
        raise ValidationError(f"no such report: {path}")
    with path.open(encoding="utf-8") as fh:
        try:
            echo = json.load(fh)["config_echo"]["cli"]
        except (KeyError, TypeError, json.JSONDecodeError):
            raise ValidationError(f"{path} has no config_echo to re-run") from None
    command = echo.get("command")
    if command not in _COMMANDS or command == "rerun":
        raise ValidationError(f"cannot re-run command {command!r}")
    ns = argparse.Namespace(**echo, out_dir=args.out_dir, threads=args.threads,
                            verbose=args.verbose)
    return _COMMANDS[command](ns)


_COMMANDS = {
    "select": cmd_select,
    "compare-errors": cmd_compare_errors,
    "ampute": cmd_ampute,
    "sim-exp1": cmd_sim_exp1,
    "sim-s1": cmd_sim_s1,
    "sim-s3": cmd_sim_s3,
    "rerun": cmd_rerun,
}


# -------------------------------------------------------------------- parser

def _global_options() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    opt = g.add_argument_group("analysis options")
    opt.add_argument("--seed", type=int, default=0, help="root random seed (default 0)")
    opt.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    opt.add_argument("--g-prime", type=float, default=1.0, help="g' scale of the imputation prior")
    opt.add_argument("--draws", type=int, default=1000, help="kept imputation draws J")
    opt.add_argument("--burn-in", type=int, default=500)
    opt.add_argument("--thin", type=int, default=5)
    opt.add_argument("--model-prior", choices=MODEL_PRIORS, default="hier")
    opt.add_argument("--out-dir", default=".", help="directory for output files")
    opt.add_argument("-v", "--verbose", action="store_true")
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_options()
    parser = argparse.ArgumentParser(
        prog="missbf",
        description="Bayes factors and variable selection for regressions with missing covariates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", parents=[common], help="posterior over all covariate subsets")
    p.add_argument("csv")
    p.add_argument("--response", required=True)
    p.add_argument("--its", type=int, default=0, metavar="M",
                   help="also run impute-then-select with M imputations")
    p.add_argument("--dump-draws", action="store_true", help="write imputation draws to draws.csv")

    p = sub.add_parser("compare-errors", parents=[common], help="Bayes factor between error covariances")
    p.add_argument("csv")
    p.add_argument("--response", required=True)
    p.add_argument("--x1", nargs="+", required=True, help="covariates in the shared design")
    p.add_argument("--psi1", default="identity", help="identity | diag:<covariate> | fixed:<csv>")
    p.add_argument("--psi2", required=True)
    p.add_argument("--dump-draws", action="store_true")

    p = sub.add_parser("ampute", parents=[common], help="hide covariate values (MCAR or MAR)")
    p.add_argument("csv")
    p.add_argument("--response", required=True)
    p.add_argument("--mechanism", choices=("MCAR", "MAR"), default="MCAR")
    p.add_argument("--targets", nargs="*", help="covariates to ampute (default all)")
    p.add_argument("--drivers", nargs="*", help="MAR driver covariates")
    p.add_argument("--prob", type=float, required=True, help="per-variable missing probability")

    p = sub.add_parser("sim-exp1", parents=[common], help="variable selection simulation, p = 10")
    p.add_argument("--rho", type=float, nargs="+", default=[0.1, 0.5])
    p.add_argument("--mechanism", nargs="+", choices=("MCAR", "MAR"), default=["MCAR"])
    p.add_argument("--level", type=int, nargs="+", choices=(40, 65), default=[40, 65])
    p.add_argument("--reps", type=int, default=25)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--methods", nargs="+", choices=experiments.METHODS,
                   default=list(experiments.METHODS))
    p.add_argument("--its-m", type=int, default=20, help="imputations for impute-then-select")

    p = sub.add_parser("sim-s1", parents=[common], help="two-model comparison with x1 amputed")
    p.add_argument("--scenario", nargs="+", choices=sorted(experiments.S1_BETAS), default=["S1"])
    p.add_argument("--rho", type=float, nargs="+", default=[0.0, 0.9])
    p.add_argument("--missing", type=float, nargs="+", default=[0.05, 0.40, 0.75])
    p.add_argument("--mechanism", choices=("MCAR", "MAR"), default="MAR")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--n", type=int, default=100)

    p = sub.add_parser("sim-s3", parents=[common], help="error-structure comparison simulation")
    p.add_argument("--level", type=int, nargs="+", choices=(30, 40, 60, 70), default=[30])
    p.add_argument("--mechanism", choices=("MCAR", "MAR"), default="MAR")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--n", type=int, default=100)

    p = sub.add_parser("rerun", parents=[common], help="re-run a report from its config echo")
    p.add_argument("report", help="a JSON output carrying config_echo")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except MissbfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
