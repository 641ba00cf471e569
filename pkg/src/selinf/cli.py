"""Command-line interface.

Subcommands: fit, infer, estimate-sigma, diagnose, lambda, simulate.
Exit codes: 0 success, 2 validation error, 3 numerical failure. All JSON
payloads carry ``"schema": "selinf/v1"``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from . import __version__
from .diagnostics import make_sampler, max_residual_correlation, selective_f_test
from .errors import NumericalError, ValidationError
from .events import ancillary_direction, build_event, event_to_json
from .inference import selective_report, sigma2_pseudolik, sigma2_pseudolik_regularized
from .model import build_projection, load_csv, ols_sigma2, with_normalized_columns
from .simulate import (
    PRESETS,
    SimScenario,
    _json_safe,
    run_simulation,
    write_jsonl,
    write_summary_csv,
)
from .solver import TuningSpec, choose_lambda, fit_sqrt_lasso

SCHEMA = "selinf/v1"


def _parse_config(path):
    """Flat key = value file; values parsed as bool, int, float or string."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = _parse_scalar(value.strip())
    return out


def _parse_scalar(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if text.startswith(("'", '"')) and text.endswith(text[0]) and len(text) >= 2:
        return text[1:-1]
    if "," in text:
        return tuple(_parse_scalar(t.strip()) for t in text.split(","))
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _emit(payload, output):
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True)
    if output:
        with open(output, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _seed(args) -> int:
    return args.seed if args.seed is not None else 0


def _load(args):
    data = load_csv(args.data, args.response)
    if getattr(args, "normalize", False):
        data = with_normalized_columns(data)
    return data


def _fit(data, args, seed):
    if args.lam is not None:
        lam = args.lam
        kappa = None
    else:
        lam = choose_lambda(
            data.X, TuningSpec(kappa=args.kappa, mc_draws=args.mc_draws, seed=seed)
        )
        kappa = args.kappa
    fit = fit_sqrt_lasso(data, lam, tol=args.tol, max_sweeps=args.max_iters)
    return fit, lam, kappa


def _add_fit_flags(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", required=True, help="name of the response column")
    p.add_argument("--normalize", action="store_true",
                   help="rescale columns to unit norm before fitting")
    p.add_argument("--kappa", type=float, default=0.8)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="explicit penalty level (overrides the rule)")
    p.add_argument("--mc-draws", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iters", type=int, default=50_000)


def cmd_fit(args):
    data = _load(args)
    fit, lam, _ = _fit(data, args, _seed(args))
    _emit({
        "schema": SCHEMA,
        "lambda": lam,
        "active": fit.model.active.tolist(),
        "signs": fit.model.signs.tolist(),
        "beta": fit.beta.tolist(),
        "kkt_residual": fit.kkt_residual,
        "residual_norm": fit.residual_norm,
    }, args.output)
    return 0


def cmd_infer(args):
    data = _load(args)
    fit, lam, kappa = _fit(data, args, _seed(args))
    sigma = args.sigma
    if sigma not in ("plr", "pl", "ols"):
        try:
            sigma = float(sigma)
        except ValueError:
            raise ValidationError(
                "--sigma must be plr, pl, ols or a number"
            ) from None
    report = selective_report(
        data, fit, level=args.level, sigma=sigma, exact=args.exact_ci, kappa=kappa
    )
    _emit(report.to_dict(), args.output)
    print(report.to_table(), file=sys.stderr)
    return 0


def cmd_estimate_sigma(args):
    data = _load(args)
    fit, lam, _ = _fit(data, args, _seed(args))
    proj = build_projection(data, fit.model)
    s2_ols = ols_sigma2(data, proj)
    payload = {"schema": SCHEMA, "lambda": lam, "df": proj.df,
               "active": fit.model.active.tolist(), "sigma2_ols": s2_ols}
    if fit.model.size:
        event, geom, _ = build_event(fit, data, proj)
        try:
            payload["sigma2_pl"] = sigma2_pseudolik(event, data, proj)
        except NumericalError:
            payload["sigma2_pl"] = None
        payload["sigma2_plr"] = sigma2_pseudolik_regularized(event, data, proj)
        payload["event"] = json.loads(event_to_json(event, geom, fit.model))
    else:
        payload["sigma2_pl"] = s2_ols
        payload["sigma2_plr"] = s2_ols
    _emit(payload, args.output)
    return 0


def cmd_diagnose(args):
    data = _load(args)
    fit, lam, _ = _fit(data, args, _seed(args))
    if fit.model.size == 0:
        raise ValidationError("nothing selected; diagnostics need a nonempty model")
    proj = build_projection(data, fit.model)
    _, _, inactive = build_event(fit, data, proj)
    sampler = make_sampler(data, proj, inactive, seed=_seed(args))
    names = data.column_names or tuple(f"x{i}" for i in range(data.p))
    group = []
    for tok in args.group.split(","):
        tok = tok.strip()
        if tok in names:
            group.append(names.index(tok))
        else:
            try:
                group.append(int(tok))
            except ValueError:
                raise ValidationError(f"unknown column {tok!r}") from None
    pval = selective_f_test(data, proj, fit.model, group, sampler, m=args.draws)
    u = ancillary_direction(data, proj)
    _emit({
        "schema": SCHEMA,
        "lambda": lam,
        "active": fit.model.active.tolist(),
        "group": sorted(group),
        "f_test_pvalue": pval,
        "draws": args.draws,
        "max_residual_correlation": max_residual_correlation(u),
    }, args.output)
    return 0


def cmd_lambda(args):
    data = _load(args)
    spec = TuningSpec(kappa=args.kappa, mc_draws=args.mc_draws, seed=_seed(args))
    _emit({
        "schema": SCHEMA,
        "lambda": choose_lambda(data.X, spec),
        "kappa": spec.kappa,
        "mc_draws": spec.mc_draws,
        "seed": spec.seed,
    }, args.output)
    return 0


def cmd_simulate(args):
    fields = dict(_parse_config(args.config)) if args.config else {}
    if args.preset:
        base = asdict(PRESETS[args.preset])
        base.update(fields)
        fields = base
    elif "kind" not in fields:
        raise ValidationError("simulate needs --preset or a config defining kind")
    for key in ("levels", "rho_grid", "kappa_grid"):
        value = fields.get(key)
        if isinstance(value, list):
            fields[key] = tuple(value)
        elif isinstance(value, (int, float)):
            fields[key] = (value,)
    if args.seed is not None:
        fields["seed"] = args.seed
    scenario = SimScenario(**fields)

    result = run_simulation(scenario, threads=args.threads)
    base = args.output or f"simulate_{scenario.kind}_{result.hash}"
    write_jsonl(result.records, base + ".jsonl")
    write_summary_csv(result.summary, base + ".csv")
    _emit({
        "schema": SCHEMA,
        "scenario_hash": result.hash,
        "records": base + ".jsonl",
        "summary_csv": base + ".csv",
        "summary": result.summary,
    }, None)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="selinf",
        description="Selective inference after square-root LASSO selection",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("--output", default=None, help="output path")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the square-root LASSO")
    _add_fit_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_inf = sub.add_parser("infer", help="selective p-values and intervals")
    _add_fit_flags(p_inf)
    p_inf.add_argument("--level", type=float, default=0.9)
    p_inf.add_argument("--sigma", default="plr",
                       help="plug-in variance: plr, pl, ols or a number")
    p_inf.add_argument("--exact-ci", action="store_true",
                       help="exact truncated-T intervals (slow)")
    p_inf.set_defaults(func=cmd_infer)

    p_sig = sub.add_parser("estimate-sigma", help="variance estimates")
    _add_fit_flags(p_sig)
    p_sig.set_defaults(func=cmd_estimate_sigma)

    p_diag = sub.add_parser("diagnose", help="residual-direction diagnostics")
    _add_fit_flags(p_diag)
    p_diag.add_argument("--group", required=True,
                        help="comma-separated column names or indices")
    p_diag.add_argument("--draws", type=int, default=2000)
    p_diag.set_defaults(func=cmd_diagnose)

    p_lam = sub.add_parser("lambda", help="scale-free penalty level")
    _add_fit_flags(p_lam)
    p_lam.set_defaults(func=cmd_lambda)

    p_sim = sub.add_parser("simulate", help="run a simulation scenario")
    p_sim.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p_sim.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
