"""Command-line front door: reproducible batch workflows over the library.

Subcommands::

    simulate  --scenario F --n N --seed S --out PREFIX
    estimate  --data P --estimand {wald|arm-wald|median-nte|contrast} [...]
    oracle    --scenario F --target T [...]
    check     --scenario F [--v]
    bounds    --data P [--v COLS] [--out R]
    mc-study  --scenario F --estimand E --n N --reps R --seed S [...]

Reports go to files (--out), a short human summary goes to stdout. Exit
codes: 0 success, 1 domain error, 2 usage error. Identical argv plus input
files give byte-identical outputs for any NUDGE_IV_THREADS setting.
"""

from __future__ import annotations

import argparse
import sys

from .errors import NudgeIvError
from .estimators import first_stage_diagnostics, frechet_bounds
from .functionals import FunctionalSpec
from .inference import BootstrapConfig, EstimatorSpec, bootstrap, mc_study
from .io import (
    DatasetSchema,
    load_scenario,
    read_dataset,
    report_to_dict,
    write_observed,
    write_panel,
    write_report,
)
from .model import observe, simulate_panel
from .oracle import (
    CausalTarget,
    check_conditions,
    exact_arm_wald,
    exact_wald,
    true_target,
)

_ESTIMAND_BY_FLAG = {
    "wald": "wald",
    "wald-conditional": "wald_conditional",
    "arm-wald": "arm_wald",
    "median-nte": "median_nte",
    "contrast": "contrast",
}


def _parse_h(text: str) -> FunctionalSpec:
    if text == "identity":
        return FunctionalSpec.identity()
    if text == "square":
        return FunctionalSpec.square()
    if text.startswith("leq:"):
        return FunctionalSpec.indicator_leq(float(text[4:]))
    raise NudgeIvError(
        f"unknown functional {text!r}; expected identity, square or leq:<c>")


def _parse_target(args) -> CausalTarget:
    kind = args.target
    if kind in ("late", "nate", "ate", "att"):
        return CausalTarget(kind, v=args.v_value)
    if kind == "mean":
        return CausalTarget.mean(args.arm, args.subgroup, v=args.v_value)
    if kind == "quantile":
        return CausalTarget.quantile(args.arm, args.q, args.subgroup,
                                     v=args.v_value)
    raise NudgeIvError(f"unknown target {kind!r}")


def _table(rows: list[tuple[str, str]], quiet: bool) -> None:
    if quiet or not rows:
        return
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        print(f"{k.ljust(width)}  {v}")


def _fmt_val(x) -> str:
    return format(x, ".10g") if isinstance(x, float) else str(x)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    panel = simulate_panel(scn, args.n, args.seed)
    data = observe(panel)
    panel_path = f"{args.out}.panel.csv"
    observed_path = f"{args.out}.observed.csv"
    write_panel(panel, panel_path)
    write_observed(data, observed_path)
    shares = {t: float((panel.ctype == t).mean()) for t in ("nt", "at", "de", "co")}
    _table([("scenario", scn.name), ("n", str(args.n)), ("seed", str(args.seed)),
            ("panel", panel_path), ("observed", observed_path),
            *((f"share[{t}]", _fmt_val(s)) for t, s in shares.items())],
           args.quiet)
    return 0


def _estimator_from_args(args) -> EstimatorSpec:
    estimand = _ESTIMAND_BY_FLAG[args.estimand]
    V = tuple(args.v or ())
    if estimand == "wald" and V:
        estimand = "wald_conditional"
    return EstimatorSpec(
        estimand=estimand,
        arm=args.arm,
        h=_parse_h(args.h) if args.h else None,
        scale=args.scale,
        V=V)


def _cmd_estimate(args) -> int:
    data = read_dataset(args.data, DatasetSchema())
    estimator = _estimator_from_args(args)
    report = estimator.run(data)
    doc = report_to_dict(report)
    rows = [("estimand", report.estimand), ("point", _fmt_val(report.point)),
            ("first_stage", _fmt_val(report.first_stage)), ("n", str(report.n))]
    if args.bootstrap:
        cfg = BootstrapConfig(B=args.bootstrap, seed=args.seed or 0,
                              ci_level=args.ci_level)
        boot = bootstrap(data, estimator, cfg)
        doc["bootstrap"] = {"B": cfg.B, "seed": cfg.seed,
                            "ci_level": cfg.ci_level, "se": boot.se,
                            "ci": list(boot.ci), "failures": boot.failures}
        rows += [("se", _fmt_val(boot.se)),
                 ("ci", f"[{_fmt_val(boot.ci[0])}, {_fmt_val(boot.ci[1])}]")]
    if args.out:
        write_report(doc, args.out)
        rows.append(("report", args.out))
    _table(rows, args.quiet)
    return 0


def _cmd_oracle(args) -> int:
    scn = load_scenario(args.scenario)
    if args.target == "wald":
        value = exact_wald(scn, args.v_value)
        name = "exact_wald"
    elif args.target == "arm-wald":
        if args.arm is None:
            raise NudgeIvError("--arm is required for target arm-wald")
        h = _parse_h(args.h) if args.h else FunctionalSpec.identity()
        value = exact_arm_wald(scn, args.arm, h, args.v_value)
        name = f"exact_arm_wald[a={args.arm},h={h.label}]"
    else:
        target = _parse_target(args)
        value = true_target(scn, target)
        name = args.target
    if not args.quiet:
        print(f"{name} = {_fmt_val(value)}")
    if args.out:
        write_report({"kind": "oracle", "scenario": scn.name, "target": name,
                      "value": value}, args.out)
    return 0


def _cmd_check(args) -> int:
    scn = load_scenario(args.scenario)
    report = check_conditions(scn, ("l",) if args.by_stratum else ())
    rows = [("scenario", scn.name),
            ("null_cov", _fmt_val(report.null_cov)),
            ("bcs_max_dev", _fmt_val(report.bcs_max_dev)),
            ("relevance_ok", str(report.relevance_ok)),
            ("nudge_share", _fmt_val(report.nudge_share)),
            ("complier_share", _fmt_val(report.complier_share)),
            ("defier_share", _fmt_val(report.defier_share))]
    _table(rows, args.quiet)
    if args.out:
        write_report(report, args.out)
    return 0


def _cmd_bounds(args) -> int:
    data = read_dataset(args.data, DatasetSchema())
    report = frechet_bounds(data, tuple(args.v or ()))
    rows = []
    for key, b in report.by_value.items():
        rows += [(f"{key}.complier", f"[{_fmt_val(b.complier_lo)}, {_fmt_val(b.complier_hi)}]"),
                 (f"{key}.defier", f"[{_fmt_val(b.defier_lo)}, {_fmt_val(b.defier_hi)}]"),
                 (f"{key}.nudge", f"[{_fmt_val(b.nudge_lo)}, {_fmt_val(b.nudge_hi)}]")]
    _table(rows, args.quiet)
    if args.out:
        write_report(report, args.out)
    diag = first_stage_diagnostics(data, tuple(args.v or ()))
    weak = [k for k, d in diag.items() if d.weak]
    if weak and not args.quiet:
        print(f"warning: weak first stage in {weak}", file=sys.stderr)
    return 0


def _cmd_mc_study(args) -> int:
    scn = load_scenario(args.scenario)
    estimator = _estimator_from_args(args)
    target = _parse_target(args)
    cfg = BootstrapConfig(B=args.bootstrap, seed=args.seed,
                          ci_level=args.ci_level)
    result = mc_study(scn, estimator, target, n=args.n, R=args.reps,
                      cfg=cfg, progress=not args.quiet)
    rows = [("scenario", scn.name), ("estimand", estimator.estimand),
            ("target", args.target), ("truth", _fmt_val(result.truth)),
            ("replications", str(result.replications)),
            ("bias", _fmt_val(result.bias)), ("sd", _fmt_val(result.sd)),
            ("rmse", _fmt_val(result.rmse)),
            ("coverage", _fmt_val(result.coverage)),
            ("mean_ci_width", _fmt_val(result.mean_ci_width)),
            ("failures", str(result.failures))]
    _table(rows, args.quiet)
    if args.out:
        write_report(result, args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nudge-iv",
        description="Simulate, estimate and exactly verify binary-instrument "
                    "causal effects under latent-index treatment selection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help="output path (prefix for simulate)")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the stdout summary and progress")

    p = sub.add_parser("simulate", help="draw a counterfactual panel")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    common(p)
    p.set_defaults(func=_cmd_simulate)
    p._out_required = True

    p = sub.add_parser("estimate", help="estimate an identified contrast")
    p.add_argument("--data", required=True)
    p.add_argument("--estimand", required=True,
                   choices=sorted(_ESTIMAND_BY_FLAG))
    p.add_argument("--arm", type=int, choices=(0, 1))
    p.add_argument("--h", help="functional: identity, square or leq:<c>")
    p.add_argument("--scale", default="difference",
                   choices=("difference", "ratio", "odds_ratio"))
    p.add_argument("--v", nargs="*", help="conditioning covariate columns")
    p.add_argument("--bootstrap", type=int, metavar="B",
                   help="bootstrap replicates for SE and percentile CI")
    p.add_argument("--seed", type=int, help="bootstrap seed (default 0)")
    p.add_argument("--ci-level", type=float, default=0.95)
    common(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("oracle", help="print exact population values")
    p.add_argument("--scenario", required=True)
    p.add_argument("--target", required=True,
                   choices=("late", "nate", "ate", "att", "mean", "quantile",
                            "wald", "arm-wald"))
    p.add_argument("--arm", type=int, choices=(0, 1))
    p.add_argument("--q", type=float)
    p.add_argument("--subgroup", default="nudged",
                   choices=("population", "treated", "compliers", "nudged"))
    p.add_argument("--h", help="functional for arm-wald")
    p.add_argument("--v-value", help="condition on this covariate stratum")
    common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("check", help="identifying-condition diagnostics")
    p.add_argument("--scenario", required=True)
    p.add_argument("--by-stratum", action="store_true",
                   help="condition the diagnostics on the covariate")
    common(p)
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("bounds", help="compliance-share bounds from data")
    p.add_argument("--data", required=True)
    p.add_argument("--v", nargs="*", help="conditioning covariate columns")
    common(p)
    p.set_defaults(func=_cmd_bounds)

    p = sub.add_parser("mc-study", help="simulate/estimate/bootstrap cycles")
    p.add_argument("--scenario", required=True)
    p.add_argument("--estimand", required=True,
                   choices=sorted(_ESTIMAND_BY_FLAG))
    p.add_argument("--target", default="nate",
                   choices=("late", "nate", "ate", "att", "mean", "quantile"))
    p.add_argument("--arm", type=int, choices=(0, 1))
    p.add_argument("--q", type=float)
    p.add_argument("--subgroup", default="nudged",
                   choices=("population", "treated", "compliers", "nudged"))
    p.add_argument("--h", help="functional for arm-wald")
    p.add_argument("--scale", default="difference",
                   choices=("difference", "ratio", "odds_ratio"))
    p.add_argument("--v", nargs="*", help="conditioning covariate columns")
    p.add_argument("--v-value", help="condition the target on this stratum")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bootstrap", type=int, default=500, metavar="B")
    p.add_argument("--ci-level", type=float, default=0.95)
    common(p)
    p.set_defaults(func=_cmd_mc_study)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.command == "simulate" and not args.out:
        print("error: simulate requires --out", file=sys.stderr)
        return 2
    if not hasattr(args, "v_value"):
        args.v_value = None
    try:
        return args.func(args)
    except NudgeIvError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
