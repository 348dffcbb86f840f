"""Command-line entry point: ``mfgplay {run,baseline,sweep,check,gen,plot}``.

Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure,
4 the fixed-point map failed to contract.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .errors import ConfigError, MFGError
from .generators import GENERATOR_KINDS, generate_instance, load_instance, save_instance
from .harness import _jsonable, emit_plots, load_config, load_sweep, run_experiment, run_sweep
from .mdp import optimality_gap_check, performance_difference_residual
from .model import instantiate
from .play import compute_ne


def _print(obj):
    print(json.dumps(_jsonable(obj), indent=2))


def _cmd_run(args, method="single"):
    cfg = load_config(args.config)
    cfg.method = method
    if args.out:
        cfg.out = args.out
    if cfg.out is None:
        cfg.out = str(Path(args.config).with_suffix("")) + "_out"
    if method == "baseline" and cfg.name == "run":
        cfg.name = "baseline"
    cfg.validate()
    _print(run_experiment(cfg))
    return 0


def _cmd_sweep(args):
    spec = load_sweep(args.spec)
    out = args.out or str(Path(args.spec).with_suffix("")) + "_out"
    report = run_sweep(spec, out)
    _print({k: v for k, v in report.items() if k != "points"})
    return 0


def _instance_checks(model, lam, trials, seed):
    """Performance-difference residuals and the optimality-gap bound on one instance."""
    G = model.gram()
    ne = compute_ne(model, G, lam, 1e-10)
    mdp = instantiate(model, ne.L, ne.mu, lam)
    rng = np.random.default_rng(seed)
    worst, bad, wit = np.inf, 0, []
    for k in range(trials):
        pi = rng.dirichlet(np.ones(model.m), size=model.n)
        pi2 = rng.dirichlet(np.ones(model.m), size=model.n)
        res = performance_difference_residual(mdp, pi, pi2)
        slack = 1e-9 - res
        worst = min(worst, slack)
        if slack < 0:
            bad += 1
            wit.append({"trial": k, "residual": res})
    reports = [{"lemma": "performance_difference", "trials": trials, "violations": bad,
                "worst_slack": worst, "witnesses": wit[:5]}]
    gap, bound = optimality_gap_check(mdp, ne.pi)
    reports.append({"lemma": "optimality_gap", "trials": 1, "violations": int(gap > bound + 1e-8),
                    "worst_slack": bound - gap, "witnesses": [{"gap": gap, "bound": bound}]})
    return reports


def _cmd_check(args):
    model = load_instance(args.instance)
    names = diag.LEMMAS + ("performance_difference", "optimality_gap") if args.lemmas == "all" \
        else tuple(args.lemmas.split(","))
    known = set(diag.LEMMAS) | {"performance_difference", "optimality_gap"}
    unknown = [n for n in names if n not in known]
    if unknown:
        raise ConfigError(f"unknown lemma(s) {unknown}; choose from {sorted(known)}")
    reports = [diag.lemma_trials(n, args.trials, args.seed) for n in names if n in diag.LEMMAS]
    if {"performance_difference", "optimality_gap"} & set(names):
        inst = _instance_checks(model, args.lam, min(args.trials, 1000), args.seed)
        reports += [r for r in inst if r["lemma"] in names]
    _print(reports)
    return 0 if all(r["violations"] == 0 for r in reports) else 3


def _parse_params(items):
    params = {}
    for item in items:
        if item.startswith("{"):
            try:
                params.update(json.loads(item))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad JSON params: {exc}") from exc
            continue
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, val = item.split("=", 1)
        try:
            params[key] = json.loads(val)
        except json.JSONDecodeError:
            params[key] = val
    return params


def _cmd_gen(args):
    model = generate_instance(args.kind, _parse_params(args.params), args.seed)
    save_instance(model, args.out)
    print(args.out)
    return 0


def _cmd_plot(args):
    print(emit_plots(args.traces, args.out))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mfgplay", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="single-loop fictitious play from a run config")
    r.add_argument("config")
    r.add_argument("-o", "--out")
    b = sub.add_parser("baseline", help="double-loop fixed-point iteration from a run config")
    b.add_argument("config")
    b.add_argument("-o", "--out")

    s = sub.add_parser("sweep", help="run a sweep spec and fit log-log rates")
    s.add_argument("spec")
    s.add_argument("-o", "--out")

    c = sub.add_parser("check", help="randomised checks of the analysis inequalities")
    c.add_argument("instance")
    c.add_argument("--lemmas", default="all")
    c.add_argument("--trials", type=int, default=10000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--lambda", dest="lam", type=float, default=0.5)

    g = sub.add_parser("gen", help="write a generated instance to JSON")
    g.add_argument("kind", choices=GENERATOR_KINDS)
    g.add_argument("params", nargs="*", help="key=value pairs or a JSON object")
    g.add_argument("-o", "--out", required=True)
    g.add_argument("--seed", type=int, default=None)

    pl = sub.add_parser("plot", help="render trace CSVs to an SVG chart")
    pl.add_argument("traces", nargs="+")
    pl.add_argument("-o", "--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "baseline": lambda a: _cmd_run(a, "baseline"), "sweep": _cmd_sweep,
                "check": _cmd_check, "gen": _cmd_gen, "plot": _cmd_plot}
    try:
        return handlers[args.cmd](args)
    except MFGError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
