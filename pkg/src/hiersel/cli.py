"""Command line front end: ``hiersel {validate,eval,curve,calibrate,simulate}``.

Exit codes: 0 success, 1 usage error, 2 domain or validation error (the
error class name is printed on standard error), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import HierselError, OverdeterminedParameters, UnderdeterminedParameters
from .guarantee import (
    alpha_for,
    calibrate_threshold,
    delta_for,
    epsilon_for,
    evaluate_certificate,
    n_for,
)
from .hierarchy import load_hierarchy
from .metrics import DEFAULT_BINS, LOSSES, cc_curve, evaluate, rc_curve
from .rules import DEFAULT_EPS_TIGHT, RULES
from .scores import KINDS, fit_temperature, load_scores, write_scores
from .synth import GeneratorConfig, monte_carlo_guarantee, random_hierarchy, synth_calibrated, synth_scores

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _temperature_arg(text):
    if text in ("auto", "off", "fit"):
        return text
    try:
        t = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected auto, off, fit or a positive number") from None
    if not t > 0:
        raise argparse.ArgumentTypeError("temperature must be positive")
    return t


def _add_scores_args(p, kind_flag="--kind"):
    p.add_argument("--hierarchy", required=True, help="edge-list TSV (parent<TAB>child)")
    p.add_argument("--scores", required=True, help="CSV with sample_id,label,<leaf columns>")
    p.add_argument(kind_flag, dest="score_kind", choices=KINDS, default="probs",
                   help="score column semantics (default: probs)")
    p.add_argument("--temperature", type=_temperature_arg, default="auto",
                   help="auto (fit for logits, off for probs), off, fit, or a fixed value")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hiersel", description="Hierarchical selective classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="parse and validate a hierarchy file")
    p.add_argument("--hierarchy", required=True)

    p = sub.add_parser("eval", help="hAURC, selective baseline and gain for one rule")
    _add_scores_args(p)
    p.add_argument("--rule", choices=RULES, default="climbing")
    p.add_argument("--loss", choices=LOSSES, default="zero-one")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--curve-out", help="also write the risk-coverage curve CSV here")

    p = sub.add_parser("curve", help="breakpoint-exact risk or calibration curve as CSV")
    _add_scores_args(p, kind_flag="--score-kind")
    p.add_argument("--kind", choices=("risk", "ece"), default="risk", help="curve type")
    p.add_argument("--rule", choices=RULES, default="climbing")
    p.add_argument("--loss", choices=LOSSES, default="zero-one")
    p.add_argument("--bins", type=int, default=DEFAULT_BINS)
    p.add_argument("--out")

    p = sub.add_parser(
        "calibrate",
        help="solve for one of (alpha, delta, epsilon, n), or calibrate a threshold on --scores",
    )
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--hierarchy")
    p.add_argument("--scores", help="calibration scores; switches to calibrate mode")
    p.add_argument("--kind", dest="score_kind", choices=KINDS, default="probs")
    p.add_argument("--temperature", type=_temperature_arg, default="auto")
    p.add_argument("--rule", choices=RULES, default="climbing")
    p.add_argument("--eps-tight", type=float, default=DEFAULT_EPS_TIGHT)
    p.add_argument("--eval-on", help="held-out scores to evaluate the certificate on")
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="write a synthetic hierarchy and score file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-leaves", type=int, default=10)
    p.add_argument("--max-branching", type=int, default=4)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--generator", choices=("peaked", "calibrated"), default="peaked",
                   help="peaked probability mixture, or logits calibrated by construction")
    p.add_argument("--sharpness", type=float, default=4.0)
    p.add_argument("--wrong-sharpness", type=float)
    p.add_argument("--correct-prob", type=float, default=0.8)
    p.add_argument("--overlap", type=float, default=0.0)
    p.add_argument("--logit-scale", type=float, default=2.0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--check-guarantee", "--theorem1", dest="check_guarantee", action="store_true",
                   help="also run the Monte Carlo check of the calibration guarantee")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--n-cal", type=int, default=1000)
    p.add_argument("--trials", type=int, default=2000)
    p.add_argument("--test-pool", type=int, default=100_000)
    return parser


def _emit(text: str, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _json(data) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(data, indent=2) + "\n"


def _load(args, path=None):
    h = load_hierarchy(args.hierarchy)
    return h, load_scores(path or args.scores, h, args.score_kind)


def _temperature(table, mode):
    if mode == "auto":
        mode = "fit" if table.kind == "logits" else "off"
    if mode == "off":
        return None
    if mode == "fit":
        return fit_temperature(table if table.kind == "logits" else table.logits(), table.label_columns)
    return mode


def cmd_validate(args) -> int:
    h = load_hierarchy(args.hierarchy)
    print(f"nodes={h.node_count} leaves={h.n_leaves}")
    return EXIT_OK


def cmd_eval(args) -> int:
    h, table = _load(args)
    t = _temperature(table, args.temperature)
    report, curve = evaluate(h, table, args.rule, args.loss, args.bins, temperature=t)
    if args.curve_out:
        _emit(curve.to_csv(), args.curve_out)
    _emit(_json(report.to_dict()), args.out)
    return EXIT_OK


def cmd_curve(args) -> int:
    h, table = _load(args)
    table = table.with_probabilities(_temperature(table, args.temperature))
    if args.kind == "risk":
        curve = rc_curve(h, table, args.rule, args.loss)
    else:
        curve = cc_curve(h, table, args.rule, args.bins)
    _emit(curve.to_csv(), args.out)
    return EXIT_OK


_SOLVERS = {
    "delta": lambda a: delta_for(a.n, a.alpha, a.epsilon),
    "epsilon": lambda a: epsilon_for(a.n, a.alpha, a.delta),
    "n": lambda a: n_for(a.alpha, a.epsilon, a.delta),
    "alpha": lambda a: alpha_for(a.n, a.epsilon, a.delta),
}


def cmd_calibrate(args) -> int:
    if args.scores is None:
        given = [k for k in ("alpha", "delta", "epsilon", "n") if getattr(args, k) is not None]
        if len(given) > 3:
            raise OverdeterminedParameters("give exactly three of --alpha, --delta, --epsilon, --n")
        if len(given) < 3:
            raise UnderdeterminedParameters("give exactly three of --alpha, --delta, --epsilon, --n")
        (missing,) = {"alpha", "delta", "epsilon", "n"} - set(given)
        result = {k: getattr(args, k) for k in given}
        result[missing] = _SOLVERS[missing](args)
        result["solved"] = missing
        _emit(_json(result), args.out)
        return EXIT_OK

    if args.epsilon is not None or args.n is not None:
        raise OverdeterminedParameters("--epsilon and --n are derived from the scores in calibrate mode")
    if args.alpha is None or args.delta is None or args.hierarchy is None:
        raise UnderdeterminedParameters("calibrate mode needs --hierarchy, --alpha and --delta")
    h, table = _load(args)
    t = _temperature(table, args.temperature)
    cert = calibrate_threshold(h, table, args.rule, args.alpha, args.delta, args.eps_tight,
                               temperature=t)
    out = cert.to_dict()
    if args.eval_on:
        test = load_scores(args.eval_on, h, args.score_kind)
        out["evaluation"] = evaluate_certificate(cert, h, test)
    _emit(_json(out), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = GeneratorConfig(
        seed=args.seed, n_leaves=args.n_leaves, max_branching=args.max_branching,
        sharpness=args.sharpness, correct_prob=args.correct_prob,
        wrong_sharpness=args.wrong_sharpness, overlap=args.overlap,
    )
    h = random_hierarchy(cfg)
    if args.generator == "peaked":
        table = synth_scores(cfg, h, args.n_samples)
    else:
        table = synth_calibrated(h, args.n_samples, seed=args.seed, logit_scale=args.logit_scale)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "hierarchy.tsv").write_text(h.to_tsv(), encoding="utf-8")
    with open(out / "scores.csv", "w", encoding="utf-8", newline="") as fh:
        write_scores(table, h, fh)

    summary = {
        "config": vars(cfg).copy(),
        "generator": args.generator,
        "kind": table.kind,
        "nodes": h.node_count,
        "leaves": h.n_leaves,
        "n_samples": len(table),
    }
    if args.check_guarantee:
        summary["guarantee_check"] = monte_carlo_guarantee(
            cfg, args.alpha, args.delta, args.n_cal, args.trials, args.test_pool)
    text = _json(summary)
    (out / "summary.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


_COMMANDS = {
    "validate": cmd_validate,
    "eval": cmd_eval,
    "curve": cmd_curve,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except (OverdeterminedParameters, UnderdeterminedParameters) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (HierselError, ValueError) as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
