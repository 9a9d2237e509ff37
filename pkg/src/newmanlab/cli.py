"""Command line interface: `newman square|ratio|chernoff|sparsify|search|experiment`."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from fractions import Fraction

from . import __version__
from .concentration import (
    ConcentrationQuery,
    bad_event_E_bound,
    c_epsilon,
    choose_epsilon,
    tail_bound,
)
from .experiment import (
    TRIAL_COLUMNS,
    record_from_trial,
    emit_results,
    parse_campaign_file,
    run_campaign,
)
from .poly import NewmanPolynomial, format_polynomial, metrics, parse_polynomial, square
from .search import SearchSpec, exhaustive_search, local_search
from .sparsify import SparsifyConfig, sample


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational: {text!r} ({exc})")


def _add_common(parser: argparse.ArgumentParser, format_default: str = "json") -> None:
    parser.add_argument("--seed", type=int, default=0, help="master seed (64-bit unsigned)")
    parser.add_argument("--out", default=None, help="output file or directory")
    parser.add_argument("--format", choices=("csv", "json"), default=format_default,
                        help="output format where applicable")


def _add_poly_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--poly", help="polynomial text")
    group.add_argument("--poly-file", help="file containing the polynomial text")
    group.add_argument("--all-ones", type=int, metavar="N",
                       help="use 1 + x + ... + x**N")
    parser.add_argument("--poly-format", choices=("exponent_list", "bitstring"),
                        default="exponent_list", help="format of --poly/--poly-file")


def _load_polynomial(args: argparse.Namespace) -> NewmanPolynomial:
    if args.all_ones is not None:
        return NewmanPolynomial.all_ones(args.all_ones)
    if args.poly_file is not None:
        with open(args.poly_file, "r", encoding="utf-8") as handle:
            text = handle.read().strip()
    else:
        text = args.poly
    return parse_polynomial(text, args.poly_format)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text if text.endswith("\n") else text + "\n")


def _cmd_square(args: argparse.Namespace) -> int:
    p = _load_polynomial(args)
    sq = square(p)
    if args.format == "csv":
        lines = ["k,coefficient"]
        lines.extend(f"{k},{v}" for k, v in enumerate(sq.to_list()))
        _emit("\n".join(lines), args.out)
    else:
        payload = {
            "polynomial": format_polynomial(p),
            "degree": p.degree,
            "l1": p.l1,
            "square": sq.to_list(),
        }
        _emit(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_ratio(args: argparse.Namespace) -> int:
    p = _load_polynomial(args)
    report = metrics(p)
    payload = {"polynomial": format_polynomial(p), **report.to_json_dict()}
    if args.format == "csv":
        keys = list(payload)
        _emit(",".join(keys) + "\n" + ",".join(str(payload[k]) for k in keys), args.out)
    else:
        _emit(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_chernoff(args: argparse.Namespace) -> int:
    payload: dict = {}
    epsilon = args.epsilon
    if args.rho is not None or args.rho_prime is not None:
        if args.rho is None or args.rho_prime is None:
            raise ValueError("--rho and --rho-prime must be given together")
        choice = choose_epsilon(args.rho, args.rho_prime)
        payload["choice"] = {
            "rho": str(choice.rho),
            "rho_prime": str(choice.rho_prime),
            "epsilon": choice.epsilon,
            "amplification": choice.amplification,
        }
        if epsilon is None:
            epsilon = choice.epsilon
    if epsilon is not None:
        payload["epsilon"] = epsilon
        payload["c_epsilon"] = c_epsilon(epsilon)
        if args.mean is not None:
            bound = tail_bound(ConcentrationQuery(epsilon=epsilon, mean=args.mean))
            payload["tail_bound"] = {"mean": args.mean, "raw": bound.raw,
                                     "clamped": bound.clamped}
        if args.n is not None:
            bound = bad_event_E_bound(args.n, args.c0, epsilon, args.alpha_exponent)
            payload["bad_event_E_bound"] = {
                "N": args.n,
                "c0": str(Fraction(args.c0)),
                "alpha_exponent": str(Fraction(args.alpha_exponent)),
                "raw": bound.raw,
                "clamped": bound.clamped,
            }
    if not payload:
        raise ValueError("nothing to compute: give --epsilon or --rho/--rho-prime")
    _emit(json.dumps(payload, indent=2), args.out)
    return 0


def _cmd_sparsify(args: argparse.Namespace) -> int:
    p = _load_polynomial(args)
    config = SparsifyConfig(
        alpha_exponent=args.alpha_exponent,
        epsilon=args.epsilon,
        c0=args.c0,
        rho=args.rho,
        rho_prime=args.rho_prime,
        seed=args.seed,
    )
    p_height = square(p).height
    records = [
        record_from_trial(t, sample(p, config, t, p_square_height=p_height))
        for t in range(args.trials)
    ]
    if args.format == "json":
        rows = [dict(zip(TRIAL_COLUMNS, r.to_csv_row())) for r in records]
        _emit(json.dumps(rows, indent=2), args.out)
    else:
        lines = [",".join(TRIAL_COLUMNS)]
        lines.extend(",".join(r.to_csv_row()) for r in records)
        _emit("\n".join(lines), args.out)
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    spec = SearchSpec(
        min_degree=args.min_degree,
        max_degree=args.max_degree,
        density_floor=args.floor,
        objective=args.objective,
        mode=args.mode,
        seed=args.seed,
        iteration_budget=args.budget,
    )
    result = exhaustive_search(spec) if spec.mode == "exhaustive" else local_search(spec)
    payload = json.dumps(result.to_json_dict(), indent=2)
    if args.out is None:
        _emit(payload, None)
    else:
        os.makedirs(args.out, exist_ok=True)
        _emit(payload, os.path.join(args.out, "search_result.json"))
        lines = ["degree,polynomial,l1,height,ratio_num,ratio_den,product_num,product_den"]
        for row in result.degree_table:
            rep = row.report
            lines.append(
                f"{row.degree},\"{format_polynomial(row.polynomial)}\",{rep.l1},{rep.height},"
                f"{rep.ratio.numerator},{rep.ratio.denominator},"
                f"{rep.product.numerator},{rep.product.denominator}"
            )
        _emit("\n".join(lines), os.path.join(args.out, "degree_table.csv"))
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = parse_campaign_file(args.config)
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.trials is not None:
        overrides["trials_per_degree"] = args.trials
    if args.format is not None:
        overrides["format"] = args.format
    if overrides:
        config = dataclasses.replace(config, **overrides)
    summary = run_campaign(config, workers=args.workers)
    paths = emit_results(summary)
    sys.stdout.write(f"wrote {paths['manifest']}\n")
    for row in summary.degrees:
        sys.stdout.write(
            f"degree {row.degree}: freq_E={row.freq_E:.4f} freq_Ek={row.freq_Ek:.4f} "
            f"freq_D={row.freq_D:.4f} clean={row.freq_clean:.4f}\n"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="newman",
        description="Exact metrics, randomized thinning trials, tail bounds and "
                    "extremal search for 0/1-coefficient polynomials.",
    )
    parser.add_argument("--version", action="version", version=f"newman {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_square = sub.add_parser("square", help="exact coefficients of p**2")
    _add_common(p_square)
    _add_poly_source(p_square)
    p_square.set_defaults(func=_cmd_square)

    p_ratio = sub.add_parser("ratio", help="term count, square height and exact ratios")
    _add_common(p_ratio)
    _add_poly_source(p_ratio)
    p_ratio.set_defaults(func=_cmd_ratio)

    p_ch = sub.add_parser("chernoff", help="tail exponent, tail bounds, epsilon choice")
    _add_common(p_ch)
    p_ch.add_argument("--epsilon", type=float, default=None)
    p_ch.add_argument("--mean", type=float, default=None)
    p_ch.add_argument("--rho", type=_fraction, default=None)
    p_ch.add_argument("--rho-prime", type=_fraction, default=None)
    p_ch.add_argument("--n", type=int, default=None, help="degree for the low-mass bound")
    p_ch.add_argument("--c0", type=_fraction, default=Fraction(1))
    p_ch.add_argument("--alpha-exponent", type=_fraction, default=Fraction(1, 10))
    p_ch.set_defaults(func=_cmd_chernoff)

    p_sp = sub.add_parser("sparsify", help="seeded thinning trials, one row per trial")
    _add_common(p_sp, format_default="csv")
    _add_poly_source(p_sp)
    p_sp.add_argument("--trials", type=int, default=100)
    p_sp.add_argument("--alpha-exponent", type=_fraction, default=Fraction(1, 10))
    p_sp.add_argument("--epsilon", type=float, default=None)
    p_sp.add_argument("--rho", type=_fraction, default=None)
    p_sp.add_argument("--rho-prime", type=_fraction, default=None)
    p_sp.add_argument("--c0", type=_fraction, default=Fraction(1))
    p_sp.set_defaults(func=_cmd_sparsify)

    p_se = sub.add_parser("search", help="extremal search over canonical candidates")
    _add_common(p_se)
    p_se.add_argument("--min-degree", type=int, required=True)
    p_se.add_argument("--max-degree", type=int, required=True)
    p_se.add_argument("--mode", choices=("exhaustive", "local_search"), default="exhaustive")
    p_se.add_argument("--objective", choices=("min_product", "min_ratio"),
                      default="min_product")
    p_se.add_argument("--floor", type=_fraction, default=Fraction(0),
                      help="density floor c0 (l1 >= c0 * degree)")
    p_se.add_argument("--budget", type=int, default=10_000)
    p_se.set_defaults(func=_cmd_search)

    p_ex = sub.add_parser("experiment", help="run a campaign from a config file")
    p_ex.add_argument("--config", required=True)
    p_ex.add_argument("--seed", type=int, default=None)
    p_ex.add_argument("--out", default=None)
    p_ex.add_argument("--format", choices=("csv", "json"), default=None)
    p_ex.add_argument("--trials", type=int, default=None,
                      help="override trials_per_degree")
    p_ex.add_argument("--workers", type=int, default=1)
    p_ex.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"newman: error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
