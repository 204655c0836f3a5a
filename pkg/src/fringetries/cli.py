"""Command-line entry point: ``fringetries <command> [options]``.

Results go to standard output as a JSON envelope (or CSV / text where a command
offers it); notes and progress bars go to standard error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np
from tqdm import tqdm

from . import __version__
from .asymptotics import (
    MellinIntegrand,
    fc_k_star,
    fe_k,
    fe_k_star,
    fourier_coefficient,
    fringe_density_sum,
    fringe_limit,
    fv_k_star,
    indnum_alphas,
    indnum_mean_bounds,
    mellin_numeric,
    sigma_constants,
)
from .exceptions import FringeTriesError, UsageError
from .functionals import (
    brute_force_independence,
    evaluate_additive,
    independence_number,
    parse_functionals,
    phi_alpha,
    phi_geq,
    phi_internal,
    phi_k,
    pullback,
)
from .simulation import (
    SimulationConfig,
    fringe_distribution,
    geometric_grid,
    oscillation_scan,
    run,
)
from .source import coentropy, entropy, parse_source, periodicity, replicate_rng, rho
from .trees import KeySet, build_patricia, build_trie, compress, enumerate_patricia_shapes, shape_probability, shape_string

TOOL = "fringetries"
FLOAT_DIGITS = 15


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


def _source_arg(text):
    try:
        return parse_source(text)
    except FringeTriesError as error:
        raise argparse.ArgumentTypeError(str(error)) from None


def _int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _functionals_arg(text):
    try:
        return parse_functionals(text)
    except UsageError as error:
        raise argparse.ArgumentTypeError(str(error)) from None


def clean(value):
    """JSON-ready copy: floats at 15 significant digits, NaN and infinities as null."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [clean(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, complex):
        return {"re": clean(value.real), "im": clean(value.imag)}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{FLOAT_DIGITS}g}")
    return value


def emit(args, command, config, results):
    envelope = {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "config": config,
        "timestamp": datetime.now(timezone.utc).isoformat() if args.timestamp else None,
        "results": results,
    }
    json.dump(clean(envelope), sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def note(message):
    tqdm.write(message, file=sys.stderr)


def _simulation_config(args, functionals, paired_trie=False):
    if (args.n is None) == (args.lam is None):
        raise UsageError("give exactly one of --n and --lambda")
    return SimulationConfig(
        source=args.source,
        n=args.n,
        lam=args.lam,
        replicates=args.replicates,
        master_seed=args.seed,
        functionals=functionals,
        max_depth=args.max_depth,
        paired_trie=paired_trie,
        threads=args.threads,
        k_max=args.k_max,
        progress=args.progress,
    )


def cmd_constants(args):
    d = args.source
    d_p = periodicity(d)
    if d_p == 0:
        note(f"Source {d} is aperiodic (d_p = 0); oscillation terms vanish.")
    per_k = []
    for k in args.k:
        if k < 2:
            raise UsageError(f"--k values must be at least 2, got {k}")
        fv = fv_k_star(d, k, -1.0, args.tol)
        sigma2_hat, sigma2 = sigma_constants(d, k, tol=args.tol)
        fourier = []
        if d_p > 0:
            for m in range(args.fourier + 1):
                c = fourier_coefficient(d, k, "E", m, args.tol)
                fourier.append({"m": m, "re": c.real, "im": c.imag})
        per_k.append({
            "k": k,
            "rho_k": rho(d, k),
            "fe_star": fe_k_star(d, k, -1.0),
            "fv_star": fv.value,
            "fv_error": fv.error_bound,
            "fc_star": fc_k_star(d, k, 0).real,
            "sigma2": sigma2,
            "sigma2_hat": sigma2_hat,
            "fringe_limit": fringe_limit(d, k),
            "fourier": fourier,
        })
    results = {"H": entropy(d), "J": coentropy(d), "d_p": d_p, "per_k": per_k}
    config = {"source": list(d.probs), "k": args.k, "fourier": args.fourier, "tol": args.tol}
    emit(args, "constants", config, results)
    return 0


def cmd_simulate(args):
    config = _simulation_config(args, args.functional, paired_trie=args.paired_trie)
    note(f"Running {config.replicates} replicates...")
    summary = run(config)
    if args.format == "csv":
        summary.to_frame().to_csv(sys.stdout, index=False, float_format=f"%.{FLOAT_DIGITS}g")
        return 0
    emit(args, "simulate", config.describe(), summary.to_dict())
    return 0


def cmd_fringe_dist(args):
    config = _simulation_config(args, (phi_k(2),))
    note(f"Running {config.replicates} replicates...")
    frame = fringe_distribution(config)
    if args.format == "csv":
        frame.to_csv(sys.stdout, float_format=f"%.{FLOAT_DIGITS}g")
        return 0
    results = {"k": list(frame.index), "mean": frame["mean"].tolist(), "se": frame["se"].tolist(), "limit": frame["limit"].tolist()}
    emit(args, "fringe-dist", config.describe(), results)
    return 0


def cmd_indnum(args):
    if args.N < 2:
        raise UsageError(f"--N must be at least 2, got {args.N}")
    alphas = indnum_alphas(args.N)
    interval = indnum_mean_bounds(args.N, alphas)
    results = {
        "alphas": alphas,
        "interval": [interval.lower, interval.upper],
        "width_bound": 1 / (2 * args.N * math.log(2)),
    }
    emit(args, "indnum", {"N": args.N, "source": [0.5, 0.5]}, results)
    return 0


def cmd_enumerate(args):
    d = args.source
    shapes = enumerate_patricia_shapes(args.k, d.alphabet_size)
    rows = [(shape_string(s), shape_probability(s, d), s.leaf_count) for s in shapes]
    total = math.fsum(p for _, p, _ in rows)
    if args.format == "json":
        results = {
            "shapes": [{"shape": s, "probability": p, "leaves": k} for s, p, k in rows],
            "count": len(rows),
            "total": total,
        }
        emit(args, "enumerate", {"source": list(d.probs), "k": args.k}, results)
        return 0
    # one line per shape: shape, probability, leaf count
    for s, p, k in rows:
        print(f"{s}\t{p:.{FLOAT_DIGITS}g}\t{k}")
    note(f"{len(rows)} shapes, total probability {total:.{FLOAT_DIGITS}g}")
    return 0


def cmd_oscillate(args):
    config = SimulationConfig(
        source=args.source,
        lam=args.lambda_min,
        replicates=args.replicates,
        master_seed=args.seed,
        functionals=args.functional,
        max_depth=args.max_depth,
        threads=args.threads,
        k_max=args.k_max,
        progress=args.progress,
    )
    grid = geometric_grid(args.lambda_min, args.lambda_max, args.points)
    note(f"Scanning {len(grid)} values of lambda, {args.replicates} replicates each...")
    scan = oscillation_scan(config, grid)
    results = {"scan": scan.frame.to_dict(orient="records"), "trend": scan.trend.to_dict(orient="records")}
    described = config.describe()
    described.pop("lambda")
    described.update({"lambda_min": args.lambda_min, "lambda_max": args.lambda_max, "points": args.points})
    emit(args, "oscillate", described, results)
    return 0


def _check(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def selftest_checks(seed: int = 2024) -> list:
    """Closed forms against quadrature, pullback and independence-number identities."""
    checks = []
    sources = [parse_source(text) for text in ("0.5,0.5", "0.3,0.7", "uniform:3")]

    worst = 0.0
    for d in sources:
        for k in range(2, 7):
            exact = fe_k_star(d, k, -1.0)
            numeric = mellin_numeric(MellinIntegrand(lambda t, d=d, k=k: fe_k(d, k, t), k), -1.0).value.real
            worst = max(worst, abs(numeric - exact) / exact)
    checks.append(_check("fe_star_vs_quadrature", worst < 1e-8, {"max_relative_error": worst}))

    tolls = (phi_k(2), phi_internal(), phi_alpha(), phi_geq(3))
    pulled = tuple(pullback(phi) for phi in tolls)
    mismatches = 0
    for i in range(300):
        rng = replicate_rng(seed, i)
        keys = KeySet.from_source(sources[i % 3], int(rng.integers(1, 51)), rng)
        trie = build_trie(keys)
        if not np.array_equal(evaluate_additive(tolls, compress(trie)), evaluate_additive(pulled, trie)):
            mismatches += 1
        if compress(trie) != build_patricia(keys):
            mismatches += 1
    checks.append(_check("pullback_identity", mismatches == 0, {"mismatches": mismatches}))

    mismatches = 0
    for i in range(300):
        rng = replicate_rng(seed + 1, i)
        tree = build_patricia(KeySet.from_source(sources[i % 3], int(rng.integers(1, 11)), rng))
        if independence_number(tree) != brute_force_independence(tree):
            mismatches += 1
    checks.append(_check("independence_number", mismatches == 0, {"mismatches": mismatches}))

    alpha_4 = indnum_alphas(4)[4]
    checks.append(_check("alpha_4", abs(alpha_4 - 3 / 7) < 1e-15, {"alpha_4": alpha_4}))

    totals = {}
    for k in (3, 4):
        totals[k] = math.fsum(shape_probability(s, sources[0]) for s in enumerate_patricia_shapes(k, 2))
    checks.append(_check("shape_probabilities", all(abs(t - 1) < 1e-12 for t in totals.values()), {"totals": list(totals.values())}))

    gaps = [abs(fringe_density_sum(d, 10_000, tail=True) - coentropy(d)) for d in sources]
    checks.append(_check("coentropy_identity", max(gaps) < 1e-6, {"max_gap": max(gaps)}))
    return checks


def cmd_selftest(args):
    checks = selftest_checks()
    passed = all(c["passed"] for c in checks)
    for c in checks:
        if not c["passed"]:
            note(f"FAILED: {c['name']} {c['detail']}")
    emit(args, "selftest", {}, {"checks": checks, "passed": passed})
    return 0 if passed else 2


def _add_common(parser):
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (default: $FRINGETRIES_THREADS or CPU count)")
    parser.add_argument("--timestamp", action="store_true", help="Record the UTC time in the report (default: null, for byte-identical output)")
    parser.add_argument("--progress", action=argparse.BooleanOptionalAction, default=None, help="Progress bars on stderr (default: when stderr is a terminal)")


def _add_simulation(parser, functionals=True):
    parser.add_argument("--source", type=_source_arg, required=True, help="Probabilities '0.3,0.7' or 'uniform:m'")
    parser.add_argument("--n", type=int, default=None, help="Fixed number of keys")
    parser.add_argument("--lambda", dest="lam", type=float, default=None, help="Poisson mean number of keys")
    parser.add_argument("--replicates", type=int, default=100, help="Number of replicates (default: 100)")
    parser.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    parser.add_argument("--max-depth", type=int, default=10_000, help="Longest common prefix allowed (default: 10000)")
    parser.add_argument("--k-max", type=int, default=64, help="Largest fringe size in the histogram (default: 64)")
    if functionals:
        parser.add_argument("--functional", type=_functionals_arg, default=parse_functionals("k=2"), help="e.g. k=2,k=3,internal,alpha,geq=5,leaf (default: k=2)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog=TOOL, description="Fringe trees and additive functionals of random patricia tries")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = commands.add_parser("constants", help="Asymptotic constants for Phi_k")
    p.add_argument("--source", type=_source_arg, required=True, help="Probabilities '0.3,0.7' or 'uniform:m'")
    p.add_argument("--k", type=_int_list, default=[2], help="Comma-separated fringe sizes (default: 2)")
    p.add_argument("--fourier", type=int, default=8, help="Fourier terms for periodic sources (default: 8)")
    p.add_argument("--tol", type=float, default=1e-12, help="Truncation tolerance of the string sums (default: 1e-12)")
    _add_common(p)
    p.set_defaults(handler=cmd_constants)

    p = commands.add_parser("simulate", help="Monte Carlo statistics of functionals")
    _add_simulation(p)
    p.add_argument("--paired-trie", action="store_true", help="Also evaluate pulled-back tolls on the trie of the same keys")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="Output format (default: json)")
    _add_common(p)
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser("fringe-dist", help="Empirical law of the size of a random fringe tree")
    _add_simulation(p, functionals=False)
    p.add_argument("--format", choices=("json", "csv"), default="json", help="Output format (default: json)")
    _add_common(p)
    p.set_defaults(handler=cmd_fringe_dist)

    p = commands.add_parser("indnum", help="Independence-number constants (binary symmetric source)")
    p.add_argument("--N", type=int, default=800, help="Largest fringe size counted exactly (default: 800)")
    _add_common(p)
    p.set_defaults(handler=cmd_indnum)

    p = commands.add_parser("enumerate", help="Patricia shapes with k leaves and their probabilities")
    p.add_argument("--k", type=int, required=True, help="Number of keys, 1 to 10")
    p.add_argument("--source", type=_source_arg, default=parse_source("0.5,0.5"), help="Source (default: 0.5,0.5)")
    p.add_argument("--format", choices=("text", "json"), default="text", help="Output format (default: text)")
    _add_common(p)
    p.set_defaults(handler=cmd_enumerate)

    p = commands.add_parser("oscillate", help="E[Phi]/lambda over a geometric grid of lambda")
    p.add_argument("--source", type=_source_arg, required=True, help="Probabilities '0.3,0.7' or 'uniform:m'")
    p.add_argument("--functional", type=_functionals_arg, default=parse_functionals("k=2"), help="Functionals (default: k=2)")
    p.add_argument("--lambda-min", type=float, default=1000.0, help="Smallest lambda (default: 1000)")
    p.add_argument("--lambda-max", type=float, default=16000.0, help="Largest lambda (default: 16000)")
    p.add_argument("--points", type=int, default=25, help="Grid points (default: 25)")
    p.add_argument("--replicates", type=int, default=100, help="Replicates per grid point (default: 100)")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    p.add_argument("--max-depth", type=int, default=10_000, help="Longest common prefix allowed (default: 10000)")
    p.add_argument("--k-max", type=int, default=64, help="Largest fringe size in the histogram (default: 64)")
    _add_common(p)
    p.set_defaults(handler=cmd_oscillate)

    p = commands.add_parser("selftest", help="Closed-form, pullback and independence-number checks")
    _add_common(p)
    p.set_defaults(handler=cmd_selftest)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.handler(args)
    except UsageError as error:
        print(f"Error: {error}", file=sys.stderr)
        return 1
    except FringeTriesError as error:
        print(f"Error: {error}", file=sys.stderr)
        return 2
    except ValueError as error:
        print(f"Error: {error}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
