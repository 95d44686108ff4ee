"""Command-line entry point.

Exit codes: 0 success, 2 usage/validation, 3 solver failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import bounds, harness
from .core_math import DEFAULT_TOL, SolverError, psi_star
from .montecarlo import McConfig, run_boosted_mc, run_maurer_mc
from .optimizer import COIN_BETTING, KL_VER, FiniteSupportProblem, finite_interval
from .scenarios import gen_gaussian_erf

EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4


def _unit_float(text: str) -> float:
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"{x} is outside [0, 1]")
    return x


def _open_unit_float(text: str) -> float:
    x = _unit_float(text)
    if x == 0.0:
        raise argparse.ArgumentTypeError("must be > 0")
    return x


def _loss_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed loss list: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("at least one loss is required")
    if any(not 0.0 <= v <= 1.0 for v in vals):
        raise argparse.ArgumentTypeError("losses must lie in [0, 1]")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _interval_record(ci) -> dict:
    return {"method": ci.method, "lower": ci.lower, "upper": ci.upper, "width": ci.width,
            "n": ci.n, "delta": ci.delta}


def cmd_psi_star(args) -> int:
    res = psi_star(args.losses, args.mu, DEFAULT_TOL)
    print(_dumps({"value": res.value, "lambda_star": res.lambda_star,
                  "iterations": res.iterations}))
    return 0


def cmd_experiment(args) -> int:
    cfg = harness.load_config(args.config)
    if args.output:
        cfg.output = args.output
    rows = harness.run_experiment(cfg, workers=args.workers, record_runtime=args.record_runtime)
    harness.write_text(cfg.output, harness.results_csv(rows))
    print(f"wrote {len(rows)} rows to {cfg.output}", file=sys.stderr)
    return 0


def cmd_aggregate(args) -> int:
    rows = harness.read_results(args.input)
    text = harness.aggregate_csv(harness.aggregate(rows))
    if args.output:
        harness.write_text(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_mc(args) -> int:
    delta = args.delta_total / 3.0
    if args.K is None and args.multiplier is None:
        cfg = McConfig.default(delta, args.m)
    else:
        C = math.e if args.multiplier is None else args.multiplier
        K = args.K if args.K is not None else max(1, math.ceil(math.log(1 / delta) / math.log(C)))
        cfg = McConfig(K=K, m=args.m, multiplier=C, delta=delta)
    inst = gen_gaussian_erf(args.n, [args.seed, 0], post_var=args.post_var)
    ci = run_boosted_mc(inst.sampler, args.n, cfg, [args.seed, 1], DEFAULT_TOL)
    out = _interval_record(ci)
    out.update({"delta_total": args.delta_total, "delta_algorithm": delta, "K": cfg.K,
                "m": cfg.m, "multiplier": cfg.multiplier, "true_integral": inst.true_integral})
    if args.with_maurer:
        mm = run_maurer_mc(inst.sampler, args.n, cfg.K * cfg.m, delta, [args.seed, 2])
        out["maurer_mc"] = _interval_record(mm)
    print(_dumps(out))
    return 0


def _load_matrix(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    errors = []
    if not isinstance(doc, dict):
        raise harness.ConfigError(["input must be a JSON object"])
    unknown = sorted(set(doc) - {"losses", "weights", "kl_post_prior", "prior", "delta"})
    errors.extend(f"unknown field {k!r}" for k in unknown)
    try:
        losses = np.asarray(doc.get("losses"), dtype=float)
        if losses.ndim != 2 or losses.size == 0:
            raise ValueError
    except (TypeError, ValueError):
        raise harness.ConfigError(errors + ["losses: must be a non-empty 2-D array"]) from None
    weights = doc.get("weights", [1.0 / losses.shape[0]] * losses.shape[0])
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (losses.shape[0],):
        errors.append("weights: need one weight per loss row")
    if "kl_post_prior" in doc and "prior" in doc:
        errors.append("give either kl_post_prior or prior, not both")
    if "prior" in doc:
        prior = np.asarray(doc["prior"], dtype=float)
        if prior.shape != weights.shape:
            errors.append("prior: need one weight per loss row")
            kl = 0.0
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(weights > 0, weights * np.log(weights / prior), 0.0)
            kl = float(max(terms.sum(), 0.0))
    else:
        kl = doc.get("kl_post_prior", 0.0)
        if not isinstance(kl, (int, float)) or kl < 0:
            errors.append("kl_post_prior: must be a nonnegative number")
    if errors:
        raise harness.ConfigError(errors)
    return {"losses": losses, "weights": weights, "kl": float(kl), "delta": doc.get("delta")}


def cmd_bound(args) -> int:
    doc = _load_matrix(args.input)
    delta = args.delta if args.delta is not None else (doc["delta"] or 0.05)
    losses, weights, kl = doc["losses"], doc["weights"], doc["kl"]
    try:
        inp = bounds.bound_inputs(losses, weights, kl, delta)
        results = []
        for kind in (COIN_BETTING, KL_VER):
            prob = FiniteSupportProblem(weights, losses, inp.budget, kind)
            results.append(finite_interval(prob, delta, DEFAULT_TOL))
    except ValueError as exc:
        raise harness.ConfigError([str(exc)]) from None
    results += [bounds.maurer_relaxed_interval(inp), bounds.maurer_original_interval(inp),
                bounds.mcallester_interval(inp), bounds.empirical_bernstein_interval(inp),
                bounds.intersect_relaxations(inp)]
    for ci in results:
        print(_dumps(_interval_record(ci)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbcoin", description="Coin-betting PAC-Bayes confidence sequences.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi-star", help="optimal log-wealth of a loss sequence")
    p.add_argument("--losses", type=_loss_list, required=True, help="comma-separated losses")
    p.add_argument("--mu", type=_unit_float, required=True)
    p.set_defaults(func=cmd_psi_star)

    p = sub.add_parser("experiment", help="run a sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--output", help="override the config's output path")
    p.add_argument("--workers", type=_positive_int, default=None,
                   help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
    p.add_argument("--record-runtime", action="store_true",
                   help="fill runtime_ms (makes output nondeterministic)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("aggregate", help="average result rows per (method, n)")
    p.add_argument("input")
    p.add_argument("--output")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("mc", help="Monte Carlo interval on the Gaussian-erf scenario")
    p.add_argument("--n", type=_positive_int, default=32)
    p.add_argument("--m", type=_positive_int, default=256)
    p.add_argument("--K", type=_positive_int, default=None)
    p.add_argument("--multiplier", type=float, default=None)
    p.add_argument("--delta-total", type=_open_unit_float, default=0.15,
                   help="overall failure probability; the algorithm runs at a third of it")
    p.add_argument("--post-var", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-maurer", action="store_true")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("bound", help="all finite-support intervals for a loss matrix JSON")
    p.add_argument("input")
    p.add_argument("--delta", type=_open_unit_float, default=None)
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver failure: {exc} (bracket {exc.bracket})", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
