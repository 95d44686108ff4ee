"""Experiment sweeps: configuration, per-cell evaluation, CSV output, aggregation.

Cell seeding: the data of cell (n, repetition) are generated from the 64-bit
seed ``SeedSequence([master_seed, n, repetition]).generate_state(1)``, so all
methods in a cell see the same sample. Monte Carlo methods draw parameters
from ``SeedSequence([master_seed, n, repetition, 1 + method_index])`` with the
index taken from ``METHODS``; adding a method never perturbs another cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bounds
from .core_math import DEFAULT_TOL
from .montecarlo import McConfig, run_boosted_mc, run_maurer_mc
from .optimizer import COIN_BETTING, KL_VER, FiniteSupportProblem, finite_interval
from .scenarios import GAUSSIAN_ERF, SCENARIO_KINDS, generate

METHODS = (
    "coin_betting", "kl_ver", "maurer_relaxed", "maurer_original", "mcallester",
    "emp_bernstein", "intersection", "mc_algorithm1", "maurer_mc",
)
FINITE_METHODS = METHODS[:7]
MC_METHODS = METHODS[7:]

RESULT_COLUMNS = ("method", "n", "repetition", "seed", "lower", "upper", "width",
                  "true_integral", "covered", "runtime_ms")
AGGREGATE_COLUMNS = ("method", "n", "mean_width", "mean_lower", "mean_upper", "coverage_rate")

WORKERS_ENV = "PBCOIN_WORKERS"

_CLOSED_FORMS = {
    "maurer_relaxed": bounds.maurer_relaxed_interval,
    "maurer_original": bounds.maurer_original_interval,
    "mcallester": bounds.mcallester_interval,
    "emp_bernstein": bounds.empirical_bernstein_interval,
    "intersection": bounds.intersect_relaxations,
}


class ConfigError(ValueError):
    """Invalid run configuration; ``errors`` lists every violated field."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration: " + "; ".join(errors))
        self.errors = errors


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class RunConfig:
    scenario: dict
    n_grid: list = field(default_factory=lambda: [2**c for c in range(1, 16)])
    repetitions: int = 20
    delta: float = 0.05
    methods: list | None = None
    mc: dict | None = None
    seed: int = 0
    output: str = "results.csv"

    @property
    def kind(self) -> str:
        return self.scenario["kind"]

    @property
    def scenario_params(self) -> dict:
        return dict(self.scenario.get("params", {}))

    def mc_config(self) -> McConfig:
        spec = dict(self.mc or {})
        delta = spec.get("delta", self.delta)
        if "K" not in spec and "multiplier" not in spec:
            return McConfig.default(delta, spec.get("m", 256))
        return McConfig(K=spec.get("K", max(1, math.ceil(math.log(1 / delta)))),
                        m=spec.get("m", 256), multiplier=spec.get("multiplier", math.e),
                        delta=delta)


def parse_config(doc: dict) -> RunConfig:
    """Validate a JSON config document, collecting every error before raising."""
    errors = []
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    known = set(RunConfig.__dataclass_fields__)
    for key in sorted(set(doc) - known):
        errors.append(f"unknown field {key!r}")

    scenario = doc.get("scenario")
    if not isinstance(scenario, dict):
        errors.append("scenario: required object with a 'kind'")
        scenario = {"kind": None}
    else:
        for key in sorted(set(scenario) - {"kind", "params"}):
            errors.append(f"scenario: unknown field {key!r}")
        if scenario.get("kind") not in SCENARIO_KINDS:
            errors.append(f"scenario.kind: must be one of {list(SCENARIO_KINDS)}")
        if not isinstance(scenario.get("params", {}), dict):
            errors.append("scenario.params: must be an object")

    cfg = RunConfig(scenario=scenario)
    if "n_grid" in doc:
        ng = doc["n_grid"]
        if (not isinstance(ng, list) or not ng
                or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in ng)):
            errors.append("n_grid: must be a non-empty list of positive integers")
        else:
            cfg.n_grid = list(ng)
    if "repetitions" in doc:
        r = doc["repetitions"]
        if not isinstance(r, int) or isinstance(r, bool) or r < 1:
            errors.append("repetitions: must be an integer >= 1")
        else:
            cfg.repetitions = r
    if "delta" in doc:
        d = doc["delta"]
        if not isinstance(d, (int, float)) or isinstance(d, bool) or not 0 < d <= 1:
            errors.append("delta: must lie in (0, 1]")
        else:
            cfg.delta = float(d)
    if "seed" in doc:
        s = doc["seed"]
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
            errors.append("seed: must be an unsigned 64-bit integer")
        else:
            cfg.seed = s
    if "output" in doc:
        if not isinstance(doc["output"], str) or not doc["output"]:
            errors.append("output: must be a non-empty path string")
        else:
            cfg.output = doc["output"]

    kind = scenario.get("kind")
    if "methods" in doc:
        ms = doc["methods"]
        if not isinstance(ms, list) or not ms:
            errors.append("methods: must be a non-empty list")
        else:
            bad = [m for m in ms if m not in METHODS]
            if bad:
                errors.append(f"methods: unknown {bad}")
            if len(set(ms)) != len(ms):
                errors.append("methods: duplicates")
            cfg.methods = list(ms)
    elif kind in SCENARIO_KINDS:
        cfg.methods = list(MC_METHODS if kind == GAUSSIAN_ERF else FINITE_METHODS)
    if kind == GAUSSIAN_ERF and cfg.methods:
        finite = [m for m in cfg.methods if m in FINITE_METHODS]
        if finite:
            errors.append(f"methods: {finite} need a finite-support scenario")

    if "mc" in doc:
        mc = doc["mc"]
        if not isinstance(mc, dict):
            errors.append("mc: must be an object")
        else:
            unknown = sorted(set(mc) - {"K", "m", "multiplier", "delta"})
            errors.extend(f"mc: unknown field {k!r}" for k in unknown)
            cfg.mc = mc
    if cfg.methods and any(m in MC_METHODS for m in cfg.methods) and not errors:
        try:
            cfg.mc_config()
        except (ValueError, TypeError) as exc:
            errors.append(f"mc: {exc}")

    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
    return parse_config(doc)


def cell_seed(master_seed: int, n: int, repetition: int) -> int:
    return int(np.random.SeedSequence([master_seed, n, repetition]).generate_state(1, np.uint64)[0])


def method_seed(master_seed: int, n: int, repetition: int, method: str) -> list[int]:
    return [master_seed, n, repetition, 1 + METHODS.index(method)]


def interval_for(method: str, inst, delta: float, mc: McConfig | None, mc_seed):
    """Compute one method's interval on a generated scenario instance."""
    if method in MC_METHODS:
        sampler = inst.posterior_sampler()
        if method == "mc_algorithm1":
            return run_boosted_mc(sampler, inst.n, mc, mc_seed, DEFAULT_TOL)
        return run_maurer_mc(sampler, inst.n, mc.K * mc.m, mc.delta, mc_seed)
    if method in (COIN_BETTING, KL_VER):
        budget = bounds.budget_c_n(inst.n, inst.kl_post_prior) + math.log(1.0 / delta)
        prob = FiniteSupportProblem(inst.weights, inst.losses, budget, method)
        return finite_interval(prob, delta, DEFAULT_TOL)
    inp = bounds.bound_inputs(inst.losses, inst.weights, inst.kl_post_prior, delta)
    return _CLOSED_FORMS[method](inp)


def run_cell(cfg: RunConfig, n: int, repetition: int, record_runtime: bool = False) -> list[dict]:
    seed = cell_seed(cfg.seed, n, repetition)
    inst = generate(cfg.kind, n, seed, **cfg.scenario_params)
    mc = cfg.mc_config() if any(m in MC_METHODS for m in cfg.methods) else None
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        ci = interval_for(method, inst, cfg.delta, mc, method_seed(cfg.seed, n, repetition, method))
        elapsed = (time.perf_counter() - t0) * 1e3
        rows.append({
            "method": method, "n": n, "repetition": repetition, "seed": seed,
            "lower": ci.lower, "upper": ci.upper, "width": ci.upper - ci.lower,
            "true_integral": inst.true_integral, "covered": ci.contains(inst.true_integral),
            "runtime_ms": elapsed if record_runtime else None,
        })
    return rows


def _run_cell_job(args):
    return run_cell(*args)


def run_experiment(cfg: RunConfig, workers: int | None = None,
                   record_runtime: bool = False) -> list[dict]:
    """Evaluate every (method, n, repetition) cell; rows come back sorted."""
    workers = default_workers() if workers is None else workers
    jobs = [(cfg, n, r, record_runtime) for n in cfg.n_grid for r in range(cfg.repetitions)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell_job, jobs))
    else:
        chunks = [_run_cell_job(j) for j in jobs]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=lambda r: (r["method"], r["n"], r["repetition"]))
    return rows


def results_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in rows:
        w.writerow([
            r["method"], r["n"], r["repetition"], r["seed"],
            fmt_float(r["lower"]), fmt_float(r["upper"]), fmt_float(r["width"]),
            fmt_float(r["true_integral"]), "true" if r["covered"] else "false",
            "" if r["runtime_ms"] is None else fmt_float(r["runtime_ms"]),
        ])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_results(path) -> list[dict]:
    """Read a result CSV, checking each row's interval invariants."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != RESULT_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(RESULT_COLUMNS)}")
        rows = []
        for i, raw in enumerate(reader, start=2):
            r = {
                "method": raw["method"], "n": int(raw["n"]),
                "repetition": int(raw["repetition"]), "seed": int(raw["seed"]),
                "lower": float(raw["lower"]), "upper": float(raw["upper"]),
                "width": float(raw["width"]), "true_integral": float(raw["true_integral"]),
                "covered": raw["covered"] == "true",
                "runtime_ms": float(raw["runtime_ms"]) if raw["runtime_ms"] else None,
            }
            if not 0.0 <= r["lower"] <= r["upper"] <= 1.0:
                raise ValueError(f"{path}:{i}: interval outside [0, 1] or inverted")
            if abs(r["width"] - (r["upper"] - r["lower"])) > 1e-12:
                raise ValueError(f"{path}:{i}: width != upper - lower")
            if r["covered"] != (r["lower"] <= r["true_integral"] <= r["upper"]):
                raise ValueError(f"{path}:{i}: covered flag inconsistent")
            rows.append(r)
    return rows


def aggregate(rows: list[dict]) -> list[dict]:
    if not rows:
        raise ValueError("no result rows to aggregate")
    groups = defaultdict(list)
    for r in rows:
        groups[(r["method"], r["n"])].append(r)
    out = []
    for (method, n), grp in sorted(groups.items()):
        k = len(grp)
        out.append({
            "method": method, "n": n,
            "mean_width": math.fsum(r["width"] for r in grp) / k,
            "mean_lower": math.fsum(r["lower"] for r in grp) / k,
            "mean_upper": math.fsum(r["upper"] for r in grp) / k,
            "coverage_rate": sum(r["covered"] for r in grp) / k,
        })
    return out


def aggregate_csv(agg: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for a in agg:
        w.writerow([a["method"], a["n"]] + [fmt_float(a[c]) for c in AGGREGATE_COLUMNS[2:]])
    return buf.getvalue()
