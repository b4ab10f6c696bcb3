"""Scans over depth: escape probabilities, barriers and long walks."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import __version__, brw, quenched, walker
from ..errors import BudgetExceeded, InsufficientPoints
from .config import ExperimentConfig
from .fit import FitResult, Transform, fit_exponent


def metadata_lines(config: ExperimentConfig, **extra) -> list[str]:
    meta = {
        "tool": f"treerwre {__version__}",
        "spec_hash": config.spec.spec_hash,
        "seeds": config.seeds,
        "budgets": config.budgets,
        "samples": config.samples,
        **extra,
    }
    return [f"# {k}={json.dumps(v, sort_keys=True)}" for k, v in meta.items()]


def write_csv(header: list[str], rows: list[dict], meta: list[str]) -> str:
    buf = io.StringIO()
    for line in meta:
        buf.write(line + "\n")
    w = csv.DictWriter(buf, fieldnames=header, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in header})
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return "" if v is None else v


def read_csv(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _save(config: ExperimentConfig, name: str, text: str):
    out = config.output.get("dir")
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)


def _try_fit(series, transform) -> FitResult | None:
    try:
        return fit_exponent(series, transform)
    except (InsufficientPoints, ValueError):
        return None


# ---------------------------------------------------------------- rho scan

RHO_HEADER = ["seed", "n", "rho", "log_rho", "gamma_root", "expected_tau", "prop24_bound",
              "method", "stderr", "excursions", "successes", "truncated"]


@dataclass
class RhoScan:
    rows: list
    quenched_fits: dict
    annealed_fit: FitResult | None
    csv: str


def _rho_exact_row(config, seed, n):
    env = quenched.truncate(config.spec, seed, n, max_vertices=config.budgets["vertices"])
    beta = quenched.beta_recursion(env)
    r = quenched.rho(env, beta)
    g = quenched.gamma_recursion(env, beta).gamma_root
    return {"seed": seed, "n": n, "rho": r, "log_rho": math.log(r), "gamma_root": g,
            "expected_tau": g / r, "prop24_bound": quenched.prop24_bound(env, config.budgets["vertices"]),
            "method": "exact", "stderr": 0.0}


def _excursion_count(config, prev_rho):
    base = config.sample("excursions", 10**6)
    target = config.sample("target_successes", 0)
    cap = config.sample("max_excursions", base)
    if target and prev_rho and prev_rho > 0:
        return int(min(max(base, math.ceil(target / prev_rho)), max(cap, base)))
    return base


def run_rho_scan(config: ExperimentConfig) -> RhoScan:
    """Quenched ``rho_n`` per (seed, n), exact or by Monte Carlo.

    A depth is solved exactly when its tree fits the vertex budget (always
    for single-atom laws) and, if ``exact_max_n`` is given, ``n`` does not
    exceed it.  With ``target_successes`` set, the excursion count at each Monte Carlo
    depth is ``target / rho`` of the previous depth, clipped to
    ``[excursions, max_excursions]``.
    """
    if not config.schedule:
        raise InsufficientPoints("empty depth schedule")
    exact_max = config.samples.get("exact_max_n")
    b = config.spec.b
    rows = []
    for seed in config.seeds:
        prev = None
        for n in config.schedule:
            fits = (b ** (n + 1) - b) // (b - 1) <= config.budgets["vertices"]
            if config.spec.degenerate or (fits and (exact_max is None or n <= int(exact_max))):
                row = _rho_exact_row(config, seed, n)
            else:
                count = _excursion_count(config, prev)
                est = walker.estimate_rho_mc(config.spec, seed, n, count, seed_walk=seed + 1,
                                             step_budget=config.budgets["steps"], threads=config.threads)
                row = {"seed": seed, "n": n, "rho": est.value,
                       "log_rho": math.log(est.value) if est.value > 0 else -math.inf,
                       "method": "mc", "stderr": est.stderr, "excursions": count,
                       "successes": est.successes, "truncated": est.truncated}
            prev = row["rho"]
            rows.append(row)
    qfits = {}
    for seed in config.seeds:
        series = [(r["n"], r["rho"]) for r in rows if r["seed"] == seed and 0 < r["rho"] < 1]
        qfits[seed] = _try_fit(series, Transform.LOG_NEGLOG_VS_LOG)
    ann = []
    for n in config.schedule:
        vals = [r["rho"] for r in rows if r["n"] == n]
        m = float(np.mean(vals))
        if 0 < m < 1:
            ann.append((n, m))
    afit = _try_fit(ann, Transform.LOG_NEGLOG_VS_LOG)
    text = write_csv(RHO_HEADER, rows, metadata_lines(config, scan="rho"))
    _save(config, "rho_scan.csv", text)
    return RhoScan(rows, qfits, afit, text)


# ---------------------------------------------------------------- barrier scan

BARRIER_HEADER = ["seed", "n", "barrier_min", "witness", "visited_nodes", "status"]


@dataclass
class BarrierScan:
    rows: list
    medians: list
    fit: FitResult | None
    csv: str
    missing: list = field(default_factory=list)


def run_barrier_scan(config: ExperimentConfig) -> BarrierScan:
    """``barrier_min`` per (seed, n) and a log-log fit of the median over seeds.

    Rows that exceed the node budget are marked and left out of the fit.  A
    depth only enters the fit when every seed finished.  With
    ``stop_on_budget`` (default on) the first overrun skips the remaining
    work at that depth and all deeper ones, which can only be harder.
    """
    if len(config.schedule) < 3:
        raise InsufficientPoints("a barrier fit needs at least 3 depths")
    stop = bool(config.samples.get("stop_on_budget", True))
    budget = config.budgets["nodes"]
    rows, medians, missing = [], [], []
    halted = False
    for n in config.schedule:
        vals = []
        for seed in config.seeds:
            if halted:
                rows.append({"seed": seed, "n": n, "status": "skipped"})
                continue
            try:
                res = brw.barrier_min(config.spec, seed, n, budget)
            except BudgetExceeded:
                rows.append({"seed": seed, "n": n, "visited_nodes": budget, "status": "budget_exceeded"})
                halted = stop
                continue
            rows.append({"seed": seed, "n": n, "barrier_min": res.value, "witness": res.witness.to_string(),
                         "visited_nodes": res.visited, "status": "ok"})
            vals.append(res.value)
        if len(vals) == len(config.seeds):
            medians.append((n, float(np.median(vals))))
        else:
            missing.append(n)
    fit = _try_fit(medians, Transform.LOG_VS_LOG)
    text = write_csv(BARRIER_HEADER, rows, metadata_lines(config, scan="barrier"))
    _save(config, "barrier_scan.csv", text)
    return BarrierScan(rows, medians, fit, text, missing)


# ---------------------------------------------------------------- walks

@dataclass
class WalkExperiment:
    records: list
    bands: list
    ratios: list
    json: str


def run_walk_experiment(config: ExperimentConfig) -> WalkExperiment:
    """Long walks; per replica the band ``[min, max]`` of ``X*_t / (log t)^3``."""
    replicas = config.sample("replicas", 8)
    steps = config.sample("steps", 10**7)
    t_min = config.sample("t_min", 10**4)
    seed_env = config.seeds[0]
    seed_walk = config.sample("seed_walk", 0)
    fn = lambda r: walker.track_xstar(config.spec, (seed_env, seed_walk), steps, replica=r)
    records = walker._map(fn, list(range(replicas)), config.threads)
    bands = [walker.xstar_ratio_band(rec, t_min) for rec in records]
    ratios = [hi / lo for lo, hi in bands]
    lines = []
    for r, (rec, band) in enumerate(zip(records, bands)):
        d = rec.to_dict()
        d.update({"replica": r, "band": list(band), "spec_hash": config.spec.spec_hash,
                  "budgets": config.budgets, "tool": f"treerwre {__version__}"})
        lines.append(json.dumps(d))
    text = "\n".join(lines) + "\n"
    _save(config, "walks.jsonl", text)
    return WalkExperiment(records, bands, ratios, text)


XSTAR_HEADER = ["t", "xstar", "ratio_logcube"]


def xstar_csv(config: ExperimentConfig, record: walker.WalkRecord) -> str:
    rows = [{"t": t, "xstar": x, "ratio_logcube": x / math.log(t) ** 3} for t, x in record.xstar_checkpoints]
    return write_csv(XSTAR_HEADER, rows, metadata_lines(config, scan="xstar", seed_walk=record.seed_walk))
