"""The acceptance suite: fourteen criteria, each reported as a verdict line.

Every criterion returns a :class:`CriterionResult` holding the measured
value, the tolerance it is held to and a boolean verdict.  Failures are
verdicts, not exceptions.  ``Hooks`` lets a caller swap in alternative
implementations of the passage-time formula or the spine law, so that the
suite can be shown to catch a broken one.
"""

from __future__ import annotations

import json
import math
import time
import traceback
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .. import brw, env as envmod, oracle, quenched, walker
from ..env import VertexAddress
from ..stats import Estimate, agree, mean_stderr
from .config import ExperimentConfig
from .experiments import run_barrier_scan, run_rho_scan, run_walk_experiment
from .fit import doubling_schedule


@dataclass
class CriterionResult:
    criterion: str
    measured: object
    tolerance: object
    verdict: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.verdict else "FAIL"
        return f"[{tag}] {self.criterion}: measured={_short(self.measured)} tolerance={_short(self.tolerance)}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "pass" if self.verdict else "fail"
        return json.loads(json.dumps(d, default=_jsonable))


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, VertexAddress):
        return o.to_string()
    return str(o)


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_short(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _default_expected_tau(env):
    return quenched.expected_tau(env)


@dataclass
class Hooks:
    expected_tau: Callable = _default_expected_tau
    spine_law: Callable = brw.spine_step_distribution


@dataclass
class AcceptanceParams:
    """Sizes of every check; the defaults are the full-strength suite."""

    oracle_seeds: int = 50
    oracle_depths: tuple = (2, 3, 4, 5, 6)
    oracle_leaves: int = 5
    closed_form_depths: tuple = tuple(range(1, 51))
    prop24_depth: int = 14
    prop24_seeds: int = 20
    onestep_seeds: int = 100
    m10_seeds: int = 10_000
    mstar_seeds: int = 1_000
    m2o_samples: int = 100_000
    m2o_depths: tuple = (4, 6)
    spine_bs: tuple = (2, 3, 4)
    phi_grid: int = 1024
    ks_samples: int = 10_000
    ks_depth: int = 8
    rho_seed: int = 0
    rho_exact_max: int = 14
    rho_schedule: tuple = tuple(doubling_schedule(8, 512))
    rho_excursions: int = 10**6
    rho_target_successes: int = 400
    rho_max_excursions: int = 10**9
    barrier_seeds: int = 20
    barrier_schedule: tuple = (64, 128, 256, 512)
    barrier_budget: int = 2 * 10**9
    xstar_replicas: int = 8
    xstar_steps: int = 10**7
    passage_envs: int = 50
    passage_depth: int = 8
    passage_horizons: tuple = (8, 64, 512)
    laplace_samples: int = 10_000
    laplace_depths: tuple = (4, 6)
    laplace_ts: tuple = (0.5, 1.0, 2.0)
    tail_samples: int = 1_000
    tail_depths: tuple = (4, 8, 16)
    threads: int = 1


def _critical():
    return envmod.make_critical_two_point(2)


# ---------------------------------------------------------------- criteria

def c01_oracle(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    worst = {"rho": 0.0, "tau_rel": 0.0, "path": 0.0, "residual": 0.0}
    rng = np.random.default_rng(1)
    for seed in range(p.oracle_seeds):
        for n in p.oracle_depths:
            env = quenched.truncate(spec, seed, n)
            ch = oracle.build(env, True, True)
            r_or = oracle.hit_probability(ch, (), oracle.LEVEL_N)
            worst["residual"] = max(worst["residual"], ch.last_residual)
            worst["rho"] = max(worst["rho"], abs(quenched.rho(env) - r_or))
            ch = oracle.build(env, True, False)
            t_or = oracle.expected_absorption_time(ch, ())
            worst["residual"] = max(worst["residual"], ch.last_residual)
            worst["tau_rel"] = max(worst["tau_rel"], abs(hooks.expected_tau(env) - t_or) / t_or)
            for j in rng.choice(2 ** n, size=min(p.oracle_leaves, 2 ** n), replace=False):
                leaf = VertexAddress.from_index(int(j), n, 2)
                worst["path"] = max(worst["path"], abs(quenched.path_hit_prob(env, leaf) - oracle.path_hit(env, leaf)))
    tol = {"rho": 1e-10, "tau_rel": 1e-8, "path": 1e-10, "residual": 1e-12}
    ok = all(worst[k] < tol[k] for k in tol)
    return CriterionResult("1 oracle equivalence", worst, tol, ok)


def c02_closed_forms(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    worst = {"rho": 0.0, "tau": 0.0, "gamma_root": 0.0}
    for n in p.closed_form_depths:
        env = quenched.constant_env(2, n, 0.5)
        worst["rho"] = max(worst["rho"], abs(quenched.rho(env) - 1.0 / n))
        worst["tau"] = max(worst["tau"], abs(hooks.expected_tau(env) - n * n))
        worst["gamma_root"] = max(worst["gamma_root"], abs(quenched.gamma_recursion(env).gamma_root - n))
    ok = all(v < 1e-9 for v in worst.values())
    return CriterionResult("2 closed-form fixtures (A = 1/2)", worst, 1e-9, ok)


def c03_prop24(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    violations, checked, min_slack = 0, 0, math.inf
    for seed in range(p.oracle_seeds):
        for n in p.oracle_depths:
            env = quenched.truncate(spec, seed, n)
            r, b = quenched.rho(env), quenched.prop24_bound(env)
            checked += 1
            violations += int(not r >= b)
            min_slack = min(min_slack, r - b)
    for seed in range(p.prop24_seeds):
        for n in range(1, p.prop24_depth + 1):
            env = quenched.truncate(spec, seed, n)
            r, b = quenched.rho(env), quenched.prop24_bound(env)
            checked += 1
            violations += int(not r >= b)
            min_slack = min(min_slack, r - b)
    return CriterionResult("3 path-wise escape lower bound", {"violations": violations, "checked": checked,
                           "min_slack": min_slack}, 0, violations == 0)


def c04_martingales(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    onestep = max(abs(a - b) for a, b in (brw.one_step_martingale_check(spec, s, 6) for s in range(p.onestep_seeds)))
    m10 = mean_stderr(brw.additive_martingale_many(spec, np.arange(p.m10_seeds), 10))
    phi = brw.solve_phi_star(spec, grid_size=p.phi_grid)
    mstar = mean_stderr([brw.multiplicative_martingale(spec, s, 8, phi) for s in range(p.mstar_seeds)])
    phi1 = float(phi(1.0)[0])
    checks = {
        "one_step": onestep < 1e-12,
        "M10_mean_1": m10.within(1.0),
        "M8star_mean_1": mstar.within(1.0),
    }
    measured = {"one_step_max_diff": onestep, "M10": str(m10), "M8star": str(mstar),
                "phi_star_1": phi1, "M8star_vs_phi_star_1": mstar.within(phi1)}
    return CriterionResult("4 martingale checks", measured,
                           {"one_step": 1e-12, "means": "3 stderr of 1"}, all(checks.values()), checks)


def c05_many_to_one(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    spine = hooks.spine_law(spec)
    lhs1, rhs1 = brw.many_to_one_check(spec, 6, "one", 0, spine=spine)
    ident = abs(lhs1.value - 1.0) < 1e-12 and abs(rhs1.value - 1.0) < 1e-12
    level = math.log(spec.a_max)
    out, ok = {"G=1": [lhs1.value, rhs1.value]}, ident
    for n in p.m2o_depths:
        for g, lv in (("end_le0", 0.0), ("max_le", level)):
            lhs, rhs = brw.many_to_one_check(spec, n, g, p.m2o_samples, level=lv, seed=n, spine=spine)
            good = agree(lhs, rhs)
            ok &= good
            out[f"{g} n={n}"] = f"{lhs} vs {rhs}"
    return CriterionResult("5 many-to-one identity", out, "exact for G=1, 3 combined stderr otherwise", ok)


def c06_spine(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    worst_sum, worst_mean = 0.0, 0.0
    for b in p.spine_bs:
        law = hooks.spine_law(envmod.make_critical_two_point(b))
        worst_sum = max(worst_sum, abs(law.total - 1.0))
        worst_mean = max(worst_mean, abs(law.mean))
    return CriterionResult("6 spine law normalized and centered", {"sum": worst_sum, "mean": worst_mean}, 1e-12,
                           worst_sum < 1e-12 and worst_mean < 1e-12)


def c07_phi(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    phi = brw.solve_phi_star(spec, grid_size=p.phi_grid)
    phi2 = brw.solve_phi_star(spec, grid_size=2 * p.phi_grid)
    coarse_t = phi.t_grid[1:]
    doubling = float(np.max(np.abs(phi2(coarse_t) - phi(coarse_t))))
    mid_t = np.sqrt(coarse_t[1:] * coarse_t[:-1])
    doubling_mid = float(np.max(np.abs(phi2(mid_t) - phi(mid_t))))
    ts = np.concatenate([np.logspace(-4, -2, 41), phi.t_grid[(phi.t_grid >= 1e-4) & (phi.t_grid <= 1e-2)]])
    ratio = phi.neg_log(ts) / (ts * np.log(1 / ts))
    strict = bool(np.all(np.diff(phi.phi_values) < 0))
    m = {"residual": phi.residual, "phi0": float(phi.phi_values[0]), "strictly_decreasing": strict,
         "doubling_nodes": doubling, "doubling_midpoints": doubling_mid,
         "small_t_ratio": [float(ratio.min()), float(ratio.max())]}
    ok = (phi.residual < 1e-6 and phi.phi_values[0] == 1.0 and strict and max(doubling, doubling_mid) < 1e-5
          and ratio.min() >= 0.5 and ratio.max() <= 2.0)
    return CriterionResult("7 cascade fixed point", m, {"residual": 1e-6, "doubling": 1e-5, "ratio": [0.5, 2]}, ok)


def ks_excursion_law(spec, seed_env: int, n: int, samples: int, threads: int = 1):
    """KS distance between ``L(tau_n)`` and the geometric law with ``rho_n``."""
    r = quenched.rho(quenched.truncate(spec, seed_env, n))
    recs = walker.first_passage_many(spec, seed_env, 12345, n, samples, threads=threads)
    L = np.array([rec.returns_to_root for rec in recs])
    js = np.arange(L.max() + 1)
    emp = np.searchsorted(np.sort(L), js, side="right") / samples
    model = 1.0 - (1.0 - r) ** (js + 1)
    d = float(max(np.max(np.abs(emp - model)),
                  np.max(np.abs(np.concatenate([[0.0], emp[:-1]]) - np.concatenate([[0.0], model[:-1]])))))
    return d, r, L


def c08_excursions(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    d, r, L = ks_excursion_law(_critical(), 0, p.ks_depth, p.ks_samples, p.threads)
    crit = 1.628 / math.sqrt(p.ks_samples)
    return CriterionResult("8 excursion count is geometric", {"ks": d, "rho": r, "mean_L": float(L.mean())},
                           crit, d < crit)


def c09_rho_trend(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    cfg = ExperimentConfig(spec=spec, seeds=[p.rho_seed], schedule=list(p.rho_schedule),
                           samples={"exact_max_n": p.rho_exact_max, "excursions": p.rho_excursions,
                                    "target_successes": p.rho_target_successes,
                                    "max_excursions": p.rho_max_excursions},
                           threads=p.threads)
    scan = run_rho_scan(cfg)
    exact = [quenched.rho(quenched.truncate(spec, p.rho_seed, n)) for n in range(1, p.rho_exact_max + 1)]
    monotone = all(b <= a for a, b in zip(exact, exact[1:]))
    fit = scan.quenched_fits[p.rho_seed]
    complete = all(r["rho"] > 0 for r in scan.rows)
    deepest = scan.rows[-1]
    m = {"slope": None if fit is None else fit.slope, "points": None if fit is None else fit.points_used,
         "exact_monotone": monotone, "deepest_excursions": deepest.get("excursions"),
         "deepest_successes": deepest.get("successes"),
         "series": [(r["n"], r["rho"]) for r in scan.rows]}
    ok = (fit is not None and complete and 0.2 <= fit.slope <= 0.55 and monotone
          and (deepest.get("excursions") or 0) >= 10**6)
    return CriterionResult("9 escape probability cube-root trend", m, [0.2, 0.55], ok)


def c10_barrier_trend(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    cfg = ExperimentConfig(spec=_critical(), seeds=list(range(p.barrier_seeds)), schedule=list(p.barrier_schedule),
                           budgets={"nodes": p.barrier_budget})
    scan = run_barrier_scan(cfg)
    contrast = ExperimentConfig(spec=envmod.make_constant_env(2, 0.5), seeds=list(range(p.barrier_seeds)),
                                schedule=list(p.barrier_schedule), budgets={"nodes": p.barrier_budget})
    cscan = run_barrier_scan(contrast)
    complete = not scan.missing
    slope = None if scan.fit is None else scan.fit.slope
    cslope = None if cscan.fit is None else cscan.fit.slope
    m = {"slope": slope, "medians": scan.medians, "incomplete_depths": scan.missing,
         "contrast_slope": cslope}
    ok = complete and slope is not None and 0.25 <= slope <= 0.45 and cslope is not None and cslope > 0.9
    return CriterionResult("10 barrier cube-root trend", m, {"slope": [0.25, 0.45], "contrast": "> 0.9"}, ok)


def c11_xstar(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    out, ok = {}, True
    a_hi, a_lo, q = 8.0, 1.0 / 8.0, (2.0 - math.sqrt(3.0)) / 4.0
    for name, spec in (("critical", _critical()), ("psi_prime_positive", envmod.make_two_point_env(2, a_hi, a_lo, q))):
        cfg = ExperimentConfig(spec=spec, seeds=[0], samples={"replicas": p.xstar_replicas, "steps": p.xstar_steps},
                               threads=p.threads)
        res = run_walk_experiment(cfg)
        worst = max(res.ratios)
        out[name] = worst
        ok &= worst < 8
    return CriterionResult("11 running maximum (log t)^3 band", out, 8, ok)


def c12_reversibility(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    rng = np.random.default_rng(7)
    violations, worst_db, worst_ratio = 0, 0.0, 0.0
    n = p.passage_depth
    for seed in range(p.passage_envs):
        env = quenched.truncate(spec, seed, n)
        leaf = VertexAddress.from_index(int(rng.integers(2 ** n)), n, 2)
        ch = walker.restricted_chain(env, leaf)
        worst_db = max(worst_db, ch.detailed_balance_defect())
        for m in p.passage_horizons:
            lhs, rhs = walker.path_passage_bound_check(ch, env, leaf, m)
            violations += int(lhs > rhs)
            worst_ratio = max(worst_ratio, lhs / rhs)
    ok = violations == 0 and worst_db < 1e-12
    return CriterionResult("12 reversibility passage bound", {"violations": violations, "max_lhs_over_rhs": worst_ratio,
                           "detailed_balance": worst_db}, {"violations": 0, "detailed_balance": 1e-12}, ok)


def c13_laplace(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    out, ok = {}, True
    N = p.laplace_samples
    for k in p.laplace_depths:
        betas = np.array([quenched.beta_root(quenched.truncate(spec, s, k)) for s in range(N)])
        ms = brw.additive_martingale_many(spec, np.arange(N, 2 * N), k)
        x = betas / betas.mean()
        for t in p.laplace_ts:
            lhs = mean_stderr(np.exp(-t * x))
            rhs = mean_stderr(np.exp(-t * ms))
            slack = 3 * math.hypot(lhs.stderr, rhs.stderr)
            good = lhs.value <= rhs.value + slack
            ok &= good
            out[f"k={k} t={t}"] = f"{lhs.value:.5f} <= {rhs.value:.5f} + {slack:.5f}"
    return CriterionResult("13 Laplace comparison", out, "3 combined stderr", ok)


def c14_lower_tail(p: AcceptanceParams, hooks: Hooks) -> CriterionResult:
    spec = _critical()
    freqs = [brw.mn_lower_tail(spec, n, 0.6, p.tail_samples) for n in p.tail_depths]
    ok = all(b <= a for a, b in zip(freqs, freqs[1:])) and freqs[-1] < 0.05
    return CriterionResult("14 additive martingale lower tail", dict(zip(map(str, p.tail_depths), freqs)),
                           {"non_increasing": True, "last": 0.05}, ok)


CRITERIA = {
    1: c01_oracle, 2: c02_closed_forms, 3: c03_prop24, 4: c04_martingales, 5: c05_many_to_one,
    6: c06_spine, 7: c07_phi, 8: c08_excursions, 9: c09_rho_trend, 10: c10_barrier_trend,
    11: c11_xstar, 12: c12_reversibility, 13: c13_laplace, 14: c14_lower_tail,
}


def run_criterion(k: int, params: AcceptanceParams | None = None, hooks: Hooks | None = None) -> CriterionResult:
    params = params or AcceptanceParams()
    hooks = hooks or Hooks()
    t0 = time.perf_counter()
    try:
        res = CRITERIA[k](params, hooks)
    except Exception as exc:  # a crash is a failed verdict
        res = CriterionResult(CRITERIA[k].__name__, f"error: {exc!r}", None, False,
                              {"traceback": traceback.format_exc()})
    res.seconds = time.perf_counter() - t0
    return res


def run_acceptance(params: AcceptanceParams | None = None, hooks: Hooks | None = None,
                   only=None, echo: Callable | None = None) -> list[CriterionResult]:
    results = []
    for k in sorted(only or CRITERIA):
        res = run_criterion(k, params, hooks)
        if echo:
            echo(res.line())
        results.append(res)
    return results


def report_json(results: list[CriterionResult]) -> str:
    return json.dumps([{k: r.to_dict()[k] for k in ("criterion", "measured", "tolerance", "verdict")}
                       for r in results], indent=2)
