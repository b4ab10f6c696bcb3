"""Monte Carlo walks on the lazily realized tree.

Walk randomness comes from splitmix streams seeded by ``(seed_walk,
replica)``; the environment is recomputed from vertex keys kept on a stack
along the current path, so nothing but that stack is stored.  Batches are
split into fixed-size chunks, each with its own stream, so results do not
depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import _hash
from . import _kernels as K
from .env import EnvSpec, _as_address
from .errors import BudgetExceeded, EmptySample
from .quenched import TruncatedEnv
from .stats import Estimate

DEFAULT_STEP_BUDGET = 10**7
CHUNK = 1 << 14
MAX_TRUNCATED_FRACTION = 1e-3


def _walk_arrays(spec: EnvSpec):
    vals = np.ascontiguousarray(spec.atom_values)
    return vals, np.ascontiguousarray(vals.sum(axis=1)), np.ascontiguousarray(spec.cum_probs)


def _stream(seed_walk: int, replica: int) -> np.uint64:
    return np.uint64(_hash.stream_seed(np.uint64(seed_walk), np.uint64(replica)))


def default_checkpoints(total_steps: int, start: int = 1 << 10) -> np.ndarray:
    """Geometric checkpoints ``2^10, 2^11, ...`` not exceeding ``total_steps``."""
    cps = []
    t = start
    while t <= total_steps:
        cps.append(t)
        t *= 2
    return np.array(cps, dtype=np.int64)


# ---------------------------------------------------------------- records

@dataclass
class WalkRecord:
    seed_env: int
    seed_walk: int
    tau_n: int | None
    returns_to_root: int
    xstar_checkpoints: list = field(default_factory=list)
    steps: int = 0
    target: int = 0

    def __post_init__(self):
        xs = [x for _, x in self.xstar_checkpoints]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("xstar must be non-decreasing")
        if self.returns_to_root < 0:
            raise ValueError("negative return count")

    @property
    def reached(self) -> bool:
        return self.tau_n is not None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["xstar_checkpoints"] = [[int(t), int(x)] for t, x in self.xstar_checkpoints]
        return d


class RhoEstimate(NamedTuple):
    value: float
    stderr: float
    successes: int
    failures: int
    truncated: int

    @property
    def estimate(self) -> Estimate:
        return Estimate(self.value, self.stderr)

    @property
    def trials(self) -> int:
        return self.successes + self.failures


# ---------------------------------------------------------------- excursions

def run_excursion(spec: EnvSpec, seed_env: int, seed_walk: int, n: int,
                  step_budget: int = DEFAULT_STEP_BUDGET) -> tuple[bool, int]:
    """One excursion from the root: ``(reached depth n first, steps)``."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    vals, sums, cum = _walk_arrays(spec)
    flag = np.empty(1, dtype=np.int8)
    steps = np.empty(1, dtype=np.int64)
    K.excursion_batch(vals, sums, cum, np.uint64(seed_env), _stream(seed_walk, 0), n, 1,
                      int(step_budget), flag, steps)
    if flag[0] == 2:
        raise BudgetExceeded(f"excursion truncated after {step_budget} steps")
    return bool(flag[0] == 1), int(steps[0])


def _excursion_chunk(args):
    vals, sums, cum, seed_env, seed_walk, chunk, count, n, step_budget = args
    flag = np.empty(count, dtype=np.int8)
    steps = np.empty(count, dtype=np.int64)
    K.excursion_batch(vals, sums, cum, np.uint64(seed_env), _stream(seed_walk, chunk), n, count,
                      step_budget, flag, steps)
    return int(np.sum(flag == 1)), int(np.sum(flag == 0)), int(np.sum(flag == 2))


def _map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def estimate_rho_mc(spec: EnvSpec, seed_env: int, n: int, excursions: int, seed_walk: int = 0,
                    step_budget: int = DEFAULT_STEP_BUDGET, threads: int = 1) -> RhoEstimate:
    """Binomial estimate of the quenched escape probability.

    Truncated excursions are excluded from the estimate and counted apart;
    more than a ``1e-3`` fraction of them raises :class:`BudgetExceeded`.
    """
    if excursions <= 0:
        raise EmptySample("need at least one excursion")
    vals, sums, cum = _walk_arrays(spec)
    jobs = []
    for c, start in enumerate(range(0, excursions, CHUNK)):
        jobs.append((vals, sums, cum, seed_env, seed_walk, c, min(CHUNK, excursions - start), n,
                     int(step_budget)))
    parts = _map(_excursion_chunk, jobs, threads)
    succ = sum(p[0] for p in parts)
    fail = sum(p[1] for p in parts)
    trunc = sum(p[2] for p in parts)
    if trunc > MAX_TRUNCATED_FRACTION * excursions:
        raise BudgetExceeded(f"{trunc} of {excursions} excursions truncated at {step_budget} steps")
    trials = succ + fail
    if trials == 0:
        raise EmptySample("every excursion was truncated")
    p = succ / trials
    return RhoEstimate(p, math.sqrt(p * (1 - p) / trials), succ, fail, trunc)


# ---------------------------------------------------------------- long walks

def _walk(spec, seed_env, seed_walk, replica, target, step_budget, checkpoints):
    vals, sums, cum = _walk_arrays(spec)
    cps = np.asarray(checkpoints, dtype=np.int64)
    out = np.zeros(cps.shape[0], dtype=np.int64)
    tau, returns, t, xstar, filled = K.walk(vals, sums, cum, np.uint64(seed_env), _stream(seed_walk, replica),
                                           int(target), int(step_budget), cps, out)
    pairs = [(int(cps[i]), int(out[i])) for i in range(filled)]
    return WalkRecord(int(seed_env), int(seed_walk), None if tau < 0 else int(tau), int(returns), pairs,
                      int(t), int(target))


def first_passage(spec: EnvSpec, seeds, n: int, step_budget: int = DEFAULT_STEP_BUDGET,
                  replica: int = 0, checkpoints=None) -> WalkRecord:
    """Walk from the root until depth ``n`` or the budget; ``seeds = (seed_env, seed_walk)``."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    seed_env, seed_walk = seeds
    if checkpoints is None:
        checkpoints = default_checkpoints(step_budget)
    return _walk(spec, seed_env, seed_walk, replica, n, step_budget, checkpoints)


def first_passage_many(spec: EnvSpec, seed_env: int, seed_walk: int, n: int, replicas: int,
                       step_budget: int = DEFAULT_STEP_BUDGET, threads: int = 1) -> list[WalkRecord]:
    jobs = list(range(replicas))
    fn = lambda r: _walk(spec, seed_env, seed_walk, r, n, step_budget, np.zeros(0, dtype=np.int64))
    return _map(fn, jobs, threads)


def track_xstar(spec: EnvSpec, seeds, total_steps: int, checkpoints=None, replica: int = 0) -> WalkRecord:
    """One long walk; the running maximum depth is sampled at ``checkpoints``."""
    if total_steps < 1000:
        raise ValueError("total_steps must be at least 1000")
    seed_env, seed_walk = seeds
    if checkpoints is None:
        checkpoints = default_checkpoints(total_steps)
    cps = np.asarray(checkpoints, dtype=np.int64)
    if np.any(np.diff(cps) < 0):
        raise ValueError("checkpoints must be sorted")
    return _walk(spec, seed_env, seed_walk, replica, 0, total_steps, cps)


def xstar_ratio_band(record: WalkRecord, t_min: int = 10**4) -> tuple[float, float]:
    """``[min, max]`` of ``X*_t / (log t)^3`` over checkpoints ``t >= t_min``."""
    r = [x / math.log(t) ** 3 for t, x in record.xstar_checkpoints if t >= t_min]
    if not r:
        raise EmptySample("no checkpoints past t_min")
    return min(r), max(r)


# ---------------------------------------------------------------- restricted chain

@dataclass(frozen=True)
class PathChain:
    """Trace of the walk on one root-to-leaf path, a birth-death chain on ``0..n``.

    From ``0`` the chain always steps to ``1``; from ``i`` in ``1..n-1`` it
    steps up with ``up_probs[i - 1] = A(x^(i+1)) / (1 + A(x^(i+1)))``.
    ``a_path`` keeps the A-values along the path for the reversible measure.
    """

    n: int
    up_probs: np.ndarray
    a_path: np.ndarray

    def transition_matrix(self) -> np.ndarray:
        """States ``0..n`` with ``n`` absorbing."""
        P = np.zeros((self.n + 1, self.n + 1))
        P[0, 1] = 1.0
        for i in range(1, self.n):
            p = self.up_probs[i - 1]
            P[i, i + 1] = p
            P[i, i - 1] = 1.0 - p
        P[self.n, self.n] = 1.0
        return P

    def ruin_from_one(self) -> float:
        """``P_1{hit n before 0}`` by the birth-death closed form."""
        if self.n == 1:
            return 1.0
        q_over_p = (1.0 - self.up_probs) / self.up_probs
        terms = np.concatenate([[1.0], np.cumprod(q_over_p)])
        return float(1.0 / terms.sum())

    def reversible_measure(self) -> np.ndarray:
        """``pi`` on ``0..n-1`` with ``pi(0) = 1`` and detailed balance across every edge.

        ``pi(y) = (1 + A(x^(y+1))) prod_{z=2}^{y} A(x^(z))`` for ``y >= 1``.
        """
        a = self.a_path
        pi = np.empty(self.n)
        pi[0] = 1.0
        for y in range(1, self.n):
            pi[y] = (1.0 + a[y]) * np.prod(a[1:y])
        return pi

    def detailed_balance_defect(self) -> float:
        pi = self.reversible_measure()
        P = self.transition_matrix()
        worst = 0.0
        for y in range(self.n - 1):
            lhs = pi[y] * P[y, y + 1]
            rhs = pi[y + 1] * P[y + 1, y]
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        return worst


def restricted_chain(env: TruncatedEnv, leaf) -> PathChain:
    leaf = _as_address(leaf)
    if leaf.depth != env.n:
        raise ValueError(f"leaf must have depth {env.n}")
    a = env.path_A(leaf)
    up = a[1:] / (1.0 + a[1:])
    return PathChain(env.n, up, a)


def passage_cdf(chain: PathChain, m: int) -> np.ndarray:
    """``P_0{T(n) <= k}`` for ``k = 1..m`` by forward propagation."""
    P = chain.transition_matrix()
    dist = np.zeros(chain.n + 1)
    dist[0] = 1.0
    out = np.empty(m)
    for k in range(m):
        dist = dist @ P
        out[k] = dist[chain.n]
    return out


def path_passage_bound_check(chain: PathChain, env: TruncatedEnv, leaf, m: int) -> tuple[float, float]:
    """``(P_0{T(n) <= m}, C m exp(-Vbar(x)))`` with ``C = (1 + a_max) / (1 + a_min)``."""
    leaf = _as_address(leaf)
    lhs = float(passage_cdf(chain, m)[-1]) if m >= 1 else 0.0
    vbar = float(np.max(-np.cumsum(np.log(env.path_A(leaf)))))
    c = (1.0 + env.a_max) / (1.0 + env.a_min)
    return lhs, c * m * math.exp(-vbar)
