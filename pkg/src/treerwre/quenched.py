"""Exact quantities on a realized environment cut at depth ``n``.

The hitting probabilities ``beta_n(x)`` and the passage-time sums
``gamma_n(x)`` are computed by one backward sweep over level arrays, which
are stored in lexicographic vertex order (children of vertex ``j`` sit at
``j*b .. j*b + b - 1`` one level down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from . import env as envmod
from .env import EnvSpec, VertexAddress, _as_address
from .errors import BudgetExceeded
from .stats import Estimate, mean_stderr

DEFAULT_MAX_VERTICES = 1 << 23


@dataclass(frozen=True, eq=False)
class TruncatedEnv:
    """Realized A-values for every vertex of depth ``1..n``.

    ``a[k - 1]`` holds the ``b**k`` values at depth ``k``.  When
    ``compressed`` is set (only for single-atom laws, where all vertices of
    a level look alike) every level keeps a single sibling group of ``b``
    entries, which makes very deep constant environments cheap.
    """

    b: int
    n: int
    a: tuple
    seed: int | None = None
    spec_hash: str | None = None
    a_min: float | None = None
    a_max: float | None = None
    compressed: bool = False

    def __post_init__(self):
        levels = []
        for k, arr in enumerate(self.a, start=1):
            arr = np.array(arr, dtype=np.float64)
            want = self.b if self.compressed else self.b ** k
            if arr.shape != (want,):
                raise ValueError(f"level {k} has shape {arr.shape}, expected ({want},)")
            if np.any(arr <= 0):
                raise ValueError("A-values must be positive")
            arr.setflags(write=False)
            levels.append(arr)
        if len(levels) != self.n:
            raise ValueError(f"expected {self.n} levels, got {len(levels)}")
        if self.compressed and any(np.ptp(lv) > 0 for lv in levels):
            raise ValueError("compressed storage requires constant levels")
        object.__setattr__(self, "a", tuple(levels))
        if self.a_min is None:
            object.__setattr__(self, "a_min", float(min(lv.min() for lv in levels)))
        if self.a_max is None:
            object.__setattr__(self, "a_max", float(max(lv.max() for lv in levels)))

    def level(self, k: int) -> np.ndarray:
        """A-values at depth ``k`` (1-based)."""
        return self.a[k - 1]

    def level_size(self, k: int) -> int:
        if k == 0:
            return 1
        return self.b if self.compressed else self.b ** k

    def group_sum(self, child_vals: np.ndarray, k: int) -> np.ndarray:
        """Sum over sibling groups at depth ``k``, one entry per depth-(k-1) vertex."""
        s = child_vals.reshape(-1, self.b).sum(axis=1)
        return np.broadcast_to(s, (self.level_size(k - 1),)) if self.compressed else s

    def expand(self, parent_vals: np.ndarray, k: int) -> np.ndarray:
        """Broadcast depth-(k-1) values to their depth-``k`` children."""
        if self.compressed:
            return np.full(self.b, parent_vals[0])
        return np.repeat(parent_vals, self.b)

    def position(self, addr: VertexAddress) -> int:
        addr.validate(self.b)
        return addr.digits[-1] if self.compressed else addr.index(self.b)

    def path_A(self, leaf) -> np.ndarray:
        """A-values along ``]]e, x]]`` in root-to-leaf order."""
        leaf = _as_address(leaf)
        if leaf.depth > self.n:
            raise ValueError(f"address depth {leaf.depth} exceeds truncation depth {self.n}")
        return np.array([self.a[z.depth - 1][self.position(z)] for z in leaf.prefixes()])

    def root_A(self) -> np.ndarray:
        return self.a[0]

    # ------------------------------------------------------------ text dump

    def to_text(self) -> str:
        lines = [
            "# truncated environment",
            f"b {self.b}",
            f"n {self.n}",
            f"seed {'' if self.seed is None else self.seed}",
            f"spec_hash {self.spec_hash or ''}",
            f"a_min {self.a_min:.17g}",
            f"a_max {self.a_max:.17g}",
            f"compressed {int(self.compressed)}",
        ]
        for k, lv in enumerate(self.a, start=1):
            lines.append(f"L{k} " + " ".join(f"{v:.17g}" for v in lv))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TruncatedEnv":
        meta, levels = {}, {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key.startswith("L") and key[1:].isdigit():
                levels[int(key[1:])] = np.array([float(v) for v in rest.split()])
            else:
                meta[key] = rest.strip()
        n = int(meta["n"])
        return cls(
            b=int(meta["b"]),
            n=n,
            a=tuple(levels[k] for k in range(1, n + 1)),
            seed=int(meta["seed"]) if meta.get("seed") else None,
            spec_hash=meta.get("spec_hash") or None,
            a_min=float(meta["a_min"]),
            a_max=float(meta["a_max"]),
            compressed=bool(int(meta.get("compressed", "0"))),
        )


def truncate(spec: EnvSpec, seed: int, n: int, max_vertices: int = DEFAULT_MAX_VERTICES,
             compress: bool | None = None) -> TruncatedEnv:
    """Materialize the lazy environment of ``(spec, seed)`` down to depth ``n``.

    ``compress=None`` stores full levels when they fit in ``max_vertices`` and
    falls back to compressed storage for single-atom laws otherwise.
    """
    if n < 1:
        raise ValueError("truncation depth must be >= 1")
    b = spec.b
    total = (b ** (n + 1) - b) // (b - 1)
    if compress is None:
        compress = spec.degenerate and total > max_vertices
    if compress:
        if not spec.degenerate:
            raise ValueError("compressed storage is only exact for single-atom laws")
        levels = tuple(spec.atom_values[0].copy() for _ in range(n))
    else:
        if total > max_vertices:
            raise BudgetExceeded(f"{total} vertices to depth {n} exceed the budget of {max_vertices}")
        levels = tuple(envmod.realize_levels(spec, seed, n))
    return TruncatedEnv(b, n, levels, seed=seed, spec_hash=spec.spec_hash,
                        a_min=spec.a_min, a_max=spec.a_max, compressed=bool(compress))


def constant_env(b: int, n: int, a: float) -> TruncatedEnv:
    """Compressed environment with ``A == a`` everywhere."""
    return truncate(envmod.make_constant_env(b, a), 0, n, compress=True)


# ---------------------------------------------------------------- recursions

@dataclass(frozen=True)
class BetaTable:
    """``levels[k - 1]`` holds ``beta_n(x)`` at depth ``k``."""

    levels: tuple

    def level(self, k: int) -> np.ndarray:
        return self.levels[k - 1]


@dataclass(frozen=True)
class GammaTable:
    levels: tuple
    gamma_root: float

    def level(self, k: int) -> np.ndarray:
        return self.levels[k - 1]


def beta_recursion(env: TruncatedEnv) -> BetaTable:
    """Probability of reaching depth ``n`` before the parent, from each vertex."""
    n = env.n
    levels = [None] * n
    beta = np.ones(env.level_size(n))
    levels[n - 1] = beta
    for k in range(n - 1, 0, -1):
        s = env.group_sum(env.level(k + 1) * beta, k + 1)
        beta = s / (1.0 + s)
        levels[k - 1] = beta
    return BetaTable(tuple(levels))


def rho(env: TruncatedEnv, beta: BetaTable | None = None) -> float:
    """Escape probability ``P{tau_n < tau_0}`` from the root."""
    if beta is None:
        beta = beta_recursion(env)
    a1 = env.root_A()
    return float(np.dot(a1, beta.level(1)) / a1.sum())


def beta_root(env: TruncatedEnv, beta: BetaTable | None = None) -> float:
    """Root-level copy ``s / (1 + s)`` of the beta recursion, ``s = sum A(e_i) beta(e_i)``.

    This treats the root like an inner vertex with an extra parent edge; it
    is not the escape probability, see :func:`rho`.
    """
    if beta is None:
        beta = beta_recursion(env)
    s = float(np.dot(env.root_A(), beta.level(1)))
    return s / (1.0 + s)


def gamma_recursion(env: TruncatedEnv, beta: BetaTable | None = None) -> GammaTable:
    """Backward sweep for ``gamma_n``; ``gamma_root`` carries the leading 1.

    ``gamma_root`` equals ``E[tau_n ^ tau_0]`` from the root, so that
    ``E tau_n = gamma_root / rho``.
    """
    if beta is None:
        beta = beta_recursion(env)
    n = env.n
    levels = [None] * n
    gamma = np.zeros(env.level_size(n))
    levels[n - 1] = gamma
    for k in range(n - 1, 0, -1):
        a = env.level(k + 1)
        sa = env.group_sum(a, k + 1)
        num = (1.0 + sa) + env.group_sum(a * gamma, k + 1)
        den = 1.0 + env.group_sum(a * beta.level(k + 1), k + 1)
        gamma = num / den
        levels[k - 1] = gamma
    a1 = env.root_A()
    g_root = 1.0 + float(np.dot(a1, levels[0]) / a1.sum())
    return GammaTable(tuple(levels), g_root)


def expected_tau(env: TruncatedEnv) -> float:
    """Quenched mean of the first hitting time of depth ``n`` from the root."""
    beta = beta_recursion(env)
    return gamma_recursion(env, beta).gamma_root / rho(env, beta)


# ---------------------------------------------------------------- path exit

def _path_potential(a_path: np.ndarray) -> np.ndarray:
    return -np.cumsum(np.log(a_path))


def path_hit_prob(env: TruncatedEnv, leaf) -> float:
    """``P{T(x) < tau_0}``: exit formula of the birth-death chain along the path."""
    leaf = _as_address(leaf)
    if leaf.depth != env.n or leaf.depth == 0:
        raise ValueError(f"leaf must have depth {env.n}")
    a_path = env.path_A(leaf)
    v = _path_potential(a_path)
    a1 = env.root_A()
    w_first = a_path[0] / a1.sum()
    return float(w_first * math.exp(v[0] - logsumexp(v)))


def _leaf_tables(env: TruncatedEnv):
    """Per-leaf ``log sum_z e^{V(z)}`` and ``max_z V(z)`` along every root path."""
    v = -np.log(env.level(1))
    log_s = v.copy()
    vbar = v.copy()
    for k in range(2, env.n + 1):
        v = env.expand(v, k) - np.log(env.level(k))
        log_s = np.logaddexp(env.expand(log_s, k), v)
        vbar = np.maximum(env.expand(vbar, k), v)
    return log_s, vbar


class Prop24Bound(NamedTuple):
    value: float          # max over leaves of P{T(x) < tau_0}
    corollary: float      # explicit prefactor times exp(-min barrier) / n
    leaf: VertexAddress   # maximizing leaf
    min_barrier: float


def prop24_report(env: TruncatedEnv, max_leaves: int = DEFAULT_MAX_VERTICES) -> Prop24Bound:
    """Path-wise lower bound for ``rho``: the best single root-to-leaf exit."""
    if env.level_size(env.n) > max_leaves:
        raise BudgetExceeded(f"{env.level_size(env.n)} leaves exceed the budget of {max_leaves}")
    a1 = env.root_A()
    sa = a1.sum()
    # omega(e, x1) e^{V(x1)} = 1 / sum_j A(e_j) for every first step
    log_pref = -math.log(sa)
    log_s, vbar = _leaf_tables(env)
    j = int(np.argmin(log_s))
    value = math.exp(log_pref - log_s[j])
    min_vbar = float(vbar.min())
    corollary = math.exp(log_pref - min_vbar) / env.n
    if env.compressed:
        leaf = VertexAddress((0,) * env.n)
    else:
        leaf = VertexAddress.from_index(j, env.n, env.b)
    return Prop24Bound(value, corollary, leaf, min_vbar)


def prop24_bound(env: TruncatedEnv, max_leaves: int = DEFAULT_MAX_VERTICES) -> float:
    return prop24_report(env, max_leaves).value


# ---------------------------------------------------------------- annealed

def annealed_rho(spec: EnvSpec, n: int, env_samples: int, seed0: int = 0,
                 max_vertices: int = DEFAULT_MAX_VERTICES, excursions: int = 100_000,
                 step_budget: int = 10**7, threads: int = 1) -> Estimate:
    """Average of the quenched ``rho_n`` over ``env_samples`` environment seeds.

    Exact per environment when the truncated tree fits in ``max_vertices``,
    Monte Carlo per environment otherwise.
    """
    if env_samples < 1:
        raise ValueError("need at least one environment sample")
    if spec.degenerate:
        value = rho(truncate(spec, seed0, n, max_vertices=max_vertices))
        return Estimate(value, 0.0)
    total = (spec.b ** (n + 1) - spec.b) // (spec.b - 1)
    vals = []
    for s in range(seed0, seed0 + env_samples):
        if total <= max_vertices:
            vals.append(rho(truncate(spec, s, n, max_vertices=max_vertices)))
        else:
            from .walker import estimate_rho_mc
            vals.append(estimate_rho_mc(spec, s, n, excursions, seed_walk=s,
                                        step_budget=step_budget, threads=threads).value)
    if len(vals) == 1:
        return Estimate(vals[0], math.inf)
    return mean_stderr(vals)
