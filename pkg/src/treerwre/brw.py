"""Branching random walk built on the environment.

``V(x) = -sum log A(z)`` over ``]]e, x]]`` is a branching random walk indexed
by the tree and ``B(x) = exp(-V(x))``.  This module computes barriers,
additive and multiplicative martingales, the many-to-one spine law, and the
fixed point of the smoothing transform ``phi(t) = E prod_i phi(t A_i)``.
All tree sums are streaming depth-first searches that never store the tree.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels as K
from .env import EnvSpec, VertexAddress, _as_address, classify_regime, realize_A
from .errors import (BudgetExceeded, GridUnderflow, InvalidSpec, NonConvergence,
                     NotNormalized, TrivialFixedPoint)
from .stats import Estimate, mean_stderr

DEFAULT_MAX_LEAVES = 1 << 24
DEFAULT_PRUNE_BUDGET = 10**9
NORM_TOL = 1e-9


def _law_arrays(spec: EnvSpec):
    return (np.ascontiguousarray(spec.atom_logs), np.ascontiguousarray(spec.cum_probs))


def _check_leaves(spec: EnvSpec, n: int, max_leaves: int):
    if n < 1:
        raise ValueError("depth must be >= 1")
    if spec.b ** n > max_leaves:
        raise BudgetExceeded(f"{spec.b}**{n} leaves exceed the budget of {max_leaves}")


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class PotentialPath:
    addr: VertexAddress
    v_values: tuple

    @property
    def barrier(self) -> float:
        return max(self.v_values)

    @property
    def end(self) -> float:
        return self.v_values[-1]

    @classmethod
    def from_A(cls, addr, a_path) -> "PotentialPath":
        v = -np.cumsum(np.log(np.asarray(a_path, dtype=np.float64)))
        return cls(_as_address(addr), tuple(float(x) for x in v))


def potential_along(spec: EnvSpec, seed: int, addr) -> PotentialPath:
    """``V(z)`` for every ``z`` on the path to ``addr``, realized lazily."""
    addr = _as_address(addr)
    if addr.depth < 1:
        raise ValueError("address depth must be >= 1")
    a_path = [realize_A(spec, seed, z.parent())[z.digits[-1]] for z in addr.prefixes()]
    return PotentialPath.from_A(addr, a_path)


class BarrierMin(NamedTuple):
    value: float
    witness: VertexAddress
    visited: int


def barrier_min(spec: EnvSpec, seed: int, n: int, prune_budget: int = DEFAULT_PRUNE_BUDGET) -> BarrierMin:
    """Exact ``min_{|x| = n} max_{z in ]]e, x]]} V(z)`` by branch and bound.

    Raises :class:`BudgetExceeded` when more than ``prune_budget`` nodes
    would be visited, since the incumbent would then be unverified.
    """
    if n < 1:
        raise ValueError("depth must be >= 1")
    logs, cum = _law_arrays(spec)
    value, wit, visited, code = K.barrier_min(logs, cum, np.uint64(seed), n, int(prune_budget))
    if code != K.OK:
        raise BudgetExceeded(f"barrier search at n={n}, seed={seed} exceeded {prune_budget} nodes")
    return BarrierMin(float(value), VertexAddress(tuple(int(d) for d in wit)), int(visited))


def min_leaf_potential(spec: EnvSpec, seed: int, n: int, prune_budget: int = DEFAULT_PRUNE_BUDGET) -> float:
    """Exact ``min_{|x| = n} V(x)``, pruned by ``V - (remaining depth) log a_max``."""
    if n < 1:
        raise ValueError("depth must be >= 1")
    logs, cum = _law_arrays(spec)
    value, visited, code = K.min_leaf_potential(logs, cum, np.uint64(seed), n, int(prune_budget))
    if code != K.OK:
        raise BudgetExceeded(f"leaf-potential search at n={n}, seed={seed} exceeded {prune_budget} nodes")
    return float(value)


def count_Em(spec: EnvSpec, seed: int, m: int, K_level: float) -> int:
    """Number of ``x`` at depth ``m`` with ``|V(z)| <= K_level`` along the whole path."""
    if m < 1 or K_level <= 0:
        raise ValueError("need m >= 1 and a positive level")
    logs, cum = _law_arrays(spec)
    return int(K.count_within(logs, cum, np.uint64(seed), m, float(K_level)))


# ---------------------------------------------------------------- additive martingale

def additive_martingale(spec: EnvSpec, seed: int, n: int, max_leaves: int = DEFAULT_MAX_LEAVES) -> float:
    """``M_n = sum_{|x| = n} B(x)``."""
    _check_leaves(spec, n, max_leaves)
    logs, cum = _law_arrays(spec)
    return float(K.leaf_sum_B(logs, cum, np.uint64(seed), n, K.G_ONE, 0.0))


def additive_martingale_many(spec: EnvSpec, seeds, n: int, max_leaves: int = DEFAULT_MAX_LEAVES) -> np.ndarray:
    _check_leaves(spec, n, max_leaves)
    logs, cum = _law_arrays(spec)
    seeds = np.asarray(seeds, dtype=np.uint64)
    out = np.empty(seeds.shape[0])
    K.leaf_sum_B_many(logs, cum, seeds, n, K.G_ONE, 0.0, out)
    return out


def one_step_martingale_check(spec: EnvSpec, seed: int, n: int) -> tuple[float, float]:
    """``(M_n, E[M_{n+1} | F_n])``; the conditional mean is ``M_n * b * E(A)``."""
    m_n = additive_martingale(spec, seed, n)
    return m_n, m_n * spec.b * spec.mean_A()


def mn_lower_tail(spec: EnvSpec, n: int, chi: float, samples: int, seed0: int = 0) -> float:
    """Empirical ``P{M_n < n^(-chi)}`` over ``samples`` environments."""
    if chi <= 0.5:
        raise ValueError("chi must exceed 1/2")
    m = additive_martingale_many(spec, np.arange(seed0, seed0 + samples), n)
    return float(np.mean(m < n ** (-chi)))


# ---------------------------------------------------------------- spine

@dataclass(frozen=True)
class SpineLaw:
    """Law of the spine increment ``S_1`` (steps are ``log A`` values)."""

    steps: tuple
    probs: tuple

    @property
    def total(self) -> float:
        return float(math.fsum(self.probs))

    @property
    def normalized(self) -> bool:
        return abs(self.total - 1.0) <= NORM_TOL

    @property
    def mean(self) -> float:
        return float(math.fsum(s * p for s, p in zip(self.steps, self.probs)))

    @property
    def variance(self) -> float:
        mu = self.mean
        return float(math.fsum(p * (s - mu) ** 2 for s, p in zip(self.steps, self.probs)))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        p = np.asarray(self.probs, dtype=np.float64)
        idx = rng.choice(len(p), size=size, p=p / p.sum())
        return np.asarray(self.steps)[idx]


def spine_step_distribution(spec: EnvSpec) -> SpineLaw:
    """Atoms ``(log a, b p_a a)`` of the size-biased marginal law."""
    values, probs = spec.marginal
    steps = tuple(float(math.log(a)) for a in values)
    weights = tuple(float(spec.b * p * a) for a, p in zip(values, probs))
    law = SpineLaw(steps, weights)
    if not law.normalized:
        raise NotNormalized(f"spine weights sum to {law.total!r}; requires E(A) = 1/b")
    return law


FUNCTIONALS = {
    "one": K.G_ONE,
    "max_le": K.G_MAX_LE,
    "end_le0": K.G_END_LE0,
    "absmax_le": K.G_ABSMAX_LE,
}


def _spine_functional(paths: np.ndarray, g_id: int, level: float) -> np.ndarray:
    if g_id == K.G_MAX_LE:
        return (paths.max(axis=1) <= level + K._TIE).astype(np.float64)
    if g_id == K.G_END_LE0:
        return (paths[:, -1] <= K._TIE).astype(np.float64)
    if g_id == K.G_ABSMAX_LE:
        return (np.abs(paths).max(axis=1) <= level + K._TIE).astype(np.float64)
    return np.ones(paths.shape[0])


def many_to_one_check(spec: EnvSpec, n: int, functional_id: str, samples: int,
                      level: float = 0.0, seed: int = 0,
                      spine: SpineLaw | None = None) -> tuple[Estimate, Estimate]:
    """Both sides of the many-to-one identity for a catalogued functional.

    Left: environments are sampled and ``sum_{|x|=n} B(x) G(path)`` is summed
    exactly by DFS.  Right: ``E G(S_1..S_n)`` over sampled spine walks.  For
    ``G == 1`` both sides are closed-form, ``(b E A)^n`` and the spine
    mass to the power ``n``.
    """
    if functional_id not in FUNCTIONALS:
        raise ValueError(f"unknown functional {functional_id!r}; choose from {sorted(FUNCTIONALS)}")
    g_id = FUNCTIONALS[functional_id]
    if spine is None:
        spine = spine_step_distribution(spec)
    if g_id == K.G_ONE:
        return (Estimate((spec.b * spec.mean_A()) ** n, 0.0), Estimate(spine.total ** n, 0.0))
    if samples < 2:
        raise ValueError("need at least two samples")
    logs, cum = _law_arrays(spec)
    seeds = np.arange(samples, dtype=np.uint64) + np.uint64(seed) * np.uint64(1 << 32)
    lhs = np.empty(samples)
    K.leaf_sum_B_many(logs, cum, seeds, n, g_id, float(level), lhs)
    rng = np.random.default_rng(seed)
    paths = np.cumsum(spine.sample(rng, (samples, n)), axis=1)
    rhs = _spine_functional(paths, g_id, float(level)) * spine.total ** n
    return mean_stderr(lhs), mean_stderr(rhs)


# ---------------------------------------------------------------- cascade fixed point

@dataclass(frozen=True, eq=False)
class PhiTable:
    """Fixed point ``phi*`` sampled on ``t_grid`` (``t_grid[0] = 0``).

    Internally ``u = -log phi`` is kept as ``w = log u`` on the geometric
    nodes ``exp(lt0 + j h)``; below the first node
    ``u(t) = t log(1/t) + c_below t`` and beyond the last node the last cell
    is extended linearly in ``(log t, log u)``.
    """

    t_grid: np.ndarray
    phi_values: np.ndarray
    residual: float
    lt0: float
    h: float
    w: np.ndarray
    c_below: float
    spec_hash: str = ""
    iterations: int = 0
    lattice: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def lt_max(self) -> float:
        return self.lt0 + self.h * (len(self.w) - 1)

    @property
    def t_max(self) -> float:
        return math.exp(self.lt_max)

    def neg_log(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.zeros_like(t)
        for i, tv in enumerate(t):
            if tv > 0:
                out[i] = K.interp_neg_log_phi(math.log(tv), self.lt0, self.h, self.w, self.c_below)
        return out

    def __call__(self, t):
        return np.exp(-self.neg_log(t))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# residual={self.residual:.6e} spec_hash={self.spec_hash} "
                  f"iterations={self.iterations} lattice={int(self.lattice)}\n")
        buf.write(f"# lt0={self.lt0!r} h={self.h!r} c_below={self.c_below!r}\n")
        buf.write("t,phi,neg_log_phi\n")
        buf.write(f"0,1,0\n")
        for lt, wv in zip(self.lt0 + self.h * np.arange(len(self.w)), self.w):
            u = math.exp(wv)
            buf.write(f"{math.exp(lt):.17g},{math.exp(-u):.17g},{u:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PhiTable":
        meta = {}
        rows = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    k, _, v = tok.partition("=")
                    meta[k] = v
                continue
            if line.startswith("t,"):
                continue
            rows.append([float(x) for x in line.split(",")])
        arr = np.array(rows)
        u = arr[1:, 2]
        return cls(
            t_grid=arr[:, 0], phi_values=arr[:, 1], residual=float(meta["residual"]),
            lt0=float(meta["lt0"]), h=float(meta["h"]), w=np.log(u),
            c_below=float(meta["c_below"]), spec_hash=meta.get("spec_hash", ""),
            iterations=int(meta.get("iterations", 0)), lattice=bool(int(meta.get("lattice", 0))),
        )


def _lattice_unit(spec: EnvSpec) -> float | None:
    """Common unit of the atom logs when they are all integer multiples of one."""
    logs = np.unique(np.round(spec.atom_logs.ravel(), 14))
    nz = np.abs(logs[np.abs(logs) > 1e-14])
    if nz.size == 0:
        return None
    unit = nz.min()
    ratios = logs / unit
    return float(unit) if np.all(np.abs(ratios - np.round(ratios)) < 1e-9) else None


def _phi_grid(spec: EnvSpec, t_min: float, t_max: float, grid_size: int):
    lmin, lmax = math.log(t_min), math.log(t_max)
    unit = _lattice_unit(spec)
    if unit is not None:
        j0, j1 = math.floor(lmin / unit), math.ceil(lmax / unit)
        n_units = j1 - j0
        k = 1 << max(0, math.ceil(math.log2(max(1.0, grid_size / n_units))))
        h = unit / k
        lt = np.arange(j0 * k, j1 * k + 1) * h
        return lt, h, True
    lt = np.linspace(lmin, lmax, grid_size)
    return lt, float(lt[1] - lt[0]), False


def _c_below(lt0: float, w0: float) -> float:
    # u(t0) = t0 log(1/t0) + c t0
    return math.exp(w0 - lt0) + lt0


def solve_phi_star(spec: EnvSpec, t_max: float = 1e5, grid_size: int = 1024, max_iters: int = 50_000,
                   tol: float = 1e-12, t_min: float = 1e-12) -> PhiTable:
    """Non-trivial fixed point of ``phi(t) = E prod_i phi(t A_i)``.

    Iterates ``u -> -log E exp(-sum_i u(t A_i))`` for ``u = -log phi`` from
    ``phi_0(t) = exp(-t)``.  When every atom log is an integer multiple of a
    common unit the grid is snapped to that lattice (``t = 1`` is a node and
    the map sends nodes to nodes), otherwise a plain geometric grid is used.
    Below the grid ``u`` follows ``t log(1/t) + c t`` with ``c`` matched at
    the first node; this pins the scale of the fixed point.
    """
    reg = classify_regime(spec)
    if abs(spec.b * spec.mean_A() - 1.0) > NORM_TOL or reg.psi_prime_1 < -NORM_TOL:
        raise InvalidSpec("the cascade fixed point is solved for critical laws only (E A = 1/b, psi'(1) >= 0)")
    if not (0 < t_min < 1 < t_max):
        raise ValueError("need 0 < t_min < 1 < t_max")
    lt, h, lattice = _phi_grid(spec, t_min, t_max, grid_size)
    logs = np.ascontiguousarray(spec.atom_logs)
    probs = np.ascontiguousarray(np.asarray(spec.probs, dtype=np.float64))
    w = lt.copy()
    out = np.empty_like(w)
    change = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        K.cascade_map(lt, h, w, _c_below(lt[0], w[0]), logs, probs, out)
        w_new = np.log(out)
        change = float(np.max(np.abs(np.exp(-out) - np.exp(-np.exp(w)))))
        w = w_new
        if change < tol:
            break
    else:
        raise NonConvergence(f"no convergence after {max_iters} iterations (last change {change:.3g})")
    u = np.exp(w)
    if np.max(u) < tol:
        raise TrivialFixedPoint("iteration collapsed onto phi = 1")
    K.cascade_map(lt, h, w, _c_below(lt[0], w[0]), logs, probs, out)
    residual = float(np.max(np.abs(np.exp(-out) - np.exp(-u))))
    t_grid = np.concatenate([[0.0], np.exp(lt)])
    phi_values = np.concatenate([[1.0], np.exp(-u)])
    if not np.all(phi_values > 0):
        raise GridUnderflow("phi underflows to 0 inside the grid; lower t_max")
    return PhiTable(t_grid, phi_values, residual, float(lt[0]), float(h), w, float(_c_below(lt[0], w[0])),
                    spec.spec_hash, it, lattice,
                    {"t_min": t_min, "t_max": t_max, "grid_size": grid_size, "tol": tol})


def multiplicative_martingale(spec: EnvSpec, seed: int, n: int, phi: PhiTable,
                              max_leaves: int = DEFAULT_MAX_LEAVES, extrapolate: bool = False) -> float:
    """``M_n* = prod_{|x| = n} phi*(B(x))``, accumulated in log space.

    Leaves with ``B(x)`` beyond the grid raise :class:`GridUnderflow` unless
    ``extrapolate`` is set, in which case the last grid cell is extended.
    """
    _check_leaves(spec, n, max_leaves)
    if phi.spec_hash and phi.spec_hash != spec.spec_hash:
        raise ValueError("phi table was solved for a different law")
    logs, cum = _law_arrays(spec)
    lt_cap = math.inf if extrapolate else phi.lt_max
    total, top = K.leaf_sum_u(logs, cum, np.uint64(seed), n, phi.lt0, phi.h, phi.w, phi.c_below, lt_cap)
    if top > lt_cap + 1e-9:
        raise GridUnderflow(f"B(x) = {math.exp(top):.3g} beyond grid end {phi.t_max:.3g}; raise t_max")
    return float(math.exp(-total))
