"""Brute-force reference: the explicit Markov chain on the depth-``n`` tree.

States are the vertices of depth ``0..n``.  With root-return absorption the
root is split in two: the start state (which always steps to a child) and an
absorbing "returned" state that receives every step back into the root.
Leaves that are not absorbing reflect to their parent, which is the trace of
the walk on the truncated tree when excursions below depth ``n`` return.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .env import VertexAddress, _as_address
from .errors import BudgetExceeded, SingularSystem
from .quenched import TruncatedEnv

MAX_STATES = 100_000
RESIDUAL_TOL = 1e-12
_DENSE_LIMIT = 4096

LEVEL_N = "level_n"
ROOT_RETURN = "root_return"


@dataclass
class DenseChain:
    """Finite chain plus the vertex <-> state index maps."""

    P: sp.csr_matrix
    absorbing: np.ndarray
    b: int
    n: int
    perm: np.ndarray                 # canonical index -> state index
    return_state: int | None = None
    last_residual: float = field(default=float("nan"))

    @property
    def size(self) -> int:
        return self.P.shape[0]

    def state(self, addr) -> int:
        addr = _as_address(addr)
        base = (self.b ** addr.depth - 1) // (self.b - 1)
        return int(self.perm[base + addr.index(self.b)])

    def level_states(self, k: int) -> np.ndarray:
        base = (self.b ** k - 1) // (self.b - 1)
        return self.perm[base: base + self.b ** k]

    def dense(self) -> np.ndarray:
        return self.P.toarray()

    def to_csv(self) -> str:
        coo = self.P.tocoo()
        rows = ["row,col,p"] + [f"{i},{j},{v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
        return "\n".join(rows) + "\n"


def build(env: TruncatedEnv, absorb_at_level_n: bool = True, absorb_at_root_return: bool = True,
          absorbing=(), order_seed: int | None = None, max_states: int = MAX_STATES) -> DenseChain:
    """Explicit transition matrix of the walk on ``env``.

    ``absorbing`` lists extra vertex addresses made absorbing.  A non-None
    ``order_seed`` shuffles the state enumeration, which must not change any
    answer.
    """
    if env.compressed:
        raise ValueError("the oracle needs fully realized levels")
    b, n = env.b, env.n
    n_tree = (b ** (n + 1) - 1) // (b - 1)
    total = n_tree + (1 if absorb_at_root_return else 0)
    if total > max_states:
        raise BudgetExceeded(f"{total} states exceed the budget of {max_states}")
    perm = np.arange(total)
    if order_seed is not None:
        perm = np.random.default_rng(order_seed).permutation(total)
    ret = int(perm[n_tree]) if absorb_at_root_return else None

    absorb = np.zeros(total, dtype=bool)
    extra = {_as_address(a) for a in absorbing}
    rows, cols, vals = [], [], []

    def add(i, j, p):
        rows.append(perm[i])
        cols.append(j)
        vals.append(p)

    for k in range(n + 1):
        base = (b ** k - 1) // (b - 1)
        cbase = (b ** (k + 1) - 1) // (b - 1)
        pbase = (b ** (k - 1) - 1) // (b - 1) if k > 0 else 0
        for j in range(b ** k):
            i = base + j
            addr = VertexAddress.from_index(j, k, b) if extra else None
            if (k == n and absorb_at_level_n) or (addr is not None and addr in extra):
                absorb[perm[i]] = True
                add(i, perm[i], 1.0)
                continue
            if k == n:
                parent = ret if (k == 1 and absorb_at_root_return) else perm[pbase + j // b]
                add(i, parent, 1.0)
                continue
            a = env.level(k + 1)[j * b: (j + 1) * b]
            if k == 0:
                w_children = a / a.sum()
            else:
                z = 1.0 + a.sum()
                w_children = a / z
                parent = ret if (k == 1 and absorb_at_root_return) else perm[pbase + j // b]
                add(i, parent, 1.0 / z)
            for c in range(b):
                add(i, perm[cbase + j * b + c], w_children[c])
    if absorb_at_root_return:
        absorb[ret] = True
        rows.append(ret)
        cols.append(ret)
        vals.append(1.0)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(total, total))
    return DenseChain(P, absorb, b, n, perm, ret)


def _target_states(chain: DenseChain, target_class) -> np.ndarray:
    if isinstance(target_class, str):
        if target_class == LEVEL_N:
            return chain.level_states(chain.n)
        if target_class == ROOT_RETURN:
            if chain.return_state is None:
                raise ValueError("chain was built without root-return absorption")
            return np.array([chain.return_state])
        raise ValueError(f"unknown target class {target_class!r}")
    if isinstance(target_class, (VertexAddress, tuple)) and all(
            isinstance(d, (int, np.integer)) for d in getattr(target_class, "digits", target_class)):
        return np.array([chain.state(target_class)])
    return np.array([chain.state(a) for a in target_class])


def _solve(M, rhs):
    n = M.shape[0]
    if n <= _DENSE_LIMIT:
        A = M.toarray()
        try:
            lu = scipy.linalg.lu_factor(A, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystem(str(exc)) from exc
        if np.any(np.abs(np.diag(lu[0])) < 1e-300):
            raise SingularSystem("singular absorbing system")
        x = scipy.linalg.lu_solve(lu, rhs)
    else:
        try:
            x = spla.splu(M.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    res = float(np.max(np.abs(M @ x - rhs))) if n else 0.0
    return x, res


def _check(chain: DenseChain, res: float):
    chain.last_residual = res
    if res >= RESIDUAL_TOL:
        raise SingularSystem(f"linear-system residual {res:.3g} above {RESIDUAL_TOL}")


def hit_probability(chain: DenseChain, start, target_class) -> float:
    """Probability to be absorbed in ``target_class`` starting from ``start``.

    ``start`` is a vertex address (the root address means the start copy of
    the root).  Solves ``(I - Q) h = r`` over the transient states.
    """
    s = chain.state(start)
    targets = _target_states(chain, target_class)
    if not np.all(chain.absorbing[targets]):
        raise ValueError("target states must be absorbing")
    if s in set(targets.tolist()):
        return 1.0
    trans = np.flatnonzero(~chain.absorbing)
    if s not in set(trans.tolist()):
        return 0.0
    P = chain.P
    Q = P[trans][:, trans]
    r = np.asarray(P[trans][:, targets].sum(axis=1)).ravel()
    M = sp.identity(len(trans), format="csr") - Q
    h, res = _solve(M, r)
    _check(chain, res)
    val = float(h[np.searchsorted(trans, s)])
    if val <= 0.0 and r.sum() == 0.0:
        raise SingularSystem("target unreachable")
    return val


def expected_absorption_time(chain: DenseChain, start) -> float:
    """Mean number of steps until absorption, from ``start``."""
    s = chain.state(start)
    if chain.absorbing[s]:
        return 0.0
    trans = np.flatnonzero(~chain.absorbing)
    Q = chain.P[trans][:, trans]
    M = sp.identity(len(trans), format="csr") - Q
    t, res = _solve(M, np.ones(len(trans)))
    _check(chain, res)
    if np.any(t < 0):
        raise SingularSystem("negative absorption times")
    return float(t[np.searchsorted(trans, s)])


def passage_time_distribution(chain: DenseChain, start, target_class, m_max: int,
                              max_work: int = 10**9) -> np.ndarray:
    """``P{T <= m}`` for ``m = 1..m_max`` by forward propagation."""
    if m_max * chain.P.nnz > max_work:
        raise BudgetExceeded("forward propagation exceeds the work budget")
    targets = _target_states(chain, target_class)
    PT = chain.P.T.tocsr()
    dist = np.zeros(chain.size)
    dist[chain.state(start)] = 1.0
    is_target = np.zeros(chain.size, dtype=bool)
    is_target[targets] = True
    out = np.empty(m_max)
    caught = 0.0
    if is_target[chain.state(start)]:
        return np.ones(m_max)
    for m in range(m_max):
        dist = PT @ dist
        caught += dist[is_target].sum()
        dist[is_target] = 0.0
        out[m] = min(caught, 1.0)
    return out


# ---------------------------------------------------------------- convenience

def rho(env: TruncatedEnv, **kw) -> float:
    chain = build(env, True, True, **kw)
    return hit_probability(chain, (), LEVEL_N)


def expected_tau(env: TruncatedEnv, **kw) -> float:
    chain = build(env, True, False, **kw)
    return expected_absorption_time(chain, ())


def path_hit(env: TruncatedEnv, leaf, **kw) -> float:
    leaf = _as_address(leaf)
    chain = build(env, False, True, absorbing=[leaf], **kw)
    return hit_probability(chain, (), leaf)


def beta(env: TruncatedEnv, addr, **kw) -> float:
    """``P_x{hit depth n before the parent of x}``."""
    addr = _as_address(addr)
    if addr.depth == 0:
        raise ValueError("beta is defined for non-root vertices")
    chain = build(env, True, False, absorbing=[addr.parent()], **kw)
    return hit_probability(chain, addr, LEVEL_N)
