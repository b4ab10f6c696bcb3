"""Numba kernels over the lazily hashed environment.

Every kernel receives the sibling law as three arrays (atom values, atom
logs, cumulative probabilities) plus the environment seed; vertex keys are
recomputed on the fly from the key stack of the current path.  All kernels
release the GIL so a thread pool gives real parallelism.
"""

import numpy as np
from numba import njit

from ._hash import child_key, draw_unit, pick_atom, root_key, stream_next

# completion codes
OK = 0
OVER_BUDGET = 1

# many-to-one functionals
G_ONE = 0
G_MAX_LE = 1
G_END_LE0 = 2
G_ABSMAX_LE = 3

_TIE = 1e-9
# equal-valued paths differ only by rounding; treat them as ties
_PRUNE_EPS = 1e-10


@njit(cache=True, nogil=True, inline="always")
def _atom(key, cum):
    return pick_atom(draw_unit(key), cum)


@njit(cache=True, nogil=True)
def _grow(stack):
    new = np.empty(2 * stack.shape[0], dtype=stack.dtype)
    new[: stack.shape[0]] = stack
    return new


# ------------------------------------------------------------------ walks

@njit(cache=True, nogil=True, inline="always")
def _step(key_here, depth, vals, sums, cum, b, r):
    """Next move from a vertex: returns -1 for the parent or the child digit."""
    idx = _atom(key_here, cum)
    if depth == 0:
        z = r * sums[idx]
    else:
        z = r * (1.0 + sums[idx])
        if z < 1.0:
            return -1
        z -= 1.0
    acc = 0.0
    for i in range(b - 1):
        acc += vals[idx, i]
        if z < acc:
            return i
    return b - 1


@njit(cache=True, nogil=True)
def excursion_batch(vals, sums, cum, seed_env, state, n, count, step_budget, out_flag, out_steps):
    """Run ``count`` independent excursions from the root.

    ``out_flag``: 1 success (reached depth n), 0 returned to the root,
    2 truncated by the step budget.  Returns the final stream state.
    """
    b = vals.shape[1]
    keys = np.empty(max(n + 1, 2), dtype=np.uint64)
    keys[0] = root_key(seed_env)
    for e in range(count):
        depth = 0
        steps = 0
        flag = 2
        while steps < step_budget:
            state, r = stream_next(state)
            mv = _step(keys[depth], depth, vals, sums, cum, b, r)
            steps += 1
            if mv < 0:
                depth -= 1
            else:
                keys[depth + 1] = child_key(keys[depth], mv)
                depth += 1
            if depth == n:
                flag = 1
                break
            if depth == 0:
                flag = 0
                break
        out_flag[e] = flag
        out_steps[e] = steps
    return state


@njit(cache=True, nogil=True)
def walk(vals, sums, cum, seed_env, state, target, step_budget, checkpoints, out_xstar):
    """Walk from the root until depth ``target`` (if > 0) or the step budget.

    Records X* at each checkpoint time reached.  Returns
    ``(tau or -1, returns_to_root, steps, xstar, n_checkpoints_filled)``.
    """
    b = vals.shape[1]
    keys = np.empty(1024, dtype=np.uint64)
    keys[0] = root_key(seed_env)
    depth = 0
    xstar = 0
    returns = 0
    t = 0
    c = 0
    ncp = checkpoints.shape[0]
    tau = -1
    while t < step_budget:
        state, r = stream_next(state)
        mv = _step(keys[depth], depth, vals, sums, cum, b, r)
        t += 1
        if mv < 0:
            depth -= 1
            if depth == 0:
                returns += 1
        else:
            if depth + 1 >= keys.shape[0]:
                keys = _grow(keys)
            keys[depth + 1] = child_key(keys[depth], mv)
            depth += 1
            if depth > xstar:
                xstar = depth
        while c < ncp and checkpoints[c] == t:
            out_xstar[c] = xstar
            c += 1
        if target > 0 and depth == target:
            tau = t
            break
    return tau, returns, t, xstar, c


# ------------------------------------------------------------------ tree searches

@njit(cache=True, nogil=True, inline="always")
def _order_children(row_logs, out):
    """Child digits sorted by increasing V increment (decreasing log A)."""
    b = row_logs.shape[0]
    for i in range(b):
        out[i] = i
    for i in range(1, b):
        j = i
        while j > 0 and row_logs[out[j - 1]] < row_logs[out[j]]:
            tmp = out[j - 1]
            out[j - 1] = out[j]
            out[j] = tmp
            j -= 1


@njit(cache=True, nogil=True)
def barrier_min(logs, cum, seed, n, budget):
    """Exact ``min_{|x|=n} max_{z in ]]e,x]]} V(z)`` by depth-first branch and bound.

    A prefix is cut once its running max reaches the incumbent.  The final
    potential is a second lower bound on the barrier, so a prefix is also cut
    when ``V + (remaining depth) * min step`` reaches it.  Returns
    ``(value, witness digits, visited, code)``.
    """
    b = logs.shape[1]
    min_step = -logs.max()
    keys = np.empty(n + 1, dtype=np.uint64)
    runmax = np.empty(n + 1)
    pot = np.empty(n + 1)
    order = np.empty((n + 1, b), dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    digits = np.zeros(n + 1, dtype=np.int64)
    witness = np.zeros(n, dtype=np.int64)
    aidx = np.empty(n + 1, dtype=np.int64)
    keys[0] = root_key(seed)
    runmax[0] = -np.inf
    pot[0] = 0.0
    aidx[0] = _atom(keys[0], cum)
    _order_children(logs[aidx[0]], order[0])
    best = np.inf
    visited = 1
    d = 0
    while d >= 0:
        if nxt[d] == b:
            d -= 1
            continue
        i = order[d, nxt[d]]
        nxt[d] += 1
        v = pot[d] - logs[aidx[d], i]
        m = max(runmax[d], v)
        if max(m, v + (n - d - 1) * min_step) >= best - _PRUNE_EPS:
            continue
        visited += 1
        if visited > budget:
            return best, witness, visited, OVER_BUDGET
        digits[d] = i
        if d + 1 == n:
            best = m
            for k in range(n):
                witness[k] = digits[k]
            continue
        keys[d + 1] = child_key(keys[d], i)
        pot[d + 1] = v
        runmax[d + 1] = m
        aidx[d + 1] = _atom(keys[d + 1], cum)
        _order_children(logs[aidx[d + 1]], order[d + 1])
        nxt[d + 1] = 0
        d += 1
    return best, witness, visited, OK


@njit(cache=True, nogil=True)
def min_leaf_potential(logs, cum, seed, n, budget):
    """Exact ``min_{|x|=n} V(x)``, pruned by ``V + (remaining depth) * min step``."""
    b = logs.shape[1]
    min_step = -logs.max()
    keys = np.empty(n + 1, dtype=np.uint64)
    pot = np.empty(n + 1)
    order = np.empty((n + 1, b), dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    aidx = np.empty(n + 1, dtype=np.int64)
    keys[0] = root_key(seed)
    pot[0] = 0.0
    aidx[0] = _atom(keys[0], cum)
    _order_children(logs[aidx[0]], order[0])
    best = np.inf
    visited = 1
    d = 0
    while d >= 0:
        if nxt[d] == b:
            d -= 1
            continue
        i = order[d, nxt[d]]
        nxt[d] += 1
        v = pot[d] - logs[aidx[d], i]
        if v + (n - d - 1) * min_step >= best - _PRUNE_EPS:
            continue
        visited += 1
        if visited > budget:
            return best, visited, OVER_BUDGET
        if d + 1 == n:
            best = v
            continue
        keys[d + 1] = child_key(keys[d], i)
        pot[d + 1] = v
        aidx[d + 1] = _atom(keys[d + 1], cum)
        _order_children(logs[aidx[d + 1]], order[d + 1])
        nxt[d + 1] = 0
        d += 1
    return best, visited, OK


@njit(cache=True, nogil=True)
def count_within(logs, cum, seed, m, level):
    """Number of ``x`` in generation ``m`` with ``max |V(z)| <= level`` on ]]e, x]]."""
    b = logs.shape[1]
    keys = np.empty(m + 1, dtype=np.uint64)
    pot = np.empty(m + 1)
    nxt = np.zeros(m + 1, dtype=np.int64)
    aidx = np.empty(m + 1, dtype=np.int64)
    keys[0] = root_key(seed)
    aidx[0] = _atom(keys[0], cum)
    pot[0] = 0.0
    count = 0
    d = 0
    while d >= 0:
        if nxt[d] == b:
            d -= 1
            continue
        i = nxt[d]
        nxt[d] += 1
        v = pot[d] - logs[aidx[d], i]
        if abs(v) > level:
            continue
        if d + 1 == m:
            count += 1
            continue
        keys[d + 1] = child_key(keys[d], i)
        aidx[d + 1] = _atom(keys[d + 1], cum)
        pot[d + 1] = v
        nxt[d + 1] = 0
        d += 1
    return count


@njit(cache=True, nogil=True)
def leaf_sum_B(logs, cum, seed, n, g_id, level):
    """``sum_{|x|=n} B(x) G(path)`` by streaming DFS over the full tree.

    With ``S_k = log B(x^(k))``: ``G_ONE`` is 1, ``G_MAX_LE`` is
    ``1{max S_k <= level}``, ``G_END_LE0`` is ``1{S_n <= 0}`` and
    ``G_ABSMAX_LE`` is ``1{max |S_k| <= level}``.
    """
    b = logs.shape[1]
    keys = np.empty(n + 1, dtype=np.uint64)
    s = np.empty(n + 1)
    smax = np.empty(n + 1)
    amax = np.empty(n + 1)
    nxt = np.zeros(n + 1, dtype=np.int64)
    aidx = np.empty(n + 1, dtype=np.int64)
    keys[0] = root_key(seed)
    aidx[0] = _atom(keys[0], cum)
    s[0] = 0.0
    smax[0] = -np.inf
    amax[0] = 0.0
    total = 0.0
    d = 0
    while d >= 0:
        if nxt[d] == b:
            d -= 1
            continue
        i = nxt[d]
        nxt[d] += 1
        v = s[d] + logs[aidx[d], i]
        mx = max(smax[d], v)
        am = max(amax[d], abs(v))
        if d + 1 == n:
            keep = True
            if g_id == G_MAX_LE:
                keep = mx <= level + _TIE
            elif g_id == G_END_LE0:
                keep = v <= _TIE
            elif g_id == G_ABSMAX_LE:
                keep = am <= level + _TIE
            if keep:
                total += np.exp(v)
            continue
        keys[d + 1] = child_key(keys[d], i)
        aidx[d + 1] = _atom(keys[d + 1], cum)
        s[d + 1] = v
        smax[d + 1] = mx
        amax[d + 1] = am
        nxt[d + 1] = 0
        d += 1
    return total


@njit(cache=True, nogil=True)
def leaf_sum_B_many(logs, cum, seeds, n, g_id, level, out):
    for k in range(seeds.shape[0]):
        out[k] = leaf_sum_B(logs, cum, seeds[k], n, g_id, level)


@njit(cache=True, nogil=True, inline="always")
def interp_neg_log_phi(x, lt0, h, w, c_below):
    """``u(t) = -log phi(t)`` at ``x = log t`` from grid values ``w = log u``.

    Linear in (log t, log u) inside the grid and beyond its top end; below
    the grid, ``u(t) = t log(1/t) + c_below t``.
    """
    if x < lt0 - 1e-12:
        t = np.exp(x)
        return t * (-x) + c_below * t
    g = w.shape[0]
    pos = (x - lt0) / h
    k = int(np.floor(pos + 1e-9))
    if k > g - 2:
        k = g - 2
    if k < 0:
        k = 0
    lam = pos - k
    if lam < 1e-9:
        return np.exp(w[k])
    return np.exp((1.0 - lam) * w[k] + lam * w[k + 1])


@njit(cache=True, nogil=True)
def cascade_map(lt, h, w, c_below, logs, probs, out):
    """One application of ``u -> -log E exp(-sum_i u(t A_i))`` on the grid."""
    g = lt.shape[0]
    na, b = logs.shape
    s = np.empty(na)
    for j in range(g):
        smin = np.inf
        for a in range(na):
            acc = 0.0
            for i in range(b):
                acc += interp_neg_log_phi(lt[j] + logs[a, i], lt[0], h, w, c_below)
            s[a] = acc
            if acc < smin:
                smin = acc
        tot = 0.0
        for a in range(na):
            tot += probs[a] * np.exp(-(s[a] - smin))
        out[j] = smin - np.log(tot)


@njit(cache=True, nogil=True)
def leaf_sum_u(logs, cum, seed, n, lt0, h, w, c_below, lt_max):
    """``sum_{|x|=n} -log phi(B(x))``; returns ``(sum, max log B)``."""
    b = logs.shape[1]
    keys = np.empty(n + 1, dtype=np.uint64)
    s = np.empty(n + 1)
    nxt = np.zeros(n + 1, dtype=np.int64)
    aidx = np.empty(n + 1, dtype=np.int64)
    keys[0] = root_key(seed)
    aidx[0] = _atom(keys[0], cum)
    s[0] = 0.0
    total = 0.0
    top = -np.inf
    d = 0
    while d >= 0:
        if nxt[d] == b:
            d -= 1
            continue
        i = nxt[d]
        nxt[d] += 1
        v = s[d] + logs[aidx[d], i]
        if d + 1 == n:
            if v > top:
                top = v
            if v <= lt_max + 1e-9:
                total += interp_neg_log_phi(v, lt0, h, w, c_below)
            continue
        keys[d + 1] = child_key(keys[d], i)
        aidx[d + 1] = _atom(keys[d + 1], cum)
        s[d + 1] = v
        nxt[d + 1] = 0
        d += 1
    return total, top
