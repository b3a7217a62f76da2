"""Compiled inner loops for the BSC-mixture machinery.

Everything here works on raw ``(p, x)`` float64 arrays plus an explicit
entry count, so the tree sweep can reuse preallocated buffers. The public
modules wrap these in :class:`~polarconstruct.channel.MassDistribution`.
"""

import math

import numpy as np
from numba import njit

BHATTACHARYYA = 0
ENTROPY = 1

TRANSPORT = 0
MERGE = 1
SPLIT = 2

INV_LN2 = 1.0 / math.log(2.0)


@njit(cache=True, nogil=True, error_model="numpy")
def kernel_value(x, kind):
    if x <= 0.0:
        return 0.0
    if x >= 0.5:
        return 1.0
    if kind == BHATTACHARYYA:
        return 2.0 * math.sqrt(x * (1.0 - x))
    # log1p keeps the (1-x) term accurate for tiny x
    return -(x * math.log(x) + (1.0 - x) * math.log1p(-x)) * INV_LN2


@njit(cache=True, nogil=True, error_model="numpy")
def entropy(x):
    return kernel_value(x, ENTROPY)


@njit(cache=True, nogil=True, error_model="numpy")
def bhattacharyya_of(p, x, m):
    s = 0.0
    for i in range(m):
        s += p[i] * kernel_value(x[i], BHATTACHARYYA)
    if s > 1.0:
        s = 1.0
    return s


@njit(cache=True, nogil=True, error_model="numpy")
def mutual_info_of(p, x, m):
    s = 0.0
    for i in range(m):
        s += p[i] * kernel_value(x[i], ENTROPY)
    v = 1.0 - s
    if v < 0.0:
        v = 0.0
    return v


@njit(cache=True, nogil=True, error_model="numpy")
def mean_crossover_of(p, x, m):
    s = 0.0
    for i in range(m):
        s += p[i] * x[i]
    return s


@njit(cache=True, nogil=True, error_model="numpy")
def _dedup_sorted(p, x, m, out_p, out_x, tol):
    """Collapse near-equal neighbours of sorted ``(p, x)`` and renormalize.

    ``out`` may alias the input. Returns the entry count, or -1 when the
    total mass is not positive.
    """
    c = 0
    gp = 0.0
    gx = 0.0
    for i in range(m):
        pi = p[i]
        if not pi > 0.0:
            continue
        xi = x[i]
        if gp > 0.0 and xi - gx <= tol:
            # incremental mean: p*x products underflow for subnormal masses
            gp += pi
            gx += (pi / gp) * (xi - gx)
        else:
            if gp > 0.0:
                out_p[c] = gp
                out_x[c] = gx
                c += 1
            gp = pi
            gx = xi
    if gp > 0.0:
        out_p[c] = gp
        out_x[c] = gx
        c += 1
    total = 0.0
    for i in range(c):
        total += out_p[i]
    if not total > 0.0:
        return -1
    for i in range(c):
        out_p[i] /= total
        v = out_x[i]
        if not v > 0.0:
            v = 0.0
        elif v > 0.5:
            v = 0.5
        out_x[i] = v
    return c


@njit(cache=True, nogil=True, error_model="numpy")
def canonicalize_into(p, x, m, out_p, out_x, tol):
    """Fold, sort, dedup and renormalize ``(p[:m], x[:m])`` into the outputs.

    ``x`` is overwritten with its folded values. Returns the new entry count,
    or -1 when the total mass is not positive.
    """
    for i in range(m):
        xi = x[i]
        if xi > 0.5:
            xi = 1.0 - xi
        if not xi > 0.0:
            xi = 0.0
        elif xi > 0.5:
            xi = 0.5
        x[i] = xi
    order = np.argsort(x[:m])
    for r in range(m):
        i = order[r]
        out_p[r] = p[i]
        out_x[r] = x[i]
    return _dedup_sorted(out_p, out_x, m, out_p, out_x, tol)


@njit(cache=True, nogil=True, error_model="numpy")
def _merge_pass(sp, sx, dp, dx, bounds, nr):
    """Merge runs pairwise from ``s`` into ``d``; returns the new run count."""
    out = 0
    r = 0
    while r < nr:
        lo = bounds[r]
        mid = bounds[r + 1]
        hi = bounds[r + 2] if r + 1 < nr else mid
        i = lo
        j = mid
        o = lo
        while i < mid and j < hi:
            if sx[j] < sx[i]:
                dp[o] = sp[j]
                dx[o] = sx[j]
                j += 1
            else:
                dp[o] = sp[i]
                dx[o] = sx[i]
                i += 1
            o += 1
        while i < mid:
            dp[o] = sp[i]
            dx[o] = sx[i]
            i += 1
            o += 1
        while j < hi:
            dp[o] = sp[j]
            dx[o] = sx[j]
            j += 1
            o += 1
        bounds[out] = lo
        out += 1
        r += 2
    bounds[out] = bounds[nr]
    return out


@njit(cache=True, nogil=True, error_model="numpy")
def canonicalize_runs(p, x, bounds, nr, out_p, out_x, tol):
    """Canonicalize raw output made of ``nr`` ascending runs.

    Run ``r`` spans ``bounds[r]:bounds[r+1]``. Crossovers must already lie
    in ``[0, 1/2]`` up to rounding. Both ``(p, x)`` and ``out`` are used as
    merge buffers; the result ends in ``out``.
    """
    m = bounds[nr]
    sp, sx, dp, dx = p, x, out_p, out_x
    while nr > 1:
        nr = _merge_pass(sp, sx, dp, dx, bounds, nr)
        sp, sx, dp, dx = dp, dx, sp, sx
    return _dedup_sorted(sp, sx, m, out_p, out_x, tol)


@njit(cache=True, nogil=True, error_model="numpy")
def minus_raw(p, x, m, out_p, out_x, bounds):
    """Unordered-pair sweep of the check-node combination.

    For sorted input each row ``i`` (pairs ``(i, j)``, ``j >= i``) ascends
    in crossover and becomes one run. Returns the run count; the entry count
    is ``bounds[runs]``.
    """
    c = 0
    for i in range(m):
        bounds[i] = c
        a = x[i]
        pa = p[i]
        out_p[c] = pa * pa
        out_x[c] = 2.0 * a * (1.0 - a)
        c += 1
        for j in range(i + 1, m):
            b = x[j]
            out_p[c] = 2.0 * pa * p[j]
            out_x[c] = a * (1.0 - b) + b * (1.0 - a)
            c += 1
    bounds[m] = c
    return m


@njit(cache=True, nogil=True, error_model="numpy")
def plus_raw(p, x, m, out_p, out_x, bounds):
    """Unordered-pair sweep of the variable-node combination.

    Each pair of BSCs yields an agreeing and a disagreeing component. For
    sorted input the agreeing crossovers of row ``i`` ascend in ``j`` and
    the disagreeing ones (written folded) descend, so each row gives two
    runs, the second written back to front. Zero-mass components are
    skipped. Returns the run count.
    """
    c = 0
    r = 0
    for i in range(m):
        a = x[i]
        pa = p[i]
        bounds[r] = c
        r += 1
        for j in range(i, m):
            b = x[j]
            w = pa * p[j]
            if j != i:
                w *= 2.0
            qg = a * b + (1.0 - a) * (1.0 - b)
            if qg > 0.0:
                out_p[c] = w * qg
                out_x[c] = a * b / qg
                c += 1
        bounds[r] = c
        r += 1
        for j in range(m - 1, i - 1, -1):
            b = x[j]
            w = pa * p[j]
            if j != i:
                w *= 2.0
            u = a * (1.0 - b)
            v = (1.0 - a) * b
            qb = u + v
            if qb > 0.0:
                out_p[c] = w * qb
                out_x[c] = min(u, v) / qb
                c += 1
    bounds[r] = c
    return r


# ---------------------------------------------------------------------------
# tournament tree over candidate keys, laid out as an implicit binary tree
# with the m leaves at ``m + key``. Node v holds the least (cost, key) pair
# below it in ``tc[v]``, ``tk[v]``, so ties resolve to the smaller key.
# Removed candidates carry an infinite cost. Keeping the cost next to the key
# makes each level of a repair independent of the previous load.


@njit(cache=True, nogil=True, error_model="numpy")
def _tree_build(tc, tk, size):
    for i in range(size):
        tk[size + i] = i
    for v in range(size - 1, 0, -1):
        l = 2 * v
        r = l + 1
        if tc[r] < tc[l] or (tc[r] == tc[l] and tk[r] < tk[l]):
            l = r
        tc[v] = tc[l]
        tk[v] = tk[l]


@njit(cache=True, nogil=True, error_model="numpy")
def _tree_set(tc, tk, size, key, value):
    """Change one cost and repair the path to the root."""
    v = size + key
    tc[v] = value
    c = value
    kk = key
    while v > 1:
        s = v ^ 1
        sc = tc[s]
        sk = tk[s]
        # bitwise ops keep this branch-free
        take = (sc < c) | ((sc == c) & (sk < kk))
        c = sc if take else c
        kk = sk if take else kk
        v >>= 1
        # an unchanged node leaves every ancestor intact
        if tc[v] == c and tk[v] == kk:
            break
        tc[v] = c
        tk[v] = kk


# ---------------------------------------------------------------------------
# greedy reductions; all operate in place on sorted canonical input


@njit(cache=True, nogil=True, error_model="numpy")
def _transport_cost(p, fx, i, j):
    c = p[i] * (fx[j] - fx[i])
    return c if c > 0.0 else 0.0


@njit(cache=True, nogil=True, error_model="numpy")
def _merge_cost(p, x, fx, i, j, kind):
    pt = p[i] + p[j]
    xb = x[i] + (p[j] / pt) * (x[j] - x[i])
    c = pt * kernel_value(xb, kind) - p[i] * fx[i] - p[j] * fx[j]
    return c if c > 0.0 else 0.0


@njit(cache=True, nogil=True, error_model="numpy")
def _split_cost(p, x, fx, h, i, j):
    t = (x[i] - x[h]) / (x[j] - x[h])
    c = p[i] * (fx[i] - t * fx[j] - (1.0 - t) * fx[h])
    return c if c > 0.0 else 0.0


@njit(cache=True, nogil=True, error_model="numpy")
def reduce_masses(p, x, m, k, algo, kind, stats):
    """Greedy reduction of ``(p[:m], x[:m])`` to ``min(m, k)`` entries.

    ``algo`` selects transport, merge or split. Candidates are keyed by
    entry index: the left entry of a pair, or the middle one of a triple.
    The survivors are compacted to the front of ``p``/``x`` and the new
    count returned. ``stats`` gets ``[steps, cumulative_loss,
    max_step_loss]`` in kernel units.
    """
    stats[0] = 0.0
    stats[1] = 0.0
    stats[2] = 0.0
    if m <= k:
        return m
    size = m
    nxt = np.empty(m, np.int32)
    prv = np.empty(m, np.int32)
    alive = np.ones(m, np.bool_)
    fx = np.empty(m)
    tc = np.full(2 * size, np.inf)
    tk = np.empty(2 * size, np.int32)
    cost = tc[size:]
    for i in range(m):
        nxt[i] = i + 1
        prv[i] = i - 1
        fx[i] = kernel_value(x[i], kind)
    if algo == SPLIT:
        for i in range(1, m - 1):
            cost[i] = _split_cost(p, x, fx, i - 1, i, i + 1)
    elif algo == MERGE:
        for i in range(m - 1):
            cost[i] = _merge_cost(p, x, fx, i, i + 1, kind)
    else:
        for i in range(m - 1):
            cost[i] = _transport_cost(p, fx, i, i + 1)
    _tree_build(tc, tk, size)

    inf = np.inf
    steps = 0
    total = 0.0
    worst = 0.0
    target = m - k
    while steps < target:
        i = tk[1]
        c = tc[1]
        if c == inf:
            break
        if algo == MERGE:
            j = nxt[i]
            pt = p[i] + p[j]
            xb = x[i] + (p[j] / pt) * (x[j] - x[i])
            if xb < x[i]:
                xb = x[i]
            elif xb > x[j]:
                xb = x[j]
            p[i] = pt
            x[i] = xb
            fx[i] = kernel_value(xb, kind)
            alive[j] = False
            _tree_set(tc, tk, size, j, inf)
            jn = nxt[j]
            nxt[i] = jn
            if jn < m:
                prv[jn] = i
                _tree_set(tc, tk, size, i, _merge_cost(p, x, fx, i, jn, kind))
            else:
                _tree_set(tc, tk, size, i, inf)
            h = prv[i]
            if h >= 0:
                _tree_set(tc, tk, size, h, _merge_cost(p, x, fx, h, i, kind))
        elif algo == TRANSPORT:
            j = nxt[i]
            h = prv[i]
            p[j] += p[i]
            alive[i] = False
            _tree_set(tc, tk, size, i, inf)
            prv[j] = h
            if h >= 0:
                nxt[h] = j
                _tree_set(tc, tk, size, h, _transport_cost(p, fx, h, j))
            jn = nxt[j]
            if jn < m:
                _tree_set(tc, tk, size, j, _transport_cost(p, fx, j, jn))
        else:
            h = prv[i]
            j = nxt[i]
            t = (x[i] - x[h]) / (x[j] - x[h])
            p[h] += (1.0 - t) * p[i]
            p[j] += t * p[i]
            alive[i] = False
            _tree_set(tc, tk, size, i, inf)
            nxt[h] = j
            prv[j] = h
            hh = prv[h]
            if hh >= 0:
                _tree_set(tc, tk, size, h, _split_cost(p, x, fx, hh, h, j))
            jn = nxt[j]
            if jn < m:
                _tree_set(tc, tk, size, j, _split_cost(p, x, fx, h, j, jn))
        steps += 1
        total += c
        if c > worst:
            worst = c

    c = 0
    for i in range(m):
        if alive[i]:
            p[c] = p[i]
            x[c] = x[i]
            c += 1
    stats[0] = steps
    stats[1] = total
    stats[2] = worst
    return c


# ---------------------------------------------------------------------------
# depth-first tree sweep


@njit(cache=True, nogil=True, error_model="numpy")
def _process_child(raw_p, raw_x, bounds, nr, can_p, can_x, dst_p, dst_x, k, algo, kind, delta,
                   tol, track, level, level_loss_i, level_loss_f, stats):
    """Canonicalize, reduce and optionally relax one freshly split child.

    The raw child is given as ``nr`` sorted runs delimited by ``bounds``.
    The result lands in ``dst_p``/``dst_x``; returns its entry count.
    """
    m = canonicalize_runs(raw_p, raw_x, bounds, nr, can_p, can_x, tol)
    i_before = 0.0
    if track:
        i_before = mutual_info_of(can_p, can_x, m)
    m = reduce_masses(can_p, can_x, m, k, algo, kind, stats)
    level_loss_f[level] += stats[1]
    if delta > 0.0:
        z = bhattacharyya_of(can_p, can_x, m)
        if z < delta:
            m = _write_bec(can_p, can_x, z)
    if track:
        level_loss_i[level] += i_before - mutual_info_of(can_p, can_x, m)
    for i in range(m):
        dst_p[i] = can_p[i]
        dst_x[i] = can_x[i]
    return m


@njit(cache=True, nogil=True, error_model="numpy")
def _write_bec(dst_p, dst_x, eps):
    if eps <= 0.0:
        dst_p[0] = 1.0
        dst_x[0] = 0.0
        return 1
    if eps >= 1.0:
        dst_p[0] = 1.0
        dst_x[0] = 0.5
        return 1
    dst_p[0] = 1.0 - eps
    dst_x[0] = 0.0
    dst_p[1] = eps
    dst_x[1] = 0.5
    return 2


@njit(cache=True, nogil=True, error_model="numpy")
def evolve_subtree(root_p, root_x, levels, k, algo, kind, delta, tol, track,
                   out_z, out_i, out_e, level_sum_i, level_loss_i, level_loss_f, zero_floor):
    """Evolve an already-quantized root ``levels`` deep, minus child first.

    Leaves are written to ``out_z``/``out_i``/``out_e`` (Bhattacharyya,
    mutual information, error probability) in left-to-right tree order.
    Per-level arrays are indexed relative to the root (root is level 0) and
    accumulated into, not overwritten; level 0 is left to the caller.
    """
    cap = max(k, 2, root_p.shape[0])
    store_p = np.empty((levels + 1, cap))
    store_x = np.empty((levels + 1, cap))
    store_m = np.zeros(levels + 1, np.int64)
    state = np.zeros(levels + 1, np.int64)
    raw_cap = cap * (cap + 1) + 2
    raw_p = np.empty(raw_cap)
    raw_x = np.empty(raw_cap)
    can_p = np.empty(raw_cap)
    can_x = np.empty(raw_cap)
    bounds = np.empty(2 * cap + 1, np.int64)
    stats = np.zeros(3)
    m0 = root_p.shape[0]
    for i in range(m0):
        store_p[0, i] = root_p[i]
        store_x[0, i] = root_x[i]
    store_m[0] = m0
    leaf = 0
    depth = 0
    while depth >= 0:
        if depth == levels:
            m = store_m[depth]
            z = bhattacharyya_of(store_p[depth], store_x[depth], m)
            if z < zero_floor:
                z = 0.0
            out_z[leaf] = z
            out_i[leaf] = mutual_info_of(store_p[depth], store_x[depth], m)
            e = mean_crossover_of(store_p[depth], store_x[depth], m)
            if e < zero_floor:
                e = 0.0
            out_e[leaf] = e
            leaf += 1
            depth -= 1
            continue
        s = state[depth]
        if s == 2:
            depth -= 1
            continue
        m = store_m[depth]
        if s == 0:
            nr = minus_raw(store_p[depth], store_x[depth], m, raw_p, raw_x, bounds)
        else:
            nr = plus_raw(store_p[depth], store_x[depth], m, raw_p, raw_x, bounds)
        state[depth] = s + 1
        child = depth + 1
        cm = _process_child(raw_p, raw_x, bounds, nr, can_p, can_x, store_p[child], store_x[child], k,
                            algo, kind, delta, tol, track, child, level_loss_i, level_loss_f,
                            stats)
        store_m[child] = cm
        state[child] = 0
        if track:
            level_sum_i[child] += mutual_info_of(store_p[child], store_x[child], cm)
        depth = child
    return leaf
