"""Compiled inner loops: split search, greedy tree growth and prediction.

Conventions shared with the pure-Python API in ``splitting`` and ``tree``:

* node cost is the total squared error (regression; the mean squared error
  when ``mse_cost`` is set) or the majority-vote misclassification rate
  (classification);
* gain(i, t) = cost(D) - (|L|/|D| cost(L) + |R|/|D| cost(R)), left is ``x <= t``;
* thresholds are midpoints of consecutive distinct sorted node values;
* a feature outside the used set has its gain multiplied by lambda (or
  lambda**depth); the best penalized gain wins, ties going to the lower
  feature index and then the smaller threshold; no split unless it is > 0.

Floating-point noise is absorbed by two tolerances: a raw gain at most
``ZERO_GAIN`` times the node cost counts as zero, and a candidate must beat
the incumbent by more than ``TIE_TOL`` (relative) to replace it, so gains
that are equal in exact arithmetic resolve by the tie rule above.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX1 = np.uint64(0xBF58476D1CE4E5B9)
MIX2 = np.uint64(0x94D049BB133111EB)
S30 = np.uint64(30)
S27 = np.uint64(27)
S31 = np.uint64(31)
S11 = np.uint64(11)
INV_2_53 = 1.0 / 9007199254740992.0

# node table columns (float64 matrix, one row per node)
F_FEATURE, F_THRESHOLD, F_LEFT, F_RIGHT, F_VALUE, F_COUNT, F_DEPTH, F_RAW, F_PEN = range(9)
N_FIELDS = 9

ZERO_GAIN = 1e-12
TIE_TOL = 1e-12


@njit(cache=True, nogil=True)
def rng_uniform(state):
    state[0] += GOLDEN
    z = state[0]
    z = (z ^ (z >> S30)) * MIX1
    z = (z ^ (z >> S27)) * MIX2
    z = z ^ (z >> S31)
    return np.float64(z >> S11) * INV_2_53


@njit(cache=True, nogil=True)
def rng_integer(state, k):
    return np.int64(rng_uniform(state) * k)


@njit(cache=True, nogil=True)
def bootstrap_rows(state, n):
    rows = np.empty(n, dtype=np.int64)
    for i in range(n):
        rows[i] = rng_integer(state, n)
    return rows


@njit(cache=True, nogil=True)
def _majority(counts):
    best = 0
    for c in range(1, counts.shape[0]):
        if counts[c] > counts[best]:
            best = c
    return best


@njit(cache=True, nogil=True)
def node_cost_reg(yv):
    m = yv.shape[0]
    s = 0.0
    for i in range(m):
        s += yv[i]
    mean = s / m
    c = 0.0
    for i in range(m):
        d = yv[i] - mean
        c += d * d
    return c


@njit(cache=True, nogil=True)
def node_cost_cls(yc, n_classes):
    counts = np.zeros(n_classes, dtype=np.int64)
    for i in range(yc.shape[0]):
        counts[yc[i]] += 1
    m = yc.shape[0]
    return (m - counts[_majority(counts)]) / m


@njit(cache=True, nogil=True)
def _midpoint(lo, hi):
    t = (lo + hi) / 2.0
    if t >= hi:
        t = lo
    return t


@njit(cache=True, nogil=True)
def _scan(X, f, rows, order, yv, yc, n_classes, classification, mse_cost, parent,
          s_tot, q_tot, total, left, factor, best_f, best_t, best_raw, best_pen):
    """Scan feature ``f`` over positions ``order`` (sorted by x, stable).

    ``rows[pos]`` is the dataset row of a position; ``yv``/``yc`` are indexed
    by position (``yv`` already centered on the node mean).
    """
    m = order.shape[0]
    if classification:
        left[:] = 0
        max_l = 0
        for k in range(m - 1):
            c = yc[order[k]]
            left[c] += 1
            if left[c] > max_l:
                max_l = left[c]
            lo = X[rows[order[k]], f]
            hi = X[rows[order[k + 1]], f]
            if not lo < hi:
                continue
            nl = k + 1
            nr = m - nl
            max_r = 0
            for c2 in range(n_classes):
                r = total[c2] - left[c2]
                if r > max_r:
                    max_r = r
            cost_l = (nl - max_l) / nl
            cost_r = (nr - max_r) / nr
            raw = parent - (nl / m * cost_l + nr / m * cost_r)
            if raw <= ZERO_GAIN * parent:
                continue
            pen = raw * factor
            if pen > best_pen + TIE_TOL * best_pen:
                best_f = f
                best_t = _midpoint(lo, hi)
                best_raw = raw
                best_pen = pen
    else:
        s_l = 0.0
        q_l = 0.0
        for k in range(m - 1):
            v = yv[order[k]]
            s_l += v
            q_l += v * v
            lo = X[rows[order[k]], f]
            hi = X[rows[order[k + 1]], f]
            if not lo < hi:
                continue
            nl = k + 1
            nr = m - nl
            sse_l = q_l - s_l * s_l / nl
            s_r = s_tot - s_l
            sse_r = (q_tot - q_l) - s_r * s_r / nr
            if sse_l < 0.0:
                sse_l = 0.0
            if sse_r < 0.0:
                sse_r = 0.0
            if mse_cost:
                raw = parent - (nl / m * (sse_l / nl) + nr / m * (sse_r / nr))
            else:
                raw = parent - (nl / m * sse_l + nr / m * sse_r)
            if raw <= ZERO_GAIN * parent:
                continue
            pen = raw * factor
            if pen > best_pen + TIE_TOL * best_pen:
                best_f = f
                best_t = _midpoint(lo, hi)
                best_raw = raw
                best_pen = pen
    return best_f, best_t, best_raw, best_pen


@njit(cache=True, nogil=True)
def _node_stats(y_reg, y_cls, rows, seg, yv, yc, total, classification, mse_cost):
    """Fill position-indexed targets for ``seg``; return (parent cost, sum, sumsq)."""
    m = seg.shape[0]
    if classification:
        total[:] = 0
        for i in range(m):
            c = y_cls[rows[seg[i]]]
            yc[seg[i]] = c
            total[c] += 1
        return (m - total[_majority(total)]) / m, 0.0, 0.0
    s = 0.0
    for i in range(m):
        s += y_reg[rows[seg[i]]]
    mean = s / m
    parent = 0.0
    s_tot = 0.0
    for i in range(m):
        v = y_reg[rows[seg[i]]] - mean
        yv[seg[i]] = v
        parent += v * v
        s_tot += v
    if mse_cost:
        return parent / m, s_tot, parent
    return parent, s_tot, parent


@njit(cache=True, nogil=True)
def _factor(f, lambdas, used, penalize, depth_penalty, depth):
    if penalize and used[f] == 0:
        if depth_penalty:
            return lambdas[f] ** depth
        return lambdas[f]
    return 1.0


@njit(cache=True, nogil=True)
def search_node(X, y_reg, y_cls, rows, candidates, lambdas, used, penalize,
                depth_penalty, depth, classification, n_classes, mse_cost):
    """Best (feature, threshold, raw gain, penalized gain) over ``candidates``.

    ``candidates`` must be sorted ascending. Feature is -1 when no admissible
    split has positive penalized gain.
    """
    m = rows.shape[0]
    if m < 2:
        return -1, 0.0, 0.0, 0.0
    seg = np.arange(m)
    yv = np.empty(m)
    yc = np.empty(m, dtype=np.int64)
    total = np.zeros(n_classes, dtype=np.int64)
    left = np.zeros(n_classes, dtype=np.int64)
    parent, s_tot, q_tot = _node_stats(y_reg, y_cls, rows, seg, yv, yc, total,
                                       classification, mse_cost)
    xv = np.empty(m)
    best_f, best_t, best_raw, best_pen = -1, 0.0, 0.0, 0.0
    for ci in range(candidates.shape[0]):
        f = candidates[ci]
        for i in range(m):
            xv[i] = X[rows[i], f]
        order = np.argsort(xv, kind="mergesort")
        factor = _factor(f, lambdas, used, penalize, depth_penalty, depth)
        best_f, best_t, best_raw, best_pen = _scan(
            X, f, rows, order, yv, yc, n_classes, classification, mse_cost, parent,
            s_tot, q_tot, total, left, factor, best_f, best_t, best_raw, best_pen)
    return best_f, best_t, best_raw, best_pen


@njit(cache=True, nogil=True)
def _leaf_value(y_reg, y_cls, rows, seg, classification, n_classes):
    if classification:
        counts = np.zeros(n_classes, dtype=np.int64)
        for i in range(seg.shape[0]):
            counts[y_cls[rows[seg[i]]]] += 1
        return np.float64(_majority(counts))
    s = 0.0
    for i in range(seg.shape[0]):
        s += y_reg[rows[seg[i]]]
    return s / seg.shape[0]


@njit(cache=True, nogil=True)
def _is_pure(y_reg, y_cls, rows, seg, classification):
    first = rows[seg[0]]
    for i in range(1, seg.shape[0]):
        r = rows[seg[i]]
        if classification:
            if y_cls[r] != y_cls[first]:
                return False
        elif y_reg[r] != y_reg[first]:
            return False
    return True


@njit(cache=True, nogil=True)
def _stable_partition(a, start, end, goes_left, buf):
    nl = 0
    nr = 0
    for i in range(start, end):
        pos = a[i]
        if goes_left[pos]:
            a[start + nl] = pos
            nl += 1
        else:
            buf[nr] = pos
            nr += 1
    for i in range(nr):
        a[start + nl + i] = buf[i]
    return nl


@njit(cache=True, nogil=True)
def presort(X):
    """Stable per-feature argsort of all rows, shape (p, n)."""
    n, p = X.shape
    out = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        out[f] = np.argsort(X[:, f], kind="mergesort")
    return out


@njit(cache=True, nogil=True)
def _sorted_positions(global_order, rows):
    """Positions of ``rows`` ordered by each feature, in O(p * (N + n))."""
    p, n_all = global_order.shape
    n = rows.shape[0]
    start = np.zeros(n_all + 1, dtype=np.int64)
    for i in range(n):
        start[rows[i] + 1] += 1
    for r in range(n_all):
        start[r + 1] += start[r]
    fill = start[:-1].copy()
    grouped = np.empty(n, dtype=np.int64)
    for i in range(n):
        grouped[fill[rows[i]]] = i
        fill[rows[i]] += 1
    srt = np.empty((p, n), dtype=np.int64)
    for f in range(p):
        k = 0
        for j in range(n_all):
            r = global_order[f, j]
            for q in range(start[r], start[r + 1]):
                srt[f, k] = grouped[q]
                k += 1
    return srt


@njit(cache=True, nogil=True)
def grow(X, y_reg, y_cls, global_order, rows, lambdas, used, penalize, depth_penalty, mtry,
         min_node_size, max_depth, classification, n_classes, mse_cost, state):
    """Depth-first greedy growth over ``rows`` (duplicates allowed).

    Works on positions into ``rows``; every feature keeps a list of positions
    sorted by its values (derived from ``global_order``, the per-feature
    stable argsort of all dataset rows), partitioned stably at each split so child
    segments stay sorted. ``used`` (uint8 per feature) is updated in place as
    soon as a split is committed. ``state`` is the one-element SplitMix64
    state, consumed only by the mtry draw of each node that reaches the split
    search. Returns the node table (``F_*`` columns); leaves have feature -1.
    """
    n = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    nodes = np.zeros((cap, N_FIELDS))
    nat = np.arange(n)
    srt = _sorted_positions(global_order, rows)
    buf = np.empty(n, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.uint8)
    yv = np.empty(n)
    yc = np.empty(n, dtype=np.int64)
    total = np.zeros(n_classes, dtype=np.int64)
    left = np.zeros(n_classes, dtype=np.int64)
    perm = np.empty(p, dtype=np.int64)

    # stack of (start, end, depth, parent, is_left)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_parent = np.empty(cap, dtype=np.int64)
    st_left = np.empty(cap, dtype=np.int64)
    st_start[0] = 0
    st_end[0] = n
    st_depth[0] = 1
    st_parent[0] = -1
    st_left[0] = 0
    top = 1
    n_nodes = 0

    while top > 0:
        top -= 1
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        parent = st_parent[top]
        is_left = st_left[top]

        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                nodes[parent, F_LEFT] = node
            else:
                nodes[parent, F_RIGHT] = node
        seg = nat[start:end]
        m = end - start
        nodes[node, F_FEATURE] = -1
        nodes[node, F_LEFT] = -1
        nodes[node, F_RIGHT] = -1
        nodes[node, F_COUNT] = m
        nodes[node, F_DEPTH] = depth
        nodes[node, F_VALUE] = _leaf_value(y_reg, y_cls, rows, seg, classification,
                                           n_classes)

        if m < 2 * min_node_size or m < 2:
            continue
        if max_depth > 0 and depth >= max_depth:
            continue
        if _is_pure(y_reg, y_cls, rows, seg, classification):
            continue

        for j in range(p):
            perm[j] = j
        for k in range(mtry):
            j = k + rng_integer(state, p - k)
            tmp = perm[k]
            perm[k] = perm[j]
            perm[j] = tmp
        cand = np.sort(perm[:mtry])

        parent_cost, s_tot, q_tot = _node_stats(y_reg, y_cls, rows, seg, yv, yc,
                                                total, classification, mse_cost)
        best_f, best_t, best_raw, best_pen = -1, 0.0, 0.0, 0.0
        for ci in range(mtry):
            f = cand[ci]
            factor = _factor(f, lambdas, used, penalize, depth_penalty, depth)
            best_f, best_t, best_raw, best_pen = _scan(
                X, f, rows, srt[f, start:end], yv, yc, n_classes, classification,
                mse_cost, parent_cost, s_tot, q_tot, total, left, factor,
                best_f, best_t, best_raw, best_pen)
        if best_f < 0:
            continue

        used[best_f] = 1
        nodes[node, F_FEATURE] = best_f
        nodes[node, F_THRESHOLD] = best_t
        nodes[node, F_RAW] = best_raw
        nodes[node, F_PEN] = best_pen

        for i in range(start, end):
            pos = nat[i]
            goes_left[pos] = X[rows[pos], best_f] <= best_t
        nl = _stable_partition(nat, start, end, goes_left, buf)
        for f in range(p):
            _stable_partition(srt[f], start, end, goes_left, buf)

        # right pushed first so the left subtree is grown first
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_left[top] = 0
        top += 1
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        st_parent[top] = node
        st_left[top] = 1
        top += 1

    return nodes[:n_nodes].copy()


@njit(cache=True, nogil=True)
def predict_nodes(feature, threshold, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = value[k]
    return out


@njit(cache=True, nogil=True)
def leaf_index(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[i, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[i] = k
    return out
