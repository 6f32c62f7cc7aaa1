"""Pure-Python/numpy reference kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same arithmetic order, so tree-building kernels produce identical trees on
either backend. The coordinate-descent kernel agrees to rounding only (numpy
vector updates may be fused differently).
"""
import numpy as np

_MASK64 = (1 << 64) - 1
_SPLIT_REL_TOL = 1e-10
_CDF_TOL = 1e-12


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _candidate_features(p, mtry, state):
    if mtry >= p:
        return np.arange(p), state
    perm = list(range(p))
    for k in range(mtry):
        state, z = _splitmix64(state)
        j = k + z % (p - k)
        perm[k], perm[j] = perm[j], perm[k]
    return np.sort(np.array(perm[:mtry], dtype=np.int64)), state


def _record_scan(gains, best, eps):
    """Emulate ``for g in gains: if g > best + eps: best = g`` and return the
    index of the last update (or -1)."""
    idx = -1
    start = 0
    while start < gains.size:
        hits = np.flatnonzero(gains[start:] > best + eps)
        if hits.size == 0:
            break
        k = start + hits[0]
        best = gains[k]
        idx = k
        start = k + 1
    return idx, best


def _midpoint(lo, hi):
    thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    return thr


def build_cart_tree(X, y, rows, max_depth, min_leaf, mtry, seed, order=None):
    """Grow one CART regression tree on ``rows`` (a bootstrap sample, may repeat).

    Returns a dict of node arrays plus ``leaf_pos``: for each leaf, the sample
    positions (indices into ``rows``) it holds, concatenated in node order via
    ``leaf_start``/``leaf_count``. Candidate values are scanned in (value, row,
    position) order; ``order`` (the compiled kernel's presort) is not needed here.
    """
    m = rows.shape[0]
    p = X.shape[1]
    ys = y[rows]
    samples = np.arange(m, dtype=np.int64)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    value, n_node, gain_out = [0.0], [0], [0.0]
    leaf_start, leaf_count = [-1], [0]
    leaf_pos = []
    n_leaf_pos = 0
    state = seed & _MASK64
    stack = [(0, 0, m, 0)]
    while stack:
        node, start, end, depth = stack.pop()
        pos = samples[start:end]
        n = end - start
        yn = ys[pos]
        total = np.cumsum(yn)[-1]
        mean = total / n
        value[node] = mean
        n_node[node] = n
        is_leaf = depth >= max_depth or n < 2 * min_leaf or yn.min() == yn.max()
        best_f = -1
        if not is_leaf:
            d = yn - mean
            sse = np.cumsum(d * d)[-1]
            eps = _SPLIT_REL_TOL * sse
            cands, state = _candidate_features(p, mtry, state)
            best = -np.inf
            best_thr = 0.0
            for f in cands:
                xv = X[rows[pos], f]
                srt = np.lexsort((rows[pos], xv))  # positions already increase
                xs = xv[srt]
                cs = np.cumsum(yn[srt])
                tot = cs[-1]
                nl = np.arange(1, n, dtype=np.float64)
                nr = n - nl
                sl = cs[:-1]
                sr = tot - sl
                g = sl * sl / nl + sr * sr / nr - tot * tot / n
                k = np.arange(1, n)
                valid = (xs[:-1] < xs[1:]) & (k >= min_leaf) & (n - k >= min_leaf)
                g = np.where(valid, g, -np.inf)
                i, best_new = _record_scan(g, best, eps)
                if i >= 0:
                    best = best_new
                    best_f = int(f)
                    best_thr = _midpoint(xs[i], xs[i + 1])
            if best_f < 0 or not best > eps:
                best_f = -1
        if best_f < 0:
            leaf_start[node] = n_leaf_pos
            leaf_count[node] = n
            leaf_pos.append(pos.copy())
            n_leaf_pos += n
            continue
        goes_left = X[rows[pos], best_f] <= best_thr
        lp = pos[goes_left]
        rp = pos[~goes_left]
        samples[start:start + lp.size] = lp
        samples[start + lp.size:end] = rp
        lid = len(feature)
        rid = lid + 1
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1),
                       (value, 0.0), (n_node, 0), (gain_out, 0.0),
                       (leaf_start, -1), (leaf_count, 0)):
            lst.append(v)
            lst.append(v)
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        gain_out[node] = best
        stack.append((rid, start + lp.size, end, depth + 1))
        stack.append((lid, start, start + lp.size, depth + 1))
    return {
        "feature": np.array(feature, dtype=np.int64),
        "threshold": np.array(threshold, dtype=np.float64),
        "left": np.array(left, dtype=np.int64),
        "right": np.array(right, dtype=np.int64),
        "value": np.array(value, dtype=np.float64),
        "n_node": np.array(n_node, dtype=np.int64),
        "gain": np.array(gain_out, dtype=np.float64),
        "leaf_start": np.array(leaf_start, dtype=np.int64),
        "leaf_count": np.array(leaf_count, dtype=np.int64),
        "leaf_pos": (np.concatenate(leaf_pos) if leaf_pos
                     else np.zeros(0, dtype=np.int64)).astype(np.int64),
    }


def apply_tree(feature, threshold, left, right, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        f = feature[node[active]]
        internal = f >= 0
        active = active[internal]
        if not active.size:
            break
        f = f[internal]
        cur = node[active]
        go_left = X[active, f] <= threshold[cur]
        node[active] = np.where(go_left, left[cur], right[cur])
    return node


def gbt_level_splits(X, order, node_of_row, g, h, n_nodes, lam, min_child_weight):
    """Exact greedy second-order split search for every open node of one level.

    ``order[:, f]`` is the stable argsort of ``X[:, f]``; rows with
    ``node_of_row < 0`` are ignored. Returns (feature, threshold, gain, G, H).
    """
    n, p = X.shape
    best_f = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    best_gain = np.zeros(n_nodes)
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    for k in range(n_nodes):
        mask = node_of_row == k
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        Gk = np.cumsum(g[idx])[-1]
        Hk = np.cumsum(h[idx])[-1]
        abs_g = np.cumsum(np.abs(g[idx]))[-1]
        G[k] = Gk
        H[k] = Hk
        denom = min_child_weight + lam
        eps = _SPLIT_REL_TOL * (abs_g * abs_g) / (denom if denom > 0 else 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            parent = Gk * Gk / (Hk + lam)
        best = -np.inf
        for f in range(p):
            of = order[:, f]
            rk = of[mask[of]]
            if rk.size < 2:
                continue
            xs = X[rk, f]
            cg = np.cumsum(g[rk])[:-1]
            ch = np.cumsum(h[rk])[:-1]
            gr = Gk - cg
            hr = Hk - ch
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = 0.5 * (cg * cg / (ch + lam) + gr * gr / (hr + lam) - parent)
            valid = (xs[:-1] < xs[1:]) & (ch >= min_child_weight) & (hr >= min_child_weight)
            gain = np.where(valid, gain, -np.inf)
            i, best_new = _record_scan(gain, best, eps)
            if i >= 0:
                best = best_new
                best_f[k] = f
                best_thr[k] = _midpoint(xs[i], xs[i + 1])
        if best_f[k] >= 0 and best > eps:
            best_gain[k] = best
        else:
            best_f[k] = -1
    return best_f, best_thr, best_gain, G, H


def _soft(u, lam):
    if u > lam:
        return u - lam
    if u < -lam:
        return u + lam
    return 0.0


def gram_coordinate_descent(G, c, beta, lam, tol, max_passes):
    """Covariance-mode lasso coordinate descent on centered data.

    ``G = X'X/n`` and ``c = X'r/n`` for the current residual ``r``; both
    ``c`` and ``beta`` are updated in place. Each coordinate update costs
    O(p) instead of O(n). Returns the number of passes.
    """
    p = G.shape[0]
    passes = 0

    def sweep(coords):
        dlx = 0.0
        for j in coords:
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            bj = beta[j]
            nb = _soft(c[j] + gjj * bj, lam) / gjj
            if nb != bj:
                d = nb - bj
                beta[j] = nb
                c[:] -= d * G[:, j]
                dlx = max(dlx, gjj * d * d)
        return dlx

    while passes < max_passes:
        dlx = sweep(range(p))
        passes += 1
        if dlx < tol:
            break
        while passes < max_passes:
            dlx = sweep(np.flatnonzero(beta))
            passes += 1
            if dlx < tol:
                break
    return passes


def forest_quantiles(leaf_ids, node_offset, leaf_start, leaf_count, leaf_rows,
                     y_train, probs):
    """Meinshausen weighted quantiles.

    ``leaf_ids[i, t]`` is the leaf (tree-local node id) reached by test row i in
    tree t; ``node_offset[t]`` maps tree-local ids into the flattened
    ``leaf_start``/``leaf_count`` arrays, which index ``leaf_rows``.
    """
    n_test, n_trees = leaf_ids.shape
    out = np.empty((n_test, probs.shape[0]))
    for i in range(n_test):
        gnode = node_offset + leaf_ids[i]
        starts = leaf_start[gnode]
        counts = leaf_count[gnode]
        rows = np.concatenate([leaf_rows[s:s + c] for s, c in zip(starts, counts)])
        wts = np.repeat(1.0 / (n_trees * counts.astype(np.float64)), counts)
        yv = y_train[rows]
        o = np.lexsort((rows, yv))
        cw = np.cumsum(wts[o])
        ys = yv[o]
        for q in range(probs.shape[0]):
            k = int(np.searchsorted(cw, probs[q] - _CDF_TOL, side="left"))
            if k >= ys.size:
                k = ys.size - 1
            out[i, q] = ys[k]
    return out
