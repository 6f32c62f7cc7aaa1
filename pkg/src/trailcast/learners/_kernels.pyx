# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Mirrors ``_pykernels`` operation for operation."""
import numpy as np

from libc.math cimport INFINITY, fabs
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc, qsort

cdef double SPLIT_REL_TOL = 1e-10
cdef double CDF_TOL = 1e-12


ctypedef struct ValPos:
    double v
    int64_t pos


ctypedef struct Entry:
    double v
    int64_t row
    int64_t idx
    double w


cdef int _cmp_entry(const void* a, const void* b) noexcept nogil:
    cdef const Entry* x = <const Entry*>a
    cdef const Entry* y = <const Entry*>b
    if x.v < y.v:
        return -1
    if x.v > y.v:
        return 1
    if x.row < y.row:
        return -1
    if x.row > y.row:
        return 1
    if x.idx < y.idx:
        return -1
    if x.idx > y.idx:
        return 1
    return 0


cdef inline uint64_t _splitmix64(uint64_t* state) noexcept nogil:
    state[0] = state[0] + 0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _midpoint(double lo, double hi) noexcept nogil:
    cdef double thr = (lo + hi) / 2.0
    if thr >= hi:
        thr = lo
    return thr


def build_cart_tree(const double[::1, :] X, const double[::1] y, const int64_t[::1] rows,
                    int64_t max_depth, int64_t min_leaf, int64_t mtry, uint64_t seed,
                    const int64_t[::1, :] order):
    """``order`` is the stable per-column argsort of X; every feature keeps its
    node segment sorted by (value, row, position) and is partitioned stably at
    each split, so no per-node sorting is needed."""
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t n_all = X.shape[0]
    cdef Py_ssize_t max_nodes = 2 * m + 1
    feature_a = np.full(max_nodes, -1, dtype=np.int64)
    threshold_a = np.zeros(max_nodes, dtype=np.float64)
    left_a = np.full(max_nodes, -1, dtype=np.int64)
    right_a = np.full(max_nodes, -1, dtype=np.int64)
    value_a = np.zeros(max_nodes, dtype=np.float64)
    n_node_a = np.zeros(max_nodes, dtype=np.int64)
    gain_a = np.zeros(max_nodes, dtype=np.float64)
    leaf_start_a = np.full(max_nodes, -1, dtype=np.int64)
    leaf_count_a = np.zeros(max_nodes, dtype=np.int64)
    leaf_pos_a = np.zeros(m, dtype=np.int64)
    samples_a = np.arange(m, dtype=np.int64)
    tmp_a = np.empty(m, dtype=np.int64)
    cs_a = np.empty(m, dtype=np.float64)
    perm_a = np.empty(p, dtype=np.int64)
    cands_a = np.empty(p, dtype=np.int64)
    st_a = np.empty((max_nodes, 4), dtype=np.int64)

    cdef int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef double[::1] value = value_a
    cdef int64_t[::1] n_node = n_node_a
    cdef double[::1] gain = gain_a
    cdef int64_t[::1] leaf_start = leaf_start_a
    cdef int64_t[::1] leaf_count = leaf_count_a
    cdef int64_t[::1] leaf_pos = leaf_pos_a
    cdef int64_t[::1] samples = samples_a
    cdef int64_t[::1] tmp = tmp_a
    cdef double[::1] cs = cs_a
    cdef int64_t[::1] perm = perm_a
    cdef int64_t[::1] cands = cands_a
    cdef int64_t[:, ::1] st = st_a

    cdef ValPos* buf = <ValPos*>malloc((m if m > 0 else 1) * sizeof(ValPos))
    cdef int64_t* sidx = <int64_t*>malloc((m * p if m * p > 0 else 1) * sizeof(int64_t))
    cdef int64_t* offs = <int64_t*>malloc((n_all + 1) * sizeof(int64_t))
    cdef int64_t* bypos = <int64_t*>malloc((m if m > 0 else 1) * sizeof(int64_t))
    cdef char* mark = <char*>malloc((m if m > 0 else 1) * sizeof(char))
    cdef int64_t* cursor = <int64_t*>malloc((n_all if n_all > 0 else 1) * sizeof(int64_t))
    if (buf == NULL or sidx == NULL or offs == NULL or bypos == NULL or mark == NULL
            or cursor == NULL):
        free(cursor)
        free(buf)
        free(sidx)
        free(offs)
        free(bypos)
        free(mark)
        raise MemoryError()

    cdef uint64_t state = seed
    cdef Py_ssize_t sp = 0, n_nodes = 1, n_leaf_pos = 0
    cdef Py_ssize_t node, start, end, depth, n, i, j, k, c, n_cand, f, pos, nl_cnt, nr_cnt
    cdef int64_t best_f, tj
    cdef double total, mean, ymin, ymax, v, d, sse, eps, best, best_thr, acc, tot
    cdef double nl, nr, sl, sr, g, thr
    cdef bint is_leaf
    cdef uint64_t z

    cdef int64_t r, q, base
    try:
        with nogil:
            # bootstrap positions grouped by original row, increasing position
            for i in range(n_all + 1):
                offs[i] = 0
            for i in range(m):
                offs[rows[i] + 1] += 1
            for i in range(n_all):
                offs[i + 1] += offs[i]
            for i in range(n_all):
                cursor[i] = offs[i]
            for i in range(m):
                r = rows[i]
                bypos[cursor[r]] = i
                cursor[r] += 1
            for f in range(p):
                base = f * m
                k = 0
                for j in range(n_all):
                    r = order[j, f]
                    for q in range(offs[r], offs[r + 1]):
                        sidx[base + k] = bypos[q]
                        k += 1
            st[0, 0] = 0
            st[0, 1] = 0
            st[0, 2] = m
            st[0, 3] = 0
            sp = 1
            while sp > 0:
                sp -= 1
                node = st[sp, 0]
                start = st[sp, 1]
                end = st[sp, 2]
                depth = st[sp, 3]
                n = end - start
                total = 0.0
                v = y[rows[samples[start]]]
                ymin = v
                ymax = v
                for i in range(start, end):
                    v = y[rows[samples[i]]]
                    total = total + v
                    if v < ymin:
                        ymin = v
                    if v > ymax:
                        ymax = v
                mean = total / n
                value[node] = mean
                n_node[node] = n
                is_leaf = depth >= max_depth or n < 2 * min_leaf or ymin == ymax
                best_f = -1
                best = -INFINITY
                best_thr = 0.0
                if not is_leaf:
                    sse = 0.0
                    for i in range(start, end):
                        d = y[rows[samples[i]]] - mean
                        sse = sse + d * d
                    eps = SPLIT_REL_TOL * sse
                    if mtry >= p:
                        n_cand = p
                        for j in range(p):
                            cands[j] = j
                    else:
                        n_cand = mtry
                        for j in range(p):
                            perm[j] = j
                        for k in range(mtry):
                            z = _splitmix64(&state)
                            j = k + <Py_ssize_t>(z % <uint64_t>(p - k))
                            tj = perm[k]
                            perm[k] = perm[j]
                            perm[j] = tj
                        for k in range(mtry):
                            cands[k] = perm[k]
                        # insertion sort of the candidate list
                        for k in range(1, n_cand):
                            tj = cands[k]
                            j = k - 1
                            while j >= 0 and cands[j] > tj:
                                cands[j + 1] = cands[j]
                                j -= 1
                            cands[j + 1] = tj
                    for c in range(n_cand):
                        f = cands[c]
                        base = f * m + start
                        for i in range(n):
                            pos = sidx[base + i]
                            buf[i].v = X[rows[pos], f]
                            buf[i].pos = pos
                        acc = 0.0
                        for i in range(n):
                            acc = acc + y[rows[buf[i].pos]]
                            cs[i] = acc
                        tot = cs[n - 1]
                        for i in range(n - 1):
                            k = i + 1
                            if not (buf[i].v < buf[i + 1].v):
                                continue
                            if k < min_leaf or n - k < min_leaf:
                                continue
                            nl = <double>k
                            nr = <double>n - nl
                            sl = cs[i]
                            sr = tot - sl
                            g = sl * sl / nl + sr * sr / nr - tot * tot / <double>n
                            if g > best + eps:
                                best = g
                                best_f = f
                                best_thr = _midpoint(buf[i].v, buf[i + 1].v)
                    if best_f < 0 or not (best > eps):
                        best_f = -1
                if best_f < 0:
                    leaf_start[node] = n_leaf_pos
                    leaf_count[node] = n
                    for i in range(start, end):
                        leaf_pos[n_leaf_pos] = samples[i]
                        n_leaf_pos += 1
                    continue
                nl_cnt = 0
                nr_cnt = 0
                for i in range(start, end):
                    pos = samples[i]
                    mark[pos] = X[rows[pos], best_f] <= best_thr
                    if mark[pos]:
                        samples[start + nl_cnt] = pos
                        nl_cnt += 1
                    else:
                        tmp[nr_cnt] = pos
                        nr_cnt += 1
                for i in range(nr_cnt):
                    samples[start + nl_cnt + i] = tmp[i]
                for f in range(p):
                    base = f * m
                    k = 0
                    j = 0
                    for i in range(start, end):
                        pos = sidx[base + i]
                        if mark[pos]:
                            sidx[base + start + k] = pos
                            k += 1
                        else:
                            tmp[j] = pos
                            j += 1
                    for i in range(j):
                        sidx[base + start + k + i] = tmp[i]
                feature[node] = best_f
                threshold[node] = best_thr
                left[node] = n_nodes
                right[node] = n_nodes + 1
                gain[node] = best
                st[sp, 0] = n_nodes + 1
                st[sp, 1] = start + nl_cnt
                st[sp, 2] = end
                st[sp, 3] = depth + 1
                sp += 1
                st[sp, 0] = n_nodes
                st[sp, 1] = start
                st[sp, 2] = start + nl_cnt
                st[sp, 3] = depth + 1
                sp += 1
                n_nodes += 2
    finally:
        free(buf)
        free(sidx)
        free(offs)
        free(bypos)
        free(mark)
        free(cursor)

    return {
        "feature": feature_a[:n_nodes].copy(),
        "threshold": threshold_a[:n_nodes].copy(),
        "left": left_a[:n_nodes].copy(),
        "right": right_a[:n_nodes].copy(),
        "value": value_a[:n_nodes].copy(),
        "n_node": n_node_a[:n_nodes].copy(),
        "gain": gain_a[:n_nodes].copy(),
        "leaf_start": leaf_start_a[:n_nodes].copy(),
        "leaf_count": leaf_count_a[:n_nodes].copy(),
        "leaf_pos": leaf_pos_a[:n_leaf_pos].copy(),
    }


def apply_tree(const int64_t[::1] feature, const double[::1] threshold,
               const int64_t[::1] left, const int64_t[::1] right, const double[:, :] X):
    cdef Py_ssize_t n = X.shape[0], i
    cdef int64_t node, f
    out_a = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] out = out_a
    with nogil:
        for i in range(n):
            node = 0
            f = feature[0]
            while f >= 0:
                if X[i, f] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                f = feature[node]
            out[i] = node
    return out_a


def gbt_level_splits(const double[::1, :] X, const int64_t[::1, :] order,
                     const int64_t[::1] node_of_row, const double[::1] g, const double[::1] h,
                     int64_t n_nodes, double lam, double min_child_weight):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    best_f_a = np.full(n_nodes, -1, dtype=np.int64)
    best_thr_a = np.zeros(n_nodes)
    best_gain_a = np.zeros(n_nodes)
    G_a = np.zeros(n_nodes)
    H_a = np.zeros(n_nodes)
    absg_a = np.zeros(n_nodes)
    eps_a = np.zeros(n_nodes)
    parent_a = np.zeros(n_nodes)
    best_a = np.full(n_nodes, -np.inf)
    gl_a = np.zeros(n_nodes)
    hl_a = np.zeros(n_nodes)
    last_a = np.zeros(n_nodes)
    have_a = np.zeros(n_nodes, dtype=np.int64)
    cdef int64_t[::1] best_f = best_f_a
    cdef double[::1] best_thr = best_thr_a
    cdef double[::1] best_gain = best_gain_a
    cdef double[::1] G = G_a
    cdef double[::1] H = H_a
    cdef double[::1] absg = absg_a
    cdef double[::1] eps = eps_a
    cdef double[::1] parent = parent_a
    cdef double[::1] best = best_a
    cdef double[::1] GL = gl_a
    cdef double[::1] HL = hl_a
    cdef double[::1] last = last_a
    cdef int64_t[::1] have = have_a
    cdef Py_ssize_t r, f, idx
    cdef int64_t k
    cdef double denom = min_child_weight + lam
    cdef double x, gr, hr, gain
    if not denom > 0:
        denom = 1.0
    with nogil:
        for r in range(n):
            k = node_of_row[r]
            if k >= 0:
                G[k] = G[k] + g[r]
                H[k] = H[k] + h[r]
                absg[k] = absg[k] + fabs(g[r])
        for k in range(n_nodes):
            eps[k] = SPLIT_REL_TOL * (absg[k] * absg[k]) / denom
            parent[k] = G[k] * G[k] / (H[k] + lam)
        for f in range(p):
            for k in range(n_nodes):
                GL[k] = 0.0
                HL[k] = 0.0
                have[k] = 0
            for idx in range(n):
                r = order[idx, f]
                k = node_of_row[r]
                if k < 0:
                    continue
                x = X[r, f]
                if have[k] and x > last[k]:
                    gr = G[k] - GL[k]
                    hr = H[k] - HL[k]
                    if HL[k] >= min_child_weight and hr >= min_child_weight:
                        gain = 0.5 * (GL[k] * GL[k] / (HL[k] + lam) + gr * gr / (hr + lam) - parent[k])
                        if gain > best[k] + eps[k]:
                            best[k] = gain
                            best_f[k] = f
                            best_thr[k] = _midpoint(last[k], x)
                GL[k] = GL[k] + g[r]
                HL[k] = HL[k] + h[r]
                last[k] = x
                have[k] = 1
        for k in range(n_nodes):
            if best_f[k] >= 0 and best[k] > eps[k]:
                best_gain[k] = best[k]
            else:
                best_f[k] = -1
    return best_f_a, best_thr_a, best_gain_a, G_a, H_a


cdef inline double _soft(double u, double lam) noexcept nogil:
    if u > lam:
        return u - lam
    if u < -lam:
        return u + lam
    return 0.0


cdef double _gram_sweep(const double[:, ::1] G, double[::1] c, double[::1] beta, double lam,
                        const int64_t[::1] coords, Py_ssize_t n_coords) noexcept nogil:
    cdef Py_ssize_t a, j, k, p = G.shape[0]
    cdef double gjj, bj, u, nb, d, dlx = 0.0
    for a in range(n_coords):
        j = coords[a]
        gjj = G[j, j]
        if gjj <= 0.0:
            continue
        bj = beta[j]
        u = c[j] + gjj * bj
        if u > lam:
            nb = (u - lam) / gjj
        elif u < -lam:
            nb = (u + lam) / gjj
        else:
            nb = 0.0
        if nb != bj:
            d = nb - bj
            beta[j] = nb
            for k in range(p):
                c[k] = c[k] - d * G[k, j]
            if gjj * d * d > dlx:
                dlx = gjj * d * d
    return dlx


def gram_coordinate_descent(const double[:, ::1] G, double[::1] c, double[::1] beta,
                            double lam, double tol, int64_t max_passes):
    cdef Py_ssize_t p = G.shape[0], j, n_act
    all_a = np.arange(p, dtype=np.int64)
    act_a = np.empty(p, dtype=np.int64)
    cdef int64_t[::1] all_coords = all_a
    cdef int64_t[::1] active = act_a
    cdef double dlx
    cdef int64_t passes = 0
    with nogil:
        while passes < max_passes:
            dlx = _gram_sweep(G, c, beta, lam, all_coords, p)
            passes += 1
            if dlx < tol:
                break
            while passes < max_passes:
                n_act = 0
                for j in range(p):
                    if beta[j] != 0.0:
                        active[n_act] = j
                        n_act += 1
                dlx = _gram_sweep(G, c, beta, lam, active, n_act)
                passes += 1
                if dlx < tol:
                    break
    return passes


def forest_quantiles(const int64_t[:, ::1] leaf_ids, const int64_t[::1] node_offset,
                     const int64_t[::1] leaf_start, const int64_t[::1] leaf_count,
                     const int64_t[::1] leaf_rows, const double[::1] y_train,
                     const double[::1] probs):
    cdef Py_ssize_t n_test = leaf_ids.shape[0], n_trees = leaf_ids.shape[1]
    cdef Py_ssize_t n_probs = probs.shape[0]
    out_a = np.empty((n_test, n_probs))
    cdef double[:, ::1] out = out_a
    cdef Py_ssize_t i, t, e, s, c, q, k, max_e = 0, n_e
    cdef int64_t gnode
    cdef double acc, target, wt
    for i in range(n_test):
        n_e = 0
        for t in range(n_trees):
            n_e += leaf_count[node_offset[t] + leaf_ids[i, t]]
        if n_e > max_e:
            max_e = n_e
    cdef Entry* buf = <Entry*>malloc((max_e if max_e > 0 else 1) * sizeof(Entry))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n_test):
                n_e = 0
                for t in range(n_trees):
                    gnode = node_offset[t] + leaf_ids[i, t]
                    s = leaf_start[gnode]
                    c = leaf_count[gnode]
                    wt = 1.0 / (<double>n_trees * <double>c)
                    for e in range(c):
                        buf[n_e].v = y_train[leaf_rows[s + e]]
                        buf[n_e].row = leaf_rows[s + e]
                        buf[n_e].idx = n_e
                        buf[n_e].w = wt
                        n_e += 1
                qsort(buf, n_e, sizeof(Entry), _cmp_entry)
                for q in range(n_probs):
                    target = probs[q] - CDF_TOL
                    acc = 0.0
                    k = n_e - 1
                    for e in range(n_e):
                        acc = acc + buf[e].w
                        if acc >= target:
                            k = e
                            break
                    out[i, q] = buf[k].v
    finally:
        free(buf)
    return out_a
