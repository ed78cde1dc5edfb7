"""Numba kernels for growing bootstrap regression trees and querying them.

A forest is stored as padded 2-D arrays indexed ``[tree, node]``.  Node 0 is
the root; ``feature == -1`` marks a leaf.  Rows go left when
``x[feature] <= threshold``.  For every tree the training rows (in-bag and
out-of-bag alike) are bucketed by the leaf they fall in: ``member[b]`` lists
row indices grouped by leaf and ``leaf_start[b, node]`` indexes the bucket.
"""

import numpy as np
from numba import njit

from .interval import shortest_window_length

RULE_LS = 0
RULE_L1 = 1
RULE_SPI = 2


@njit(cache=True)
def _next_u64(state):
    # splitmix64
    state[0] += np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _randbelow(state, n):
    return np.int64(_next_u64(state) % np.uint64(n))


def node_capacity(n, min_node):
    # every leaf holds >= min_node of the n bootstrap draws
    return 2 * (n // min_node) + 1


_TIE_RTOL = 1e-11


# ---------------------------------------------------------------------------
# split criteria scans; each returns (criterion, left size), left size 0 = none
# ---------------------------------------------------------------------------


@njit(cache=True)
def _scan_ls(xs, ys, order, m, min_node, tol):
    t1 = 0.0
    t2 = 0.0
    for q in range(m):
        t1 += ys[q]
        t2 += ys[q] * ys[q]
    s1 = 0.0
    s2 = 0.0
    best = np.inf
    pos = 0
    for j in range(1, m):
        v = ys[order[j - 1]]
        s1 += v
        s2 += v * v
        if j < min_node:
            continue
        if m - j < min_node:
            break
        if xs[order[j - 1]] == xs[order[j]]:
            continue
        r1 = t1 - s1
        crit = (s2 - s1 * s1 / j) + ((t2 - s2) - r1 * r1 / (m - j))
        if crit < best - tol:
            best = crit
            pos = j
    return best, pos


@njit(cache=True)
def _bit_add(cnt, sm, i, dc, dv, m):
    while i <= m:
        cnt[i] += dc
        sm[i] += dv
        i += i & (-i)


@njit(cache=True)
def _bit_prefix(sm, i):
    acc = 0.0
    while i > 0:
        acc += sm[i]
        i -= i & (-i)
    return acc


@njit(cache=True)
def _bit_kth(cnt, k, m, top):
    # 1-based slot holding the k-th present element
    pos = 0
    rem = k
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= m and cnt[nxt] < rem:
            pos = nxt
            rem -= cnt[nxt]
        step >>= 1
    return pos + 1


@njit(cache=True)
def _sad(cnt, sm, c, total, ysorted, m, top):
    # sum of absolute deviations from the median of the c present elements
    if c <= 1:
        return 0.0
    lo = c // 2
    sum_lower = _bit_prefix(sm, _bit_kth(cnt, lo, m, top))
    if c % 2 == 0:
        return total - 2.0 * sum_lower
    med = ysorted[_bit_kth(cnt, lo + 1, m, top) - 1]
    return total - 2.0 * sum_lower - med


@njit(cache=True)
def _scan_l1(xs, order, m, min_node, yrank, ysorted, cl, sl, cr, sr, tol):
    top = 1
    while top * 2 <= m:
        top *= 2
    for i in range(m + 1):
        cl[i] = 0
        sl[i] = 0.0
        cr[i] = 0
        sr[i] = 0.0
    total_r = 0.0
    for r in range(m):
        _bit_add(cr, sr, r + 1, 1, ysorted[r], m)
        total_r += ysorted[r]
    total_l = 0.0
    best = np.inf
    pos = 0
    for j in range(1, m):
        r = yrank[order[j - 1]]
        v = ysorted[r]
        _bit_add(cl, sl, r + 1, 1, v, m)
        _bit_add(cr, sr, r + 1, -1, -v, m)
        total_l += v
        total_r -= v
        if j < min_node:
            continue
        if m - j < min_node:
            break
        if xs[order[j - 1]] == xs[order[j]]:
            continue
        crit = _sad(cl, sl, j, total_l, ysorted, m, top) + _sad(cr, sr, m - j, total_r, ysorted, m, top)
        if crit < best - tol:
            best = crit
            pos = j
    return best, pos


@njit(cache=True)
def _scan_spi(xs, order, m, min_node, alpha, yrank, ysorted, inleft, buf, tol):
    for r in range(m):
        inleft[r] = False
    best = np.inf
    pos = 0
    for j in range(1, m):
        inleft[yrank[order[j - 1]]] = True
        if j < min_node:
            continue
        if m - j < min_node:
            break
        if xs[order[j - 1]] == xs[order[j]]:
            continue
        a = 0
        b = 0
        for r in range(m):
            if inleft[r]:
                buf[a] = ysorted[r]
                a += 1
        crit = shortest_window_length(buf, a, alpha)
        for r in range(m):
            if not inleft[r]:
                buf[b] = ysorted[r]
                b += 1
        crit += shortest_window_length(buf, b, alpha)
        if crit < best - tol:
            best = crit
            pos = j
    return best, pos


# ---------------------------------------------------------------------------
# tree growing
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def grow_tree(X, y, seed, mtry, min_node, rule, split_alpha,
              feature, threshold, left, right, value, inbag, leaf_of, member, leaf_start):
    """Grow one tree on a bootstrap sample; fills the per-tree output rows.

    Returns the number of nodes.
    """
    n, p = X.shape
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    for i in range(n):
        inbag[i] = 0
    for j in range(n):
        inbag[_randbelow(state, n)] += 1
    samp = np.empty(n, np.int64)
    j = 0
    for i in range(n):
        for _ in range(inbag[i]):
            samp[j] = i
            j += 1

    cap = feature.shape[0]
    xs = np.empty(n)
    ys = np.empty(n)
    ysorted = np.empty(n)
    yrank = np.empty(n, np.int64)
    tmp = np.empty(n, np.int64)
    feats = np.empty(p, np.int64)
    cl = np.zeros(n + 1, np.int64)
    cr = np.zeros(n + 1, np.int64)
    sl = np.zeros(n + 1)
    sr = np.zeros(n + 1)
    inleft = np.zeros(n, np.bool_)
    buf = np.empty(n)

    st_node = np.empty(cap, np.int64)
    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        nid = st_node[top]
        s = st_s[top]
        e = st_e[top]
        m = e - s

        mu = 0.0
        for q in range(m):
            ys[q] = y[samp[s + q]]
            mu += ys[q]
        mu /= m
        value[nid] = mu

        pure = True
        for q in range(1, m):
            if ys[q] != ys[0]:
                pure = False
                break

        best_f = -1
        best_t = 0.0
        if m >= 2 * min_node and not pure:
            big = 0.0
            for q in range(m):
                ys[q] -= mu
                big = max(big, abs(ys[q]))
            # candidates closer than rounding noise count as ties (first one wins)
            tol = _TIE_RTOL * m * (big * big if rule == RULE_LS else big)
            if rule != RULE_LS:
                yo = np.argsort(ys[:m], kind="mergesort")
                for r in range(m):
                    yrank[yo[r]] = r
                    ysorted[r] = ys[yo[r]]
            for q in range(p):
                feats[q] = q
            best = np.inf
            tried = 0
            k = 0
            while k < p and tried < mtry:
                jj = k + _randbelow(state, p - k)
                f = feats[jj]
                feats[jj] = feats[k]
                feats[k] = f
                k += 1
                for q in range(m):
                    xs[q] = X[samp[s + q], f]
                order = np.argsort(xs[:m], kind="mergesort")
                if xs[order[0]] == xs[order[m - 1]]:
                    continue
                tried += 1
                if rule == RULE_LS:
                    crit, pos = _scan_ls(xs, ys, order, m, min_node, tol)
                elif rule == RULE_L1:
                    crit, pos = _scan_l1(xs, order, m, min_node, yrank, ysorted, cl, sl, cr, sr, tol)
                else:
                    crit, pos = _scan_spi(xs, order, m, min_node, split_alpha, yrank, ysorted, inleft, buf, tol)
                if pos > 0 and crit < best - tol:
                    best = crit
                    best_f = f
                    a = xs[order[pos - 1]]
                    b = xs[order[pos]]
                    best_t = a + 0.5 * (b - a)
                    if best_t >= b:
                        best_t = a

        if best_f < 0:
            feature[nid] = -1
            threshold[nid] = 0.0
            left[nid] = -1
            right[nid] = -1
            for q in range(s, e):
                leaf_of[samp[q]] = nid
            continue

        # stable partition of the node's bootstrap rows
        nl = 0
        nr = 0
        for q in range(s, e):
            i = samp[q]
            if X[i, best_f] <= best_t:
                samp[s + nl] = i
                nl += 1
            else:
                tmp[nr] = i
                nr += 1
        for q in range(nr):
            samp[s + nl + q] = tmp[q]

        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        feature[nid] = best_f
        threshold[nid] = best_t
        left[nid] = lid
        right[nid] = rid
        st_node[top] = rid
        st_s[top] = s + nl
        st_e[top] = e
        top += 1
        st_node[top] = lid
        st_s[top] = s
        st_e[top] = s + nl
        top += 1

    for i in range(n):
        if inbag[i] == 0:
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            leaf_of[i] = node

    for q in range(n_nodes + 1):
        leaf_start[q] = 0
    for i in range(n):
        leaf_start[leaf_of[i] + 1] += 1
    for q in range(n_nodes):
        leaf_start[q + 1] += leaf_start[q]
    for q in range(n_nodes + 1, leaf_start.shape[0]):
        leaf_start[q] = leaf_start[n_nodes]
    fill = leaf_start[:n_nodes].copy()
    for i in range(n):
        node = leaf_of[i]
        member[fill[node]] = i
        fill[node] += 1
    for q in range(n_nodes, cap):
        feature[q] = -1
        left[q] = -1
        right[q] = -1
        threshold[q] = 0.0
        value[q] = 0.0
    return n_nodes


@njit(cache=True, nogil=True)
def grow_trees(X, y, seeds, b0, b1, mtry, min_node, rule, split_alpha,
               feature, threshold, left, right, value, inbag, leaf_of, member, leaf_start, n_nodes):
    for b in range(b0, b1):
        n_nodes[b] = grow_tree(X, y, seeds[b], mtry, min_node, rule, split_alpha,
                               feature[b], threshold[b], left[b], right[b], value[b],
                               inbag[b], leaf_of[b], member[b], leaf_start[b])


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def apply_trees(feature, threshold, left, right, X):
    """Leaf index of every query row in every tree, shape (nq, B)."""
    nq = X.shape[0]
    B = feature.shape[0]
    out = np.empty((nq, B), np.int32)
    for q in range(nq):
        for b in range(B):
            node = 0
            while feature[b, node] >= 0:
                if X[q, feature[b, node]] <= threshold[b, node]:
                    node = left[b, node]
                else:
                    node = right[b, node]
            out[q, b] = node
    return out


@njit(cache=True)
def predict_from_leaves(value, leaves):
    nq, B = leaves.shape
    out = np.empty(nq)
    for q in range(nq):
        acc = 0.0
        for b in range(B):
            acc += value[b, leaves[q, b]]
        out[q] = acc / B
    return out


@njit(cache=True)
def oob_predict(value, leaf_of, inbag):
    B, n = inbag.shape
    acc = np.zeros(n)
    cnt = np.zeros(n, np.int64)
    for b in range(B):
        for i in range(n):
            if inbag[b, i] == 0:
                acc[i] += value[b, leaf_of[b, i]]
                cnt[i] += 1
    pred = np.full(n, np.nan)
    for i in range(n):
        if cnt[i] > 0:
            pred[i] = acc[i] / cnt[i]
    return pred, cnt > 0


@njit(cache=True)
def _accumulate(w, b, leaf, member, leaf_start, inbag, oob_flavor, usable):
    for t in range(leaf_start[b, leaf], leaf_start[b, leaf + 1]):
        i = member[b, t]
        if not usable[i]:
            continue
        c = inbag[b, i]
        if oob_flavor:
            if c == 0:
                w[i] += 1
        else:
            w[i] += c


@njit(cache=True, nogil=True)
def gather_samples(leaves, tree_use, member, leaf_start, inbag, oob_flavor, values, order, usable):
    """Compressed bag-of-observations samples, one per query row.

    ``leaves[q, b]`` is the query's leaf in tree b; only trees with
    ``tree_use[q, b]`` contribute.  The sample for query q lists the
    ``values`` of its bag members, merged to distinct sorted values with
    multiplicities.  ``order`` sorts ``values`` ascending.
    """
    nq, B = leaves.shape
    n = values.shape[0]
    w = np.zeros(n, np.int64)
    cap = max(16, nq * 8)
    fv = np.empty(cap)
    fw = np.empty(cap, np.int64)
    ptr = np.zeros(nq + 1, np.int64)
    size = np.zeros(nq, np.int64)
    pos = 0
    for q in range(nq):
        for b in range(B):
            if tree_use[q, b]:
                _accumulate(w, b, leaves[q, b], member, leaf_start, inbag, oob_flavor, usable)
        if pos + n > cap:
            while pos + n > cap:
                cap *= 2
            nfv = np.empty(cap)
            nfw = np.empty(cap, np.int64)
            nfv[:pos] = fv[:pos]
            nfw[:pos] = fw[:pos]
            fv = nfv
            fw = nfw
        start = pos
        tot = 0
        for t in range(n):
            r = order[t]
            c = w[r]
            if c == 0:
                continue
            w[r] = 0
            tot += c
            v = values[r]
            if pos > start and fv[pos - 1] == v:
                fw[pos - 1] += c
            else:
                fv[pos] = v
                fw[pos] = c
                pos += 1
        ptr[q + 1] = pos
        size[q] = tot
    return fv[:pos].copy(), fw[:pos].copy(), ptr, size


@njit(cache=True)
def bop_indices(leaves_row, tree_use_row, member, leaf_start, inbag, oob_flavor):
    """Expanded bag of observations (row indices with multiplicity) for one query."""
    B = leaves_row.shape[0]
    total = 0
    for b in range(B):
        if not tree_use_row[b]:
            continue
        leaf = leaves_row[b]
        for t in range(leaf_start[b, leaf], leaf_start[b, leaf + 1]):
            c = inbag[b, member[b, t]]
            if oob_flavor:
                total += 1 if c == 0 else 0
            else:
                total += c
    out = np.empty(total, np.int64)
    pos = 0
    for b in range(B):
        if not tree_use_row[b]:
            continue
        leaf = leaves_row[b]
        for t in range(leaf_start[b, leaf], leaf_start[b, leaf + 1]):
            i = member[b, t]
            c = inbag[b, i]
            if oob_flavor:
                if c == 0:
                    out[pos] = i
                    pos += 1
            else:
                for _ in range(c):
                    out[pos] = i
                    pos += 1
    return out
