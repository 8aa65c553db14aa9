# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled graph-search kernels.

Mirrors _graph_py exactly: same array layout, same (distance, id)
lexicographic ordering, same traversal. Kept in lockstep with the fallback;
any change here must land there too.
"""

import numpy as np

BACKEND = "cython"

METRIC_L2 = 0
METRIC_COSINE = 1

ctypedef unsigned long long u64
ctypedef long long i64

cdef enum:
    _L2 = 0


cdef inline bint _lt(double d1, u64 i1, double d2, u64 i2) noexcept nogil:
    if d1 != d2:
        return d1 < d2
    return i1 < i2


cdef inline double _dist_row(const float[:, ::1] vectors, const double[:] norms,
                             int metric, const float[::1] q, double qnorm,
                             i64 row) noexcept nogil:
    cdef Py_ssize_t d = vectors.shape[1]
    cdef double acc = 0.0
    cdef double diff
    cdef Py_ssize_t i
    if metric == _L2:
        for i in range(d):
            diff = (<double> q[i]) - (<double> vectors[row, i])
            acc += diff * diff
        return acc
    for i in range(d):
        acc += (<double> q[i]) * (<double> vectors[row, i])
    acc = 1.0 - acc / (qnorm * norms[row])
    if acc < 0.0:
        return 0.0
    if acc > 2.0:
        return 2.0
    return acc


# binary heap over parallel (dist, id, row) arrays; min-heap when maxheap=0

cdef inline bint _before(double d1, u64 i1, double d2, u64 i2, bint maxheap) noexcept nogil:
    if maxheap:
        return _lt(d2, i2, d1, i1)
    return _lt(d1, i1, d2, i2)


cdef inline void _heap_push(double[::1] hd, u64[::1] hi, i64[::1] hr, Py_ssize_t* n,
                            double d, u64 idv, i64 row, bint maxheap) noexcept nogil:
    cdef Py_ssize_t j = n[0]
    cdef Py_ssize_t p
    cdef double td
    cdef u64 ti
    cdef i64 tr
    hd[j] = d
    hi[j] = idv
    hr[j] = row
    n[0] = j + 1
    while j > 0:
        p = (j - 1) >> 1
        if _before(hd[j], hi[j], hd[p], hi[p], maxheap):
            td = hd[j]; hd[j] = hd[p]; hd[p] = td
            ti = hi[j]; hi[j] = hi[p]; hi[p] = ti
            tr = hr[j]; hr[j] = hr[p]; hr[p] = tr
            j = p
        else:
            break


cdef inline void _heap_pop(double[::1] hd, u64[::1] hi, i64[::1] hr, Py_ssize_t* n,
                           bint maxheap) noexcept nogil:
    cdef Py_ssize_t last = n[0] - 1
    cdef Py_ssize_t j = 0
    cdef Py_ssize_t l, r, best
    cdef double td
    cdef u64 ti
    cdef i64 tr
    hd[0] = hd[last]
    hi[0] = hi[last]
    hr[0] = hr[last]
    n[0] = last
    while True:
        l = 2 * j + 1
        if l >= last:
            break
        r = l + 1
        best = l
        if r < last and _before(hd[r], hi[r], hd[l], hi[l], maxheap):
            best = r
        if _before(hd[best], hi[best], hd[j], hi[j], maxheap):
            td = hd[j]; hd[j] = hd[best]; hd[best] = td
            ti = hi[j]; hi[j] = hi[best]; hi[best] = ti
            tr = hr[j]; hr[j] = hr[best]; hr[best] = tr
            j = best
        else:
            break


def search_layer(const float[:, ::1] vectors, const double[:] norms, const u64[:] ids,
                 const int[:, ::1] adj0, const int[:] cnt0,
                 const int[:, ::1] adj_up, const int[:] cnt_up, const i64[:] up_off,
                 int metric, const float[::1] q, double qnorm,
                 i64 ep_row, Py_ssize_t ef, int layer, Py_ssize_t n_rows):
    """Best-first expansion; see _graph_py.search_layer for the contract."""
    visited_arr = np.zeros(n_rows, dtype=np.uint8)
    cand_d_arr = np.empty(n_rows + 1, dtype=np.float64)
    cand_i_arr = np.empty(n_rows + 1, dtype=np.uint64)
    cand_r_arr = np.empty(n_rows + 1, dtype=np.int64)
    res_d_arr = np.empty(ef + 1, dtype=np.float64)
    res_i_arr = np.empty(ef + 1, dtype=np.uint64)
    res_r_arr = np.empty(ef + 1, dtype=np.int64)

    cdef unsigned char[::1] visited = visited_arr
    cdef double[::1] cand_d = cand_d_arr
    cdef u64[::1] cand_i = cand_i_arr
    cdef i64[::1] cand_r = cand_r_arr
    cdef double[::1] res_d = res_d_arr
    cdef u64[::1] res_i = res_i_arr
    cdef i64[::1] res_r = res_r_arr

    cdef Py_ssize_t n_cand = 0
    cdef Py_ssize_t n_res = 0
    cdef i64 n_visited = 1
    cdef double dc, dn
    cdef u64 ic
    cdef i64 rc, nb, arow
    cdef Py_ssize_t j, c

    visited[ep_row] = 1
    dc = _dist_row(vectors, norms, metric, q, qnorm, ep_row)
    _heap_push(cand_d, cand_i, cand_r, &n_cand, dc, ids[ep_row], ep_row, 0)
    _heap_push(res_d, res_i, res_r, &n_res, dc, ids[ep_row], ep_row, 1)

    while n_cand > 0:
        dc = cand_d[0]
        ic = cand_i[0]
        rc = cand_r[0]
        _heap_pop(cand_d, cand_i, cand_r, &n_cand, 0)
        if n_res >= ef and _lt(res_d[0], res_i[0], dc, ic):
            break
        if layer == 0:
            arow = rc
            c = cnt0[arow]
        else:
            arow = up_off[rc] + layer - 1
            c = cnt_up[arow]
        for j in range(c):
            nb = adj0[arow, j] if layer == 0 else adj_up[arow, j]
            if visited[nb]:
                continue
            visited[nb] = 1
            n_visited += 1
            dn = _dist_row(vectors, norms, metric, q, qnorm, nb)
            if n_res < ef or _lt(dn, ids[nb], res_d[0], res_i[0]):
                _heap_push(cand_d, cand_i, cand_r, &n_cand, dn, ids[nb], nb, 0)
                _heap_push(res_d, res_i, res_r, &n_res, dn, ids[nb], nb, 1)
                if n_res > ef:
                    _heap_pop(res_d, res_i, res_r, &n_res, 1)

    rows_out = np.empty(n_res, dtype=np.int64)
    dists_out = np.empty(n_res, dtype=np.float64)
    cdef i64[::1] rows_v = rows_out
    cdef double[::1] dists_v = dists_out
    j = n_res - 1
    while n_res > 0:
        rows_v[j] = res_r[0]
        dists_v[j] = res_d[0]
        _heap_pop(res_d, res_i, res_r, &n_res, 1)
        j -= 1
    return rows_out, dists_out, int(n_visited)


cdef inline i64 _list_row(const i64[:] up_off, int layer, i64 row) noexcept nogil:
    if layer == 0:
        return row
    return up_off[row] + layer - 1


cdef inline void _append_edge(int[:, ::1] adj0, int[:] cnt0,
                              int[:, ::1] adj_up, int[:] cnt_up, const i64[:] up_off,
                              int layer, i64 row, i64 target) noexcept nogil:
    cdef i64 r = _list_row(up_off, layer, row)
    if layer == 0:
        adj0[r, cnt0[r]] = <int> target
        cnt0[r] += 1
    else:
        adj_up[r, cnt_up[r]] = <int> target
        cnt_up[r] += 1


cdef inline void _remove_edge(int[:, ::1] adj0, int[:] cnt0,
                              int[:, ::1] adj_up, int[:] cnt_up, const i64[:] up_off,
                              int layer, i64 row, i64 target) noexcept nogil:
    cdef i64 r = _list_row(up_off, layer, row)
    cdef Py_ssize_t c, j
    if layer == 0:
        c = cnt0[r]
        for j in range(c):
            if adj0[r, j] == target:
                adj0[r, j] = adj0[r, c - 1]
                cnt0[r] = <int> (c - 1)
                return
    else:
        c = cnt_up[r]
        for j in range(c):
            if adj_up[r, j] == target:
                adj_up[r, j] = adj_up[r, c - 1]
                cnt_up[r] = <int> (c - 1)
                return


cdef inline Py_ssize_t _edge_count(const int[:] cnt0, const int[:] cnt_up,
                                   const i64[:] up_off, int layer, i64 row) noexcept nogil:
    if layer == 0:
        return cnt0[row]
    return cnt_up[up_off[row] + layer - 1]


cdef inline bint _has_edge(const int[:, ::1] adj0, const int[:] cnt0,
                           const int[:, ::1] adj_up, const int[:] cnt_up,
                           const i64[:] up_off, int layer, i64 row, i64 target) noexcept nogil:
    cdef i64 r = _list_row(up_off, layer, row)
    cdef Py_ssize_t j, c
    if layer == 0:
        c = cnt0[r]
        for j in range(c):
            if adj0[r, j] == target:
                return True
    else:
        c = cnt_up[r]
        for j in range(c):
            if adj_up[r, j] == target:
                return True
    return False


cdef void _connect(const float[:, ::1] vectors, const double[:] norms, const u64[:] ids,
                   int[:, ::1] adj0, int[:] cnt0,
                   int[:, ::1] adj_up, int[:] cnt_up, const i64[:] up_off,
                   int metric, i64 new_row, const i64[:] cand_rows,
                   int layer, Py_ssize_t budget, Py_ssize_t cap):
    cdef Py_ssize_t i, j, c
    cdef Py_ssize_t made = 0
    cdef i64 nb, arow, x, worst_row
    cdef double dx, worst_d
    cdef u64 idx, worst_id
    for i in range(cand_rows.shape[0]):
        nb = cand_rows[i]
        if nb == new_row:
            continue
        if made >= budget or _edge_count(cnt0, cnt_up, up_off, layer, new_row) >= cap:
            break
        # a compensation link from a previous iteration may already cover nb
        if _has_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, nb):
            continue
        if _edge_count(cnt0, cnt_up, up_off, layer, nb) < cap:
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, nb)
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, nb, new_row)
            made += 1
            continue
        worst_row = new_row
        worst_d = _dist_row(vectors, norms, metric, vectors[nb], norms[nb], new_row)
        worst_id = ids[new_row]
        arow = _list_row(up_off, layer, nb)
        c = _edge_count(cnt0, cnt_up, up_off, layer, nb)
        for j in range(c):
            x = adj0[arow, j] if layer == 0 else adj_up[arow, j]
            if _edge_count(cnt0, cnt_up, up_off, layer, x) <= 1:
                continue
            dx = _dist_row(vectors, norms, metric, vectors[nb], norms[nb], x)
            idx = ids[x]
            if _lt(worst_d, worst_id, dx, idx):
                worst_row = x
                worst_d = dx
                worst_id = idx
        if worst_row == new_row:
            continue
        _remove_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, nb, worst_row)
        _remove_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, worst_row, nb)
        _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, nb)
        _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, nb, new_row)
        made += 1
        # compensate the evicted node with a link to the newcomer when both
        # sides have room; it is close by (it was a neighbor of a near
        # candidate) and this keeps its degree from eroding
        if (_edge_count(cnt0, cnt_up, up_off, layer, new_row) < cap
                and _edge_count(cnt0, cnt_up, up_off, layer, worst_row) < cap
                and not _has_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, worst_row)):
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, worst_row)
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, worst_row, new_row)


def insert(const float[:, ::1] vectors, const double[:] norms, const u64[:] ids,
           int[:, ::1] adj0, int[:] cnt0,
           int[:, ::1] adj_up, int[:] cnt_up, const i64[:] up_off,
           int metric, i64 new_row, int level, i64 entry_row, int max_level,
           Py_ssize_t ef_construction, Py_ssize_t m, Py_ssize_t m0, Py_ssize_t n_rows):
    """Wire a new node into the graph; see _graph_py.insert for the contract."""
    cdef i64 ep = entry_row
    cdef int layer
    cdef Py_ssize_t cap
    cdef const float[::1] q = vectors[new_row]
    cdef double qnorm = norms[new_row]
    for layer in range(max_level, level, -1):
        rows, _, _ = search_layer(vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
                                  metric, q, qnorm, ep, 1, layer, n_rows)
        ep = rows[0]
    layer = level if level < max_level else max_level
    while layer >= 0:
        rows, _, _ = search_layer(vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
                                  metric, q, qnorm, ep, ef_construction, layer, n_rows)
        cap = m0 if layer == 0 else m
        _connect(vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
                 metric, new_row, rows, layer, m, cap)
        ep = rows[0]
        layer -= 1
