"""Pure-Python graph-search kernels (fallback backend).

Operates on the flat array layout owned by HnswIndex:

- ``vectors``  float32 (cap, d), C-contiguous
- ``norms``    float64 (cap,) precomputed L2 norms
- ``ids``      uint64 (cap,) external record ids
- ``adj0``     int32 (cap, m0) layer-0 neighbor rows, ``cnt0`` their counts
- ``adj_up``   int32 (rows, m) upper-layer neighbor rows, ``cnt_up`` counts
- ``up_off``   int64 (cap,) first adj_up row of a node; the row for layer L
               (L >= 1) of node v is ``up_off[v] + L - 1``

All orderings are lexicographic on (distance, external id) so that results
are deterministic. The compiled backend implements the exact same traversal;
the two may differ only in float64 summation order.
"""

from __future__ import annotations

import heapq

import numpy as np

BACKEND = "python"

METRIC_L2 = 0
METRIC_COSINE = 1


def _neighbor_rows(adj0, cnt0, adj_up, cnt_up, up_off, layer, row):
    if layer == 0:
        return adj0[row, : cnt0[row]]
    r = up_off[row] + layer - 1
    return adj_up[r, : cnt_up[r]]


def _dists_to(vectors, norms, metric, q64, qnorm, rows):
    sub = vectors[rows].astype(np.float64)
    if metric == METRIC_L2:
        diff = sub - q64
        return np.einsum("ij,ij->i", diff, diff)
    dots = sub @ q64
    return np.clip(1.0 - dots / (norms[rows] * qnorm), 0.0, 2.0)


def search_layer(
    vectors,
    norms,
    ids,
    adj0,
    cnt0,
    adj_up,
    cnt_up,
    up_off,
    metric,
    q,
    qnorm,
    ep_row,
    ef,
    layer,
    n_rows,
):
    """Best-first expansion from ``ep_row`` at ``layer``.

    Returns (rows, dists, visited_count) with rows/dists sorted ascending
    by (distance, id) and at most ``ef`` entries.
    """
    q64 = q.astype(np.float64)
    visited = np.zeros(n_rows, dtype=bool)
    visited[ep_row] = True
    n_visited = 1

    d_ep = float(_dists_to(vectors, norms, metric, q64, qnorm, [ep_row])[0])
    ep_id = int(ids[ep_row])
    candidates = [(d_ep, ep_id, ep_row)]  # min-heap
    results = [(-d_ep, -ep_id, ep_row)]  # max-heap via negation

    while candidates:
        dc, idc, rc = heapq.heappop(candidates)
        dw, idw, _ = results[0]
        if len(results) >= ef and (dc, idc) > (-dw, -idw):
            break
        nbrs = _neighbor_rows(adj0, cnt0, adj_up, cnt_up, up_off, layer, rc)
        fresh = [int(r) for r in nbrs if not visited[r]]
        if not fresh:
            continue
        visited[fresh] = True
        n_visited += len(fresh)
        dists = _dists_to(vectors, norms, metric, q64, qnorm, fresh)
        for r, dn in zip(fresh, dists):
            dn = float(dn)
            idn = int(ids[r])
            dw, idw, _ = results[0]
            if len(results) < ef or (dn, idn) < (-dw, -idw):
                heapq.heappush(candidates, (dn, idn, r))
                heapq.heappush(results, (-dn, -idn, r))
                if len(results) > ef:
                    heapq.heappop(results)

    ordered = sorted((-d, -i, r) for d, i, r in results)
    rows_out = np.fromiter((r for _, _, r in ordered), dtype=np.int64, count=len(ordered))
    dists_out = np.fromiter((d for d, _, _ in ordered), dtype=np.float64, count=len(ordered))
    return rows_out, dists_out, n_visited


def _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, row, target):
    if layer == 0:
        adj0[row, cnt0[row]] = target
        cnt0[row] += 1
    else:
        r = up_off[row] + layer - 1
        adj_up[r, cnt_up[r]] = target
        cnt_up[r] += 1


def _remove_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, row, target):
    if layer == 0:
        adj, cnt, r = adj0, cnt0, row
    else:
        adj, cnt, r = adj_up, cnt_up, up_off[row] + layer - 1
    c = cnt[r]
    for j in range(c):
        if adj[r, j] == target:
            adj[r, j] = adj[r, c - 1]
            cnt[r] = c - 1
            return


def _count(cnt0, cnt_up, up_off, layer, row):
    if layer == 0:
        return int(cnt0[row])
    return int(cnt_up[up_off[row] + layer - 1])


def _has_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, row, target):
    nbrs = _neighbor_rows(adj0, cnt0, adj_up, cnt_up, up_off, layer, row)
    return target in nbrs


def _connect(
    vectors,
    norms,
    ids,
    adj0,
    cnt0,
    adj_up,
    cnt_up,
    up_off,
    metric,
    new_row,
    cand_rows,
    layer,
    budget,
    cap,
):
    """Link the new node to candidates, keeping adjacency symmetric.

    Candidates are scanned nearest-first until ``budget`` links are made.
    ``cap`` is the hard list size; keeping it above the budget leaves
    room for back-links from later inserts, which is what makes mutual
    near-neighbor links common. A full list is pruned back to capacity
    by keeping the entries nearest to its owner; the dropped edge
    disappears from both endpoints. When the new node itself is the entry
    a full neighbor would drop, that link is skipped and scanning moves
    on. An edge whose removal would disconnect its far endpoint is never
    chosen as the victim.
    """
    made = 0
    for nb in cand_rows:
        nb = int(nb)
        if nb == new_row:
            continue
        if made >= budget or _count(cnt0, cnt_up, up_off, layer, new_row) >= cap:
            break
        # a compensation link from a previous iteration may already cover nb
        if _has_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, nb):
            continue
        if _count(cnt0, cnt_up, up_off, layer, nb) < cap:
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, nb)
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, nb, new_row)
            made += 1
            continue
        # nb is full: among its current neighbors plus the new node, the
        # farthest from nb loses its edge
        q_nb = vectors[nb].astype(np.float64)
        qn_nb = norms[nb]
        worst_row = new_row
        worst_d = float(_dists_to(vectors, norms, metric, q_nb, qn_nb, [new_row])[0])
        worst_id = int(ids[new_row])
        cur = _neighbor_rows(adj0, cnt0, adj_up, cnt_up, up_off, layer, nb)
        cur = [int(x) for x in cur]
        cur_d = _dists_to(vectors, norms, metric, q_nb, qn_nb, cur)
        for x, dx in zip(cur, cur_d):
            if _count(cnt0, cnt_up, up_off, layer, x) <= 1:
                continue
            dx = float(dx)
            idx = int(ids[x])
            if (dx, idx) > (worst_d, worst_id):
                worst_row, worst_d, worst_id = x, dx, idx
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
        if (
            worst_row != new_row
            and _count(cnt0, cnt_up, up_off, layer, new_row) < cap
            and _count(cnt0, cnt_up, up_off, layer, worst_row) < cap
            and not _has_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, worst_row)
        ):
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, new_row, worst_row)
            _append_edge(adj0, cnt0, adj_up, cnt_up, up_off, layer, worst_row, new_row)


def insert(
    vectors,
    norms,
    ids,
    adj0,
    cnt0,
    adj_up,
    cnt_up,
    up_off,
    metric,
    new_row,
    level,
    entry_row,
    max_level,
    ef_construction,
    m,
    m0,
    n_rows,
):
    """Wire a new node (vector already stored at ``new_row``) into the graph."""
    q = vectors[new_row]
    qnorm = norms[new_row]
    ep = entry_row
    for layer in range(max_level, level, -1):
        rows, _, _ = search_layer(
            vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
            metric, q, qnorm, ep, 1, layer, n_rows,
        )
        ep = int(rows[0])
    for layer in range(min(level, max_level), -1, -1):
        rows, _, _ = search_layer(
            vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
            metric, q, qnorm, ep, ef_construction, layer, n_rows,
        )
        cap = m0 if layer == 0 else m
        _connect(
            vectors, norms, ids, adj0, cnt0, adj_up, cnt_up, up_off,
            metric, new_row, rows, layer, m, cap,
        )
        ep = int(rows[0])
