"""Pure-Python kernels.  Same signatures as the compiled ``_core`` module."""
from __future__ import annotations

import numpy as np

PIVOT_TOL = 1e-12


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra, rb = a.copy(), b.copy()
    rows, cols, flow = [], [], []
    i = j = 0
    while True:
        f = min(ra[i], rb[j])
        rows.append(i)
        cols.append(j)
        flow.append(f)
        ra[i] -= f
        rb[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return rows, cols, flow


def _tree(m, n, rows, cols, C):
    """Potentials, parent node, parent edge and depth of the basis tree rooted at row 0."""
    N = m + n
    adj = [[] for _ in range(N)]
    for e, (i, j) in enumerate(zip(rows, cols)):
        adj[i].append((m + j, e))
        adj[m + j].append((i, e))
    pot = np.zeros(N)
    parent = np.full(N, -1, dtype=np.int64)
    pedge = np.full(N, -1, dtype=np.int64)
    depth = np.zeros(N, dtype=np.int64)
    seen = np.zeros(N, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v, e in adj[u]:
            if seen[v]:
                continue
            seen[v] = True
            c = C[rows[e], cols[e]]
            # row potential u_i, column potential v_j with u_i + v_j = c_ij
            pot[v] = c - pot[u]
            parent[v] = u
            pedge[v] = e
            depth[v] = depth[u] + 1
            stack.append(v)
    return pot, parent, pedge, depth


def transport(a, b, C, max_iter=None):
    """Exact transportation problem by the network simplex method.

    Returns ``(cost, rows, cols, flows)`` of an optimal basic solution.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    m, n = len(a), len(b)
    rows, cols, flow = _northwest_corner(a, b)
    flow = list(flow)
    if max_iter is None:
        max_iter = 50 * (m + n) * (m + n) + 1000
    for _ in range(max_iter):
        pot, parent, pedge, depth = _tree(m, n, rows, cols, C)
        red = C - pot[:m, None] - pot[None, m:]
        k = int(np.argmin(red))
        if red.flat[k] >= -PIVOT_TOL:
            break
        ei, ej = divmod(k, n)
        # walk the tree path between the column node and the row node
        A, B = ei, m + ej
        path_a, path_b = [], []
        while A != B:
            if depth[A] >= depth[B]:
                path_a.append(pedge[A])
                A = parent[A]
            else:
                path_b.append(pedge[B])
                B = parent[B]
        path = path_b + path_a[::-1]
        theta, leave = np.inf, -1
        for pos in range(0, len(path), 2):
            e = path[pos]
            if flow[e] < theta:
                theta, leave = flow[e], pos
        for pos, e in enumerate(path):
            flow[e] += -theta if pos % 2 == 0 else theta
        e = path[leave]
        rows[e], cols[e], flow[e] = ei, ej, theta
    else:
        raise RuntimeError("network simplex did not converge")
    rows = np.array(rows, dtype=np.int64)
    cols = np.array(cols, dtype=np.int64)
    flow = np.maximum(np.array(flow), 0.0)
    cost = float(np.dot(flow, C[rows, cols]))
    return cost, rows, cols, flow


def best_swap(D, w, centers):
    """Best single swap for discrete k-median.

    ``D[c, j]`` is the distance from candidate ``c`` to sample ``j``.  Returns
    ``(new_cost, c, pos)``: replacing ``centers[pos]`` by ``c`` gives the
    lowest objective ``new_cost`` over all swaps (``c == -1`` if no candidate).
    """
    D = np.asarray(D, dtype=float)
    centers = np.asarray(centers, dtype=np.int64)
    S, K = D.shape[0], len(centers)
    Dc = D[centers]
    order = np.argsort(Dc, axis=0, kind="stable")
    a1 = order[0]
    d1 = Dc[a1, np.arange(S)]
    d2 = Dc[order[1], np.arange(S)] if K > 1 else np.full(S, np.inf)
    is_center = np.zeros(S, dtype=bool)
    is_center[centers] = True
    best, best_c, best_pos = np.inf, -1, -1
    for c in range(S):
        if is_center[c]:
            continue
        row = D[c]
        m1 = np.minimum(row, d1)
        base = float(np.dot(w, m1))
        extra = np.bincount(a1, weights=w * (np.minimum(row, d2) - m1), minlength=K)
        pos = int(np.argmin(extra))
        if base + extra[pos] < best:
            best, best_c, best_pos = base + extra[pos], c, pos
    return best, best_c, best_pos


def add_costs(D, w, d1):
    """Objective after adding each candidate as a new centre."""
    return np.minimum(np.asarray(D, dtype=float), d1[None, :]) @ w
