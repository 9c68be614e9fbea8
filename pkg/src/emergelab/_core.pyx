# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: network simplex for transport and k-median swap search."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double PIVOT_TOL = 1e-12


cdef int _rebuild_tree(int m, int n, const long* rows, const long* cols,
                       const double* C, double* pot, long* parent, long* pedge,
                       long* depth, long* head, long* nxt, long* adj_node,
                       long* adj_edge, long* stack, char* seen) noexcept nogil:
    cdef int N = m + n, E = m + n - 1
    cdef int e, u, v, top, slot, i
    for i in range(N):
        head[i] = -1
        seen[i] = 0
    slot = 0
    for e in range(E):
        u = rows[e]
        v = m + cols[e]
        adj_node[slot] = v; adj_edge[slot] = e; nxt[slot] = head[u]; head[u] = slot; slot += 1
        adj_node[slot] = u; adj_edge[slot] = e; nxt[slot] = head[v]; head[v] = slot; slot += 1
    pot[0] = 0.0
    parent[0] = -1
    pedge[0] = -1
    depth[0] = 0
    seen[0] = 1
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        slot = head[u]
        while slot != -1:
            v = adj_node[slot]
            if not seen[v]:
                seen[v] = 1
                e = adj_edge[slot]
                pot[v] = C[rows[e] * n + cols[e]] - pot[u]
                parent[v] = u
                pedge[v] = adj_edge[slot]
                depth[v] = depth[u] + 1
                stack[top] = v
                top += 1
            slot = nxt[slot]
    return 0


cdef int _simplex(int m, int n, const double* a, const double* b, const double* C,
                  long* rows, long* cols, double* flow, long max_iter) noexcept nogil:
    """Returns 0 on optimality, 1 if the iteration cap is hit."""
    cdef int N = m + n, E = m + n - 1
    cdef long total = <long>m * n
    cdef long block = <long>sqrt(<double>total)
    cdef long i, j, e, k, start, scanned, best_k, it, pos, leave, plen, na, nb
    cdef double ra_i, best_r, r, theta
    cdef int A, B, status = 1
    cdef double* ra = <double*>malloc(m * sizeof(double))
    cdef double* rb = <double*>malloc(n * sizeof(double))
    cdef double* pot = <double*>malloc(N * sizeof(double))
    cdef long* parent = <long*>malloc(N * sizeof(long))
    cdef long* pedge = <long*>malloc(N * sizeof(long))
    cdef long* depth = <long*>malloc(N * sizeof(long))
    cdef long* head = <long*>malloc(N * sizeof(long))
    cdef long* nxt = <long*>malloc(2 * E * sizeof(long) + sizeof(long))
    cdef long* adj_node = <long*>malloc(2 * E * sizeof(long) + sizeof(long))
    cdef long* adj_edge = <long*>malloc(2 * E * sizeof(long) + sizeof(long))
    cdef long* stack = <long*>malloc(N * sizeof(long))
    cdef long* path_a = <long*>malloc(N * sizeof(long))
    cdef long* path_b = <long*>malloc(N * sizeof(long))
    cdef long* path = <long*>malloc(N * sizeof(long))
    cdef char* seen = <char*>malloc(N * sizeof(char))
    if block < 1:
        block = 1

    # northwest corner start
    for i in range(m):
        ra[i] = a[i]
    for j in range(n):
        rb[j] = b[j]
    i = 0
    j = 0
    e = 0
    while True:
        theta = ra[i] if ra[i] < rb[j] else rb[j]
        rows[e] = i; cols[e] = j; flow[e] = theta
        e += 1
        ra[i] -= theta
        rb[j] -= theta
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1

    start = 0
    for it in range(max_iter):
        _rebuild_tree(m, n, rows, cols, C, pot, parent, pedge, depth,
                      head, nxt, adj_node, adj_edge, stack, seen)
        # block pricing: most negative reduced cost in the first block that has one
        best_r = -PIVOT_TOL
        best_k = -1
        scanned = 0
        k = start
        while scanned < total:
            i = k // n
            j = k - i * n
            r = C[k] - pot[i] - pot[m + j]
            if r < best_r:
                best_r = r
                best_k = k
            scanned += 1
            k += 1
            if k == total:
                k = 0
            if best_k >= 0 and scanned % block == 0:
                break
        if best_k < 0:
            status = 0
            break
        start = k
        i = best_k // n
        j = best_k - i * n
        A = <int>i
        B = <int>(m + j)
        na = 0
        nb = 0
        while A != B:
            if depth[A] >= depth[B]:
                path_a[na] = pedge[A]; na += 1
                A = <int>parent[A]
            else:
                path_b[nb] = pedge[B]; nb += 1
                B = <int>parent[B]
        plen = 0
        for k in range(nb):
            path[plen] = path_b[k]; plen += 1
        for k in range(na - 1, -1, -1):
            path[plen] = path_a[k]; plen += 1
        theta = INFINITY
        leave = -1
        for pos in range(0, plen, 2):
            if flow[path[pos]] < theta:
                theta = flow[path[pos]]
                leave = pos
        for pos in range(plen):
            if pos % 2 == 0:
                flow[path[pos]] -= theta
            else:
                flow[path[pos]] += theta
        e = path[leave]
        rows[e] = i; cols[e] = j; flow[e] = theta

    free(ra); free(rb); free(pot); free(parent); free(pedge); free(depth)
    free(head); free(nxt); free(adj_node); free(adj_edge); free(stack)
    free(path_a); free(path_b); free(path); free(seen)
    return status


def transport(a, b, C, max_iter=None):
    """Exact transportation problem by the network simplex method.

    Returns ``(cost, rows, cols, flows)`` of an optimal basic solution.
    """
    cdef cnp.ndarray[double, ndim=1, mode="c"] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] CC = np.ascontiguousarray(C, dtype=np.float64)
    cdef int m = aa.shape[0], n = bb.shape[0]
    cdef int E = m + n - 1
    cdef long cap
    if max_iter is None:
        cap = 50 * <long>(m + n) * (m + n) + 1000
    else:
        cap = max_iter
    cdef cnp.ndarray[long, ndim=1, mode="c"] rows = np.empty(E, dtype=np.int64)
    cdef cnp.ndarray[long, ndim=1, mode="c"] cols = np.empty(E, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] flow = np.empty(E, dtype=np.float64)
    cdef int status
    with nogil:
        status = _simplex(m, n, &aa[0], &bb[0], &CC[0, 0], &rows[0], &cols[0], &flow[0], cap)
    if status != 0:
        raise RuntimeError("network simplex did not converge")
    flow = np.maximum(flow, 0.0)
    cost = float(np.dot(flow, CC[rows, cols]))
    return cost, rows, cols, flow


def best_swap(D, w, centers):
    """Best single swap for discrete k-median; see the pure-Python twin."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] DD = np.ascontiguousarray(D, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[long, ndim=1, mode="c"] cc = np.ascontiguousarray(centers, dtype=np.int64)
    cdef int S = DD.shape[0], K = cc.shape[0]
    cdef cnp.ndarray[long, ndim=1, mode="c"] a1 = np.empty(S, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] d1 = np.empty(S, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] d2 = np.empty(S, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] extra = np.empty(K, dtype=np.float64)
    cdef cnp.ndarray[char, ndim=1, mode="c"] is_center = np.zeros(S, dtype=np.int8)
    cdef int c, j, p, best_c = -1, best_pos = -1, pos
    cdef double x, base, m1, best = INFINITY, val
    with nogil:
        for p in range(K):
            is_center[cc[p]] = 1
        for j in range(S):
            d1[j] = INFINITY
            d2[j] = INFINITY
            a1[j] = -1
            for p in range(K):
                x = DD[cc[p], j]
                if x < d1[j]:
                    d2[j] = d1[j]
                    d1[j] = x
                    a1[j] = p
                elif x < d2[j]:
                    d2[j] = x
        for c in range(S):
            if is_center[c]:
                continue
            base = 0.0
            for p in range(K):
                extra[p] = 0.0
            for j in range(S):
                x = DD[c, j]
                m1 = x if x < d1[j] else d1[j]
                base += ww[j] * m1
                extra[a1[j]] += ww[j] * ((x if x < d2[j] else d2[j]) - m1)
            pos = 0
            for p in range(1, K):
                if extra[p] < extra[pos]:
                    pos = p
            val = base + extra[pos]
            if val < best:
                best = val
                best_c = c
                best_pos = pos
    return best, best_c, best_pos


def add_costs(D, w, d1):
    """Objective after adding each candidate as a new centre."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] DD = np.ascontiguousarray(D, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] dd = np.ascontiguousarray(d1, dtype=np.float64)
    cdef int S = DD.shape[0], T = DD.shape[1], c, j
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(S, dtype=np.float64)
    cdef double s, x
    with nogil:
        for c in range(S):
            s = 0.0
            for j in range(T):
                x = DD[c, j]
                s += ww[j] * (x if x < dd[j] else dd[j])
            out[c] = s
    return out
