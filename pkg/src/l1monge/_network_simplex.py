"""Primal network simplex for the dense bipartite transportation problem.

The solver keeps a strongly feasible spanning tree (every zero-flow tree arc
points away from the root) and applies Cunningham's leaving-arc rule, which
rules out cycling on the heavily degenerate instances that distance costs
produce. The root is an artificial node joined to every atom by a big-M arc,
so the all-artificial tree is a valid start.

Node ``i < m`` is source ``i``, node ``m + j`` is target ``j`` and node
``m + n`` is the root. Arc ``i * n + j`` runs from source ``i`` to target
``j``; arc ``m * n + v`` is the artificial arc of node ``v``. Reduced costs
are priced on the fly from the node potentials.
"""

import numpy as np
from numba import njit

from .exceptions import Infeasible, NumericFailure, Unbounded

PIVOT_RULES = ("block", "dantzig", "bland")
_RULE_CODE = {"block": 0, "dantzig": 1, "bland": 2}

_OK, _BUDGET, _UNBOUNDED, _NOT_TREE = 0, 1, 2, 3


class TransportBasis:
    """Spanning tree plus flows; reusable as a warm start for the same marginals."""

    def __init__(self, arcs, flows):
        self.arcs = np.asarray(arcs, dtype=np.int64)
        self.flows = np.asarray(flows, dtype=float)


def network_simplex(a, b, C, pivot="block", tol=1e-10, max_iter=None, warm=None):
    """Solve ``min <C, P>`` over couplings of ``a`` and ``b``.

    Parameters
    ----------
    a : (m,) ndarray
        Source masses, nonnegative.
    b : (n,) ndarray
        Target masses, nonnegative, same total as ``a``.
    C : (m, n) ndarray
        Cost matrix; ``+inf`` entries are forbidden arcs.
    pivot : {'block', 'dantzig', 'bland'}
        Entering-arc rule. 'bland' takes the eligible arc of lowest index,
        'dantzig' the most negative reduced cost, 'block' the most negative
        one within the first block (of about ``sqrt(m n)`` arcs, scanned
        cyclically from the last entering arc) that holds an eligible arc.
        Ties go to the arc scanned first.
    tol : float
        Relative optimality tolerance on reduced costs.
    max_iter : int, optional
        Pivot budget; defaults to a generous multiple of the arc count.
    warm : TransportBasis, optional
        Basis from an earlier solve with the same marginals.

    Returns
    -------
    P : (m, n) ndarray
        Optimal basic plan.
    u, v : ndarray
        Duals with ``u[i] + v[j] <= C[i, j]``, equality on basic arcs.
    info : dict
        ``pivots`` and the final ``basis``.
    """
    if pivot not in PIVOT_RULES:
        raise ValueError(f"unknown pivot rule {pivot!r}")
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    m, n = C.shape
    if a.shape != (m,) or b.shape != (n,):
        raise ValueError("marginal shapes do not match the cost matrix")
    if np.any(np.isnan(C)) or np.any(C == -np.inf):
        raise NumericFailure("cost matrix contains NaN or -inf")

    finite = np.isfinite(C)
    scale = float(np.abs(C[finite]).max()) if finite.any() else 1.0
    scale = max(scale, 1.0)
    big = (m + n + 1) * scale + 1.0
    if max_iter is None:
        max_iter = 50 * (m * n + m + n) + 1000
    block = max(int(np.sqrt(m * n)), min(m * n, 64))

    N = m + n
    art_up = np.zeros(N, dtype=np.bool_)
    art_up[:m] = a > 0
    if warm is None:
        arcs = np.arange(m * n, m * n + N, dtype=np.int64)
        flows = np.concatenate([np.where(a > 0, a, 0.0), b])
    else:
        arcs, flows = warm.arcs.copy(), warm.flows.copy()
        if arcs.size != N:
            raise NumericFailure("warm-start basis is not a spanning tree")

    status, pivots, u, v = _solve(C, big, art_up, arcs, flows, _RULE_CODE[pivot],
                                  tol * scale, int(max_iter), block)
    if status == _NOT_TREE:
        raise NumericFailure("basis is not a spanning tree")
    if status == _BUDGET:
        raise NumericFailure(f"pivot budget {max_iter} exhausted")
    if status == _UNBOUNDED:
        raise Unbounded("negative-cost cycle without a blocking arc")

    real = arcs < m * n
    total = max(a.sum(), b.sum(), 1e-300)
    if flows[~real].max(initial=0.0) > 1e-9 * total:
        raise Infeasible("no feasible plan uses only finite-cost arcs")
    P = np.zeros(m * n)
    P[arcs[real]] = np.maximum(flows[real], 0.0)
    order = np.argsort(arcs)
    basis = TransportBasis(arcs[order], flows[order])
    return P.reshape(m, n), u, v, {"pivots": int(pivots), "basis": basis}


@njit(cache=True)
def _ends(k, m, n, art_up):
    if k < m * n:
        return k // n, m + k % n
    w = k - m * n
    if art_up[w]:
        return w, m + n
    return m + n, w


@njit(cache=True)
def _cost(k, C, m, n, big):
    if k < m * n:
        return C[k // n, k % n]
    return big


@njit(cache=True)
def _link(pos, k, m, n, art_up, head, nxt, prv):
    t, h = _ends(k, m, n, art_up)
    for side in range(2):
        w = t if side == 0 else h
        s = 2 * pos + side
        prv[s] = -1
        nxt[s] = head[w]
        if head[w] >= 0:
            prv[head[w]] = s
        head[w] = s


@njit(cache=True)
def _unlink(pos, k, m, n, art_up, head, nxt, prv):
    t, h = _ends(k, m, n, art_up)
    for side in range(2):
        w = t if side == 0 else h
        s = 2 * pos + side
        if prv[s] >= 0:
            nxt[prv[s]] = nxt[s]
        else:
            head[w] = nxt[s]
        if nxt[s] >= 0:
            prv[nxt[s]] = prv[s]


@njit(cache=True)
def _relabel(start, via, hang, C, big, m, n, art_up, arcs, head, nxt,
             parent, ppos, depth, pi, stack_w, stack_p, stack_h):
    """Hang the component of ``start`` below ``hang`` through tree slot ``via``.

    Recomputes parents, depths and potentials; returns the node count.
    """
    top = 0
    stack_w[0], stack_p[0], stack_h[0] = start, via, hang
    count = 0
    while top >= 0:
        w, pos, p = stack_w[top], stack_p[top], stack_h[top]
        top -= 1
        parent[w] = p
        ppos[w] = pos
        if p >= 0:
            k = arcs[pos]
            t, _ = _ends(k, m, n, art_up)
            depth[w] = depth[p] + 1
            if t == p:
                pi[w] = pi[p] + _cost(k, C, m, n, big)
            else:
                pi[w] = pi[p] - _cost(k, C, m, n, big)
        else:
            depth[w] = 0
            pi[w] = 0.0
        count += 1
        s = head[w]
        while s >= 0:
            q = s >> 1
            if q != pos:
                t, h = _ends(arcs[q], m, n, art_up)
                top += 1
                stack_w[top] = h if t == w else t
                stack_p[top] = q
                stack_h[top] = w
            s = nxt[s]
    return count


@njit(cache=True)
def _price(C, pi, m, n, rule, rc_tol, block, start):
    """Entering arc index, or -1 when every reduced cost is >= -rc_tol."""
    total = m * n
    if rule == 2:
        for k in range(total):
            i, j = k // n, k % n
            if C[i, j] + pi[i] - pi[m + j] < -rc_tol:
                return k
        return -1
    if rule == 1:
        best, arg = -rc_tol, -1
        for k in range(total):
            i, j = k // n, k % n
            r = C[i, j] + pi[i] - pi[m + j]
            if r < best:
                best, arg = r, k
        return arg
    best, arg = -rc_tol, -1
    k = start
    seen = 0
    while seen < total:
        end = min(seen + block, total)
        while seen < end:
            i, j = k // n, k % n
            r = C[i, j] + pi[i] - pi[m + j]
            if r < best:
                best, arg = r, k
            k += 1
            if k == total:
                k = 0
            seen += 1
        if arg >= 0:
            return arg
    return -1


@njit(cache=True)
def _solve(C, big, art_up, arcs, flows, rule, rc_tol, max_iter, block):
    m, n = C.shape
    N = m + n
    root = N
    head = np.full(N + 1, -1, np.int64)
    nxt = np.full(2 * N, -1, np.int64)
    prv = np.full(2 * N, -1, np.int64)
    parent = np.full(N + 1, -1, np.int64)
    ppos = np.full(N + 1, -1, np.int64)
    depth = np.zeros(N + 1, np.int64)
    pi = np.zeros(N + 1)
    stack_w = np.empty(N + 1, np.int64)
    stack_p = np.empty(N + 1, np.int64)
    stack_h = np.empty(N + 1, np.int64)
    path_s = np.empty(N + 1, np.int64)
    path_t = np.empty(N + 1, np.int64)
    cyc_pos = np.empty(N + 2, np.int64)
    cyc_fwd = np.empty(N + 2, np.bool_)
    cyc_node = np.empty(N + 2, np.int64)

    for pos in range(N):
        _link(pos, arcs[pos], m, n, art_up, head, nxt, prv)
    if _relabel(root, -1, -1, C, big, m, n, art_up, arcs, head, nxt,
                parent, ppos, depth, pi, stack_w, stack_p, stack_h) != N + 1:
        return _NOT_TREE, 0, pi[:m].copy(), pi[m:N].copy()

    pivots = 0
    start = 0
    while True:
        e = _price(C, pi, m, n, rule, rc_tol, block, start)
        if e < 0:
            # confirm against potentials rebuilt from scratch before stopping
            _relabel(root, -1, -1, C, big, m, n, art_up, arcs, head, nxt,
                     parent, ppos, depth, pi, stack_w, stack_p, stack_h)
            e = _price(C, pi, m, n, rule, rc_tol, block, start)
            if e < 0:
                break
        if pivots >= max_iter:
            return _BUDGET, pivots, -pi[:m], pi[m:N].copy()
        start = e + 1 if e + 1 < m * n else 0

        s, t = _ends(e, m, n, art_up)
        ns = 0
        nt = 0
        i, j = s, t
        while depth[i] > depth[j]:
            path_s[ns] = i
            ns += 1
            i = parent[i]
        while depth[j] > depth[i]:
            path_t[nt] = j
            nt += 1
            j = parent[j]
        while i != j:
            path_s[ns] = i
            ns += 1
            path_t[nt] = j
            nt += 1
            i = parent[i]
            j = parent[j]

        # walk the cycle from the apex along the entering arc's orientation:
        # down to s, across e, up from t
        L = 0
        for r in range(ns - 1, -1, -1):
            c = path_s[r]
            q = ppos[c]
            tail, _ = _ends(arcs[q], m, n, art_up)
            cyc_pos[L], cyc_fwd[L], cyc_node[L] = q, tail == parent[c], c
            L += 1
        n_s_side = L
        for r in range(nt):
            c = path_t[r]
            q = ppos[c]
            tail, _ = _ends(arcs[q], m, n, art_up)
            cyc_pos[L], cyc_fwd[L], cyc_node[L] = q, tail == c, c
            L += 1

        # keep the last blocking arc met in traversal order
        theta = np.inf
        leave = -1
        for r in range(L):
            if not cyc_fwd[r] and flows[cyc_pos[r]] <= theta:
                theta = flows[cyc_pos[r]]
                leave = r
        if leave < 0:
            return _UNBOUNDED, pivots, -pi[:m], pi[m:N].copy()

        if theta > 0:
            for r in range(L):
                if cyc_fwd[r]:
                    flows[cyc_pos[r]] += theta
                else:
                    flows[cyc_pos[r]] -= theta
        q = cyc_pos[leave]
        _unlink(q, arcs[q], m, n, art_up, head, nxt, prv)
        arcs[q] = e
        flows[q] = theta
        _link(q, e, m, n, art_up, head, nxt, prv)
        if leave < n_s_side:
            inner, outer = s, t
        else:
            inner, outer = t, s
        _relabel(inner, q, outer, C, big, m, n, art_up, arcs, head, nxt,
                 parent, ppos, depth, pi, stack_w, stack_p, stack_h)
        pivots += 1

    return _OK, pivots, -pi[:m], pi[m:N].copy()
