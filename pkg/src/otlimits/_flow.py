"""Successive-shortest-path min-cost flow on uncapacitated networks.

Arcs carry unbounded capacity and real costs; supplies are real.  Residual
arc ``2k`` is forward arc ``k``, residual arc ``2k + 1`` its reverse, whose
capacity is the current flow on ``k``.  Each phase runs one Dijkstra on
reduced costs from all excess nodes at once and stops after settling as
many deficit nodes as there are sources; flow is then pushed along the
shortest-path forest to every settled deficit.

One node may be declared a *hub* (the virtual node of a thresholded
network).  The hub is adjacent to every other node, so its arcs are not
scanned: two max-trees keyed by ``potential - cost`` hand out hub arcs in
order of reduced cost, one at a time.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NEG = -np.inf


@njit(cache=True)
def _heap_push(keys, nodes, size, key, node):
    i = size
    keys[i] = key
    nodes[i] = node
    while i > 0:
        parent = (i - 1) >> 1
        if keys[parent] <= keys[i]:
            break
        keys[parent], keys[i] = keys[i], keys[parent]
        nodes[parent], nodes[i] = nodes[i], nodes[parent]
        i = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, nodes, size):
    key = keys[0]
    node = nodes[0]
    size -= 1
    keys[0] = keys[size]
    nodes[0] = nodes[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            child = right
        if keys[i] <= keys[child]:
            break
        keys[child], keys[i] = keys[i], keys[child]
        nodes[child], nodes[i] = nodes[i], nodes[child]
        i = child
    return key, node, size


@njit(cache=True)
def _tree_set(val, arg, leaves, pos, value):
    i = leaves + pos
    val[i] = value
    i >>= 1
    while i >= 1:
        a = 2 * i
        b = a + 1
        if val[a] >= val[b]:
            val[i] = val[a]
            arg[i] = arg[a]
        else:
            val[i] = val[b]
            arg[i] = arg[b]
        i >>= 1


@njit(cache=True)
def _tree_new(n_leaves):
    leaves = 1
    while leaves < max(n_leaves, 1):
        leaves *= 2
    val = np.full(2 * leaves, NEG)
    arg = np.zeros(2 * leaves, dtype=np.int64)
    for k in range(leaves):
        arg[leaves + k] = k
    for i in range(leaves - 1, 0, -1):
        arg[i] = arg[2 * i]
    return val, arg, leaves


@njit(cache=True, nogil=True)
def ssp_solve(tail, head, cost, indptr, arc_ids, supply, potential, tol, hub):
    """Min-cost flow by successive shortest paths.

    ``potential`` must make every residual reduced cost
    ``cost + pot[tail] - pot[head]`` nonnegative; it is updated in place and
    certifies optimality on return.  ``hub`` is a node index or -1.

    Returns ``(flow, leftover)``; ``leftover`` is the positive excess that
    could not reach any deficit (zero up to ``tol`` for balanced, feasible
    instances).
    """
    n = supply.shape[0]
    m = tail.shape[0]
    flow = np.zeros(m)
    excess = supply.copy()

    dist = np.full(n, np.inf)
    pred = np.full(n, -1, dtype=np.int64)
    settled = np.zeros(n, dtype=np.bool_)
    touched = np.empty(n, dtype=np.int64)
    cap = 2 * m + 4 * n + 4
    hkeys = np.empty(cap)
    hnodes = np.empty(cap, dtype=np.int64)

    # hub bookkeeping: "out" arcs hub -> v, "back" arcs v -> hub (reverse used)
    out_leaf = np.full(n, -1, dtype=np.int64)
    back_leaf = np.full(n, -1, dtype=np.int64)
    n_out = 0
    n_back = 0
    if hub >= 0:
        for k in range(m):
            if tail[k] == hub:
                n_out += 1
            elif head[k] == hub:
                n_back += 1
    out_arc = np.empty(n_out, dtype=np.int64)
    back_arc = np.empty(n_back, dtype=np.int64)
    if hub >= 0:
        i_out = 0
        i_back = 0
        for k in range(m):
            if tail[k] == hub:
                out_arc[i_out] = k
                out_leaf[head[k]] = i_out
                i_out += 1
            elif head[k] == hub:
                back_arc[i_back] = k
                back_leaf[tail[k]] = i_back
                i_back += 1
    oval, oarg, oleaves = _tree_new(n_out)
    bval, barg, bleaves = _tree_new(n_back)
    for i in range(n_out):
        k = out_arc[i]
        _tree_set(oval, oarg, oleaves, i, potential[head[k]] - cost[k])
    # back arcs start with zero flow, so their reverses are not residual
    SPECIAL_OUT = n
    SPECIAL_BACK = n + 1

    targets = np.empty(n, dtype=np.int64)
    offset = 0.0
    while True:
        n_touched = 0
        size = 0
        n_sources = 0
        for s in range(n):
            if excess[s] > tol:
                dist[s] = 0.0
                touched[n_touched] = s
                n_touched += 1
                size = _heap_push(hkeys, hnodes, size, 0.0, s)
                n_sources += 1
        if n_sources == 0:
            break
        n_targets = 0
        bound = 0.0
        while size > 0:
            d, u, size = _heap_pop(hkeys, hnodes, size)
            if u >= n:
                # lazily expanded hub arc
                if u == SPECIAL_OUT:
                    val = oval
                    arg = oarg
                    leaves = oleaves
                    arcs = out_arc
                    sign = 1.0
                else:
                    val = bval
                    arg = barg
                    leaves = bleaves
                    arcs = back_arc
                    sign = -1.0
                best = val[1]
                if best == NEG:
                    continue
                rc = potential[hub] - best
                if rc < 0.0:
                    rc = 0.0
                cand = dist[hub] + rc
                if cand > d:
                    size = _heap_push(hkeys, hnodes, size, cand, u)
                    continue
                pos = arg[1]
                k = arcs[pos]
                v = head[k] if sign > 0 else tail[k]
                _tree_set(val, arg, leaves, pos, NEG)
                if cand < dist[v]:
                    if dist[v] == np.inf:
                        touched[n_touched] = v
                        n_touched += 1
                    dist[v] = cand
                    pred[v] = 2 * k if sign > 0 else 2 * k + 1
                    size = _heap_push(hkeys, hnodes, size, cand, v)
                if val[1] != NEG:
                    rc = potential[hub] - val[1]
                    if rc < 0.0:
                        rc = 0.0
                    size = _heap_push(hkeys, hnodes, size, dist[hub] + rc, u)
                continue
            if settled[u] or d > dist[u]:
                continue
            settled[u] = True
            bound = d
            if out_leaf[u] >= 0:
                _tree_set(oval, oarg, oleaves, out_leaf[u], NEG)
            if back_leaf[u] >= 0:
                _tree_set(bval, barg, bleaves, back_leaf[u], NEG)
            if excess[u] < -tol:
                targets[n_targets] = u
                n_targets += 1
                if n_targets >= n_sources:
                    break
            if u == hub:
                if oval[1] != NEG:
                    rc = potential[hub] - oval[1]
                    size = _heap_push(hkeys, hnodes, size, d + max(rc, 0.0), SPECIAL_OUT)
                if bval[1] != NEG:
                    rc = potential[hub] - bval[1]
                    size = _heap_push(hkeys, hnodes, size, d + max(rc, 0.0), SPECIAL_BACK)
                continue
            pu = potential[u]
            for idx in range(indptr[u], indptr[u + 1]):
                e = arc_ids[idx]
                k = e >> 1
                if e & 1:
                    if flow[k] <= tol:
                        continue
                    v = tail[k]
                    rc = -cost[k] + pu - potential[v]
                else:
                    v = head[k]
                    rc = cost[k] + pu - potential[v]
                if settled[v]:
                    continue
                if rc < 0.0:
                    rc = 0.0
                nd = d + rc
                if nd < dist[v]:
                    if dist[v] == np.inf:
                        touched[n_touched] = v
                        n_touched += 1
                    dist[v] = nd
                    pred[v] = e
                    size = _heap_push(hkeys, hnodes, size, nd, v)

        if n_targets > 0:
            # pot += min(dist, bound); the uniform part goes into ``offset``
            offset += bound
            for i in range(n_touched):
                v = touched[i]
                if settled[v]:
                    potential[v] += dist[v] - bound
            # every forest path to a settled deficit now has zero reduced cost
            for j in range(n_targets):
                t = targets[j]
                if excess[t] >= -tol:
                    continue
                s = t
                while pred[s] >= 0:
                    e = pred[s]
                    s = head[e >> 1] if e & 1 else tail[e >> 1]
                delta = min(excess[s], -excess[t])
                if delta <= tol:
                    continue
                v = t
                while v != s:
                    e = pred[v]
                    k = e >> 1
                    if e & 1:
                        if flow[k] < delta:
                            delta = flow[k]
                        v = head[k]
                    else:
                        v = tail[k]
                if delta <= tol:
                    continue
                v = t
                while v != s:
                    e = pred[v]
                    k = e >> 1
                    if e & 1:
                        flow[k] -= delta
                        if flow[k] < 0.0:
                            flow[k] = 0.0
                        v = head[k]
                    else:
                        flow[k] += delta
                        v = tail[k]
                excess[s] -= delta
                excess[t] += delta

        for i in range(n_touched):
            v = touched[i]
            dist[v] = np.inf
            pred[v] = -1
            settled[v] = False
        if hub >= 0:
            # refresh leaves touched during this phase
            for i in range(n_touched):
                v = touched[i]
                if out_leaf[v] >= 0:
                    k = out_arc[out_leaf[v]]
                    _tree_set(oval, oarg, oleaves, out_leaf[v], potential[v] - cost[k])
                if back_leaf[v] >= 0:
                    k = back_arc[back_leaf[v]]
                    if flow[k] > tol:
                        _tree_set(bval, barg, bleaves, back_leaf[v], potential[v] + cost[k])
                    else:
                        _tree_set(bval, barg, bleaves, back_leaf[v], NEG)
        if n_targets == 0:
            break

    for v in range(n):
        potential[v] += offset
    leftover = 0.0
    for v in range(n):
        if excess[v] > 0.0:
            leftover += excess[v]
    return flow, leftover


def residual_index(n_nodes: int, tail: np.ndarray, head: np.ndarray):
    """CSR layout of the residual graph: ``(indptr, arc_ids)``."""
    m = tail.shape[0]
    owner = np.concatenate([tail, head])
    ids = np.concatenate([2 * np.arange(m, dtype=np.int64), 2 * np.arange(m, dtype=np.int64) + 1])
    order = np.argsort(owner, kind="stable")
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(owner, minlength=n_nodes), out=indptr[1:])
    return indptr, ids[order]
