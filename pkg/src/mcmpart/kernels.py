"""Hot numeric kernels: domain propagation, validity checking, per-chip sums.

Every kernel is written as a plain function over numpy arrays and compiled
with numba's ``@njit`` when available.  Setting ``MCMPART_DISABLE_NUMBA=1``
(or a missing numba install) selects the interpreted fallback path; both
paths execute the exact same function bodies, so results are bit-identical.

Chip-id domains are encoded as int64 bitmasks (bit ``c`` set means chip ``c``
is still allowed), which caps the chip count at 62.
"""

from __future__ import annotations

import os

import numpy as np

MAX_CHIPS = 62

_flag = os.environ.get("MCMPART_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag in {"1", "true", "yes", "on"}

if not _disabled:
    try:
        from numba import njit as _njit
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        _njit = None
else:
    _njit = None

USING_NUMBA = _njit is not None


def _jit(fn):
    if USING_NUMBA:
        return _njit(cache=True)(fn)
    return fn


@_jit
def _dom_min(mask):
    # lowest set bit index; caller guarantees mask != 0
    b = 0
    while (mask >> b) & 1 == 0:
        b += 1
    return b


@_jit
def _dom_max(mask):
    b = MAX_CHIPS
    while (mask >> b) & 1 == 0:
        b -= 1
    return b


@_jit
def propagate(dom, edge_src, edge_dst, num_chips):
    """Prune ``dom`` (int64 bitmasks, in place) to a fixpoint.

    Enforces, conservatively, the three static placement rules:
    edge-monotone chip ids, contiguous chip usage, and the no-coexisting
    direct/indirect chip dependency rule over chips committed so far
    (singleton domains).  Returns 0 on success, 1 if some domain emptied.
    """
    n = dom.shape[0]
    ne = edge_src.shape[0]
    while True:
        changed = False

        # Every edge (u, v) forces min(dom[v]) >= min(dom[u]) and
        # max(dom[u]) <= max(dom[v]); sweep edges until stable.
        sweep = True
        while sweep:
            sweep = False
            for e in range(ne):
                u = edge_src[e]
                v = edge_dst[e]
                du = dom[u]
                dv = dom[v]
                lo = _dom_min(du)
                ndv = dv & ~((1 << lo) - 1)
                if ndv != dv:
                    if ndv == 0:
                        return 1
                    dom[v] = ndv
                    dv = ndv
                    sweep = True
                hi = _dom_max(dv)
                ndu = du & ((1 << (hi + 1)) - 1)
                if ndu != du:
                    if ndu == 0:
                        return 1
                    dom[u] = ndu
                    sweep = True

        # Some node is forced onto a chip >= m_bound, so every chip below
        # m_bound must stay coverable; a unique coverer is forced onto it.
        m_bound = 0
        for i in range(n):
            lo = _dom_min(dom[i])
            if lo > m_bound:
                m_bound = lo
        for c in range(m_bound):
            bit = 1 << c
            cnt = 0
            last = -1
            for i in range(n):
                if dom[i] & bit:
                    cnt += 1
                    last = i
                    if cnt > 1:
                        break
            if cnt == 0:
                return 1
            if cnt == 1 and dom[last] != bit:
                dom[last] = bit
                changed = True

        if changed:
            continue

        # Chip dependency graph over committed nodes (singleton domains).
        direct = np.zeros((num_chips, num_chips), np.bool_)
        ndirect = 0
        for e in range(ne):
            du = dom[edge_src[e]]
            dv = dom[edge_dst[e]]
            if du & (du - 1) == 0 and dv & (dv - 1) == 0:
                a = _dom_min(du)
                c = _dom_min(dv)
                if a != c and not direct[a, c]:
                    direct[a, c] = True
                    ndirect += 1

        if ndirect > 0:
            # Longest committed path between chips; chip edges only go
            # low -> high here, so a per-source forward scan suffices.
            delta = np.full((num_chips, num_chips), -1, np.int64)
            for a in range(num_chips):
                delta[a, a] = 0
                for x in range(a + 1, num_chips):
                    best = -1
                    for y in range(a, x):
                        if direct[y, x] and delta[a, y] >= 0:
                            if delta[a, y] + 1 > best:
                                best = delta[a, y] + 1
                    delta[a, x] = best

            # A committed direct edge shadowed by a longer committed path is
            # already unrecoverable.
            for a in range(num_chips):
                for c in range(a + 1, num_chips):
                    if direct[a, c] and delta[a, c] >= 2:
                        return 1

            # Direct chip edges as flat lists for the look-ahead below.
            dxs = np.empty(ndirect, np.int64)
            dys = np.empty(ndirect, np.int64)
            k = 0
            for a in range(num_chips):
                for c in range(a + 1, num_chips):
                    if direct[a, c]:
                        dxs[k] = a
                        dys[k] = c
                        k += 1

            # bad[p, q]: adding direct chip edge (p, q) would stretch some
            # existing direct edge (x, y) into a >= 2 path x..p -> q..y.
            bad = np.zeros((num_chips, num_chips), np.bool_)
            for p in range(num_chips):
                for q in range(num_chips):
                    if p == q:
                        continue
                    for d in range(ndirect):
                        x = dxs[d]
                        y = dys[d]
                        if delta[x, p] >= 0 and delta[q, y] >= 0 and delta[x, p] + 1 + delta[q, y] >= 2:
                            bad[p, q] = True
                            break

            # Look-ahead on edges with exactly one committed endpoint: a
            # candidate chip that provably breaks the rule is dropped.
            for e in range(ne):
                u = edge_src[e]
                v = edge_dst[e]
                du = dom[u]
                dv = dom[v]
                su = du & (du - 1) == 0
                sv = dv & (dv - 1) == 0
                if su and not sv:
                    a = _dom_min(du)
                    nd = dv
                    for w in range(num_chips):
                        if (dv >> w) & 1 and w != a:
                            if delta[a, w] >= 2 or bad[a, w]:
                                nd &= ~(1 << w)
                    if nd != dv:
                        if nd == 0:
                            return 1
                        dom[v] = nd
                        changed = True
                elif sv and not su:
                    c = _dom_min(dv)
                    nd = du
                    for w in range(num_chips):
                        if (du >> w) & 1 and w != c:
                            if delta[w, c] >= 2 or bad[w, c]:
                                nd &= ~(1 << w)
                    if nd != du:
                        if nd == 0:
                            return 1
                        dom[u] = nd
                        changed = True

        if not changed:
            return 0


@_jit
def check_static_kernel(assign, edge_src, edge_dst, num_chips):
    """Direct evaluation of the three static rules on a total assignment.

    Independent of the solver: no domains, no propagation.  Returns
    ``(code, w0, w1)`` with code 0 = ok, 1 = backward edge (witness edge
    endpoints), 2 = skipped chip (witness chip id), 3 = direct/indirect
    chip dependency clash (witness edge endpoints).
    """
    n = assign.shape[0]
    ne = edge_src.shape[0]

    for e in range(ne):
        u = edge_src[e]
        v = edge_dst[e]
        if assign[u] > assign[v]:
            return 1, u, v

    hi = -1
    used = np.zeros(num_chips, np.bool_)
    for i in range(n):
        a = assign[i]
        used[a] = True
        if a > hi:
            hi = a
    for c in range(hi + 1):
        if not used[c]:
            return 2, c, -1

    direct = np.zeros((num_chips, num_chips), np.bool_)
    any_cross = False
    for e in range(ne):
        a = assign[edge_src[e]]
        c = assign[edge_dst[e]]
        if a != c:
            direct[a, c] = True
            any_cross = True
    if any_cross:
        # max-plus closure: longest path between chips (edges are acyclic
        # here because the backward-edge check above already passed)
        neg = -(num_chips + 1)
        delta = np.full((num_chips, num_chips), neg, np.int64)
        for a in range(num_chips):
            for c in range(num_chips):
                if direct[a, c]:
                    delta[a, c] = 1
        for b in range(num_chips):
            for a in range(num_chips):
                if delta[a, b] > 0:
                    for c in range(num_chips):
                        if delta[b, c] > 0 and delta[a, b] + delta[b, c] > delta[a, c]:
                            delta[a, c] = delta[a, b] + delta[b, c]
        for e in range(ne):
            a = assign[edge_src[e]]
            c = assign[edge_dst[e]]
            if a != c and delta[a, c] != 1:
                return 3, edge_src[e], edge_dst[e]

    return 0, -1, -1


@_jit
def chip_latency(assign, cost, edge_src, edge_dst, edge_bytes, bandwidth, num_chips, include_comm):
    """Per-chip latency: node costs plus (optionally) outbound transfer time."""
    lat = np.zeros(num_chips, np.float64)
    for i in range(assign.shape[0]):
        lat[assign[i]] += cost[i]
    if include_comm:
        for e in range(edge_src.shape[0]):
            a = assign[edge_src[e]]
            if a != assign[edge_dst[e]]:
                lat[a] += edge_bytes[e] / bandwidth
    return lat


@_jit
def chip_memory(assign, node_bytes, num_chips):
    """Per-chip resident bytes (parameters + outputs of the nodes placed there)."""
    mem = np.zeros(num_chips, np.int64)
    for i in range(assign.shape[0]):
        mem[assign[i]] += node_bytes[i]
    return mem


def mask_to_values(mask):
    """Decode a domain bitmask into a sorted tuple of chip ids."""
    out = []
    m = int(mask)
    b = 0
    while m:
        if m & 1:
            out.append(b)
        m >>= 1
        b += 1
    return tuple(out)


def values_to_mask(values):
    """Encode an iterable of chip ids into a domain bitmask."""
    m = 0
    for v in values:
        m |= 1 << int(v)
    return m
