"""Pure-numpy implementations of the hot query kernels.

Mirrors the compiled extension in `_core.pyx` function for function; the
backend is chosen once at import time in `roadnet._kernels`. Distance
comparisons happen in squared-chord space on the unit sphere so both
backends make bit-identical decisions (the extension is compiled with FMA
contraction off for the same reason).
"""

from __future__ import annotations

import heapq
import math

import numpy as np

NAME = "fallback"


def haversine_to_many(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Great-circle meters from one point to many, on the EARTH_RADIUS_M sphere."""
    phi1 = math.radians(lat)
    phi = np.radians(lats)
    dphi = np.radians(lats - lat)
    dlam = np.radians(lons - lon)
    h = np.sin(dphi / 2.0) ** 2 + math.cos(phi1) * np.cos(phi) * np.sin(dlam / 2.0) ** 2
    np.clip(h, 0.0, 1.0, out=h)
    return 2.0 * 6_371_008.8 * np.arcsin(np.sqrt(h))


def chord2_to_many(qx: float, qy: float, qz: float,
                   xs: np.ndarray, ys: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Squared straight-line distance from a unit-sphere point to many."""
    return (xs - qx) ** 2 + (ys - qy) ** 2 + (zs - qz) ** 2


def _leaf_d2(perm, lo, hi, xs, ys, zs, qx, qy, qz):
    sl = perm[lo:hi]
    return sl, (xs[sl] - qx) ** 2 + (ys[sl] - qy) ** 2 + (zs[sl] - qz) ** 2


def kd_nearest(node_dim, node_split, node_left, node_right, perm,
               xs, ys, zs, qx, qy, qz):
    """Single nearest neighbor; returns (position, squared chord distance).

    Ties in distance resolve to the smaller position (positions are
    id-ordered, so this is the smaller-vertex-id rule).
    """
    q = (qx, qy, qz)
    best_d2 = math.inf
    best_pos = -1
    stack = [(0, 0.0)]
    while stack:
        node, pd2 = stack.pop()
        if pd2 > best_d2:
            continue
        while node_dim[node] >= 0:
            dim = node_dim[node]
            qd = q[dim] - node_split[node]
            if qd < 0.0:
                near, far = node_left[node], node_right[node]
            else:
                near, far = node_right[node], node_left[node]
            fpd2 = qd * qd
            if fpd2 <= best_d2:
                stack.append((far, fpd2))
            node = near
        sl, d2 = _leaf_d2(perm, node_left[node], node_right[node], xs, ys, zs, qx, qy, qz)
        m = d2.min()
        if m <= best_d2:
            pos = int(sl[d2 == m].min())
            if m < best_d2 or pos < best_pos:
                best_d2 = float(m)
                best_pos = pos
    return best_pos, best_d2


def kd_knn(node_dim, node_split, node_left, node_right, perm,
           xs, ys, zs, qx, qy, qz, k):
    """k nearest neighbors; returns unsorted (positions, squared distances).

    The kept set is the k smallest under (distance, position) ordering.
    """
    q = (qx, qy, qz)
    # Max-heap on (d2, pos) via negation; heap[0] is the worst kept entry.
    heap: list[tuple[float, int]] = []
    stack = [(0, 0.0)]
    while stack:
        node, pd2 = stack.pop()
        if len(heap) == k and pd2 > -heap[0][0]:
            continue
        while node_dim[node] >= 0:
            dim = node_dim[node]
            qd = q[dim] - node_split[node]
            if qd < 0.0:
                near, far = node_left[node], node_right[node]
            else:
                near, far = node_right[node], node_left[node]
            fpd2 = qd * qd
            if len(heap) < k or fpd2 <= -heap[0][0]:
                stack.append((far, fpd2))
            node = near
        sl, d2 = _leaf_d2(perm, node_left[node], node_right[node], xs, ys, zs, qx, qy, qz)
        for j in range(len(sl)):
            cand = (float(d2[j]), int(sl[j]))
            if len(heap) < k:
                heapq.heappush(heap, (-cand[0], -cand[1]))
            else:
                worst = (-heap[0][0], -heap[0][1])
                if cand < worst:
                    heapq.heapreplace(heap, (-cand[0], -cand[1]))
    n = len(heap)
    pos = np.empty(n, dtype=np.int64)
    d2s = np.empty(n, dtype=np.float64)
    for i, (nd2, npos) in enumerate(heap):
        pos[i] = -npos
        d2s[i] = -nd2
    return pos, d2s
