# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled query kernels.

Function-for-function mirror of `fallback.py`; semantics (including the
smaller-position tie rule) are defined there. Built with -ffp-contract=off
so squared-chord arithmetic matches the numpy fallback bit for bit.
"""

from libc.math cimport sin, cos, asin, sqrt

import numpy as np

NAME = "compiled"

cdef double DEG = 0.017453292519943295
cdef double TWO_R = 2.0 * 6371008.8
cdef double INF = float("inf")


def haversine_to_many(double lat, double lon, double[::1] lats, double[::1] lons):
    cdef Py_ssize_t n = lats.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double phi1 = lat * DEG
    cdef double cphi1 = cos(phi1)
    cdef Py_ssize_t i
    cdef double s1, s2, h
    with nogil:
        for i in range(n):
            s1 = sin((lats[i] - lat) * DEG / 2.0)
            s2 = sin((lons[i] - lon) * DEG / 2.0)
            h = s1 * s1 + (cphi1 * cos(lats[i] * DEG)) * (s2 * s2)
            if h > 1.0:
                h = 1.0
            elif h < 0.0:
                h = 0.0
            out[i] = TWO_R * asin(sqrt(h))
    return out_arr


def chord2_to_many(double qx, double qy, double qz,
                   double[::1] xs, double[::1] ys, double[::1] zs):
    cdef Py_ssize_t n = xs.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double dx, dy, dz
    with nogil:
        for i in range(n):
            dx = xs[i] - qx
            dy = ys[i] - qy
            dz = zs[i] - qz
            out[i] = dx * dx + dy * dy + dz * dz
    return out_arr


cdef inline bint _worse(double d2a, long long pa, double d2b, long long pb) noexcept nogil:
    # (d2a, pa) > (d2b, pb) in the (distance, position) ordering.
    return d2a > d2b or (d2a == d2b and pa > pb)


cdef inline void _heap_push(double[::1] hd2, long long[::1] hpos,
                            Py_ssize_t* size, double d2, long long pos) noexcept nogil:
    cdef Py_ssize_t i = size[0]
    cdef Py_ssize_t parent
    cdef double td
    cdef long long tp
    hd2[i] = d2
    hpos[i] = pos
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if _worse(hd2[i], hpos[i], hd2[parent], hpos[parent]):
            td = hd2[i]; hd2[i] = hd2[parent]; hd2[parent] = td
            tp = hpos[i]; hpos[i] = hpos[parent]; hpos[parent] = tp
            i = parent
        else:
            break


cdef inline void _heap_replace_top(double[::1] hd2, long long[::1] hpos,
                                   Py_ssize_t size, double d2, long long pos) noexcept nogil:
    cdef Py_ssize_t i = 0
    cdef Py_ssize_t child
    cdef double td
    cdef long long tp
    hd2[0] = d2
    hpos[0] = pos
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and _worse(hd2[child + 1], hpos[child + 1], hd2[child], hpos[child]):
            child += 1
        if _worse(hd2[child], hpos[child], hd2[i], hpos[i]):
            td = hd2[i]; hd2[i] = hd2[child]; hd2[child] = td
            tp = hpos[i]; hpos[i] = hpos[child]; hpos[child] = tp
            i = child
        else:
            break


def kd_nearest(long long[::1] node_dim, double[::1] node_split,
               long long[::1] node_left, long long[::1] node_right,
               long long[::1] perm,
               double[::1] xs, double[::1] ys, double[::1] zs,
               double qx, double qy, double qz):
    cdef double q[3]
    q[0] = qx; q[1] = qy; q[2] = qz
    cdef long long stack_node[128]
    cdef double stack_pd2[128]
    cdef Py_ssize_t top = 0
    cdef double best_d2 = INF
    cdef long long best_pos = -1
    cdef long long node, near, far, pos
    cdef Py_ssize_t j
    cdef double pd2, qd, fpd2, dx, dy, dz, d2
    stack_node[0] = 0
    stack_pd2[0] = 0.0
    top = 1
    with nogil:
        while top > 0:
            top -= 1
            node = stack_node[top]
            pd2 = stack_pd2[top]
            if pd2 > best_d2:
                continue
            while node_dim[node] >= 0:
                qd = q[node_dim[node]] - node_split[node]
                if qd < 0.0:
                    near = node_left[node]; far = node_right[node]
                else:
                    near = node_right[node]; far = node_left[node]
                fpd2 = qd * qd
                if fpd2 <= best_d2:
                    stack_node[top] = far
                    stack_pd2[top] = fpd2
                    top += 1
                node = near
            for j in range(node_left[node], node_right[node]):
                pos = perm[j]
                dx = xs[pos] - qx
                dy = ys[pos] - qy
                dz = zs[pos] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best_d2 or (d2 == best_d2 and pos < best_pos):
                    best_d2 = d2
                    best_pos = pos
    return best_pos, best_d2


def kd_knn(long long[::1] node_dim, double[::1] node_split,
           long long[::1] node_left, long long[::1] node_right,
           long long[::1] perm,
           double[::1] xs, double[::1] ys, double[::1] zs,
           double qx, double qy, double qz, Py_ssize_t k):
    cdef double q[3]
    q[0] = qx; q[1] = qy; q[2] = qz
    hd2_arr = np.empty(k, dtype=np.float64)
    hpos_arr = np.empty(k, dtype=np.int64)
    cdef double[::1] hd2 = hd2_arr
    cdef long long[::1] hpos = hpos_arr
    cdef Py_ssize_t size = 0
    cdef long long stack_node[128]
    cdef double stack_pd2[128]
    cdef Py_ssize_t top = 0
    cdef long long node, near, far, pos
    cdef Py_ssize_t j
    cdef double pd2, qd, fpd2, dx, dy, dz, d2
    stack_node[0] = 0
    stack_pd2[0] = 0.0
    top = 1
    with nogil:
        while top > 0:
            top -= 1
            node = stack_node[top]
            pd2 = stack_pd2[top]
            if size == k and pd2 > hd2[0]:
                continue
            while node_dim[node] >= 0:
                qd = q[node_dim[node]] - node_split[node]
                if qd < 0.0:
                    near = node_left[node]; far = node_right[node]
                else:
                    near = node_right[node]; far = node_left[node]
                fpd2 = qd * qd
                if size < k or fpd2 <= hd2[0]:
                    stack_node[top] = far
                    stack_pd2[top] = fpd2
                    top += 1
                node = near
            for j in range(node_left[node], node_right[node]):
                pos = perm[j]
                dx = xs[pos] - qx
                dy = ys[pos] - qy
                dz = zs[pos] - qz
                d2 = dx * dx + dy * dy + dz * dz
                if size < k:
                    _heap_push(hd2, hpos, &size, d2, pos)
                elif _worse(hd2[0], hpos[0], d2, pos):
                    _heap_replace_top(hd2, hpos, size, d2, pos)
    return hpos_arr[:size].copy(), hd2_arr[:size].copy()
