# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop rollout and pooling kernels.

Mirrors ``_fallback.rollout`` step for step. Matrix products go through
BLAS and the gate nonlinearities through numpy's vectorised ufuncs (scalar
libm exp/tanh was the bottleneck); pooling, the cell update and the
Gaussian head run as plain C loops.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, floor
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

DEF MODE_NONE = 0
DEF MODE_SOCIAL = 1
DEF MODE_OCCUPANCY = 2


cdef inline double _clip(double x, double lo, double hi) nogil:
    return lo if x < lo else (hi if x > hi else x)


cdef inline int _cell(double dx, double dy, double extent, int g) nogil:
    cdef double fm = floor((dx + extent) * g / (2 * extent))
    cdef double fn = floor((dy + extent) * g / (2 * extent))
    if fm < 0 or fm >= g or fn < 0 or fn >= g:
        return -1
    return <int>fm * g + <int>fn


def pool_scene(double[:, ::1] pos, double[:, ::1] h, long[::1] segment, double extent, int cells):
    """(N, C * D) social tensors; same pair order as ``pooling.pool_scene``."""
    cdef Py_ssize_t n = pos.shape[0], d = h.shape[1], i, j, k
    cdef int C = cells * cells, cell
    out_arr = np.zeros((n, C * d))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(n):
            if j == i or segment[j] != segment[i]:
                continue
            cell = _cell(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1], extent, cells)
            if cell < 0:
                continue
            for k in range(d):
                out[i, cell * d + k] += h[j, k]
    return out_arr


def occupancy_scene(double[:, ::1] pos, long[::1] segment, double extent, int cells):
    cdef Py_ssize_t n = pos.shape[0], i, j
    cdef int C = cells * cells, cell
    out_arr = np.zeros((n, C))
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(n):
            if j == i or segment[j] != segment[i]:
                continue
            cell = _cell(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1], extent, cells)
            if cell >= 0:
                out[i, cell] += 1.0
    return out_arr


cdef void _gemm_bt(double[:, ::1] a, double[:, ::1] w, double[:, ::1] out) noexcept nogil:
    """out = a @ w.T for row-major a (N, K), w (M, K), out (N, M)."""
    cdef int n = <int>a.shape[0], k = <int>a.shape[1], m = <int>w.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b'T', tb = b'N'
    if n == 0 or m == 0:
        return
    if k == 0:
        for i in range(n):
            for j in range(m):
                out[i, j] = 0.0
        return
    dgemm(&ta, &tb, &m, &n, &k, &one, &w[0, 0], &k, &a[0, 0], &k, &zero, &out[0, 0], &m)


def rollout_kernel(double[:, :, ::1] obs, long[::1] segment, int mode, double extent, int cells,
                   double[:, ::1] coordW, double[::1] coordb,
                   double[:, ::1] poolW, double[::1] poolb,
                   double[:, ::1] Wx, double[:, ::1] Wp, double[:, ::1] Wh, double[::1] b,
                   double[:, ::1] headW, double[::1] headb,
                   double log_sigma_min, double log_sigma_max, double rho_raw_max):
    cdef Py_ssize_t n = obs.shape[0]
    cdef Py_ssize_t D = Wh.shape[1], E = coordW.shape[0]
    cdef int C = cells * cells
    out_arr = np.zeros((n, 5, 5))
    if n == 0:
        return out_arr
    cdef Py_ssize_t K = poolW.shape[1] if mode != MODE_NONE else 1
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] h = np.zeros((n, D))
    cdef double[:, ::1] pos = np.zeros((n, 2))
    cdef double[:, ::1] disp = np.zeros((n, 2))
    cdef double[:, ::1] pooled = np.zeros((n, K))
    cdef double[:, ::1] ec = np.zeros((n, E))
    cdef double[:, ::1] ep = np.zeros((n, E))
    z_arr = np.zeros((n, 4 * D))
    s_arr = np.zeros((n, 4 * D))
    g_arr = np.zeros((n, D))
    c_arr = np.zeros((n, D))
    tc_arr = np.zeros((n, D))
    gate_in = z_arr[:, 2 * D:3 * D]
    cdef double[:, ::1] z = z_arr
    cdef double[:, ::1] s = s_arr
    cdef double[:, ::1] g = g_arr
    cdef double[:, ::1] tc = tc_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] zp = np.zeros((n, 4 * D))
    cdef double[:, ::1] zh = np.zeros((n, 4 * D))
    cdef double[:, ::1] raw = np.zeros((n, 5))
    cdef Py_ssize_t t, i, j, k, e, q, base
    cdef int cell
    cdef double acc

    for t in range(9):
        if t < 5:
            for i in range(n):
                pos[i, 0] = obs[i, t, 0]
                pos[i, 1] = obs[i, t, 1]
                if t > 0:
                    disp[i, 0] = obs[i, t, 0] - obs[i, t - 1, 0]
                    disp[i, 1] = obs[i, t, 1] - obs[i, t - 1, 1]
                else:
                    disp[i, 0] = 0.0
                    disp[i, 1] = 0.0
        for i in range(n):
            for e in range(E):
                acc = disp[i, 0] * coordW[e, 0] + disp[i, 1] * coordW[e, 1] + coordb[e]
                ec[i, e] = acc if acc > 0 else 0.0
        _gemm_bt(ec, Wx, z)
        if mode != MODE_NONE:
            for i in range(n):
                for k in range(K):
                    pooled[i, k] = 0.0
                for j in range(n):
                    if j == i or segment[j] != segment[i]:
                        continue
                    cell = _cell(pos[j, 0] - pos[i, 0], pos[j, 1] - pos[i, 1], extent, cells)
                    if cell < 0:
                        continue
                    if mode == MODE_SOCIAL:
                        base = cell * D
                        for k in range(D):
                            pooled[i, base + k] += h[j, k]
                    else:
                        pooled[i, cell] += 1.0
            _gemm_bt(pooled, poolW, ep)
            for i in range(n):
                for e in range(E):
                    acc = ep[i, e] + poolb[e]
                    ep[i, e] = acc if acc > 0 else 0.0
            _gemm_bt(ep, Wp, zp)
            for i in range(n):
                for k in range(4 * D):
                    z[i, k] = z[i, k] + zp[i, k]
        _gemm_bt(h, Wh, zh)
        for i in range(n):
            for k in range(4 * D):
                z[i, k] = z[i, k] + (zh[i, k] + b[k])
        np.negative(z_arr, out=s_arr)
        np.exp(s_arr, out=s_arr)
        s_arr += 1.0
        np.divide(1.0, s_arr, out=s_arr)
        np.tanh(gate_in, out=g_arr)
        for i in range(n):
            for k in range(D):
                c[i, k] = s[i, D + k] * c[i, k] + s[i, k] * g[i, k]
        np.tanh(c_arr, out=tc_arr)
        for i in range(n):
            for k in range(D):
                h[i, k] = s[i, 3 * D + k] * tc[i, k]
        if t >= 4:
            _gemm_bt(h, headW, raw)
            for i in range(n):
                for q in range(5):
                    raw[i, q] = raw[i, q] + headb[q]
                out[i, t - 4, 0] = pos[i, 0] + raw[i, 0]
                out[i, t - 4, 1] = pos[i, 1] + raw[i, 1]
                out[i, t - 4, 2] = exp(_clip(raw[i, 2], log_sigma_min, log_sigma_max))
                out[i, t - 4, 3] = exp(_clip(raw[i, 3], log_sigma_min, log_sigma_max))
                out[i, t - 4, 4] = tanh(_clip(raw[i, 4], -rho_raw_max, rho_raw_max))
                pos[i, 0] = out[i, t - 4, 0]
                pos[i, 1] = out[i, t - 4, 1]
                disp[i, 0] = raw[i, 0]
                disp[i, 1] = raw[i, 1]
    return out_arr
