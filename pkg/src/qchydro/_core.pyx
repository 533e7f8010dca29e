# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same operation order as ``_kernels_py`` so results agree bitwise."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()

BACKEND = "cython"


cdef void _fd4_block(const double[:, :, ::1] a, double[:, :, ::1] out, double h) noexcept nogil:
    cdef Py_ssize_t npre = a.shape[0], n = a.shape[1], npost = a.shape[2]
    cdef Py_ssize_t i, j, k, jm1, jm2, jp1, jp2
    cdef double d1, d2, denom = 12.0 * h
    for i in range(npre):
        for j in range(n):
            jp1 = j + 1
            if jp1 >= n:
                jp1 -= n
            jp2 = j + 2
            if jp2 >= n:
                jp2 -= n
            jm1 = j - 1
            if jm1 < 0:
                jm1 += n
            jm2 = j - 2
            if jm2 < 0:
                jm2 += n
            for k in range(npost):
                d1 = a[i, jp1, k] - a[i, jm1, k]
                d2 = a[i, jp2, k] - a[i, jm2, k]
                out[i, j, k] = (8.0 * d1 - d2) / denom


def fd4(a, int axis, double h, out=None):
    """Fourth-order centered first derivative along ``axis`` with periodic wrap.

    ``out``, when given, must be a C-contiguous array of the result's shape and dtype.
    """
    arr = np.ascontiguousarray(a)
    is_complex = np.iscomplexobj(arr)
    if is_complex:
        arr = arr.astype(np.complex128, copy=False)
    else:
        arr = arr.astype(np.float64, copy=False)
    shape = arr.shape
    if axis < 0:
        axis += arr.ndim
    npre = 1
    for s in shape[:axis]:
        npre *= s
    npost = 1
    for s in shape[axis + 1:]:
        npost *= s
    flat = arr.view(np.float64).reshape(npre, shape[axis], -1)
    if out is None:
        out = np.empty(shape, dtype=arr.dtype)
    _fd4_block(flat, out.view(np.float64).reshape(flat.shape[0], flat.shape[1], flat.shape[2]), h)
    return out


cdef void _mm2_block(const double[:, ::1] a, const double[:, ::1] b, double[:, ::1] out) noexcept nogil:
    # rows hold (re00, im00, re01, im01, re10, im10, re11, im11)
    cdef Py_ssize_t m = a.shape[0], i, r, c
    cdef double xr, xi, yr, yi
    for i in range(m):
        for r in range(2):
            for c in range(2):
                xr = a[i, 4 * r] * b[i, 2 * c] - a[i, 4 * r + 1] * b[i, 2 * c + 1]
                xi = a[i, 4 * r] * b[i, 2 * c + 1] + a[i, 4 * r + 1] * b[i, 2 * c]
                yr = a[i, 4 * r + 2] * b[i, 4 + 2 * c] - a[i, 4 * r + 3] * b[i, 4 + 2 * c + 1]
                yi = a[i, 4 * r + 2] * b[i, 4 + 2 * c + 1] + a[i, 4 * r + 3] * b[i, 4 + 2 * c]
                out[i, 4 * r + 2 * c] = xr + yr
                out[i, 4 * r + 2 * c + 1] = xi + yi


def _as_rows(x, shape):
    x = np.ascontiguousarray(np.broadcast_to(x, shape), dtype=np.complex128)
    return x.view(np.float64).reshape(-1, 8)


def matmul2(a, b):
    """Pointwise product of stacks of 2x2 complex matrices (trailing axes)."""
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape, dtype=np.complex128)
    _mm2_block(_as_rows(a, shape), _as_rows(b, shape), out.view(np.float64).reshape(-1, 8))
    return out


cdef void _inner2_block(const double[:, ::1] a, const double[:, ::1] b, double[::1] out) noexcept nogil:
    cdef Py_ssize_t m = a.shape[0], i, k
    cdef double s
    for i in range(m):
        s = a[i, 0] * b[i, 0] + a[i, 1] * b[i, 1]
        for k in range(1, 4):
            s = s + (a[i, 2 * k] * b[i, 2 * k] + a[i, 2 * k + 1] * b[i, 2 * k + 1])
        out[i] = s


def inner_re2(a, b):
    """``Re Tr(A^dagger B)`` for stacks of 2x2 complex matrices."""
    shape = np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape[:len(shape) - 2], dtype=np.float64)
    _inner2_block(_as_rows(a, shape), _as_rows(b, shape), out.reshape(-1))
    return out


cdef double _herm2_block(const double[:, ::1] a, double[:, ::1] out) noexcept nogil:
    # out = (A + A^dagger) / 2; returns max_i ||A - A^dagger||_F^2
    cdef Py_ssize_t m = a.shape[0], i
    cdef double d, worst = 0.0, xr, xi
    for i in range(m):
        out[i, 0] = a[i, 0]
        out[i, 1] = 0.0
        out[i, 6] = a[i, 6]
        out[i, 7] = 0.0
        xr = 0.5 * (a[i, 2] + a[i, 4])
        xi = 0.5 * (a[i, 3] - a[i, 5])
        out[i, 2] = xr
        out[i, 3] = xi
        out[i, 4] = xr
        out[i, 5] = -xi
        d = (a[i, 2] - a[i, 4]) * (a[i, 2] - a[i, 4]) + (a[i, 3] + a[i, 5]) * (a[i, 3] + a[i, 5])
        d = 4.0 * (a[i, 1] * a[i, 1] + a[i, 7] * a[i, 7]) + 2.0 * d
        if d > worst:
            worst = d
    return worst


def hermitize2(a):
    """Hermitian part of a stack of 2x2 matrices and the largest ``||A - A^dagger||_F``."""
    x = _as_rows(a, a.shape)
    out = np.empty(a.shape, dtype=np.complex128)
    cdef double worst = _herm2_block(x, out.view(np.float64).reshape(-1, 8))
    return out, float(np.sqrt(worst))


# -- fused pointwise algebra of the hybrid generator ------------------------------
#
# For n = 2 every input matrix is Hermitian, X = x0 I + x . sigma with real
# coefficients, and the bracket algebra reduces to real dot and cross products
# (see ``_kernels_py.qc_pointwise`` for the derivation).


cdef inline void _pauli(const double* x, double* p) noexcept nogil:
    # x holds one 2x2 complex matrix as 8 doubles (row major, re/im interleaved)
    p[0] = 0.5 * (x[0] + x[6])
    p[1] = x[2]
    p[2] = -x[3]
    p[3] = 0.5 * (x[0] - x[6])


cdef inline void _unpauli(double p0, double p1, double p2, double p3, double* x) noexcept nogil:
    x[0] = p0 + p3
    x[1] = 0.0
    x[2] = p1
    x[3] = -p2
    x[4] = p1
    x[5] = p2
    x[6] = p0 - p3
    x[7] = 0.0


cdef inline void _cross_acc(const double* a, const double* b, double w, double* o) noexcept nogil:
    # o += w * (a x b) on the vector parts (indices 1..3)
    o[0] += w * (a[2] * b[3] - a[3] * b[2])
    o[1] += w * (a[3] * b[1] - a[1] * b[3])
    o[2] += w * (a[1] * b[2] - a[2] * b[1])


cdef void _qc_block(const double[:, ::1] rho, const double[:, ::1] H,
                    const double[:, :, ::1] gr, const double[:, :, ::1] gH, const double[:, :, ::1] gcr,
                    const double[:, ::1] gc, const double[:, ::1] gb, const double[:, ::1] u,
                    const double[::1] c, const double[::1] Dinv, const double[::1] D, double hbar, int dim,
                    double[:, ::1] K, double[:, ::1] drho, double[:, ::1] force, double[:, ::1] W,
                    int want_drho, int three) noexcept nogil:
    # three: Nambu bracket with grad b (3D); otherwise the planar bracket on axes 0, 1
    cdef Py_ssize_t m = rho.shape[0], p
    cdef int a, j, k, e
    cdef double r[4]
    cdef double h[4]
    cdef double g[3][4]
    cdef double hh[3][4]
    cdef double q[3][4]
    cdef double gam[3]
    cdef double gamc[3]
    cdef double ev[3]
    cdef double kv[3]
    cdef double adv[4]
    cdef double w[3]
    cdef double bw, f, dv
    for p in range(m):
        _pauli(&rho[p, 0], r)
        _pauli(&H[p, 0], h)
        for a in range(dim):
            _pauli(&gr[a, p, 0], g[a])
            _pauli(&gH[a, p, 0], hh[a])
            _pauli(&gcr[a, p, 0], q[a])
        for e in range(3):
            gam[e] = 0.0
            gamc[e] = 0.0
            ev[e] = 0.0
        # sum over (a, j, k) cyclic of gb_a (X_j x Y_k - X_k x Y_j)
        for a in range(3 if three else 1):
            if three:
                bw = gb[a, p]
                j = (a + 1) % 3
                k = (a + 2) % 3
            else:
                bw = 1.0
                j = 0
                k = 1
            _cross_acc(g[j], hh[k], bw, gam)
            _cross_acc(g[k], hh[j], -bw, gam)
            _cross_acc(q[j], hh[k], bw, gamc)
            _cross_acc(q[k], hh[j], -bw, gamc)
            for e in range(3):
                ev[e] += bw * (gc[j, p] * hh[k][e + 1] - gc[k, p] * hh[j][e + 1])
        # inner = i kv . sigma,  kv = 2 c gam - ev x r
        kv[0] = 2.0 * c[p] * gam[0] - (ev[1] * r[3] - ev[2] * r[2])
        kv[1] = 2.0 * c[p] * gam[1] - (ev[2] * r[1] - ev[0] * r[3])
        kv[2] = 2.0 * c[p] * gam[2] - (ev[0] * r[2] - ev[1] * r[1])
        dv = hbar * Dinv[p]
        for e in range(3):
            kv[e] = h[e + 1] - dv * kv[e]
        _unpauli(h[0], kv[0], kv[1], kv[2], &K[p, 0])
        if want_drho:
            for e in range(4):
                adv[e] = 0.0
            for a in range(dim):
                for e in range(4):
                    adv[e] += u[a, p] * g[a][e]
            # -(i / hbar) [K, rho] = (2 / hbar) (K x r) . sigma
            f = 2.0 / hbar
            _unpauli(-adv[0],
                     f * (kv[1] * r[3] - kv[2] * r[2]) - adv[1],
                     f * (kv[2] * r[1] - kv[0] * r[3]) - adv[2],
                     f * (kv[0] * r[2] - kv[1] * r[1]) - adv[3],
                     &drho[p, 0])
        for a in range(dim):
            f = -2.0 * D[p] * (r[0] * hh[a][0] + r[1] * hh[a][1] + r[2] * hh[a][2] + r[3] * hh[a][3])
            f -= 2.0 * hbar * (q[a][1] * gam[0] + q[a][2] * gam[1] + q[a][3] * gam[2])
            f -= 2.0 * hbar * (g[a][1] * gamc[0] + g[a][2] * gamc[1] + g[a][3] * gamc[2])
            force[a, p] = f
        if three:
            # W_a = <c rho, i (grad rho x grad H)_a> = -2 c r . (g_j x h_k - g_k x h_j)
            for a in range(3):
                j = (a + 1) % 3
                k = (a + 2) % 3
                for e in range(3):
                    w[e] = 0.0
                _cross_acc(g[j], hh[k], 1.0, w)
                _cross_acc(g[k], hh[j], -1.0, w)
                W[a, p] = -2.0 * c[p] * (r[1] * w[0] + r[2] * w[1] + r[3] * w[2])


def _d8(x, lead=()):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    return x.view(np.float64).reshape(lead + (-1, 8))


def _d1(x, lead=()):
    return np.ascontiguousarray(x, dtype=np.float64).reshape(lead + (-1,))


def qc_pointwise(rho, H, gr, gH, gc, gcr, gb, c, Dinv, D, double hbar, u=None):
    """Generator ``K``, ``drho = -(i/hbar)[K, rho] - u . grad rho`` (when ``u`` is given),
    the bracket force and (3D) the flux ``W``. Matrices must be 2x2 Hermitian;
    ``gb`` is ``None`` for the planar bracket.
    """
    shape = rho.shape[:rho.ndim - 2]
    dim = gr.shape[0]
    three = gb is not None
    want = u is not None
    K = np.empty(shape + (2, 2), dtype=np.complex128)
    drho = np.empty(shape + (2, 2), dtype=np.complex128) if want else np.empty((1, 2, 2), dtype=np.complex128)
    force = np.empty((dim,) + shape)
    W = np.empty((3,) + shape) if three else np.empty((3, 1))
    gbv = _d1(gb, (3,)) if three else np.zeros((3, 1))
    uv = _d1(u, (dim,)) if want else np.zeros((dim, 1))
    _qc_block(_d8(rho), _d8(H), _d8(gr, (dim,)), _d8(gH, (dim,)), _d8(gcr, (dim,)),
              _d1(gc, (dim,)), gbv, uv, _d1(c), _d1(Dinv), _d1(D), hbar, dim,
              K.view(np.float64).reshape(-1, 8), drho.view(np.float64).reshape(-1, 8),
              force.reshape(dim, -1), W.reshape(3, -1), want, three)
    return K, (drho if want else None), force, (W if three else None)


# -- spinor helpers (n = 2) --------------------------------------------------------------


cdef void _outer2_block(const double[:, ::1] p, double[:, ::1] out) noexcept nogil:
    # rho_ab = psi_a conj(psi_b), with the operation order of numpy's complex product
    cdef Py_ssize_t m = p.shape[0], i, a, b
    cdef double ar, ai, br, bi
    for i in range(m):
        for a in range(2):
            ar = p[i, 2 * a]
            ai = p[i, 2 * a + 1]
            for b in range(2):
                br = p[i, 2 * b]
                bi = -p[i, 2 * b + 1]
                out[i, 4 * a + 2 * b] = ar * br - ai * bi
                out[i, 4 * a + 2 * b + 1] = ar * bi + ai * br


def outer2(psi):
    """``psi psi^dagger`` for a stack of 2-spinors (trailing axis)."""
    p = np.ascontiguousarray(psi, dtype=np.complex128)
    out = np.empty(p.shape + (2,), dtype=np.complex128)
    _outer2_block(p.view(np.float64).reshape(-1, 4), out.view(np.float64).reshape(-1, 8))
    return out


cdef double _norm2_block(const double[:, ::1] p, double[::1] norm) noexcept nogil:
    cdef Py_ssize_t m = p.shape[0], i
    cdef double s, d, worst = 0.0
    for i in range(m):
        s = (p[i, 0] * p[i, 0] + p[i, 1] * p[i, 1]) + (p[i, 2] * p[i, 2] + p[i, 3] * p[i, 3])
        norm[i] = sqrt(s)
        d = fabs(norm[i] - 1.0)
        if d > worst:
            worst = d
    return worst


cdef void _scale2_block(const double[:, ::1] p, const double[::1] norm, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t m = p.shape[0], i, k
    for i in range(m):
        for k in range(4):
            out[i, k] = p[i, k] / norm[i]


def renormalize2(psi, double tol):
    """Pointwise unit normalization of 2-spinors; returns ``(psi, max |norm - 1|)``.

    The input is returned untouched when the drift is at most ``tol``.
    """
    p = np.ascontiguousarray(psi, dtype=np.complex128)
    rows = p.view(np.float64).reshape(-1, 4)
    norm = np.empty(rows.shape[0])
    cdef double worst = _norm2_block(rows, norm)
    if worst <= tol:
        return psi, worst
    out = np.empty(p.shape, dtype=np.complex128)
    _scale2_block(rows, norm, out.view(np.float64).reshape(-1, 4))
    return out, worst


cdef void _spinor_rhs_block(const double[:, ::1] K, const double[:, ::1] p, const double[:, :, ::1] gp,
                            const double[:, ::1] u, double inv_hbar, int dim, double[:, ::1] out) noexcept nogil:
    # out = -(i/hbar) K psi - u . grad psi
    cdef Py_ssize_t m = p.shape[0], i, a, b
    cdef int d
    cdef double kr, ki, xr, xi
    for i in range(m):
        for a in range(2):
            kr = 0.0
            ki = 0.0
            for b in range(2):
                xr = K[i, 4 * a + 2 * b]
                xi = K[i, 4 * a + 2 * b + 1]
                kr = kr + (xr * p[i, 2 * b] - xi * p[i, 2 * b + 1])
                ki = ki + (xr * p[i, 2 * b + 1] + xi * p[i, 2 * b])
            xr = inv_hbar * ki
            xi = -inv_hbar * kr
            for d in range(dim):
                xr = xr - u[d, i] * gp[d, i, 2 * a]
                xi = xi - u[d, i] * gp[d, i, 2 * a + 1]
            out[i, 2 * a] = xr
            out[i, 2 * a + 1] = xi


def spinor_rhs2(K, psi, gpsi, u, double hbar):
    """``-(i/hbar) K psi - u . grad psi`` for 2-spinors."""
    dim = gpsi.shape[0]
    out = np.empty(psi.shape, dtype=np.complex128)
    gp = np.ascontiguousarray(gpsi, dtype=np.complex128).view(np.float64).reshape(dim, -1, 4)
    _spinor_rhs_block(_d8(K), np.ascontiguousarray(psi, dtype=np.complex128).view(np.float64).reshape(-1, 4),
                      gp, _d1(u, (dim,)), 1.0 / hbar, dim, out.view(np.float64).reshape(-1, 4))
    return out
