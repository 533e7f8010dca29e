"""Pure-numpy reference kernels.

Used when the compiled extension is unavailable or when ``QCHYDRO_BACKEND=python``
is set. The arithmetic order matches ``_core.pyx`` term by term, so both
backends produce identical bits on IEEE hardware.
"""

import numpy as np

BACKEND = "python"


def fd4(a, axis, h, out=None):
    """Fourth-order centered first derivative along ``axis`` with periodic wrap."""
    a = np.asarray(a)
    if out is None:
        out = np.empty(a.shape, dtype=np.complex128 if np.iscomplexobj(a) else np.float64)
    if np.iscomplexobj(a):
        out.real = fd4(a.real, axis, h)
        out.imag = fd4(a.imag, axis, h)
        return out
    d1 = np.roll(a, -1, axis) - np.roll(a, 1, axis)
    d2 = np.roll(a, -2, axis) - np.roll(a, 2, axis)
    out[...] = (8.0 * d1 - d2) / (12.0 * h)
    return out


def matmul2(a, b):
    """Pointwise product of stacks of 2x2 complex matrices (trailing axes).

    Real and imaginary parts are formed explicitly so the rounding matches the
    compiled kernel.
    """
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = np.broadcast_to(a, shape)
    b = np.broadcast_to(b, shape)
    ar, ai = a.real, a.imag
    br, bi = b.real, b.imag
    out = np.empty(shape, dtype=np.complex128)
    for r in range(2):
        for c in range(2):
            xr = ar[..., r, 0] * br[..., 0, c] - ai[..., r, 0] * bi[..., 0, c]
            xi = ar[..., r, 0] * bi[..., 0, c] + ai[..., r, 0] * br[..., 0, c]
            yr = ar[..., r, 1] * br[..., 1, c] - ai[..., r, 1] * bi[..., 1, c]
            yi = ar[..., r, 1] * bi[..., 1, c] + ai[..., r, 1] * br[..., 1, c]
            out.real[..., r, c] = xr + yr
            out.imag[..., r, c] = xi + yi
    return out


def inner_re2(a, b):
    """``Re Tr(A^dagger B)`` for stacks of 2x2 complex matrices, summed in row-major entry order."""
    shape = np.broadcast_shapes(a.shape, b.shape)
    a = np.broadcast_to(a, shape)
    b = np.broadcast_to(b, shape)
    s = None
    for r in range(2):
        for c in range(2):
            t = a.real[..., r, c] * b.real[..., r, c] + a.imag[..., r, c] * b.imag[..., r, c]
            s = t if s is None else s + t
    return s



def hermitize2(a):
    """Hermitian part of a stack of 2x2 matrices and the largest ``||A - A^dagger||_F``."""
    out = np.empty(a.shape, dtype=np.complex128)
    out[..., 0, 0] = a[..., 0, 0].real
    out[..., 1, 1] = a[..., 1, 1].real
    x = 0.5 * (a[..., 0, 1].real + a[..., 1, 0].real) + 1j * (0.5 * (a[..., 0, 1].imag - a[..., 1, 0].imag))
    out[..., 0, 1] = x
    out[..., 1, 0] = np.conj(x)
    dr = a[..., 0, 1].real - a[..., 1, 0].real
    di = a[..., 0, 1].imag + a[..., 1, 0].imag
    d = 4.0 * (a[..., 0, 0].imag ** 2 + a[..., 1, 1].imag ** 2) + 2.0 * (dr * dr + di * di)
    return out, float(np.sqrt(np.max(d))) if d.size else 0.0


def _pauli(x):
    """Real Pauli coefficients ``(x0, x1, x2, x3)`` of Hermitian 2x2 fields, stacked first."""
    return np.stack([
        0.5 * (x[..., 0, 0].real + x[..., 1, 1].real),
        x[..., 0, 1].real,
        -x[..., 0, 1].imag,
        0.5 * (x[..., 0, 0].real - x[..., 1, 1].real),
    ])


def _unpauli(p0, v):
    out = np.empty(p0.shape + (2, 2), dtype=np.complex128)
    out[..., 0, 0] = p0 + v[2]
    out[..., 0, 1] = v[0] - 1j * v[1]
    out[..., 1, 0] = v[0] + 1j * v[1]
    out[..., 1, 1] = p0 - v[2]
    return out


def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


def qc_pointwise(rho, H, gr, gH, gc, gcr, gb, c, Dinv, D, hbar, u=None):
    """Generator ``K``, ``drho = -(i/hbar)[K, rho] - u . grad rho`` (when ``u`` is given),
    the bracket force and (3D) the flux ``W`` for 2x2 Hermitian fields.

    Writing ``X = x0 + x . sigma``, a product of Hermitian matrices is
    ``XY = x0 y0 + x.y + (x0 y + y0 x + i x x y) . sigma``. The bracket terms
    then reduce to the real vectors

        gam  = sum gb_a (g_j x h_k - g_k x h_j)      (from {rho, H} + {H, rho} = 2 i gam . sigma)
        gamc = the same with grad(c rho) for grad rho
        e    = sum gb_a (dc_j h_k - dc_k h_j)         ({c, H} = e0 + e . sigma)

    giving ``K = H - hbar/D (2 c gam - e x r) . sigma``,
    ``-(i/hbar)[K, rho] = (2/hbar)(K x r) . sigma`` and
    ``force_a = -2 D <r, h_a> - 2 hbar (q_a . gam + g_a . gamc)``.
    ``gb`` is ``None`` on planar grids (``grad b = e3``).
    """
    dim = gr.shape[0]
    r = _pauli(rho)
    h = _pauli(H)
    g = [_pauli(gr[a]) for a in range(dim)]
    hh = [_pauli(gH[a]) for a in range(dim)]
    q = [_pauli(gcr[a]) for a in range(dim)]
    triples = [(a, (a + 1) % 3, (a + 2) % 3) for a in range(3)] if gb is not None else [(2, 0, 1)]
    gam = 0.0
    gamc = 0.0
    ev = 0.0
    for a, j, k in triples:
        bw = 1.0 if gb is None else gb[a]
        gam = gam + bw * (_cross(g[j][1:], hh[k][1:]) - _cross(g[k][1:], hh[j][1:]))
        gamc = gamc + bw * (_cross(q[j][1:], hh[k][1:]) - _cross(q[k][1:], hh[j][1:]))
        ev = ev + bw * (gc[j] * hh[k][1:] - gc[k] * hh[j][1:])
    kv = h[1:] - hbar * Dinv * (2.0 * c * gam - _cross(ev, r[1:]))
    K = _unpauli(h[0], kv)
    drho = None
    if u is not None:
        adv = sum(u[a] * g[a] for a in range(dim))
        drho = _unpauli(-adv[0], (2.0 / hbar) * _cross(kv, r[1:]) - adv[1:])
    force = np.stack([
        -2.0 * D * np.sum(r * hh[a], axis=0)
        - 2.0 * hbar * (np.sum(q[a][1:] * gam, axis=0) + np.sum(g[a][1:] * gamc, axis=0))
        for a in range(dim)
    ])
    W = None
    if gb is not None:
        W = np.stack([
            -2.0 * c * np.sum(r[1:] * (_cross(g[j][1:], hh[k][1:]) - _cross(g[k][1:], hh[j][1:])), axis=0)
            for a, j, k in triples
        ])
    return K, drho, force, W


def outer2(psi):
    """``psi psi^dagger`` for a stack of 2-spinors (trailing axis)."""
    ar, ai = psi.real[..., :, None], psi.imag[..., :, None]
    br, bi = psi.real[..., None, :], -psi.imag[..., None, :]
    out = np.empty(psi.shape + (2,), dtype=np.complex128)
    out.real = ar * br - ai * bi
    out.imag = ar * bi + ai * br
    return out


def renormalize2(psi, tol):
    """Pointwise unit normalization of 2-spinors; returns ``(psi, max |norm - 1|)``.

    The input is returned untouched when the drift is at most ``tol``.
    """
    sq = psi.real**2 + psi.imag**2
    norm = np.sqrt(sq[..., 0] + sq[..., 1])
    worst = float(np.max(np.abs(norm - 1.0))) if norm.size else 0.0
    if worst <= tol:
        return psi, worst
    out = np.empty(psi.shape, dtype=np.complex128)
    out.real = psi.real / norm[..., None]
    out.imag = psi.imag / norm[..., None]
    return out, worst


def spinor_rhs2(K, psi, gpsi, u, hbar):
    """``-(i/hbar) K psi - u . grad psi`` for 2-spinors."""
    kp = np.einsum("...ab,...b->...a", K, psi)
    out = (kp.imag / hbar) - 1j * (kp.real / hbar)
    for d in range(gpsi.shape[0]):
        out = out - u[d][..., None] * gpsi[d]
    return out
