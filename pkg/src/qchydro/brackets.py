"""Geometric kernels of the hybrid fluid model.

Gradients enter as stacks with the axis index first. Planar fields are handled by
passing two-component gradients to the planar bracket, or three-component
gradients with a zero third slot to the Nambu forms.
"""

from __future__ import annotations

import numpy as np

from . import fields
from .errors import ShapeError, UnnormalizedState, UnsupportedOperation
from .hermitian import commutator, inner_re, mm

NORM_TOL = 1e-8


def _is_mat(a):
    return a.ndim >= 2 and a.dtype.kind == "c" and a.shape[-1] == a.shape[-2]


def _prod(x, y):
    """Product of two slots that may each be scalar- or matrix-valued, in written order."""
    xm = _is_mat(x)
    ym = _is_mat(y)
    if xm and ym:
        return mm(x, y)
    if xm:
        return x * y[..., None, None]
    if ym:
        return x[..., None, None] * y
    return x * y


def _scale(s, m):
    """Scalar field times a (possibly stacked) matrix-valued field."""
    s = np.asarray(s)
    if _is_mat(m) and s.ndim:
        return s[..., None, None] * m
    return s * m


def embed3(g):
    """Pad a two-component gradient stack with a zero third component."""
    if g.shape[0] == 3:
        return g
    return np.concatenate([g, np.zeros((1,) + g.shape[1:], dtype=g.dtype)])


def cross_ordered(gf, gg):
    """``(gF x gG)_i = eps_ijk gF_j gG_k`` keeping the written product order."""
    return np.stack(
        [
            _prod(gf[1], gg[2]) - _prod(gf[2], gg[1]),
            _prod(gf[2], gg[0]) - _prod(gf[0], gg[2]),
            _prod(gf[0], gg[1]) - _prod(gf[1], gg[0]),
        ]
    )


def nambu_scalar(gb, gf, gg):
    """``grad b . grad F x grad G`` for real three-vectors (axis index first)."""
    gb, gf, gg = (np.asarray(v, dtype=np.float64) for v in (gb, gf, gg))
    return (
        gb[0] * (gf[1] * gg[2] - gf[2] * gg[1])
        + gb[1] * (gf[2] * gg[0] - gf[0] * gg[2])
        + gb[2] * (gf[0] * gg[1] - gf[1] * gg[0])
    )


def nambu_scalar_field(b, f, g, grid):
    if grid.dim != 3:
        raise UnsupportedOperation("Nambu bracket of fields needs a 3D grid")
    return nambu_scalar(fields.grad(b, grid), fields.grad(f, grid), fields.grad(g, grid))


def nambu_matrix(gb, gf, gg):
    """``eps_ijk (d_i b)(d_j F)(d_k G)`` with ``F`` the left factor.

    Either of ``gf``/``gg`` may be a scalar gradient; the result is then a scalar
    multiple of the other slot.
    """
    gf = np.asarray(gf)
    gg = np.asarray(gg)
    if gf.shape[0] != 3 or gg.shape[0] != 3 or np.shape(gb)[0] != 3:
        raise ShapeError("Nambu slots need three gradient components")
    fm = gf.ndim >= 3 and gf.shape[-1] == gf.shape[-2] and gf.dtype.kind == "c"
    gm = gg.ndim >= 3 and gg.shape[-1] == gg.shape[-2] and gg.dtype.kind == "c"
    if fm and gm and gf.shape[-1] != gg.shape[-1]:
        raise ShapeError(f"Hilbert dimensions {gf.shape[-1]} and {gg.shape[-1]} differ")
    gb = np.asarray(gb)
    out = None
    for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
        term = _prod(gf[j], gg[k]) - _prod(gf[k], gg[j])
        term = _scale(gb[i], term) if np.ndim(gb[i]) else gb[i] * term
        out = term if out is None else out + term
    return out


def planar_bracket_grads(gf, gg):
    """``d_x F d_y G - d_y F d_x G`` from two-component gradients, written order kept."""
    if gf.shape[0] != 2 or gg.shape[0] != 2:
        raise ShapeError("planar bracket needs two gradient components")
    return _prod(gf[0], gg[1]) - _prod(gf[1], gg[0])


def planar_bracket(f, g, grid):
    if grid.dim != 2:
        raise UnsupportedOperation("planar bracket is defined on 2D grids only")
    return planar_bracket_grads(fields.grad(f, grid), fields.grad(g, grid))


def mead_connection(rho, grid, hbar=1.0, grad_rho=None):
    """``Gamma_i = (i hbar / 2) [rho, d_i rho]``."""
    if grad_rho is None:
        grad_rho = fields.grad_h(rho, grid)
    return np.stack([(0.5j * hbar) * commutator(rho, g) for g in grad_rho])


def gamma_cross_gradb(gamma3, gb):
    """``(Gamma x grad b)_i = eps_ijk Gamma_j d_k b`` for three-component stacks."""
    return np.stack(
        [
            _scale(gb[2], gamma3[1]) - _scale(gb[1], gamma3[2]),
            _scale(gb[0], gamma3[2]) - _scale(gb[2], gamma3[0]),
            _scale(gb[1], gamma3[0]) - _scale(gb[0], gamma3[1]),
        ]
    )


def von_neumann(D, rho, gb, c, grid, hbar=1.0, gamma=None):
    """Hybrid von Neumann operator ``D rho + div(c Gamma x grad b)``.

    ``gb`` is the three-component gradient of the backreaction field; on planar
    grids pass ``(0, 0, beta)`` arrays together with ``c``.
    """
    if gamma is None:
        gamma = mead_connection(rho, grid, hbar)
    flux = gamma_cross_gradb(embed3(gamma), gb)
    flux = _scale(c, flux[: grid.dim])
    return _scale(D, rho) + fields.div_h(flux, grid)


def gamma_cross_gradH(gamma3, gH3):
    """Real vector ``<Gamma, x grad H>_j = eps_jab <Gamma_a, d_b H>``."""
    p = lambda a, b: inner_re(gamma3[a], gH3[b])  # noqa: E731
    return np.stack([p(1, 2) - p(2, 1), p(2, 0) - p(0, 2), p(0, 1) - p(1, 0)])


def stress_tensor(p, c, gb, gamma, gH, dim=3):
    """Symmetric stress tensor ``T[j, k]`` (leading two axes) built from the Mead connection.

    All gradient stacks are three-component; ``dim`` trims the result for planar grids.
    """
    gamma = embed3(gamma)
    gH = embed3(gH)
    gb = np.asarray(gb)
    x = gamma_cross_gradH(gamma, gH)
    bx = gb[0] * x[0] + gb[1] * x[1] + gb[2] * x[2]
    iso = p - c * bx
    b_cross_gamma = np.stack(
        [
            _scale(gb[1], gamma[2]) - _scale(gb[2], gamma[1]),
            _scale(gb[2], gamma[0]) - _scale(gb[0], gamma[2]),
            _scale(gb[0], gamma[1]) - _scale(gb[1], gamma[0]),
        ]
    )
    h_cross_b = np.stack(
        [
            _scale(gb[2], gH[1]) - _scale(gb[1], gH[2]),
            _scale(gb[0], gH[2]) - _scale(gb[2], gH[0]),
            _scale(gb[1], gH[0]) - _scale(gb[0], gH[1]),
        ]
    )
    rows = []
    for j in range(dim):
        row = []
        for k in range(dim):
            t = c * (x[j] * gb[k] + inner_re(b_cross_gamma[j], gH[k]) + inner_re(h_cross_b[j], gamma[k]))
            if j == k:
                t = t + iso
            row.append(t)
        rows.append(np.stack(row))
    return np.stack(rows)


def _check_norm(psi, tol=NORM_TOL):
    norm = np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1))
    err = float(np.max(np.abs(norm - 1.0)))
    if err > tol:
        raise UnnormalizedState(f"spinor norm deviates from 1 by {err:.3e}", drift=err)
    return err


def spinor_inner_re(a, b):
    """``Re <a, b>`` over the trailing Hilbert axis."""
    return np.sum(a.real * b.real + a.imag * b.imag, axis=-1)


def berry_connection(psi, grid, hbar=1.0, grad_psi=None, check=True):
    """``A = <psi, -i hbar grad psi>`` (real part of the Hilbert pairing)."""
    if check:
        _check_norm(psi)
    if grad_psi is None:
        grad_psi = fields.grad(psi, grid)
    return hbar * np.sum(psi.real * grad_psi.imag - psi.imag * grad_psi.real, axis=-1)


def apply(m, psi):
    """Matrix field times spinor field."""
    return np.einsum("...ab,...b->...a", m, psi)


def fluctuation_force(psi, gH, check=True):
    """``F~_i = -(d_i H - <psi, d_i H psi>)`` per axis."""
    if check:
        _check_norm(psi)
    n = psi.shape[-1]
    eye = np.eye(n)
    out = []
    for g in gH:
        mean = spinor_inner_re(psi, apply(g, psi))
        out.append(-(g - mean[..., None, None] * eye))
    return np.stack(out)


def berry_curvature_from_rho(rho, grad_rho, hbar=1.0):
    """Planar Berry curvature ``B = e3 . curl A`` of a pure state written through the
    projector: ``B = -i hbar Tr(rho [d_x rho, d_y rho])``. Gauge invariant, so it also
    serves density-matrix runs that start pure."""
    t = np.trace(mm(rho, commutator(grad_rho[0], grad_rho[1])), axis1=-2, axis2=-1)
    return hbar * t.imag
