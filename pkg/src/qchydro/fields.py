"""Periodic structured grids and the finite-difference calculus used by every model.

Array layouts (``S`` is ``grid.shape``):

* scalar field      ``S``
* vector field      ``(dim,) + S``
* Hermitian field   ``S + (n, n)`` complex
* per-axis matrices ``(dim,) + S + (n, n)``
* spinor field      ``S + (n,)`` complex

All first derivatives use the fourth-order centered stencil
``(8 (f[i+1] - f[i-1]) - (f[i+2] - f[i-2])) / (12 h)`` with periodic wraparound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import IncompatibleRHS, UnsupportedOperation

STENCIL_HALF_WIDTH = 2
MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    """Uniform periodic box with ``shape[d]`` cells of width ``spacing[d]``."""

    shape: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        if len(shape) not in (2, 3):
            raise ValueError(f"grid dim must be 2 or 3, got {len(shape)}")
        if len(spacing) != len(shape):
            raise ValueError("spacing and shape must have the same length")
        if any(n < MIN_CELLS for n in shape):
            raise ValueError(f"need at least {MIN_CELLS} cells per axis, got {shape}")
        if any(not h > 0 for h in spacing):
            raise ValueError(f"spacings must be positive, got {spacing}")

    @classmethod
    def cube(cls, n, length=2 * np.pi, dim=3):
        return cls((n,) * dim, (length / n,) * dim)

    @property
    def dim(self):
        return len(self.shape)

    @property
    def extent(self):
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    @property
    def cell_volume(self):
        return math.prod(self.spacing)

    @property
    def volume(self):
        return math.prod(self.extent)

    @property
    def size(self):
        return math.prod(self.shape)

    def axes(self):
        """1D node coordinates ``i * h`` per axis."""
        return [np.arange(n) * h for n, h in zip(self.shape, self.spacing)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def wavenumbers(self):
        return [2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.shape, self.spacing)]


# -- differential operators -------------------------------------------------


def diff(f, grid, axis):
    """d/dx_axis of any field whose leading axes are the spatial axes."""
    return kernels.fd4(f, axis, grid.spacing[axis])


def grad(f, grid):
    """Gradient of a scalar, Hermitian or spinor field; the axis index is prepended."""
    f = np.asarray(f)
    dtype = np.complex128 if np.iscomplexobj(f) else np.float64
    out = np.empty((grid.dim,) + f.shape, dtype=dtype)
    for a in range(grid.dim):
        kernels.fd4(f, a, grid.spacing[a], out=out[a])
    return out


grad_h = grad


def div(v, grid):
    """Divergence of a vector field (or of per-axis matrices, entrywise)."""
    if v.shape[0] != grid.dim:
        raise ValueError(f"expected {grid.dim} components, got {v.shape[0]}")
    out = diff(v[0], grid, 0)
    for a in range(1, grid.dim):
        out = out + diff(v[a], grid, a)
    return out


div_h = div


def curl(v, grid, planar=False):
    """Curl of a 3D vector field. On a 2D grid only ``planar=True`` is allowed and the
    scalar ``e3 . curl v = d_x v_y - d_y v_x`` is returned."""
    if grid.dim == 2:
        if not planar:
            raise UnsupportedOperation("curl on a 2D grid needs planar=True")
        return diff(v[1], grid, 0) - diff(v[0], grid, 1)
    if v.shape[0] != 3:
        raise ValueError("curl needs 3 components")
    return np.stack(
        [
            diff(v[2], grid, 1) - diff(v[1], grid, 2),
            diff(v[0], grid, 2) - diff(v[2], grid, 0),
            diff(v[1], grid, 0) - diff(v[0], grid, 1),
        ]
    )


def advect(u, grad_f):
    """``u . grad f`` for a precomputed gradient (axis index leading on both)."""
    ndim_extra = grad_f.ndim - u.ndim
    uu = u.reshape(u.shape + (1,) * ndim_extra)
    out = uu[0] * grad_f[0]
    for a in range(1, u.shape[0]):
        out = out + uu[a] * grad_f[a]
    return out


# Second derivatives exist for verification only; no model path calls them.


def second_diff(f, grid, axis):
    """Fourth-order centered second derivative along ``axis``."""
    h = grid.spacing[axis]
    s1 = np.roll(f, -1, axis) + np.roll(f, 1, axis)
    s2 = np.roll(f, -2, axis) + np.roll(f, 2, axis)
    return (16.0 * s1 - s2 - 30.0 * f) / (12.0 * h * h)


def laplacian(f, grid):
    out = second_diff(f, grid, 0)
    for a in range(1, grid.dim):
        out = out + second_diff(f, grid, a)
    return out


def spectral_laplacian(f, grid):
    """Laplacian with the exact Fourier symbol ``-|k|^2``."""
    k2 = _symbol(grid, "spectral")
    return np.real(np.fft.ifftn(-k2 * np.fft.fftn(f)))


# -- reductions, sampling, Poisson ------------------------------------------


def integrate(f, grid):
    """Cell sum times cell volume. The summation order depends only on the shape."""
    return float(np.sum(np.ascontiguousarray(f, dtype=np.float64).reshape(-1)) * grid.cell_volume)


def integrate_complex(f, grid):
    """Integrate a complex or matrix-valued field cellwise; returns the per-entry integral."""
    f = np.ascontiguousarray(f)
    flat = f.reshape((grid.size,) + f.shape[grid.dim:])
    return np.sum(flat, axis=0) * grid.cell_volume


def wrap(x, grid):
    ext = np.asarray(grid.extent)
    return np.mod(x, ext)


def interpolate(f, grid, x):
    """Multilinear interpolation of a scalar (``S``) or vector (``(c,) + S``) field.

    ``x`` has shape ``(..., dim)``; positions are wrapped into the box first.
    Node ``i`` sits at ``i * h``.
    """
    x = np.asarray(x, dtype=np.float64)
    vector = f.ndim == grid.dim + 1
    pts = x.reshape(-1, grid.dim)
    lo_idx = []
    frac = []
    for a in range(grid.dim):
        n, h = grid.shape[a], grid.spacing[a]
        s = np.mod(pts[:, a], n * h) / h
        near = np.rint(s)
        snap = np.abs(s - near) <= 8 * np.finfo(float).eps * np.maximum(1.0, np.abs(s))
        s = np.where(snap, near, s)
        i0 = np.floor(s).astype(np.int64)
        frac.append(s - i0)
        lo_idx.append(np.mod(i0, n))
    comps = f if vector else f[None]
    out = np.zeros((comps.shape[0], pts.shape[0]))
    for corner in range(2 ** grid.dim):
        weight = np.ones(pts.shape[0])
        idx = []
        for a in range(grid.dim):
            bit = (corner >> a) & 1
            weight = weight * (frac[a] if bit else 1.0 - frac[a])
            idx.append(np.mod(lo_idx[a] + bit, grid.shape[a]))
        out += weight * comps[(slice(None),) + tuple(idx)]
    if vector:
        return out.T.reshape(x.shape[:-1] + (comps.shape[0],))
    return out[0].reshape(x.shape[:-1])


def fd4_symbol(k, h):
    """Fourier symbol ``s(k)`` of the fourth-order first derivative (derivative = i s)."""
    return (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)


def _symbol(grid, kind):
    ks = grid.wavenumbers()
    if kind == "spectral":
        parts = [k**2 for k in ks]
    elif kind == "fd4":
        parts = [fd4_symbol(k, h) ** 2 for k, h in zip(ks, grid.spacing)]
    else:
        raise ValueError(f"unknown Laplacian symbol {kind!r}")
    mesh = np.meshgrid(*parts, indexing="ij")
    return sum(mesh)


def poisson_solve(rhs, grid, symbol="spectral", rtol=1e-8):
    """Solve ``L phi = rhs`` for zero-mean ``phi`` on the periodic box.

    ``symbol="spectral"`` uses ``-|k|^2``; ``symbol="fd4"`` uses the symbol of
    ``div(grad(.))`` built from the fourth-order stencil, which makes the
    pressure projection exact for the discrete divergence.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    scale = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    mean = float(np.mean(rhs))
    if abs(mean) > rtol * max(scale, np.finfo(float).tiny):
        raise IncompatibleRHS(f"rhs mean {mean:.3e} violates solvability", mean=mean)
    k2 = _symbol(grid, symbol)
    rhs_hat = np.fft.fftn(rhs)
    tol = 1e-12 * float(np.max(k2))
    nonzero = k2 > tol
    phi_hat = np.zeros_like(rhs_hat)
    phi_hat[nonzero] = -rhs_hat[nonzero] / k2[nonzero]
    return np.real(np.fft.ifftn(phi_hat))


def project_divergence_free(a, grid):
    """Remove the gradient part of ``a`` so that the fourth-order ``div`` of the result vanishes."""
    d = div(a, grid)
    d = d - np.mean(d)
    phi = poisson_solve(d, grid, symbol="fd4")
    return a - grad(phi, grid), phi
