"""Pointwise dense Hermitian-matrix algebra on stacks of n x n matrices (trailing axes)."""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import EigenFailure, ShapeError

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-12


def _check_pair(a, b):
    if a.shape[-2:] != b.shape[-2:] or a.shape[-1] != a.shape[-2]:
        raise ShapeError(f"matrix shapes {a.shape[-2:]} and {b.shape[-2:]} do not match")


def mm(a, b):
    """Matrix product over the trailing two axes, with the 2x2 fast path."""
    if a.shape[-1] == 2 and b.shape[-1] == 2 and a.ndim >= 2 and b.ndim >= 2:
        return kernels.matmul2(a, b)
    return np.matmul(a, b)


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a, b):
    _check_pair(a, b)
    return mm(a, b) - mm(b, a)


def inner_full(a, b):
    """Frobenius pairing ``Tr(A^dagger B)``."""
    _check_pair(a, b)
    return np.sum(np.conj(a) * b, axis=(-2, -1))


def inner_re(a, b):
    """Real Frobenius pairing ``Re Tr(A^dagger B)``."""
    _check_pair(a, b)
    if a.shape[-1] == 2:
        return kernels.inner_re2(a, b)
    prod = a.real * b.real + a.imag * b.imag
    return prod.sum(axis=(-2, -1))


def trace(a):
    return np.trace(a, axis1=-2, axis2=-1)


def frobenius(a):
    return np.sqrt(np.sum(np.abs(a) ** 2, axis=(-2, -1)))


def hermitize(a):
    """Return the Hermitian part of ``a`` and the largest Frobenius norm of ``A - A^dagger``."""
    if a.shape[-1] == 2 and a.ndim >= 2 and np.iscomplexobj(a):
        return kernels.hermitize2(a)
    ad = dagger(a)
    drift = float(np.max(frobenius(a - ad))) if a.size else 0.0
    if drift == 0.0:
        return a.copy(), 0.0
    return 0.5 * (a + ad), drift


def hermiticity_error(a):
    """Largest relative Frobenius norm of the anti-Hermitian part."""
    scale = float(np.max(frobenius(a))) or 1.0
    return float(np.max(frobenius(a - dagger(a)))) / scale


class PauliBasis:
    """Identity plus the three Pauli matrices; the product table is checked on construction."""

    def __init__(self):
        self.identity = np.eye(2, dtype=np.complex128)
        self.sigma = np.array(
            [
                [[0, 1], [1, 0]],
                [[0, -1j], [1j, 0]],
                [[1, 0], [0, -1]],
            ],
            dtype=np.complex128,
        )
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        for j in range(3):
            for k in range(3):
                lhs = self.sigma[j] @ self.sigma[k]
                rhs = (j == k) * self.identity + 1j * np.einsum("l,lab->ab", eps[j, k], self.sigma)
                if not np.allclose(lhs, rhs, atol=1e-15):
                    raise AssertionError("Pauli product table violated")

    def __getitem__(self, k):
        """``basis[0]`` is the identity, ``basis[1..3]`` are sigma_x, sigma_y, sigma_z."""
        return self.identity if k == 0 else self.sigma[k - 1]


PAULI = PauliBasis()


def _eig2_min(a):
    p = 0.5 * (a[..., 0, 0].real + a[..., 1, 1].real)
    q = 0.5 * (a[..., 0, 0].real - a[..., 1, 1].real)
    r = np.sqrt(q * q + np.abs(a[..., 0, 1]) ** 2)
    return p - r


def eigvals2(a):
    """Closed-form eigenvalues (ascending) of stacked 2x2 Hermitian matrices."""
    p = 0.5 * (a[..., 0, 0].real + a[..., 1, 1].real)
    q = 0.5 * (a[..., 0, 0].real - a[..., 1, 1].real)
    r = np.sqrt(q * q + np.abs(a[..., 0, 1]) ** 2)
    return np.stack([p - r, p + r], axis=-1)


def jacobi_eigvals(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of one Hermitian matrix by cyclic Jacobi on its real symmetric embedding.

    ``[[Re A, -Im A], [Im A, Re A]]`` has every eigenvalue of ``A`` twice.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[0]
    s = np.block([[a.real, -a.imag], [a.imag, a.real]])
    s = 0.5 * (s + s.T)
    m = 2 * n
    scale = np.linalg.norm(s) or 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(max(np.sum(s**2) - np.sum(np.diag(s) ** 2), 0.0))
        if off <= tol * scale:
            ev = np.sort(np.diag(s))
            return ev[::2]
        for p in range(m - 1):
            for q in range(p + 1, m):
                if s[p, q] == 0.0:
                    continue
                theta = (s[q, q] - s[p, p]) / (2.0 * s[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                rot = np.eye(m)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = sn
                rot[q, p] = -sn
                s = rot.T @ s @ rot
    raise EigenFailure(f"Jacobi did not converge in {max_sweeps} sweeps")


def min_eigenvalue(a):
    """Smallest eigenvalue per matrix: closed form for n=2, Jacobi otherwise."""
    a = np.asarray(a)
    if a.shape[-1] == 2:
        return _eig2_min(a)
    flat = a.reshape((-1,) + a.shape[-2:])
    out = np.array([jacobi_eigvals(m)[0] for m in flat])
    return out.reshape(a.shape[:-2])


def expect(rho, b):
    """``<B> = Re Tr(rho^dagger B)`` with ``B`` broadcast over the field."""
    b = np.broadcast_to(b, rho.shape)
    return inner_re(rho, b)
