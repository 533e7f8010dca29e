"""The compiled core and the numpy fallback must agree."""

import numpy as np
import pytest

from qchydro import _kernels_py as py
from qchydro import kernels

core = pytest.importorskip("qchydro._core")


def _herm(rng, shape):
    a = rng.standard_normal(shape + (2, 2)) + 1j * rng.standard_normal(shape + (2, 2))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_fd4_parity(rng, axis):
    a = rng.standard_normal((12, 10, 9, 2, 2))
    assert np.array_equal(core.fd4(a, axis, 0.1), py.fd4(a, axis, 0.1))


def test_matmul_inner_hermitize_parity(rng):
    a, b = _herm(rng, (7, 9)), _herm(rng, (7, 9))
    assert np.max(np.abs(core.matmul2(a, b) - py.matmul2(a, b))) < 1e-14
    assert np.max(np.abs(core.inner_re2(a, b) - py.inner_re2(a, b))) < 1e-14
    x = a + 1e-6j * rng.standard_normal(a.shape)
    ca, cd = core.hermitize2(x)
    pa, pd = py.hermitize2(x)
    assert np.max(np.abs(ca - pa)) < 1e-15 and abs(cd - pd) < 1e-15


def test_spinor_kernels_parity(rng):
    psi = rng.standard_normal((8, 8, 2)) + 1j * rng.standard_normal((8, 8, 2))
    assert np.array_equal(core.outer2(psi), py.outer2(psi))
    c1, d1 = core.renormalize2(psi, 1e-15)
    p1, d2 = py.renormalize2(psi, 1e-15)
    assert np.array_equal(c1, p1) and d1 == d2
    K = _herm(rng, (8, 8))
    gpsi = rng.standard_normal((2, 8, 8, 2)) + 1j * rng.standard_normal((2, 8, 8, 2))
    u = rng.standard_normal((2, 8, 8))
    assert np.max(np.abs(core.spinor_rhs2(K, psi, gpsi, u, 1.0) - py.spinor_rhs2(K, psi, gpsi, u, 1.0))) < 1e-13


@pytest.mark.parametrize("dim", [2, 3])
def test_qc_pointwise_parity(rng, dim):
    shape = (6,) * dim
    rho, Hm = _herm(rng, shape), _herm(rng, shape)
    gr = np.stack([_herm(rng, shape) for _ in range(dim)])
    gH = np.stack([_herm(rng, shape) for _ in range(dim)])
    gc = rng.standard_normal((dim,) + shape)
    gcr = np.stack([_herm(rng, shape) for _ in range(dim)])
    gb = rng.standard_normal((3,) + shape)
    c = rng.standard_normal(shape)
    D = 1.0 + rng.random(shape)
    u = rng.standard_normal((dim,) + shape)
    if dim == 2:
        gb = None  # planar: grad b is the unit normal
    a = core.qc_pointwise(rho, Hm, gr, gH, gc, gcr, gb, c, 1.0 / D, D, 0.7, u)
    b = py.qc_pointwise(rho, Hm, gr, gH, gc, gcr, gb, c, 1.0 / D, D, 0.7, u)
    for x, y in zip(a, b):
        if y is None:
            assert x is None
            continue
        assert np.max(np.abs(np.asarray(x) - np.asarray(y))) < 1e-12 * max(1.0, np.max(np.abs(y)))
