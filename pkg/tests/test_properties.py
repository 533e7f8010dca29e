"""Property-based checks on the pointwise algebra and stencils."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qchydro import _kernels_py, brackets, fields, kernels
from qchydro.hermitian import commutator, dagger, hermitize, inner_re

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _herm(a):
    m = a[..., 0] + 1j * a[..., 1]
    return 0.5 * (m + dagger(m))


herm_fields = arrays(np.float64, (4, 2, 2, 2), elements=finite).map(_herm)


@given(herm_fields, herm_fields)
def test_commutator_of_hermitians_is_antihermitian(a, b):
    c = commutator(a, b)
    assert np.allclose(c, -dagger(c), atol=1e-12)


@given(herm_fields, herm_fields)
def test_inner_re_symmetric(a, b):
    assert np.allclose(inner_re(a, b), inner_re(b, a), atol=1e-10)


@given(herm_fields)
def test_hermitize_idempotent(a):
    once, _ = hermitize(a)
    twice, drift = hermitize(once)
    assert np.array_equal(once, twice) and drift == 0.0


@given(arrays(np.float64, (3, 3, 5), elements=finite))
def test_nambu_scalar_alternating(v):
    gb, gf, gg = v
    assert np.allclose(brackets.nambu_scalar(gb, gf, gg), -brackets.nambu_scalar(gf, gb, gg), atol=1e-9)


@settings(max_examples=30)
@given(arrays(np.float64, (16, 12), elements=finite), st.integers(0, 1), st.integers(-20, 20))
def test_fd4_commutes_with_shift_and_kills_constants(f, axis, shift):
    d = kernels.fd4(f, axis, 0.1)
    assert np.array_equal(kernels.fd4(np.roll(f, shift, axis), axis, 0.1), np.roll(d, shift, axis))
    assert np.array_equal(kernels.fd4(np.full_like(f, f[0, 0]), axis, 0.1), np.zeros_like(f))


@settings(max_examples=30)
@given(arrays(np.float64, (12, 10, 2, 2), elements=finite), st.integers(0, 1))
def test_fd4_backends_bitwise(f, axis):
    assert np.array_equal(kernels.fd4(f, axis, 0.3), _kernels_py.fd4(f, axis, 0.3))


@settings(max_examples=30)
@given(arrays(np.float64, (16, 16), elements=finite))
def test_fd4_sums_to_zero(f):
    g = fields.Grid.cube(16, dim=2)
    assert abs(np.sum(fields.diff(f, g, 0))) < 1e-9 * max(1.0, np.max(np.abs(f)))
