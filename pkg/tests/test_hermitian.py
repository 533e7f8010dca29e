import numpy as np
import pytest

from qchydro import hermitian as H
from qchydro.hermitian import PAULI


def rand_herm(rng, shape, n):
    a = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def test_commutator_antisymmetric(rng):
    a, b = rand_herm(rng, (10,), 3), rand_herm(rng, (10,), 3)
    assert np.max(np.abs(H.commutator(a, b) + H.commutator(b, a))) < 1e-14


def test_inner_re_matches_trace(rng):
    a, b = rand_herm(rng, (5,), 2), rand_herm(rng, (5,), 2)
    ref = np.real(np.trace(a @ b, axis1=-2, axis2=-1))
    assert np.allclose(H.inner_re(a, b), ref, atol=1e-14)


def test_hermitize_reports_drift(rng):
    a = rand_herm(rng, (4,), 2)
    a[..., 0, 1] += 1e-9
    out, drift = H.hermitize(a)
    assert H.hermiticity_error(out) == 0.0
    assert drift > 0


def test_pauli_algebra():
    for j in range(1, 4):
        assert np.allclose(PAULI[j] @ PAULI[j], np.eye(2))
    assert np.allclose(PAULI[1] @ PAULI[2], 1j * PAULI[3])


@pytest.mark.parametrize("n", [2, 3, 4])
def test_min_eigenvalue_matches_numpy(rng, n):
    a = rand_herm(rng, (20,), n)
    ref = np.linalg.eigvalsh(a)[..., 0]
    assert np.max(np.abs(H.min_eigenvalue(a) - ref)) < 1e-10


def test_jacobi_eigvals(rng):
    for a in rand_herm(rng, (6,), 4):
        assert np.allclose(H.jacobi_eigvals(a), np.linalg.eigvalsh(a), atol=1e-10)
