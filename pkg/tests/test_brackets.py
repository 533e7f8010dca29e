import numpy as np
import pytest

from qchydro import brackets, fields
from qchydro.errors import ShapeError, UnsupportedOperation, UnnormalizedState
from qchydro.hermitian import PAULI, dagger

from conftest import smooth


def _herm_stack(rng, comps, shape):
    a = rng.standard_normal((comps,) + shape + (2, 2)) + 1j * rng.standard_normal((comps,) + shape + (2, 2))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def test_nambu_scalar_antisymmetric_and_cyclic(rng):
    gb, gf, gg = rng.standard_normal((3, 3, 50))
    assert np.allclose(brackets.nambu_scalar(gb, gf, gg), -brackets.nambu_scalar(gb, gg, gf))
    assert np.allclose(brackets.nambu_scalar(gb, gf, gg), brackets.nambu_scalar(gf, gg, gb))
    assert np.max(np.abs(brackets.nambu_scalar(gb, gf, gf))) == 0.0


def test_nambu_matrix_dagger_identity(rng):
    gb = rng.standard_normal((3, 10))
    gf, gg = _herm_stack(rng, 3, (10,)), _herm_stack(rng, 3, (10,))
    lhs = dagger(brackets.nambu_matrix(gb, gf, gg))
    rhs = -brackets.nambu_matrix(gb, gg, gf)
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_nambu_matrix_reduces_to_scalar(rng):
    gb, gf, gg = rng.standard_normal((3, 3, 10))
    m = brackets.nambu_matrix(gb, gf[..., None, None] * PAULI[0], gg[..., None, None] * PAULI[0])
    assert np.allclose(m[..., 0, 0], brackets.nambu_scalar(gb, gf, gg))


def test_nambu_matrix_shape_errors(rng):
    with pytest.raises(ShapeError):
        brackets.nambu_matrix(rng.standard_normal((3, 4)), rng.standard_normal((2, 4)), rng.standard_normal((3, 4)))


def test_planar_bracket_is_jacobian(grid2):
    x = grid2.mesh()
    f, g = np.sin(x[0]), np.sin(x[1])
    j = brackets.planar_bracket(f, g, grid2)
    assert np.max(np.abs(j - np.cos(x[0]) * np.cos(x[1]))) < 1e-4
    with pytest.raises(UnsupportedOperation):
        brackets.planar_bracket(f, g, fields.Grid.cube(8))


def test_mead_connection_hermitian_for_projectors(grid2):
    x = grid2.mesh()
    th = 1.0 + 0.3 * np.sin(x[0])
    ph = np.cos(x[1])
    from qchydro.presets import bloch_density

    rho = bloch_density(th, ph)
    gam = brackets.mead_connection(rho, grid2)
    assert np.max(np.abs(gam - dagger(gam))) < 1e-14


def test_berry_connection_needs_normalized(grid2):
    psi = np.zeros(grid2.shape + (2,), dtype=complex)
    psi[..., 0] = 2.0
    with pytest.raises(UnnormalizedState):
        brackets.berry_connection(psi, grid2)


def test_berry_connection_of_phase(grid2):
    x = grid2.mesh()
    psi = np.zeros(grid2.shape + (2,), dtype=complex)
    psi[..., 0] = np.exp(1j * np.sin(x[0]))
    A = brackets.berry_connection(psi, grid2)
    assert np.max(np.abs(A[0] - np.cos(x[0]))) < 2e-3
    assert np.max(np.abs(A[1])) < 1e-12


def test_fluctuation_force_has_zero_mean(rng):
    psi = rng.standard_normal((5, 2)) + 1j * rng.standard_normal((5, 2))
    psi /= np.linalg.norm(psi, axis=-1, keepdims=True)
    gH = _herm_stack(rng, 2, (5,))
    F = brackets.fluctuation_force(psi, gH)
    m = np.einsum("...i,a...ij,...j->a...", np.conj(psi), F, psi)
    assert np.max(np.abs(m)) < 1e-14
