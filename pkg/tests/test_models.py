import numpy as np
import pytest

from qchydro import models, presets
from qchydro.errors import ShapeError, UnsupportedModel
from qchydro.hermitian import PAULI, hermiticity_error, trace


def test_hamiltonian_rejects_non_hermitian(grid2):
    V = np.zeros(grid2.shape)
    with pytest.raises(ValueError):
        models.HybridHamiltonian(V, [(V, np.array([[0, 1], [0, 0]]))])
    with pytest.raises(ShapeError):
        models.HybridHamiltonian(V, [(V, np.eye(3))])


def test_dephasing_axis(grid2):
    V = np.zeros(grid2.shape)
    assert models.HybridHamiltonian(V, [(V, PAULI[3])]).dephasing_axis() == 3
    with pytest.raises(UnsupportedModel):
        models.HybridHamiltonian(V, [(V, PAULI[1] + PAULI[3])]).dephasing_axis()


def test_pressure_polytropic():
    eos = models.EquationOfState("polytropic", 0.5, 2.0)
    assert np.allclose(models.pressure(np.array([2.0]), eos), 0.5 * 4.0)


@pytest.mark.parametrize("name", ["qc3d", "qc3d_stress", "ehrenfest", "classical"])
def test_3d_models_preserve_trace_and_hermiticity(name):
    state, ham = presets.smooth_3d(12)
    r = models.MODELS[name](state, ham)
    assert r.dD.shape == state.D.shape and r.du.shape == state.u.shape
    if r.drho is not None:
        assert hermiticity_error(r.drho) < 1e-14
        # d/dt Tr rho = -u . grad Tr rho = 0 for unit trace
        assert np.max(np.abs(trace(r.drho))) < 1e-13


@pytest.mark.parametrize("name", ["qc_planar", "pure_state_planar", "ehrenfest"])
def test_planar_models_run(name):
    state, ham = presets.smooth_2d(16, pure=True)
    r = models.MODELS[name](state, ham)
    assert all(np.all(np.isfinite(v)) for v in r.arrays().values())


def test_planar_model_rejects_3d():
    state, ham = presets.smooth_3d(12)
    with pytest.raises(Exception):
        models.rhs_qc_planar(state, ham)


def test_vacuum_floor_counts_activations():
    state, ham = presets.smooth_2d(16, pure=False)
    D = state.D.copy()
    D[0, 0] = 1e-12
    r = models.rhs_qc_planar(state.replace(D=D), ham)
    assert r.floor_activations >= 1


def test_nonpositive_density_raises():
    from qchydro.errors import VacuumError

    state, ham = presets.smooth_2d(16, pure=False)
    D = state.D.copy()
    D[3, 4] = 0.0
    with pytest.raises(VacuumError):
        models.rhs_qc_planar(state.replace(D=D), ham)


def test_classical_model_ignores_quantum_sector():
    state, ham = presets.smooth_3d(12)
    a = models.rhs_classical(state, ham)
    b = models.rhs_classical(state.replace(rho=presets.bloch_density(np.zeros(state.grid.shape), 0.0)), ham)
    assert np.array_equal(a.du, b.du)
