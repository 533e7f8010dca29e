import math

import numpy as np
import pytest

from qchydro import integrator, presets
from qchydro.errors import BlowUp


def test_config_validation():
    with pytest.raises(ValueError):
        integrator.IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        integrator.IntegratorConfig(dt=0.1, t_end=-1)
    with pytest.raises(ValueError):
        integrator.IntegratorConfig(dt=0.1, cfl_cap=2.0)


def test_rk4_is_fourth_order_on_classical_flow():
    state, ham = presets.smooth_2d(16, pure=True)
    T = 0.2

    def final(dt):
        res = integrator.run(integrator.IntegratorConfig(dt=dt, t_end=T), state, ham, "classical", diag_every=0)
        return res.state

    ref = final(0.0025)
    errs = [np.max(np.abs(final(dt).u - ref.u)) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.5)


def test_run_hits_t_end_exactly_and_records():
    state, ham = presets.smooth_2d(16)
    res = integrator.run(integrator.IntegratorConfig(dt=0.03, t_end=0.1), state, ham, "qc_planar", diag_every=1)
    assert res.steps == 4
    assert math.isclose(res.state.t, 0.1, rel_tol=0, abs_tol=1e-15)
    assert len(res.records) == 5


def test_zero_length_run_records_once():
    state, ham = presets.smooth_2d(16)
    res = integrator.run(integrator.IntegratorConfig(dt=0.01, t_end=0.0), state, ham, "qc_planar")
    assert res.steps == 0 and len(res.records) == 1


def test_pure_state_norm_preserved():
    state, ham = presets.smooth_2d(16, pure=True)
    res = integrator.run(integrator.IntegratorConfig(dt=0.01, t_end=0.1), state, ham, "pure_state_planar", diag_every=0)
    assert np.max(np.abs(np.sum(np.abs(res.state.psi) ** 2, axis=-1) - 1.0)) < 1e-14


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_is_reported():
    state, ham = presets.smooth_2d(16)
    u = state.u.copy()
    u[0, 0, 0] = np.inf
    with pytest.raises(BlowUp):
        integrator.rk4_step(state.replace(u=u), ham, "qc_planar", 0.01)
    res = integrator.run(integrator.IntegratorConfig(dt=0.01, t_end=0.05), state.replace(u=u), ham, "qc_planar")
    assert res.status == "blow-up" and res.steps == 0


def test_cfl_cap_limits_dt():
    state, ham = presets.smooth_2d(16)
    cfg = integrator.IntegratorConfig(dt=10.0, cfl_cap=0.5, deterministic=False)
    assert integrator.cfl_dt(state, ham, cfg) < 10.0


def test_deterministic_repeat_is_bitwise():
    state, ham = presets.smooth_2d(16, pure=False)
    cfg = integrator.IntegratorConfig(dt=0.01, t_end=0.05)
    a = integrator.run(cfg, state, ham, "qc_planar").state
    b = integrator.run(cfg, state, ham, "qc_planar").state
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.u, b.u)
