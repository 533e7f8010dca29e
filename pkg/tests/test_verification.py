import numpy as np
import pytest

from qchydro import models, presets, verification


def test_fit_order_on_exact_power_law():
    h = np.array([1.0, 0.5, 0.25])
    assert abs(verification.fit_order([32, 64, 128], 3.0 * h**4) - 4.0) < 1e-12


def test_slab_evaluation_is_bitwise_equal_to_full_grid():
    state, ham = presets.smooth_3d(24)
    full = models.rhs_qc3d(state, ham).arrays()
    slab = verification.evaluate_in_slabs(lambda s, h: models.rhs_qc3d(s, h).arrays(), state, ham, slab=8, halo=4)
    for k, v in full.items():
        assert np.array_equal(v, slab[k]), k


def test_convergence_report_modes():
    up = verification.convergence_report("x", [16, 32, 64], [1e-2, 1e-2 / 16, 1e-2 / 256], threshold=3.5)
    assert up.passed
    down = verification.convergence_report("y", [16, 32, 64], [1e-2, 1e-2, 1e-2], threshold=1.0, mode="at_most")
    assert down.passed
    with pytest.raises(ValueError):
        verification.convergence_report("z", [16, 32], [1e-2, 1e-3])


def test_algebra_suite_quick():
    reps = verification.run_suite("algebra", quick=True)
    assert verification.all_passed(reps)


def test_reductions_quick():
    reps = verification.run_suite("reductions", quick=True)
    assert verification.all_passed(reps)


def test_unknown_suite():
    with pytest.raises(ValueError):
        verification.run_suite("nope")
