import math

import numpy as np
import pytest

from qchydro import diagnostics, fields, presets
from qchydro.errors import DegenerateLoop


def test_columns_fixed_order():
    cols = diagnostics.columns(2)
    assert cols[:18] == ("t", "dt", "h", "mass", "px", "py", "pz", "C1_purity", "C2_bc", "C2_b2", "Lam1_max",
                         "Lam2_max", "C3", "purity", "tr_rho_tot_err", "min_D", "min_eig_rho", "herm_err")
    assert cols[18:20] == ("loop_0_circ", "loop_1_circ")


def test_record_planar_marks_3d_only_columns_nan():
    state, ham = presets.smooth_2d(16)
    rec = diagnostics.record(state, ham, "qc_planar")
    row = dict(zip(diagnostics.columns(0), rec.row(diagnostics.columns(0))))
    assert math.isnan(row["C3"]) and math.isnan(row["C2_b2"])
    assert rec["mass"] > 0 and abs(rec["tr_rho_tot_err"]) < 1e-14


def test_totals_of_uniform_pure_state(grid2):
    from qchydro.models import HybridState

    psi = presets.bloch_spinor(np.full(grid2.shape, 0.7), np.full(grid2.shape, 0.2))
    s = HybridState(grid2, np.ones(grid2.shape), np.zeros((2,) + grid2.shape), psi=psi)
    t = diagnostics.totals(s)
    assert abs(t.purity - 1.0) < 1e-14
    assert abs(t.mass - grid2.volume) < 1e-12


def test_tracer_loop_needs_nodes(grid2):
    with pytest.raises(ValueError):
        diagnostics.TracerLoop(np.zeros((10, 2)))


def test_circulation_of_rigid_rotation():
    g = fields.Grid.cube(64, dim=2)
    loop = diagnostics.TracerLoop.circle(g, (np.pi, np.pi), 1.0, K=256)
    x = g.mesh()
    u = np.stack([-(x[1] - np.pi), x[0] - np.pi])
    circ = diagnostics.line_integral(u, g, loop)
    assert abs(circ - 2 * np.pi) < 1e-3


def test_degenerate_loop_rejected(grid2):
    loop = diagnostics.TracerLoop(np.zeros((40, 2)))
    with pytest.raises(DegenerateLoop):
        diagnostics.line_integral(np.zeros((2,) + grid2.shape), grid2, loop)


def test_energy_is_finite_and_positive_kinetic():
    state, ham = presets.smooth_3d(12)
    assert np.isfinite(diagnostics.energy(state, ham, "qc3d"))
