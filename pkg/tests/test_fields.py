import numpy as np
import pytest

from qchydro import fields
from qchydro.errors import IncompatibleRHS

from conftest import smooth


def test_grid_validation():
    with pytest.raises(ValueError):
        fields.Grid((4, 4), (1.0, 1.0))
    with pytest.raises(ValueError):
        fields.Grid((16,), (1.0,))
    with pytest.raises(ValueError):
        fields.Grid((16, 16), (1.0, -1.0))
    g = fields.Grid.cube(16, dim=3)
    assert g.dim == 3 and g.size == 16**3
    assert np.isclose(g.volume, (2 * np.pi) ** 3)


def test_diff_of_sine_is_fourth_order():
    errs = []
    for n in (16, 32, 64):
        g = fields.Grid.cube(n, dim=2)
        x = g.mesh()
        f = np.sin(x[0]) * np.cos(2 * x[1])
        exact = np.cos(x[0]) * np.cos(2 * x[1])
        errs.append(np.max(np.abs(fields.diff(f, g, 0) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.8)


def test_diff_is_exact_on_constants_and_periodic(grid2):
    c = np.full(grid2.shape, 3.0)
    assert np.max(np.abs(fields.diff(c, grid2, 1))) == 0.0
    f = smooth(grid2)
    # derivative commutes with a periodic shift
    d1 = fields.diff(np.roll(f, 3, 0), grid2, 0)
    d2 = np.roll(fields.diff(f, grid2, 0), 3, 0)
    assert np.array_equal(d1, d2)


def test_grad_div_curl_shapes(grid3):
    f = smooth(grid3)
    g = fields.grad(f, grid3)
    assert g.shape == (3,) + grid3.shape
    assert fields.div(g, grid3).shape == grid3.shape
    # curl of a gradient vanishes for commuting difference operators
    assert np.max(np.abs(fields.curl(g, grid3))) < 1e-12


def test_integrate_is_periodic_trapezoid(grid2):
    x = grid2.mesh()
    assert abs(fields.integrate(np.cos(x[0]) ** 2, grid2) - 2 * np.pi**2) < 1e-12


def test_poisson_roundtrip_spectral(grid2):
    x = grid2.mesh()
    phi = np.sin(x[0]) * np.cos(2 * x[1])
    rhs = -5.0 * phi
    assert np.max(np.abs(fields.poisson_solve(rhs, grid2) - phi)) < 1e-12


def test_poisson_rejects_nonzero_mean(grid2):
    with pytest.raises(IncompatibleRHS):
        fields.poisson_solve(np.ones(grid2.shape), grid2)


def test_projection_is_exact_for_discrete_divergence(grid2, rng):
    a = np.stack([smooth(grid2), smooth(grid2, 2, 1, 0.1)]) + 0.01 * rng.standard_normal((2,) + grid2.shape)
    p, _ = fields.project_divergence_free(a, grid2)
    assert np.max(np.abs(fields.div(p, grid2))) < 1e-10
    # idempotent
    p2, _ = fields.project_divergence_free(p, grid2)
    assert np.max(np.abs(p2 - p)) < 1e-10


def test_interpolation_is_second_order():
    pts = np.array([[0.3, 1.1], [6.0, 2.5], [3.3, 0.05]])
    exact = np.sin(pts[:, 0]) * np.cos(pts[:, 1])
    errs = []
    for n in (32, 64, 128):
        g = fields.Grid.cube(n, dim=2)
        x = g.mesh()
        errs.append(np.max(np.abs(fields.interpolate(np.sin(x[0]) * np.cos(x[1]), g, pts) - exact)))
    assert np.all(np.log2(np.array(errs[:-1]) / np.array(errs[1:])) > 1.8)


def test_interpolation_exact_at_nodes(grid2):
    f = smooth(grid2)
    pts = np.array([[grid2.spacing[0] * 3, grid2.spacing[1] * 5]])
    assert fields.interpolate(f, grid2, pts)[0] == f[3, 5]


def test_wrap_into_box(grid2):
    pts = np.array([[-0.1, 7.0]])
    w = fields.wrap(pts, grid2)
    assert np.all((w >= 0) & (w < 2 * np.pi))
