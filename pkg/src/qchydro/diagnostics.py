"""Conserved and monitored functionals of a hybrid state.

Every function here is a pure reduction over an immutable state. Integrals use
:func:`qchydro.fields.integrate`, whose summation order depends only on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fields
from .brackets import (
    apply,
    berry_connection,
    berry_curvature_from_rho,
    nambu_matrix,
    nambu_scalar,
    planar_bracket_grads,
    spinor_inner_re,
)
from .errors import DegenerateLoop, RequiresPureState, ShapeError
from .hermitian import PAULI, dagger, inner_re, min_eigenvalue, trace
from .models import DEFAULT_VACUUM, PURE, _inverse_density

MIN_LOOP_NODES = 32

# Fixed function catalogue for the Casimir families.
C1_FUNCTIONS = {
    "trace": lambda rho: trace(rho).real,
    "purity": lambda rho: inner_re(rho, rho),
}
C2_FUNCTIONS = {
    "bc": lambda b, c, l1, l2: b * c,
    "b2": lambda b, c, l1, l2: b * b,
    "cLam1": lambda b, c, l1, l2: c * l1,
    "c2": lambda b, c, l1, l2: c * c,
}
THETA_FUNCTIONS = {
    "one": lambda s: np.ones_like(s),
    "id": lambda s: s,
}
PHI_FUNCTIONS = {
    "square": lambda s: s * s,
}

EHRENFEST_MODELS = {"ehrenfest", "ehrenfest_planar_incompressible"}
INCOMPRESSIBLE_MODELS = {"qc_planar_incompressible", "ehrenfest_planar_incompressible"}


def _backreaction_c(state, model):
    if model in INCOMPRESSIBLE_MODELS:
        return state.beta * state.D
    return state.c


def _full_b(state):
    """Backreaction field including the linear background (3D only)."""
    g = state.grid
    b = np.zeros(g.shape) if state.b is None else state.b
    for a, x in enumerate(g.mesh()):
        b = b + state.b_gradient[a] * x
    return b


# -- energy ---------------------------------------------------------------------------


def energy_density(state, ham, model="qc3d"):
    """Integrand of the Hamiltonian functional in density-matrix form.

    ``|m|^2/(2MD) + D E(D) + D <rho, H> + hbar c <rho, i {rho, H}>``; the
    bracket term is dropped for Ehrenfest models and the internal energy for
    incompressible ones.
    """
    g = state.grid
    rho = state.density_matrix()
    H = ham.assemble()
    dens = 0.5 * ham.M * state.D * np.sum(state.u**2, axis=0) + state.D * inner_re(rho, H)
    if model not in INCOMPRESSIBLE_MODELS:
        dens = dens + ham.eos.internal_energy_density(state.D)
    if model not in EHRENFEST_MODELS:
        c = _backreaction_c(state, model)
        gr = fields.grad_h(rho, g)
        gH = ham.grad(g)
        if g.dim == 3:
            br = nambu_matrix(state.grad_b(), gr, gH)
        else:
            br = planar_bracket_grads(gr, gH)
        dens = dens + ham.hbar * c * inner_re(rho, 1j * br)
    return dens


def energy_density_pure(state, ham, model="qc3d"):
    """Pure-state integrand ``|M + D A|^2/(2MD) + D E + <psi, D H psi + c grad b . grad H x (i hbar grad + A) psi>``."""
    if state.psi is None:
        raise RequiresPureState("pure-state energy needs a spinor state")
    g = state.grid
    hbar = ham.hbar
    psi = state.psi
    gpsi = fields.grad(psi, g)
    A = berry_connection(psi, g, hbar, grad_psi=gpsi, check=False)
    Mc = state.D * (ham.M * state.u - A)
    dens = np.sum((Mc + state.D * A) ** 2, axis=0) / (2.0 * ham.M * state.D)
    dens = dens + state.D * spinor_inner_re(psi, apply(ham.assemble(), psi))
    if model not in INCOMPRESSIBLE_MODELS:
        dens = dens + ham.eos.internal_energy_density(state.D)
    if model not in EHRENFEST_MODELS:
        c = _backreaction_c(state, model)
        gH = ham.grad(g)
        # w_j = (i hbar d_j + A_j) psi
        w = 1j * hbar * gpsi + A[..., None] * psi
        if g.dim == 3:
            gb = state.grad_b()
            terms = 0
            for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
                t = apply(gH[j], w[k]) - apply(gH[k], w[j])
                terms = terms + gb[i][..., None] * t
        else:
            terms = apply(gH[0], w[1]) - apply(gH[1], w[0])
        dens = dens + c * spinor_inner_re(psi, terms)
    return dens


def energy_density_classical(state, ham):
    """``M D |u|^2 / 2 + D V0 + D E(D)`` for the uncoupled fluid."""
    return 0.5 * ham.M * state.D * np.sum(state.u**2, axis=0) + state.D * ham.V0 + ham.eos.internal_energy_density(state.D)


def energy(state, ham, model="qc3d"):
    """Hamiltonian functional ``h``; the pure-state form is used for spinor states."""
    if model == "classical":
        return fields.integrate(energy_density_classical(state, ham), state.grid)
    if state.mode == PURE:
        return fields.integrate(energy_density_pure(state, ham, model), state.grid)
    return fields.integrate(energy_density(state, ham, model), state.grid)


# -- Casimirs -------------------------------------------------------------------------


def casimir_c1(state, F="purity"):
    """``C1 = int D Tr F(rho)`` for a catalogue function ``F``."""
    f = C1_FUNCTIONS[F] if isinstance(F, str) else F
    return fields.integrate(state.D * f(state.density_matrix()), state.grid)


def _transverse_derivative(f, state, Dinv, c):
    """``D^-1 (grad c x grad b) . grad f``; planar grids use ``grad b = e3`` with ``c`` the scaled field."""
    g = state.grid
    gf = fields.grad(f, g)
    gc = fields.grad(c, g)
    if g.dim == 3:
        # (grad c x grad b) . grad f = grad b . grad f x grad c
        return Dinv * nambu_scalar(state.grad_b(), gf, gc)
    return Dinv * (gc[1] * gf[0] - gc[0] * gf[1])


def lambda_n(state, n, vacuum=DEFAULT_VACUUM, model=None):
    """``Lambda_n = (D^-1 grad c x grad b . grad)^n ||rho||`` (Frobenius norm)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rho = state.density_matrix()
    lam = np.sqrt(inner_re(rho, rho))
    if n == 0:
        return lam
    Dinv, _ = _inverse_density(state.D, vacuum)
    c = _backreaction_c(state, model)
    for _ in range(n):
        lam = _transverse_derivative(lam, state, Dinv, c)
    return lam


def casimir_c2(state, Phi="bc", vacuum=DEFAULT_VACUUM, lambdas=None, model=None):
    """``C2 = int D Phi(b, c, Lambda_1, Lambda_2)``; on planar grids ``b`` is absent and ``c`` is ``c~``."""
    phi = C2_FUNCTIONS[Phi] if isinstance(Phi, str) else Phi
    g = state.grid
    if lambdas is None:
        lambdas = (lambda_n(state, 1, vacuum, model), lambda_n(state, 2, vacuum, model))
    c = _backreaction_c(state, model)
    b = _full_b(state) if g.dim == 3 else None
    if b is None and Phi in ("bc", "b2"):
        return math.nan
    return fields.integrate(state.D * phi(b, c, *lambdas), g)


def cross_helicity(state, ham):
    """``C3 = int (M u - A) . grad c x grad b`` (pure-state mode, 3D)."""
    if state.psi is None:
        raise RequiresPureState("cross helicity needs the Berry connection of a spinor state")
    g = state.grid
    if g.dim != 3:
        raise ShapeError("cross helicity is defined on 3D grids; use planar_casimir on 2D")
    A = berry_connection(state.psi, g, ham.hbar)
    gc = fields.grad(state.c, g)
    gb = state.grad_b()
    w = ham.M * state.u - A
    return fields.integrate(nambu_scalar(w, gc, gb), g)


def canonical_vorticity(state, ham):
    """Planar ``Omega = e3 . curl(M v - A) = M omega - B``.

    ``B`` is evaluated from the projector ``psi psi^dagger`` (or from ``rho``),
    which is gauge invariant; for a mixed ``rho`` this is only a monitor.
    """
    g = state.grid
    omega = fields.curl(state.u, g, planar=True)
    rho = state.density_matrix()
    B = berry_curvature_from_rho(rho, fields.grad_h(rho, g), ham.hbar)
    return ham.M * omega - B


def planar_casimir(state, ham, theta="one", model=None):
    """``int Omega Theta(c~)`` (``c~ = beta D`` for incompressible models)."""
    th = THETA_FUNCTIONS[theta] if isinstance(theta, str) else theta
    c = _backreaction_c(state, model)
    return fields.integrate(canonical_vorticity(state, ham) * th(c), state.grid)


def density_casimir(state, phi="square"):
    """``int D Phi(D)``."""
    f = PHI_FUNCTIONS[phi] if isinstance(phi, str) else phi
    return fields.integrate(state.D * f(state.D), state.grid)


def incompressible_casimir(state, ham, theta="id", phi="square"):
    """``int (Omega Theta(D) + Phi(D))`` of the incompressible planar model."""
    th = THETA_FUNCTIONS[theta] if isinstance(theta, str) else theta
    f = PHI_FUNCTIONS[phi] if isinstance(phi, str) else phi
    dens = canonical_vorticity(state, ham) * th(state.D) + f(state.D)
    return fields.integrate(dens, state.grid)


# -- totals ------------------------------------------------------------------------------


@dataclass
class Totals:
    rho_tot: np.ndarray
    purity: float
    momentum: np.ndarray
    mass: float


def totals(state, ham=None):
    """``rho_tot = int D rho / int D``, its purity ``||rho_tot||^2``, total momentum ``int M D u`` and mass."""
    g = state.grid
    M = 1.0 if ham is None else ham.M
    mass = fields.integrate(state.D, g)
    rho = state.density_matrix()
    n = rho.shape[-1]
    rt = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(n):
            rt[i, j] = complex(
                fields.integrate(state.D * rho[..., i, j].real, g), fields.integrate(state.D * rho[..., i, j].imag, g)
            )
    rt /= mass
    purity = float(np.sum(np.abs(rt) ** 2))
    mom = np.zeros(3)
    for a in range(g.dim):
        mom[a] = fields.integrate(M * state.D * state.u[a], g)
    return Totals(rho_tot=rt, purity=purity, momentum=mom, mass=mass)


def sigma_expectation(state, k):
    """``<sigma_k> = <rho, sigma_k>`` as a field (n = 2)."""
    rho = state.density_matrix()
    if rho.shape[-1] != 2:
        raise ShapeError("Pauli expectations need n = 2")
    return inner_re(rho, np.broadcast_to(PAULI[k], rho.shape))


# -- tracer loops -------------------------------------------------------------------------


@dataclass
class TracerLoop:
    """Closed polyline of ``K >= 32`` material points, stored wrapped into the box."""

    points: np.ndarray
    name: str = "loop"

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[0] < MIN_LOOP_NODES:
            raise ValueError(f"a tracer loop needs at least {MIN_LOOP_NODES} nodes")

    @classmethod
    def circle(cls, grid, center, radius, K=64, name="loop"):
        t = 2 * np.pi * np.arange(K) / K
        pts = np.zeros((K, grid.dim))
        pts[:, 0] = center[0] + radius * np.cos(t)
        pts[:, 1] = center[1] + radius * np.sin(t)
        if grid.dim == 3:
            pts[:, 2] = center[2]
        return cls(fields.wrap(pts, grid), name)


def _segments(points, grid):
    """Minimal-image segment vectors ``x_{i+1} - x_i`` of the closed polyline."""
    ext = np.asarray(grid.extent)
    d = np.roll(points, -1, axis=0) - points
    d = d - ext * np.rint(d / ext)
    return d


def _check_loop(loop, grid):
    d = _segments(loop.points, grid)
    lengths = np.sqrt(np.sum(d**2, axis=1))
    scale = min(grid.spacing)
    if np.any(lengths <= 1e-12 * scale):
        i = int(np.argmin(lengths))
        raise DegenerateLoop(f"loop {loop.name!r} has coincident nodes {i} and {(i + 1) % len(lengths)}")
    return d


def line_integral(vec, grid, loop):
    """Trapezoid ``oint vec . dq`` along the interpolated polyline."""
    d = _check_loop(loop, grid)
    vals = fields.interpolate(vec, grid, loop.points)
    mid = 0.5 * (vals + np.roll(vals, -1, axis=0))
    return float(np.sum(np.sum(mid * d, axis=1)))


def circulation(state, ham, loop):
    """``oint (M u - A) . dq`` around a material loop (pure-state mode)."""
    if state.psi is None:
        raise RequiresPureState("circulation needs the Berry connection of a spinor state")
    A = berry_connection(state.psi, state.grid, ham.hbar)
    return line_integral(ham.M * state.u - A, state.grid, loop)


def advect_loop(loop, u, grid, dt):
    """Advance loop nodes by one RK4 step in the frozen velocity field ``u``."""

    def vel(x):
        return fields.interpolate(u, grid, x)

    x = loop.points
    k1 = vel(x)
    k2 = vel(x + 0.5 * dt * k1)
    k3 = vel(x + 0.5 * dt * k2)
    k4 = vel(x + dt * k3)
    new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return TracerLoop(fields.wrap(new, grid), loop.name)


# -- records -----------------------------------------------------------------------------

BASE_COLUMNS = (
    "t",
    "dt",
    "h",
    "mass",
    "px",
    "py",
    "pz",
    "C1_purity",
    "C2_bc",
    "C2_b2",
    "Lam1_max",
    "Lam2_max",
    "C3",
    "purity",
    "tr_rho_tot_err",
    "min_D",
    "min_eig_rho",
    "herm_err",
)
EXTRA_COLUMNS = ("C2_cLam1", "C2_c2", "Cp_Omega", "Cp_Omega_c", "C_D2", "C_incomp", "max_div_u", "tr_rho_err")


def columns(n_loops):
    return BASE_COLUMNS + tuple(f"loop_{i}_circ" for i in range(n_loops)) + EXTRA_COLUMNS


@dataclass
class DiagnosticsRecord:
    values: dict = field(default_factory=dict)

    def row(self, cols):
        return [self.values.get(c, math.nan) for c in cols]

    def __getitem__(self, key):
        return self.values[key]


def _is_pure_projector(state, tol=1e-6):
    if state.psi is not None:
        return True
    rho = state.rho
    return float(np.max(np.abs(inner_re(rho, rho) - 1.0))) < tol


def record(state, ham, model, loops=(), dt=math.nan, vacuum=DEFAULT_VACUUM):
    """Evaluate every monitored quantity for one row of the invariants table."""
    g = state.grid
    v = {"t": state.t, "dt": dt}
    v["h"] = energy(state, ham, model)
    tot = totals(state, ham)
    v["mass"] = tot.mass
    v["px"], v["py"], v["pz"] = (float(x) for x in tot.momentum)
    v["C1_purity"] = casimir_c1(state, "purity")
    if _backreaction_c(state, model) is not None:
        l1 = lambda_n(state, 1, vacuum, model)
        l2 = lambda_n(state, 2, vacuum, model)
        v["Lam1_max"] = float(np.max(np.abs(l1)))
        v["Lam2_max"] = float(np.max(np.abs(l2)))
        for name in ("bc", "b2", "cLam1", "c2"):
            v[f"C2_{name}"] = casimir_c2(state, name, vacuum, lambdas=(l1, l2), model=model)
    if state.psi is not None and g.dim == 3 and state.c is not None:
        v["C3"] = cross_helicity(state, ham)
    v["purity"] = tot.purity
    v["tr_rho_tot_err"] = abs(float(np.trace(tot.rho_tot).real) - 1.0)
    v["min_D"] = float(np.min(state.D))
    rho = state.density_matrix()
    v["min_eig_rho"] = float(np.min(min_eigenvalue(rho)))
    v["herm_err"] = float(np.max(np.abs(rho - dagger(rho))))
    v["tr_rho_err"] = float(np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1).real - 1.0)))
    for i, loop in enumerate(loops):
        v[f"loop_{i}_circ"] = circulation(state, ham, loop) if state.psi is not None else math.nan
    if g.dim == 2:
        if _is_pure_projector(state) and _backreaction_c(state, model) is not None:
            v["Cp_Omega"] = planar_casimir(state, ham, "one", model)
            v["Cp_Omega_c"] = planar_casimir(state, ham, "id", model)
        v["C_D2"] = density_casimir(state)
        if model in INCOMPRESSIBLE_MODELS and _is_pure_projector(state):
            v["C_incomp"] = incompressible_casimir(state, ham)
        v["max_div_u"] = float(np.max(np.abs(fields.div(state.u, g))))
    return DiagnosticsRecord(v)
