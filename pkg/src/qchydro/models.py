"""Right-hand sides of the hybrid fluid systems.

Every model maps an immutable :class:`HybridState` to an :class:`Rhs` bundle of
time derivatives. Only first-derivative stencils (``fields.grad``/``div``) are
used; compositions such as ``div`` of a flux built from gradients are allowed.

Velocity ``u`` is the stored variable. On planar grids the state field ``c``
holds ``c~ = beta c`` and the backreaction field is the constant-gradient
profile ``b = beta z``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import fields, kernels
from .brackets import (
    _scale,
    apply,
    berry_connection,
    cross_ordered,
    embed3,
    fluctuation_force,
    gamma_cross_gradb,
    mead_connection,
    nambu_matrix,
    planar_bracket_grads,
    spinor_inner_re,
    stress_tensor,
    von_neumann,
)
from .errors import LogDomainError, ShapeError, UnnormalizedState, UnsupportedModel, UnsupportedOperation, VacuumError
from .hermitian import PAULI, commutator, inner_re, mm

DENSITY = "density-matrix"
PURE = "pure-state"


@dataclass(frozen=True)
class EquationOfState:
    """Barotropic closure ``p = kappa D^gamma`` (``kind="polytropic"``) or no pressure."""

    kind: str = "none"
    kappa: float = 0.0
    gamma: float = 2.0

    def __post_init__(self):
        if self.kind not in ("none", "polytropic"):
            raise ValueError(f"unknown equation of state {self.kind!r}")
        if self.kind == "polytropic" and (self.kappa < 0 or not self.gamma > 1):
            raise ValueError("polytropic closure needs kappa >= 0 and gamma > 1")

    @property
    def active(self):
        return self.kind == "polytropic"

    def internal_energy_density(self, D):
        """``D E(D)`` with ``E' = kappa D^(gamma-2)``."""
        if not self.active:
            return np.zeros_like(D)
        return self.kappa * D**self.gamma / (self.gamma - 1.0)

    def sound_speed_squared(self, D):
        if not self.active:
            return np.zeros_like(D)
        return self.kappa * self.gamma * D ** (self.gamma - 1.0)


def pressure(D, eos):
    """``p = D^2 E'(D)``; raises :class:`VacuumError` on nonpositive density."""
    D = np.asarray(D, dtype=np.float64)
    if not eos.active:
        return np.zeros_like(D)
    bad = D <= 0
    if np.any(bad):
        loc = tuple(int(i) for i in np.argwhere(bad)[0])
        raise VacuumError(f"nonpositive density at cell {loc}", location=loc)
    return eos.kappa * D**eos.gamma


@dataclass
class HybridHamiltonian:
    """``H(q) = V0(q) 1 + sum_a V_a(q) B_a`` with constant Hermitian ``B_a``."""

    V0: np.ndarray
    couplings: list = field(default_factory=list)
    M: float = 1.0
    hbar: float = 1.0
    eos: EquationOfState = field(default_factory=EquationOfState)
    n: int = 2

    def __post_init__(self):
        self.V0 = np.asarray(self.V0, dtype=np.float64)
        checked = []
        for V, B in self.couplings:
            B = np.asarray(B, dtype=np.complex128)
            if B.shape != (self.n, self.n):
                raise ShapeError(f"coupling matrix has shape {B.shape}, expected {(self.n, self.n)}")
            if np.max(np.abs(B - B.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(B))):
                raise ValueError("coupling matrices must be Hermitian")
            checked.append((np.asarray(V, dtype=np.float64), B))
        self.couplings = checked
        self._cache = {}

    def assemble(self):
        """Pointwise Hamiltonian matrix field."""
        if "H" not in self._cache:
            H = self.V0[..., None, None] * np.eye(self.n, dtype=np.complex128)
            for V, B in self.couplings:
                H = H + V[..., None, None] * B
            self._cache["H"] = H
        return self._cache["H"]

    def grad(self, grid):
        """Per-axis ``d_i H`` assembled from scalar potential gradients."""
        key = ("gH", grid)
        if key not in self._cache:
            eye = np.eye(self.n, dtype=np.complex128)
            gV0 = fields.grad(self.V0, grid)
            gH = gV0[..., None, None] * eye
            for V, B in self.couplings:
                gH = gH + fields.grad(V, grid)[..., None, None] * B
            self._cache[key] = gH
        return self._cache[key]

    def map_fields(self, fn):
        """Copy with ``fn`` applied to every scalar potential (spatial axes leading)."""
        return dataclasses.replace(self, V0=fn(self.V0), couplings=[(fn(V), B) for V, B in self.couplings])

    def shifted(self, shift, axis):
        """Potentials rolled by ``shift`` cells along spatial ``axis``."""
        return self.map_fields(lambda a: np.roll(a, shift, axis))

    def conjugated(self, U):
        """Same potentials with every coupling matrix replaced by ``U B U^dagger``."""
        U = np.asarray(U)
        return dataclasses.replace(
            self, couplings=[(V, U @ B @ U.conj().T) for V, B in self.couplings]
        )

    def dephasing_axis(self):
        """Return ``k`` if this is ``V0 1 + V_I sigma_k``, else raise."""
        if self.n != 2 or len(self.couplings) != 1:
            raise UnsupportedModel("pure-dephasing needs n=2 and a single coupling")
        B = self.couplings[0][1]
        for k in range(1, 4):
            if np.allclose(B, PAULI[k], atol=1e-14):
                return k
        raise UnsupportedModel("coupling matrix is not a Pauli matrix")


@dataclass
class HybridState:
    """Evolving fields on one grid.

    ``rho`` (density-matrix mode) or ``psi`` (pure-state mode) carries the quantum
    state. ``b`` is the periodic part of the backreaction field and
    ``b_gradient`` a constant background gradient, so ``grad b = b_gradient +
    grad(b)``; planar states leave ``b`` unset.
    """

    grid: fields.Grid
    D: np.ndarray
    u: np.ndarray
    c: np.ndarray | None = None
    rho: np.ndarray | None = None
    psi: np.ndarray | None = None
    b: np.ndarray | None = None
    b_gradient: tuple = (0.0, 0.0, 0.0)
    beta: float = 1.0
    t: float = 0.0

    DYNAMIC = ("D", "u", "rho", "psi", "b", "c")

    @property
    def mode(self):
        return PURE if self.psi is not None else DENSITY

    @property
    def n(self):
        q = self.psi if self.psi is not None else self.rho
        return q.shape[-1]

    def density_matrix(self):
        if self.rho is not None:
            return self.rho
        if self.psi.shape[-1] == 2:
            return kernels.outer2(self.psi)
        return self.psi[..., :, None] * np.conj(self.psi[..., None, :])

    def arrays(self):
        return {k: getattr(self, k) for k in self.DYNAMIC if getattr(self, k) is not None}

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def grad_b(self):
        """Three-component ``grad b`` (background plus periodic part)."""
        g = self.grid
        out = np.empty((3,) + g.shape)
        gp = fields.grad(self.b, g) if self.b is not None else None
        for a in range(3):
            out[a] = self.b_gradient[a]
            if gp is not None and a < g.dim:
                out[a] = out[a] + gp[a]
        return out

    def map_fields(self, fn, grid=None):
        """Copy with ``fn(array, offset)`` applied to every field; ``offset`` is the
        index of the first spatial axis (1 for ``u``, 0 otherwise)."""
        kw = {k: fn(v, 1 if k == "u" else 0) for k, v in self.arrays().items()}
        if grid is not None:
            kw["grid"] = grid
        return self.replace(**kw)

    def shifted(self, shift, axis):
        """All fields rolled by ``shift`` cells along spatial ``axis``."""
        return self.map_fields(lambda v, off: np.roll(v, shift, axis + off))


@dataclass
class Rhs:
    dD: np.ndarray
    du: np.ndarray
    drho: np.ndarray | None = None
    dpsi: np.ndarray | None = None
    db: np.ndarray | None = None
    dc: np.ndarray | None = None
    floor_activations: int = 0

    def arrays(self):
        m = {"D": self.dD, "u": self.du, "rho": self.drho, "psi": self.dpsi, "b": self.db, "c": self.dc}
        return {k: v for k, v in m.items() if v is not None}


@dataclass(frozen=True)
class VacuumPolicy:
    """``D`` is floored at ``floor_fraction * mean(D)`` inside every ``1/D``."""

    floor_fraction: float = 1e-8


DEFAULT_VACUUM = VacuumPolicy()


def _inverse_density(D, policy):
    if np.any(D <= 0):
        loc = tuple(int(i) for i in np.argwhere(D <= 0)[0])
        raise VacuumError(f"nonpositive density at cell {loc}", location=loc)
    floor = policy.floor_fraction * float(np.mean(D))
    low = D < floor
    count = int(np.count_nonzero(low))
    Dc = np.where(low, floor, D) if count else D
    return 1.0 / Dc, count


def _check_n(state, ham):
    if state.n != ham.n:
        raise ShapeError(f"state has n={state.n} but Hamiltonian has n={ham.n}")


def _advect_all(state, gD=None):
    """Advection of the transported scalars ``b`` and ``c``."""
    g = state.grid
    out = {}
    if state.b is not None:
        out["db"] = -fields.advect(state.u, state.grad_b()[: g.dim])
    if state.c is not None:
        out["dc"] = -fields.advect(state.u, fields.grad(state.c, g))
    return out


def _self_advection(u, grid):
    gu = np.stack([fields.grad(u[a], grid) for a in range(grid.dim)])
    return np.stack([fields.advect(u, gu[a]) for a in range(grid.dim)])


def _spinor_rhs(K, psi, gpsi, u, hbar):
    """``-(i/hbar) K psi - u . grad psi``."""
    if psi.shape[-1] == 2:
        return kernels.spinor_rhs2(K, psi, gpsi, u, hbar)
    return (-1j / hbar) * apply(K, psi) - fields.advect(u, gpsi)


def _commutator_rhs(K, rho, hbar):
    """``(1 / i hbar) [K, rho]``."""
    return (-1j / hbar) * commutator(K, rho)


def _mean_force(rho, gH):
    return np.stack([inner_re(rho, g) for g in gH])


# -- classical fluid -----------------------------------------------------------


def rhs_classical(state, ham, vacuum=DEFAULT_VACUUM):
    """Uncoupled fluid in the scalar potential: ``M Du/Dt = -grad V0 - grad p / D``.

    Quantum fields, if present, are only advected.
    """
    g = state.grid
    du = -fields.grad(ham.V0, g) / ham.M
    count = 0
    if ham.eos.active:
        Dinv, count = _inverse_density(state.D, vacuum)
        du = du - fields.grad(pressure(state.D, ham.eos), g) * Dinv / ham.M
    du = du - _self_advection(state.u, g)
    out = Rhs(dD=-fields.div(state.D * state.u, g), du=du, floor_activations=count, **_advect_all(state))
    if state.rho is not None:
        out.drho = -fields.advect(state.u, fields.grad_h(state.rho, g))
    if state.psi is not None:
        out.dpsi = -fields.advect(state.u, fields.grad(state.psi, g))
    return out


# -- Ehrenfest ---------------------------------------------------------------


def rhs_ehrenfest(state, ham, vacuum=DEFAULT_VACUUM):
    """Mean-force coupling: ``M Du/Dt = -<rho, grad H> - grad p / D``, ``i hbar Drho/Dt = [H, rho]``."""
    _check_n(state, ham)
    g = state.grid
    rho = state.density_matrix()
    gH = ham.grad(g)
    gr = fields.grad_h(rho, g)
    H = ham.assemble()
    drho = None
    if state.psi is None and rho.shape[-1] == 2:
        # the fused kernel with c = 0 and unit density reduces to the Ehrenfest terms
        zs = np.zeros(g.shape)
        # the kernel force is already -<rho, grad H>
        _, drho, force, _ = kernels.qc_pointwise(
            rho, H, gr, gH, np.zeros((g.dim,) + g.shape), np.zeros_like(gr), None, zs, zs, zs + 1.0, ham.hbar, state.u
        )
        du = force / ham.M
    else:
        du = -_mean_force(rho, gH) / ham.M
    count = 0
    if ham.eos.active:
        Dinv, count = _inverse_density(state.D, vacuum)
        du = du - fields.grad(pressure(state.D, ham.eos), g) * Dinv / ham.M
    du = du - _self_advection(state.u, g)
    dD = -fields.div(state.D * state.u, g)
    out = Rhs(dD=dD, du=du, floor_activations=count, **_advect_all(state))
    if state.psi is not None:
        out.dpsi = _spinor_rhs(H, state.psi, fields.grad(state.psi, g), state.u, ham.hbar)
    else:
        out.drho = drho if drho is not None else _commutator_rhs(H, rho, ham.hbar) - fields.advect(state.u, gr)
    return out


# -- QC 3D, direct form --------------------------------------------------------


@dataclass
class _QCTerms:
    """Intermediate fields shared by the direct-form assemblies."""

    K: np.ndarray
    force: np.ndarray
    grad_rho: np.ndarray
    Dinv: np.ndarray
    floor_activations: int
    drho: np.ndarray | None = None


def qc_pointwise_matrix(rho, H, gr, gH, gc, gcr, gb, c, Dinv, D, hbar, u=None):
    """Pointwise generator algebra with plain matrix products (any ``n``).

    Same contract as :func:`qchydro.kernels.qc_pointwise`; the n = 2 kernels use
    the Pauli-coefficient reduction and are checked against this function.
    """
    if gb is None:
        br = planar_bracket_grads
    else:
        def br(f, g):
            return nambu_matrix(gb, f, g)
    b_rH = br(gr, gH)
    inner = _scale(c, b_rH + br(gH, gr)) - 0.5 * commutator(br(gc, gH), rho)
    K = H + (1j * hbar) * _scale(Dinv, inner)
    drho = None
    if u is not None:
        drho = _commutator_rhs(K, rho, hbar) - fields.advect(u, gr)
    i_b_rH = 1j * b_rH
    i_b_crH = 1j * br(gcr, gH)
    dim = gr.shape[0]
    force = np.stack([
        -D * inner_re(rho, gH[a]) + hbar * (inner_re(gcr[a], i_b_rH) + inner_re(gr[a], i_b_crH))
        for a in range(dim)
    ])
    W = None
    if gb is not None:
        crho = _scale(c, rho)
        w = cross_ordered(gr, gH)
        W = np.stack([inner_re(crho, 1j * w[a]) for a in range(3)])
    return K, drho, force, W


def _rho_u(state):
    """Velocity for the fused ``drho`` (density mode only)."""
    return state.u if state.psi is None else None


def _qc_terms(rho, D, c, gb, gH, grid, ham, vacuum, planar, with_pressure=True, u=None):
    """Quantum generator ``K`` and the momentum force for the direct form.

    ``force`` is the right side of ``M D Du/Dt = force``. When ``u`` is given,
    ``drho = -(i/hbar)[K, rho] - u . grad rho`` is formed in the same pass.
    """
    hbar = ham.hbar
    Dinv, count = _inverse_density(D, vacuum)
    gr = fields.grad_h(rho, grid)
    gc = fields.grad(c, grid)
    gcr = fields.grad_h(_scale(c, rho), grid)
    impl = kernels.qc_pointwise if rho.shape[-1] == 2 else qc_pointwise_matrix
    K, drho, f, W = impl(rho, ham.assemble(), gr, gH, gc, gcr, None if planar else gb, c, Dinv, D, hbar, u)
    if not planar:
        f = f - hbar * fields.div(W, grid) * gb
    if with_pressure and ham.eos.active:
        f = f - fields.grad(pressure(D, ham.eos), grid)
    return _QCTerms(K=K, force=f, grad_rho=gr, Dinv=Dinv, floor_activations=count, drho=drho)


def _require_dim(state, dim, what):
    if state.grid.dim != dim:
        raise UnsupportedOperation(f"{what} needs a {dim}D grid, got {state.grid.dim}D")


def _finish(state, ham, terms, vacuum, gr=None):
    """Assemble velocity/quantum tendencies from the generator and force."""
    g = state.grid
    du = terms.force * terms.Dinv / ham.M - _self_advection(state.u, g)
    dD = -fields.div(state.D * state.u, g)
    out = Rhs(dD=dD, du=du, floor_activations=terms.floor_activations, **_advect_all(state))
    if state.psi is not None:
        out.dpsi = _spinor_rhs(terms.K, state.psi, fields.grad(state.psi, g), state.u, ham.hbar)
    else:
        out.drho = terms.drho
    return out


def rhs_qc3d(state, ham, vacuum=DEFAULT_VACUUM):
    """Direct form of the hybrid fluid equations on a 3D grid.

    In pure-state mode ``rho = psi psi^dagger`` feeds the same generator and the
    spinor obeys ``i hbar D psi/Dt = K psi``.
    """
    _require_dim(state, 3, "rhs_qc3d")
    _check_n(state, ham)
    g = state.grid
    rho = state.density_matrix()
    terms = _qc_terms(rho, state.D, state.c, state.grad_b(), ham.grad(g), g, ham, vacuum, planar=False, u=_rho_u(state))
    return _finish(state, ham, terms, vacuum)


# -- QC 3D, stress form ----------------------------------------------------------


def rhs_qc3d_stress_form(state, ham, vacuum=DEFAULT_VACUUM, mutate=None):
    """Same dynamics assembled through the von Neumann operator and the stress tensor.

    ``M D Du/Dt = -<Dvn, grad H> - div T`` and
    ``i hbar D Drho/Dt = [H, Dvn] + div(c grad b x [H, Gamma] + (i hbar/2) c grad b x [rho, [rho, grad H]])``.

    ``mutate`` flips the sign of one stress term (``"T_gamma_b"``) for mutation testing.
    """
    _require_dim(state, 3, "rhs_qc3d_stress_form")
    _check_n(state, ham)
    if state.psi is not None:
        raise UnsupportedOperation("stress form is assembled in density-matrix mode")
    g = state.grid
    hbar = ham.hbar
    rho, D, c = state.rho, state.D, state.c
    H = ham.assemble()
    gH = ham.grad(g)
    gb = state.grad_b()
    Dinv, count = _inverse_density(D, vacuum)
    gr = fields.grad_h(rho, g)
    gamma = mead_connection(rho, g, hbar, grad_rho=gr)
    dvn = von_neumann(D, rho, gb, c, g, hbar, gamma=gamma)
    p = pressure(D, ham.eos)
    T = stress_tensor(p, c, gb, gamma, gH)
    if mutate == "T_gamma_b":
        x = np.stack([inner_re(gamma[(j + 1) % 3], gH[(j + 2) % 3]) - inner_re(gamma[(j + 2) % 3], gH[(j + 1) % 3]) for j in range(3)])
        for j in range(3):
            for k in range(3):
                T[j, k] = T[j, k] - 2.0 * c * x[j] * gb[k]
    divT = np.stack([sum(fields.diff(T[j, k], g, j) for j in range(3)) for k in range(3)])
    force = -np.stack([inner_re(dvn, gH[a]) for a in range(3)]) - divT

    comm_H_gamma = np.stack([commutator(H, gamma[a]) for a in range(3)])
    dbl = np.stack([commutator(rho, commutator(rho, gH[a])) for a in range(3)])
    flux = gamma_cross_gradb_left(gb, comm_H_gamma + (0.5j * hbar) * dbl)
    flux = _scale(c, flux)
    q = commutator(H, dvn) + fields.div_h(flux, g)
    drho = (-1j / hbar) * _scale(Dinv, q) - fields.advect(state.u, gr)

    du = force * Dinv / ham.M - _self_advection(state.u, g)
    dD = -fields.div(D * state.u, g)
    return Rhs(dD=dD, du=du, drho=drho, floor_activations=count, **_advect_all(state))


def gamma_cross_gradb_left(gb, m):
    """``(grad b x m)_i = eps_ijk d_j b m_k``."""
    return np.stack(
        [
            _scale(gb[1], m[2]) - _scale(gb[2], m[1]),
            _scale(gb[2], m[0]) - _scale(gb[0], m[2]),
            _scale(gb[0], m[1]) - _scale(gb[1], m[0]),
        ]
    )


# -- planar compressible -----------------------------------------------------------


def rhs_qc_planar(state, ham, vacuum=DEFAULT_VACUUM):
    """Planar subsystem with ``b = beta z``; ``state.c`` holds ``c~ = beta c``.

    Vertical forces drop out, leaving the planar bracket
    ``{A, B} = d_x A d_y B - d_y A d_x B`` in place of the Nambu form.
    """
    _require_dim(state, 2, "rhs_qc_planar")
    _check_n(state, ham)
    g = state.grid
    rho = state.density_matrix()
    terms = _qc_terms(rho, state.D, state.c, None, ham.grad(g), g, ham, vacuum, planar=True, u=_rho_u(state))
    return _finish(state, ham, terms, vacuum)


# -- planar incompressible ------------------------------------------------------------


DIV_TOL = 1e-8


def rhs_qc_planar_incompressible(state, ham, vacuum=DEFAULT_VACUUM, check_div=True):
    """Incompressible planar model: ``c~ = beta D``; pressure is the projection multiplier.

    The unconstrained acceleration is projected with the fourth-order-consistent
    Poisson symbol so the discrete divergence of ``du`` vanishes to roundoff.
    """
    _require_dim(state, 2, "rhs_qc_planar_incompressible")
    _check_n(state, ham)
    g = state.grid
    if check_div:
        d = float(np.max(np.abs(fields.div(state.u, g))))
        if d > DIV_TOL:
            raise ValueError(f"velocity is not divergence free (max |div u| = {d:.3e})")
    rho = state.density_matrix()
    ctilde = state.beta * state.D
    terms = _qc_terms(rho, state.D, ctilde, None, ham.grad(g), g, ham, vacuum, planar=True, with_pressure=False, u=_rho_u(state))
    a = terms.force * terms.Dinv / ham.M - _self_advection(state.u, g)
    du, _ = fields.project_divergence_free(a, g)
    dD = -fields.advect(state.u, fields.grad(state.D, g))
    out = Rhs(dD=dD, du=du, floor_activations=terms.floor_activations)
    if state.psi is not None:
        out.dpsi = _spinor_rhs(terms.K, state.psi, fields.grad(state.psi, g), state.u, ham.hbar)
    else:
        out.drho = terms.drho
    return out


def rhs_ehrenfest_planar_incompressible(state, ham, vacuum=DEFAULT_VACUUM):
    """Ehrenfest coupling with the same incompressible projection."""
    _require_dim(state, 2, "rhs_ehrenfest_planar_incompressible")
    g = state.grid
    rho = state.density_matrix()
    a = -_mean_force(rho, ham.grad(g)) / ham.M - _self_advection(state.u, g)
    du, _ = fields.project_divergence_free(a, g)
    dD = -fields.advect(state.u, fields.grad(state.D, g))
    out = Rhs(dD=dD, du=du)
    H = ham.assemble()
    if state.psi is not None:
        out.dpsi = _spinor_rhs(H, state.psi, fields.grad(state.psi, g), state.u, ham.hbar)
    else:
        out.drho = _commutator_rhs(H, rho, ham.hbar) - fields.advect(state.u, fields.grad_h(rho, g))
    return out


# -- planar pure state ---------------------------------------------------------------

PSI_NORM_TOL = 1e-6


def rhs_pure_state_planar(state, ham, vacuum=DEFAULT_VACUUM):
    """Planar pure-state form: spinor evolution plus the Lorentz-type momentum equation.

    ``M Dv/Dt = -E - B v x e3 - grad p / D - grad<H> - <psi, i hbar e3 . F~ x grad psi> grad c~ / D``
    with ``E = -dA/dt - grad <psi, i hbar dpsi/dt>`` and ``B = e3 . curl A``.

    The sign of the fluctuation term is the one that makes this form agree with
    :func:`rhs_qc_planar` on ``rho = psi psi^dagger`` (and conserve the energy).
    """
    _require_dim(state, 2, "rhs_pure_state_planar")
    _check_n(state, ham)
    if state.psi is None:
        raise UnsupportedOperation("rhs_pure_state_planar needs a spinor state")
    g = state.grid
    hbar, M = ham.hbar, ham.M
    psi, D, ct, v = state.psi, state.D, state.c, state.u
    norm_err = float(np.max(np.abs(np.sqrt(np.sum(np.abs(psi) ** 2, axis=-1)) - 1.0)))
    if norm_err > PSI_NORM_TOL:
        raise UnnormalizedState(f"spinor norm drift {norm_err:.3e}", drift=norm_err)
    if np.any(ct <= 0):
        raise LogDomainError("c~ must be positive for the log-bracket term")
    Dinv, count = _inverse_density(D, vacuum)
    H = ham.assemble()
    gH = ham.grad(g)
    rho = psi[..., :, None] * np.conj(psi[..., None, :])
    gr = fields.grad_h(rho, g)
    glc = fields.grad(np.log(ct), g)
    inner = planar_bracket_grads(gr, gH) + planar_bracket_grads(gH, gr)
    inner = inner - 0.5 * commutator(planar_bracket_grads(glc, gH), rho)
    K = H + (1j * hbar) * _scale(ct * Dinv, inner)
    gpsi = fields.grad(psi, g)
    dpsi = _spinor_rhs(K, psi, gpsi, v, hbar)

    A = berry_connection(psi, g, hbar, grad_psi=gpsi, check=False)
    gdpsi = fields.grad(dpsi, g)
    dA = hbar * np.stack(
        [
            np.sum((np.conj(dpsi) * gpsi[a] + np.conj(psi) * gdpsi[a]).imag, axis=-1)
            for a in range(2)
        ]
    )
    phase_rate = -hbar * np.sum((np.conj(psi) * dpsi).imag, axis=-1)
    E = -dA - fields.grad(phase_rate, g)
    B = hbar * np.sum((np.conj(gpsi[0]) * gpsi[1] - np.conj(gpsi[1]) * gpsi[0]).imag, axis=-1)
    Ft = fluctuation_force(psi, gH, check=False)
    Q = spinor_inner_re(psi, 1j * hbar * (apply(Ft[0], gpsi[1]) - apply(Ft[1], gpsi[0])))
    Hexp = spinor_inner_re(psi, apply(H, psi))
    force = -E - B * np.stack([v[1], -v[0]]) - fields.grad(Hexp, g)
    force = force - Dinv * Q * fields.grad(ct, g)
    if ham.eos.active:
        force = force - Dinv * fields.grad(pressure(D, ham.eos), g)
    dv = force / M - _self_advection(v, g)
    dD = -fields.div(D * v, g)
    return Rhs(dD=dD, du=dv, dpsi=dpsi, dc=-fields.advect(v, fields.grad(ct, g)), floor_activations=count)


# -- pure dephasing -------------------------------------------------------------------


def dephasing_local_law_residual(state, ham, rhs=None, model=None, vacuum=DEFAULT_VACUUM):
    """Residual of ``D (d/dt + u . grad)<sigma_k> = {V_I, c (1 - <sigma_k>^2)}_b``.

    Works for 3D (Nambu bracket) and planar (``c~``) grids.
    """
    k = ham.dephasing_axis()
    sigma = PAULI[k]
    g = state.grid
    if rhs is None:
        model = model or (rhs_qc3d if g.dim == 3 else rhs_qc_planar)
        rhs = model(state, ham, vacuum)
    rho = state.density_matrix()
    if rhs.drho is not None:
        drho = rhs.drho
    else:
        psi, dpsi = state.psi, rhs.dpsi
        drho = dpsi[..., :, None] * np.conj(psi[..., None, :]) + psi[..., :, None] * np.conj(dpsi[..., None, :])
    s = inner_re(rho, np.broadcast_to(sigma, rho.shape))
    ds = inner_re(np.broadcast_to(sigma, drho.shape), drho)
    lhs = state.D * (ds + fields.advect(state.u, fields.grad(s, g)))
    VI = ham.couplings[0][0]
    w = state.c * (1.0 - s * s)
    if g.dim == 3:
        from .brackets import nambu_scalar

        rhs_field = nambu_scalar(state.grad_b(), fields.grad(VI, g), fields.grad(w, g))
    else:
        rhs_field = planar_bracket_grads(fields.grad(VI, g), fields.grad(w, g))
    return lhs - rhs_field


MODELS = {
    "classical": rhs_classical,
    "ehrenfest": rhs_ehrenfest,
    "qc3d": rhs_qc3d,
    "qc3d_stress": rhs_qc3d_stress_form,
    "qc_planar": rhs_qc_planar,
    "qc_planar_incompressible": rhs_qc_planar_incompressible,
    "ehrenfest_planar_incompressible": rhs_ehrenfest_planar_incompressible,
    "pure_state_planar": rhs_pure_state_planar,
}

INCOMPRESSIBLE = {"qc_planar_incompressible", "ehrenfest_planar_incompressible"}
PLANAR_ONLY = {"qc_planar", "qc_planar_incompressible", "ehrenfest_planar_incompressible", "pure_state_planar"}
THREE_D_ONLY = {"qc3d", "qc3d_stress"}
