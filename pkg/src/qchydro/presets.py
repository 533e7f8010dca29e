"""Initial-condition and potential presets.

A scalar preset is a small dict such as ``{"kind": "modes", "offset": 1.0,
"modes": [{"amp": 0.2, "k": [1, 0], "phase": 0.0, "func": "cos"}]}``. Wave
vectors are integer multiples of the fundamental box wavenumber along each
axis, so every preset is exactly periodic.
"""

from __future__ import annotations

import numpy as np

from . import fields
from .errors import ConfigError
from .hermitian import PAULI
from .models import EquationOfState, HybridHamiltonian, HybridState

SCALAR_KINDS = ("constant", "modes", "gaussian", "equal_D")


def _coords(grid):
    return grid.mesh()


def scalar_field(spec, grid, D=None):
    """Evaluate a scalar preset on ``grid`` (``equal_D`` copies the density field)."""
    if isinstance(spec, (int, float)):
        return np.full(grid.shape, float(spec))
    kind = spec.get("kind", "constant")
    xs = _coords(grid)
    if kind == "constant":
        return np.full(grid.shape, float(spec.get("value", 0.0)))
    if kind == "modes":
        out = np.full(grid.shape, float(spec.get("offset", 0.0)))
        for m in spec.get("modes", []):
            k = list(m.get("k", [1] + [0] * (grid.dim - 1)))
            if len(k) != grid.dim:
                raise ConfigError([f"mode wave vector {k} does not match grid dim {grid.dim}"])
            arg = float(m.get("phase", 0.0))
            for a in range(grid.dim):
                arg = arg + 2 * np.pi * k[a] / grid.extent[a] * xs[a]
            fn = np.sin if m.get("func", "cos") == "sin" else np.cos
            out = out + float(m.get("amp", 1.0)) * fn(arg)
        # products of modes, e.g. sin(x) cos(y)
        for p in spec.get("products", []):
            term = np.full(grid.shape, float(p.get("amp", 1.0)))
            for a, f in enumerate(p.get("funcs", [])):
                if f is None:
                    continue
                fn = np.sin if f == "sin" else np.cos
                k = p.get("k", [1] * grid.dim)[a]
                term = term * fn(2 * np.pi * k / grid.extent[a] * xs[a] + p.get("phase", [0.0] * grid.dim)[a])
            out = out + term
        return out
    if kind == "gaussian":
        center = spec.get("center", [0.5 * e for e in grid.extent])
        width = float(spec["width"])
        r2 = np.zeros(grid.shape)
        for a in range(grid.dim):
            d = xs[a] - center[a]
            L = grid.extent[a]
            d = d - L * np.round(d / L)
            r2 = r2 + d * d
        return float(spec.get("background", 0.0)) + float(spec.get("amp", 1.0)) * np.exp(-0.5 * r2 / width**2)
    if kind == "equal_D":
        if D is None:
            raise ConfigError(["equal_D preset needs the density field"])
        return float(spec.get("scale", 1.0)) * D
    raise ConfigError([f"unknown scalar preset kind {kind!r}"])


def gaussian_mass(spec, grid):
    """Closed-form integral of a ``gaussian`` preset (tails beyond the box neglected)."""
    w = float(spec["width"])
    return float(spec.get("background", 0.0)) * grid.volume + float(spec.get("amp", 1.0)) * (2 * np.pi * w * w) ** (
        grid.dim / 2
    )


def vector_field(spec, grid):
    """Velocity preset: ``{"kind": "zero"}``, ``{"kind": "components", "components": [scalar presets]}``
    or ``{"kind": "cellular", "amp": a}`` (divergence-free ``(sin y, sin x)``-type flow)."""
    kind = spec.get("kind", "zero") if isinstance(spec, dict) else "zero"
    if kind == "zero":
        return np.zeros((grid.dim,) + grid.shape)
    if kind == "components":
        comps = spec["components"]
        if len(comps) != grid.dim:
            raise ConfigError([f"velocity needs {grid.dim} components, got {len(comps)}"])
        return np.stack([scalar_field(c, grid) for c in comps])
    if kind == "cellular":
        a = float(spec.get("amp", 1.0))
        x = _coords(grid)
        kx = 2 * np.pi / grid.extent[0]
        ky = 2 * np.pi / grid.extent[1]
        out = np.zeros((grid.dim,) + grid.shape)
        out[0] = a * np.sin(ky * x[1])
        out[1] = a * np.sin(kx * x[0])
        return out
    raise ConfigError([f"unknown velocity preset kind {kind!r}"])


def bloch_spinor(theta, phi):
    """``psi = (cos(theta/2), e^{i phi} sin(theta/2))``."""
    return np.stack([np.cos(0.5 * theta) + 0j, np.exp(1j * phi) * np.sin(0.5 * theta)], axis=-1)


def bloch_density(theta, phi, radius=1.0):
    """``rho = (1 + r n . sigma) / 2`` with Bloch direction ``n(theta, phi)``."""
    n = (np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta))
    rho = 0.5 * np.broadcast_to(PAULI[0], np.shape(theta) + (2, 2)).astype(np.complex128)
    for k in range(3):
        rho = rho + (0.5 * radius * n[k])[..., None, None] * PAULI[k + 1]
    return rho


def build_hamiltonian(spec, grid):
    """``{"V0": preset, "couplings": [{"V": preset, "matrix": "sigma_z" | [[...]]}], "M", "hbar", "eos"}``."""
    named = {"identity": PAULI[0], "sigma_x": PAULI[1], "sigma_y": PAULI[2], "sigma_z": PAULI[3]}
    couplings = []
    for cpl in spec.get("couplings", []):
        m = cpl["matrix"]
        if isinstance(m, str):
            B = named[m]
        elif isinstance(m, dict):
            B = np.array(m["re"], dtype=np.complex128) + 1j * np.array(m.get("im", np.zeros_like(m["re"])), dtype=float)
        else:
            B = np.array(m, dtype=np.complex128)
        couplings.append((scalar_field(cpl["V"], grid), B))
    eos = spec.get("eos", {"kind": "none"})
    eos = EquationOfState(eos.get("kind", "none"), float(eos.get("kappa", 0.0)), float(eos.get("gamma", 2.0)))
    n = int(spec.get("n", 2))
    return HybridHamiltonian(
        scalar_field(spec.get("V0", 0.0), grid),
        couplings,
        M=float(spec.get("M", 1.0)),
        hbar=float(spec.get("hbar", 1.0)),
        eos=eos,
        n=n,
    )


def build_state(spec, grid):
    """Initial state from presets (n = 2 Bloch-angle parameterization)."""
    D = scalar_field(spec["D"], grid)
    u = vector_field(spec.get("u", {"kind": "zero"}), grid)
    theta = scalar_field(spec.get("theta", 0.0), grid)
    phi = scalar_field(spec.get("phi", 0.0), grid)
    mode = spec.get("mode", "density-matrix")
    c = scalar_field(spec["c"], grid, D=D) if "c" in spec else None
    b = scalar_field(spec["b"], grid) if "b" in spec and grid.dim == 3 else None
    bg = tuple(float(x) for x in spec.get("b_gradient", (0.0, 0.0, 0.0)))
    kw = dict(grid=grid, D=D, u=u, c=c, b=b, b_gradient=bg, beta=float(spec.get("beta", 1.0)))
    if mode == "pure-state":
        return HybridState(psi=bloch_spinor(theta, phi), **kw)
    return HybridState(rho=bloch_density(theta, phi, float(spec.get("bloch_radius", 1.0))), **kw)


# -- named reference setups -----------------------------------------------------------


def _m(amp, k, phase=0.0, func="cos"):
    return {"amp": amp, "k": k, "phase": phase, "func": func}


def dephasing_reference(mode="pure-state", coupling_amp=0.5, backreaction=0.4, vi_constant=False):
    """Planar pure-dephasing setup: ``H = V0 + V_I sigma_z`` with ``<sigma_z>_0 = 0``.

    ``V_I`` and ``c~`` vary in space; the Bloch vector starts on the equator
    with a position-dependent phase.
    """
    VI = (
        {"kind": "constant", "value": coupling_amp}
        if vi_constant
        else {"kind": "modes", "offset": coupling_amp, "modes": [_m(0.5 * coupling_amp, [1, 0]), _m(0.3 * coupling_amp, [0, 1], 0.4, "sin")]}
    )
    return {
        "state": {
            "mode": mode,
            "D": {"kind": "modes", "offset": 1.0, "modes": [_m(0.1, [1, 0]), _m(0.08, [0, 1], 0.3, "sin")]},
            "u": {"kind": "components", "components": [
                {"kind": "modes", "modes": [_m(0.1, [0, 1], 0.0, "sin")]},
                {"kind": "modes", "modes": [_m(0.08, [1, 0], 0.5, "sin")]},
            ]},
            "theta": {"kind": "constant", "value": float(np.pi / 2)},
            "phi": {"kind": "modes", "modes": [_m(1.0, [1, 0], 0.0, "sin"), _m(0.5, [0, 1])]},
            "c": {"kind": "modes", "offset": backreaction, "modes": [_m(0.3 * backreaction, [1, 1], 0.2, "sin")]},
        },
        "hamiltonian": {
            "V0": {"kind": "modes", "modes": [_m(0.1, [1, 1])]},
            "couplings": [{"V": VI, "matrix": "sigma_z"}],
            "eos": {"kind": "polytropic", "kappa": 0.5, "gamma": 2.0},
        },
    }


def build(setup, grid):
    return build_state(setup["state"], grid), build_hamiltonian(setup["hamiltonian"], grid)


# -- smooth analytic presets for convergence studies -----------------------------------


def _bloch_from_vector(r):
    """``rho = (1 + r . sigma) / 2`` for a Bloch-vector field ``r`` (component axis first)."""
    rho = 0.5 * np.broadcast_to(PAULI[0], r.shape[1:] + (2, 2)).astype(np.complex128)
    for k in range(3):
        rho = rho + (0.5 * r[k])[..., None, None] * PAULI[k + 1]
    return rho


def smooth_3d(N, mixed=0.8, pure=False, eos=True, const_b=False):
    """Smooth generic 3D state on the ``2 pi`` cube with two noncommuting couplings.

    ``mixed`` is the Bloch radius of ``rho``; ``pure=True`` returns a spinor state.
    ``const_b=True`` drops the backreaction field (``grad b = 0``).
    """
    g = fields.Grid.cube(N)
    x, y, z = g.mesh()
    D = 1.0 + 0.3 * np.sin(x) * np.cos(y) + 0.2 * np.cos(z + 0.3)
    u = np.stack([0.3 * np.sin(y + z), 0.2 * np.cos(x - z), 0.25 * np.sin(x + y)])
    th = 1.0 + 0.5 * np.sin(x + 0.2) * np.cos(z)
    ph = 0.7 * np.cos(y) + 0.4 * np.sin(x + z)
    b = None if const_b else 0.5 * np.sin(x + 0.4) * np.cos(y) + 0.3 * np.sin(z)
    c = 0.8 + 0.2 * np.cos(x) * np.sin(y + z)
    V0 = 0.3 * np.cos(x) + 0.1 * np.sin(y)
    V1 = 0.5 * np.sin(y + 0.1) * np.cos(z)
    V3 = 0.4 * np.cos(x + z)
    closure = EquationOfState("polytropic", 0.5, 2.0) if eos else EquationOfState()
    ham = HybridHamiltonian(V0, [(V1, PAULI[1]), (V3, PAULI[3])], eos=closure)
    if pure:
        return HybridState(g, D, u, c=c, psi=bloch_spinor(th, ph), b=b), ham
    r = mixed * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return HybridState(g, D, u, c=c, rho=_bloch_from_vector(r), b=b), ham


def smooth_2d(N, pure=True, mixed=0.8, beta=1.0, eos=True):
    """Smooth generic planar state on the ``2 pi`` square; ``c`` holds ``c~ = beta c``."""
    g = fields.Grid.cube(N, dim=2)
    x, y = g.mesh()
    D = 1.0 + 0.3 * np.sin(x) * np.cos(y) + 0.2 * np.cos(y + 0.3)
    u = np.stack([0.3 * np.sin(y), 0.2 * np.cos(x - y)])
    th = 1.0 + 0.5 * np.sin(x + 0.2) * np.cos(y)
    ph = 0.7 * np.cos(y) + 0.4 * np.sin(x)
    c = beta * (0.8 + 0.2 * np.cos(x) * np.sin(y))
    V0 = 0.3 * np.cos(x) + 0.1 * np.sin(y)
    V1 = 0.5 * np.sin(y + 0.1) * np.cos(x)
    V3 = 0.4 * np.cos(x + y)
    closure = EquationOfState("polytropic", 0.5, 2.0) if eos else EquationOfState()
    ham = HybridHamiltonian(V0, [(V1, PAULI[1]), (V3, PAULI[3])], eos=closure)
    if pure:
        return HybridState(g, D, u, c=c, psi=bloch_spinor(th, ph), beta=beta), ham
    r = mixed * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return HybridState(g, D, u, c=c, rho=_bloch_from_vector(r), beta=beta), ham


def embed_planar(state, ham, nz=8):
    """z-uniform 3D copy of a planar state with ``b = beta z`` and ``c = c~ / beta``."""
    g2 = state.grid
    g3 = fields.Grid(g2.shape + (nz,), g2.spacing + (g2.spacing[0],))

    def lift(a, off=0):
        a = np.asarray(a)
        return np.repeat(np.expand_dims(a, off + 2), nz, axis=off + 2)

    u = np.concatenate([lift(state.u, 1), np.zeros((1,) + g3.shape)])
    kw = dict(c=lift(state.c) / state.beta, b_gradient=(0.0, 0.0, state.beta), t=state.t)
    if state.psi is not None:
        kw["psi"] = lift(state.psi)
    else:
        kw["rho"] = lift(state.rho)
    return HybridState(g3, lift(state.D), u, **kw), ham.map_fields(lift)


def smooth_incompressible_2d(N, pure=True, mixed=0.8, beta=1.0, uniform_D=False):
    """Planar state with a stream-function velocity, so the fourth-order ``div u`` is roundoff.

    ``D`` is the advected density that sets ``c~ = beta D`` in the incompressible model.
    """
    g = fields.Grid.cube(N, dim=2)
    x, y = g.mesh()
    D = np.ones(g.shape) if uniform_D else 1.0 + 0.2 * np.sin(x + 0.3) * np.cos(y) + 0.1 * np.cos(2 * y)
    stream = 0.2 * np.sin(x) * np.sin(y) + 0.1 * np.cos(x + 2 * y + 0.2)
    gs = fields.grad(stream, g)
    u = np.stack([gs[1], -gs[0]])
    th = 1.0 + 0.5 * np.sin(x + 0.2) * np.cos(y)
    ph = 0.7 * np.cos(y) + 0.4 * np.sin(x)
    V0 = 0.3 * np.cos(x) + 0.1 * np.sin(y)
    V1 = 0.5 * np.sin(y + 0.1) * np.cos(x)
    V3 = 0.4 * np.cos(x + y)
    ham = HybridHamiltonian(V0, [(V1, PAULI[1]), (V3, PAULI[3])])
    if pure:
        return HybridState(g, D, u, psi=bloch_spinor(th, ph), beta=beta), ham
    r = mixed * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return HybridState(g, D, u, rho=_bloch_from_vector(r), beta=beta), ham
