"""Verification harness: identity residuals, form equivalence, convergence orders,
reductions and equivariance.

Every check returns plain report objects that serialize to JSON. Convergence
orders come from a least-squares fit of ``log residual`` against ``log N``.
Large 3D grids are evaluated in z-slabs with a periodic halo so that the
memory footprint stays bounded; the stencils see exactly the same operands as
on the full grid, so slab results are bitwise identical to full-grid ones.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields, presets
from .brackets import (
    _scale,
    cross_ordered,
    gamma_cross_gradb,
    mead_connection,
    nambu_matrix,
    nambu_scalar,
    stress_tensor,
)
from .hermitian import PAULI, commutator, dagger, inner_re, mm
from .integrator import IntegratorConfig, rk4_step
from .models import (
    MODELS,
    HybridHamiltonian,
    HybridState,
    dephasing_local_law_residual,
    qc_pointwise_matrix,
    rhs_qc3d,
    rhs_qc3d_stress_form,
)
from . import kernels

DEFAULT_LADDER = (32, 64, 128)
ORDER_THRESHOLD = 3.5
MUTATION_CEILING = 1.0
SLAB_HALO = 4
SLAB_CELLS = 16
SLAB_ABOVE = 96  # grids with more cells per axis are evaluated in slabs
EXACT_TOL = 1e-12


# -- reports ----------------------------------------------------------------------------


def fit_order(grids, residuals):
    """Least-squares slope of ``-log r`` against ``log N``."""
    n = np.log(np.asarray(grids, dtype=float))
    r = np.log(np.asarray(residuals, dtype=float))
    slope = np.polyfit(n, r, 1)[0]
    return float(-slope)


@dataclass
class ConvergenceReport:
    name: str
    grids: list
    residuals: list
    order: float
    threshold: float
    passed: bool
    monotone: bool
    exact: bool = False
    mode: str = "at_least"  # "at_most" for mutation runs that must fail to converge
    note: str = ""
    seconds: float = 0.0

    def to_dict(self):
        return asdict(self)

    def line(self):
        rs = ", ".join(f"{r:.3e}" for r in self.residuals)
        rel = ">=" if self.mode == "at_least" else "<"
        status = "PASS" if self.passed else "FAIL"
        extra = " (exact at every grid)" if self.exact else ""
        return f"{status} {self.name}: order {self.order:.2f} ({rel} {self.threshold}) residuals [{rs}]{extra}"


def convergence_report(name, grids, residuals, threshold=ORDER_THRESHOLD, mode="at_least", note="", seconds=0.0):
    """Fit the order and apply the pass rule.

    ``at_least`` passes when residuals decrease monotonically and the order is at
    least ``threshold``; residuals that are all below ``EXACT_TOL`` pass as exact.
    ``at_most`` (mutation runs) passes when the order stays below ``threshold``.
    """
    grids = [int(g) for g in grids]
    residuals = [float(r) for r in residuals]
    if len(grids) < 3:
        raise ValueError("a convergence study needs at least 3 grid sizes")
    exact = all(r <= EXACT_TOL for r in residuals)
    monotone = all(b < a for a, b in zip(residuals, residuals[1:]))
    if exact:
        order = math.inf
    elif any(r <= 0 for r in residuals):
        order = math.nan
    else:
        order = fit_order(grids, residuals)
    if mode == "at_least":
        passed = exact or (monotone and order >= threshold)
    else:
        passed = (not exact) and not (order >= threshold)
    return ConvergenceReport(name, grids, residuals, order, threshold, bool(passed), monotone, exact, mode, note,
                             seconds)


@dataclass
class ResidualReport:
    name: str
    max_abs: float
    l2: float
    tolerance: float
    passed: bool
    relative: bool = True
    snapshot: str | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        if "ratios" in self.details:
            rs = ", ".join(f"{r:.2f}" for r in self.details["ratios"])
            extra = " (conserved to roundoff)" if self.details.get("exact") else ""
            return f"{status} {self.name}: dt-halving drift ratios [{rs}] (band {RATIO_BAND[0]:g}-{RATIO_BAND[1]:g}){extra}"
        kind = "relative" if self.relative else "absolute"
        return f"{status} {self.name}: max {kind} residual {self.max_abs:.3e} (tol {self.tolerance:.1e})"


def residual_report(name, lhs, rhs, tol, relative=True, bitwise=False, details=None):
    """Compare two arrays (or tuples of arrays) and build a :class:`ResidualReport`."""
    lhs = lhs if isinstance(lhs, (list, tuple)) else [lhs]
    rhs = rhs if isinstance(rhs, (list, tuple)) else [rhs]
    diff_max = 0.0
    sq = 0.0
    count = 0
    scale = 0.0
    identical = True
    for a, b in zip(lhs, rhs):
        a = np.asarray(a)
        b = np.asarray(b)
        d = np.abs(a - b)
        diff_max = max(diff_max, float(np.max(d)) if d.size else 0.0)
        sq += float(np.sum(d**2))
        count += d.size
        scale = max(scale, float(np.max(np.abs(a))) if a.size else 0.0, float(np.max(np.abs(b))) if b.size else 0.0)
        identical = identical and np.array_equal(a, b)
    l2 = math.sqrt(sq / max(count, 1))
    if bitwise:
        return ResidualReport(name, diff_max, l2, 0.0, bool(identical), relative=False, details=details or {})
    value = diff_max / scale if relative and scale > 0 else diff_max
    l2v = l2 / scale if relative and scale > 0 else l2
    return ResidualReport(name, value, l2v, tol, bool(value <= tol), relative, details=details or {})


def write_json(reports, path, seed=None, extra=None):
    """Write reports (nested dicts/lists of report objects) with the seed used."""

    def conv(x):
        if hasattr(x, "to_dict"):
            return x.to_dict()
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        if isinstance(x, float) and not math.isfinite(x):
            return str(x)
        return x

    payload = {"seed": seed, "reports": conv(reports)}
    if extra:
        payload.update(conv(extra))
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def all_passed(reports):
    """True when every report in a nested structure passed."""
    if hasattr(reports, "passed"):
        return bool(reports.passed)
    if isinstance(reports, dict):
        return all(all_passed(v) for v in reports.values())
    if isinstance(reports, (list, tuple)):
        return all(all_passed(v) for v in reports)
    return True


def iter_reports(reports):
    if hasattr(reports, "passed"):
        yield reports
    elif isinstance(reports, dict):
        for v in reports.values():
            yield from iter_reports(v)
    elif isinstance(reports, (list, tuple)):
        for v in reports:
            yield from iter_reports(v)


# -- slab evaluation --------------------------------------------------------------------


def _sub_problem(state, ham, idx, axis):
    g = state.grid
    shape = list(g.shape)
    shape[axis] = len(idx)
    sub = fields.Grid(tuple(shape), g.spacing)
    st = state.map_fields(lambda a, off: np.take(a, idx, axis=axis + off), grid=sub)
    hm = ham.map_fields(lambda a: np.take(a, idx, axis=axis))
    return st, hm


def _spatial_offset(arr, shape):
    d = len(shape)
    if arr.shape[:d] == tuple(shape):
        return 0
    if arr.shape[1:d + 1] == tuple(shape):
        return 1
    raise ValueError(f"cannot locate spatial axes of an array with shape {arr.shape}")


def evaluate_in_slabs(fn, state, ham, axis=2, slab=SLAB_CELLS, halo=SLAB_HALO):
    """Evaluate ``fn(state, ham) -> {name: field}`` slab by slab along ``axis``.

    Each slab is padded by ``halo`` periodic cells per side; ``halo`` must cover
    the total stencil depth of ``fn`` (two nested first derivatives need 4).
    """
    n = state.grid.shape[axis]
    if slab + 2 * halo >= n:
        return fn(state, ham)
    out = {}
    for z0 in range(0, n, slab):
        z1 = min(z0 + slab, n)
        idx = np.arange(z0 - halo, z1 + halo) % n
        st, hm = _sub_problem(state, ham, idx, axis)
        res = fn(st, hm)
        for name, arr in res.items():
            arr = np.asarray(arr)
            off = _spatial_offset(arr, st.grid.shape)
            ax = axis + off
            if name not in out:
                full = list(arr.shape)
                full[ax] = n
                out[name] = np.empty(tuple(full), dtype=arr.dtype)
            keep = [slice(None)] * arr.ndim
            keep[ax] = slice(halo, halo + (z1 - z0))
            dest = [slice(None)] * arr.ndim
            dest[ax] = slice(z0, z1)
            out[name][tuple(dest)] = arr[tuple(keep)]
    return out


def _evaluate(fn, state, ham):
    if state.grid.dim == 3 and max(state.grid.shape) > SLAB_ABOVE:
        return evaluate_in_slabs(fn, state, ham)
    return fn(state, ham)


# -- form equivalence ------------------------------------------------------------------


def _form_fields(variants):
    def fn(state, ham):
        a = rhs_qc3d(state, ham)
        res = {}
        for v in variants:
            b = rhs_qc3d_stress_form(state, ham, mutate=v)
            key = v or "plain"
            res[f"du_{key}"] = a.du - b.du
            res[f"drho_{key}"] = a.drho - b.drho
        return res

    return fn


def form_equivalence_residuals(preset=presets.smooth_3d, grids=DEFAULT_LADDER, variants=(None,)):
    """Max-norm differences of ``du`` and ``drho`` between the direct and stress forms."""
    out = {v or "plain": {"du": [], "drho": []} for v in variants}
    for N in grids:
        state, ham = preset(N)
        res = _evaluate(_form_fields(variants), state, ham)
        for v in variants:
            key = v or "plain"
            out[key]["du"].append(float(np.max(np.abs(res[f"du_{key}"]))))
            out[key]["drho"].append(float(np.max(np.abs(res[f"drho_{key}"]))))
        del res
    return out


def check_form_equivalence(preset=presets.smooth_3d, grids=DEFAULT_LADDER, mutate=None, with_mutation=False):
    """Direct form vs stress form of the 3D right-hand side.

    The residual at each grid is ``max(|du_direct - du_stress|, |drho_direct - drho_stress|)``.
    With ``with_mutation=True`` the sign-mutated stress form is evaluated in the same
    pass and a second report (which must *not* converge) is returned.
    """
    t0 = time.perf_counter()
    variants = [mutate]
    if with_mutation and "T_gamma_b" not in variants:
        variants.append("T_gamma_b")
    res = form_equivalence_residuals(preset, grids, tuple(variants))
    secs = time.perf_counter() - t0
    reports = []
    for v in variants:
        key = v or "plain"
        r = [max(a, b) for a, b in zip(res[key]["du"], res[key]["drho"])]
        note = f"du {res[key]['du']}, drho {res[key]['drho']}"
        if v is None:
            reports.append(convergence_report("form_equivalence", grids, r, ORDER_THRESHOLD, note=note, seconds=secs))
        else:
            reports.append(convergence_report(f"form_equivalence_mutation_{v}", grids, r, MUTATION_CEILING,
                                              mode="at_most", note=note, seconds=secs))
    return reports if with_mutation else reports[0]


# -- divergence and closing identities ----------------------------------------------------------------


def _identity_fields(state, ham):
    """Both sides of the divergence identity and of the two closing equalities."""
    g = state.grid
    hbar = ham.hbar
    rho, c = state.density_matrix(), state.c
    H = ham.assemble()
    gH = ham.grad(g)
    gr = fields.grad_h(rho, g)
    gb = state.grad_b()
    gc = fields.grad(c, g)
    gcr = fields.grad_h(_scale(c, rho), g)
    br_rH = nambu_matrix(gb, gr, gH)
    br_Hr = nambu_matrix(gb, gH, gr)
    br_cH = nambu_matrix(gb, gc, gH)
    br_crH = nambu_matrix(gb, gcr, gH)

    # (i) d_i (i hbar [grad H, rho] x c grad b)_i
    comm = np.stack([commutator(gH[a], rho) for a in range(3)])
    flux = gamma_cross_gradb(comm, gb)
    lhs1 = (1j * hbar) * fields.div_h(_scale(c, flux), g)
    rhs1 = (-1j * hbar) * _scale(c, br_rH + br_Hr) + (1j * hbar) * commutator(br_cH, rho)

    # (ii-a) V x (grad c x grad b) - c grad b div V = hbar <rho, i{rho,H}> grad c - hbar div<c rho, i grad rho x grad H> grad b
    w = cross_ordered(gr, gH)
    V = np.stack([inner_re(rho, (1j * hbar) * w[a]) for a in range(3)])
    cb = np.stack([gc[1] * gb[2] - gc[2] * gb[1], gc[2] * gb[0] - gc[0] * gb[2], gc[0] * gb[1] - gc[1] * gb[0]])
    vx = np.stack([V[1] * cb[2] - V[2] * cb[1], V[2] * cb[0] - V[0] * cb[2], V[0] * cb[1] - V[1] * cb[0]])
    lhs2 = vx - c * gb * fields.div(V, g)
    crho = _scale(c, rho)
    Wc = np.stack([inner_re(crho, 1j * w[a]) for a in range(3)])
    rhs2 = hbar * inner_re(rho, 1j * br_rH) * gc - hbar * fields.div(Wc, g) * gb

    # (ii-b) <2 i hbar c {rho,H} - (i hbar/2)[{c,H}, rho], grad rho> = hbar <grad rho, i c {rho,H} + i {c rho, H}>
    left = (2j * hbar) * _scale(c, br_rH) - (0.5j * hbar) * commutator(br_cH, rho)
    lhs3 = np.stack([inner_re(left, gr[a]) for a in range(3)])
    right = 1j * _scale(c, br_rH) + 1j * br_crH
    rhs3 = np.stack([hbar * inner_re(gr[a], right) for a in range(3)])
    return {"div_lhs": lhs1, "div_rhs": rhs1, "eq1_lhs": lhs2, "eq1_rhs": rhs2, "eq2_lhs": lhs3, "eq2_rhs": rhs3}


DIVERGENCE_IDENTITIES = {
    "divergence_identity": ("div_lhs", "div_rhs"),
    "closing_equality_1": ("eq1_lhs", "eq1_rhs"),
    "closing_equality_2": ("eq2_lhs", "eq2_rhs"),
}


def divergence_identity_residuals(state, ham):
    res = _evaluate(_identity_fields, state, ham)
    return {k: float(np.max(np.abs(res[a] - res[b]))) for k, (a, b) in DIVERGENCE_IDENTITIES.items()}


def check_divergence_identities(preset=presets.smooth_3d, grids=DEFAULT_LADDER):
    """Convergence of the divergence identity and the two closing equalities."""
    t0 = time.perf_counter()
    table = {k: [] for k in DIVERGENCE_IDENTITIES}
    for N in grids:
        state, ham = preset(N)
        for k, v in divergence_identity_residuals(state, ham).items():
            table[k].append(v)
    secs = time.perf_counter() - t0
    return {k: convergence_report(f"identity_{k}", grids, r, seconds=secs) for k, r in table.items()}


# -- pointwise algebra ----------------------------------------------------------------


def _rand_herm(rng, shape, n=2):
    a = rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))
    return 0.5 * (a + dagger(a))


def _rand_complex(rng, shape, n=2):
    return rng.standard_normal(shape + (n, n)) + 1j * rng.standard_normal(shape + (n, n))


def _density(rng, shape, n=2):
    a = _rand_complex(rng, shape, n)
    rho = mm(a, dagger(a))
    tr = np.trace(rho, axis1=-2, axis2=-1).real
    return rho / tr[..., None, None]


def _levi_civita():
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1
    return eps


def check_pointwise_algebra(samples=1000, seed=0, tol=1e-12, hbar=1.0):
    """Pointwise identities on random data with injected analytic gradients.

    No stencils are involved: gradients are independent random arrays, so each
    identity is tested as pure algebra.
    """
    rng = np.random.default_rng(seed)
    S = (samples,)
    rho = _density(rng, S)
    gr = np.stack([_rand_herm(rng, S) for _ in range(3)])
    gH = np.stack([_rand_herm(rng, S) for _ in range(3)])
    gb = rng.standard_normal((3,) + S)
    c = rng.uniform(0.5, 1.5, S)
    p = rng.uniform(0.1, 1.0, S)
    reports = {}

    gamma = mead_connection(rho, None, hbar, grad_rho=gr)
    T = stress_tensor(p, c, gb, gamma, gH)
    reports["stress_symmetry"] = residual_report("stress_symmetry", T, np.swapaxes(T, 0, 1), tol)

    # scalar Nambu bracket: antisymmetric, {f, f} = 0
    gf = rng.standard_normal((3,) + S)
    gg = rng.standard_normal((3,) + S)
    reports["nambu_antisymmetry"] = residual_report(
        "nambu_antisymmetry", nambu_scalar(gb, gf, gg), -nambu_scalar(gb, gg, gf), tol
    )
    # matrix {F, F}_b vanishes when the gradient components commute (F = f A + g 1) ...
    A = _rand_herm(rng, ())
    gFc = gf[..., None, None] * A + gg[..., None, None] * np.eye(2)
    self_br = nambu_matrix(gb, gFc, gFc)
    reports["nambu_self_bracket"] = residual_report(
        "nambu_self_bracket", self_br, np.zeros_like(self_br), tol, relative=False
    )
    # ... and in general equals sum_i d_i b [d_j F, d_k F]
    gF = np.stack([_rand_herm(rng, S) for _ in range(3)])
    full = sum(_scale(gb[i], commutator(gF[j], gF[k])) for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))))
    reports["nambu_self_bracket_general"] = residual_report(
        "nambu_self_bracket_general", nambu_matrix(gb, gF, gF), full, tol
    )

    # dagger identity {A, B}_b^dagger = -{B^dagger, A^dagger}_b for non-Hermitian matrices
    gA = np.stack([_rand_complex(rng, S) for _ in range(3)])
    gB = np.stack([_rand_complex(rng, S) for _ in range(3)])
    reports["bracket_dagger"] = residual_report(
        "bracket_dagger", dagger(nambu_matrix(gb, gA, gB)), -nambu_matrix(gb, dagger(gB), dagger(gA)), tol
    )

    # <rho, i hbar {rho, H}_b> = <rho, i hbar eps_ijk d_i b [d_j rho, d_k H]> / 2, summed over all j, k
    lhs = inner_re(rho, (1j * hbar) * nambu_matrix(gb, gr, gH))
    trip = sum(
        _scale(gb[i], commutator(gr[j], gH[k]) - commutator(gr[k], gH[j]))
        for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1)))
    )
    rhs = 0.5 * inner_re(rho, (1j * hbar) * trip)
    reports["bracket_commutator"] = residual_report("bracket_commutator", lhs, rhs, tol)

    # Pauli algebra: (a.sigma)(b.sigma) = a.b 1 + i (a x b).sigma, and the product table
    a = rng.standard_normal((3,) + S)
    b = rng.standard_normal((3,) + S)
    sa = sum(a[k][..., None, None] * PAULI[k + 1] for k in range(3))
    sb = sum(b[k][..., None, None] * PAULI[k + 1] for k in range(3))
    axb = np.stack([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])
    expect = np.sum(a * b, axis=0)[..., None, None] * PAULI[0] + 1j * sum(
        axb[k][..., None, None] * PAULI[k + 1] for k in range(3)
    )
    table = []
    ref = []
    eps = _levi_civita()
    for j in range(3):
        for k in range(3):
            table.append(PAULI[j + 1] @ PAULI[k + 1])
            ref.append((j == k) * PAULI[0] + 1j * sum(eps[j, k, m] * PAULI[m + 1] for m in range(3)))
    reports["pauli_algebra"] = residual_report("pauli_algebra", [mm(sa, sb)] + table, [expect] + ref, tol)

    # the fused n = 2 kernel against the plain matrix algebra
    H = _rand_herm(rng, S)
    gc = rng.standard_normal((3,) + S)
    gcr = np.stack([_rand_herm(rng, S) for _ in range(3)])
    D = rng.uniform(0.5, 2.0, S)
    u = rng.standard_normal((3,) + S)
    args = (rho, H, gr, gH, gc, gcr, gb, c, 1.0 / D, D, hbar, u)
    fused = kernels.qc_pointwise(*args)
    plain = qc_pointwise_matrix(*args)
    reports["fused_kernel"] = residual_report("fused_kernel", list(fused), list(plain), tol)
    return reports


# -- dephasing -------------------------------------------------------------------------


def _sigma_max(state, k):
    rho = state.density_matrix()
    s = inner_re(rho, np.broadcast_to(PAULI[k], rho.shape))
    return float(np.max(np.abs(s)))


def _classical_copy(state):
    return HybridState(state.grid, state.D.copy(), state.u.copy(), t=state.t)


def _without_coupling(ham):
    return HybridHamiltonian(ham.V0, [], M=ham.M, hbar=ham.hbar, eos=ham.eos, n=ham.n)


def run_steps(state, ham, model, dt, steps, observe=None, every=1):
    """Plain RK4 loop; ``observe(state, step)`` is called at step 0 and every ``every`` steps."""
    cfg = IntegratorConfig(dt=dt)
    if observe:
        observe(state, 0)
    for i in range(1, steps + 1):
        state, _ = rk4_step(state, ham, model, dt, cfg)
        if observe and i % every == 0:
            observe(state, i)
    return state


def dephasing_law_study(setup_fn=None, grids=(32, 64, 128), model="qc_planar"):
    """Residual of the local transport law at ``t = 0`` on a pure-state dephasing preset."""
    setup_fn = setup_fn or (lambda: presets.dephasing_reference("pure-state"))
    res = []
    for N in grids:
        state, ham = presets.build(setup_fn(), fields.Grid.cube(N, dim=2))
        r = dephasing_local_law_residual(state, ham, model=MODELS[model])
        res.append(float(np.max(np.abs(r))))
    return convergence_report("dephasing_local_law", grids, res)


def check_dephasing(N=128, steps=2000, dt=0.002, coupling_amp=0.5, backreaction=0.4, law_grids=(32, 64, 128),
                    ratio=1e3, tol=1e-10, qc_model="qc_planar", mode="density-matrix"):
    """Pure-dephasing suite on the planar reference preset.

    (a) Ehrenfest keeps ``max |<sigma_k>|`` at roundoff; (b) its ``(D, u)`` track a
    classical run without the coupling; (c) the QC run develops ``<sigma_k>``
    at least ``ratio`` times larger; (d) the local transport law converges.
    """
    t0 = time.perf_counter()
    grid = fields.Grid.cube(N, dim=2)
    setup = presets.dephasing_reference(mode, coupling_amp, backreaction)
    state0, ham = presets.build(setup, grid)
    k = ham.dephasing_axis()

    ehr_max = [0.0]
    ehr = run_steps(state0, ham, "ehrenfest", dt, steps,
                    lambda s, i: ehr_max.__setitem__(0, max(ehr_max[0], _sigma_max(s, k))))
    cls = run_steps(_classical_copy(state0), _without_coupling(ham), "classical", dt, steps)
    qc_max = [0.0]
    run_steps(state0, ham, qc_model, dt, steps,
              lambda s, i: qc_max.__setitem__(0, max(qc_max[0], _sigma_max(s, k))), every=10)

    reports = {}
    reports["ehrenfest_sigma"] = ResidualReport("ehrenfest_sigma", ehr_max[0], ehr_max[0], tol,
                                                ehr_max[0] <= tol, relative=False)
    reports["ehrenfest_vs_classical"] = residual_report("ehrenfest_vs_classical", [ehr.D, ehr.u], [cls.D, cls.u],
                                                        tol, relative=False)
    amp = qc_max[0] / ehr_max[0] if ehr_max[0] > 0 else math.inf
    reports["qc_sigma_ratio"] = ResidualReport(
        "qc_sigma_ratio", qc_max[0], qc_max[0], ratio, bool(amp >= ratio), relative=False,
        details={"qc_max": qc_max[0], "ehrenfest_max": ehr_max[0], "ratio": amp},
    )
    reports["local_law"] = dephasing_law_study(grids=law_grids, model=qc_model)
    reports["seconds"] = time.perf_counter() - t0
    return reports


# -- reductions and equivariance ------------------------------------------------------


def _rhs_fields(rhs):
    return [v for v in rhs.arrays().values()]


def _unitary(theta=np.pi / 4, k=2):
    """``exp(i theta sigma_k)``."""
    return np.cos(theta) * PAULI[0] + 1j * np.sin(theta) * PAULI[k]


def _conjugate_state(state, U):
    Ud = U.conj().T
    if state.psi is not None:
        return state.replace(psi=np.einsum("ab,...b->...a", U, state.psi))
    return state.replace(rho=U @ state.rho @ Ud)


def check_reductions_and_equivariance(N3=16, N2=32, embed_N=64, embed_steps=100, embed_dt=0.01, tol=1e-12,
                                      embed_tol=1e-10):
    """Ehrenfest reduction, decoupling, unitary covariance, translation covariance, planar embedding."""
    t0 = time.perf_counter()
    reports = {}

    # constant b, no pressure: the QC right-hand side is the Ehrenfest one
    st, ham = presets.smooth_3d(N3, const_b=True, eos=False)
    a, b = MODELS["qc3d"](st, ham), MODELS["ehrenfest"](st, ham)
    reports["ehrenfest_reduction"] = residual_report("ehrenfest_reduction", _rhs_fields(a), _rhs_fields(b), tol)

    # spatially constant couplings: (D, u) follow the uncoupled fluid, rho the plain commutator
    for name, (st, ham), model in (
        ("decoupling_3d", presets.smooth_3d(N3), "qc3d"),
        ("decoupling_planar", presets.smooth_2d(N2, pure=False), "qc_planar"),
    ):
        ham_c = ham.map_fields(lambda v: np.full_like(v, float(np.mean(v))))
        ham_c = HybridHamiltonian(ham.V0, ham_c.couplings, M=ham.M, hbar=ham.hbar, eos=ham.eos, n=ham.n)
        q = MODELS[model](st, ham_c)
        cl = MODELS["classical"](st, ham_c)
        H = ham_c.assemble()
        drho = (-1j / ham.hbar) * commutator(H, st.rho) - fields.advect(st.u, fields.grad_h(st.rho, st.grid))
        reports[name] = residual_report(name, [q.dD, q.du, q.drho], [cl.dD, cl.du, drho], tol)

    # constant unitary conjugation
    U = _unitary()
    for name, (st, ham), model in (
        ("unitary_covariance_3d", presets.smooth_3d(N3), "qc3d"),
        ("unitary_covariance_planar", presets.smooth_2d(N2, pure=False), "qc_planar"),
        ("unitary_covariance_stress", presets.smooth_3d(N3), "qc3d_stress"),
        ("unitary_covariance_pure_planar", presets.smooth_2d(N2, pure=True), "pure_state_planar"),
    ):
        a = MODELS[model](st, ham)
        b = MODELS[model](_conjugate_state(st, U), ham.conjugated(U))
        if a.drho is not None:
            qa, qb = U @ a.drho @ U.conj().T, b.drho
        else:
            qa, qb = np.einsum("ab,...b->...a", U, a.dpsi), b.dpsi
        reports[name] = residual_report(name, [a.dD, a.du, qa], [b.dD, b.du, qb], tol)

    # one-cell translation: outputs shift bitwise
    cases = (
        ("qc3d", presets.smooth_3d(N3)),
        ("qc3d_stress", presets.smooth_3d(N3)),
        ("ehrenfest", presets.smooth_3d(N3)),
        ("qc_planar", presets.smooth_2d(N2, pure=False)),
        ("pure_state_planar", presets.smooth_2d(N2, pure=True)),
        ("classical", presets.smooth_2d(N2, pure=False)),
    )
    for model, (st, ham) in cases:
        worst = None
        for axis in range(st.grid.dim):
            a = MODELS[model](st, ham)
            b = MODELS[model](st.shifted(1, axis), ham.shifted(1, axis))
            sa = [np.roll(v, 1, axis + (1 if k == "u" else 0)) for k, v in a.arrays().items()]
            rep = residual_report(f"translation_{model}", sa, _rhs_fields(b), 0.0, bitwise=True)
            if worst is None or not rep.passed:
                worst = rep
        reports[f"translation_{model}"] = worst

    # planar embedding: z-uniform 3D run with b = beta z against the 2D run
    st2, ham2 = presets.smooth_2d(embed_N, pure=False)
    st3, ham3 = presets.embed_planar(st2, ham2)
    s2 = run_steps(st2, ham2, "qc_planar", embed_dt, embed_steps)
    s3 = run_steps(st3, ham3, "qc3d", embed_dt, embed_steps)
    zmid = st3.grid.shape[2] // 2
    reports["planar_embedding"] = residual_report(
        "planar_embedding",
        [s2.D, s2.u, s2.rho, s2.c],
        [s3.D[:, :, zmid], s3.u[:2, :, :, zmid], s3.rho[:, :, zmid], s3.c[:, :, zmid] * st2.beta],
        embed_tol,
        relative=False,
        details={"max_uz": float(np.max(np.abs(s3.u[2])))},
    )
    reports["seconds"] = time.perf_counter() - t0
    return reports


# -- conservation studies ------------------------------------------------------------


def drift_study(setup, N, model, dts, T, quantities, record_fn):
    """Invariant drifts ``|q(T) - q(0)|`` for each ``dt``; returns ``{quantity: [drift per dt]}``.

    ``record_fn(state, ham, model) -> dict`` supplies the quantities.
    """
    out = {q: [] for q in quantities}
    for dt in dts:
        state, ham = presets.build(setup, fields.Grid.cube(N, dim=2))
        v0 = record_fn(state, ham, model)
        steps = int(round(T / dt))
        state = run_steps(state, ham, model, dt, steps)
        v1 = record_fn(state, ham, model)
        for q in quantities:
            out[q].append(abs(v1[q] - v0[q]))
    return out


# -- conservation ---------------------------------------------------------------------

RATIO_BAND = (12.0, 20.0)
CONSERVED_2D = ("h", "C1_purity", "C2_c2", "C2_cLam1", "Cp_Omega", "Cp_Omega_c")
DRIFT_DTS = (0.04, 0.02, 0.01)
DRIFT_T = 0.8
MASS_TOL = 1e-12
TRACE_TOL = 1e-10
MIN_EIG_TOL = -1e-8


def reference_setup(mode="pure-state", uniform_phase=False):
    """The 2D pure-dephasing reference setup; ``uniform_phase`` starts from one equator state."""
    setup = presets.dephasing_reference(mode)
    if uniform_phase:
        setup["state"]["phi"] = 0.0
    return setup


def reference_run(N=128, steps=2000, dt=0.002, diag_every=10, model="qc_planar", setup=None):
    """Run the reference problem and return the :class:`~qchydro.integrator.RunResult`."""
    from .integrator import run

    setup = setup or reference_setup()
    state, ham = presets.build(setup, fields.Grid.cube(N, dim=2))
    return run(IntegratorConfig(dt=dt, t_end=steps * dt), state, ham, model, diag_every=diag_every)


def ratio_report(name, dts, drifts, scale=1.0, band=RATIO_BAND, details=None):
    """dt-halving drift ratios; all must lie in ``band``. Drifts at roundoff pass as exact."""
    drifts = [float(d) for d in drifts]
    ratios = [a / b if b > 0 else math.inf for a, b in zip(drifts, drifts[1:])]
    exact = all(d <= EXACT_TOL * max(abs(scale), 1.0) for d in drifts)
    ok = exact or all(band[0] <= r <= band[1] for r in ratios)
    det = {"dts": list(dts), "drifts": drifts, "ratios": ratios, "exact": exact}
    det.update(details or {})
    worst = max((abs(math.log(r / 16.0)) if 0 < r < math.inf else math.inf for r in ratios), default=0.0)
    return ResidualReport(name, worst, worst, math.log(band[1] / 16.0), bool(ok), relative=False, details=det)


def _values(state, ham, model, keys):
    from .diagnostics import record

    v = record(state, ham, model).values
    return {k: v.get(k, math.nan) for k in keys}


def dt_halving(setup_state, model, dts, T, keys, value_fn=None):
    """Invariant values at ``t = 0`` and ``t = T`` for each ``dt``.

    Returns ``(q0, [qT per dt])`` as dicts keyed by quantity.
    """
    state0, ham = setup_state()
    value_fn = value_fn or (lambda s, h: _values(s, h, model, keys))
    q0 = value_fn(state0, ham)
    finals = []
    for dt in dts:
        s = run_steps(state0, ham, model, dt, int(round(T / dt)))
        finals.append(value_fn(s, ham))
    return q0, finals


def _drift_reports(prefix, q0, finals, dts, keys):
    out = {}
    for k in keys:
        vals = [f[k] for f in finals]
        if not math.isfinite(q0[k]) or not all(math.isfinite(v) for v in vals):
            continue
        drifts = [abs(v - q0[k]) for v in vals]
        # the part of the drift that depends on dt: differences between successive dt
        temporal = [abs(a - b) for a, b in zip(vals, vals[1:])]
        tr = [a / b if b > 0 else math.inf for a, b in zip(temporal, temporal[1:])]
        out[k] = ratio_report(f"{prefix}{k}", dts, drifts, scale=q0[k],
                              details={"temporal_differences": temporal, "temporal_ratios": tr})
    return out


def check_conservation(records=None, N=128, dts=DRIFT_DTS, T=DRIFT_T, N3=24, T3=0.4):
    """Mass, positivity and trace monitors over the reference run plus dt-halving drift ratios.

    ``records`` may hold the diagnostics of an existing reference run.
    """
    t0 = time.perf_counter()
    reports = {}
    if records is None:
        records = reference_run(N=N).records
    rows = [r if isinstance(r, dict) else r.values for r in records]
    m0 = rows[0]["mass"]
    steps = max(1, round((rows[-1]["t"] - rows[0]["t"]) / rows[0]["dt"]))
    mass_drift = max(abs(r["mass"] - m0) for r in rows) / abs(m0) * 1000.0 / steps
    reports["mass"] = ResidualReport("mass_drift_per_1000_steps", mass_drift, mass_drift, MASS_TOL,
                                     mass_drift <= MASS_TOL, relative=True)
    tr = max(r["tr_rho_err"] for r in rows)
    reports["trace"] = ResidualReport("trace_rho_pointwise", tr, tr, TRACE_TOL, tr <= TRACE_TOL, relative=False)
    me = min(r["min_eig_rho"] for r in rows)
    reports["min_eig"] = ResidualReport("min_eig_rho", me, me, MIN_EIG_TOL, me >= MIN_EIG_TOL, relative=False)

    grid = fields.Grid.cube(N, dim=2)
    q0, finals = dt_halving(lambda: presets.build(reference_setup(), grid), "qc_planar", dts, T, CONSERVED_2D)
    reports.update(_drift_reports("drift_ratio_", q0, finals, dts, CONSERVED_2D))

    from .diagnostics import cross_helicity

    q0, finals = dt_halving(lambda: presets.smooth_3d(N3, pure=True), "qc3d", dts, T3, ("C3",),
                            value_fn=lambda s, h: {"C3": cross_helicity(s, h)})
    reports.update(_drift_reports("drift_ratio_", q0, finals, dts, ("C3",)))
    reports["seconds"] = time.perf_counter() - t0
    return reports


# -- incompressible planar ---------------------------------------------------------------


def check_incompressible(N=64, steps=200, dt=0.01, dts=DRIFT_DTS, T=DRIFT_T, div_tol=1e-10, tol=1e-12):
    """Stage-wise ``div u``, the uniform-``D`` reduction and the Casimir drift ratios."""
    from .diagnostics import incompressible_casimir
    from .models import rhs_qc_planar_incompressible, rhs_ehrenfest_planar_incompressible

    t0 = time.perf_counter()
    reports = {}
    st, ham = presets.smooth_incompressible_2d(N, pure=True)
    cfg = IntegratorConfig(dt=dt)
    worst = 0.0
    for _ in range(steps):
        st, rep = rk4_step(st, ham, "qc_planar_incompressible", dt, cfg)
        worst = max(worst, rep.max_div_u)
    reports["div_u"] = ResidualReport("incompressible_div_u", worst, worst, div_tol, worst <= div_tol, relative=False)

    # uniform D: the backreaction force built on grad ln D is identically zero
    st, ham = presets.smooth_incompressible_2d(N, pure=True, uniform_D=True)
    a = rhs_qc_planar_incompressible(st, ham)
    b = rhs_ehrenfest_planar_incompressible(st, ham)
    lnD = fields.grad(np.log(st.D), st.grid)
    st0 = st.replace(beta=0.0)
    a0 = rhs_qc_planar_incompressible(st0, ham)
    b0 = rhs_ehrenfest_planar_incompressible(st0, ham)
    beta0 = residual_report("beta_zero", _rhs_fields(a0), _rhs_fields(b0), tol)
    reports["uniform_D_reduction"] = residual_report(
        "incompressible_uniform_D_reduction", _rhs_fields(a), _rhs_fields(b), tol,
        details={"max_grad_lnD": float(np.max(np.abs(lnD))), "beta_zero_residual": beta0.max_abs,
                 "du_residual": float(np.max(np.abs(a.du - b.du))),
                 "dpsi_residual": float(np.max(np.abs(a.dpsi - b.dpsi)))},
    )

    q0, finals = dt_halving(lambda: presets.smooth_incompressible_2d(N, pure=True), "qc_planar_incompressible",
                            dts, T, ("C_incomp",), value_fn=lambda s, h: {"C_incomp": incompressible_casimir(s, h)})
    reports.update(_drift_reports("drift_ratio_", q0, finals, dts, ("C_incomp",)))
    reports["seconds"] = time.perf_counter() - t0
    return reports


# -- momentum balance -----------------------------------------------------------------


def momentum_source(state, ham):
    """``-int <D_hat, grad H>`` with the hybrid von Neumann operator."""
    from .brackets import von_neumann

    g = state.grid
    rho = state.density_matrix()
    vn = von_neumann(state.D, rho, state.grad_b(), state.c, g, ham.hbar)
    gH = ham.grad(g)
    return np.array([-fields.integrate(inner_re(vn, gH[a]), g) for a in range(g.dim)])


def momentum_balance_residual(state, ham, model, dt):
    """Five-point centered difference of ``int M D u`` over four steps against the source at the midpoint."""
    from .diagnostics import totals

    dim = state.grid.dim
    p = []
    mid = []
    run_steps(state, ham, model, dt, 4,
              lambda s, i: (p.append(totals(s, ham).momentum[:dim]), mid.append(s) if i == 2 else None))
    dpdt = (p[0] - 8.0 * p[1] + 8.0 * p[3] - p[4]) / (12.0 * dt)
    return float(np.max(np.abs(dpdt - momentum_source(mid[0], ham))))


def check_momentum_balance(grids=(16, 24, 32), dt_scale=0.5, threshold=2.0):
    """Total momentum rate against ``-int <D_hat, grad H>``, refining ``h`` and ``dt = dt_scale h`` together."""
    t0 = time.perf_counter()
    res = []
    for N in grids:
        st, ham = presets.smooth_3d(N)
        res.append(momentum_balance_residual(st, ham, "qc3d", dt_scale * 2 * np.pi / N))
    return convergence_report("momentum_balance", grids, res, threshold, seconds=time.perf_counter() - t0)


# -- decoherence ---------------------------------------------------------------------


def check_decoherence(N=128, steps=100, dt=0.002, tol=1e-10):
    """Purity of ``rho_tot`` in the reference QC run against an Ehrenfest control.

    The QC run starts from one uniform equator state (purity 1); the control
    starts from the uniform coupling eigenstate.
    """
    from .diagnostics import totals

    t0 = time.perf_counter()
    grid = fields.Grid.cube(N, dim=2)
    setup = reference_setup(uniform_phase=True)
    state, ham = presets.build(setup, grid)
    pur = []
    run_steps(state, ham, "qc_planar", dt, steps, lambda s, i: pur.append(totals(s, ham).purity))
    diffs = np.diff(pur)
    monotone = bool(np.all(diffs < 0))
    reports = {
        "qc_purity": ResidualReport(
            "qc_purity_decreasing", abs(pur[-1] - pur[0]), abs(pur[-1] - pur[0]), 0.0, monotone and pur[-1] < pur[0],
            relative=False, details={"purity": pur, "max_increment": float(np.max(diffs))},
        )
    }
    ctrl = reference_setup(uniform_phase=True)
    ctrl["state"]["theta"] = 0.0
    state, ham = presets.build(ctrl, grid)
    worst = [0.0]
    run_steps(state, ham, "ehrenfest", dt, steps,
              lambda s, i: worst.__setitem__(0, max(worst[0], abs(totals(s, ham).purity - 1.0))))
    # context: Ehrenfest from the equator state dephases too, through phase dispersion
    state, ham = presets.build(setup, grid)
    ehr_eq = []
    run_steps(state, ham, "ehrenfest", dt, steps, lambda s, i: ehr_eq.append(totals(s, ham).purity))
    reports["ehrenfest_control"] = ResidualReport(
        "ehrenfest_control_purity", worst[0], worst[0], tol, worst[0] <= tol, relative=False,
        details={"ehrenfest_equator_purity_final": ehr_eq[-1], "qc_purity_final": pur[-1]},
    )
    reports["seconds"] = time.perf_counter() - t0
    return reports


# -- suites for the command line -------------------------------------------------------


SUITES = ("algebra", "convergence", "dephasing", "reductions")


def run_suite(name, seed=0, quick=False):
    """Run a named suite; ``quick`` shrinks grids and run lengths for smoke testing."""
    if name == "algebra":
        return check_pointwise_algebra(samples=100 if quick else 1000, seed=seed)
    if name == "convergence":
        grids = (16, 24, 32) if quick else DEFAULT_LADDER
        reps = check_form_equivalence(grids=grids, with_mutation=True)
        return {
            "form_equivalence": reps[0],
            "form_equivalence_mutation": reps[1],
            "divergence_identities": check_divergence_identities(grids=grids),
        }
    if name == "dephasing":
        if quick:
            return check_dephasing(N=32, steps=50, dt=0.01, law_grids=(16, 24, 32))
        return check_dephasing()
    if name == "reductions":
        if quick:
            return check_reductions_and_equivariance(N3=12, N2=16, embed_N=16, embed_steps=5)
        return check_reductions_and_equivariance()
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES + ('all',)}")
