"""Explicit RK4 time stepping with stage-wise Hermitization, and the run loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics, fields, kernels
from .errors import BlowUp, VacuumError
from .hermitian import hermitize, min_eigenvalue
from .models import DEFAULT_VACUUM, INCOMPRESSIBLE, MODELS

RK4_A = (0.0, 0.5, 0.5, 1.0)


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float = 0.0
    cfl_cap: float | None = None
    hermitize_each_stage: bool = True
    renormalize_psi: bool = True
    deterministic: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.cfl_cap is not None and not 0 < self.cfl_cap <= 1:
            raise ValueError("cfl_cap must lie in (0, 1]")


@dataclass
class StepReport:
    t: float
    dt_used: float
    hermiticity_drift: float = 0.0
    norm_drift: float = 0.0
    vacuum_floor_activations: int = 0
    min_D: float = math.nan
    min_eig_rho: float = math.nan
    max_div_u: float = math.nan
    loops: list = field(default_factory=list)


def _resolve(model):
    if callable(model):
        return model, getattr(model, "__name__", "custom")
    return MODELS[model], model


def _model_name(model):
    return model if isinstance(model, str) else _resolve(model)[1]


def _check_finite(arrays, t):
    for k, v in arrays.items():
        # a single reduction propagates any nan/inf; locate only on failure
        if np.isfinite(np.sum(v)):
            continue
        ok = np.isfinite(v)
        if not np.all(ok):
            loc = tuple(int(i) for i in np.argwhere(~ok)[0])
            raise BlowUp(f"non-finite {k} at t={t:.6g}, index {loc}", t=t, location=loc, field=k)


def _renormalize(psi):
    """Rescale to unit norm pointwise; a spinor already normalized to rounding is left untouched."""
    tol = 4 * np.finfo(float).eps
    if psi.shape[-1] == 2:
        return kernels.renormalize2(psi, tol)
    norm = np.sqrt(np.sum(psi.real**2 + psi.imag**2, axis=-1))
    drift = float(np.max(np.abs(norm - 1.0)))
    if drift <= tol:
        return psi, drift
    return psi / norm[..., None], drift


def _stage_state(state, base, k, scale, config, report):
    """``base + scale * k`` with the stage-wise projections applied."""
    kw = {"t": state.t + scale}
    for name, v in base.items():
        kw[name] = v + scale * k[name] if scale != 0.0 else v
    if "rho" in kw and config.hermitize_each_stage and scale != 0.0:
        kw["rho"], drift = hermitize(kw["rho"])
        report.hermiticity_drift = max(report.hermiticity_drift, drift)
    if "psi" in kw and config.renormalize_psi and scale != 0.0:
        kw["psi"], drift = _renormalize(kw["psi"])
        report.norm_drift = max(report.norm_drift, drift)
    return state.replace(**kw)


def rk4_step(state, ham, model, dt, config=None, vacuum=DEFAULT_VACUUM, loops=()):
    """One classical RK4 step of the full field bundle.

    Tracer ``loops`` (arrays of positions) are advanced with the stage
    velocities so that they follow the same time discretization as the fields;
    the advanced loops are returned in ``report.loops``.
    """
    config = config or IntegratorConfig(dt=dt)
    fn, name = _resolve(model)
    report = StepReport(t=state.t + dt, dt_used=dt)
    base = state.arrays()
    g = state.grid
    incompressible = name in INCOMPRESSIBLE
    ks = []
    stage = state
    xs = [np.asarray(x, dtype=np.float64) for x in loops]
    loop_k = [[] for _ in xs]
    max_div = 0.0
    for s in range(4):
        if s > 0:
            prev = ks[-1]
            stage = _stage_state(state, base, prev, RK4_A[s] * dt, config, report)
        if incompressible:
            max_div = max(max_div, float(np.max(np.abs(fields.div(stage.u, g)))))
        r = fn(stage, ham, vacuum)
        report.vacuum_floor_activations += r.floor_activations
        k = r.arrays()
        _check_finite(k, stage.t)
        ks.append(k)
        for i, x in enumerate(xs):
            pos = x if s == 0 else x + RK4_A[s] * dt * loop_k[i][-1]
            loop_k[i].append(fields.interpolate(stage.u, g, pos))
    out = {}
    for name_, v in base.items():
        acc = ks[1][name_] + ks[2][name_]
        acc *= 2.0
        acc += ks[0][name_]
        acc += ks[3][name_]
        acc *= dt / 6.0
        out[name_] = v + acc
    _check_finite(out, report.t)
    if "rho" in out and config.hermitize_each_stage:
        out["rho"], drift = hermitize(out["rho"])
        report.hermiticity_drift = max(report.hermiticity_drift, drift)
    if "psi" in out and config.renormalize_psi:
        out["psi"], drift = _renormalize(out["psi"])
        report.norm_drift = max(report.norm_drift, drift)
    new = state.replace(t=report.t, **out)
    report.min_D = float(np.min(new.D))
    if incompressible:
        max_div = max(max_div, float(np.max(np.abs(fields.div(new.u, g)))))
        report.max_div_u = max_div
    for i, x in enumerate(xs):
        kk = loop_k[i]
        moved = x + (dt / 6.0) * (kk[0] + 2.0 * kk[1] + 2.0 * kk[2] + kk[3])
        report.loops.append(fields.wrap(moved, g))
    return new, report


def cfl_dt(state, ham, config):
    """Configured ``dt`` limited by ``cfl_cap * dx_min / max(|u| + c_s)`` when a cap is set."""
    if config.cfl_cap is None:
        return config.dt
    speed = np.sqrt(np.sum(state.u**2, axis=0)) + np.sqrt(ham.eos.sound_speed_squared(state.D))
    vmax = float(np.max(speed))
    if vmax == 0.0:
        return config.dt
    return min(config.dt, config.cfl_cap * min(state.grid.spacing) / vmax)


@dataclass
class RunResult:
    state: object
    records: list
    loops: list
    steps: int
    status: str = "completed"
    error: Exception | None = None
    max_hermiticity_drift: float = 0.0
    max_norm_drift: float = 0.0
    vacuum_floor_activations: int = 0
    max_div_u: float = 0.0
    min_eig_rho: float = math.inf


def run(config, state0, ham, model, loops=(), diag_every=1, on_record=None, on_snapshot=None, snap_every=0,
        vacuum=DEFAULT_VACUUM, record_fn=None):
    """Advance to ``config.t_end``, recording diagnostics every ``diag_every`` steps.

    ``on_record(record)`` and ``on_snapshot(state, index)`` are called in step
    order. A blow-up (non-finite fields or a nonpositive density) ends the loop
    with ``status="blow-up"``; everything recorded so far is kept.
    """
    name = _model_name(model)
    record_fn = record_fn or (lambda s, lp, dt: diagnostics.record(s, ham, name, lp, dt, vacuum))
    loops = [diagnostics.TracerLoop(lp.points, lp.name) if isinstance(lp, diagnostics.TracerLoop) else
             diagnostics.TracerLoop(lp) for lp in loops]
    state = state0
    t0 = state0.t
    records = []
    result = RunResult(state=state, records=records, loops=loops, steps=0)

    def emit(st, dt, lps):
        rec = record_fn(st, lps, dt)
        records.append(rec)
        if on_record:
            on_record(rec)

    emit(state, config.dt, loops)
    snap_index = 0
    if on_snapshot and snap_every:
        on_snapshot(state, snap_index)
        snap_index += 1
    result.min_eig_rho = float(np.min(min_eigenvalue(state.density_matrix())))
    step = 0
    eps = 1e-12 * max(1.0, abs(config.t_end))
    # Fixed steps are counted so that times are t0 + k dt exactly; a final short
    # step lands on t_end when it is not a multiple of dt.
    n_fixed = math.ceil(config.t_end / config.dt - 1e-9) if config.cfl_cap is None else None
    while (step < n_fixed) if n_fixed is not None else (state.t - t0 < config.t_end - eps):
        if n_fixed is not None:
            dt = config.dt if step < n_fixed - 1 else config.t_end - step * config.dt
        else:
            dt = min(cfl_dt(state, ham, config), config.t_end - (state.t - t0))
        try:
            new, rep = rk4_step(state, ham, model, dt, config, vacuum, [lp.points for lp in loops])
        except (BlowUp, VacuumError) as exc:
            # a collapsed density is a blow-up of the run as well
            result.status = "blow-up"
            result.error = exc
            break
        if n_fixed is not None:
            new.t = t0 + step * config.dt + dt
        step += 1
        loops = [diagnostics.TracerLoop(p, lp.name) for p, lp in zip(rep.loops, loops)]
        state = new
        result.max_hermiticity_drift = max(result.max_hermiticity_drift, rep.hermiticity_drift)
        result.max_norm_drift = max(result.max_norm_drift, rep.norm_drift)
        result.vacuum_floor_activations += rep.vacuum_floor_activations
        if not math.isnan(rep.max_div_u):
            result.max_div_u = max(result.max_div_u, rep.max_div_u)
        if diag_every and step % diag_every == 0:
            emit(state, dt, loops)
            result.min_eig_rho = min(result.min_eig_rho, records[-1]["min_eig_rho"])
        if on_snapshot and snap_every and step % snap_every == 0:
            on_snapshot(state, snap_index)
            snap_index += 1
    result.state = state
    result.loops = loops
    result.steps = step
    return result
