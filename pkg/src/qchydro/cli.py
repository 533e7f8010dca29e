"""Command line: ``run``, ``verify`` and ``plot``.

Exit codes: 0 success, 1 verification failure, 2 config or usage error,
3 runtime blow-up.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, diagnostics, integrator, kernels, presets, verification
from .config import ConfigError, make_grid, parse_config
from .models import VacuumPolicy

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
CSV_NAME = "invariants.csv"
MANIFEST_NAME = "manifest.json"


def _fmt(x):
    """Shortest round-tripping float text; not-applicable entries become ``nan``."""
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """``manifest.json``: written with status ``running`` before the first step, finalized after the last."""

    def __init__(self, out, config_echo):
        self.path = out / MANIFEST_NAME
        self.out = out
        self.data = {
            "code_version": __version__,
            "backend": kernels.BACKEND,
            "config": config_echo,
            "start_time": _now(),
            "end_time": None,
            "status": "running",
            "steps": 0,
            "files": [],
        }
        self.write()

    def write(self):
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, self.path)

    def finalize(self, status, steps, files, error=None):
        self.data.update(status=status, steps=steps, end_time=_now())
        if error is not None:
            self.data["error"] = error
        self.data["files"] = [
            {"path": str(Path(f).relative_to(self.out)), "sha256": _sha256(f), "bytes": os.path.getsize(f)}
            for f in sorted(files)
        ]
        self.write()


def snapshot_fields(state):
    """``(name, array)`` pairs in the snapshot byte order."""
    out = [("D", state.D)]
    out += [(f"u{'xyz'[a]}", state.u[a]) for a in range(state.grid.dim)]
    n = state.n
    if state.psi is not None:
        for i in range(n):
            out += [(f"psi{i}_re", state.psi[..., i].real), (f"psi{i}_im", state.psi[..., i].imag)]
    else:
        for i in range(n):
            for j in range(i, n):
                out += [(f"rho{i}{j}_re", state.rho[..., i, j].real), (f"rho{i}{j}_im", state.rho[..., i, j].imag)]
    if state.b is not None:
        out.append(("b", state.b))
    if state.c is not None:
        out.append(("c", state.c))
    return out


def write_snapshot(state, directory, index):
    """Write ``snap_NNNNN.bin`` (little-endian float64, row-major) and its ``.meta.json``."""
    stem = directory / f"snap_{index:05d}"
    flds = snapshot_fields(state)
    with open(f"{stem}.bin", "wb") as fh:
        for _, arr in flds:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))
    meta = {
        "time": float(state.t),
        "endianness": "little",
        "dtype": "float64",
        "order": "C",
        "shape": list(state.grid.shape),
        "spacing": list(state.grid.spacing),
        "mode": state.mode,
        "fields": [name for name, _ in flds],
    }
    Path(f"{stem}.meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return [Path(f"{stem}.bin"), Path(f"{stem}.meta.json")]


def read_snapshot(stem):
    """Inverse of :func:`write_snapshot`: returns ``(meta, {name: array})``."""
    meta = json.loads(Path(f"{stem}.meta.json").read_text())
    raw = np.fromfile(f"{stem}.bin", dtype="<f8")
    shape = tuple(meta["shape"])
    size = int(np.prod(shape))
    return meta, {name: raw[i * size:(i + 1) * size].reshape(shape) for i, name in enumerate(meta["fields"])}


def build_run(cfg):
    """Grid, state, Hamiltonian, integrator config, vacuum policy and tracer loops for a config."""
    grid = make_grid(cfg)
    state = presets.build_state(cfg.state, grid)
    ham = presets.build_hamiltonian(cfg.hamiltonian, grid)
    it = cfg.integrator
    icfg = integrator.IntegratorConfig(
        dt=it["dt"],
        t_end=it["t_end"],
        cfl_cap=it["cfl_cap"],
        hermitize_each_stage=it["hermitize_each_stage"],
        renormalize_psi=it["renormalize_psi"],
        deterministic=it["deterministic"],
    )
    vacuum = VacuumPolicy(cfg.vacuum["floor_fraction"])
    loops = [
        diagnostics.TracerLoop.circle(grid, lp["center"], lp["radius"], lp.get("nodes", 64), lp.get("name", f"loop_{i}"))
        for i, lp in enumerate(cfg.diagnostics["loops"])
    ]
    return state, ham, icfg, vacuum, loops


def cmd_run(args):
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.get("dir") or "")
    if not str(out):
        print("config error: no output directory (pass --out or set output.dir)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        state, ham, icfg, vacuum, loops = build_run(cfg)
    except (ConfigError, ValueError) as exc:
        msgs = exc.violations if isinstance(exc, ConfigError) else [str(exc)]
        for v in msgs:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    np.random.seed(cfg.seed)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(out, cfg.raw)
    cols = diagnostics.columns(len(loops))
    csv_path = out / CSV_NAME
    files = [csv_path]
    snap_dir = out / "snapshots"
    snap_every = cfg.snapshots["every"]
    if snap_every:
        snap_dir.mkdir(exist_ok=True)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)

        def on_record(rec):
            writer.writerow([_fmt(v) for v in rec.row(cols)])

        def on_snapshot(st, index):
            files.extend(write_snapshot(st, snap_dir, index))

        result = integrator.run(
            icfg, state, ham, cfg.model, loops=loops, diag_every=cfg.diagnostics["every"],
            on_record=on_record, on_snapshot=on_snapshot if snap_every else None, snap_every=snap_every,
            vacuum=vacuum,
        )
    error = str(result.error) if result.error is not None else None
    manifest.finalize(result.status, result.steps, files, error)
    if result.status == "blow-up":
        print(f"blow-up after {result.steps} steps: {error}", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"{result.steps} steps, {len(result.records)} records -> {csv_path}")
    return EXIT_OK


def cmd_verify(args):
    names = verification.SUITES if args.suite == "all" else (args.suite,)
    collected = {}
    for name in names:
        reports = verification.run_suite(name, seed=args.seed, quick=args.quick)
        collected[name] = reports
        for rep in verification.iter_reports(reports):
            print(f"[{name}] {rep.line()}")
    if args.report:
        verification.write_json(collected, args.report, seed=args.seed, extra={"quick": args.quick})
    ok = verification.all_passed(collected)
    print("verification passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_plot(args):
    path = Path(args.run) / CSV_NAME
    if not path.exists():
        print(f"no {CSV_NAME} in {args.run}", file=sys.stderr)
        return EXIT_CONFIG
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if args.quantity not in header:
        print(f"unknown quantity {args.quantity!r}; available: {', '.join(header)}", file=sys.stderr)
        return EXIT_CONFIG
    ti, qi = header.index("t"), header.index(args.quantity)
    dest = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(dest, lineterminator="\n")
        writer.writerow(["t", args.quantity])
        for r in body:
            writer.writerow([r[ti], r[qi]])
    finally:
        if args.output:
            dest.close()
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="qchydro", description="Mixed quantum-classical fluid simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate a configured run")
    r.add_argument("--config", required=True, help="JSON run configuration")
    r.add_argument("--out", help="output directory (overrides output.dir)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run verification suites")
    v.add_argument("--suite", choices=verification.SUITES + ("all",), default="all")
    v.add_argument("--quick", action="store_true", help="small grids and short runs")
    v.add_argument("--report", help="write a JSON report to this path")
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    pl = sub.add_parser("plot", help="extract a (t, value) CSV from a run")
    pl.add_argument("--run", required=True, help="run output directory")
    pl.add_argument("--quantity", required=True, help="invariants.csv column name")
    pl.add_argument("--output", help="write here instead of stdout")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
