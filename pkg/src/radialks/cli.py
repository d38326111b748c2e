"""Command-line driver.

    radialks --Z 92 --nele 15
    radialks --Z-range 1:10 --compare ref.csv --out results/

Each atom writes ``result_<Z>.json``. With ``--compare`` a table of
``Z,symbol,E_tot,E_ref,abs_dE,status`` is printed and written to
``comparison.csv`` / ``comparison.json``. Exit status: 0 when every atom
converged (and passed, when comparing), 1 otherwise, 2 for usage errors.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__, kernels
from .atom_data import Z_MAX, configuration
from .eigensolve import write_iteration_trace
from .errors import ConvergenceError, RadialKSError
from .mesh import uniform_mesh, write_mesh_history
from .scf import SCF_TOL, moving_mesh_solve, scf_solve, write_energy_trace, write_orbitals

log = logging.getLogger("radialks")

COMPARE_THRESHOLD = 1e-6
DEFAULT_P = 10
DEFAULT_NELE = 13
# domain radius by periodic-table row: rows 1-4 end at Kr
R_LIGHT, R_HEAVY, Z_LAST_LIGHT = 20.0, 100.0, 36

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunSpec:
    Z: tuple
    p: int = DEFAULT_P
    n_ele: int = DEFAULT_NELE
    R: float | None = None
    tol: float = SCF_TOL
    scf_maxit: int = 400
    moving_mesh: bool = True
    out: str = "."
    compare: str | None = None
    seed: int = 0
    dump_mesh: bool = False
    dump_density: bool = False
    dump_trace: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.Z:
            raise UsageError("no atoms requested")
        for z in self.Z:
            if not 1 <= z <= Z_MAX:
                raise UsageError(f"Z={z} outside 1..{Z_MAX}")
        for name in ("p", "n_ele", "scf_maxit", "workers"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.R is not None and not self.R > 0:
            raise UsageError("--R must be positive")
        if not self.tol > 0:
            raise UsageError("--tol must be positive")
        if self.seed < 0:
            raise UsageError("--seed must be non-negative")

    def radius(self, Z):
        if self.R is not None:
            return float(self.R)
        return R_LIGHT if Z <= Z_LAST_LIGHT else R_HEAVY


@dataclass(frozen=True)
class ReferenceRecord:
    Z: int
    symbol: str
    E_tot: float
    eps: tuple = field(default=())


def parse_reference(lines):
    """Rows ``Z,symbol,E_tot[,eps_1,...]``; ``#`` comments and a header row
    starting with ``Z`` are skipped. Malformed rows raise ValueError naming
    the line."""
    table = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if cells[0].lower() == "z":
            continue
        if len(cells) < 3:
            raise ValueError(f"reference line {lineno}: expected Z,symbol,E_tot[,eps...], got {raw.strip()!r}")
        try:
            z = int(cells[0])
            vals = [float(c) for c in cells[2:] if c != ""]
        except ValueError:
            raise ValueError(f"reference line {lineno}: non-numeric field in {raw.strip()!r}") from None
        if not 1 <= z <= Z_MAX:
            raise ValueError(f"reference line {lineno}: Z={z} outside 1..{Z_MAX}")
        if not cells[1] or not vals or not all(math.isfinite(v) for v in vals):
            raise ValueError(f"reference line {lineno}: missing symbol or non-finite value")
        if z in table:
            raise ValueError(f"reference line {lineno}: duplicate Z={z}")
        table[z] = ReferenceRecord(z, cells[1], vals[0], tuple(vals[1:]))
    return table


BUILTIN_REFERENCE = "builtin"


def load_reference(path):
    """Parse a reference CSV; ``"builtin"`` selects the shipped LDA table."""
    if path == BUILTIN_REFERENCE:
        text = resources.files("radialks").joinpath("data/nist_lda.csv").read_text(encoding="utf-8")
        return parse_reference(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_reference(fh)


def compare(results, reference, threshold=COMPARE_THRESHOLD):
    """One row per result: E_tot, E_ref, |dE| and pass/fail/missing.

    Reference eigenvalues, when present, are matched against the computed
    ones in ascending order and must also agree to ``threshold``.
    """
    rows = []
    for res in results:
        z = res["Z"]
        e = res["energies"]["E_tot"] if res.get("energies") else float("nan")
        ref = reference.get(z)
        row = {"Z": z, "symbol": res["symbol"], "E_tot": e, "E_ref": None, "abs_dE": None, "max_abs_deps": None}
        if ref is None:
            row["status"] = "missing"
        else:
            de = abs(e - ref.E_tot)
            ok = de < threshold
            row.update(E_ref=ref.E_tot, abs_dE=de)
            if ref.eps:
                mine = sorted(o["eps"] for o in res["orbitals"])
                if len(mine) != len(ref.eps):
                    ok = False
                else:
                    d = max(abs(a - b) for a, b in zip(mine, sorted(ref.eps)))
                    row["max_abs_deps"] = d
                    ok = ok and d < threshold
            row["status"] = "pass" if ok and res["converged"] else "fail"
        rows.append(row)
    return rows


def comparison_passed(rows):
    """Missing references are flagged but do not fail the run."""
    return all(r["status"] != "fail" for r in rows)


# ---------------------------------------------------------------- running


def _state_to_dict(Z, spec: RunSpec, state, converged, message=None):
    cfg = configuration(Z)
    orbitals = sorted(state.orbitals, key=lambda o: (o.l, o.n)) if state is not None else []
    out = {
        "Z": Z,
        "symbol": cfg.symbol,
        "converged": bool(converged),
        "parameters": {
            "p": spec.p,
            "n_ele": spec.n_ele,
            "R": spec.radius(Z),
            "tol": spec.tol,
            "scf_maxit": spec.scf_maxit,
            "moving_mesh": spec.moving_mesh,
            "seed": spec.seed,
        },
        "energies": state.energies.as_dict() if state is not None and state.energies else None,
        "orbitals": [
            {"n": o.n, "l": o.l, "label": o.label, "f": float(o.occupation), "eps": float(o.eps)} for o in orbitals
        ],
        "iterations": {
            "scf": int(state.iterations) if state else 0,
            "scf_per_mesh": [int(i) for i in state.scf_iterations_per_step] if state else [],
            "preadapt_steps": int(state.preadapt_steps) if state else 0,
            "moving_mesh_steps": int(state.moving_mesh_steps) if state else 0,
            # per SCF iteration (last mesh): LOBPCG iterations by angular channel
            "lobpcg": [{str(l): int(n) for l, n in sorted(d.items())} for d in state.lobpcg_iterations]
            if state
            else [],
        },
        "mesh_history": [[float(x) for x in m.boundaries] for m in state.mesh_history] if state else [],
        "outer_energy_trace": [float(e) for e in state.outer_energy_trace] if state else [],
        "backend": kernels.BACKEND,
        "version": __version__,
        # excluded from determinism comparisons
        "timing": {"wall_time_s": float(state.wall_time) if state else 0.0},
    }
    if message:
        out["error"] = message
    return out


def solve_atom(Z, spec: RunSpec):
    """Run one atom; returns (state or None, converged, error message)."""
    cfg = configuration(Z)
    R = spec.radius(Z)
    t0 = time.perf_counter()
    try:
        if spec.moving_mesh:
            state = moving_mesh_solve(
                cfg, R, spec.n_ele, spec.p, tol=spec.tol, maxit=spec.scf_maxit, seed=spec.seed
            )
        else:
            mesh = uniform_mesh(R, spec.n_ele, spec.p)
            state = scf_solve(cfg, mesh, tol=spec.tol, maxit=spec.scf_maxit, seed=spec.seed)
            state.mesh_history = [mesh]
            state.scf_iterations_per_step = [state.iterations]
            state.outer_energy_trace = [state.total_energy]
            state.wall_time = time.perf_counter() - t0
        return state, bool(state.converged), None
    except ConvergenceError as exc:
        state = exc.partial if getattr(exc.partial, "orbitals", None) is not None else None
        if state is not None:
            state.wall_time = time.perf_counter() - t0
        return state, False, str(exc)
    except (RadialKSError, np.linalg.LinAlgError, ValueError) as exc:
        return None, False, f"{type(exc).__name__}: {exc}"


def _dump_density(path, state):
    mesh = state.mesh
    rho = state.rho_out
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "rho"])
        for r, v in zip(mesh.nodes, rho.nodes):
            w.writerow([repr(float(r)), repr(float(v))])


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_outputs(Z, spec, state, result):
    out = spec.out
    write_json(os.path.join(out, f"result_{Z}.json"), result)
    if state is None:
        return
    write_energy_trace(os.path.join(out, f"trace_{Z}.csv"), state)
    write_orbitals(os.path.join(out, f"orbitals_{Z}.csv"), state)
    if spec.dump_mesh:
        write_mesh_history(os.path.join(out, f"mesh_{Z}.csv"), state.mesh_history)
    if spec.dump_density:
        _dump_density(os.path.join(out, f"density_{Z}.csv"), state)
    if spec.dump_trace and state.eigensolutions:
        ls = sorted(state.eigensolutions)
        sols = [state.eigensolutions[l] for l in ls]
        by_l = {l: sorted((o for o in state.orbitals if o.l == l), key=lambda o: o.n) for l in ls}
        labels = [[o.label for o in by_l[l]] + [f"guard{j}" for j in range(sol.eigenvectors.shape[1] - len(by_l[l]))]
                  for l, sol in zip(ls, sols)]
        write_iteration_trace(os.path.join(out, f"lobpcg_{Z}.csv"), sols, labels)


def run(spec: RunSpec, stream=None):
    """Solve every requested atom; returns (results, comparison rows, exit code)."""
    stream = sys.stdout if stream is None else stream
    reference = load_reference(spec.compare) if spec.compare else None
    lock = threading.Lock()
    results = {}

    def work(Z):
        state, ok, msg = solve_atom(Z, spec)
        result = _state_to_dict(Z, spec, state, ok, msg)
        # file writes and console output from worker threads are serialized
        with lock:
            _write_outputs(Z, spec, state, result)
            e = result["energies"]["E_tot"] if result["energies"] else float("nan")
            print(f"Z={Z:3d} {result['symbol']:<3s} E_tot={e:.10f} {'converged' if ok else 'FAILED'}"
                  + (f" ({msg})" if msg else ""), file=stream)
            results[Z] = result

    if spec.workers == 1 or len(spec.Z) == 1:
        for z in spec.Z:
            work(z)
    else:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            list(pool.map(work, spec.Z))
    ordered = [results[z] for z in spec.Z]
    ok = all(r["converged"] for r in ordered)
    rows = None
    if reference is not None:
        rows = compare(ordered, reference)
        _write_comparison(spec.out, rows)
        print_comparison(rows, stream)
        ok = ok and comparison_passed(rows)
    return ordered, rows, EXIT_OK if ok else EXIT_FAIL


def _write_comparison(out, rows):
    cols = ["Z", "symbol", "E_tot", "E_ref", "abs_dE", "max_abs_deps", "status"]
    with open(os.path.join(out, "comparison.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    write_json(os.path.join(out, "comparison.json"), rows)


def print_comparison(rows, stream):
    print(f"{'Z':>3} {'sym':<3} {'E_tot':>20} {'E_ref':>20} {'|dE|':>10}  status", file=stream)
    for r in rows:
        ref = "-" if r["E_ref"] is None else f"{r['E_ref']:.8f}"
        de = "-" if r["abs_dE"] is None else f"{r['abs_dE']:.2e}"
        print(f"{r['Z']:>3} {r['symbol']:<3} {r['E_tot']:>20.10f} {ref:>20} {de:>10}  {r['status']}", file=stream)


# ---------------------------------------------------------------- argv


def _z_range(text):
    try:
        a, b = (int(s) for s in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A:B, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return tuple(range(a, b + 1))


def build_parser():
    ap = argparse.ArgumentParser(prog="radialks", description="Radial Kohn-Sham LDA solver for neutral atoms.")
    which = ap.add_mutually_exclusive_group(required=True)
    which.add_argument("--Z", type=int, help="nuclear charge (1..92)")
    which.add_argument("--Z-range", dest="z_range", type=_z_range, metavar="A:B", help="inclusive sweep")
    ap.add_argument("--p", type=int, default=DEFAULT_P, help="polynomial order (default %(default)s)")
    ap.add_argument("--nele", type=int, default=DEFAULT_NELE, help="number of elements (default %(default)s)")
    ap.add_argument("--R", type=float, default=None, help="domain radius (default 20 for Z<=36, else 100)")
    ap.add_argument("--tol", type=float, default=SCF_TOL, help="energy tolerance (default %(default)g)")
    ap.add_argument("--scf-maxit", type=int, default=400)
    ap.add_argument("--moving-mesh", action=argparse.BooleanOptionalAction, default=True)
    ap.add_argument("--compare", metavar="FILE", help="reference CSV: Z,symbol,E_tot[,eps...]; 'builtin' for the shipped LDA totals")
    ap.add_argument("--out", metavar="DIR", default=".", help="output directory (created if absent)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None, help="threads for --Z-range (default: CPU count)")
    ap.add_argument("--dump-mesh", action="store_true", help="write mesh_<Z>.csv (step,boundary_index,x)")
    ap.add_argument("--dump-density", action="store_true", help="write density_<Z>.csv (r,rho)")
    ap.add_argument("--dump-trace", action="store_true", help="write lobpcg_<Z>.csv (orbital,iteration,residual)")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _prepare_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path!r}: {exc.strerror}") from None
    if not os.access(path, os.W_OK | os.X_OK):
        raise UsageError(f"output directory {path!r} is not writable")


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    zs = (args.Z,) if args.Z is not None else args.z_range
    workers = args.workers if args.workers is not None else min(len(zs), os.cpu_count() or 1)
    try:
        spec = RunSpec(
            Z=zs, p=args.p, n_ele=args.nele, R=args.R, tol=args.tol, scf_maxit=args.scf_maxit,
            moving_mesh=args.moving_mesh, out=args.out, compare=args.compare, seed=args.seed,
            dump_mesh=args.dump_mesh, dump_density=args.dump_density, dump_trace=args.dump_trace,
            workers=max(workers, 1),
        )
        _prepare_out(spec.out)
        if spec.compare:
            load_reference(spec.compare)
    except (UsageError, ValueError, OSError) as exc:
        ap.print_usage(sys.stderr)
        print(f"radialks: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _, _, code = run(spec)
    return code


if __name__ == "__main__":
    sys.exit(main())
