"""Command-line front end: ``accessmfs {fit,sweep,ablation,synth,validate}``.

Exit codes: 0 success, 1 a cell (or a validation check) failed, 2 usage or
input error. Errors are also printed to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import experiment
from .core import Dataset, Hyperparameters
from .data import (DataFormatError, load_dataset, read_report, sidecar_path,
                   write_dataset, write_report)
from .solver import Variant, first_increase
from .synth import make_planted

logger = logging.getLogger("accessmfs")

EXIT_OK, EXIT_CELL_FAILURE, EXIT_USAGE = 0, 1, 2
ALL_VARIANTS = [v.value for v in Variant]


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers

def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected a number or comma list, got {text!r}") from None


def parse_ints(text: str) -> list[int]:
    """``"100,150"``, or an inclusive range ``"100:200:10"`` / ``"1:5"``."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [int(t) for t in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected integers, a comma list or start:stop[:step], got {text!r}") from None


def _add_common(p: argparse.ArgumentParser, *, sweep: bool):
    p.add_argument("--dataset", required=True, help="dataset file")
    p.add_argument("--format", default="dense_csv", choices=["dense_csv", "sparse_multilabel"])
    p.add_argument("--lambda", dest="lam", default="1", help="l2,1 weight (scalar or comma list)")
    p.add_argument("--theta", default="1", help="instance-graph weight")
    p.add_argument("--mu", default="1", help="label-graph weight")
    p.add_argument("--ks", type=int, default=5, help="instance-graph neighbours")
    p.add_argument("--kp", type=int, default=3, help="label-graph neighbours (capped at c-1)")
    p.add_argument("--labeled-ratio", "--labeled-ratios", dest="ratios",
                   default="0.4" if not sweep else "0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--features", default="100" if not sweep else "100:200:10",
                   help="feature counts: list or start:stop:step (inclusive)")
    p.add_argument("--seeds", default="1" if not sweep else "1:5")
    p.add_argument("--variant", default="full",
                   help="full, variant1, variant2, variant3 (comma list allowed for sweep)")
    p.add_argument("--mlknn-k", type=int, default=10)
    p.add_argument("--mlknn-smoothing", type=float, default=1.0)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                   help="z-score features at load")
    p.add_argument("--out", default="accessmfs-out", help="output directory")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--baseline", action="store_true", help="also score all features")
    p.add_argument("--record-runtime", action="store_true",
                   help="write runtime_ms into the CSV (makes it non-reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="accessmfs", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="one fit + ML-KNN evaluation cell")
    _add_common(p, sweep=False)
    p = sub.add_parser("sweep", help="grid x ratios x feature counts x seeds")
    _add_common(p, sweep=True)
    p = sub.add_parser("ablation", help="all four variants on identical splits")
    _add_common(p, sweep=True)

    p = sub.add_parser("synth", help="write planted-structure data")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--d", type=int, default=50)
    p.add_argument("--informative", type=int, default=10)
    p.add_argument("--c", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", default="dense_csv", choices=["dense_csv", "sparse_multilabel"])
    p.add_argument("--out", required=True, help="output dataset path")

    p = sub.add_parser("validate", help="check invariants of a saved run")
    p.add_argument("path", help="report .csv/.json or an output directory")
    p.add_argument("--trace-rtol", type=float, default=1e-9)
    p.add_argument("--constraint-tol", type=float, default=1e-6)
    p.add_argument("--simplex-tol", type=float, default=1e-10)
    return parser


# ---------------------------------------------------------------- shared pieces

def _emit_error(exc: BaseException, code: int):
    payload = {"error": str(exc), "type": type(exc).__name__, "exit_code": code}
    print(json.dumps(payload), file=sys.stderr)


def _load(args) -> Dataset:
    if not Path(args.dataset).exists():
        raise UsageError(f"dataset not found: {args.dataset}")
    return load_dataset(args.dataset, args.format, standardize_features=args.standardize)


def _grid(args):
    return {
        "lambda": parse_floats(args.lam),
        "theta": parse_floats(args.theta),
        "mu": parse_floats(args.mu),
        "ratios": parse_floats(args.ratios),
        "features": parse_ints(args.features),
        "seeds": parse_ints(args.seeds),
        "variants": [v.strip() for v in args.variant.split(",") if v.strip()],
    }


def _validate_grid(grid, data: Dataset):
    for key, values in grid.items():
        if not values:
            raise UsageError(f"empty grid for {key}")
    if max(grid["features"]) > data.n_features or min(grid["features"]) < 1:
        raise UsageError(f"feature counts must lie in [1, {data.n_features}]")
    if any(not 0 < r < 1 for r in grid["ratios"]):
        raise UsageError("labeled ratios must lie in (0, 1)")
    for v in grid["variants"]:
        if v != experiment.BASELINE:
            try:
                Variant.parse(v)
            except ValueError:
                raise UsageError(f"unknown variant {v!r}") from None


def _hp(args, lam, theta, mu, data: Dataset) -> Hyperparameters:
    kp = min(args.kp, max(data.n_labels - 1, 1))
    return Hyperparameters(lam=lam, theta=theta, mu=mu, k_s=args.ks, k_p=kp,
                           max_outer_iters=args.max_iters, tol_rel_obj=args.tol)


def _config(args, grid, data: Dataset) -> dict:
    return {
        "command": args.command,
        "dataset": str(args.dataset),
        "format": args.format,
        "standardized": bool(args.standardize),
        "dataset_summary": data.summary(),
        "grid": grid,
        "k_s": args.ks,
        "k_p": args.kp,
        "mlknn": {"k": args.mlknn_k, "smoothing": args.mlknn_smoothing},
        "max_iters": args.max_iters,
        "tol": args.tol,
    }


def _save_state(path: Path, result, hp: Hyperparameters):
    st = result.state
    np.savez(path, W=st.W, F=st.F, S=st.S, P=st.P, D=np.diag(st.D), b=st.b,
             k_s=hp.k_s, k_p=hp.k_p)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ACCESSMFS_THREADS", "1")))
    except ValueError:
        return 1


def _run_jobs(data, args, grid, variants, save_state_dir: Path | None):
    """Run every (variant, lambda, theta, mu, ratio, seed) fit; collect cells and failures."""
    jobs = list(itertools.product(variants, grid["lambda"], grid["theta"], grid["mu"],
                                  grid["ratios"], grid["seeds"]))

    def work(job):
        variant, lam, theta, mu, ratio, seed = job
        hp = _hp(args, lam, theta, mu, data)
        reps, result, _ = experiment.run_cell(data, hp, variant, ratio, seed, grid["features"],
                                              args.mlknn_k, args.mlknn_smoothing)
        if result is not None and save_state_dir is not None:
            name = f"state_{variant}_{lam:g}_{theta:g}_{mu:g}_{ratio:g}_{seed}.npz"
            _save_state(save_state_dir / name, result, hp)
            for r in reps:
                r.extra["state"] = name
        return reps

    def safe(job):
        try:
            return job, work(job), None
        except Exception as exc:  # a failed cell must not stop the sweep
            logger.debug("cell %s failed:\n%s", job, traceback.format_exc())
            return job, [], f"{type(exc).__name__}: {exc}"

    n = _threads()
    if n > 1:
        with ThreadPoolExecutor(max_workers=n) as pool:
            outcomes = list(pool.map(safe, jobs))
    else:
        outcomes = [safe(j) for j in jobs]
    cells, failures = [], []
    for job, reps, err in outcomes:
        cells.extend(reps)
        if err is not None:
            keys = ("variant", "lambda", "theta", "mu", "labeled_ratio", "seed")
            failures.append({**dict(zip(keys, job)), "error": err})
    return cells, failures


# ---------------------------------------------------------------- commands

def cmd_fit(args) -> int:
    data = _load(args)
    grid = _grid(args)
    for key in ("lambda", "theta", "mu", "ratios", "features", "seeds", "variants"):
        if len(grid[key]) != 1:
            raise UsageError(f"fit runs a single cell; got several values for {key}")
    _validate_grid(grid, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = grid["variants"] + ([experiment.BASELINE] if args.baseline else [])
    cells, failures = _run_jobs(data, args, grid, variants, out)
    if failures:
        raise RuntimeError(failures[0]["error"])
    write_report(cells, out / "report.csv", _config(args, grid, data),
                 with_runtime=args.record_runtime)
    for c in cells:
        print(f"{c.variant} k={c.n_features} AP={c.ap:.4f} MaF={c.maf:.4f} "
              f"RL={c.rl:.4f} OE={c.oe:.4f} iterations={c.iterations}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    data = _load(args)
    grid = _grid(args)
    _validate_grid(grid, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = grid["variants"] + ([experiment.BASELINE] if args.baseline else [])
    cells, failures = _run_jobs(data, args, grid, variants, None)
    cells = cells + experiment.mean_reports(cells)
    write_report(cells, out / "report.csv", _config(args, grid, data),
                 with_runtime=args.record_runtime, extra={"failures": failures})
    if failures:
        for f in failures:
            print(f"cell failed: {f}", file=sys.stderr)
        return EXIT_CELL_FAILURE
    return EXIT_OK


def cmd_ablation(args) -> int:
    data = _load(args)
    grid = _grid(args)
    grid["variants"] = list(ALL_VARIANTS)
    _validate_grid(grid, data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variants = grid["variants"] + ([experiment.BASELINE] if args.baseline else [])
    cells, failures = _run_jobs(data, args, grid, variants, out)
    means = experiment.mean_reports(cells)
    write_report(cells + means, out / "ablation.csv", _config(args, grid, data),
                 with_runtime=args.record_runtime, extra={"failures": failures})
    _write_ablation_table(means, out / "ablation_table.csv", data.name)
    return EXIT_CELL_FAILURE if failures else EXIT_OK


def _write_ablation_table(means, path: Path, dataset: str):
    """Rows metric x variant, averaged over every grid cell and seed."""
    import csv
    order = ALL_VARIANTS + [experiment.BASELINE]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "variant", dataset])
        for metric, attr in (("AP", "ap"), ("MaF", "maf"), ("RL", "rl"), ("OE", "oe")):
            for v in order:
                vals = [getattr(m, attr) for m in means if m.variant == v]
                if vals:
                    w.writerow([metric, v, repr(float(np.mean(vals)))])


def cmd_synth(args) -> int:
    planted = make_planted(n=args.n, d=args.d, informative=args.informative, c=args.c,
                           noise=args.noise, density=args.density, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data = Dataset(planted.features, planted.labels, np.ones(args.n, dtype=bool), out.stem)
    write_dataset(data, out, args.format)
    meta = {"schema": 1, "informative": planted.informative.tolist(), "n": args.n, "d": args.d,
            "c": args.c, "noise": args.noise, "density": args.density, "seed": args.seed,
            "format": args.format}
    with open(sidecar_path(out) if out.suffix != ".json" else out.with_suffix(".meta.json"),
              "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    print(f"wrote {out} ({args.n} instances, {args.d} features, {args.c} labels)")
    return EXIT_OK


def _resolve_sidecar(path: Path) -> Path:
    if path.is_dir():
        for name in ("report.json", "ablation.json"):
            if (path / name).exists():
                return path / name
        raise UsageError(f"no report.json in {path}")
    if path.suffix == ".csv":
        return sidecar_path(path)
    return path


def validate_run(sidecar: Path, trace_rtol=1e-9, constraint_tol=1e-6, simplex_tol=1e-10):
    """Return a list of human-readable problems (empty when the run is healthy)."""
    with open(sidecar) as fh:
        doc = json.load(fh)
    problems = []
    if doc.get("schema") != 1:
        problems.append(f"unsupported schema {doc.get('schema')!r}")
    seen_states = set()
    for i, cell in enumerate(doc.get("cells", [])):
        label = f"cell {i} ({cell['key'].get('variant')}, seed {cell['key'].get('seed')})"
        trace = cell.get("trace")
        if trace:
            t = first_increase(trace["objective_values"], trace_rtol)
            if t is not None:
                v = trace["objective_values"]
                problems.append(f"{label}: objective increased at iteration {t} "
                                f"({v[t - 1]!r} -> {v[t]!r})")
            for it, r in enumerate(trace.get("constraint_residuals", []), start=1):
                if r is None or r > constraint_tol:
                    problems.append(f"{label}: constraint residual {r} at iteration {it}")
                    break
        state = cell.get("state")
        if state and state not in seen_states:
            seen_states.add(state)
            problems += [f"{label}: {p}" for p in
                         _check_state(sidecar.parent / state, simplex_tol)]
    return problems


def _check_graph(name, G, k, tol):
    out = []
    if np.any(G < 0):
        r = int(np.argwhere(G < 0)[0, 0])
        out.append(f"{name} row {r} has a negative entry")
    diag = np.flatnonzero(np.diag(G) != 0)
    if diag.size:
        out.append(f"{name} row {int(diag[0])} has a nonzero diagonal entry")
    sums = G.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1) > tol)
    if bad.size:
        out.append(f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}")
    nnz = (G != 0).sum(axis=1)
    over = np.flatnonzero(nnz > k)
    if over.size:
        out.append(f"{name} row {int(over[0])} has {int(nnz[over[0]])} > {k} neighbours")
    return out


def _check_state(path: Path, tol):
    if not path.exists():
        return [f"state file {path.name} missing"]
    st = np.load(path)
    k_s, k_p = int(st["k_s"]), int(st["k_p"])
    c = st["P"].shape[0]
    out = _check_graph("S", st["S"], k_s, tol)
    if c >= 2:
        out += _check_graph("P", st["P"], min(k_p, c - 1), tol)
    return out


def cmd_validate(args) -> int:
    sidecar = _resolve_sidecar(Path(args.path))
    if not sidecar.exists():
        raise UsageError(f"no such report: {sidecar}")
    problems = validate_run(sidecar, args.trace_rtol, args.constraint_tol, args.simplex_tol)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CELL_FAILURE
    n = len(read_report(sidecar.with_suffix(".csv"))) if sidecar.with_suffix(".csv").exists() else 0
    print(f"ok: {sidecar} ({n} report rows)")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "sweep": cmd_sweep, "ablation": cmd_ablation,
            "synth": cmd_synth, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, DataFormatError, FileNotFoundError, ValueError) as exc:
        _emit_error(exc, EXIT_USAGE)
        return EXIT_USAGE
    except Exception as exc:
        _emit_error(exc, EXIT_CELL_FAILURE)
        return EXIT_CELL_FAILURE


if __name__ == "__main__":
    sys.exit(main())
