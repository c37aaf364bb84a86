"""Command-line interface: ``bcnmf transfer | baselines | synth``.

Exit codes: 0 success, 1 pipeline failure, 2 usage or I/O error. Errors are
reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .datasets import make_rotated_pair
from .evaluation import EmptyClusterError, accuracy, dbi, learning_curve
from .kernels import FamilyGrid, base_family
from .nmf import NmfOptions
from .transfer import (
    EQUALIZE,
    STAGE_BASELINE,
    STAGE_EQUALIZE,
    STAGE_FINAL,
    NoValidBridgeError,
    TransferConfig,
    baseline_cnmf,
    baseline_kernel_alone,
    equalize_sizes,
    run_bcnmf,
    selection_kernel,
    stage_seed,
)

log = logging.getLogger("bcnmf")

GRID_PRESETS = {
    "default": FamilyGrid(),
    "wide": FamilyGrid.wide(),
    "linear": FamilyGrid.linear_only(),
}

RESULT_SCHEMA = {
    "type": "object",
    "required": ["meta", "config", "a_init", "iterations", "selected_iteration", "bridge_dbi", "partition"],
    "properties": {
        "meta": {
            "type": "object",
            "required": ["version", "created_at"],
            "properties": {"version": {"type": "string"}, "created_at": {"type": "string"}},
        },
        "config": {"type": "object", "required": ["r", "n_iter", "seed", "equalize"]},
        "a_init": {"type": "number"},
        "iterations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["iter", "solver_step", "kta", "dbi", "valid", "selected", "alpha"],
                "properties": {
                    "iter": {"type": "integer", "minimum": 1},
                    "solver_step": {"type": "integer", "minimum": 0},
                    "kta": {"type": "number"},
                    "dbi": {"type": ["number", "null"]},
                    "valid": {"type": "boolean"},
                    "selected": {"type": "boolean"},
                    "alpha": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        },
        "selected_iteration": {"type": "integer", "minimum": 1},
        "bridge_dbi": {"type": "number"},
        "partition": {
            "type": "object",
            "required": ["target_ids", "labels"],
            "properties": {
                "target_ids": {"type": "array", "items": {"type": "integer"}},
                "labels": {"type": "array", "items": {"type": "integer"}},
            },
        },
        "accuracy": {
            "type": "object",
            "required": ["accuracy", "confusion", "matching"],
            "properties": {"accuracy": {"type": "number", "minimum": 0, "maximum": 1}},
        },
        "baselines": {"type": "object"},
    },
}


class UsageError(Exception):
    """Bad input files or arguments (exit code 2)."""


def ingest_csv(path, label_column: str | None = None, require_label: bool = True):
    """Read a headed numeric CSV into ``(X, labels)``.

    Labels, when a column is named, are encoded as integers by order of first
    occurrence. If ``require_label`` is false a missing label column is
    tolerated and ``labels`` is ``None``.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"file not found: {path}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    label_idx = None
    if label_column is not None:
        if label_column in header:
            label_idx = header.index(label_column)
        elif require_label:
            raise UsageError(f"{path}: label column {label_column!r} not in header {header}")
    feature_idx = [j for j in range(len(header)) if j != label_idx]
    if not feature_idx:
        raise UsageError(f"{path}: no feature columns")
    X, raw = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise UsageError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
        vals = []
        for j in feature_idx:
            try:
                v = float(row[j])
            except ValueError:
                raise UsageError(f"{path}:{lineno}: column {header[j]!r}: non-numeric cell {row[j]!r}") from None
            if not math.isfinite(v):
                raise UsageError(f"{path}:{lineno}: column {header[j]!r}: non-finite cell {row[j]!r}")
            vals.append(v)
        X.append(vals)
        if label_idx is not None:
            raw.append(row[label_idx].strip())
    if not X:
        raise UsageError(f"{path}: no data rows")
    labels = None
    if label_idx is not None:
        codes = {}
        labels = np.array([codes.setdefault(v, len(codes)) for v in raw], dtype=np.int64)
    return np.array(X, dtype=float), labels


def parse_grid(text: str) -> FamilyGrid:
    """A preset name or comma-separated ``gaussian=LO:HI``, ``poly=LO:HI``, ``linear`` terms.

    Gaussian bounds are base-2 exponents of the bandwidth.
    """
    if text in GRID_PRESETS:
        return GRID_PRESETS[text]
    gauss, poly, linear = (), (), False
    for term in filter(None, (t.strip() for t in text.split(","))):
        if term == "linear":
            linear = True
            continue
        name, _, rng = term.partition("=")
        try:
            lo, _, hi = rng.partition(":")
            lo, hi = int(lo), int(hi or lo)
        except ValueError:
            raise UsageError(f"bad grid term {term!r}") from None
        if lo > hi:
            raise UsageError(f"bad grid term {term!r}: empty range")
        if name in ("gaussian", "gauss"):
            gauss = tuple(range(lo, hi + 1))
        elif name in ("poly", "polynomial"):
            if lo < 1:
                raise UsageError(f"bad grid term {term!r}: degrees start at 1")
            poly = tuple(range(lo, hi + 1))
        else:
            raise UsageError(f"unknown grid term {term!r}")
    grid = FamilyGrid(gaussian_exponents=gauss, poly_degrees=poly, include_linear=linear)
    if not grid.specs():
        raise UsageError(f"grid {text!r} is empty")
    return grid


def explain_cost(n: int, k: int, m: int, t: int) -> str:
    per = n**3 + 2 * m * (2 * n**2 * k + n * k**2) + m * n * k**2
    return (f"cost ~ t(n^3 + 2m(2n^2k + nk^2) + mnk^2) with n={n}, k={k}, m={m}, t={t}: "
            f"{t} x {per} = {t * per:.3e} flops")


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if v is None else _fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _meta():
    return {
        "version": __version__,
        "created_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _config(args) -> TransferConfig:
    grid = parse_grid(args.grid)
    try:
        return TransferConfig(
            r=args.clusters, n_iter=args.iters, grid=grid, equalize=args.equalize, seed=args.seed,
            max_iters=args.nmf_iters, restarts=args.restarts, lam=args.ridge,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(args) -> set[str]:
    return {e.strip() for e in args.emit.split(",") if e.strip()}


def _load_pair(args):
    if args.source is None or args.target is None:
        raise UsageError("--source and --target are required")
    X_S, _ = ingest_csv(args.source, args.labels, require_label=False)
    X_T, truth = ingest_csv(args.target, args.labels)
    return X_S, X_T, truth


def _baselines(X_T, truth, cfg: TransferConfig):
    opts = NmfOptions(k=cfg.r, max_iters=cfg.max_iters, rel_tol=cfg.rel_tol,
                      seed=stage_seed(cfg.seed, STAGE_BASELINE), restarts=cfg.restarts)
    K_sel = selection_kernel(X_T, cfg.selection_spec)
    fac, labels = baseline_cnmf(X_T, cfg.r, opts)
    cn = accuracy(labels, truth, K_sel) if truth is not None else None
    row = {"method": "cnmf", "dbi": None, "accuracy": None}
    if cn is not None:
        row.update(dbi=cn.dbi, accuracy=cn.accuracy)
    else:
        try:
            row["dbi"] = dbi(K_sel, labels, cfg.r)
        except EmptyClusterError:
            pass
    family = base_family(X_T, cfg.grid)
    alone = baseline_kernel_alone(X_T, cfg.r, family, opts, truth, K_sel)
    table = [row] + [{"method": f"knmf:{r['kernel']}", "dbi": r["dbi"], "accuracy": r.get("accuracy")}
                     for r in alone["rows"]]
    return {"cnmf": row, "kernel_alone": alone, "table": table}


def cmd_transfer(args) -> dict:
    cfg = _config(args)
    X_S, X_T, truth = _load_pair(args)
    if args.explain_cost:
        n = equalize_sizes(X_S, X_T, cfg.equalize)[1].shape[0]
        print(explain_cost(n, cfg.r, cfg.max_iters, cfg.n_iter))
    res = run_bcnmf(X_S, X_T, cfg)
    t_truth = truth[res.target_ids] if truth is not None else None

    curve = learning_curve(res)
    if t_truth is not None and args.curve_accuracy:
        X_used = X_T[res.target_ids]
        curve = learning_curve(res, t_truth, X_used, cfg.nmf_options(STAGE_FINAL))
    iterations = []
    for rec, row in zip(res.iterations, curve):
        item = {"iter": rec.iteration, "solver_step": rec.solver_step, "kta": rec.kta, "dbi": rec.dbi,
                "valid": rec.valid, "selected": rec.selected, "alpha": rec.alpha,
                "qp_objective": rec.qp_objective, "knmf_objective": rec.knmf_objective}
        if "accuracy" in row:
            item["accuracy"] = row["accuracy"]
        iterations.append(item)

    bundle = {
        "meta": _meta(),
        "config": {**cfg.to_dict(), "lam_used": res.lam, "source": str(args.source),
                   "target": str(args.target), "labels": args.labels,
                   "kernels": [s.label() for s in res.specs]},
        "a_init": res.a_init,
        "iterations": iterations,
        "selected_iteration": res.selected_iteration,
        "bridge_dbi": res.bridge_dbi,
        "partition": {"target_ids": res.target_ids, "labels": res.labels},
    }
    if t_truth is not None:
        bundle["accuracy"] = accuracy(res.labels, t_truth).to_dict()
    if args.with_baselines:
        bundle["baselines"] = _baselines(X_T[res.target_ids], t_truth, cfg)
    bundle = _clean(bundle)

    out, emit = Path(args.out), _emit(args)
    if "json" in emit:
        _atomic_write(out / "result.json", json.dumps(bundle, indent=2, allow_nan=False) + "\n")
    if "curves" in emit:
        header = ["iter", "kta", "dbi", "selected"] + (["accuracy"] if "accuracy" in curve[0] else [])
        _write_csv(out / "curves.csv", header, [[row[h] for h in header] for row in curve])
    acc = bundle.get("accuracy", {}).get("accuracy")
    print(f"selected iteration {res.selected_iteration}/{cfg.n_iter}, bridge DBI {res.bridge_dbi:.4f}, "
          f"A_init {res.a_init:.4f}" + (f", accuracy {acc:.4f}" if acc is not None else ""))
    return bundle


def cmd_baselines(args) -> dict:
    cfg = _config(args)
    X_S, X_T, truth = _load_pair(args)
    _, X_T, _, ids_t = equalize_sizes(X_S, X_T, cfg.equalize, stage_seed(cfg.seed, STAGE_EQUALIZE))
    t_truth = truth[ids_t] if truth is not None else None
    if args.explain_cost:
        print(explain_cost(X_T.shape[0], cfg.r, cfg.max_iters, 1))
    base = _baselines(X_T, t_truth, cfg)
    bundle = _clean({
        "meta": _meta(),
        "config": {**cfg.to_dict(), "source": str(args.source), "target": str(args.target),
                   "labels": args.labels},
        "baselines": base,
    })
    out, emit = Path(args.out), _emit(args)
    if "json" in emit:
        _atomic_write(out / "baselines.json", json.dumps(bundle, indent=2, allow_nan=False) + "\n")
    if "table" in emit or "curves" in emit:
        header = ["method", "dbi"] + (["accuracy"] if t_truth is not None else [])
        _write_csv(out / "baselines.csv", header, [[row[h] for h in header] for row in base["table"]])
    for row in base["table"]:
        acc = "" if row["accuracy"] is None else f"  accuracy {row['accuracy']:.4f}"
        dbi_txt = "n/a" if row["dbi"] is None else f"{row['dbi']:.4f}"
        print(f"{row['method']:<40} dbi {dbi_txt}{acc}")
    return bundle


def cmd_synth(args) -> dict:
    try:
        X_S, X_T, labels = make_rotated_pair(args.clusters, args.per_cluster, args.dim, args.angle,
                                             args.noise, args.seed, args.scale, args.spread)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    src = Path(args.source) if args.source else out / "source.csv"
    tgt = Path(args.target) if args.target else out / "target.csv"
    label = args.labels or "label"
    header = [f"x{j}" for j in range(X_S.shape[1])] + [label]
    for path, X in ((src, X_S), (tgt, X_T)):
        _write_csv(path, header, [list(map(float, x)) + [int(y)] for x, y in zip(X, labels)])
    print(f"wrote {src} and {tgt} ({X_S.shape[0]} rows, {X_S.shape[1]} features)")
    return {"source": str(src), "target": str(tgt)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcnmf", description="Bridge convex NMF transfer clustering")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, synth=False):
        p.add_argument("--source", help="source CSV" + (" to write" if synth else ""))
        p.add_argument("--target", help="target CSV" + (" to write" if synth else ""))
        p.add_argument("--labels", help="name of the label column")
        p.add_argument("--clusters", "-r", type=int, default=3 if synth else 2,
                       help="number of clusters")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        if synth:
            return
        p.add_argument("--iters", type=int, default=10, help="alignment iterates to evaluate")
        p.add_argument("--grid", default="default",
                       help="kernel grid: default, wide, linear, or e.g. 'gaussian=-5:5,poly=1:3,linear'")
        p.add_argument("--equalize", choices=EQUALIZE, default="subsample-source")
        p.add_argument("--emit", default="json,curves", help="comma-separated outputs to write")
        p.add_argument("--explain-cost", action="store_true", help="print the complexity estimate")
        p.add_argument("--nmf-iters", type=int, default=100, help="multiplicative-update iterations")
        p.add_argument("--restarts", type=int, default=5)
        p.add_argument("--ridge", type=float, default=None, help="alignment ridge (default: scale-relative)")

    p = sub.add_parser("transfer", help="run bridge convex NMF")
    common(p)
    p.add_argument("--with-baselines", action="store_true", help="also run the baselines")
    p.add_argument("--curve-accuracy", action="store_true",
                   help="re-solve every iterate to add accuracy to the curves (needs --labels)")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("baselines", help="convex NMF and kernel-alone baselines")
    common(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("synth", help="write a rotated Gaussian-mixture source/target pair")
    common(p, synth=True)
    p.add_argument("--per-cluster", type=int, default=20)
    p.add_argument("--dim", type=int, default=5)
    p.add_argument("--angle", type=float, default=30.0, help="rotation in degrees")
    p.add_argument("--noise", type=float, default=0.3, help="target noise standard deviation")
    p.add_argument("--spread", type=float, default=0.3, help="source cluster standard deviation")
    p.add_argument("--scale", type=float, default=1.0, help="simplex scale of the cluster means")
    p.set_defaults(func=cmd_synth)
    return parser


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, OSError) as exc:
        return _fail(2, exc)
    except (NoValidBridgeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(1, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
