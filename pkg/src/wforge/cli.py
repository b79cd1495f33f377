"""Command-line front end.

Commands: gen, train, rfe, eval, sweep, suite {bell|ghz|w|qutrit|converge|appendix}.
Every command writes into a run directory (``--out``, default under
``$WFORGE_OUT`` or ``./runs``) containing ``config.json``; failures leave an
``error.json`` there and exit with a nonzero status.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import experiments, io
from .data import Component, build_dataset, target_state
from .featurize import build_basis
from .qcore import ParticleSpec, projector
from .sampler import MaConfig
from .trainer import Dataset, TrainConfig
from .witness import classify, derive, rfe

log = logging.getLogger("wforge")

SUITES = ("bell", "ghz", "w", "qutrit", "converge", "appendix")
EXIT_FAIL = 1
EXIT_CRITERIA = 2


class CliError(Exception):
    pass


def _default_threads() -> int:
    return os.cpu_count() or 1


def _out_dir(args, command: str) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get("WFORGE_OUT", "runs"))
    return root / f"{command}-seed{args.seed}-{time.strftime('%Y%m%d-%H%M%S')}"


def _parse_range(text: str) -> tuple:
    """``"0..0.667"`` or a single number."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return float(lo), float(hi)
    v = float(text)
    return v, v


def _train_config(args, overrides: dict) -> TrainConfig:
    base = dict(overrides.get("train_config", {}))
    if getattr(args, "lam", None) is not None:
        base["lam"] = args.lam
    if getattr(args, "m", None) is not None:
        base["m"] = args.m
    if getattr(args, "prune", None) is not None:
        base["prune_threshold"] = args.prune
    base.setdefault("seed", args.seed)
    return TrainConfig.from_dict(base)


def _write_config(out: Path, record: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(experiments._jsonable(record), indent=2))


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- commands --------------------------------------------------------------------------------------

def cmd_gen(args, conf: dict) -> int:
    spec = ParticleSpec.parse(conf.get("spec", args.spec))
    count = int(conf.get("count", args.count))
    if count < 1:
        raise CliError("--count must be positive")
    kind = conf.get("class", args.klass)
    target = conf.get("target", args.target)
    p_range = tuple(conf.get("p_range", _parse_range(args.p)))
    ma = MaConfig(**conf.get("ma", {"alpha": args.alpha, "k": args.k}))
    comp = Component(kind, count, target, p_range, ma)
    basis = build_basis(spec)
    data, meta = build_dataset(basis, [comp], args.seed, args.threads)
    out = args.out_dir
    _write_config(out, {"command": "gen", "seed": args.seed, "spec": str(spec), "component": comp.to_dict(),
                        "csv": args.csv})
    io.write_features(out / "features.wfrg", data)
    files = {"features.wfrg": _file_digest(out / "features.wfrg")}
    if args.csv:
        io.write_features_csv(out / "features.csv", data, basis.labels)
        files["features.csv"] = _file_digest(out / "features.csv")
    manifest = {"seed": args.seed, "spec": str(spec), "basis_id": basis.basis_id, "basis_labels": basis.labels,
                "rows": len(data), "features": data.n_features, "component": comp.to_dict(),
                "generator_tags": [comp.kind], "sha256": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, ensure_ascii=False))
    print(f"wrote {len(data)} rows x {data.n_features} features to {out}")
    return 0


def _load_datasets(paths, basis):
    parts = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "features.wfrg"
        if not p.exists():
            raise CliError(f"missing dataset file {p}")
        d = io.read_features_csv(p, basis.basis_id) if p.suffix == ".csv" else io.read_features(p, basis.basis_id)
        if d.n_features != len(basis):
            raise CliError(f"{p} has {d.n_features} features; spec {basis.spec} needs {len(basis)}")
        parts.append(d)
    return Dataset.concat(parts)


def cmd_train(args, conf: dict) -> int:
    target = conf.get("target", args.target)
    spec, psi = target_state(target)
    basis = build_basis(spec)
    cfg = _train_config(args, conf)
    data = _load_datasets(conf.get("data", args.data), basis)
    calibration = conf.get("calibration", args.calibration)
    model, _ = derive(data, cfg, basis, psi, calibration=calibration, seed=args.seed)
    out = args.out_dir
    _write_config(out, {"command": "train", "seed": args.seed, "target": target, "data": [str(d) for d in args.data],
                        "train_config": cfg.to_dict(), "calibration": calibration})
    (out / "witnesses").mkdir(exist_ok=True)
    io.save_witness(out / "witnesses" / "witness.json", model)
    print(json.dumps({"terms": model.terms(), "p_max": experiments._fmt_p(model.p_max)}, ensure_ascii=False))
    return 0


def cmd_rfe(args, conf: dict) -> int:
    target = conf.get("target", args.target)
    spec, psi = target_state(target)
    basis = build_basis(spec)
    cfg = _train_config(args, conf)
    data = _load_datasets(conf.get("data", args.data), basis)
    calibration = conf.get("calibration", args.calibration)
    initial = io.load_witness(args.witness) if args.witness else None
    trace = rfe(data, cfg, basis, psi, min_terms=args.min_terms, p_floor=args.p_floor, calibration=calibration,
                initial=initial, seed=args.seed)
    out = args.out_dir
    _write_config(out, {"command": "rfe", "seed": args.seed, "target": target, "data": [str(d) for d in args.data],
                        "train_config": cfg.to_dict(), "calibration": calibration, "min_terms": args.min_terms,
                        "p_floor": args.p_floor})
    io.write_rfe_trace(out / "rfe.jsonl", trace)
    for step in (trace.initial, *trace.steps):
        print(f"{step.n_terms:3d} terms  p_max {experiments._fmt_p(step.p_max)}  removed {step.removed or '-'}")
    print(f"stop: {trace.stop_reason}")
    return 0


def _load_states(path: Path, spec: ParticleSpec) -> np.ndarray:
    """Density matrices (``.npy`` of shape (D, D) or (B, D, D), or kets (D,) / (B, D)), or named states."""
    D = spec.dim
    arr = np.load(path)
    if arr.shape == (D,):
        arr = projector(arr)[None]
    elif arr.ndim == 2 and arr.shape == (D, D):
        arr = arr[None]
    elif arr.ndim == 2 and arr.shape[1] == D:
        arr = np.einsum("bi,bj->bij", arr, arr.conj())
    if arr.ndim != 3 or arr.shape[1:] != (D, D):
        raise CliError(f"{path}: state shape {arr.shape} does not match spec {spec}")
    return arr


def cmd_eval(args, conf: dict) -> int:
    model = io.load_witness(args.witness)
    spec = ParticleSpec(*model.spec)
    states = []
    for item in args.states:
        if item == "mixed":
            states.append(("mixed", np.eye(spec.dim) / spec.dim))
        elif item.startswith("target:"):
            name = item.split(":", 1)[1]
            tspec, psi = target_state(name)
            if tspec != spec:
                raise CliError(f"target {name} lives in {tspec}, witness is for {spec}")
            states.append((name, projector(psi)))
        else:
            for i, rho in enumerate(_load_states(Path(item), spec)):
                states.append((f"{item}[{i}]", rho))
    rows = []
    for name, rho in states:
        side, y = classify(model, rho)
        rows.append({"state": name, "y": y, "side": side})
        print(f"{name}\ty={y:.12g}\t{side}")
    out = args.out_dir
    _write_config(out, {"command": "eval", "witness": str(args.witness), "states": args.states})
    (out / "eval.json").write_text(json.dumps(rows, indent=2))
    return 0


def cmd_sweep(args, conf: dict) -> int:
    target = conf.get("target", args.target)
    spec, psi = target_state(target)
    ws = {}
    for path in args.witness:
        m = io.load_witness(path)
        ws[Path(path).stem] = m
    grid = np.linspace(0.0, 1.0, args.points)
    if target == "w":
        res = experiments.run_sweep_suite(ws, grid, seed=args.seed)
    else:
        sweep = experiments.noise_sweep(ws, psi, grid)
        res = experiments.SuiteResult("sweep", args.seed, {"target": target})
        res.tables["sweep"] = sweep.table()
        res.values["crossings"] = dict(zip(sweep.names, sweep.crossings))
        res.check("curves affine within 1e-9", sweep.max_affine_error < 1e-9)
    res.config.update(witnesses=[str(p) for p in args.witness], points=args.points, target=target)
    experiments.write_run(res, args.out_dir)
    for name, x in res.values["crossings"].items():
        print(f"{name}\tcrossing {experiments._fmt_p(x)}")
    return 0 if res.passed else EXIT_CRITERIA


def cmd_suite(args, conf: dict) -> int:
    name = args.suite
    cfg = _train_config(args, conf)
    kw = {k: v for k, v in conf.items() if k not in ("train_config", "suite", "seed")}
    if name == "bell":
        res = experiments.run_bell_suite(args.seed, cfg=cfg, threads=args.threads, **kw)
    elif name in ("ghz", "w"):
        if "p_range" in kw:
            kw["p_range"] = tuple(kw["p_range"])
        res = experiments.run_tripartite_suite(name, args.seed, cfg=cfg, threads=args.threads, **kw)
        if name == "w" and "w" in res.traces:
            trace = res.traces["w"]
            sweep_ws = {f"svm_{s.n_terms}": s.model for s in (trace.initial, *trace.steps) if s.n_terms in (7, 8)}
            sweep = experiments.run_sweep_suite(sweep_ws, seed=args.seed)
            res.tables.update(sweep.tables)
            res.values["sweep_crossings"] = sweep.values["crossings"]
            res.criteria.extend(sweep.criteria)
    elif name == "qutrit":
        res = experiments.run_qutrit_suite(seed=args.seed, cfg=cfg, threads=args.threads, **kw)
    elif name == "converge":
        if "sizes" in kw:
            kw["sizes"] = tuple(kw["sizes"])
        res = experiments.run_convergence_suite(args.seed, long=args.long, threads=args.threads, cfg=cfg, **kw)
    else:
        if args.witness:
            kw["w_model"] = io.load_witness(args.witness)
        res = experiments.appendix_study(args.seed, cfg=cfg, threads=args.threads, **kw)
    res.config["threads"] = args.threads
    experiments.write_run(res, args.out_dir)
    for c in res.criteria:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}")
    print(f"report: {args.out_dir / 'report.json'}")
    return 0 if res.passed else EXIT_CRITERIA


# -- parser ------------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="run directory (default: $WFORGE_OUT/<command>-...)")
    common.add_argument("--threads", type=int, default=_default_threads())
    common.add_argument("--config", help="JSON file with command parameters (overrides flags)")
    common.add_argument("--lambda", dest="lam", type=float, help="L1 weight")
    common.add_argument("--m", type=int, choices=(1, 2), help="hinge exponent")
    common.add_argument("--prune", type=float, help="relative prune threshold")
    common.add_argument("--calibration", choices=("exact", "training", "none"), default="exact",
                        help="intercept calibration reference")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wforge", description="Sparse SVM entanglement witnesses")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a featurized dataset")
    g.add_argument("--spec", default="2x2", help="d x n, e.g. 2x3")
    g.add_argument("--class", dest="klass", default="haar-product",
                   choices=("haar-product", "bisep-pure", "bisep-mixed", "fullsep-mixed", "werner"))
    g.add_argument("--target", help="werner target name (phi+, ghz, w, qutrit-ghz, ...)")
    g.add_argument("--p", default="0", help="werner noise range lo..hi")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--alpha", type=float, default=0.1)
    g.add_argument("--k", type=int, default=4)
    g.add_argument("--csv", action="store_true", help="also write features.csv")

    for name in ("train", "rfe"):
        t = sub.add_parser(name, parents=[common], help=f"{name} a witness from datasets")
        t.add_argument("--target", required=True)
        t.add_argument("--data", nargs="+", required=True, help="gen run directories or feature files")
        if name == "rfe":
            t.add_argument("--witness", help="initial witness JSON (default: train one)")
            t.add_argument("--min-terms", type=int)
            t.add_argument("--p-floor", type=float)

    e = sub.add_parser("eval", parents=[common], help="classify states with a witness")
    e.add_argument("--witness", required=True)
    e.add_argument("states", nargs="+", help="'mixed', 'target:<name>' or .npy files of states")

    s = sub.add_parser("sweep", parents=[common], help="white-noise sweep of witnesses")
    s.add_argument("--target", default="w")
    s.add_argument("--witness", nargs="+", required=True)
    s.add_argument("--points", type=int, default=101)

    u = sub.add_parser("suite", parents=[common], help="run a reproduction suite")
    u.add_argument("suite", choices=SUITES)
    u.add_argument("--long", action="store_true", help="add the 3e7 convergence size")
    u.add_argument("--witness", help="reference W witness for the appendix suite")
    return p


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "rfe": cmd_rfe, "eval": cmd_eval, "sweep": cmd_sweep,
            "suite": cmd_suite}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args.out_dir = _out_dir(args, args.command if args.command != "suite" else f"suite-{args.suite}")
    try:
        conf = json.loads(Path(args.config).read_text()) if args.config else {}
        if args.command == "suite":
            conf.pop("command", None)
        return COMMANDS[args.command](args, conf)
    except Exception as exc:  # noqa: BLE001 - every failure becomes error.json
        args.out_dir.mkdir(parents=True, exist_ok=True)
        err = {"command": args.command, "error": type(exc).__name__, "message": str(exc)}
        (args.out_dir / "error.json").write_text(json.dumps(err, indent=2))
        print(f"error: {exc}", file=sys.stderr)
        if args.verbose:
            raise
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
