"""Command-line front end.

Every subcommand accepts ``--config FILE`` (JSON) and flag overrides. The
effective configuration is written next to the outputs as ``config.json``,
and rerunning with ``--config out/config.json`` reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .aqs import ErrorModel, TargetMismatchError, randomized_sequence_run, run_aqs
from .cesium import CesiumParams
from .config import RunConfig, derive_seed
from .landscape import DEFAULT_DT, DEFAULT_H, DEFAULT_S, DEFAULT_SCAN_SEEDS, scan_near_identity
from .models import ModelSpec, model_observables, phase_portrait, sphere_grid, write_trajectories_csv
from .optimize import OptimizerOptions, SearchTask, default_workers, multi_seed_search
from .qmath import coherent_spin_state, haar_random_state

log = logging.getLogger("csaqs")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON config file; flags override its entries")
    p.add_argument("--master-seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes (default: $CSAQS_WORKERS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=["ti", "lmg", "qkt", "identity"])
    g.add_argument("--h", type=float)
    g.add_argument("--s", type=float)
    g.add_argument("--dt", type=float)
    g.add_argument("--p", type=float)
    g.add_argument("--kappa", type=float)


def _add_errors(p):
    g = p.add_argument_group("error model")
    g.add_argument("--no-errors", action="store_true", help="ideal device")
    g.add_argument("--offset", type=float, dest="delta_omega_offset")
    g.add_argument("--spread", type=float, dest="delta_omega_spread")
    g.add_argument("--amp-error", type=float, dest="amplitude_scale_error")
    g.add_argument("--phase-noise", type=float, dest="phase_noise_sigma")
    g.add_argument("--prep-error", type=float, dest="prep_infidelity")
    g.add_argument("--readout-noise", type=float, dest="readout_noise_sigma")
    g.add_argument("--ensemble", type=int, dest="ensemble_size")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csaqs", description="Cesium-qudit analog quantum simulation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="multi-seed waveform search")
    _add_common(p)
    _add_model(p)
    p.add_argument("--method", choices=["conventional", "evo"])
    p.add_argument("--nphi", type=int, dest="n_phi")
    p.add_argument("--seeds", type=int, dest="n_seeds")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--robust", action="store_true", default=None)
    p.add_argument("--robust-delta", type=float)

    p = sub.add_parser("simulate", help="stroboscopic simulation record")
    _add_common(p)
    _add_model(p)
    _add_errors(p)
    p.add_argument("--solution", type=Path, action="append", dest="solutions", help="solution file (repeat for randomized mode)")
    p.add_argument("--mode", choices=["fidelity", "observable", "randomized", "oracle"])
    p.add_argument("--K", type=int, dest="K")
    p.add_argument("--initial", help="haar:SEED | basis:INDEX | coherent:THETA,PHI")
    p.add_argument("--observable", action="append", dest="observables", help="observable name, e.g. sigma2z or Jz")

    p = sub.add_parser("scan", help="EVO landscape over a model grid")
    _add_common(p)
    p.add_argument("--family", choices=["ti", "lmg"])
    p.add_argument("--values", type=_floats, help="comma-separated h (TI) or s (LMG) values")
    p.add_argument("--dts", type=_floats, help="comma-separated time steps")
    p.add_argument("--nphi", type=int, dest="n_phi")
    p.add_argument("--seeds", type=int, dest="n_seeds")
    p.add_argument("--threshold", type=float)
    p.add_argument("--max-iters", type=int)

    p = sub.add_parser("phase-portrait", help="classical kicked-top trajectories")
    _add_common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--points", type=int, dest="n_points")
    p.add_argument("--steps", type=int, dest="n_steps")

    p = sub.add_parser("verify", help="re-check a solution file's fidelity claim")
    p.add_argument("file", type=Path)
    p.add_argument("-v", "--verbose", action="store_true")
    return parser


# ---------------------------------------------------------------------------
# effective configuration

DEFAULTS = {
    "optimize": {
        "model": {"family": "qkt", "p": 1.0, "kappa": 7.0},
        "optimizer": {"method": "evo", "n_phi": 20, "n_seeds": 10, "threshold": 0.99999, "max_iters": 5000, "robust": False},
        "output": {"dir": "csaqs_optimize"},
    },
    "simulate": {
        "simulation": {"mode": "fidelity", "K": 100, "initial": "haar:0", "observables": None, "solutions": []},
        "errors": ErrorModel().to_dict(),
        "output": {"dir": "csaqs_simulate"},
    },
    "scan": {
        "scan": {"family": "ti", "values": None, "dts": DEFAULT_DT.tolist(), "n_phi": 20, "n_seeds": DEFAULT_SCAN_SEEDS, "threshold": 0.99999, "max_iters": 5000},
        "output": {"dir": "csaqs_scan"},
    },
    "phase-portrait": {
        "portrait": {"p": 1.0, "kappa": 7.0, "n_points": 50, "n_steps": 500},
        "output": {"dir": "csaqs_portrait"},
    },
}

MODEL_KEYS = ("h", "s", "dt", "p", "kappa")


def _overrides(args) -> dict:
    a = vars(args)
    o: dict = {"master_seed": a.get("master_seed"), "output": {"dir": str(args.out) if a.get("out") else None}}
    if a.get("model") or any(a.get(k) is not None for k in MODEL_KEYS if args.command != "phase-portrait"):
        if args.command != "phase-portrait":
            o["model"] = {"family": a.get("model"), **{k: a.get(k) for k in MODEL_KEYS}}
    if args.command == "optimize":
        o["optimizer"] = {k: a.get(k) for k in ("method", "n_phi", "n_seeds", "threshold", "max_iters", "robust", "robust_delta")}
    elif args.command == "simulate":
        sols = [str(s) for s in args.solutions] if args.solutions else None
        o["simulation"] = {"mode": a.get("mode"), "K": a.get("K"), "initial": a.get("initial"), "observables": a.get("observables"), "solutions": sols}
        if args.no_errors:
            o["errors"] = ErrorModel.none().to_dict()
        o.setdefault("errors", {})
        for f in ErrorModel().to_dict():
            if a.get(f) is not None:
                o["errors"][f] = a[f]
    elif args.command == "scan":
        o["scan"] = {k: a.get(k) for k in ("family", "values", "dts", "n_phi", "n_seeds", "threshold", "max_iters")}
    elif args.command == "phase-portrait":
        o["portrait"] = {k: a.get(k) for k in ("p", "kappa", "n_points", "n_steps")}
    return o


def effective_config(args) -> RunConfig:
    base = RunConfig(args.command, 0, json.loads(json.dumps(DEFAULTS[args.command])))
    if args.config is not None:
        try:
            loaded = RunConfig.load(args.config)
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if loaded.command != args.command:
            raise ConfigError(f"config is for '{loaded.command}', not '{args.command}'")
        base = base.merged({"master_seed": loaded.master_seed, **loaded.blocks})
        if "model" in loaded.blocks:
            base.blocks["model"] = dict(loaded.blocks["model"])
    o = _overrides(args)
    if "model" in o and o["model"].get("family"):
        # switching family drops the previous family's parameters
        base.blocks["model"] = {}
    return base.merged(o)


def _model_from(block: dict) -> ModelSpec:
    family = block.get("family")
    keep = {"ti": ("h", "s", "dt"), "lmg": ("s", "dt"), "qkt": ("p", "kappa", "torsion_first"), "identity": ()}
    if family not in keep:
        raise ConfigError(f"unknown model family {family!r}")
    missing = [k for k in keep[family] if k != "torsion_first" and block.get(k) is None]
    if missing:
        raise ConfigError(f"model '{family}' needs {', '.join('--' + m for m in missing)}")
    try:
        return ModelSpec(family, **{k: block[k] for k in keep[family] if k in block})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.blocks["output"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _workers(args) -> int:
    return args.workers or default_workers()


# ---------------------------------------------------------------------------
# subcommands


def cmd_optimize(args) -> int:
    cfg = effective_config(args)
    model = _model_from(cfg.blocks["model"])
    ob = cfg.blocks["optimizer"]
    if ob["method"] not in ("conventional", "evo"):
        raise ConfigError(f"unknown method {ob['method']!r}")
    if ob["n_phi"] < 1 or ob["n_seeds"] < 1:
        raise ConfigError("--nphi and --seeds must be positive")
    params = CesiumParams(**cfg.blocks.get("cesium", {}))
    opt_kw = {k: ob[k] for k in ("threshold", "max_iters", "robust", "robust_delta") if ob.get(k) is not None}
    try:
        options = OptimizerOptions(**opt_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    target = model.propagator()
    seeds = [derive_seed(cfg.master_seed, "optimize", k) for k in range(ob["n_seeds"])]
    task = SearchTask(ob["method"], target, ob["n_phi"], params, options)
    report = multi_seed_search(task, ob["n_seeds"], options.threshold, _workers(args), seeds)

    out = _out_dir(cfg)
    cfg.save(out / "config.json")
    sol_dir = out / "solutions"
    sol_dir.mkdir(exist_ok=True)
    for k, sol in enumerate(report.results):
        io.save_solution(sol_dir / f"seed_{k:04d}.json", sol, target, model)
    best = report.best
    io.save_solution(sol_dir / "best.json", best, target, model)
    io.save_waveform(sol_dir / "best_waveform.txt", best.waveform, params)
    io.save_report(out / "report.json", report, {"model": model.to_dict(), "method": ob["method"], "n_phi": ob["n_phi"]}, timing=False)
    io.write_metadata(out / "timing.json", {"wall_time_s": report.wall_time, "workers": _workers(args)})
    ok = best.achieved_fidelity >= options.threshold
    print(f"best fidelity {best.achieved_fidelity:.10f} (seed {best.seed}); {report.success_count}/{len(seeds)} reached {options.threshold}")
    return 0 if ok else 1


def _initial_state(text: str, seed: int):
    kind, _, arg = text.partition(":")
    try:
        if kind == "haar":
            return haar_random_state(16, derive_seed(seed, "initial", int(arg or 0)))
        if kind == "basis":
            psi = np.zeros(16, dtype=complex)
            psi[int(arg)] = 1.0
            return psi
        if kind == "coherent":
            theta, phi = _floats(arg)
            return coherent_spin_state(7.5, theta, phi)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad initial state {text!r}: {exc}") from exc
    raise ConfigError(f"initial state must be haar:SEED, basis:INDEX or coherent:THETA,PHI, got {text!r}")


def cmd_simulate(args) -> int:
    cfg = effective_config(args)
    sb = cfg.blocks["simulation"]
    mode = sb["mode"]
    errors = ErrorModel(**cfg.blocks["errors"])
    paths = sb.get("solutions") or []
    solutions, model = [], None
    for p in paths:
        try:
            sol, _, m = io.load_solution(p)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load solution {p}: {exc}") from exc
        solutions.append(sol)
        model = model or m
    if "model" in cfg.blocks:
        model = _model_from(cfg.blocks["model"])
    if model is None:
        raise ConfigError("no model given (use --model or a solution file that records one)")
    if mode == "randomized" and len(solutions) < 2:
        raise ConfigError("randomized mode needs at least two --solution files")
    if mode in ("fidelity", "observable") and len(solutions) != 1:
        raise ConfigError(f"{mode} mode needs exactly one --solution file")
    K = sb["K"]
    if K is None or K < 1:
        raise ConfigError("--K must be >= 1")

    available = model_observables(model)
    names = sb.get("observables")
    if names is None:
        names = list(available) if mode == "observable" else []
    unknown = [n for n in names if n not in available]
    if unknown:
        raise ConfigError(f"unknown observable(s) {unknown}; choose from {sorted(available)}")
    obs = {n: available[n] for n in names}

    initial = _initial_state(sb["initial"], cfg.master_seed)
    run_seed = derive_seed(cfg.master_seed, "simulate", mode)
    try:
        if mode == "oracle":
            rec = run_aqs(None, model, initial, K, errors, obs, run_seed)
        elif mode == "randomized":
            rec = randomized_sequence_run(solutions, model, initial, K, errors, obs, run_seed)
        else:
            rec = run_aqs(solutions[0], model, initial, K, errors, obs, run_seed)
    except TargetMismatchError as exc:
        raise ConfigError(f"solution does not match model {model.label()}: {exc}") from exc

    out = _out_dir(cfg)
    cfg.save(out / "config.json")
    io.write_record_csv(out / "record.csv", rec)
    io.write_metadata(out / "metadata.json", {**rec.metadata, "config": cfg.to_dict()})
    print(f"F_AQS({K}) = {rec.fidelity[-1]:.6f}")
    return 0


def cmd_scan(args) -> int:
    cfg = effective_config(args)
    sc = cfg.blocks["scan"]
    family = sc["family"]
    if family not in ("ti", "lmg"):
        raise ConfigError("scan family must be ti or lmg")
    values = sc["values"] if sc["values"] is not None else (DEFAULT_H if family == "ti" else DEFAULT_S).tolist()
    if not values or not sc["dts"]:
        raise ConfigError("scan grids must be non-empty")
    out = _out_dir(cfg)
    cfg.save(out / "config.json")
    options = OptimizerOptions(max_iters=sc["max_iters"], threshold=sc["threshold"])

    def progress(done, total, cell):
        print(f"[{done}/{total}] value={cell['value']:g} dt={cell['dt']:g} mean={np.mean(cell['fidelities']):.5f}", file=sys.stderr, flush=True)

    try:
        grid = scan_near_identity(
            family, values, sc["dts"], sc["n_phi"], sc["n_seeds"], sc["threshold"], cfg.master_seed,
            options=options, parallelism=_workers(args), checkpoint_dir=out / "checkpoints", progress=progress,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    io.write_scan_csv(out / "scan.csv", grid)
    io.write_metadata(out / "metadata.json", {**grid.metadata(), "config": cfg.to_dict()})
    return 0


def cmd_phase_portrait(args) -> int:
    cfg = effective_config(args)
    pb = cfg.blocks["portrait"]
    if pb["n_points"] < 1 or pb["n_steps"] < 0:
        raise ConfigError("--points must be positive and --steps non-negative")
    pts = sphere_grid(pb["n_points"], seed=derive_seed(cfg.master_seed, "portrait"))
    trajs = phase_portrait(pb["p"], pb["kappa"], pts, pb["n_steps"])
    out = _out_dir(cfg)
    cfg.save(out / "config.json")
    write_trajectories_csv(out / "trajectories.csv", trajs)
    return 0


def cmd_verify(args) -> int:
    try:
        sol, _, model = io.load_solution(args.file, verify=False)
        io.load_solution(args.file, verify=True)
    except io.VerificationError as exc:
        print(f"FAILED: {exc}")
        return 1
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read {args.file}: {exc}") from exc
    where = f" for {model.label()}" if model else ""
    print(f"OK: fidelity {sol.achieved_fidelity:.12f}{where} reproduces within {io.VERIFY_TOL:g}")
    return 0


COMMANDS = {
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "scan": cmd_scan,
    "phase-portrait": cmd_phase_portrait,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
