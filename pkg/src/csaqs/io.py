"""File formats: waveforms, solutions, simulation records and scan grids.

Floats are written with 17 significant digits (or as JSON numbers, which
Python emits with a round-trip repr), so every numeric payload survives a
write/read cycle bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .cesium import CesiumParams, ControlWaveform
from .models import ModelSpec
from .optimize import ControlSolution, EvoSolution, solution_fidelity, state_map_fidelity, target_hash

WAVEFORM_MAGIC = "# csaqs-waveform 1"
SOLUTION_FORMAT = "csaqs-solution-1"
VERIFY_TOL = 1e-9


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# waveforms


def dumps_waveform(w: ControlWaveform, params: CesiumParams | None = None) -> str:
    lines = [WAVEFORM_MAGIC, f"# step_duration: {_fmt(w.step_duration)}", f"# n_steps: {w.n_steps}"]
    if params is not None:
        for f in fields(params):
            lines.append(f"# {f.name}: {_fmt(getattr(params, f.name))}")
    lines.append("# columns: phi_rfx phi_rfy phi_uw")
    lines += [" ".join(_fmt(x) for x in row) for row in w.phases]
    return "\n".join(lines) + "\n"


def loads_waveform(text: str) -> tuple[ControlWaveform, CesiumParams | None]:
    header: dict[str, str] = {}
    rows = []
    lines = text.splitlines()
    if not lines or lines[0].strip() != WAVEFORM_MAGIC:
        raise ValueError("not a waveform file")
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            header[key.strip()] = value.strip()
        else:
            rows.append([float(x) for x in line.split()])
    n = int(header.get("n_steps", len(rows)))
    if n != len(rows):
        raise ValueError(f"header says {n} steps, found {len(rows)}")
    wf = ControlWaveform(np.array(rows), float(header["step_duration"]))
    names = {f.name for f in fields(CesiumParams)}
    pvals = {k: float(v) for k, v in header.items() if k in names}
    params = CesiumParams(**pvals) if set(pvals) == names else None
    return wf, params


def save_waveform(path, w: ControlWaveform, params: CesiumParams | None = None):
    Path(path).write_text(dumps_waveform(w, params))


def load_waveform(path):
    return loads_waveform(Path(path).read_text())


# ---------------------------------------------------------------------------
# solutions


def _cplx_to_json(a):
    a = np.asarray(a, dtype=complex)
    return {"shape": list(a.shape), "re": a.real.ravel().tolist(), "im": a.imag.ravel().tolist()}


def _cplx_from_json(d):
    return (np.array(d["re"]) + 1j * np.array(d["im"])).reshape(d["shape"])


def solution_to_dict(solution, target, model: ModelSpec | None = None, target_state=None) -> dict:
    is_evo = isinstance(solution, EvoSolution)
    d = {
        "format": SOLUTION_FORMAT,
        "kind": "evo" if is_evo else ("state" if solution.kind == "state" else "conventional"),
        "target_hash": solution.target_id,
        "model": model.to_dict() if model is not None else None,
        "target": _cplx_to_json(target),
        "waveform": {"step_duration": solution.waveform.step_duration, "phases": solution.waveform.phases.tolist()},
        "v": solution.v.tolist() if is_evo else None,
        "achieved_fidelity": solution.achieved_fidelity,
        "seed": solution.seed,
        "iterations": solution.iterations,
        "robust": solution.robust,
        "robust_delta": solution.robust_delta,
        "params": asdict(solution.params),
    }
    if target_state is not None:
        d["target_state"] = _cplx_to_json(target_state)
    return d


class VerificationError(ValueError):
    """A stored fidelity claim does not reproduce."""


def solution_from_dict(d: dict, verify: bool = True):
    """Rebuild a solution; returns ``(solution, target, model)``.

    With ``verify`` the stored fidelity is recomputed from the waveform and
    must agree within 1e-9.
    """
    if d.get("format") != SOLUTION_FORMAT:
        raise ValueError("not a solution file")
    params = CesiumParams(**d["params"])
    wf = ControlWaveform(np.array(d["waveform"]["phases"]), d["waveform"]["step_duration"])
    target = _cplx_from_json(d["target"])
    model = ModelSpec.from_dict(d["model"]) if d.get("model") else None
    common = dict(
        waveform=wf,
        achieved_fidelity=d["achieved_fidelity"],
        target_id=d["target_hash"],
        seed=d["seed"],
        iterations=d["iterations"],
        robust=d["robust"],
        robust_delta=d["robust_delta"],
        params=params,
    )
    if d["kind"] == "evo":
        sol = EvoSolution(v=np.array(d["v"]), **common)
    else:
        sol = ControlSolution(kind="state" if d["kind"] == "state" else "unitary", **common)
    if target_hash(target) != sol.target_id:
        raise VerificationError("stored target does not match its hash")
    if model is not None and getattr(sol, "kind", "unitary") != "state" and target_hash(model.propagator()) != sol.target_id:
        raise VerificationError("model propagator does not match the solution's target hash")
    if verify:
        if getattr(sol, "kind", "unitary") == "state":
            fid = state_map_fidelity(sol, _cplx_from_json(d["target_state"]))
        else:
            fid = solution_fidelity(sol, target)
        if abs(fid - sol.achieved_fidelity) > VERIFY_TOL:
            raise VerificationError(f"stored fidelity {sol.achieved_fidelity!r} but recomputed {fid!r}")
    return sol, target, model


def save_solution(path, solution, target, model: ModelSpec | None = None, target_state=None):
    Path(path).write_text(json.dumps(solution_to_dict(solution, target, model, target_state), indent=1) + "\n")


def load_solution(path, verify: bool = True):
    return solution_from_dict(json.loads(Path(path).read_text()), verify=verify)


def save_report(path, report, extra: dict | None = None, timing: bool = True):
    """Write a search summary; ``timing=False`` leaves out the wall time so reruns are byte-identical."""
    d = {
        "threshold": report.threshold,
        "success_count": report.success_count,
        "n_seeds": len(report.fidelities),
        "best_seed": report.best.seed,
        "best_fidelity": report.best.achieved_fidelity,
        "seeds": report.seeds,
        "fidelities": report.fidelities,
        "iterations": report.iterations,
    }
    if timing:
        d["wall_time_s"] = report.wall_time
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1) + "\n")
    return d


# ---------------------------------------------------------------------------
# simulation records


def write_record_csv(path, record):
    names = list(record.observables)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["k", "F_AQS"] + (["F_measured"] if record.measured_fidelity is not None else []) + names
        w.writerow(head)
        for k in range(record.K + 1):
            row = [k, _fmt(record.fidelity[k])]
            if record.measured_fidelity is not None:
                row.append(_fmt(record.measured_fidelity[k]))
            row += [_fmt(record.observables[n][k]) for n in names]
            w.writerow(row)


def read_record_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0]}


def write_metadata(path, metadata: dict):
    Path(path).write_text(json.dumps(metadata, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o)}")


# ---------------------------------------------------------------------------
# scans


SCAN_COLUMNS = ["h_or_s", "dt", "distance_norm", "mean_fid", "max_fid", "n_seeds"]


def write_scan_csv(path, grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for i, x in enumerate(grid.values):
            for j, dt in enumerate(grid.dts):
                w.writerow(
                    [
                        _fmt(x),
                        _fmt(dt),
                        _fmt(grid.distance_norm[i, j]),
                        _fmt(grid.mean_fid[i, j]),
                        _fmt(grid.max_fid[i, j]),
                        grid.n_seeds,
                    ]
                )


def read_scan_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
