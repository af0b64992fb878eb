"""EVO search landscapes near the identity and success-vs-resources curves."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cesium import CesiumParams
from .config import derive_seed
from .models import ModelSpec
from .optimize import OptimizerOptions, SearchReport, SearchTask, multi_seed_search

log = logging.getLogger(__name__)

DEFAULT_H = np.linspace(0.05, 2.0, 5)
DEFAULT_S = np.linspace(0.05, 0.95, 5)
DEFAULT_DT = np.linspace(0.05, 1.6, 5)
DEFAULT_SCAN_SEEDS = 20


@dataclass
class ScanGrid:
    """Per-cell EVO search statistics over a (value, dt) grid.

    ``values`` holds ``h`` for TI (with ``s = 1``) or ``s`` for LMG. Arrays
    are indexed ``[i_value, i_dt]``.
    """

    family: str
    values: np.ndarray
    dts: np.ndarray
    distance: np.ndarray
    mean_fid: np.ndarray
    max_fid: np.ndarray
    n_seeds: int
    n_phi: int
    threshold: float
    fidelities: np.ndarray = field(repr=False, default=None)  # (n_values, n_dts, n_seeds)

    @property
    def distance_norm(self) -> np.ndarray:
        return self.distance / self.distance.max()

    def cells(self):
        for i, x in enumerate(self.values):
            for j, dt in enumerate(self.dts):
                yield i, j, float(x), float(dt)

    def metadata(self) -> dict:
        return {
            "family": self.family,
            "values": self.values.tolist(),
            "dts": self.dts.tolist(),
            "n_seeds": self.n_seeds,
            "n_phi": self.n_phi,
            "threshold": self.threshold,
            "note": "seeds per cell are a desk-scale reduction of a much larger study",
        }


def scan_model(family: str, x: float, dt: float) -> ModelSpec:
    if family == "ti":
        return ModelSpec.ti(x, 1.0, dt)
    if family == "lmg":
        return ModelSpec.lmg(x, dt)
    raise ValueError(f"scan family must be 'ti' or 'lmg', got {family!r}")


def identity_distance(w) -> float:
    """Frobenius (Hilbert-Schmidt) norm ``||W - I||``."""
    return float(np.linalg.norm(w - np.eye(w.shape[0])))


def _cell_seeds(seed: int, family: str, x: float, dt: float, n_seeds: int) -> list[int]:
    # keyed on the cell's coordinates, so reshaping the grid leaves cells unchanged
    return [derive_seed(seed, "scan", family, repr(float(x)), repr(float(dt)), k) for k in range(n_seeds)]


def _checkpoint_path(directory: Path, family, x, dt, n_phi, n_seeds, threshold, seed, options, params) -> Path:
    key = json.dumps([family, repr(float(x)), repr(float(dt)), n_phi, n_seeds, threshold, seed, asdict(options), asdict(params)])
    return directory / f"cell_{derive_seed(0, key):016x}.json"


def scan_near_identity(
    family: str,
    values: Sequence[float],
    dts: Sequence[float],
    n_phi: int = 20,
    n_seeds: int = DEFAULT_SCAN_SEEDS,
    threshold: float = 0.99999,
    seed: int = 0,
    params: CesiumParams | None = None,
    options: OptimizerOptions | None = None,
    parallelism: int | None = None,
    checkpoint_dir=None,
    progress: Callable[[int, int, dict], None] | None = None,
) -> ScanGrid:
    """Run ``n_seeds`` EVO searches per grid cell and record final fidelities.

    Finished cells are stored in ``checkpoint_dir`` (if given) and reloaded
    instead of recomputed, so an interrupted scan can be resumed.
    """
    values = np.asarray(values, dtype=float)
    dts = np.asarray(dts, dtype=float)
    if values.size == 0 or dts.size == 0:
        raise ValueError("scan grids must be non-empty")
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    params = params or CesiumParams()
    options = replace(options or OptimizerOptions(), threshold=threshold)
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    shape = (values.size, dts.size)
    dist = np.empty(shape)
    fids = np.empty(shape + (n_seeds,))
    n_cells = values.size * dts.size
    done = 0
    for i, x in enumerate(values):
        for j, dt in enumerate(dts):
            w = scan_model(family, x, dt).propagator()
            dist[i, j] = identity_distance(w)
            path = _checkpoint_path(ckdir, family, x, dt, n_phi, n_seeds, threshold, seed, options, params) if ckdir else None
            if path is not None and path.exists():
                cell = json.loads(path.read_text())
                fids[i, j] = cell["fidelities"]
            else:
                task = SearchTask("evo", w, n_phi, params, options)
                rep = multi_seed_search(task, n_seeds, threshold, parallelism, seeds=_cell_seeds(seed, family, x, dt, n_seeds))
                fids[i, j] = rep.fidelities
                cell = {"value": float(x), "dt": float(dt), "distance": dist[i, j], "fidelities": rep.fidelities}
                if path is not None:
                    tmp = path.with_suffix(".tmp")
                    tmp.write_text(json.dumps(cell))
                    tmp.replace(path)
            done += 1
            log.info("cell %d/%d value=%g dt=%g mean=%.5f", done, n_cells, x, dt, fids[i, j].mean())
            if progress is not None:
                progress(done, n_cells, cell)

    return ScanGrid(
        family=family,
        values=values,
        dts=dts,
        distance=dist,
        mean_fid=fids.mean(axis=2),
        max_fid=fids.max(axis=2),
        n_seeds=n_seeds,
        n_phi=n_phi,
        threshold=threshold,
        fidelities=fids,
    )


@dataclass
class SuccessCurve:
    n_phi: list[int]
    fractions: list[float]
    reports: list[SearchReport] = field(repr=False, default_factory=list)

    def as_dict(self) -> dict:
        return dict(zip(self.n_phi, self.fractions))


def threshold_success_curve(
    target,
    n_phi_values: Sequence[int],
    n_seeds: int,
    threshold: float,
    seed: int = 0,
    method: str = "conventional",
    params: CesiumParams | None = None,
    options: OptimizerOptions | None = None,
    parallelism: int | None = None,
) -> SuccessCurve:
    """Fraction of seeds reaching ``threshold`` for each waveform length."""
    n_phi_values = [int(n) for n in n_phi_values]
    if not n_phi_values:
        raise ValueError("n_phi_values must be non-empty")
    if method not in ("conventional", "evo"):
        raise ValueError(f"unknown method {method!r}")
    params = params or CesiumParams()
    options = replace(options or OptimizerOptions(), threshold=threshold)
    reports = []
    for n in n_phi_values:
        seeds = [derive_seed(seed, "curve", method, n, k) for k in range(n_seeds)]
        reports.append(multi_seed_search(SearchTask(method, np.asarray(target), n, params, options), n_seeds, threshold, parallelism, seeds))
    return SuccessCurve(n_phi_values, [r.success_fraction for r in reports], reports)
