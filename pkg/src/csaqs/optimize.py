"""Waveform search: Conventional and EVO control, robust averaging, state maps.

Both objectives reduce to the overlap ``T = Tr(W'^dag U(phi))`` for some
effective target ``W'`` (``W' = V^dag W V`` for EVO), so a single routine
returns the overlap and its exact phase gradient. EVO adds the gradient in
the Gell-Mann coordinates ``v`` of ``V = exp(i sum_j v_j L_j)``.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .cesium import (
    DIM,
    CesiumParams,
    ControlWaveform,
    IDX_33,
    control_generators,
    prefix_suffix,
    random_waveform,
    step_spectra,
    waveform_propagator,
)
from .qmath import (
    dagger,
    divided_difference_exp,
    gellmann_basis,
    gellmann_combination,
    unitary_fidelity,
    DimensionError,
)

log = logging.getLogger(__name__)

N_GELLMANN = DIM * DIM - 1
DEFAULT_ROBUST_DELTA = 2 * np.pi * 4e-4


def target_hash(w) -> str:
    """Short content hash of a target matrix (rounded to 1e-10)."""
    w = np.asarray(w, dtype=complex)
    rounded = np.round(w, 10) + 0.0  # drop negative zeros
    return hashlib.sha256(rounded.tobytes()).hexdigest()[:16]


def _check_target(w):
    w = np.asarray(w, dtype=complex)
    if w.shape != (DIM, DIM):
        raise DimensionError(f"target must be {DIM}x{DIM}, got {w.shape}")
    return w


# ---------------------------------------------------------------------------
# core overlap and gradients


def overlap_and_gradient(phases, target, params: CesiumParams, gens=None):
    """``T = Tr(target^dag U)`` and ``dT/dphi`` with shape ``(N, 3)``.

    ``target`` need not be unitary (state maps use a rank-one target).
    """
    gens = gens or control_generators(params)
    phases = np.asarray(phases, dtype=float)
    sd = step_spectra(phases, params, gens)
    pre, suf, total = prefix_suffix(sd.steps)
    t = np.vdot(target, total)
    # dT = Tr(B_i dU_i) with B_i = R_i target^dag L_i and
    # dU_i = Q (G o Q^dag dH Q) Q^dag, so dT = Tr(K_i dH) with K_i = Q (Bt^T o G)^T Q^dag
    q, qd = sd.evecs, dagger(sd.evecs)
    b = pre @ dagger(target) @ suf
    bt = qd @ b @ q
    k = q @ (bt * np.swapaxes(sd.gamma, -1, -2)) @ qd
    n = phases.shape[0]
    gen_mats = np.concatenate([gens.cos_terms, gens.sin_terms]).reshape(6, -1)
    proj = np.swapaxes(k, -1, -2).reshape(n, -1) @ gen_mats.T
    c, s = np.cos(phases), np.sin(phases)
    dt = -s * proj[:, :3] + c * proj[:, 3:]
    return t, dt, total


def _robust_offsets(params: CesiumParams, robust_delta: float | None):
    if not robust_delta:
        return [params]
    return [params.with_offset(params.delta_omega + robust_delta), params.with_offset(params.delta_omega - robust_delta)]


def fidelity_value_grad(phases, target, params, robust_delta=None, norm=None):
    """``|T|^2 / norm`` (averaged over the robust offsets) and its phase gradient."""
    norm = DIM**2 if norm is None else norm
    value = 0.0
    grad = np.zeros_like(np.asarray(phases, dtype=float))
    plist = _robust_offsets(params, robust_delta)
    for p in plist:
        t, dt, _ = overlap_and_gradient(phases, target, p)
        value += abs(t) ** 2 / norm
        grad += 2 * np.real(np.conj(t) * dt) / norm
    return value / len(plist), grad / len(plist)


def basis_map(v):
    """``V = exp(i A)`` with ``A = sum_j v_j L_j`` over the 16-dim Gell-Mann basis."""
    a = gellmann_combination(v, DIM)
    w, q = np.linalg.eigh(a)
    return (q * np.exp(1j * w)) @ dagger(q)


def _basis_map_spectral(v):
    a = gellmann_combination(v, DIM)
    w, q = np.linalg.eigh(a)
    vm = (q * np.exp(1j * w)) @ dagger(q)
    gamma = divided_difference_exp(w, 1.0, sign=1.0)
    return vm, q, gamma


def _gellmann_matrix():
    return gellmann_basis(DIM).reshape(N_GELLMANN, DIM * DIM)


def evo_value_grad(phases, v, target, params, robust_delta=None):
    """EVO fidelity ``|Tr(W^dag V U V^dag)|^2 / d^2`` and gradients in phi and v."""
    vm, q, gamma = _basis_map_spectral(v)
    w_eff = dagger(vm) @ target @ vm
    norm = DIM**2
    value = 0.0
    g_phi = np.zeros_like(np.asarray(phases, dtype=float))
    g_v = np.zeros(N_GELLMANN)
    lmat = _gellmann_matrix()
    plist = _robust_offsets(params, robust_delta)
    for p in plist:
        t, dt, u = overlap_and_gradient(phases, w_eff, p)
        value += abs(t) ** 2 / norm
        g_phi += 2 * np.real(np.conj(t) * dt) / norm
        # dT/dv_j = Tr(W^dag dV U V^dag) + Tr(W^dag V U dV^dag), dV = Q (G o Q^dag L_j Q) Q^dag
        pm = u @ dagger(vm) @ dagger(target)
        rm = dagger(target) @ vm @ u
        m = (dagger(q) @ pm @ q).T * gamma + (dagger(q) @ rm @ q).T * np.conj(gamma.T)
        k = np.conj(q) @ m @ q.T
        dtv = lmat @ k.ravel()
        g_v += 2 * np.real(np.conj(t) * dtv) / norm
    n = len(plist)
    return value / n, g_phi / n, g_v / n


# ---------------------------------------------------------------------------
# public objectives


def objective_conventional(w: ControlWaveform, target, params: CesiumParams, gradient: bool = False):
    """``|Tr(W^dag U)|^2/d^2``; with ``gradient`` also the ``(N, 3)`` phase gradient."""
    target = _check_target(target)
    if not gradient:
        return unitary_fidelity(target, waveform_propagator(w, params))
    return fidelity_value_grad(w.phases, target, params)


def objective_evo(w: ControlWaveform, v, target, params: CesiumParams, gradient: bool = False):
    """EVO objective; with ``gradient`` returns ``(value, d/dphi, d/dv)``."""
    target = _check_target(target)
    v = np.asarray(v, dtype=float)
    if v.shape != (N_GELLMANN,):
        raise DimensionError(f"v must have {N_GELLMANN} entries")
    if not gradient:
        vm = basis_map(v)
        return unitary_fidelity(target, vm @ waveform_propagator(w, params) @ dagger(vm))
    return evo_value_grad(w.phases, v, target, params)


def objective_robust(base_objective: Callable, delta_omega: float) -> Callable:
    """Two-point average of ``base_objective`` over bias offsets ``+/- delta_omega``.

    ``base_objective`` must accept ``params`` as a keyword. Gradient tuples
    are averaged element-wise.
    """
    if delta_omega < 0:
        raise ValueError("delta_omega must be non-negative")

    def robust(*args, params: CesiumParams, **kwargs):
        vals = [base_objective(*args, params=p, **kwargs) for p in _robust_offsets(params, delta_omega or None)]
        if isinstance(vals[0], tuple):
            return tuple(sum(parts) / len(vals) for parts in zip(*vals))
        return sum(vals) / len(vals)

    return robust


# ---------------------------------------------------------------------------
# search


@dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 5000
    threshold: float = 0.99999
    seed: int = 0
    method: str = "lbfgs"  # or "gradient"
    robust: bool = False
    robust_delta: float = DEFAULT_ROBUST_DELTA
    stall_window: int = 50
    stall_tol: float = 1e-10
    v_sigma: float = 0.1

    def __post_init__(self):
        if self.method not in ("lbfgs", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")


@dataclass
class ControlSolution:
    waveform: ControlWaveform
    achieved_fidelity: float
    target_id: str
    robust: bool
    seed: int
    iterations: int
    robust_delta: float = 0.0
    params: CesiumParams = field(default_factory=CesiumParams)
    kind: str = "unitary"  # or "state"
    history: list = field(default_factory=list, repr=False)


@dataclass
class EvoSolution:
    waveform: ControlWaveform
    v: np.ndarray
    achieved_fidelity: float
    target_id: str
    seed: int
    iterations: int
    robust: bool = False
    robust_delta: float = 0.0
    params: CesiumParams = field(default_factory=CesiumParams)
    history: list = field(default_factory=list, repr=False)

    def basis_map(self):
        return basis_map(self.v)


class _Stop(Exception):
    pass


class _Tracker:
    """Records accepted iterates and enforces threshold / stall stopping."""

    def __init__(self, fun, options: OptimizerOptions):
        self.fun = fun
        self.opt = options
        self.cache_x = None
        self.cache = None
        self.history: list[float] = []
        self.best_x = None
        self.nfev = 0

    def value_grad(self, x):
        if self.cache_x is None or not np.array_equal(x, self.cache_x):
            self.cache = self.fun(x)
            self.cache_x = x.copy()
            self.nfev += 1
        return self.cache

    def loss(self, x):
        f, g = self.value_grad(x)
        return 1.0 - f, -g

    def accept(self, x):
        f, _ = self.value_grad(x)
        self.history.append(float(f))
        self.best_x = np.array(x, copy=True)
        if f >= self.opt.threshold:
            raise _Stop
        w = self.opt.stall_window
        if len(self.history) > w:
            old = self.history[-w - 1]
            if (f - old) <= self.opt.stall_tol * max(1.0 - old, 1e-300):
                raise _Stop


def _ascend(fun, x0, options: OptimizerOptions):
    """Maximize ``fun`` (returns value, gradient). Returns (x, value, iterations, history)."""
    tr = _Tracker(fun, options)
    x0 = np.asarray(x0, dtype=float)
    f0 = tr.value_grad(x0)[0]
    tr.history.append(float(f0))
    tr.best_x = x0.copy()
    if f0 >= options.threshold:
        return x0, f0, 0, tr.history
    try:
        if options.method == "lbfgs":
            minimize(
                tr.loss,
                x0,
                jac=True,
                method="L-BFGS-B",
                callback=lambda xk: tr.accept(xk),
                options=dict(maxiter=options.max_iters, maxfun=10 * options.max_iters, ftol=0.0, gtol=1e-14, maxcor=20),
            )
        else:
            _gradient_ascent(tr, x0, options)
    except _Stop:
        pass
    x = tr.best_x
    return x, tr.value_grad(x)[0], len(tr.history) - 1, tr.history


def _gradient_ascent(tr: _Tracker, x0, options: OptimizerOptions):
    """Plain steepest ascent with backtracking (Armijo) step control."""
    x = x0.copy()
    f, g = tr.value_grad(x)
    step = 1.0
    for _ in range(options.max_iters):
        gg = g @ g
        if gg == 0:
            return
        while True:
            xn = x + step * g
            fn, gn = tr.value_grad(xn)
            if fn >= f + 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-16:
                return
        x, f, g = xn, fn, gn
        step *= 2.0
        tr.accept(x)


def _seed_rng(seed):
    return np.random.default_rng(seed)


def optimize_conventional(target, n_steps: int, params: CesiumParams | None = None, options: OptimizerOptions | None = None) -> ControlSolution:
    """Quasi-Newton ascent of the (optionally robust) gate fidelity from a random seed."""
    params = params or CesiumParams()
    options = options or OptimizerOptions()
    target = _check_target(target)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = _seed_rng(options.seed)
    x0 = random_waveform(n_steps, rng, params).phases.ravel()
    delta = options.robust_delta if options.robust else None

    def fun(x):
        f, g = fidelity_value_grad(x.reshape(-1, 3), target, params, delta)
        return f, g.ravel()

    x, f, iters, hist = _ascend(fun, x0, options)
    wf = ControlWaveform(x.reshape(-1, 3), params.step_duration).wrapped()
    return ControlSolution(
        waveform=wf,
        achieved_fidelity=float(fidelity_value_grad(wf.phases, target, params, delta)[0]),
        target_id=target_hash(target),
        robust=options.robust,
        seed=options.seed,
        iterations=iters,
        robust_delta=delta or 0.0,
        params=params,
        history=hist,
    )


def optimize_evo(target, n_steps: int, params: CesiumParams | None = None, options: OptimizerOptions | None = None) -> EvoSolution:
    """Joint ascent over ``3 N`` phases and 255 Gell-Mann coordinates."""
    params = params or CesiumParams()
    options = options or OptimizerOptions()
    target = _check_target(target)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = _seed_rng(options.seed)
    ph0 = random_waveform(n_steps, rng, params).phases.ravel()
    v0 = options.v_sigma * rng.standard_normal(N_GELLMANN)
    nph = ph0.size
    delta = options.robust_delta if options.robust else None

    def fun(x):
        f, gp, gv = evo_value_grad(x[:nph].reshape(-1, 3), x[nph:], target, params, delta)
        return f, np.concatenate([gp.ravel(), gv])

    x, f, iters, hist = _ascend(fun, np.concatenate([ph0, v0]), options)
    wf = ControlWaveform(x[:nph].reshape(-1, 3), params.step_duration).wrapped()
    return EvoSolution(
        waveform=wf,
        v=x[nph:].copy(),
        achieved_fidelity=float(evo_value_grad(wf.phases, x[nph:], target, params, delta)[0]),
        target_id=target_hash(target),
        seed=options.seed,
        iterations=iters,
        robust=options.robust,
        robust_delta=delta or 0.0,
        params=params,
        history=hist,
    )


def initial_state_index() -> int:
    """Optical pumping prepares |3,3>."""
    return IDX_33


def optimize_state_map(target_state, n_steps: int, params: CesiumParams | None = None, options: OptimizerOptions | None = None) -> ControlSolution:
    """Maximize ``|<chi|U|psi0>|^2`` with ``psi0 = |3,3>``."""
    params = params or CesiumParams()
    options = options or OptimizerOptions()
    chi = np.asarray(target_state, dtype=complex)
    if chi.shape != (DIM,) or abs(np.vdot(chi, chi).real - 1) > 1e-10:
        raise ValueError("target state must be a normalized 16-vector")
    psi0 = np.zeros(DIM, dtype=complex)
    psi0[IDX_33] = 1.0
    rank_one = np.outer(chi, psi0.conj())
    rng = _seed_rng(options.seed)
    x0 = random_waveform(n_steps, rng, params).phases.ravel()
    delta = options.robust_delta if options.robust else None

    def fun(x):
        f, g = fidelity_value_grad(x.reshape(-1, 3), rank_one, params, delta, norm=1.0)
        return f, g.ravel()

    x, f, iters, hist = _ascend(fun, x0, options)
    wf = ControlWaveform(x.reshape(-1, 3), params.step_duration).wrapped()
    return ControlSolution(
        waveform=wf,
        achieved_fidelity=float(fidelity_value_grad(wf.phases, rank_one, params, delta, norm=1.0)[0]),
        target_id=target_hash(rank_one),
        robust=options.robust,
        seed=options.seed,
        iterations=iters,
        robust_delta=delta or 0.0,
        params=params,
        kind="state",
        history=hist,
    )


def state_map_fidelity(solution: ControlSolution, target_state) -> float:
    psi0 = np.zeros(DIM, dtype=complex)
    psi0[IDX_33] = 1.0
    plist = _robust_offsets(solution.params, solution.robust_delta or None)
    vals = [abs(np.vdot(target_state, waveform_propagator(solution.waveform, p) @ psi0)) ** 2 for p in plist]
    return float(np.mean(vals))


def solution_fidelity(solution, target) -> float:
    """Recompute the objective a solution was optimized for."""
    delta = solution.robust_delta or None
    plist = _robust_offsets(solution.params, delta)
    if isinstance(solution, EvoSolution):
        vm = solution.basis_map()
        vals = [unitary_fidelity(target, vm @ waveform_propagator(solution.waveform, p) @ dagger(vm)) for p in plist]
    else:
        vals = [unitary_fidelity(target, waveform_propagator(solution.waveform, p)) for p in plist]
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# multi-seed orchestration


@dataclass
class SearchReport:
    fidelities: list[float]
    seeds: list[int]
    best: object
    wall_time: float
    threshold: float
    success_count: int
    iterations: list[int] = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    @property
    def success_fraction(self) -> float:
        return self.success_count / len(self.fidelities)


@dataclass(frozen=True)
class SearchTask:
    """Picklable description of one family of single-seed searches."""

    method: str  # "conventional" | "evo" | "state"
    target: np.ndarray
    n_steps: int
    params: CesiumParams = CesiumParams()
    options: OptimizerOptions = OptimizerOptions()

    def __call__(self, seed: int):
        opts = replace(self.options, seed=seed)
        fn = {"conventional": optimize_conventional, "evo": optimize_evo, "state": optimize_state_map}[self.method]
        return fn(self.target, self.n_steps, self.params, opts)


def default_workers() -> int:
    return int(os.environ.get("CSAQS_WORKERS", "1"))


def multi_seed_search(task: Callable[[int], object], n_seeds: int, threshold: float, parallelism: int | None = None, seeds: Sequence[int] | None = None) -> SearchReport:
    """Run independent seeds; results are ordered by seed and independent of worker count."""
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    seeds = list(seeds) if seeds is not None else list(range(n_seeds))
    workers = parallelism or default_workers()
    t0 = time.perf_counter()
    if workers <= 1:
        results = [task(s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, seeds))
    wall = time.perf_counter() - t0
    fids = [r.achieved_fidelity for r in results]
    # ties go to the lowest seed index
    best = results[int(np.argmax(fids))]
    return SearchReport(
        fidelities=fids,
        seeds=seeds,
        best=best,
        wall_time=wall,
        threshold=threshold,
        success_count=int(sum(f >= threshold for f in fids)),
        iterations=[r.iterations for r in results],
        results=results,
    )
