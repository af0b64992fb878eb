"""Stroboscopic analog quantum simulation with parametric error models.

An ensemble of independent "atoms" shares one control waveform. Each atom
draws a static bias offset and amplitude scale; optional phase noise is
fresh on every step. The actual state after ``k`` steps is the ensemble
average of the atoms' evolved density matrices, and ``F_AQS(k)`` is its
overlap with the exact reference ``|chi(k)> = W^k |chi(0)>``.

Records live in the system frame. For EVO solutions the simulator step
``U`` is conjugated as ``V U V^dag`` inside the engine.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .cesium import DIM, IDX_44, CesiumParams, ControlWaveform, step_propagators, ordered_product
from .models import ModelSpec, model_propagator
from .optimize import ControlSolution, EvoSolution, target_hash
from .qmath import check_density_matrix, check_state, dagger

MIXED_FLOOR = 1.0 / DIM


class TargetMismatchError(ValueError):
    """A solution was applied to a model whose propagator it does not target."""


@dataclass(frozen=True)
class ErrorModel:
    """Parametric imperfections (frequencies in rad/us).

    ``amplitude_scale_error`` is the per-atom fractional Gaussian spread of
    the rf and microwave amplitudes. The default bias offset and spread
    (fractional 4e-5 of the 1 MHz Larmor frequency) put randomized EVO
    sequences on the chaotic kicked top near 0.997 average fidelity per step.
    """

    delta_omega_offset: float = 2 * np.pi * 4e-5
    delta_omega_spread: float = 2 * np.pi * 4e-5
    amplitude_scale_error: float = 1e-3
    phase_noise_sigma: float = 0.0
    prep_infidelity: float = 0.005
    readout_noise_sigma: float = 0.01
    ensemble_size: int = 100

    def __post_init__(self):
        for name in ("delta_omega_spread", "amplitude_scale_error", "phase_noise_sigma", "readout_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.prep_infidelity <= 0.1:
            raise ValueError("prep_infidelity must lie in [0, 0.1]")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")

    @classmethod
    def none(cls) -> "ErrorModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimulationRecord:
    fidelity: np.ndarray  # F_AQS(k), k = 0..K
    observables: dict  # name -> (K+1,) expectation values
    reference: np.ndarray  # (K+1, d) ideal states
    rho: np.ndarray = field(repr=False)  # (K+1, d, d) ensemble states
    metadata: dict = field(default_factory=dict)
    measured_fidelity: np.ndarray | None = None

    @property
    def steps(self) -> np.ndarray:
        return np.arange(len(self.fidelity))

    @property
    def K(self) -> int:
        return len(self.fidelity) - 1


# ---------------------------------------------------------------------------
# state preparation and references


def ideal_reference_states(model: ModelSpec | np.ndarray, initial, K: int):
    """``[W^k |chi(0)> for k = 0..K]`` as a ``(K+1, d)`` array."""
    if K < 0:
        raise ValueError("K must be >= 0")
    w = model if isinstance(model, np.ndarray) else model_propagator(model)
    psi = check_state(initial, atol=1e-10)
    out = np.empty((K + 1, psi.size), dtype=complex)
    out[0] = psi
    for k in range(1, K + 1):
        out[k] = w @ out[k - 1]
    return out


def prepare_initial(target, errors: ErrorModel, seed=None):
    """``(1 - eps)|chi0><chi0| + eps |perp><perp|`` with a random ``|perp>`` orthogonal to the target."""
    chi = check_state(target, atol=1e-10)
    eps = errors.prep_infidelity
    rho = np.outer(chi, chi.conj())
    if eps == 0:
        return rho
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(chi.size) + 1j * rng.standard_normal(chi.size)
    z -= chi * np.vdot(chi, z)
    z /= np.linalg.norm(z)
    return (1 - eps) * rho + eps * np.outer(z, z.conj())


# ---------------------------------------------------------------------------
# measurement


def stern_gerlach_measure(rho, noise_sigma: float = 0.0, seed=None):
    """Sublevel populations with additive Gaussian noise, clipped and renormalized."""
    p = np.real(np.diagonal(rho)).copy()
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        p = p + noise_sigma * rng.standard_normal(p.size)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _check_orthonormal(basis, tol=1e-10):
    b = np.asarray(basis, dtype=complex)
    if b.shape != (DIM, DIM):
        raise ValueError(f"basis must hold {DIM} vectors of length {DIM}")
    if np.abs(b.conj() @ b.T - np.eye(DIM)).max() > tol:
        raise ValueError("measurement basis is not orthonormal")
    return b


def povm_measure(rho, basis, noise_sigma: float = 0.0, seed=None):
    """Outcome ``a`` has probability ``<Psi_a|rho|Psi_a>`` (rows of ``basis`` are the states).

    Implemented as the mapping ``U = sum_a |a><Psi_a|`` followed by a
    Stern-Gerlach population measurement.
    """
    b = _check_orthonormal(basis)
    u = b.conj()
    return stern_gerlach_measure(u @ rho @ dagger(u), noise_sigma, seed)


def readout_map(chi):
    """Unitary taking ``|chi>`` to ``|4,4>``; the rest of the basis by Gram-Schmidt on the canonical vectors."""
    chi = check_state(chi, atol=1e-10)
    vecs = [chi]
    for e in np.eye(DIM, dtype=complex):
        for _ in range(2):
            for v in vecs:
                e = e - v * np.vdot(v, e)
        n = np.linalg.norm(e)
        if n > 1e-8:
            vecs.append(e / n)
        if len(vecs) == DIM:
            break
    rows = np.array(vecs)
    order = np.arange(DIM)
    order[[0, IDX_44]] = order[[IDX_44, 0]]
    return rows[order].conj()


def readout_fidelity_measure(rho, chi, noise_sigma: float = 0.0, seed=None) -> float:
    u = readout_map(chi)
    return float(stern_gerlach_measure(u @ rho @ dagger(u), noise_sigma, seed)[IDX_44])


# ---------------------------------------------------------------------------
# engine


def _step_unitaries(solution, atom_params, n_atoms, rng, phase_sigma, K):
    """Per-atom step maps in the system frame.

    Without phase noise returns ``(n_atoms, d, d)``; with it, a callable
    that produces the stack for a given step.
    """
    vm = solution.basis_map() if isinstance(solution, EvoSolution) else None
    wf = solution.waveform

    def frame(u):
        return u if vm is None else vm @ u @ dagger(vm)

    if phase_sigma == 0:
        return np.array([frame(ordered_product(step_propagators(wf, p))) for p in atom_params])

    def noisy(_k):
        out = []
        for p in atom_params:
            noisy_wf = ControlWaveform(wf.phases + phase_sigma * rng.standard_normal(wf.phases.shape), wf.step_duration)
            out.append(frame(ordered_product(step_propagators(noisy_wf, p))))
        return np.array(out)

    return noisy


def _draw_atoms(params: CesiumParams, errors: ErrorModel, rng):
    n = errors.ensemble_size
    offs = errors.delta_omega_offset + errors.delta_omega_spread * rng.standard_normal(n)
    scales = 1.0 + errors.amplitude_scale_error * rng.standard_normal(n)
    return [params.scaled_amplitudes(s).with_offset(params.delta_omega + o) for o, s in zip(offs, scales)]


def _evolve(rho0, step_source, K, n_atoms, pick=None):
    """Ensemble-averaged ``rho(k)`` for ``k = 0..K``.

    ``step_source`` is either a fixed ``(n_atoms, d, d)`` stack, a callable
    ``k -> stack``, or a list of stacks indexed by ``pick[k]``.
    """
    rhos = np.empty((K + 1,) + rho0.shape, dtype=complex)
    rhos[0] = rho0
    state = np.broadcast_to(rho0, (n_atoms,) + rho0.shape).copy()
    for k in range(1, K + 1):
        if pick is not None:
            u = step_source[pick[k - 1]]
        elif callable(step_source):
            u = step_source(k)
        else:
            u = step_source
        state = u @ state @ dagger(u)
        # fixed index order keeps the average deterministic
        rhos[k] = state.sum(axis=0) / n_atoms
    return rhos


def _record(rhos, refs, observables, errors, metadata, seed):
    fid = np.einsum("ki,kij,kj->k", refs.conj(), rhos, refs).real
    obs = {name: np.einsum("kij,ji->k", rhos, np.asarray(m)).real for name, m in (observables or {}).items()}
    measured = None
    if errors.readout_noise_sigma > 0:
        rng = np.random.default_rng(seed)
        measured = np.array(
            [readout_fidelity_measure(r, c, errors.readout_noise_sigma, rng) for r, c in zip(rhos, refs)]
        )
    return SimulationRecord(fid, obs, refs, rhos, metadata, measured)


def _check_solution_target(solution, w):
    if solution.target_id != target_hash(w):
        raise TargetMismatchError(
            f"solution targets {solution.target_id}, model propagator hashes to {target_hash(w)}"
        )


def run_aqs(
    solution: ControlSolution | EvoSolution | None,
    model: ModelSpec,
    initial,
    K: int,
    errors: ErrorModel | None = None,
    observables: dict | None = None,
    seed=None,
) -> SimulationRecord:
    """Simulate ``K`` stroboscopic steps of ``model`` driven by ``solution``.

    ``solution=None`` is oracle mode: the exact ``W`` is applied to an
    ideally prepared state, so only readout noise remains.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    errors = errors or ErrorModel()
    w = model_propagator(model)
    rng = np.random.default_rng(seed)
    refs = ideal_reference_states(w, initial, K)
    rho0 = prepare_initial(refs[0], errors if solution is not None else ErrorModel.none(), rng)
    if solution is None:
        n_atoms = 1
        source = w[None]
    else:
        _check_solution_target(solution, w)
        atoms = _draw_atoms(solution.params, errors, rng)
        n_atoms = len(atoms)
        source = _step_unitaries(solution, atoms, n_atoms, rng, errors.phase_noise_sigma, K)
    rhos = _evolve(rho0, source, K, n_atoms)
    meta = {
        "mode": "oracle" if solution is None else ("evo" if isinstance(solution, EvoSolution) else "conventional"),
        "model": model.to_dict(),
        "solution_id": None if solution is None else solution.target_id,
        "solution_seed": None if solution is None else solution.seed,
        "errors": errors.to_dict(),
        "seed": seed,
        "K": K,
    }
    return _record(rhos, refs, observables, errors, meta, rng)


def randomized_sequence_run(
    solutions: list,
    model: ModelSpec,
    initial,
    K: int,
    errors: ErrorModel | None = None,
    observables: dict | None = None,
    seed=None,
) -> SimulationRecord:
    """Each step applies a uniformly chosen solution's ``V_r U_r V_r^dag``.

    One random sequence is drawn per run and shared by all atoms.
    """
    if len(solutions) < 2:
        raise ValueError("randomized sequences need at least two solutions")
    errors = errors or ErrorModel()
    w = model_propagator(model)
    for s in solutions:
        _check_solution_target(s, w)
    if errors.phase_noise_sigma > 0:
        raise NotImplementedError("phase noise is not supported in randomized mode")
    rng = np.random.default_rng(seed)
    refs = ideal_reference_states(w, initial, K)
    rho0 = prepare_initial(refs[0], errors, rng)
    # all solutions share one cesium parameter set, so atoms draw once
    atoms = _draw_atoms(solutions[0].params, errors, rng)
    stacks = [_step_unitaries(s, atoms, len(atoms), rng, 0.0, K) for s in solutions]
    pick = rng.integers(len(solutions), size=K)
    rhos = _evolve(rho0, stacks, K, len(atoms), pick=pick)
    meta = {
        "mode": "randomized",
        "model": model.to_dict(),
        "solution_seeds": [s.seed for s in solutions],
        "sequence": pick.tolist(),
        "errors": errors.to_dict(),
        "seed": seed,
        "K": K,
    }
    return _record(rhos, refs, observables, errors, meta, rng)


def loschmidt_fidelity(rho_k, w, initial, k: int) -> float:
    """``Tr[(W^dag)^k rho(k) W^k |chi0><chi0|]``."""
    wk = np.linalg.matrix_power(np.asarray(w), k)
    back = dagger(wk) @ rho_k @ wk
    chi = np.asarray(initial)
    return float(np.vdot(chi, back @ chi).real)


def loschmidt_trace(record: SimulationRecord, w) -> np.ndarray:
    """Backward-evolved fidelity for every step of a record."""
    chi = record.reference[0]
    out = np.empty(record.K + 1)
    wk = np.eye(w.shape[0], dtype=complex)
    for k in range(record.K + 1):
        back = dagger(wk) @ record.rho[k] @ wk
        out[k] = np.vdot(chi, back @ chi).real
        wk = w @ wk
    return out


def mean_trace(records) -> tuple[np.ndarray, np.ndarray]:
    """Mean fidelity and its standard error over records (e.g. initial states)."""
    f = np.array([r.fidelity for r in records])
    sem = f.std(axis=0, ddof=1) / np.sqrt(len(f)) if len(f) > 1 else np.zeros(f.shape[1])
    return f.mean(axis=0), sem
