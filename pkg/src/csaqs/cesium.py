"""16-level Cs ground-state control model.

Units: angular frequencies in rad/us, times in us.

Basis order (fixed everywhere, including serialized matrices)::

    |4,4>, |4,3>, ..., |4,-4>, |3,3>, |3,2>, ..., |3,-3>

The rotating-frame control Hamiltonian for phases ``(phi_x, phi_y, phi_uw)``::

    H_rf(4) =  (Ox/2)(cos phi_x Fx + sin phi_x Fy) + (Oy/2)(cos phi_y Fy - sin phi_y Fx) + D_rf Fz
    H_rf(3) = -(Ox/2)(cos phi_x Fx - sin phi_x Fy) - (Oy/2)(cos phi_y Fy + sin phi_y Fx) - D_rf Fz
    H_uw    =  (Ouw/2)(cos phi_uw sx + sin phi_uw sy) + (D_uw/2) sz      on span{|4,4>, |3,3>}
    H_0     =  dw [Fz(4) - Fz(3) + 7/2 (P44 - P33)]

The two manifolds carry opposite signs (opposite g-factors). ``H_0`` is the
first-order response to a bias-field offset ``dw``; it vanishes on resonance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .qmath import angular_momentum_ops, dagger, divided_difference_exp

DIM = 16
TWO_PI = 2 * np.pi
IDX_44 = 0
IDX_33 = 9


class BasisLabel(NamedTuple):
    F: int
    m: int

    def __str__(self):
        return f"|{self.F},{self.m}>"


def build_basis() -> list[BasisLabel]:
    return [BasisLabel(4, m) for m in range(4, -5, -1)] + [BasisLabel(3, m) for m in range(3, -4, -1)]


def basis_index(F: int, m: int) -> int:
    return build_basis().index(BasisLabel(F, m))


@dataclass(frozen=True)
class CesiumParams:
    omega_0: float = TWO_PI * 1.0
    omega_x: float = TWO_PI * 0.025
    omega_y: float = TWO_PI * 0.025
    omega_uw: float = TWO_PI * 0.0275
    delta_rf: float = 0.0
    delta_uw: float = 0.0
    step_duration: float = 4.0
    delta_omega: float = 0.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.step_duration <= 0:
            raise ValueError("step_duration must be positive")

    def with_offset(self, delta_omega: float) -> "CesiumParams":
        return replace(self, delta_omega=delta_omega)

    def scaled_amplitudes(self, factor: float) -> "CesiumParams":
        return replace(
            self,
            omega_x=self.omega_x * factor,
            omega_y=self.omega_y * factor,
            omega_uw=self.omega_uw * factor,
        )


@dataclass(frozen=True)
class ControlWaveform:
    """Piecewise-constant phases, one ``(phi_x, phi_y, phi_uw)`` row per step."""

    phases: np.ndarray
    step_duration: float = 4.0

    def __post_init__(self):
        ph = np.array(self.phases, dtype=float).reshape(-1, 3)
        if ph.shape[0] < 1:
            raise ValueError("a waveform needs at least one phase step")
        if not np.all(np.isfinite(ph)):
            raise ValueError("phases must be finite")
        if not self.step_duration > 0:
            raise ValueError("step_duration must be positive")
        ph.setflags(write=False)
        object.__setattr__(self, "phases", ph)

    @property
    def n_steps(self) -> int:
        return self.phases.shape[0]

    def wrapped(self) -> "ControlWaveform":
        """Phases mapped into (-pi, pi]."""
        ph = -np.remainder(-self.phases + np.pi, 2 * np.pi) + np.pi
        return ControlWaveform(ph, self.step_duration)

    def __add__(self, other: "ControlWaveform") -> "ControlWaveform":
        if self.step_duration != other.step_duration:
            raise ValueError("cannot concatenate waveforms with different step durations")
        return ControlWaveform(np.vstack([self.phases, other.phases]), self.step_duration)

    def __eq__(self, other):
        return (
            isinstance(other, ControlWaveform)
            and self.step_duration == other.step_duration
            and np.array_equal(self.phases, other.phases)
        )

    __hash__ = None


def _embed(op4, op3):
    out = np.zeros((DIM, DIM), dtype=complex)
    if op4 is not None:
        out[:9, :9] = op4
    if op3 is not None:
        out[9:, 9:] = op3
    return out


@lru_cache(maxsize=None)
def _spin_blocks():
    f4 = angular_momentum_ops(4)
    f3 = angular_momentum_ops(3)
    fx4, fy4, fz4 = (_embed(a, None) for a in f4)
    fx3, fy3, fz3 = (_embed(None, a) for a in f3)
    sx = np.zeros((DIM, DIM), dtype=complex)
    sx[IDX_44, IDX_33] = sx[IDX_33, IDX_44] = 1.0
    sy = np.zeros((DIM, DIM), dtype=complex)
    sy[IDX_44, IDX_33] = -1j
    sy[IDX_33, IDX_44] = 1j
    sz = np.zeros((DIM, DIM), dtype=complex)
    sz[IDX_44, IDX_44] = 1.0
    sz[IDX_33, IDX_33] = -1.0
    return dict(fx4=fx4, fy4=fy4, fz4=fz4, fx3=fx3, fy3=fy3, fz3=fz3, sx=sx, sy=sy, sz=sz)


def bias_sensitivity_operator():
    """First-order bias-field response ``Fz(4) - Fz(3) + 7/2 (P44 - P33)``."""
    b = _spin_blocks()
    return b["fz4"] - b["fz3"] + 3.5 * b["sz"]


class ControlGenerators(NamedTuple):
    """``H(phi) = static + sum_c cos(phi_c) cos_terms[c] + sin(phi_c) sin_terms[c]``."""

    static: np.ndarray
    cos_terms: np.ndarray  # (3, 16, 16)
    sin_terms: np.ndarray  # (3, 16, 16)


def control_generators(params: CesiumParams) -> ControlGenerators:
    b = _spin_blocks()
    hx, hy, hu = params.omega_x / 2, params.omega_y / 2, params.omega_uw / 2
    cos_terms = np.array(
        [
            hx * (b["fx4"] - b["fx3"]),
            hy * (b["fy4"] - b["fy3"]),
            hu * b["sx"],
        ]
    )
    sin_terms = np.array(
        [
            hx * (b["fy4"] + b["fy3"]),
            hy * (-b["fx4"] - b["fx3"]),
            hu * b["sy"],
        ]
    )
    static = (
        params.delta_rf * (b["fz4"] - b["fz3"])
        + 0.5 * params.delta_uw * b["sz"]
        + params.delta_omega * bias_sensitivity_operator()
    )
    return ControlGenerators(static, cos_terms, sin_terms)


def control_hamiltonian(phases, params: CesiumParams):
    """16x16 rotating-frame Hamiltonian for one phase triple."""
    return control_hamiltonians(np.asarray(phases, dtype=float).reshape(1, 3), params)[0]


def control_hamiltonians(phases, params: CesiumParams, gens: ControlGenerators | None = None):
    """Stack of Hamiltonians, shape ``(N, 16, 16)``, for an ``(N, 3)`` phase array."""
    gens = gens or control_generators(params)
    phases = np.asarray(phases, dtype=float)
    c, s = np.cos(phases), np.sin(phases)
    return (
        gens.static
        + np.einsum("nc,cij->nij", c, gens.cos_terms)
        + np.einsum("nc,cij->nij", s, gens.sin_terms)
    )


def control_hamiltonian_derivatives(phases, gens: ControlGenerators):
    """``dH/dphi_c`` for every step, shape ``(N, 3, 16, 16)``."""
    phases = np.asarray(phases, dtype=float)
    c, s = np.cos(phases), np.sin(phases)
    return -s[:, :, None, None] * gens.cos_terms + c[:, :, None, None] * gens.sin_terms


def _check_duration(w: ControlWaveform, params: CesiumParams):
    if w.step_duration != params.step_duration:
        raise ValueError(
            f"waveform step {w.step_duration} us does not match params step {params.step_duration} us"
        )


def step_propagators(w: ControlWaveform, params: CesiumParams):
    """Per-step ``exp(-i H_i tau)``, shape ``(N, 16, 16)``."""
    _check_duration(w, params)
    return step_spectra(w.phases, params).steps


def ordered_product(steps):
    """``U_N ... U_2 U_1`` for a stack ``[U_1, ..., U_N]``."""
    u = np.eye(steps.shape[-1], dtype=complex)
    for s in steps:
        u = s @ u
    return u


def waveform_propagator(w: ControlWaveform, params: CesiumParams):
    return ordered_product(step_propagators(w, params))


class StepSpectra(NamedTuple):
    """Spectral data of every step, reused by gradient code."""

    evals: np.ndarray  # (N, d)
    evecs: np.ndarray  # (N, d, d)
    steps: np.ndarray  # (N, d, d) step propagators
    gamma: np.ndarray  # (N, d, d) Loewner matrices of exp(-i x tau)


_M4 = np.arange(4, -5, -1, dtype=float)
_M3 = np.arange(3, -4, -1, dtype=float)


def _real_frame(phases, params: CesiumParams, gens: ControlGenerators):
    """Write each step Hamiltonian as ``D H' D^dag`` with ``D`` diagonal unitary and ``H'`` real.

    Each manifold's rf term is ``A (cos t Fx + sin t Fy) = A Z(t) Fx Z(t)^dag``
    with ``Z(t) = exp(-i t Fz)``; the remaining microwave phase is absorbed in
    a relative phase between the manifolds. The static part is diagonal, so
    it is unchanged by ``D``.
    """
    hx, hy, hu = params.omega_x / 2, params.omega_y / 2, params.omega_uw / 2
    cx, cy, cu = np.cos(phases).T
    sx, sy, su = np.sin(phases).T
    a4, b4 = hx * cx - hy * sy, hx * sx + hy * cy
    a3, b3 = -hx * cx - hy * sy, hx * sx - hy * cy
    amp4, th4 = np.hypot(a4, b4), np.arctan2(b4, a4)
    amp3, th3 = np.hypot(a3, b3), np.arctan2(b3, a3)
    phi_u = np.arctan2(su, cu)
    chi = phi_u - 4 * th4 + 3 * th3
    diag = np.concatenate(
        [np.exp(-1j * th4[:, None] * _M4), np.exp(-1j * (th3[:, None] * _M3 - chi[:, None]))], axis=1
    )
    b = _spin_blocks()
    h_real = (
        amp4[:, None, None] * b["fx4"].real
        + amp3[:, None, None] * b["fx3"].real
        + hu * b["sx"].real
        + gens.static.real
    )
    return diag, h_real


def step_spectra(phases, params: CesiumParams, gens: ControlGenerators | None = None) -> StepSpectra:
    gens = gens or control_generators(params)
    tau = params.step_duration
    phases = np.asarray(phases, dtype=float)
    static = gens.static
    if np.count_nonzero(static - np.diag(np.diag(static))) == 0 and np.allclose(np.diag(static).imag, 0):
        diag, h_real = _real_frame(phases, params, gens)
        evals, vr = np.linalg.eigh(h_real)
        evecs = diag[:, :, None] * vr
    else:
        evals, evecs = np.linalg.eigh(control_hamiltonians(phases, params, gens))
    half = np.exp(-0.5j * evals * tau)
    steps = (evecs * (half * half)[:, None, :]) @ dagger(evecs)
    gamma = divided_difference_exp(evals, tau)
    return StepSpectra(evals, evecs, steps, gamma)


def prefix_suffix(steps):
    """Prefix products ``R_i = U_{i-1}..U_1`` and suffix products ``L_i = U_N..U_{i+1}``."""
    n, d = steps.shape[0], steps.shape[-1]
    eye = np.eye(d, dtype=complex)
    pre = np.empty_like(steps)
    suf = np.empty_like(steps)
    acc = eye
    for i in range(n):
        pre[i] = acc
        acc = steps[i] @ acc
    total = acc
    acc = eye
    for i in range(n - 1, -1, -1):
        suf[i] = acc
        acc = acc @ steps[i]
    return pre, suf, total


def waveform_propagator_gradient(w: ControlWaveform, params: CesiumParams):
    """Full propagator and ``dU/dphi`` for every phase, shape ``(N, 3, 16, 16)``.

    Flattening the derivative array gives the order
    ``(step1 x, step1 y, step1 uw, step2 x, ...)``.
    """
    _check_duration(w, params)
    gens = control_generators(params)
    sd = step_spectra(w.phases, params, gens)
    pre, suf, total = prefix_suffix(sd.steps)
    q = sd.evecs[:, None]
    dh_eig = dagger(q) @ control_hamiltonian_derivatives(w.phases, gens) @ q
    d_steps = q @ (sd.gamma[:, None] * dh_eig) @ dagger(q)
    grads = suf[:, None] @ d_steps @ pre[:, None]
    return total, grads


def random_waveform(n_steps: int, seed=None, params: CesiumParams | None = None) -> ControlWaveform:
    """Phases uniform on (-pi, pi]."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tau = (params or CesiumParams()).step_duration
    return ControlWaveform(np.pi - 2 * np.pi * rng.random((n_steps, 3)), tau)


# ---------------------------------------------------------------------------
# controllability


def lie_closure_dimension(generators, tol: float = 1e-9, include_identity: bool = True) -> int:
    """Dimension of the real Lie algebra generated by ``{-i H_k}``.

    With ``include_identity`` the global-phase direction ``i I`` is added to
    the generating set, so full controllability of U(d) reads ``d**2``.
    """
    gens = [-1j * np.asarray(h, dtype=complex) for h in generators]
    d = gens[0].shape[0]
    if include_identity:
        gens.append(1j * np.eye(d))

    # anti-Hermitian matrices live in a real space of dimension d^2
    cap = d * d
    basis = np.zeros((0, 2 * d * d))
    mats: list[np.ndarray] = []

    def vec(ms):
        ms = np.asarray(ms).reshape(len(ms), -1)
        return np.concatenate([ms.real, ms.imag], axis=1)

    def absorb(candidates):
        nonlocal basis
        added = []
        if not len(candidates):
            return added
        vs = vec(candidates)
        scale = np.linalg.norm(vs, axis=1)
        vs = vs - (vs @ basis.T) @ basis
        order = np.argsort(-np.linalg.norm(vs, axis=1))
        for k in order:
            if scale[k] < tol:
                continue
            v = vs[k]
            for _ in range(2):
                v = v - basis.T @ (basis @ v)
            nrm = np.linalg.norm(v)
            if nrm < tol * max(1.0, scale[k]):
                continue
            basis = np.vstack([basis, v / nrm])
            mats.append(candidates[k] / scale[k])
            added.append(len(mats) - 1)
            if len(mats) >= cap:
                break
        return added

    frontier = absorb(gens)
    while frontier and len(mats) < cap:
        new = []
        stack = np.array(mats)
        for i in frontier:
            comm = mats[i] @ stack - stack @ mats[i]
            new += absorb(comm)
            if len(mats) >= cap:
                break
        frontier = new
    return len(mats)


def controllability_dimension(params: CesiumParams | None = None, manifolds: str = "both") -> int:
    """Lie-closure dimension of the control Hamiltonian over all phase settings.

    The phase-dependent Hamiltonians span ``static + span{cos/sin terms}``;
    these generators, plus the static part, are closed under commutation.
    ``manifolds="F4"`` restricts to the 9-level F=4 block driven by rf only.
    """
    params = params or CesiumParams()
    gens = control_generators(params)
    mats = [gens.static] + list(gens.cos_terms) + list(gens.sin_terms)
    if manifolds == "F4":
        mats = [m[:9, :9] for m in mats[:1] + [gens.cos_terms[0], gens.cos_terms[1], gens.sin_terms[0], gens.sin_terms[1]]]
    elif manifolds != "both":
        raise ValueError("manifolds must be 'both' or 'F4'")
    return lie_closure_dimension([m for m in mats if np.abs(m).max() > 0])
