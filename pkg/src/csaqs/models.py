"""Target systems: transverse Ising chain, LMG model and the kicked top.

All three live in a 16-dimensional Hilbert space (4 qubits, or spin 15/2),
and propagators follow ``W = exp(-i H dt)`` with the Hamiltonians

    H_TI  = -h sum_i sz_i - s sum_i sx_i sx_{i+1}     (open chain, N=4)
    H_LMG = -(1 - s) Jz - s Jx^2                       (J = 15/2)

The kicked-top Floquet operator is ``exp(+i k/(2J) Jx^2) exp(+i p Jz)``:
the z-kick acts first, the torsion second, and the stroboscopic
observation point sits right after the torsion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from fractions import Fraction
from typing import Iterable, Literal, NamedTuple

import numpy as np

from .qmath import angular_momentum_ops, expm_hermitian, pauli_chain_op

DIM = 16
N_SITES = 4
SPIN_J = Fraction(15, 2)
J = float(SPIN_J)


@dataclass(frozen=True)
class ModelSpec:
    """Tagged union over the three target models.

    ``family`` selects which fields are meaningful: ``ti`` uses (h, s, dt),
    ``lmg`` uses (s, dt) and ``qkt`` uses (p, kappa).
    """

    family: Literal["ti", "lmg", "qkt", "identity"]
    h: float = 0.0
    s: float = 0.0
    dt: float = 0.0
    p: float = 0.0
    kappa: float = 0.0
    torsion_first: bool = False

    def __post_init__(self):
        if self.family not in ("ti", "lmg", "qkt", "identity"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.family in ("ti", "lmg") and not self.dt > 0:
            raise ValueError("dt must be positive for TI and LMG models")
        if self.family == "lmg" and not 0.0 <= self.s <= 1.0:
            raise ValueError("LMG s must lie in [0, 1]")

    @classmethod
    def ti(cls, h: float, s: float, dt: float) -> "ModelSpec":
        return cls("ti", h=h, s=s, dt=dt)

    @classmethod
    def lmg(cls, s: float, dt: float) -> "ModelSpec":
        return cls("lmg", s=s, dt=dt)

    @classmethod
    def qkt(cls, p: float, kappa: float, torsion_first: bool = False) -> "ModelSpec":
        return cls("qkt", p=p, kappa=kappa, torsion_first=torsion_first)

    @classmethod
    def identity(cls) -> "ModelSpec":
        return cls("identity")

    def to_dict(self) -> dict:
        keep = {
            "ti": ("h", "s", "dt"),
            "lmg": ("s", "dt"),
            "qkt": ("p", "kappa", "torsion_first"),
            "identity": (),
        }[self.family]
        d = asdict(self)
        return {"family": self.family, **{k: d[k] for k in keep}}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)

    def propagator(self):
        return model_propagator(self)

    def label(self) -> str:
        parts = [f"{k}={v}" for k, v in self.to_dict().items() if k != "family"]
        return self.family + ("(" + ",".join(parts) + ")" if parts else "")


# ---------------------------------------------------------------------------
# Hamiltonians and propagators


def ti_hamiltonian(h: float, s: float, n: int = N_SITES):
    ham = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(1, n + 1):
        ham -= h * pauli_chain_op(n, i, "z")
    for i in range(1, n):
        ham -= s * pauli_chain_op(n, i, "x") @ pauli_chain_op(n, i + 1, "x")
    return ham


def ti_propagator(h: float, s: float, dt: float):
    return expm_hermitian(ti_hamiltonian(h, s), dt)


def lmg_hamiltonian(s: float):
    jx, _, jz = angular_momentum_ops(SPIN_J)
    return -(1 - s) * jz - s * jx @ jx


def lmg_propagator(s: float, dt: float):
    if not 0.0 <= s <= 1.0:
        raise ValueError("LMG s must lie in [0, 1]")
    return expm_hermitian(lmg_hamiltonian(s), dt)


def qkt_floquet(p: float, kappa: float, torsion_first: bool = False):
    """One period of the kicked top, ``exp(+i k/2J Jx^2) exp(+i p Jz)``."""
    jx, _, jz = angular_momentum_ops(SPIN_J)
    kick = expm_hermitian(jz, -p)
    torsion = expm_hermitian(jx @ jx, -kappa / (2 * J))
    return kick @ torsion if torsion_first else torsion @ kick


def model_propagator(model: ModelSpec):
    if model.family == "ti":
        return ti_propagator(model.h, model.s, model.dt)
    if model.family == "lmg":
        return lmg_propagator(model.s, model.dt)
    if model.family == "qkt":
        return qkt_floquet(model.p, model.kappa, model.torsion_first)
    return np.eye(DIM, dtype=complex)


def model_hamiltonian(model: ModelSpec):
    """Time-independent generator (TI/LMG only)."""
    if model.family == "ti":
        return ti_hamiltonian(model.h, model.s)
    if model.family == "lmg":
        return lmg_hamiltonian(model.s)
    raise ValueError(f"{model.family} has no single static Hamiltonian")


def system_to_simulator_map(model: ModelSpec):
    """Index permutation from the model's canonical basis onto the cesium basis.

    TI states are ordered lexicographically (|0000> = all up first), spin
    models by descending m; both map one-to-one onto the cesium ordering.
    """
    if model_propagator(model).shape[0] != DIM:
        raise ValueError("model dimension must be 16")
    return np.arange(DIM)


def invert_permutation(perm):
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return inv


def model_observables(model: ModelSpec) -> dict:
    """Named observables natural to each model family."""
    if model.family == "ti":
        obs = {}
        for i in range(1, N_SITES + 1):
            for a in "xyz":
                obs[f"sigma{i}{a}"] = pauli_chain_op(N_SITES, i, a)
        return obs
    jx, jy, jz = angular_momentum_ops(SPIN_J)
    return {"Jx": np.array(jx), "Jy": np.array(jy), "Jz": np.array(jz)}


# ---------------------------------------------------------------------------
# classical kicked top


class ClassicalSpinPoint(NamedTuple):
    X: float
    Y: float
    Z: float

    def as_array(self):
        return np.array(self, dtype=float)


def _check_unit(v, tol=1e-12):
    n = float(np.dot(v, v))
    if abs(n - 1.0) > tol:
        raise ValueError(f"classical spin point is not normalized (|r|^2 = {n!r})")


def _step(v, p, kappa):
    x, y, z = v
    cp, sp = np.cos(p), np.sin(p)
    x1, y1 = x * cp + y * sp, -x * sp + y * cp
    th = -kappa * x1
    ct, st = np.cos(th), np.sin(th)
    out = np.array([x1, y1 * ct - z * st, y1 * st + z * ct])
    # both rotations are isometries; projecting back stops rounding drift
    return out / np.sqrt(out @ out)


def classical_qkt_step(pt, p: float, kappa: float) -> ClassicalSpinPoint:
    """Classical limit of one Floquet period, with (X, Y, Z) = <J>/J.

    The kick ``exp(+i p Jz)`` rotates the Bloch vector by -p about z; the
    torsion then rotates it about x by the angle ``-kappa X``.
    """
    v = np.asarray(pt, dtype=float)
    _check_unit(v)
    return ClassicalSpinPoint(*_step(v, p, kappa))


def _jacobian(v, p, kappa):
    x, y, z = v
    cp, sp = np.cos(p), np.sin(p)
    rz = np.array([[cp, sp, 0.0], [-sp, cp, 0.0], [0.0, 0.0, 1.0]])
    x1, y1, z1 = rz @ v
    th = -kappa * x1
    ct, st = np.cos(th), np.sin(th)
    dth = -kappa
    jt = np.array(
        [
            [1.0, 0.0, 0.0],
            [dth * (-y1 * st - z1 * ct), ct, -st],
            [dth * (y1 * ct - z1 * st), st, ct],
        ]
    )
    return jt @ rz


def _random_unit_points(n, rng):
    z = 1.0 - 2.0 * rng.random(n)
    phi = 2 * np.pi * rng.random(n)
    r = np.sqrt(1 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def lyapunov_estimate(
    p: float,
    kappa: float,
    n_transient: int = 100,
    n_steps: int = 2000,
    n_trajectories: int = 10,
    seed=None,
    initial_points=None,
) -> float:
    """Largest Lyapunov exponent (per kick) by tangent-vector renormalization.

    Trajectories start at ``initial_points`` when given, otherwise uniformly
    on the sphere. The estimate is the average over trajectories.
    """
    if n_steps < 1 or n_trajectories < 1 or n_transient < 0:
        raise ValueError("step and trajectory counts must be positive")
    rng = np.random.default_rng(seed)
    if initial_points is None:
        starts = _random_unit_points(n_trajectories, rng)
    else:
        starts = np.atleast_2d(np.asarray(initial_points, dtype=float))
        starts = starts / np.linalg.norm(starts, axis=1, keepdims=True)
    exponents = []
    for v in starts:
        for _ in range(n_transient):
            v = _step(v, p, kappa)
        # tangent vector orthogonal to v
        t = rng.standard_normal(3)
        t -= v * (v @ t)
        t /= np.linalg.norm(t)
        total = 0.0
        for _ in range(n_steps):
            t = _jacobian(v, p, kappa) @ t
            v = _step(v, p, kappa)
            v /= np.linalg.norm(v)
            t -= v * (v @ t)
            nrm = np.linalg.norm(t)
            total += np.log(nrm)
            t /= nrm
        exponents.append(total / n_steps)
    return float(np.mean(exponents))


def phase_portrait(p: float, kappa: float, initial_points: Iterable, n_steps: int) -> list[np.ndarray]:
    """Stroboscopic orbit (shape ``(n_steps + 1, 3)``) for each starting point."""
    out = []
    for pt in initial_points:
        v = np.asarray(pt, dtype=float)
        _check_unit(v, tol=1e-10)
        traj = np.empty((n_steps + 1, 3))
        traj[0] = v
        for k in range(n_steps):
            v = _step(v, p, kappa)
            traj[k + 1] = v
        out.append(traj)
    return out


def sphere_grid(n_points: int, seed=None):
    """Quasi-uniform starting points (Fibonacci lattice, optionally rotated)."""
    i = np.arange(n_points) + 0.5
    z = 1 - 2 * i / n_points
    phi = np.pi * (1 + 5**0.5) * i
    if seed is not None:
        phi = phi + 2 * np.pi * np.random.default_rng(seed).random()
    r = np.sqrt(1 - z**2)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def write_trajectories_csv(path, trajectories):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["X", "Y", "Z", "step", "trajectory_id"])
        for tid, traj in enumerate(trajectories):
            for k, (x, y, z) in enumerate(traj):
                w.writerow([f"{x:.17g}", f"{y:.17g}", f"{z:.17g}", k, tid])
