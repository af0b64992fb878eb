"""Dense complex linear algebra and quantum primitives.

Matrices are plain ``numpy`` arrays (complex128). Hermitian generators are
exponentiated through their eigendecomposition, which is exact to machine
precision at the small dimensions used here and gives the directional
derivative of the exponential for free.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np

HERMITIAN_ATOL = 1e-12
UNITARY_ATOL = 1e-10
STATE_ATOL = 1e-12


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class NotHermitianError(ValueError):
    """A matrix expected to be Hermitian is not."""


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def _same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermiticity_error(h) -> float:
    h = np.asarray(h)
    return float(np.max(np.abs(h - dagger(h)))) if h.size else 0.0


def is_hermitian(h, atol: float = HERMITIAN_ATOL) -> bool:
    return hermiticity_error(h) <= atol


def unitarity_error(u) -> float:
    """Hilbert-Schmidt norm of ``U^dag U - I``."""
    u = np.asarray(u)
    return float(np.linalg.norm(dagger(u) @ u - np.eye(u.shape[-1])))


def is_unitary(u, atol: float = UNITARY_ATOL) -> bool:
    return unitarity_error(u) < atol


def check_hermitian(h, atol: float = HERMITIAN_ATOL, name="H"):
    h = _as_square(h, name)
    err = hermiticity_error(h)
    if err > atol:
        raise NotHermitianError(f"{name} is not Hermitian (max |H - H^dag| = {err:.3e})")
    return h


def check_state(psi, atol: float = STATE_ATOL):
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise DimensionError(f"state must be a vector, got shape {psi.shape}")
    norm = np.vdot(psi, psi).real
    if abs(norm - 1.0) > atol:
        raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
    return psi


def check_density_matrix(rho, atol: float = 1e-12):
    rho = check_hermitian(rho, atol=atol, name="rho")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > atol:
        raise ValueError(f"density matrix trace is {tr!r}")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


# ---------------------------------------------------------------------------
# exponentials


def divided_difference_exp(evals, t, sign=-1.0):
    """Loewner matrix of ``f(x) = exp(sign*i*x*t)`` on the given eigenvalues.

    Uses ``(f(a) - f(b))/(a - b) = sign*i*t*exp(sign*i*(a+b)t/2)*sinc((a-b)t/2)``,
    which is the analytic equal-eigenvalue limit ``f'(a)`` on the diagonal
    and for (near-)degenerate pairs, with no cancellation.
    Works on stacked eigenvalue arrays ``(..., d)``.
    """
    evals = np.asarray(evals, dtype=float)
    half = np.exp(sign * 0.5j * evals * t)
    phase = half[..., :, None] * half[..., None, :]
    x = 0.5 * t * (evals[..., :, None] - evals[..., None, :])
    small = np.abs(x) < 1e-8
    x_safe = np.where(small, 1.0, x)
    snc = np.where(small, 1.0 - x * x / 6.0, np.sin(x_safe) / x_safe)
    return sign * 1j * t * phase * snc


def expm_hermitian(h, t: float = 1.0):
    """Return ``exp(-i H t)`` for Hermitian ``H``."""
    h = check_hermitian(h, atol=max(HERMITIAN_ATOL, 1e-12 * np.abs(h).max(initial=0.0)))
    w, q = np.linalg.eigh(h)
    return (q * np.exp(-1j * w * t)) @ dagger(q)


def expm_directional_derivative(h, dh, t: float = 1.0):
    """Derivative of ``exp(-i (H + eps dH) t)`` with respect to ``eps`` at 0."""
    h = check_hermitian(h)
    dh = _as_square(dh, "dH")
    _same_shape(h, dh)
    w, q = np.linalg.eigh(h)
    gamma = divided_difference_exp(w, t)
    return q @ (gamma * (dagger(q) @ dh @ q)) @ dagger(q)


# ---------------------------------------------------------------------------
# bases and operators


@lru_cache(maxsize=None)
def _gellmann_cached(d: int):
    mats = []
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1.0
            mats.append(m)
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j
            m[k, j] = 1j
            mats.append(m)
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(np.sqrt(2.0 / (l * (l + 1))) * diag).astype(complex))
    out = np.array(mats)
    out.setflags(write=False)
    return out


def gellmann_basis(d: int):
    """Generalized Gell-Mann matrices as a ``(d*d - 1, d, d)`` array.

    Normalized to ``Tr(L_a L_b) = 2 delta_ab``. Order: symmetric
    off-diagonal pairs (j<k, lexicographic), antisymmetric pairs (same
    order), then the ``d-1`` diagonal matrices.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"Gell-Mann basis needs integer d >= 2, got {d!r}")
    return _gellmann_cached(int(d))


def gellmann_combination(coeffs, d: int):
    """``sum_j c_j L_j`` for a real coefficient vector."""
    basis = gellmann_basis(d)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (d * d - 1,):
        raise DimensionError(f"need {d * d - 1} coefficients, got {coeffs.shape}")
    return np.tensordot(coeffs, basis, axes=1)


def gellmann_coefficients(a):
    """Inverse of :func:`gellmann_combination` for a traceless Hermitian matrix."""
    a = _as_square(a)
    basis = gellmann_basis(a.shape[0])
    return 0.5 * np.einsum("kij,ji->k", basis, a).real


def _spin_value(j) -> Fraction:
    jj = Fraction(j).limit_denominator(1000)
    if jj < 0 or (2 * jj).denominator != 1 or abs(float(jj) - float(j)) > 1e-12:
        raise ValueError(f"invalid angular momentum quantum number j={j!r}")
    return jj


@lru_cache(maxsize=None)
def _spin_cached(jj: Fraction):
    j = float(jj)
    dim = int(2 * jj) + 1
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(j(j+1) - m(m+1)); row index of m+1 is one less
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
    jx = 0.5 * (jp + jp.conj().T)
    jy = -0.5j * (jp - jp.conj().T)
    for a in (jx, jy, jz):
        a.setflags(write=False)
    return jx, jy, jz


def angular_momentum_ops(j):
    """Spin-j matrices ``(Jx, Jy, Jz)`` in the basis ``m = j, j-1, ..., -j``."""
    return _spin_cached(_spin_value(j))


PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_chain_op(n: int, site: int, axis: str):
    """``I x ... x sigma_axis x ... x I`` on ``n`` qubits; site 1 is the most significant factor."""
    if not 1 <= site <= n:
        raise ValueError(f"site {site} out of range 1..{n}")
    if axis not in PAULI:
        raise ValueError(f"axis must be one of x, y, z, got {axis!r}")
    return np.kron(np.kron(np.eye(2 ** (site - 1)), PAULI[axis]), np.eye(2 ** (n - site)))


def coherent_spin_state(j, theta: float, phi: float):
    """SU(2) coherent state: ``|j, j>`` rotated by theta about (-sin phi, cos phi, 0)."""
    jx, jy, jz = angular_momentum_ops(j)
    dim = jz.shape[0]
    top = np.zeros(dim, dtype=complex)
    top[0] = 1.0
    gen = -np.sin(phi) * jx + np.cos(phi) * jy
    psi = expm_hermitian(gen, theta) @ top
    return psi / np.linalg.norm(psi)


def expectation(op, psi) -> complex:
    return np.vdot(psi, op @ psi)


# ---------------------------------------------------------------------------
# metrics


def unitary_fidelity(w, u) -> float:
    """``|Tr(W^dag U)|^2 / d^2``."""
    w = _as_square(w, "W")
    u = _as_square(u, "U")
    _same_shape(w, u)
    d = w.shape[0]
    return float(abs(np.vdot(w, u)) ** 2 / d**2)


def hs_distance(a, b) -> float:
    """Hilbert-Schmidt distance ``sqrt(Tr[(A-B)^dag (A-B)])``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _same_shape(a, b)
    return float(np.linalg.norm(a - b))


def state_fidelity(psi, rho) -> float:
    """``<psi|rho|psi>`` for a density matrix, or ``|<psi|phi>|^2`` for a vector."""
    rho = np.asarray(rho)
    if rho.ndim == 1:
        return float(abs(np.vdot(psi, rho)) ** 2)
    return float(np.vdot(psi, rho @ psi).real)


# ---------------------------------------------------------------------------
# randomness


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_random(dim: int, seed=None):
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    rng = _rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def haar_random_state(dim: int, seed=None):
    rng = _rng(seed)
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)


def random_coherent_state(j, seed=None):
    """Coherent state with Bloch vector uniform on the sphere."""
    rng = _rng(seed)
    theta = np.arccos(1.0 - 2.0 * rng.random())
    phi = 2 * np.pi * rng.random()
    return coherent_spin_state(j, theta, phi)
