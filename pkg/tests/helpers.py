"""Independent oracles shared by the test modules."""

import numpy as np


def random_hermitian(d, seed=None):
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (a + a.conj().T)


def taylor_expm(a, tol=1e-18):
    """``exp(a)`` by scaling-and-squaring of a Taylor series summed to convergence."""
    s = max(0, int(np.ceil(np.log2(max(np.abs(a).sum(axis=1).max(), 1.0)))) + 1)
    b = a / 2**s
    out = np.eye(a.shape[0], dtype=complex)
    term = out.copy()
    for k in range(1, 60):
        term = term @ b / k
        out = out + term
        if np.abs(term).max() < tol:
            break
    for _ in range(s):
        out = out @ out
    return out


def rk_evolve(hams, tau, psi, substeps=400):
    """Column-wise state evolution with classical RK4 through piecewise-constant Hamiltonians."""
    psi = np.array(psi, dtype=complex)
    dt = tau / substeps
    for h in hams:
        f = lambda v: -1j * (h @ v)
        for _ in range(substeps):
            k1 = f(psi)
            k2 = f(psi + 0.5 * dt * k1)
            k3 = f(psi + 0.5 * dt * k2)
            k4 = f(psi + dt * k3)
            psi = psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi
