"""Independent reference propagators shared by the test modules."""

import numpy as np
from scipy.linalg import expm

from robustpulse.quantum import SIGMA_X, SIGMA_Y, block_cvec, qutrit_hamiltonian


def exponential_oracle(field, n_sub=100_000, model=None):
    """Product of exact exponentials of the midpoint Hamiltonian on fine substeps."""
    t = np.linspace(-np.pi, np.pi, n_sub + 1)
    h = t[1] - t[0]
    omega = field(0.5 * (t[:-1] + t[1:]))
    if model is None:
        # exp(-i h (a X + b Y) / 2) in closed form
        u = np.eye(2, dtype=complex)
        for w in omega:
            r = abs(w) / 2
            if r == 0:
                continue
            n_sigma = (w.real * SIGMA_X + w.imag * SIGMA_Y) / abs(w)
            u = (np.cos(r * h) * np.eye(2) - 1j * np.sin(r * h) * n_sigma) @ u
        return block_cvec(u)
    u = np.eye(3, dtype=complex)
    for w in omega:
        u = expm(-1j * h * qutrit_hamiltonian(w, model)) @ u
    return u
