"""Dimensionless qubit and qutrit models.

Units: hbar = 1 and the pulse occupies ``t in [-pi, pi]`` so that the drive
amplitude needed for a full 2*pi rotation over the pulse is 1.

A qubit propagator is stored as its real 4-vector ``c = (c0, cx, cy, cz)``
with ``U = c0*I - i*(cx*X + cy*Y + cz*Z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQRT_HALF = 1.0 / np.sqrt(2.0)

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

# d c / dt = (Re(omega) * GEN_RE + Im(omega) * GEN_IM) @ c
GEN_RE = 0.5 * np.array(
    [[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float
)
GEN_IM = 0.5 * np.array(
    [[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], dtype=float
)


class NotSpecialUnitaryError(ValueError):
    """Raised when a 2x2 matrix is not in SU(2) within tolerance."""


@dataclass(frozen=True)
class QutritModel:
    """Three-level transmon truncation.

    Parameters
    ----------
    Delta : float
        Dimensionless anharmonic shift of ``|2>``, ``2*pi*alpha*T`` for an
        anharmonicity ``alpha`` in Hz and a physical pulse duration ``T``.
    lam : float
        Ratio of the ``|1>-|2>`` to ``|0>-|1>`` drive matrix elements.
    """

    Delta: float
    lam: float = 1.37

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if not np.isfinite(self.Delta):
            raise ValueError("Delta must be finite")

    @classmethod
    def from_physical(cls, anharmonicity_hz: float, duration_s: float, lam: float = 1.37):
        return cls(Delta=2 * np.pi * anharmonicity_hz * duration_s, lam=lam)


@dataclass(frozen=True)
class PulseMeta:
    """Mapping between training units and the lab.

    ``omega_2pi = 2*pi/T`` is the angular Rabi frequency that corresponds to
    a drive amplitude of 1 in training units.
    """

    duration_physical: float
    t_dead: float = 0.0

    def __post_init__(self):
        if not self.duration_physical > 0:
            raise ValueError("duration_physical must be positive")
        if self.t_dead < 0:
            raise ValueError("t_dead must be non-negative")

    @property
    def omega_2pi(self) -> float:
        return 2 * np.pi / self.duration_physical

    def to_training_time(self, t_seconds):
        return 2 * np.pi * np.asarray(t_seconds) / self.duration_physical - np.pi

    def to_physical_time(self, t_training):
        return (np.asarray(t_training) + np.pi) * self.duration_physical / (2 * np.pi)

    def detuning_hz(self, delta):
        """Detuning in Hz of a dimensionless ``delta``."""
        return np.asarray(delta) / self.duration_physical

    def detuning_from_hz(self, f_hz):
        return np.asarray(f_hz) * self.duration_physical


def qubit_generator(omega: complex) -> np.ndarray:
    """Real antisymmetric 4x4 matrix ``M`` with ``dc/dt = M c``."""
    omega = complex(omega)
    return omega.real * GEN_RE + omega.imag * GEN_IM


def _check_unit(c, tol):
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != 4:
        raise ValueError(f"c-vector must have 4 components, got shape {c.shape}")
    norm = np.linalg.norm(c, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise ValueError(f"c-vector is not normalized (|c| = {norm})")
    return c


def cvec_to_unitary(c) -> np.ndarray:
    """SU(2) matrix ``c0*I - i*(cx*X + cy*Y + cz*Z)``; broadcasts over leading axes."""
    c = _check_unit(c, 1e-6)
    c0, cx, cy, cz = np.moveaxis(c, -1, 0)
    u = np.empty(c.shape[:-1] + (2, 2), dtype=complex)
    u[..., 0, 0] = c0 - 1j * cz
    u[..., 0, 1] = -1j * cx - cy
    u[..., 1, 0] = -1j * cx + cy
    u[..., 1, 1] = c0 + 1j * cz
    return u


def block_cvec(u) -> np.ndarray:
    """c-vector components read off a 2x2 block, with no normalization."""
    u = np.asarray(u)
    c0 = np.real(u[..., 0, 0] + u[..., 1, 1]) / 2
    cx = -np.imag(u[..., 0, 1] + u[..., 1, 0]) / 2
    cy = np.real(u[..., 1, 0] - u[..., 0, 1]) / 2
    cz = -np.imag(u[..., 0, 0] - u[..., 1, 1]) / 2
    return np.stack([c0, cx, cy, cz], axis=-1)


def unitary_to_cvec(u, tol: float = 1e-6) -> np.ndarray:
    """Inverse of :func:`cvec_to_unitary`.

    Matrices with ``det(u) != 1`` are rejected rather than phase-corrected.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape[-2:] != (2, 2):
        raise ValueError(f"expected 2x2 matrices, got shape {u.shape}")
    det = np.linalg.det(u)
    if np.any(np.abs(det - 1.0) > tol):
        raise NotSpecialUnitaryError(f"determinant {det} differs from 1")
    eye = np.eye(2)
    gram = np.conj(np.swapaxes(u, -1, -2)) @ u
    if np.any(np.abs(gram - eye) > tol):
        raise NotSpecialUnitaryError("matrix is not unitary")
    return block_cvec(u)


def qutrit_hamiltonian(omega: complex, model: QutritModel) -> np.ndarray:
    """``(1/2)[omega|1><0| + lam*omega|2><1| + h.c.] + Delta|2><2|``."""
    omega = complex(omega)
    h = np.zeros((3, 3), dtype=complex)
    h[1, 0] = omega / 2
    h[2, 1] = model.lam * omega / 2
    h[0, 1] = np.conj(h[1, 0])
    h[1, 2] = np.conj(h[2, 1])
    h[2, 2] = model.Delta
    return h


def qutrit_generators(model: QutritModel):
    """Split ``-i H`` as ``G0 + Re(omega) G_re + Im(omega) G_im``."""
    g0 = -1j * qutrit_hamiltonian(0.0, model)
    g_re = -1j * (qutrit_hamiltonian(1.0, model) - qutrit_hamiltonian(0.0, model))
    g_im = -1j * (qutrit_hamiltonian(1j, model) - qutrit_hamiltonian(0.0, model))
    return g0, g_re, g_im


def qubit_loss(c) -> float:
    """Infidelity ``cz**2 + (c0 - 1/sqrt 2)**2`` of a vertical-plane pi/2 rotation."""
    c = _check_unit(c, 1e-6)
    return (c[..., 3] ** 2 + (c[..., 0] - SQRT_HALF) ** 2)


def qubit_loss_grad(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    g = np.zeros_like(c)
    g[..., 0] = 2 * (c[..., 0] - SQRT_HALF)
    g[..., 3] = 2 * c[..., 3]
    return g


def _phase_fixed_block(u):
    """Qubit block of a qutrit propagator with its determinant phase removed."""
    block = u[..., :2, :2]
    det = block[..., 0, 0] * block[..., 1, 1] - block[..., 0, 1] * block[..., 1, 0]
    phase = np.exp(-0.5j * np.angle(det))
    return block * phase[..., None, None], det, phase


def qutrit_cvec(u) -> np.ndarray:
    """Effective c-vector of the qubit block of a qutrit propagator.

    The global phase of the block (invisible to qubit tomography) is
    removed through its determinant; the magnitude is left untouched so
    leakage shows up as ``|c| < 1``.
    """
    block, _, _ = _phase_fixed_block(np.asarray(u))
    return block_cvec(block)


def qutrit_loss(u, leak_weight: float = 1.0) -> float:
    """Qubit-block infidelity plus weighted population leaked to ``|2>``.

    ``(c0 - 1/sqrt 2)**2 + cz**2 + (cx**2 + cy**2 - 1/2)**2
    + leak_weight * (|u20|**2 + |u21|**2)``.
    """
    u = np.asarray(u)
    c = qutrit_cvec(u)
    c0, cx, cy, cz = np.moveaxis(c, -1, 0)
    leak = np.abs(u[..., 2, 0]) ** 2 + np.abs(u[..., 2, 1]) ** 2
    return (c0 - SQRT_HALF) ** 2 + cz**2 + (cx**2 + cy**2 - 0.5) ** 2 + leak_weight * leak


def qutrit_loss_grad(u, leak_weight: float = 1.0):
    """Loss and its conjugate gradient ``dL/dRe(u) + i dL/dIm(u)``.

    Only the first two columns of ``u`` enter the loss; the gradient has the
    shape of ``u[..., :, :2]``.
    """
    u = np.asarray(u)
    cols = u[..., :, :2]
    block, det, phase = _phase_fixed_block(cols)
    c = block_cvec(block)
    c0, cx, cy, cz = np.moveaxis(c, -1, 0)
    r2 = cx**2 + cy**2 - 0.5
    leak = np.abs(cols[..., 2, 0]) ** 2 + np.abs(cols[..., 2, 1]) ** 2
    loss = (c0 - SQRT_HALF) ** 2 + cz**2 + r2**2 + leak_weight * leak

    gc0 = 2 * (c0 - SQRT_HALF)
    gcx = 4 * r2 * cx
    gcy = 4 * r2 * cy
    gcz = 2 * cz

    # conjugate gradient w.r.t. the phase-fixed block entries b
    gb = np.zeros(block.shape, dtype=complex)
    gb[..., 0, 0] = 0.5 * gc0 - 0.5j * gcz
    gb[..., 1, 1] = 0.5 * gc0 + 0.5j * gcz
    gb[..., 0, 1] = -0.5j * gcx - 0.5 * gcy
    gb[..., 1, 0] = -0.5j * gcx + 0.5 * gcy

    # b = a * p with p = exp(-i arg(det a) / 2):
    # dL = Re sum conj(gb) (p da) + (Im(w) / 2) d arg(det a), w = sum conj(gb) b
    raw = cols[..., :2, :2]
    w = np.sum(np.conj(gb) * block, axis=(-1, -2))
    # d arg(det a) = Im tr(inv(a) da), whose conjugate gradient is i conj(inv(a)^T)
    inv = np.linalg.inv(raw)
    g_arg = 1j * np.conj(np.swapaxes(inv, -1, -2))
    ga = gb * np.conj(phase)[..., None, None] + (np.imag(w) / 2)[..., None, None] * g_arg
    grad = np.zeros(cols.shape, dtype=complex)
    grad[..., :2, :2] = ga
    grad[..., 2, :] = 2 * leak_weight * cols[..., 2, :]
    return loss, grad
