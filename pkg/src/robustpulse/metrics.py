"""Evaluation of pulses: simulated process tomography, unitary fits,
Ramsey figures of merit, detuning sweeps and decay benchmarks.

Process matrices use the operator basis ``E = (I, X, -iY, Z)`` so that a
unitary with c-vector ``c`` has ``chi = b b^dagger`` with
``b = (c0, -i cx, cy, -i cz)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .fields import ControlField
from .integrate import (
    QUBIT,
    IntegrationError,
    IntegratorConfig,
    final_states,
    is_qubit,
    recommended_steps,
)
from .quantum import (
    SIGMA_0,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    PulseMeta,
    QutritModel,
    cvec_to_unitary,
)
from .records import metadata

CHI_BASIS = np.array([SIGMA_0, SIGMA_X, -1j * SIGMA_Y, SIGMA_Z])
_B_PHASES = np.array([1.0, -1j, 1.0, -1j])

INPUT_LABELS = ("0", "x", "y", "1")
AXIS_LABELS = ("x", "y", "z")


def rotation(axis: str, angle: float) -> np.ndarray:
    """``exp(-i angle sigma_axis / 2)``."""
    sigma = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[axis]
    return np.cos(angle / 2) * SIGMA_0 - 1j * np.sin(angle / 2) * sigma


# preparation of |0>, |+x>, |+y>, |1> from |0>
PREPARATIONS = (
    SIGMA_0,
    rotation("y", np.pi / 2),
    rotation("x", -np.pi / 2),
    rotation("x", np.pi),
)
# pre-rotations that map the x, y, z axes onto z before a z readout
READOUT_ROTATIONS = (rotation("y", -np.pi / 2), rotation("x", np.pi / 2), SIGMA_0)


# ---------------------------------------------------------------- tomography


@dataclass
class QPTDataset:
    """Expectation values ``values[input, axis]`` for inputs |0>, |x>, |y>, |1>."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (4, 3):
            raise ValueError(f"expected 4 inputs x 3 axes, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dataset contains non-finite values")
        if np.any(np.abs(self.values) > 1 + 1e-9):
            raise ValueError("expectation values must lie in [-1, 1]")


def _embed(u2, dim):
    if dim == 2:
        return u2
    out = np.eye(dim, dtype=complex)
    out[:2, :2] = u2
    return out


def qpt_from_unitary(u, shots: int | None = None, rng=None) -> QPTDataset:
    """Tomography data for a 2x2 or 3x3 propagator, read out in the qubit subspace."""
    u = np.asarray(u, dtype=complex)
    dim = u.shape[0]
    values = np.empty((4, 3))
    ket0 = np.zeros(dim, dtype=complex)
    ket0[0] = 1
    z_op = np.zeros((dim, dim))
    z_op[0, 0], z_op[1, 1] = 1.0, -1.0
    for i, prep in enumerate(PREPARATIONS):
        psi = u @ (_embed(prep, dim) @ ket0)
        for j, rot in enumerate(READOUT_ROTATIONS):
            phi = _embed(rot, dim) @ psi
            values[i, j] = np.real(np.conj(phi) @ (z_op @ phi))
    if shots is not None:
        values = _sample_shots(values, shots, rng)
    return QPTDataset(np.clip(values, -1.0, 1.0))


def qpt_from_channel(channel, shots: int | None = None, rng=None) -> QPTDataset:
    """Tomography data for a qubit channel given as ``rho -> channel(rho)``."""
    values = np.empty((4, 3))
    ket0 = np.array([1, 0], dtype=complex)
    for i, prep in enumerate(PREPARATIONS):
        psi = prep @ ket0
        rho = channel(np.outer(psi, np.conj(psi)))
        for j, sigma in enumerate((SIGMA_X, SIGMA_Y, SIGMA_Z)):
            values[i, j] = np.real(np.trace(sigma @ rho))
    if shots is not None:
        values = _sample_shots(values, shots, rng)
    return QPTDataset(np.clip(values, -1.0, 1.0))


def _sample_shots(values, shots, rng):
    if shots < 1:
        raise ValueError("shots must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    p = np.clip((1 + values) / 2, 0.0, 1.0)
    return 2 * rng.binomial(shots, p) / shots - 1


def simulate_qpt(field: ControlField, delta: float = 0.0, system=QUBIT,
                 cfg: IntegratorConfig | None = None, shots: int | None = None, rng=None) -> QPTDataset:
    """Propagate ``field`` at detuning ``delta`` and return its tomography data."""
    cfg = IntegratorConfig(recommended_steps(system)) if cfg is None else cfg
    final = final_states(field, [delta], system, cfg)[0]
    u = cvec_to_unitary(final / np.linalg.norm(final)) if is_qubit(system) else final
    return qpt_from_unitary(u, shots, rng)


def _bloch_rho(r):
    return 0.5 * (SIGMA_0 + r[0] * SIGMA_X + r[1] * SIGMA_Y + r[2] * SIGMA_Z)


def reconstruct_chi(data: QPTDataset) -> np.ndarray:
    """Linear-inversion process matrix from tomography data.

    The outputs for the four inputs determine the channel on the operator
    basis ``|j><k|``; the Choi matrix is then projected onto the chi basis.
    """
    if not isinstance(data, QPTDataset):
        data = QPTDataset(data)
    rho0, rhox, rhoy, rho1 = (_bloch_rho(r) for r in data.values)
    eps = np.empty((2, 2, 2, 2), dtype=complex)
    eps[0, 0] = rho0
    eps[1, 1] = rho1
    eps[0, 1] = rhox + 1j * rhoy - 0.5 * (1 + 1j) * (rho0 + rho1)
    eps[1, 0] = rhox - 1j * rhoy - 0.5 * (1 - 1j) * (rho0 + rho1)
    choi = np.zeros((4, 4), dtype=complex)
    for j in range(2):
        for k in range(2):
            ejk = np.zeros((2, 2))
            ejk[j, k] = 1
            choi += np.kron(ejk, eps[j, k])
    eye = np.eye(2)
    # v_m = sum_j |j> (x) E_m |j>
    v = np.array([sum(np.kron(eye[j], e @ eye[j]) for j in range(2)) for e in CHI_BASIS])
    chi = np.conj(v) @ choi @ v.T / 4
    return 0.5 * (chi + np.conj(chi.T))


def chi_from_cvec(c) -> np.ndarray:
    """Rank-one process matrix ``b b^dagger`` of the unitary with c-vector ``c``."""
    c = np.asarray(c, dtype=float)
    if abs(np.linalg.norm(c) - 1) > 1e-6:
        raise ValueError("c-vector is not normalized")
    b = _B_PHASES * c
    return np.outer(b, np.conj(b))


def chi_of_channel(channel) -> np.ndarray:
    """Exact process matrix of a qubit channel (noise-free tomography)."""
    return reconstruct_chi(qpt_from_channel(channel))


@dataclass
class UnitaryFit:
    c: np.ndarray
    residual: float
    gap: float
    degenerate: bool


def fit_unitary(chi) -> UnitaryFit:
    """Closest rank-one unitary process in Frobenius norm.

    ``|chi - b b^dagger|^2 = tr(chi^2) - 2 Re(b^dagger chi b) + 1`` for unit
    ``b``, so the best real ``c`` is the leading eigenvector of
    ``Re(D^dagger chi D)`` with ``D = diag(1, -i, 1, -i)``. Sign convention:
    ``c0 >= 0``, ties broken by ``cx >= 0``.
    """
    chi = np.asarray(chi, dtype=complex)
    if chi.shape != (4, 4):
        raise ValueError("chi must be 4x4")
    if np.max(np.abs(chi - np.conj(chi.T))) > 1e-8:
        raise ValueError("chi is not Hermitian")
    d = np.diag(_B_PHASES)
    m = np.real(np.conj(d.T) @ chi @ d)
    m = 0.5 * (m + m.T)
    w, vecs = np.linalg.eigh(m)
    c = vecs[:, -1].copy()
    gap = float(w[-1] - w[-2])
    tie = 1e-12
    if c[0] < -tie or (abs(c[0]) <= tie and c[1] < 0):
        c = -c
    residual = float(np.linalg.norm(chi - chi_from_cvec(c)))
    return UnitaryFit(c, residual, gap, gap < 1e-9)


# ------------------------------------------------------------------ fidelity


def fidelity_chi(chi):
    """Fidelity against the best vertical-plane pi/2 rotation.

    ``chi`` is purified as ``chi / sqrt(tr chi^2)``. The overlap with the
    target at plane angle ``Theta`` is a trigonometric polynomial of degree
    two, maximized exactly through the roots of its derivative.

    Returns
    -------
    (float, float)
        ``F_chi`` and the maximizing ``Theta`` in ``(-pi, pi]``.
    """
    chi = np.asarray(chi, dtype=complex)
    purity = np.real(np.trace(chi @ chi))
    if not purity > 0:
        raise ValueError("tr(chi^2) must be positive")
    m = chi / np.sqrt(purity)
    a0, a1, b1, a2, b2 = _fidelity_harmonics(m)
    # f'(Theta) z^2 with z = exp(i Theta), a degree-4 polynomial
    poly = np.array([
        b2 + 1j * a2,
        0.5 * (b1 + 1j * a1),
        0.0,
        0.5 * (b1 - 1j * a1),
        b2 - 1j * a2,
    ])
    candidates = [0.0, np.pi]
    nz = np.flatnonzero(np.abs(poly) > 1e-300)
    if len(nz) and nz[-1] > nz[0]:
        candidates += list(np.angle(np.roots(poly[nz[0]:])))
    thetas = _polish(np.array(candidates), a1, b1, a2, b2)
    values = _harmonic_value(thetas, a0, a1, b1, a2, b2)
    k = int(np.argmax(values))
    theta = float(np.angle(np.exp(1j * thetas[k])))
    if theta == -np.pi:
        theta = np.pi
    return float(values[k]), theta


def _polish(theta, a1, b1, a2, b2, iters: int = 3):
    """Newton steps on the derivative; roots of nearly double zeros lose accuracy."""
    for _ in range(iters):
        d1 = -a1 * np.sin(theta) + b1 * np.cos(theta) - 2 * a2 * np.sin(2 * theta) + 2 * b2 * np.cos(2 * theta)
        d2 = -a1 * np.cos(theta) - b1 * np.sin(theta) - 4 * a2 * np.cos(2 * theta) - 4 * b2 * np.sin(2 * theta)
        step = np.where(d2 < 0, d1 / np.where(d2 < 0, d2, 1.0), 0.0)
        theta = theta - np.clip(step, -0.1, 0.1)
    return theta


def _fidelity_harmonics(m):
    s = 1 / np.sqrt(2)
    u = np.array([[s, 0, 0, 0], [0, -1j * s, 0, 0], [0, 0, s, 0]], dtype=complex)
    q = np.real(np.conj(u) @ m @ u.T)
    q = 0.5 * (q + q.T)
    a0 = q[0, 0] + 0.5 * (q[1, 1] + q[2, 2])
    return a0, 2 * q[0, 1], 2 * q[0, 2], 0.5 * (q[1, 1] - q[2, 2]), q[1, 2]


def _harmonic_value(theta, a0, a1, b1, a2, b2):
    theta = np.asarray(theta, dtype=float)
    return (a0 + a1 * np.cos(theta) + b1 * np.sin(theta)
            + a2 * np.cos(2 * theta) + b2 * np.sin(2 * theta))


def fidelity_chi_grid(chi, n: int = 3601):
    """Dense-grid version of :func:`fidelity_chi`, for cross-checks."""
    chi = np.asarray(chi, dtype=complex)
    m = chi / np.sqrt(np.real(np.trace(chi @ chi)))
    theta = np.linspace(-np.pi, np.pi, n)
    values = _harmonic_value(theta, *_fidelity_harmonics(m))
    k = int(np.argmax(values))
    return float(values[k]), float(theta[k])


def ramsey_prob(c, beta):
    """``|<1| U exp(i beta Z / 2) U |0>|^2`` for the unitary with c-vector ``c``."""
    c = np.asarray(c, dtype=float)
    c0, cx, cy, cz = np.moveaxis(c, -1, 0)
    beta = np.asarray(beta, dtype=float)
    return 4 * (cx**2 + cy**2) * (c0 * np.cos(beta / 2) + cz * np.sin(beta / 2)) ** 2


def ramsey_prob_matrix(c, beta) -> float:
    """Brute-force matrix-product evaluation of :func:`ramsey_prob`."""
    u = cvec_to_unitary(c)
    phase = np.diag([np.exp(0.5j * beta), np.exp(-0.5j * beta)])
    return float(abs((u @ phase @ u)[1, 0]) ** 2)


@dataclass(frozen=True)
class MaxTransfer:
    p: float
    beta0: float
    flagged: bool = False


def max_p1(c) -> MaxTransfer:
    """Largest Ramsey transfer over the virtual phase and where it occurs.

    ``p = 4 (cx^2 + cy^2)(c0^2 + cz^2)`` at ``beta0 = 2 arctan(cz / c0)``;
    ``c0 = 0`` uses the limit ``beta0 = pi`` and sets ``flagged``.
    """
    c0, cx, cy, cz = (float(v) for v in np.asarray(c, dtype=float))
    p = 4 * (cx**2 + cy**2) * (c0**2 + cz**2)
    if c0 == 0.0:
        return MaxTransfer(p, np.pi, True)
    return MaxTransfer(p, float(2 * np.arctan(cz / c0)))


# ------------------------------------------------------------------- sweeps


def if_hop_phase(delta_hz, t_pulse: float, t_dead: float):
    """Frame phase ``2 pi delta (T_pulse + T_dead)`` accumulated during a frequency hop."""
    return 2 * np.pi * np.asarray(delta_hz) * (t_pulse + t_dead)


def unwind_frame_phase(c, beta):
    """Rotate ``cx + i cy`` by ``exp(-i beta)``; ``c0`` and ``cz`` are untouched."""
    c = np.array(c, dtype=float)
    z = (c[..., 1] + 1j * c[..., 2]) * np.exp(-1j * np.asarray(beta))
    c[..., 1], c[..., 2] = z.real, z.imag
    return c


SWEEP_HEADER = ("delta", "c0", "cx", "cy", "cz", "F_chi", "max_p1", "beta0",
                "leakage", "theta_rot", "phi_rot")


@dataclass
class SweepRow:
    delta: float
    c: np.ndarray
    F_chi: float
    max_p1: float
    beta0: float
    leakage: float
    theta_rot: float
    phi_rot: float
    ok: bool = True
    message: str = ""

    def values(self) -> list:
        return [self.delta, *self.c, self.F_chi, self.max_p1, self.beta0,
                self.leakage, self.theta_rot, self.phi_rot]

    @classmethod
    def failed(cls, delta, message) -> "SweepRow":
        nan = float("nan")
        return cls(delta, np.full(4, nan), nan, nan, nan, nan, nan, nan, False, message)


def _row_from(delta, c, chi, leakage) -> SweepRow:
    f_chi, _ = fidelity_chi(chi)
    mp = max_p1(c)
    return SweepRow(
        delta=float(delta),
        c=np.asarray(c, dtype=float),
        F_chi=f_chi,
        max_p1=mp.p,
        beta0=mp.beta0,
        leakage=float(leakage),
        theta_rot=float(2 * np.arccos(np.clip(c[0], -1.0, 1.0))),
        phi_rot=float(np.arctan2(c[2], c[1])),
    )


def detuning_sweep(field: ControlField, deltas, system=QUBIT, meta: PulseMeta | None = None,
                   cfg: IntegratorConfig | None = None, unwind: bool = False) -> list:
    """Evaluate ``field`` at each detuning.

    The qubit c-vector comes straight from propagation. For the qutrit the
    c-vector is fitted from tomography in the qubit subspace and the
    leakage is read off the propagator. With ``unwind`` the frame phase of
    an IF hop (``meta`` supplies the pulse and dead times) is removed.
    A failure at one detuning yields a flagged row; the sweep continues.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    cfg = IntegratorConfig(recommended_steps(system)) if cfg is None else cfg
    if unwind and meta is None:
        raise ValueError("unwinding needs pulse metadata")
    try:
        finals = list(final_states(field, deltas, system, cfg))
    except IntegrationError:
        finals = []
        for d in deltas:
            try:
                finals.append(final_states(field, [d], system, cfg)[0])
            except IntegrationError as exc:
                finals.append(exc)
    rows = []
    for d, final in zip(deltas, finals):
        if isinstance(final, Exception) or not np.all(np.isfinite(final)):
            rows.append(SweepRow.failed(d, str(final)))
            continue
        if is_qubit(system):
            c = final / np.linalg.norm(final)
            chi = chi_from_cvec(c)
            leak = 0.0
        else:
            chi = reconstruct_chi(qpt_from_unitary(final))
            c = fit_unitary(chi).c
            leak = abs(final[2, 0]) ** 2 + abs(final[2, 1]) ** 2
        if unwind:
            beta = if_hop_phase(meta.detuning_hz(d), meta.duration_physical, meta.t_dead)
            c = unwind_frame_phase(c, beta)
            chi = chi_from_cvec(c) if is_qubit(system) else _rotate_chi_z(chi, beta)
        rows.append(_row_from(d, c, chi, leak))
    return rows


def _rotate_chi_z(chi, beta):
    """Process matrix after the frame rotation ``cx + i cy -> (cx + i cy) e^{-i beta}``."""
    r = np.eye(4, dtype=complex)
    cb, sb = np.cos(beta), np.sin(beta)
    r[1, 1] = r[2, 2] = cb
    r[1, 2] = r[2, 1] = -1j * sb
    return r @ chi @ np.conj(r.T)


def sweep_csv_rows(rows):
    return [r.values() for r in rows]


def sweep_json(rows, meta: dict | None = None) -> str:
    body = {
        "metadata": meta or metadata(),
        "columns": list(SWEEP_HEADER),
        "rows": [
            {**{k: float(v) for k, v in zip(SWEEP_HEADER, r.values())},
             "ok": r.ok, **({"message": r.message} if r.message else {})}
            for r in rows
        ],
    }
    return json.dumps(body, indent=1, allow_nan=True)


def rmse_vs_theory(rows_exp, rows_theory) -> float:
    """Root-mean-square difference of all four c-components over the grid."""
    if len(rows_exp) != len(rows_theory):
        raise ValueError(f"grid sizes differ: {len(rows_exp)} vs {len(rows_theory)}")
    d_exp = np.array([r.delta for r in rows_exp])
    d_th = np.array([r.delta for r in rows_theory])
    if not np.allclose(d_exp, d_th, rtol=0, atol=1e-12):
        raise ValueError("detuning grids do not match")
    c_exp = np.array([r.c for r in rows_exp])
    c_th = np.array([r.c for r in rows_theory])
    return float(np.sqrt(np.mean((c_exp - c_th) ** 2)))


def window_extent(deltas, values, threshold: float, center: float = 0.0):
    """Contiguous interval around ``center`` where ``values >= threshold``.

    Returns ``(low, high)`` as grid points, or ``None`` if ``center`` itself
    fails the threshold.
    """
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    k = int(np.argmin(np.abs(deltas - center)))
    if not values[k] >= threshold:
        return None
    lo = hi = k
    while lo > 0 and values[lo - 1] >= threshold:
        lo -= 1
    while hi < len(values) - 1 and values[hi + 1] >= threshold:
        hi += 1
    return float(deltas[lo]), float(deltas[hi])


# -------------------------------------------------------------------- decay


def incoherent_bound(T: float, T1: float, T2: float) -> float:
    """``1 - T/3 (1/T1 + 1/T_phi)`` with ``1/T_phi = 1/T2 - 1/(2 T1)``."""
    if not (T1 > 0 and T2 > 0):
        raise ValueError("T1 and T2 must be positive")
    if T < 0:
        raise ValueError("T must be non-negative")
    if T2 > 2 * T1:
        raise ValueError(f"T2 = {T2:g} exceeds 2*T1 = {2 * T1:g}")
    rate_phi = 1 / T2 - 1 / (2 * T1)
    return 1 - T / 3 * (1 / T1 + rate_phi)


@dataclass(frozen=True)
class NoiseModel:
    """Relaxation after each pulse of physical duration ``T``."""

    T: float
    T1: float = float("inf")
    T2: float = float("inf")

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if not (self.T1 > 0 and self.T2 > 0):
            raise ValueError("T1 and T2 must be positive")
        if np.isfinite(self.T1) and self.T2 > 2 * self.T1:
            raise ValueError(f"T2 = {self.T2:g} exceeds 2*T1 = {2 * self.T1:g}")

    @property
    def damping(self) -> float:
        return 1 - np.exp(-self.T / self.T1)

    @property
    def coherence(self) -> float:
        """Total off-diagonal decay factor ``exp(-T/T2)``."""
        return float(np.exp(-self.T / self.T2))

    def apply(self, rho):
        """Amplitude damping, then pure dephasing topping the coherence up to ``exp(-T/T2)``."""
        g = self.damping
        out = np.empty_like(rho)
        out[1, 1] = (1 - g) * rho[1, 1]
        out[0, 0] = rho[0, 0] + g * rho[1, 1]
        out[0, 1] = self.coherence * rho[0, 1]
        out[1, 0] = self.coherence * rho[1, 0]
        return out


@dataclass
class DecayTrace:
    """Pseudo-identity benchmark result.

    ``z[n]`` is the z-component after ``n`` four-pulse blocks starting from
    |0>. ``contrast[axis][n]`` is half the difference between the
    trajectories started from the two poles of ``axis``, which removes the
    offset of amplitude damping so each decays toward 0.
    """

    n: np.ndarray
    z: np.ndarray
    contrast: dict
    block_decay: dict
    fidelity: float
    fidelity_std: float
    noise: NoiseModel | None = None

    def to_dict(self) -> dict:
        return {
            "n": [int(k) for k in self.n],
            "z": [float(v) for v in self.z],
            "block_decay": {k: list(map(float, v)) for k, v in self.block_decay.items()},
            "fidelity": self.fidelity,
            "fidelity_std": self.fidelity_std,
            "noise": asdict(self.noise) if self.noise is not None else None,
        }


_AXES = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def _fit_decay(n, y):
    """Fit ``y = A lam^n``; returns ``(lam, std)``."""
    if np.allclose(y, y[0], rtol=0, atol=1e-13):
        return 1.0, 0.0
    lam0 = np.clip(abs(y[-1] / y[0]) ** (1 / max(n[-1], 1)), 1e-6, 1.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        popt, pcov = curve_fit(lambda k, a, lam: a * lam**k, n, y, p0=(y[0], lam0))
    std = float(np.sqrt(pcov[1, 1])) if np.all(np.isfinite(pcov)) else float("nan")
    return float(popt[1]), std


def pseudo_identity_decay(field: ControlField, n_max: int, noise: NoiseModel | None = None,
                          delta: float = 0.0, cfg: IntegratorConfig | None = None,
                          shots: int | None = None, rng=None) -> DecayTrace:
    """Repeated four-pulse blocks with relaxation after every pulse.

    Each Bloch axis is prepared at both poles; the half-difference of the
    two trajectories decays as ``lam_axis^n``. The per-block depolarizing
    parameter ``p4 = mean(lam_axis)`` gives the per-pulse fidelity
    ``(1 + p4^(1/4)) / 2``.
    """
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    cfg = IntegratorConfig() if cfg is None else cfg
    c = final_states(field, [delta], QUBIT, cfg)[0]
    u = cvec_to_unitary(c / np.linalg.norm(c))
    udg = np.conj(u.T)

    def pulse(rho):
        rho = u @ rho @ udg
        return noise.apply(rho) if noise is not None else rho

    rng = np.random.default_rng() if rng is None and shots is not None else rng
    n = np.arange(n_max + 1)
    contrast, decay, z_trace = {}, {}, None
    for axis, sigma in _AXES.items():
        traces = []
        for sign in (1, -1):
            rho = 0.5 * (SIGMA_0 + sign * sigma)
            vals = [np.real(np.trace(sigma @ rho))]
            for _ in range(n_max):
                for _ in range(4):
                    rho = pulse(rho)
                vals.append(np.real(np.trace(sigma @ rho)))
            vals = np.array(vals)
            if shots is not None:
                vals = _sample_shots(vals, shots, rng)
            traces.append(vals)
        if axis == "z":
            z_trace = traces[0]
        contrast[axis] = 0.5 * (traces[0] - traces[1])
        decay[axis] = _fit_decay(n, contrast[axis])
    lams = np.array([decay[a][0] for a in _AXES])
    stds = np.array([decay[a][1] for a in _AXES])
    p4 = float(np.mean(lams))
    p_pulse = np.sign(p4) * abs(p4) ** 0.25
    fidelity = 0.5 * (1 + p_pulse)
    # d F / d p4 = p4^(-3/4) / 8
    dp = np.sqrt(np.sum(stds**2)) / 3
    fidelity_std = float(dp * abs(p4) ** -0.75 / 8) if p4 != 0 else float("nan")
    return DecayTrace(n, z_trace, contrast, decay, float(fidelity), fidelity_std, noise)


def decay_csv_rows(trace: DecayTrace):
    return [[k, z, trace.contrast["x"][k], trace.contrast["y"][k], trace.contrast["z"][k]]
            for k, z in zip(trace.n, trace.z)]

