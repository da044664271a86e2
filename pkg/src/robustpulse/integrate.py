"""Fixed-step RK4 propagation with reverse-mode gradients.

The equations of motion are linear, ``x' = (G0 + Re(Omega) G_re + Im(Omega) G_im) x``.
The qubit state is the real c-vector; the qutrit state is its complex
propagator written in real block form. RK4 samples the field at ``t``,
``t + h/2`` and ``t + h``. The reverse pass differentiates the discrete
solver map itself, so gradients are exact to the solver rather than to the
continuous equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rk4
from . import network as nn
from .fields import T_END, T_START, ControlField, PiecewiseConstantField
from .quantum import (
    GEN_IM,
    GEN_RE,
    SQRT_HALF,
    QutritModel,
    block_cvec,
    qubit_loss_grad,
    qutrit_generators,
    qutrit_hamiltonian,
    qutrit_loss_grad,
)

QUBIT = "qubit"


class IntegrationError(FloatingPointError):
    """Non-finite field, state or gradient during propagation."""


@dataclass(frozen=True)
class IntegratorConfig:
    n_steps: int = 512

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 16:
            raise ValueError(f"n_steps must be an integer >= 16, got {self.n_steps}")

    @property
    def h(self) -> float:
        return (T_END - T_START) / self.n_steps

    def step_times(self) -> np.ndarray:
        return np.linspace(T_START, T_END, self.n_steps + 1)

    def stage_times(self) -> np.ndarray:
        """Field sample times: every step boundary and midpoint."""
        return np.linspace(T_START, T_END, 2 * self.n_steps + 1)

    def stage_triples(self, inset: float = 0.0) -> np.ndarray:
        """Start, midpoint and end time of every step, shape ``(N, 3)``.

        A positive ``inset`` (in units of ``h``) moves the start and end
        samples into the step, so a field that jumps at a step boundary is
        sampled on the correct side.
        """
        t = self.stage_times()
        triples = np.stack([t[:-1:2], t[1::2], t[2::2]], axis=-1)
        if inset:
            triples[:, 0] += inset * self.h
            triples[:, 2] -= inset * self.h
        return triples


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class Scenario:
    """One training condition: detuning, amplitude error and target angle."""

    delta: float = 0.0
    alpha: float = 0.0
    theta: float = np.pi / 2


def is_qubit(system) -> bool:
    return isinstance(system, str) and system == QUBIT


def recommended_steps(system, tolerance: float = 1e-8) -> int:
    """Step count for ``system``: 512 for the qubit, finer for a strongly anharmonic qutrit.

    RK4 damps an oscillation at frequency ``Delta`` by about ``(Delta h)^6 / 72``
    per step. The qutrit count is the smallest power of two (at least 512)
    keeping the accumulated norm drift ``N (Delta h)^6 / 72`` below
    ``tolerance``; training can afford a looser value
    (:data:`TRAINING_TOLERANCE`) because its loss only reads the first two
    columns, where the ``|2>`` amplitude is small.
    """
    if is_qubit(system):
        return 512
    n = 512
    while n * (abs(system.Delta) * 2 * np.pi / n) ** 6 / 72 > tolerance:
        n *= 2
    return n


TRAINING_TOLERANCE = 1e-5


def _real_block(g):
    g = np.asarray(g, dtype=complex)
    return np.block([[g.real, -g.imag], [g.imag, g.real]])


def _real_state(x):
    return np.concatenate([x.real, x.imag], axis=-2)


def _complex_state(x):
    d = x.shape[-2] // 2
    return x[..., :d, :] + 1j * x[..., d:, :]


def _system_arrays(system, columns: int):
    """Real generators ``(G0, G_re, G_im)`` and the initial state."""
    if is_qubit(system):
        x0 = np.zeros((4, 1))
        x0[0, 0] = 1.0
        return np.zeros((4, 4)), GEN_RE.copy(), GEN_IM.copy(), x0
    if isinstance(system, QutritModel):
        g0, g_re, g_im = qutrit_generators(system)
        x0 = _real_state(np.eye(3, dtype=complex)[:, :columns])
        return _real_block(g0), _real_block(g_re), _real_block(g_im), x0
    raise TypeError(f"unknown system {system!r}")


def _to_triples(omega, cfg: IntegratorConfig):
    """Accept ``(B, 2N+1)`` shared-grid or ``(B, N, 3)`` per-step samples."""
    omega = np.asarray(omega, dtype=complex)
    n = cfg.n_steps
    if omega.ndim == 1:
        omega = omega[None]
    if omega.ndim == 2 and omega.shape[-1] == 2 * n + 1:
        return np.stack([omega[:, :-1:2], omega[:, 1::2], omega[:, 2::2]], axis=-1), True
    if omega.ndim == 2 and omega.shape == (n, 3):
        omega = omega[None]
    if omega.ndim == 3 and omega.shape[1:] == (n, 3):
        return omega, False
    raise ValueError(f"expected (B, {2 * n + 1}) or (B, {n}, 3) field samples, got {omega.shape}")


def _fold_triples(g):
    """Adjoint of :func:`_to_triples` for shared-grid input."""
    out = np.zeros((g.shape[0], 2 * g.shape[1] + 1), dtype=g.dtype)
    out[:, :-1:2] += g[..., 0]
    out[:, 1::2] += g[..., 1]
    out[:, 2::2] += g[..., 2]
    return out


def _as_batch(omega, cfg: IntegratorConfig):
    triples, shared = _to_triples(omega, cfg)
    bad = ~np.isfinite(triples)
    if np.any(bad):
        k = np.argwhere(bad)[0]
        t = cfg.stage_triples()[k[1], k[2]]
        raise IntegrationError(f"non-finite field value at t = {t:.6g}")
    return np.ascontiguousarray(triples.real), np.ascontiguousarray(triples.imag), shared


def propagate_batch(omega, system, cfg: IntegratorConfig, columns: int = 3):
    """Step states for a batch of stage-sampled fields.

    ``omega`` is ``(B, 2N+1)`` on :meth:`IntegratorConfig.stage_times` or
    ``(B, N, 3)`` on :meth:`IntegratorConfig.stage_triples`.

    Returns
    -------
    numpy.ndarray
        Qubit: c-vectors of shape ``(B, N+1, 4)``.
        Qutrit: complex propagator columns ``(B, N+1, 3, columns)``.
    """
    a, b, _ = _as_batch(omega, cfg)
    g0, g_re, g_im, x0 = _system_arrays(system, columns)
    states = _rk4.forward(a, b, g0, g_re, g_im, x0, cfg.h)
    if not np.all(np.isfinite(states)):
        raise IntegrationError("state diverged during propagation")
    if is_qubit(system):
        return states[..., 0]
    return _complex_state(states)


def _field_times(field: ControlField, cfg: IntegratorConfig):
    inset = 1e-9 if getattr(field, "discontinuous", False) else 0.0
    return cfg.stage_triples(inset)


def _field_stage_samples(field: ControlField, cfg: IntegratorConfig):
    """Per-step samples ``(N, 3)`` of ``field``."""
    return np.asarray(field(_field_times(field, cfg)), dtype=complex)


def propagate_qubit(field: ControlField, cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """c-vector trajectory starting from ``c(-pi) = (1, 0, 0, 0)``."""
    states = propagate_batch(_field_stage_samples(field, cfg), QUBIT, cfg)
    return Trajectory(cfg.step_times(), states[0])


def propagate_qutrit(field: ControlField, model: QutritModel,
                     cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """3x3 propagator trajectory starting from ``U(-pi) = I``."""
    states = propagate_batch(_field_stage_samples(field, cfg), model, cfg)
    return Trajectory(cfg.step_times(), states[0])


def final_qubit(field: ControlField, cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    return propagate_batch(_field_stage_samples(field, cfg), QUBIT, cfg)[0, -1]


def final_qutrit(field: ControlField, model: QutritModel,
                 cfg: IntegratorConfig = IntegratorConfig()) -> np.ndarray:
    return propagate_batch(_field_stage_samples(field, cfg), model, cfg)[0, -1]


def final_states(field: ControlField, deltas, system=QUBIT,
                 cfg: IntegratorConfig = IntegratorConfig(), alpha: float = 0.0,
                 exact: bool | None = None):
    """Final states of ``field`` detuned by each entry of ``deltas``.

    Piecewise-constant fields are propagated exactly, segment by segment,
    unless ``exact=False``; everything else goes through RK4.
    """
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if exact is None:
        exact = isinstance(field, PiecewiseConstantField)
    if exact:
        if not isinstance(field, PiecewiseConstantField):
            raise TypeError("exact propagation needs a piecewise-constant field")
        return piecewise_exact_finals(field, deltas, system, alpha)
    times = _field_times(field, cfg)
    base = np.asarray(field(times), dtype=complex)
    omega = (1 + alpha) * base[None] * np.exp(1j * deltas[:, None, None] * times[None])
    return propagate_batch(omega, system, cfg)[:, -1]


def piecewise_exact_finals(field: PiecewiseConstantField, deltas, system=QUBIT, alpha: float = 0.0):
    """Exact final states of a detuned piecewise-constant drive.

    In the frame ``V(t) = diag(1, e^{i delta t}, e^{2 i delta t})`` each
    segment has a constant Hamiltonian ``H(Omega_k) + diag(0, delta, 2 delta)``;
    the propagator is the product of the segment exponentials, mapped back
    with ``V``.
    """
    qutrit = not is_qubit(system)
    model = system if qutrit else QutritModel(0.0, 1.0)
    dim = 3 if qutrit else 2
    edges = np.clip(field.edges, T_START, T_END)
    out = []
    for delta in np.atleast_1d(deltas):
        shift = np.diag([0.0, delta, 2 * delta])[:dim, :dim]
        u = np.eye(dim, dtype=complex)
        for k, level in enumerate(field.levels):
            dt = edges[k + 1] - edges[k]
            if dt <= 0:
                continue
            h = qutrit_hamiltonian((1 + alpha) * level, model)[:dim, :dim] + shift
            w, v = np.linalg.eigh(h)
            u = (v * np.exp(-1j * w * dt)) @ np.conj(v.T) @ u
        phases_end = np.exp(1j * delta * np.arange(dim) * edges[-1])
        phases_start = np.exp(1j * delta * np.arange(dim) * edges[0])
        u = phases_end[:, None] * u * np.conj(phases_start)[None, :]
        out.append(u if qutrit else block_cvec(u))
    return np.array(out)


def state_losses(final, system, leak_weight: float = 1.0):
    """Loss of each final state (c-vector or qutrit propagator)."""
    if is_qubit(system):
        return final[..., 3] ** 2 + (final[..., 0] - SQRT_HALF) ** 2
    return qutrit_loss_grad(final[..., :, :2], leak_weight)[0]


def field_loss_and_gradient(omega, system, cfg: IntegratorConfig, leak_weight: float = 1.0):
    """Per-sample losses and ``dL/dRe(omega) + i dL/dIm(omega)``.

    ``omega`` is ``(B, 2N+1)`` or ``(B, N, 3)`` as in :func:`propagate_batch`;
    the gradient has the same shape.
    """
    a, b, shared = _as_batch(omega, cfg)
    g0, g_re, g_im, x0 = _system_arrays(system, columns=2)
    states = _rk4.forward(a, b, g0, g_re, g_im, x0, cfg.h)
    final = states[:, -1]
    if not np.all(np.isfinite(final)):
        raise IntegrationError("state diverged during propagation")
    if is_qubit(system):
        c = final[..., 0]
        loss = c[..., 3] ** 2 + (c[..., 0] - SQRT_HALF) ** 2
        x_bar = qubit_loss_grad(c)[..., None]
    else:
        loss, g = qutrit_loss_grad(_complex_state(final), leak_weight)
        x_bar = _real_state(g)
    if not np.all(np.isfinite(loss)):
        raise IntegrationError("non-finite loss")
    ga, gb = _rk4.backward(a, b, g0, g_re, g_im, states, np.ascontiguousarray(x_bar), cfg.h)
    g = ga + 1j * gb
    return loss, (_fold_triples(g) if shared else g)


def loss_and_gradient(params: nn.NetworkParams, scenarios, cfg: IntegratorConfig = IntegratorConfig(),
                      system=QUBIT, leak_weight: float = 1.0):
    """Mean loss over ``scenarios`` and its gradient over the flat network parameters.

    Batch members are reduced in the order given, so results are
    reproducible bit for bit.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("need at least one scenario")
    if not np.all(np.isfinite(params.flat())):
        raise IntegrationError("network parameters are not finite")
    times = cfg.stage_times()
    n = len(scenarios)
    by_theta: dict = {}
    for k, sc in enumerate(scenarios):
        by_theta.setdefault(float(sc.theta), []).append(k)

    losses = np.empty(n)
    grad = np.zeros(params.n_params)
    for theta, idx in by_theta.items():
        o1, o2, acts = nn.forward(params, times, theta, cache=True)
        tanh1 = np.tanh(o1)
        amp = params.omega_max * tanh1
        delta = np.array([scenarios[k].delta for k in idx])[:, None]
        alpha = np.array([scenarios[k].alpha for k in idx])[:, None]
        carrier = np.exp(1j * (o2[None, :] + delta * times[None, :]))
        omega = (1 + alpha) * amp[None, :] * carrier
        batch_loss, omega_bar = field_loss_and_gradient(omega, system, cfg, leak_weight)
        losses[idx] = batch_loss
        # Omega = (1 + alpha) A exp(i (phi + delta t))
        g_amp = np.real(np.conj(omega_bar) * (1 + alpha) * carrier).sum(axis=0)
        g_phase = np.real(np.conj(omega_bar) * 1j * omega).sum(axis=0)
        g_o1 = g_amp * params.omega_max * (1 - tanh1**2)
        grad += nn.backward(params, acts, g_o1, g_phase)
    grad /= n
    if not np.all(np.isfinite(grad)):
        raise IntegrationError("non-finite gradient")
    return float(np.sum(losses) / n), grad


def scenario_losses(params: nn.NetworkParams, deltas, cfg: IntegratorConfig = IntegratorConfig(),
                    system=QUBIT, leak_weight: float = 1.0, theta: float = np.pi / 2):
    """Loss at each detuning, without gradients."""
    field = nn.NetworkField(params, theta)
    return state_losses(final_states(field, deltas, system, cfg), system, leak_weight)
