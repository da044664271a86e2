"""Stochastic training of the control network.

Each iteration draws a batch of detunings, averages the loss over the
batch, and takes one Adam step. The parameters with the lowest loss on a
fixed detuning grid are kept and returned.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import network as nn
from .fields import DURATION
from .integrate import (
    QUBIT,
    IntegrationError,
    IntegratorConfig,
    Scenario,
    final_states,
    is_qubit,
    loss_and_gradient,
)
from .quantum import QutritModel, qutrit_cvec


class TrainingError(RuntimeError):
    """Training aborted; ``report`` holds the history up to the failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``deltas`` replaces random sampling by a fixed list of detunings
    (every batch then holds exactly these values).
    """

    delta_low: float = -0.8
    delta_high: float = 1.1
    batch_size: int = 100
    max_iters: int = 10_000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    system: object = QUBIT
    leak_weight: float = 1.0
    n_steps: int = 512
    n_validation: int = 101
    validate_every: int = 10
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    average_window: int = 200
    tolerance: float = 1e-8
    divergence: float = 1e3
    deltas: tuple | None = None

    def __post_init__(self):
        if not self.delta_low < self.delta_high:
            raise ValueError(f"delta_low ({self.delta_low}) must be below delta_high ({self.delta_high})")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.validate_every < 1 or self.n_validation < 2:
            raise ValueError("validate_every must be >= 1 and n_validation >= 2")
        if not (is_qubit(self.system) or isinstance(self.system, QutritModel)):
            raise ValueError(f"unknown system {self.system!r}")

    @property
    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.n_steps)

    def validation_grid(self) -> np.ndarray:
        return np.linspace(self.delta_low, self.delta_high, self.n_validation)


def sample_batch(cfg: TrainConfig, rng: np.random.Generator) -> list:
    """``batch_size`` scenarios with uniform detuning, ``alpha = 0``, ``theta = pi/2``."""
    if cfg.deltas is not None:
        return [Scenario(delta=float(d)) for d in cfg.deltas]
    deltas = rng.uniform(cfg.delta_low, cfg.delta_high, size=cfg.batch_size)
    return [Scenario(delta=float(d)) for d in deltas]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_update(x, grad, state: AdamState, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step; returns ``(x', state')`` without mutating inputs."""
    step = state.step + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad**2
    m_hat = m / (1 - beta1**step)
    v_hat = v / (1 - beta2**step)
    return x - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, step)


def train_step(params: nn.NetworkParams, batch, state: AdamState, cfg: TrainConfig):
    """Mean batch loss at ``params`` and the Adam-updated parameters.

    Returns
    -------
    (NetworkParams, AdamState, float)
    """
    loss, grad = loss_and_gradient(params, batch, cfg.integrator, cfg.system, cfg.leak_weight)
    flat, state = adam_update(params.flat(), grad, state, cfg.learning_rate,
                              cfg.beta1, cfg.beta2, cfg.eps)
    return params.with_flat(flat), state, loss


@dataclass
class ValidationResult:
    loss: float
    losses: np.ndarray
    block_loss: np.ndarray | None = None
    leakage: np.ndarray | None = None

    def summary(self) -> dict:
        out = {"mean_loss": float(self.loss), "max_loss": float(np.max(self.losses))}
        if self.leakage is not None:
            out["mean_block_loss"] = float(np.mean(self.block_loss))
            out["max_leakage"] = float(np.max(self.leakage))
        return out


def validate(params: nn.NetworkParams, cfg: TrainConfig, deltas=None) -> ValidationResult:
    """Loss on the validation grid; the qutrit case also splits out leakage."""
    deltas = cfg.validation_grid() if deltas is None else np.asarray(deltas, dtype=float)
    final = final_states(nn.NetworkField(params), deltas, cfg.system, cfg.integrator)
    if is_qubit(cfg.system):
        losses = final[:, 3] ** 2 + (final[:, 0] - 1 / np.sqrt(2)) ** 2
        return ValidationResult(float(np.mean(losses)), losses)
    c = qutrit_cvec(final[:, :, :2])
    block = (c[:, 0] - 1 / np.sqrt(2)) ** 2 + c[:, 3] ** 2 + (c[:, 1] ** 2 + c[:, 2] ** 2 - 0.5) ** 2
    leak = np.abs(final[:, 2, 0]) ** 2 + np.abs(final[:, 2, 1]) ** 2
    losses = block + cfg.leak_weight * leak
    return ValidationResult(float(np.mean(losses)), losses, block, leak)


def field_bandwidth(params: nn.NetworkParams, n: int = 4096) -> dict:
    """RMS bandwidth and envelope support of the field, in units of ``1/T``.

    A pulse squeezed toward ``t = 0`` shows up as a large bandwidth and a
    small support fraction.
    """
    t = np.linspace(-np.pi, np.pi, n, endpoint=False)
    omega = nn.field_at(params, t)
    spec = np.abs(np.fft.fft(omega)) ** 2
    freqs = np.fft.fftfreq(n, d=(t[1] - t[0]) / DURATION)
    total = spec.sum()
    if total == 0:
        return {"rms_bandwidth": 0.0, "support_fraction": 0.0}
    mean = np.sum(freqs * spec) / total
    rms = np.sqrt(np.sum((freqs - mean) ** 2 * spec) / total)
    amp = np.abs(omega)
    support = float(np.mean(amp > 0.05 * amp.max()))
    return {"rms_bandwidth": float(rms), "support_fraction": support}


@dataclass
class TrainReport:
    losses: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    best_iteration: int = 0
    best_validation: float = float("inf")
    iterations: int = 0
    converged: bool = False
    stop_reason: str = ""
    wall_clock: float = 0.0
    system: str = QUBIT
    seed: int = 0
    final_validation: dict = field(default_factory=dict)
    bandwidth: dict = field(default_factory=dict)
    checkpoints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "seed": self.seed,
            "iterations": self.iterations,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "wall_clock_s": self.wall_clock,
            "best_iteration": self.best_iteration,
            "best_validation_loss": self.best_validation,
            "final_validation": self.final_validation,
            "bandwidth": self.bandwidth,
            "checkpoints": self.checkpoints,
            "loss": [float(x) for x in self.losses],
            "validation": [[int(i), float(v)] for i, v in self.validation],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _system_tag(system) -> str:
    if is_qubit(system):
        return QUBIT
    return f"qutrit(Delta={system.Delta:.17g}, lam={system.lam:.17g})"


def _converged(losses, window: int, tol: float) -> bool:
    """Mean of the last ``window`` losses versus the ``window`` before it."""
    if len(losses) < 2 * window:
        return False
    recent = np.mean(losses[-window:])
    previous = np.mean(losses[-2 * window : -window])
    return abs(recent - previous) < tol


def train(cfg: TrainConfig, init: nn.NetworkParams | None = None, callback=None):
    """Run the training loop.

    Parameters
    ----------
    cfg : TrainConfig
    init : NetworkParams, optional
        Starting parameters; defaults to ``init_params(cfg.seed)``.
    callback : callable, optional
        Called as ``callback(iteration, loss)`` after each step.

    Returns
    -------
    (NetworkParams, TrainReport)
        The best parameters seen on the validation grid and the history.

    Raises
    ------
    TrainingError
        On divergence (batch loss above ``cfg.divergence``) or a non-finite
        gradient; ``exc.report`` holds the history so far.
    """
    start = time.perf_counter()
    params = nn.init_params(cfg.seed) if init is None else init.copy()
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(system=_system_tag(cfg.system), seed=cfg.seed)
    state = AdamState.zeros(params.n_params)

    best = params.copy()
    val = validate(params, cfg)
    report.validation.append((0, val.loss))
    report.best_validation = val.loss
    report.stop_reason = "max_iters"

    ckpt_dir = Path(cfg.checkpoint_dir) if cfg.checkpoint_dir else None
    for it in range(1, cfg.max_iters + 1):
        batch = sample_batch(cfg, rng)
        try:
            params, state, loss = train_step(params, batch, state, cfg)
        except IntegrationError as exc:
            report.iterations = it - 1
            report.stop_reason = "numerical failure"
            report.wall_clock = time.perf_counter() - start
            raise TrainingError(f"iteration {it}: {exc}", report) from exc
        report.losses.append(loss)
        report.iterations = it
        if callback is not None:
            callback(it, loss)
        if not np.isfinite(loss) or loss > cfg.divergence:
            report.stop_reason = "diverged"
            report.wall_clock = time.perf_counter() - start
            raise TrainingError(f"iteration {it}: loss {loss:.3g} exceeds {cfg.divergence:g}", report)

        last = it == cfg.max_iters
        converged = it % cfg.average_window == 0 and _converged(
            report.losses, cfg.average_window, cfg.tolerance)
        if it % cfg.validate_every == 0 or last or converged:
            val = validate(params, cfg)
            report.validation.append((it, val.loss))
            if val.loss < report.best_validation:
                report.best_validation = val.loss
                report.best_iteration = it
                best = params.copy()
        if ckpt_dir is not None and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            path = ckpt_dir / f"checkpoint_{it:06d}.json"
            nn.save_checkpoint(params, path)
            report.checkpoints.append(str(path))
        if converged:
            report.converged = True
            report.stop_reason = "converged"
            break

    report.final_validation = validate(best, cfg).summary()
    report.bandwidth = field_bandwidth(best)
    report.wall_clock = time.perf_counter() - start
    return best, report


def refine(params: nn.NetworkParams, cfg: TrainConfig, callback=None):
    """Resume training of a qubit-trained network on the qutrit model."""
    if not isinstance(cfg.system, QutritModel):
        raise ValueError("refine needs a qutrit system in the training config")
    return train(cfg, init=params, callback=callback)
