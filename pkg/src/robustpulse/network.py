"""Neural-network control field.

A fully connected tanh network maps ``(t, theta)`` to two real outputs
``(o1, o2)``; the drive is ``Omega_max * tanh(o1) * exp(i o2)``.
Forward and reverse passes are written out by hand so the whole chain
network -> field -> integrator -> loss stays in numpy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fields import ControlField

CHECKPOINT_VERSION = 1
LAYER_SIZES = (2, 20, 20, 20, 2)
THETA_DEFAULT = np.pi / 2


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


@dataclass
class NetworkParams:
    """Weights ``W[k]`` (shape ``(out, in)``) and biases ``b[k]`` per layer."""

    weights: list
    biases: list
    omega_max: float = 3.0
    seed: int = 0
    sizes: tuple = field(default=LAYER_SIZES)

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        sizes = tuple(self.sizes)
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("number of layers does not match sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k + 1], sizes[k]) or b.shape != (sizes[k + 1],):
                raise ValueError(
                    f"layer {k}: expected W{(sizes[k + 1], sizes[k])} b{(sizes[k + 1],)}, "
                    f"got W{w.shape} b{b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite entries")
        self.sizes = sizes

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, vec) -> "NetworkParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {vec.shape}")
        weights, biases, i = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vec[i : i + w.size].reshape(w.shape))
            i += w.size
            biases.append(vec[i : i + b.size].copy())
            i += b.size
        return NetworkParams(weights, biases, self.omega_max, self.seed, self.sizes)

    def copy(self) -> "NetworkParams":
        return self.with_flat(self.flat())


def init_params(seed: int = 0, omega_max: float = 3.0, sizes=LAYER_SIZES) -> NetworkParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases, omega_max, seed, tuple(sizes))


def zero_params(omega_max: float = 3.0, sizes=LAYER_SIZES) -> NetworkParams:
    weights = [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(o) for o in sizes[1:]]
    return NetworkParams(weights, biases, omega_max, 0, tuple(sizes))


def _inputs(t, theta):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.stack([t, np.full_like(t, theta)], axis=1)


def forward(params: NetworkParams, t, theta: float = THETA_DEFAULT, cache: bool = False):
    """Network outputs ``(o1, o2)`` at times ``t``.

    With ``cache=True`` the layer activations are returned as a third
    element for :func:`backward`.
    """
    shape = np.shape(t)
    a = _inputs(np.ravel(t), theta)
    acts = [a]
    n_layers = len(params.weights)
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        a = np.tanh(z) if k < n_layers - 1 else z
        acts.append(a)
    o1, o2 = a[:, 0].reshape(shape), a[:, 1].reshape(shape)
    if shape == ():
        o1, o2 = o1[()], o2[()]
    if cache:
        return o1, o2, acts
    return o1, o2


def backward(params: NetworkParams, acts, g_o1, g_o2) -> np.ndarray:
    """Flat gradient given ``dL/do1`` and ``dL/do2`` at every sample time."""
    g = np.stack([g_o1, g_o2], axis=1)
    n_layers = len(params.weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        if k < n_layers - 1:
            g = g * (1.0 - acts[k + 1] ** 2)
        grads_w[k] = g.T @ acts[k]
        grads_b[k] = g.sum(axis=0)
        g = g @ params.weights[k]
    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return np.concatenate(parts)


def amplitude_phase(params: NetworkParams, t, theta: float = THETA_DEFAULT):
    """Signed amplitude ``A(t) = Omega_max tanh(o1)`` and phase ``o2``."""
    o1, o2 = forward(params, t, theta)
    return params.omega_max * np.tanh(o1), o2


def field_at(params: NetworkParams, t, delta: float = 0.0, alpha: float = 0.0,
             theta: float = THETA_DEFAULT):
    """``(1 + alpha) * Omega_max * tanh(o1) * exp(i (o2 + delta t))``."""
    amp, phase = amplitude_phase(params, t, theta)
    return (1 + alpha) * amp * np.exp(1j * (phase + delta * np.asarray(t)))


def lipschitz_bound(params: NetworkParams) -> float:
    """Upper bound on ``|d(o1, o2)/dt|`` from the product of layer norms."""
    bound = np.linalg.norm(params.weights[0][:, 0])
    for w in params.weights[1:]:
        bound *= np.linalg.norm(w, 2)
    return float(bound)


class NetworkField(ControlField):
    """The unperturbed network drive as a :class:`ControlField`."""

    name = "network"

    def __init__(self, params: NetworkParams, theta: float = THETA_DEFAULT, name="network"):
        self.params = params
        self.theta = theta
        self.name = name
        self.omega_max = params.omega_max

    def values(self, t):
        return field_at(self.params, t, theta=self.theta)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_list(xs) -> str:
    return "[" + ", ".join(_fmt(x) for x in np.ravel(xs)) + "]"


def checkpoint_text(params: NetworkParams) -> str:
    layers = []
    for w, b in zip(params.weights, params.biases):
        layers.append(
            '    {"rows": %d, "cols": %d, "weights": %s, "bias": %s}'
            % (w.shape[0], w.shape[1], _fmt_list(w), _fmt_list(b))
        )
    return (
        "{\n"
        f'  "version": {CHECKPOINT_VERSION},\n'
        f'  "seed": {int(params.seed)},\n'
        f'  "omega_max": {_fmt(params.omega_max)},\n'
        '  "layers": [\n' + ",\n".join(layers) + "\n  ]\n}\n"
    )


def save_checkpoint(params: NetworkParams, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(checkpoint_text(params))
    tmp.replace(path)


def params_from_dict(data: dict) -> NetworkParams:
    if not isinstance(data, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    missing = {"version", "seed", "omega_max", "layers"} - set(data)
    if missing:
        raise CheckpointError(f"checkpoint is missing keys: {sorted(missing)}")
    if data["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {data['version']} is not supported "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    weights, biases, sizes = [], [], []
    for k, layer in enumerate(data["layers"]):
        try:
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.array(layer["weights"], dtype=float)
            b = np.array(layer["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"layer {k} is malformed: {exc}") from exc
        if w.size != rows * cols or b.size != rows:
            raise CheckpointError(
                f"layer {k}: declared {rows}x{cols} but holds {w.size} weights, {b.size} biases"
            )
        if sizes and sizes[-1] != cols:
            raise CheckpointError(f"layer {k}: expects {cols} inputs, previous layer has {sizes[-1]}")
        if not sizes:
            sizes.append(cols)
        sizes.append(rows)
        weights.append(w.reshape(rows, cols))
        biases.append(b)
    if tuple(sizes) != LAYER_SIZES:
        raise CheckpointError(f"layer sizes {tuple(sizes)} differ from {LAYER_SIZES}")
    try:
        return NetworkParams(weights, biases, float(data["omega_max"]), int(data["seed"]), tuple(sizes))
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc


def load_checkpoint(path) -> NetworkParams:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not valid JSON ({exc})") from exc
    return params_from_dict(data)
