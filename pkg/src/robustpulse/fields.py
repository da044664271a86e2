"""Complex control fields on the normalized time axis ``[-pi, pi]``."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline

T_START = -np.pi
T_END = np.pi
DURATION = 2 * np.pi


class ControlField:
    """A complex drive ``Omega(t)`` evaluated on arrays of training times.

    Subclasses implement :meth:`values`. ``omega_max`` is the amplitude cap
    the field is guaranteed to respect (``None`` if unknown).
    """

    name = "field"
    omega_max: float | None = None
    duration = DURATION

    def values(self, t) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        return self.values(np.asarray(t, dtype=float))

    def perturbed(self, delta: float = 0.0, alpha: float = 0.0) -> "ControlField":
        """``(1 + alpha) * Omega(t) * exp(i delta t)``."""
        if delta == 0.0 and alpha == 0.0:
            return self
        return PerturbedField(self, delta, alpha)

    def conjugate(self) -> "ControlField":
        return ConjugateField(self)

    def scaled(self, factor: complex) -> "ControlField":
        return ScaledField(self, factor)


class FunctionField(ControlField):
    def __init__(self, func, name="function", omega_max=None):
        self.func = func
        self.name = name
        self.omega_max = omega_max

    def values(self, t):
        return np.asarray(self.func(t), dtype=complex) * np.ones_like(t, dtype=complex)


class ZeroField(ControlField):
    name = "zero"
    omega_max = 0.0

    def values(self, t):
        return np.zeros_like(t, dtype=complex)


class ConstantField(ControlField):
    def __init__(self, value: complex, name="constant"):
        self.value = complex(value)
        self.name = name
        self.omega_max = abs(self.value)

    def values(self, t):
        return np.full(np.shape(t), self.value, dtype=complex)


class PerturbedField(ControlField):
    def __init__(self, base: ControlField, delta: float, alpha: float = 0.0):
        self.base = base
        self.delta = float(delta)
        self.alpha = float(alpha)
        self.name = base.name
        if base.omega_max is not None:
            self.omega_max = abs(1 + self.alpha) * base.omega_max

    def values(self, t):
        return (1 + self.alpha) * self.base.values(t) * np.exp(1j * self.delta * t)


class ConjugateField(ControlField):
    def __init__(self, base: ControlField):
        self.base = base
        self.name = f"{base.name}*"
        self.omega_max = base.omega_max

    def values(self, t):
        return np.conj(self.base.values(t))

    def conjugate(self):
        return self.base


class ScaledField(ControlField):
    def __init__(self, base: ControlField, factor: complex):
        self.base = base
        self.factor = complex(factor)
        self.name = base.name
        if base.omega_max is not None:
            self.omega_max = abs(self.factor) * base.omega_max

    def values(self, t):
        return self.factor * self.base.values(t)


class PiecewiseConstantField(ControlField):
    """Constant complex value on each interval ``[edges[k], edges[k+1])``."""

    discontinuous = True

    def __init__(self, edges, levels, name="piecewise"):
        self.edges = np.asarray(edges, dtype=float)
        self.levels = np.asarray(levels, dtype=complex)
        if len(self.edges) != len(self.levels) + 1:
            raise ValueError("need len(edges) == len(levels) + 1")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        self.name = name
        self.omega_max = float(np.max(np.abs(self.levels))) if len(self.levels) else 0.0

    def values(self, t):
        idx = np.searchsorted(self.edges, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.levels) - 1)
        return self.levels[idx]


class SampledField(ControlField):
    """Field interpolated from samples (cubic spline on I and Q separately)."""

    def __init__(self, t, samples, name="sampled", kind="cubic"):
        t = np.asarray(t, dtype=float)
        samples = np.asarray(samples, dtype=complex)
        if t.shape != samples.shape or t.ndim != 1 or len(t) < 2:
            raise ValueError("t and samples must be matching 1-d arrays")
        self.t = t
        self.samples = samples
        self.name = name
        self.kind = kind
        self.omega_max = float(np.max(np.abs(samples)))
        if kind == "cubic":
            self._re = CubicSpline(t, samples.real)
            self._im = CubicSpline(t, samples.imag)
        elif kind != "linear":
            raise ValueError(f"unknown interpolation kind {kind!r}")

    def values(self, t):
        if self.kind == "linear":
            return np.interp(t, self.t, self.samples.real) + 1j * np.interp(
                t, self.t, self.samples.imag
            )
        return self._re(t) + 1j * self._im(t)


def sample_field(field: ControlField, n: int = 1001):
    """Sample on an even grid over the pulse; returns ``(t, values)``."""
    t = np.linspace(T_START, T_END, n)
    return t, field(t)
