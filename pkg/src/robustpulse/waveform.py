"""Waveform-level verification: analytic signal, demodulation, and the
fidelity of the trajectory driven by a measured envelope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

from .fields import ControlField, SampledField
from .integrate import IntegratorConfig, propagate_qubit
from .quantum import PulseMeta
from .records import fmt


@dataclass
class WaveformTrace:
    """Real samples taken at ``sample_rate`` starting at time ``t0``."""

    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.samples)) / self.sample_rate


def analytic_signal(trace) -> np.ndarray:
    """Complex signal whose real part is ``trace`` and whose spectrum has no negative frequencies.

    Positive frequencies are doubled, negative ones zeroed, DC and Nyquist
    kept.
    """
    x = trace.samples if isinstance(trace, WaveformTrace) else np.asarray(trace, dtype=float)
    if x.size == 0:
        raise ValueError("empty waveform")
    if x.size < 16:
        raise ValueError(f"waveform needs at least 16 samples, got {x.size}")
    return hilbert(x)


def demodulate(analytic, f_center: float, sample_rate: float, t0: float = 0.0) -> np.ndarray:
    """Multiply by ``exp(-i 2 pi f_center t)`` on the sample grid."""
    if not abs(f_center) < sample_rate / 2:
        raise ValueError(f"|f_center| = {abs(f_center):g} Hz is not below Nyquist ({sample_rate / 2:g} Hz)")
    analytic = np.asarray(analytic, dtype=complex)
    t = t0 + np.arange(len(analytic)) / sample_rate
    return analytic * np.exp(-2j * np.pi * f_center * t)


def interior(n: int, fraction: float = 0.05) -> slice:
    """Slice dropping ``fraction`` of the samples at each end."""
    k = int(np.ceil(fraction * n))
    return slice(k, n - k)


def synthesize(field: ControlField, meta: PulseMeta, carrier_hz: float, sample_rate: float,
               scale: float = 1.0, padding: float = 0.0) -> WaveformTrace:
    """Real waveform ``scale * Re[Omega(t) exp(i 2 pi f t)]`` of a pulse on a carrier.

    The pulse starts at ``t = 0``; ``padding`` adds that fraction of the
    duration as silence before and after.
    """
    T = meta.duration_physical
    pad = padding * T
    n = int(round((T + 2 * pad) * sample_rate)) + 1
    t = -pad + np.arange(n) / sample_rate
    inside = (t >= 0) & (t <= T * (1 + 1e-12))
    env = np.zeros(n, dtype=complex)
    env[inside] = field(meta.to_training_time(t[inside]))
    return WaveformTrace(sample_rate, scale * np.real(env * np.exp(2j * np.pi * carrier_hz * t)), t0=-pad)


def envelope_of(trace: WaveformTrace, carrier_hz: float) -> np.ndarray:
    return demodulate(analytic_signal(trace), carrier_hz, trace.sample_rate, trace.t0)


def crop(t, values, start: float, duration: float):
    """Samples with ``start <= t <= start + duration`` (to within a rounding tolerance)."""
    t = np.asarray(t, dtype=float)
    tol = 1e-9 * duration
    keep = (t >= start - tol) & (t <= start + duration + tol)
    return t[keep], np.asarray(values)[keep]


def calibrate_amplitude(envelope, reference) -> float:
    """Least-squares scale ``s`` minimizing ``sum (s |envelope| - |reference|)^2``."""
    e = np.abs(np.asarray(envelope))
    r = np.abs(np.asarray(reference))
    denom = float(np.dot(e, e))
    if denom == 0:
        raise ValueError("envelope is identically zero")
    return float(np.dot(e, r) / denom)


@dataclass
class FidelityTrace:
    t: np.ndarray
    t_seconds: np.ndarray
    F: np.ndarray
    scale: float

    @property
    def min_F(self) -> float:
        return float(np.min(self.F))


def trajectory_fidelity(t_seconds, envelope, reference: ControlField, meta: PulseMeta,
                        calibrate: bool = True, cfg: IntegratorConfig = IntegratorConfig()) -> FidelityTrace:
    """``|tr(U_exp(t) U_theory(t)^dagger)| / 2`` along the pulse.

    Parameters
    ----------
    t_seconds, envelope : array_like
        Envelope samples covering the pulse, ``t`` from 0 to the duration.
    reference : ControlField
        Theory drive in training units.
    meta : PulseMeta
    calibrate : bool
        Fit the envelope scale to the reference by least squares. Otherwise
        the envelope is taken in rad/s and divided by ``meta.omega_2pi``.
    """
    t_seconds = np.asarray(t_seconds, dtype=float)
    envelope = np.asarray(envelope, dtype=complex)
    if t_seconds.shape != envelope.shape or t_seconds.ndim != 1 or len(t_seconds) < 4:
        raise ValueError("t_seconds and envelope must be matching 1-d arrays")
    dt = float(np.median(np.diff(t_seconds)))
    span = t_seconds[-1] - t_seconds[0]
    if abs(span - meta.duration_physical) > dt * (1 + 1e-9):
        raise ValueError(
            f"envelope spans {span:.6g} s but the pulse lasts {meta.duration_physical:.6g} s"
        )
    t_train = meta.to_training_time(t_seconds - t_seconds[0])
    if calibrate:
        scale = calibrate_amplitude(envelope, reference(t_train))
    else:
        scale = 1.0 / meta.omega_2pi
    measured = SampledField(t_train, scale * envelope, name="measured")
    c_exp = propagate_qubit(measured, cfg).states
    c_th = propagate_qubit(reference, cfg).states
    # for SU(2), tr(U_a U_b^dagger) / 2 is the dot product of the c-vectors
    F = np.clip(np.abs(np.sum(c_exp * c_th, axis=-1)), 0.0, 1.0)
    times = cfg.step_times()
    return FidelityTrace(times, meta.to_physical_time(times), F, scale)


def read_waveform_csv(path) -> WaveformTrace:
    """Read ``t_seconds,value`` rows, or a ``# sample_rate: R`` header and one value per row."""
    sample_rate = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                if key.strip() == "sample_rate":
                    sample_rate = float(value)
                continue
            parts = line.split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                continue  # column header
    if not rows:
        raise ValueError(f"{path}: no samples")
    data = np.array(rows)
    if data.shape[1] == 1:
        if sample_rate is None:
            raise ValueError(f"{path}: single-column data needs a '# sample_rate:' header")
        return WaveformTrace(sample_rate, data[:, 0])
    t = data[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-6 * np.mean(dt):
        raise ValueError(f"{path}: sample times must be evenly spaced and increasing")
    return WaveformTrace(1.0 / np.mean(dt), data[:, 1], t0=float(t[0]))


def write_waveform_csv(path, trace: WaveformTrace) -> None:
    with open(path, "w") as fh:
        fh.write("t_seconds,value\n")
        for t, v in zip(trace.times, trace.samples):
            fh.write(f"{fmt(t)},{fmt(v)}\n")
