"""Reference pulses: rectangular, DRAG, and optimized composite sequences."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .fields import DURATION, T_END, T_START, ControlField, PiecewiseConstantField
from .integrate import IntegratorConfig, final_states, recommended_steps
from .quantum import SQRT_HALF, QutritModel, qutrit_loss

AMPLITUDE_CAP = 3.0


class RectangularField(ControlField):
    """Constant real drive of area ``theta`` over the pulse."""

    def __init__(self, theta: float):
        self.theta = float(theta)
        self.level = self.theta / DURATION
        self.name = "rectangular"
        self.omega_max = abs(self.level)

    def values(self, t):
        return np.full(np.shape(t), self.level, dtype=complex)


def rectangular_pulse(theta: float = np.pi / 2) -> RectangularField:
    if not 0 < theta <= 2 * np.pi:
        raise ValueError(f"theta must lie in (0, 2 pi], got {theta}")
    return RectangularField(theta)


class DragField(ControlField):
    """Cosine envelope ``I`` with derivative quadrature ``Q = k dI/dt / Delta``."""

    def __init__(self, theta: float, Delta: float, drag_coeff: float):
        self.theta = float(theta)
        self.Delta = float(Delta)
        self.drag_coeff = float(drag_coeff)
        self.a0 = self.theta / np.pi
        self.name = "drag"
        q_max = abs(self.drag_coeff) * self.a0 / (2 * abs(self.Delta))
        self.omega_max = float(np.hypot(self.a0, q_max))

    def in_phase(self, t):
        return self.a0 * (1 - np.cos(t - T_START)) / 2

    def quadrature(self, t):
        return self.drag_coeff * (self.a0 * np.sin(t - T_START) / 2) / self.Delta

    def values(self, t):
        return self.in_phase(t) + 1j * self.quadrature(t)


def drag_pulse(theta: float, Delta: float, drag_coeff: float) -> DragField:
    """Cosine-envelope pulse of area ``theta`` with a DRAG quadrature.

    Raises
    ------
    ValueError
        If ``Delta`` is zero or ``theta`` is outside ``(0, 2 pi]``.
    """
    if Delta == 0:
        raise ValueError("DRAG needs a nonzero anharmonic shift Delta")
    if not 0 < theta <= 2 * np.pi:
        raise ValueError(f"theta must lie in (0, 2 pi], got {theta}")
    return DragField(theta, Delta, drag_coeff)


def calibrate_drag(model: QutritModel, theta: float = np.pi / 2,
                   cfg: IntegratorConfig | None = None, bounds=(-10.0, 10.0)):
    """DRAG coefficient minimizing the on-resonance qutrit loss.

    Returns
    -------
    (DragField, float)
        The calibrated pulse and its loss.
    """
    cfg = IntegratorConfig(recommended_steps(model)) if cfg is None else cfg

    def loss(k):
        u = final_states(drag_pulse(theta, model.Delta, k), [0.0], model, cfg)[0]
        return float(qutrit_loss(u))

    grid = np.linspace(bounds[0], bounds[1], 41)
    values = [loss(k) for k in grid]
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(loss, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    k = float(res.x) if res.fun <= values[i] else float(grid[i])
    return drag_pulse(theta, model.Delta, k), loss(k)


# ------------------------------------------------------------ composite pulses


@dataclass(frozen=True)
class Segment:
    f: float
    a: float
    phi: float


@dataclass
class CompositeSequence:
    """Phased constant segments filling the pulse; fractions sum to 1."""

    segments: list

    def __post_init__(self):
        self.segments = [s if isinstance(s, Segment) else Segment(**s) for s in self.segments]
        if not self.segments:
            raise ValueError("need at least one segment")
        fr = np.array([s.f for s in self.segments])
        if np.any(fr <= 0) or np.any(fr > 1):
            raise ValueError("duration fractions must lie in (0, 1]")
        if abs(fr.sum() - 1) > 1e-12:
            raise ValueError(f"duration fractions sum to {fr.sum():.17g}, not 1")
        if any(abs(s.a) > AMPLITUDE_CAP for s in self.segments):
            raise ValueError(f"segment amplitude exceeds the cap {AMPLITUDE_CAP}")

    @property
    def fractions(self) -> np.ndarray:
        return np.array([s.f for s in self.segments])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([s.a for s in self.segments])

    @property
    def phases(self) -> np.ndarray:
        return np.array([s.phi for s in self.segments])

    def to_json(self) -> str:
        return json.dumps({"segments": [{"f": s.f, "a": s.a, "phi": s.phi} for s in self.segments]})

    @classmethod
    def from_json(cls, text: str) -> "CompositeSequence":
        data = json.loads(text)
        try:
            return cls([Segment(float(s["f"]), float(s["a"]), float(s["phi"])) for s in data["segments"]])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed composite sequence: {exc}") from exc

    @classmethod
    def from_arrays(cls, fractions, amplitudes, phases) -> "CompositeSequence":
        fr = np.asarray(fractions, dtype=float)
        fr = fr / fr.sum()
        fr[-1] = 1.0 - fr[:-1].sum()
        return cls([Segment(float(f), float(a), float(p)) for f, a, p in zip(fr, amplitudes, phases)])


def composite_field(seq: CompositeSequence) -> PiecewiseConstantField:
    edges = T_START + DURATION * np.concatenate([[0.0], np.cumsum(seq.fractions)])
    edges[-1] = T_END
    levels = seq.amplitudes * np.exp(1j * seq.phases)
    return PiecewiseConstantField(edges, levels, name=f"composite{len(seq.segments)}")


def _qmul(a, b):
    """c-vector of the product of two SU(2) elements (broadcasting)."""
    a0, av = a[..., 0], a[..., 1:]
    b0, bv = b[..., 0], b[..., 1:]
    c0 = a0 * b0 - np.sum(av * bv, axis=-1)
    cv = a0[..., None] * bv + b0[..., None] * av + np.cross(av, bv)
    return np.concatenate([c0[..., None], cv], axis=-1)


def _axis_rotation(vec, dt):
    """c-vector of ``exp(-i dt vec . sigma)`` for arrays of 3-vectors."""
    norm = np.linalg.norm(vec, axis=-1)
    angle = norm * dt
    safe = np.where(norm > 0, norm, 1.0)
    s = np.where(norm > 0, np.sin(angle) / safe, dt)
    return np.concatenate([np.cos(angle)[..., None], s[..., None] * vec], axis=-1)


def composite_cvecs(fractions, amplitudes, phases, deltas) -> np.ndarray:
    """Exact qubit c-vectors of a detuned composite sequence, shape ``(len(deltas), 4)``."""
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    fr = np.asarray(fractions, dtype=float)
    amps = np.asarray(amplitudes, dtype=float)
    ph = np.asarray(phases, dtype=float)
    c = np.zeros((len(deltas), 4))
    c[:, 0] = 1.0
    for f, a, p in zip(fr, amps, ph):
        # rotating-frame Hamiltonian (a cos p X + a sin p Y - delta Z) / 2
        vec = np.stack([np.full_like(deltas, a * np.cos(p)), np.full_like(deltas, a * np.sin(p)),
                        -deltas], axis=-1) / 2
        c = _qmul(_axis_rotation(vec, f * DURATION), c)
    # back to the drive frame: exp(-i delta t Z / 2) at both ends
    end = _axis_rotation(np.stack([0 * deltas, 0 * deltas, deltas], -1) / 2, T_END)
    start = _axis_rotation(np.stack([0 * deltas, 0 * deltas, deltas], -1) / 2, -T_START)
    return _qmul(end, _qmul(c, start))


def window_loss(c) -> np.ndarray:
    return c[..., 3] ** 2 + (c[..., 0] - SQRT_HALF) ** 2


@dataclass
class GAConfig:
    population: int = 60
    generations: int = 80
    mutation_scale: float = 0.15
    elite: int = 4
    tournament: int = 3
    crossover_rate: float = 0.9
    seed: int = 0
    refine_iters: int = 300
    window: tuple = (-0.8, 1.1)
    n_window: int = 41
    fixed_amplitude: float | None = None

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if not 0 <= self.elite < self.population:
            raise ValueError("elite must be in [0, population)")
        if self.generations < 0 or self.refine_iters < 0:
            raise ValueError("generations and refine_iters must be >= 0")


@dataclass
class CompositeResult:
    sequence: CompositeSequence
    loss: float
    ga_loss: float
    history: list = field(default_factory=list)


class _Problem:
    """Vector encoding ``(log-fractions, amplitudes, phases)`` and its objective."""

    def __init__(self, n, deltas, fixed_amplitude):
        self.n = n
        self.deltas = deltas
        self.fixed = fixed_amplitude
        amp_lo = -AMPLITUDE_CAP if fixed_amplitude is None else fixed_amplitude
        amp_hi = AMPLITUDE_CAP if fixed_amplitude is None else fixed_amplitude
        self.lower = np.concatenate([np.full(n, -3.0), np.full(n, amp_lo), np.full(n, -np.pi)])
        self.upper = np.concatenate([np.full(n, 3.0), np.full(n, amp_hi), np.full(n, np.pi)])

    def decode(self, x):
        logits, amps, ph = x[: self.n], x[self.n : 2 * self.n], x[2 * self.n :]
        w = np.exp(logits - logits.max())
        return w / w.sum(), amps, ph

    def loss(self, x) -> float:
        fr, amps, ph = self.decode(x)
        return float(np.mean(window_loss(composite_cvecs(fr, amps, ph, self.deltas))))

    def sequence(self, x) -> CompositeSequence:
        return CompositeSequence.from_arrays(*self.decode(x))


def _run_ga(problem: _Problem, cfg: GAConfig, rng, seed_member=None):
    span = problem.upper - problem.lower
    pop = problem.lower + rng.random((cfg.population, len(span))) * span
    if seed_member is not None:
        pop[0] = seed_member
    fit = np.array([problem.loss(x) for x in pop])
    history = [float(fit.min())]
    for _ in range(cfg.generations):
        order = np.argsort(fit, kind="stable")
        children = [pop[i].copy() for i in order[: cfg.elite]]
        while len(children) < cfg.population:
            parents = []
            for _ in range(2):
                idx = rng.integers(0, cfg.population, cfg.tournament)
                parents.append(pop[idx[np.argmin(fit[idx])]])
            if rng.random() < cfg.crossover_rate:
                w = rng.random(len(span))
                child = w * parents[0] + (1 - w) * parents[1]
            else:
                child = parents[0].copy()
            child = child + rng.normal(0.0, cfg.mutation_scale, len(span)) * span
            children.append(np.clip(child, problem.lower, problem.upper))
        pop = np.array(children)
        fit = np.array([problem.loss(x) for x in pop])
        history.append(float(fit.min()))
    best = int(np.argmin(fit))
    return pop[best], float(fit[best]), history


def optimize_composite(n_pulses: int, cfg: GAConfig = GAConfig(), warm_start: CompositeSequence | None = None):
    """GA search over phased segments followed by gradient refinement.

    The objective is the qubit loss averaged over an even detuning grid on
    ``cfg.window``. ``warm_start`` seeds one member of the initial
    population; a shorter sequence is padded by splitting its longest
    segment in two, which leaves its propagator unchanged.

    Returns
    -------
    CompositeResult
    """
    if not 1 <= n_pulses <= 8:
        raise ValueError("n_pulses must lie in [1, 8]")
    rng = np.random.default_rng(cfg.seed)
    deltas = np.linspace(cfg.window[0], cfg.window[1], cfg.n_window)
    problem = _Problem(n_pulses, deltas, cfg.fixed_amplitude)
    x_ws = None if warm_start is None else _encode(warm_start, n_pulses, problem)
    x_ga, ga_loss, history = _run_ga(problem, cfg, rng, x_ws)
    if x_ws is not None:
        if problem.loss(x_ws) < ga_loss:
            x_ga, ga_loss = x_ws, problem.loss(x_ws)
    x = x_ga
    if cfg.refine_iters:
        bounds = list(zip(problem.lower, problem.upper))
        res = minimize(problem.loss, x_ga, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.refine_iters})
        if res.fun <= ga_loss:
            x = res.x
    return CompositeResult(problem.sequence(x), problem.loss(x), ga_loss, history)


def _encode(seq: CompositeSequence, n: int, problem: _Problem):
    fr = list(seq.fractions)
    amps = list(seq.amplitudes)
    ph = list(seq.phases)
    if len(fr) > n:
        raise ValueError(f"cannot encode {len(fr)} segments into {n}")
    while len(fr) < n:
        k = int(np.argmax(fr))
        fr[k] /= 2
        fr.insert(k, fr[k])
        amps.insert(k, amps[k])
        ph.insert(k, ph[k])
    # softmax logits are shift invariant; put the longest segment at the upper bound
    logits = np.log(fr) - np.log(max(fr)) + problem.upper[0]
    x = np.concatenate([logits, amps, ph])
    return np.clip(x, problem.lower, problem.upper)
