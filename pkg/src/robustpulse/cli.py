"""Command-line interface.

Every command reads a JSON config (``--config``), writes into ``--out``,
and stamps its outputs with the tool version and a hash of the effective
configuration. Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import baselines as bl
from . import metrics as mx
from . import network as nn
from . import training as tr
from . import waveform as wf
from .fields import PiecewiseConstantField
from .integrate import QUBIT, TRAINING_TOLERANCE, IntegrationError, IntegratorConfig, recommended_steps
from .quantum import PulseMeta, QutritModel
from .records import fmt, metadata, read_csv, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer"}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SYSTEM_SCHEMA = {
    "oneOf": [
        _obj({"type": {"const": "qubit"}}, ["type"]),
        _obj({"type": {"const": "qutrit"}, "Delta": _NUM, "anharmonicity_hz": _NUM,
              "duration_s": _POS, "lam": _POS}, ["type"]),
    ]
}

PULSE_SCHEMA = {
    "oneOf": [
        _obj({"kind": {"const": "network"}, "name": {"type": "string"},
              "checkpoint": {"type": "string"}}, ["kind", "checkpoint"]),
        _obj({"kind": {"const": "rectangular"}, "name": {"type": "string"},
              "theta": _POS}, ["kind"]),
        _obj({"kind": {"const": "drag"}, "name": {"type": "string"}, "theta": _POS,
              "drag_coeff": _NUM, "Delta": _NUM, "calibrate": {"type": "boolean"}}, ["kind"]),
        _obj({"kind": {"const": "composite"}, "name": {"type": "string"},
              "sequence": {"type": "string"},
              "segments": {"type": "array", "items": _obj({"f": _POS, "a": _NUM, "phi": _NUM},
                                                          ["f", "a", "phi"])}}, ["kind"]),
    ]
}

GRID_SCHEMA = {
    "oneOf": [
        _obj({"low": _NUM, "high": _NUM, "step": _POS}, ["low", "high", "step"]),
        _obj({"deltas": {"type": "array", "items": _NUM, "minItems": 1}}, ["deltas"]),
    ]
}

CONFIG_SCHEMA = _obj({
    "seed": _INT,
    "system": SYSTEM_SCHEMA,
    "meta": _obj({"duration_s": _POS, "t_dead_s": {"type": "number", "minimum": 0}}),
    "integrator": _obj({"n_steps": {"type": "integer", "minimum": 16}}),
    "train": _obj({
        "delta_low": _NUM, "delta_high": _NUM,
        "batch_size": {"type": "integer", "minimum": 1},
        "max_iters": {"type": "integer", "minimum": 0},
        "learning_rate": _POS, "leak_weight": {"type": "number", "minimum": 0},
        "n_steps": {"type": "integer", "minimum": 16},
        "validate_every": {"type": "integer", "minimum": 1},
        "checkpoint_every": {"type": "integer", "minimum": 0},
    }),
    "init_checkpoint": {"type": "string"},
    "pulse": PULSE_SCHEMA,
    "pulses": {"type": "array", "items": PULSE_SCHEMA},
    "grid": GRID_SCHEMA,
    "unwind": {"type": "boolean"},
    "threshold": {"type": "number", "minimum": 0, "maximum": 1},
    "export": _obj({"sample_rate": _POS}),
    "verify": _obj({"waveform": {"type": "string"}, "carrier_hz": _NUM,
                    "calibrate": {"type": "boolean"}}, ["waveform", "carrier_hz"]),
    "decay": _obj({"n_max": {"type": "integer", "minimum": 4}, "T1_s": _POS, "T2_s": _POS,
                   "noise": {"type": "boolean"}, "shots": {"type": "integer", "minimum": 1},
                   "delta": _NUM}),
})

COMMANDS = ("train", "refine", "sweep", "compare", "verify", "export", "decay")


def load_config(path, seed=None, max_iters=None) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if seed is not None:
        config["seed"] = seed
    if max_iters is not None:
        config.setdefault("train", {})["max_iters"] = max_iters
    validate_config(config)
    return config


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc
    train = config.get("train", {})
    lo, hi = train.get("delta_low", -0.8), train.get("delta_high", 1.1)
    if not lo < hi:
        raise ConfigError(f"train.delta_low ({lo}) must be below train.delta_high ({hi})")
    grid = config.get("grid")
    if grid and "low" in grid and not grid["low"] <= grid["high"]:
        raise ConfigError("grid.low must not exceed grid.high")
    system = config.get("system")
    if system and system["type"] == "qutrit":
        if "Delta" not in system and not {"anharmonicity_hz", "duration_s"} <= set(system):
            raise ConfigError("qutrit system needs Delta or anharmonicity_hz and duration_s")


def _require(config, *keys):
    for key in keys:
        if key not in config:
            raise ConfigError(f"this command needs '{key}' in the config")


def build_system(config):
    spec = config.get("system", {"type": "qubit"})
    if spec["type"] == "qubit":
        return QUBIT
    lam = spec.get("lam", 1.37)
    if "Delta" in spec:
        return QutritModel(spec["Delta"], lam)
    return QutritModel.from_physical(spec["anharmonicity_hz"], spec["duration_s"], lam)


def build_meta(config) -> PulseMeta:
    meta = config.get("meta", {})
    return PulseMeta(meta.get("duration_s", 60e-9), meta.get("t_dead_s", 0.0))


def integrator(config, system) -> IntegratorConfig:
    n = config.get("integrator", {}).get("n_steps", recommended_steps(system))
    return IntegratorConfig(n)


def build_grid(config) -> np.ndarray:
    grid = config["grid"]
    if "deltas" in grid:
        return np.array(grid["deltas"], dtype=float)
    n = int(round((grid["high"] - grid["low"]) / grid["step"])) + 1
    return np.linspace(grid["low"], grid["high"], n)


def build_pulse(spec, system, config):
    """``(name, field)`` for a pulse spec."""
    kind = spec["kind"]
    name = spec.get("name", kind)
    if kind == "network":
        path = Path(spec["checkpoint"])
        if not path.exists():
            raise ConfigError(f"checkpoint {path} not found")
        try:
            return name, nn.NetworkField(nn.load_checkpoint(path), name=name)
        except nn.CheckpointError as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "rectangular":
        return name, bl.rectangular_pulse(spec.get("theta", np.pi / 2))
    if kind == "drag":
        theta = spec.get("theta", np.pi / 2)
        if isinstance(system, QutritModel) and (spec.get("calibrate") or "drag_coeff" not in spec):
            field, _ = bl.calibrate_drag(system, theta, integrator(config, system))
            return name, field
        delta_anh = system.Delta if isinstance(system, QutritModel) else spec.get("Delta")
        if "drag_coeff" not in spec or delta_anh is None:
            raise ConfigError("a DRAG pulse on the qubit model needs drag_coeff and Delta")
        return name, bl.drag_pulse(theta, delta_anh, spec["drag_coeff"])
    if "sequence" in spec:
        path = Path(spec["sequence"])
        if not path.exists():
            raise ConfigError(f"composite sequence {path} not found")
        seq = bl.CompositeSequence.from_json(path.read_text())
    elif "segments" in spec:
        seq = bl.CompositeSequence(spec["segments"])
    else:
        raise ConfigError("composite pulse needs 'sequence' or 'segments'")
    return name, bl.composite_field(seq)


def _meta_for(config, command, **extra):
    return metadata(config, command=command, **extra)


# ------------------------------------------------------------------ commands


def pulse_table(params: nn.NetworkParams, n: int = 1001):
    t = np.linspace(-np.pi, np.pi, n)
    amp, phase = nn.amplitude_phase(params, t)
    return [[ti, a, p, a * np.cos(p), a * np.sin(p)] for ti, a, p in zip(t, amp, phase)]


def _train_config(config, system) -> tr.TrainConfig:
    opts = dict(config.get("train", {}))
    return tr.TrainConfig(seed=config.get("seed", 0), system=system, **opts)


def _write_training(out: Path, config, params, report, command):
    meta = _meta_for(config, command)
    nn.save_checkpoint(params, out / "checkpoint.json")
    (out / "report.json").write_text(json.dumps({"metadata": meta, **report.to_dict()}, indent=1))
    write_csv(out / "pulse.csv", ["t", "A", "phase", "I", "Q"], pulse_table(params), meta)


def cmd_train(config, out: Path) -> int:
    system = build_system(config)
    if system != QUBIT:
        raise ConfigError("train runs on the qubit model; use refine for the qutrit")
    cfg = _train_config(config, system)
    if cfg.checkpoint_every:
        cfg.checkpoint_dir = str(out / "checkpoints")
    params, report = tr.train(cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write_training(out, config, params, report, "train")
    print(f"trained {report.iterations} iterations; validation loss {report.best_validation:.3e}")
    return EXIT_OK


def cmd_refine(config, out: Path) -> int:
    _require(config, "init_checkpoint")
    system = build_system(config)
    if not isinstance(system, QutritModel):
        raise ConfigError("refine needs a qutrit system")
    path = Path(config["init_checkpoint"])
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    try:
        init = nn.load_checkpoint(path)
    except nn.CheckpointError as exc:
        raise ConfigError(str(exc)) from exc
    opts = config.get("train", {})
    cfg = _train_config(config, system)
    if "n_steps" not in opts:
        cfg.n_steps = recommended_steps(system, TRAINING_TOLERANCE)
    if cfg.checkpoint_every:
        cfg.checkpoint_dir = str(out / "checkpoints")
    params, report = tr.refine(init, cfg)
    out.mkdir(parents=True, exist_ok=True)
    _write_training(out, config, params, report, "refine")
    fv = report.final_validation
    print(f"refined {report.iterations} iterations; block loss {fv.get('mean_block_loss', float('nan')):.3e},"
          f" max leakage {fv.get('max_leakage', float('nan')):.3e}")
    return EXIT_OK


def cmd_sweep(config, out: Path) -> int:
    _require(config, "pulse", "grid")
    system = build_system(config)
    name, field = build_pulse(config["pulse"], system, config)
    rows = mx.detuning_sweep(field, build_grid(config), system, build_meta(config),
                             integrator(config, system), unwind=config.get("unwind", False))
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta_for(config, "sweep", pulse=name, system=str(tr._system_tag(system)))
    write_csv(out / "sweep.csv", mx.SWEEP_HEADER, mx.sweep_csv_rows(rows), meta)
    (out / "sweep.json").write_text(mx.sweep_json(rows, meta))
    failed = sum(not r.ok for r in rows)
    print(f"{len(rows)} rows written" + (f", {failed} flagged" if failed else ""))
    return EXIT_OK


def compare_pulses(named_fields, deltas, system, cfg, threshold=0.99):
    """``max_p1`` curves and threshold windows per pulse."""
    curves, windows = {}, {}
    for name, field in named_fields:
        rows = mx.detuning_sweep(field, deltas, system, cfg=cfg)
        p = np.array([r.max_p1 for r in rows])
        curves[name] = p
        windows[name] = mx.window_extent(deltas, p, threshold)
    return curves, windows


def cmd_compare(config, out: Path) -> int:
    _require(config, "pulses", "grid")
    if len(config["pulses"]) < 2:
        raise ConfigError("compare needs at least 2 pulses")
    system = build_system(config)
    named = [build_pulse(spec, system, config) for spec in config["pulses"]]
    names = [n for n, _ in named]
    if len(set(names)) != len(names):
        raise ConfigError("pulse names must be unique")
    deltas = build_grid(config)
    threshold = config.get("threshold", 0.99)
    curves, windows = compare_pulses(named, deltas, system, integrator(config, system), threshold)
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta_for(config, "compare", threshold=threshold)
    rows = [[d, *(curves[n][k] for n in names)] for k, d in enumerate(deltas)]
    write_csv(out / "compare.csv", ["delta", *(f"max_p1_{n}" for n in names)], rows, meta)
    lines = [f"<!-- {k}: {v} -->" for k, v in meta.items()]
    lines += ["", f"| pulse | low | high | width (max_p1 >= {threshold:g}) |", "|---|---|---|---|"]
    for n in names:
        w = windows[n]
        if w is None:
            lines.append(f"| {n} | - | - | 0 |")
        else:
            lines.append(f"| {n} | {fmt(w[0])} | {fmt(w[1])} | {fmt(w[1] - w[0])} |")
    (out / "compare.md").write_text("\n".join(lines) + "\n")
    print("\n".join(lines[len(meta) + 1:]))
    return EXIT_OK


def cmd_verify(config, out: Path) -> int:
    _require(config, "verify", "pulse")
    opts = config["verify"]
    path = Path(opts["waveform"])
    if not path.exists():
        raise ConfigError(f"waveform file {path} not found")
    try:
        trace = wf.read_waveform_csv(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    meta = build_meta(config)
    _, field = build_pulse(config["pulse"], QUBIT, config)
    env = wf.envelope_of(trace, opts["carrier_hz"])
    t, e = wf.crop(trace.times, env, 0.0, meta.duration_physical)
    try:
        result = wf.trajectory_fidelity(t, e, field, meta, calibrate=opts.get("calibrate", True),
                                        cfg=integrator(config, QUBIT))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    env_t = np.interp(result.t_seconds, t, e.real) + 1j * np.interp(result.t_seconds, t, e.imag)
    env_t *= result.scale
    out.mkdir(parents=True, exist_ok=True)
    header = _meta_for(config, "verify")
    write_csv(out / "fidelity.csv", ["t", "I", "Q", "F"],
              [[ts, z.real, z.imag, f] for ts, z, f in zip(result.t_seconds, env_t, result.F)], header)
    summary = {"metadata": header, "min_F": result.min_F, "final_F": float(result.F[-1]),
               "amplitude_scale": result.scale}
    (out / "verify.json").write_text(json.dumps(summary, indent=1))
    print(f"min F = {result.min_F:.6f}")
    return EXIT_OK


def export_samples(field, meta: PulseMeta, sample_rate: float):
    """AWG samples at the centre of each sample period: ``(t_seconds, I, Q)``."""
    n = int(round(meta.duration_physical * sample_rate))
    if n < 1:
        raise ConfigError("sample rate too low for the pulse duration")
    t = (np.arange(n) + 0.5) / sample_rate
    values = field(meta.to_training_time(t))
    return t, values.real, values.imag


def import_samples(path, meta: PulseMeta):
    """Rebuild a zero-order-hold field from an exported CSV."""
    _, header, rows = read_csv(path)
    data = np.array(rows)
    t = data[:, 0]
    dt = t[1] - t[0] if len(t) > 1 else meta.duration_physical
    edges = meta.to_training_time(np.concatenate([t - dt / 2, [t[-1] + dt / 2]]))
    edges[0], edges[-1] = -np.pi, np.pi
    return PiecewiseConstantField(edges, data[:, 1] + 1j * data[:, 2], name="imported")


def cmd_export(config, out: Path) -> int:
    _require(config, "pulse", "export")
    meta = build_meta(config)
    _, field = build_pulse(config["pulse"], QUBIT, config)
    t, i_vals, q_vals = export_samples(field, meta, config["export"]["sample_rate"])
    out.mkdir(parents=True, exist_ok=True)
    header = _meta_for(config, "export", duration_s=fmt(meta.duration_physical),
                       omega_2pi_rad_s=fmt(meta.omega_2pi),
                       amplitude_unit="omega_2pi", omega_max=fmt(field.omega_max or 0.0))
    write_csv(out / "export.csv", ["t_seconds", "I", "Q"], zip(t, i_vals, q_vals), header)
    print(f"{len(t)} samples written")
    return EXIT_OK


def cmd_decay(config, out: Path) -> int:
    _require(config, "pulse")
    opts = {"n_max": 50, "T1_s": 131e-6, "T2_s": 64e-6, "noise": True, **config.get("decay", {})}
    meta = build_meta(config)
    _, field = build_pulse(config["pulse"], QUBIT, config)
    try:
        noise = mx.NoiseModel(meta.duration_physical, opts["T1_s"], opts["T2_s"]) if opts["noise"] else None
        bound = mx.incoherent_bound(meta.duration_physical, opts["T1_s"], opts["T2_s"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rng = np.random.default_rng(config.get("seed", 0))
    trace = mx.pseudo_identity_decay(field, opts["n_max"], noise, opts.get("delta", 0.0),
                                     integrator(config, QUBIT), opts.get("shots"), rng)
    out.mkdir(parents=True, exist_ok=True)
    header = _meta_for(config, "decay")
    write_csv(out / "decay.csv", ["n", "z", "contrast_x", "contrast_y", "contrast_z"],
              mx.decay_csv_rows(trace), header)
    body = {"metadata": header, **trace.to_dict(), "incoherent_bound": bound}
    (out / "decay.json").write_text(json.dumps(body, indent=1))
    print(f"per-pulse fidelity {trace.fidelity:.6f} +- {trace.fidelity_std:.1e} (bound {bound:.6f})")
    return EXIT_OK


HANDLERS = {
    "train": cmd_train, "refine": cmd_refine, "sweep": cmd_sweep, "compare": cmd_compare,
    "verify": cmd_verify, "export": cmd_export, "decay": cmd_decay,
}


def _set_threads(n):
    if n is None:
        env = os.environ.get("PULSE_THREADS")
        if not env:
            return None
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"PULSE_THREADS must be an integer, got {env!r}") from exc
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    import numba

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robustpulse", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker threads (default: PULSE_THREADS)")
    parser.add_argument("--max-iters", type=int, help="override train.max_iters")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        config = load_config(args.config, args.seed, args.max_iters)
        return HANDLERS[args.command](config, Path(args.out))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, tr.TrainingError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
