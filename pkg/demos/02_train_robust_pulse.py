"""
Training a detuning-robust pulse
================================

Trains the network drive on the qubit model and compares the result with
the rectangular pulse. The default budget is small so the script finishes
in about a minute; pass an iteration count (10000 reproduces the full
configuration) to train longer.

    python demos/02_train_robust_pulse.py 2000
"""

import sys

import numpy as np

from robustpulse import metrics as mx
from robustpulse import network as nn
from robustpulse import training as tr
from robustpulse.baselines import rectangular_pulse

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 500
cfg = tr.TrainConfig(seed=42, max_iters=iters, validate_every=50)


def progress(it, loss):
    if it % 100 == 0:
        print(f"iteration {it:5d}  batch loss {loss:.3e}")


params, report = tr.train(cfg, callback=progress)
print(f"\nstopped after {report.iterations} iterations ({report.stop_reason}),"
      f" best validation loss {report.best_validation:.3e}")

robust = nn.NetworkField(params, name="robust")
deltas = np.linspace(-1.2, 1.2, 49)
table = {}
for name, field in [("robust", robust), ("rectangular", rectangular_pulse())]:
    rows = mx.detuning_sweep(field, deltas)
    table[name] = np.array([r.F_chi for r in rows])
    print(f"{name:12s} F_chi >= 0.999 on", mx.window_extent(deltas, table[name], 0.999))

print("\n delta   robust   rectangular")
for d, a, b in list(zip(deltas, table["robust"], table["rectangular"]))[::6]:
    print(f"{d:+.2f}  {a:.5f}  {b:.5f}")

amp, phase = nn.amplitude_phase(params, np.linspace(-np.pi, np.pi, 9))
print("\nsigned amplitude at nine times:", np.round(amp, 3))
