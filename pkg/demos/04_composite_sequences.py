"""
Composite pulse sequences
=========================

Searches for sequences of constant-amplitude phased segments that keep a
pi/2 rotation accurate across a detuning window. Each longer sequence is
seeded with the best shorter one.

The optimizer tends to pack the rotation into a brief segment near the
amplitude cap and idle for the rest of the window: a short hard pulse is
insensitive to detuning, at the cost of a wide spectrum.
"""

import numpy as np

from robustpulse import metrics as mx
from robustpulse.baselines import GAConfig, composite_field, optimize_composite

cfg = GAConfig(population=40, generations=40, refine_iters=150)
deltas = np.linspace(-0.8, 1.1, 39)
best = None
for n in (1, 2, 3):
    best = optimize_composite(n, cfg, warm_start=best.sequence if best else None)
    rows = mx.detuning_sweep(composite_field(best.sequence), deltas)
    worst = min(r.F_chi for r in rows)
    print(f"{n} segment(s): window loss {best.loss:.3e} (GA {best.ga_loss:.3e}), worst F_chi {worst:.5f}")
    for seg in best.sequence.segments:
        print(f"    fraction {seg.f:.3f}  amplitude {seg.a:+.3f}  phase {seg.phi:+.3f}")
    busy = sum(seg.f for seg in best.sequence.segments if abs(seg.a) > 0.1)
    print(f"    driven fraction of the window: {busy:.2f}")
