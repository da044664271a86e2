"""
Baseline pulses under detuning
==============================

A rectangular pi/2 pulse is exact on resonance and degrades quickly off
resonance. This script sweeps it over detuning, reconstructs its process
matrix from simulated tomography and reads off the Ramsey transfer.
"""

import numpy as np

from robustpulse import metrics as mx
from robustpulse.baselines import calibrate_drag, rectangular_pulse
from robustpulse.integrate import IntegratorConfig, recommended_steps
from robustpulse.quantum import QutritModel

rect = rectangular_pulse()

# On resonance the propagator is a quarter turn about x.
(row,) = mx.detuning_sweep(rect, [0.0])
print("resonant c-vector:", np.round(row.c, 6) + 0.0, " rotation angle:", round(row.theta_rot, 6))

# Tomography: Bloch vectors of the four prepared states after the pulse.
data = mx.simulate_qpt(rect)
print("\nBloch vectors after the pulse (rows: |0>, |1>, |+>, |+i>):")
print(np.round(data.values, 6) + 0.0)
chi = mx.reconstruct_chi(data)
fit = mx.fit_unitary(chi)
print("fitted c:", np.round(fit.c, 6) + 0.0, " residual:", f"{fit.residual:.1e}")

# Detuning sweep on the qubit model.
deltas = np.linspace(-1.0, 1.0, 81)
rows = mx.detuning_sweep(rect, deltas)
print("\n delta    F_chi    max_p1")
for r in rows[::16]:
    print(f"{r.delta:+.2f}  {r.F_chi:.5f}  {r.max_p1:.5f}")
f = np.array([r.F_chi for r in rows])
lo, hi = mx.window_extent(deltas, f, 0.999)
print(f"F_chi >= 0.999 window: [{lo:+.3f}, {hi:+.3f}]")

# A 20 ns DRAG pulse on the three-level transmon model.
model = QutritModel.from_physical(-222.34e6, 20e-9)
cfg = IntegratorConfig(recommended_steps(model))
drag, loss = calibrate_drag(model, cfg=cfg)
print(f"\nDRAG coefficient {drag.drag_coeff:.4f}, resonant loss {loss:.2e}")
rows = mx.detuning_sweep(drag, np.linspace(-0.4, 0.4, 9), model, cfg=cfg)
print(" delta    max_p1   leakage")
for r in rows:
    print(f"{r.delta:+.2f}  {r.max_p1:.5f}  {r.leakage:.1e}")
