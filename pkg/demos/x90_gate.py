"""A 10-ns DRAG pi/2 pulse on qubit 1 of the DTC two-qubit subsystem.

Run: python3 demos/x90_gate.py  (about a minute on one core)
"""

import numpy as np

from cqed_sim import circuit as cm
from cqed_sim.evolution import IdleBasis
from cqed_sim.pulses import MicrowavePulse, optimize_pi2, pi2_report, pi2_seed_amplitude
from cqed_sim.reduction import ReducedModel, cached_frames

pair = cm.dtc_pair("L")
model = ReducedModel(pair, cm.derive(pair), N=6, cutoffs=[30, 30])
frames = cached_frames(model, "L", (0.6 * np.pi, np.pi, 0.05 * np.pi), N0=200, cache_dir=".cache")
basis = IdleBasis(model, frames, {"L": 0.6477 * np.pi})

w1, eta = basis.qubit_frequency(0), basis.anharmonicity(0)
print(f"qubit 1: {cm.radns_to_ghz(w1):.4f} GHz, anharmonicity {cm.radns_to_ghz(eta) * 1e3:.1f} MHz")

a0, d01 = pi2_seed_amplitude(frames, basis, 0, 10.0)
seed = pi2_report(frames, basis, MicrowavePulse(a0, 0.0, 10.0, w1, eta, basis.qubits[0]), 0)
print(f"two-level seed a = {a0:.5f}, no DRAG: F = {seed.fidelity:.5f}")

res = optimize_pi2(frames, basis, 0, 10.0, {"maxiter": 15, "tol": 1e-8})
print(f"optimized a = {res.best_params['a']:.5f}, b = {res.best_params['b']:.4f}: F = {res.best_fidelity:.6f}")
print("leakage per input state:", np.round(res.report.diagnostics["leakage"], 7))
