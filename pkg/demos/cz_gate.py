"""A 30-ns CZ gate on the DTC two-qubit subsystem.

The coupler flux is pulsed from the idle point through the qubit-coupler
avoided crossing and back; the pulse parameters below come from
``cqed-sim optimize --config configs/dtc_pair_cz_optimize.json``.
Run: python3 demos/cz_gate.py  (a few minutes on one core)
"""

import numpy as np

from cqed_sim import circuit as cm
from cqed_sim.evolution import IdleBasis, propagate_computational_basis, write_trajectory
from cqed_sim.metrics import gate_report
from cqed_sim.pulses import FluxPulse
from cqed_sim.reduction import ReducedModel, cached_frames

pair = cm.dtc_pair("L")
model = ReducedModel(pair, cm.derive(pair), N=6, cutoffs=[30, 30])
frames = cached_frames(model, "L", (0.6 * np.pi, np.pi, 0.05 * np.pi), N0=200, drive_ports=[], cache_dir=".cache")
basis = IdleBasis(model, frames, {"L": 0.6477 * np.pi})

pulse = FluxPulse(0.9153, 0.2349, 0.93 * np.pi, 30.0, basis.theta["L"])
raw = propagate_computational_basis(frames, pulse.schedule(), basis, tol=1e-9, t_eval=np.linspace(0, 30, 301))
rep = gate_report(raw.u_raw, "cz", (0, 1), raw.leakage)

print(rep.summary())
u = rep.u_prime
print(f"conditional phase: {np.angle(u[3, 3] * u[0, 0] / (u[1, 1] * u[2, 2])) / np.pi:.4f} pi")
print("leakage per input state:", np.round(raw.leakage, 6))
print("frame switches:", len(raw.result.switches))
write_trajectory("cz_populations.csv", raw.result, basis.vectors, basis.labels)
print("populations written to cz_populations.csv")
