"""Derived circuit parameters, ZZ coupling versus coupler flux, idle point.

Run: python3 demos/spectrum_and_idle.py
"""

import numpy as np

from cqed_sim import circuit as cm
from cqed_sim.reduction import ReducedModel
from cqed_sim.spectrum import coupling_strengths, find_idle, labeled_spectrum, sweep_flux

spec = cm.dtc_three_qubit()
print(cm.format_table(spec, cm.derive(spec)))

# two-qubit subsystem: Q1, Q2 and the double-transmon coupler between them
pair = cm.dtc_pair("L")
model = ReducedModel(pair, cm.derive(pair), N=6, cutoffs=[30, 30])
thetas = np.arange(0.5, 0.8001, 0.05) * np.pi
sweep = sweep_flux(model, "L", thetas)
zeta = [coupling_strengths(s, pair.qubit_indices).zeta["zeta12"] for s in sweep]

print("\nTheta/pi   w1/2pi (GHz)  w2/2pi (GHz)  zeta/2pi (kHz)")
for th, s, z in zip(thetas, sweep, zeta):
    w1, w2 = s[(1, 0, 0, 0)], s[(0, 1, 0, 0)]
    print(f"{th / np.pi:7.2f}   {cm.radns_to_ghz(w1):11.4f}  {cm.radns_to_ghz(w2):11.4f}  "
          f"{cm.radns_to_ghz(z) * 1e6:13.2f}")


def zeta_at(th):
    return coupling_strengths(labeled_spectrum(model, {"L": th}), pair.qubit_indices).zeta["zeta12"]


idle = find_idle(thetas, zeta, evaluate=zeta_at)
print(f"\nidle point Theta = {idle.theta / np.pi:.4f} pi, zeta/2pi = {cm.radns_to_ghz(idle.zeta) * 1e6:.2f} kHz")
