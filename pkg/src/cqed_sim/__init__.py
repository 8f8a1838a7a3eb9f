"""Simulation of transmon qubits coupled through tunable couplers.

Circuit description, Hamiltonian construction in the charge basis, subsystem
reduction, labeled spectra and ZZ couplings, moving-frame time evolution,
pulse shapes with optimization, and calibrated gate fidelities.
"""

__version__ = "0.1.0"

from .circuit import (  # noqa: E402
    CircuitSpec, derive, dtc_pair, dtc_three_qubit, load_spec, stc_pair, stc_three_qubit, validate_spec,
)
from .errors import *  # noqa: E402,F401,F403
from .evolution import ControlSchedule, IdleBasis, propagate_computational_basis, propagate_state  # noqa: E402
from .metrics import average_gate_fidelity, calibrate_phases, gate_report  # noqa: E402
from .pulses import FluxPulse, MicrowavePulse, optimize_cz, optimize_pi2  # noqa: E402
from .reduction import ReducedModel, build_frames  # noqa: E402
from .spectrum import coupling_strengths, find_idle, labeled_spectrum, sweep_flux  # noqa: E402
