"""Schroedinger propagation in flux-gridded moving frames.

Inside the bin R_m = [Theta_m - w, Theta_m + w) the state is expanded in the
frame of node m and evolves under

    H'' = e0(m) + (cos Theta - cos Theta_m) Fc + (sin Theta - sin Theta_m) Fs
          + Thetadot * F_rate + sum_p alpha_p(t) D_p

(all N0 x N0).  When Theta(t) crosses a bin boundary the state is carried
to the neighbouring frame with the transfer matrix P(m+-1)^dag P(m).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import MissingLabel, RangeExit, StepFailure
from .reduction import frame_switch
from .spectrum import label_eigenstates


@dataclass
class ControlSchedule:
    """Time-dependent controls on [0, T].

    ``flux`` maps a flux line to (theta(t), theta_dot(t)); ``drives`` maps a
    drive port (transmon position) to alpha(t).  Lines without an entry stay
    at their frame value.
    """

    T: float
    flux: dict = field(default_factory=dict)
    drives: dict = field(default_factory=dict)
    samples_per_ns: int = 20

    def theta(self, line, t, default):
        if line in self.flux:
            return self.flux[line][0](t)
        return default

    def theta_dot(self, line, t):
        if line in self.flux:
            return self.flux[line][1](t)
        return 0.0


@dataclass
class PropagationResult:
    states: np.ndarray
    node: int
    norms: np.ndarray
    switches: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    nfev: int = 0

    @property
    def norm_deficit(self):
        return 1.0 - self.norms ** 2


def _crossings(frames, schedule, theta_const):
    """Bin-boundary crossing times of Theta(t) and the bin sequence."""
    line, T = frames.line, schedule.T
    if line not in schedule.flux or T <= 0:
        m = frames.bin_index(theta_const)
        _check_bin(frames, m, theta_const)
        return [], [m]
    th = schedule.flux[line][0]
    n = max(200, int(np.ceil(T * schedule.samples_per_ns)))
    ts = np.linspace(0.0, T, n + 1)
    vals = np.array([th(t) for t in ts])
    bins = np.array([frames.bin_index(v) for v in vals])
    for m, v in zip(bins, vals):
        _check_bin(frames, m, v)
    times, seq = [], [int(bins[0])]
    for k in range(n):
        b0, b1 = int(bins[k]), int(bins[k + 1])
        t_lo = ts[k]
        while b0 != b1:
            step = 1 if b1 > b0 else -1
            edge = frames.grid[0] + frames.step * (b0 + 0.5 * step)
            f = lambda t: th(t) - edge  # noqa: E731
            t_c = brentq(f, t_lo, ts[k + 1], xtol=1e-9) if f(t_lo) * f(ts[k + 1]) < 0 else ts[k + 1]
            times.append(t_c)
            b0 += step
            seq.append(b0)
            t_lo = t_c
    return times, seq


def _check_bin(frames, m, theta):
    if not 0 <= m < len(frames.grid):
        raise RangeExit(f"flux {theta:.6g} rad left the frame grid")


def _segment_terms(frames, node, schedule, theta_m, ports, hold):
    """Coefficient functions and stacked operators of V(t) = H'' - e0 in one bin."""
    Fc, Fs = node.ops.get("flux_c"), node.ops.get("flux_s")
    Fr = node.ops.get("flux_rate")
    line = frames.line
    cm, sm = np.cos(theta_m), np.sin(theta_m)
    coeffs, ops = [], []
    if line in schedule.flux:
        th, thd = schedule.flux[line]
        if Fc is not None:
            coeffs.append(lambda t: np.cos(th(t)) - cm)
            coeffs.append(lambda t: np.sin(th(t)) - sm)
            ops += [Fc, Fs]
        if Fr is not None:
            coeffs.append(thd)
            ops.append(Fr)
    elif Fc is not None and hold != theta_m:
        c, s = np.cos(hold) - cm, np.sin(hold) - sm
        coeffs.append(lambda t: 1.0)
        ops.append(c * Fc + s * Fs)
    for p in ports:
        coeffs.append(schedule.drives[p])
        ops.append(node.ops[("drive", p)])
    return coeffs, ops


def _evolve_segment(E, coeffs, ops, psi, t0, t1, tol, t_eval=None):
    """Integrate i dpsi/dt = (E + V(t)) psi in the interaction picture of E."""
    shape = psi.shape
    if not ops:
        out = np.exp(-1j * E * (t1 - t0))[:, None] * psi
        traj = [(t, np.exp(-1j * E * (t - t0))[:, None] * psi) for t in (t_eval or [])]
        return out, traj, 0
    k = len(ops)
    n = len(E)
    stack = np.vstack(ops)  # (k n, n)

    def rhs(t, c):
        ph = np.exp(-1j * E * t)[:, None]
        z = ph * c.reshape(shape)
        w = (stack @ z).reshape(k, n, shape[1])
        cs = np.array([f(t) for f in coeffs], dtype=float)
        v = np.tensordot(cs, w, axes=(0, 0))
        return (-1j * v / ph).ravel()

    c0 = (np.exp(1j * E * t0)[:, None] * psi).ravel()
    # the segment end is always sampled so the returned state is at t1
    samples = sorted(set(t_eval or []) | {t1})
    sol = solve_ivp(rhs, (t0, t1), c0, method="DOP853", rtol=tol, atol=tol, t_eval=samples)
    if sol.status < 0:
        raise StepFailure(sol.message)
    back = lambda t, y: np.exp(-1j * E * t)[:, None] * y.reshape(shape)  # noqa: E731
    wanted = set(t_eval or [])
    traj = [(float(t), back(t, sol.y[:, j])) for j, t in enumerate(sol.t) if t in wanted]
    return back(t1, sol.y[:, -1]), traj, sol.nfev


def propagate_state(frames, schedule: ControlSchedule, psi0, tol=1e-9, offset=None, t_eval=None, hold=None):
    """Propagate frame-coordinate state(s) ``psi0`` through ``schedule``.

    ``psi0`` is (N0,) or (N0, k) in the frame of the bin containing Theta(0).
    Returns the final state(s) in the frame of the bin containing Theta(T).
    ``offset`` is a constant energy subtracted everywhere (default: lowest
    energy of the starting node).  ``hold`` is the flux of the moving line
    when the schedule does not drive it (default: the frames' fixed value).
    Each bin is integrated in the interaction picture of its frame energies
    with an adaptive 8th-order Runge-Kutta method (local tolerance ``tol``).
    """
    psi = np.asarray(psi0, dtype=complex)
    squeeze = psi.ndim == 1
    if squeeze:
        psi = psi[:, None]
    line = frames.line
    theta_fixed = hold if hold is not None else frames.fixed.get(line)
    if theta_fixed is None and line not in schedule.flux:
        raise RangeExit(f"no flux value for moving line {line!r}")
    times, seq = _crossings(frames, schedule, theta_fixed)
    ports = [p for p in schedule.drives]
    for p in ports:
        if ("drive", p) not in frames.nodes[seq[0]].ops:
            raise KeyError(f"frames carry no drive operator for port {p}")
    if offset is None:
        offset = frames.nodes[seq[0]].energies[0]
    bounds = [0.0] + list(times) + [float(schedule.T)]
    switches, traj, nfev = [], [], 0
    for k, m in enumerate(seq):
        if k > 0:
            S = frame_switch(frames, seq[k - 1], m - seq[k - 1])
            psi = S @ psi
            switches.append((bounds[k], seq[k - 1], m))
        t0, t1 = bounds[k], bounds[k + 1]
        if t1 <= t0:
            continue
        node = frames.nodes[m]
        coeffs, ops = _segment_terms(frames, node, schedule, frames.grid[m], ports, theta_fixed)
        te = None if t_eval is None else [t for t in t_eval if t0 <= t <= t1]
        psi, seg_traj, nf = _evolve_segment(node.energies - offset, coeffs, ops, psi, t0, t1, tol, te)
        nfev += nf
        traj += [(t, m, y) for t, y in seg_traj]
    norms = np.linalg.norm(psi, axis=0)
    states = psi[:, 0] if squeeze else psi
    return PropagationResult(states, seq[-1], norms, switches, traj, nfev)


# ---------------------------------------------------------- idle basis


class IdleBasis:
    """Dressed, labeled eigenstates at the idle point in frame coordinates.

    The quasi-static H'' at the idle flux is diagonalized inside the frame of
    its bin, so the idle need not coincide with a grid node.
    """

    def __init__(self, model, frames, theta_idle, targets=None):
        self.model, self.frames = model, frames
        theta = dict(frames.fixed)
        theta.update(theta_idle)
        self.theta = theta
        th = theta[frames.line]
        self.node = frames.node_of(th)
        node = frames.nodes[self.node]
        thm = frames.grid[self.node]
        H = np.diag(node.energies).astype(complex)
        if "flux_c" in node.ops:
            H += (np.cos(th) - np.cos(thm)) * node.ops["flux_c"] + (np.sin(th) - np.sin(thm)) * node.ops["flux_s"]
        evals, W = np.linalg.eigh(H)
        self.energies = evals
        self.W = W
        reduced = node.V0 @ W
        self.spectrum = label_eigenstates(evals, reduced, model, node.reds, theta, targets)
        spec = model.spec
        self.qubits = list(spec.qubit_indices)
        self.labels = []
        for bits in itertools.product((0, 1), repeat=len(self.qubits)):
            lab = [0] * spec.transmon_count
            for q, b in zip(self.qubits, bits):
                lab[q] = b
            self.labels.append(tuple(lab))
        missing = [lab for lab in self.labels if lab not in self.spectrum.index]
        if missing:
            raise MissingLabel(f"computational labels {missing} not resolved at idle")
        self.vectors = W[:, [self.spectrum.index[lab] for lab in self.labels]]

    def qubit_frequency(self, i):
        """Idle transition frequency (rad/ns) of the i-th qubit."""
        lab = [0] * self.model.spec.transmon_count
        lab[self.qubits[i]] = 1
        return self.spectrum.freqs[tuple(lab)]

    def anharmonicity(self, i):
        n = self.model.spec.transmon_count
        one, two = [0] * n, [0] * n
        one[self.qubits[i]], two[self.qubits[i]] = 1, 2
        return self.spectrum.freqs[tuple(two)] - 2 * self.spectrum.freqs[tuple(one)]


@dataclass
class RawGate:
    u_raw: np.ndarray
    leakage: np.ndarray
    labels: list
    result: PropagationResult


def propagate_computational_basis(frames, schedule, basis: IdleBasis, tol=1e-9, t_eval=None):
    """Raw overlaps <label|U|label'> over the computational set plus leakage."""
    res = propagate_state(frames, schedule, basis.vectors, tol=tol, offset=basis.energies[0], t_eval=t_eval,
                          hold=basis.theta[frames.line])
    if res.node != basis.node:
        raise RangeExit(f"schedule ends in bin {res.node}, idle bin is {basis.node}")
    u = basis.vectors.conj().T @ res.states
    leak = 1.0 - np.sum(np.abs(u) ** 2, axis=0)
    return RawGate(u, leak, list(basis.labels), res)


def write_trajectory(path, result: PropagationResult, vectors, labels):
    """CSV of (t, frame node, population of each labeled vector)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ns", "node"] + ["".join(map(str, lab)) for lab in labels])
        for t, m, psi in result.trajectory:
            pops = np.abs(vectors.conj().T @ psi) ** 2
            w.writerow([repr(t), m] + [repr(float(p)) for p in np.atleast_2d(pops.T)[0]])
