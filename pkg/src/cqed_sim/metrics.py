"""Phase calibration, average gate fidelity and error diagnostics."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import DimensionMismatch, UndefinedArg, ZeroAnchor

ARG_FLOOR = 1e-12
SWAP_FLAG = 1e-2

CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
PI2 = np.array([[1.0, -1.0], [1.0, 1.0]], dtype=complex) / np.sqrt(2)
I2 = np.eye(2, dtype=complex)


def n_qubits(d):
    n = int(round(np.log2(d)))
    if 2 ** n != d or n < 1:
        raise DimensionMismatch(f"dimension {d} is not a power of two")
    return n


def ideal_cz(d, pair=(0, 1)):
    """CZ on adjacent qubits ``pair`` of an n-qubit register (identity elsewhere)."""
    n = n_qubits(d)
    a, b = sorted(pair)
    if b != a + 1:
        raise ValueError("CZ pair must be adjacent qubits")
    factors = [I2] * n
    factors[a:b + 1] = [CZ]
    return reduce(np.kron, factors)


def ideal_pi2(d, qubit=0):
    n = n_qubits(d)
    factors = [I2] * n
    factors[qubit] = PI2
    return reduce(np.kron, factors)


def phase_matrix(psis):
    """P_Z(psi) = kron_i diag(1, exp(-i psi_i))."""
    return reduce(np.kron, [np.diag([1.0, np.exp(-1j * p)]) for p in psis])


def _bit_index(n, i):
    """Basis index of the state with only qubit i excited (qubit 0 most significant)."""
    return 1 << (n - 1 - i)


def _arg(z):
    if abs(z) < ARG_FLOOR:
        raise UndefinedArg(f"phase of entry with magnitude {abs(z):.2e} is undefined")
    return float(np.angle(z))


def fix_global_phase(u_raw):
    u_raw = np.asarray(u_raw, dtype=complex)
    a = u_raw[0, 0]
    if abs(a) == 0:
        raise ZeroAnchor("ground-state overlap is zero")
    return u_raw * (np.conj(a) / abs(a))


def calibrate_phases(u_prime, gate_kind, target):
    """Local Z calibration U' = P_Z(psi) u' P_Z(psi')^dag.

    ``gate_kind`` is 'cz' (``target`` = qubit pair) or 'pi2' (``target`` =
    qubit).  Returns (U', psi, psi').
    """
    u = np.asarray(u_prime, dtype=complex)
    d = u.shape[0]
    n = n_qubits(d)
    psi = np.zeros(n)
    psi_p = np.zeros(n)
    for i in range(n):
        k = _bit_index(n, i)
        psi[i] = _arg(u[k, k])
    if gate_kind == "cz":
        pass
    elif gate_kind == "pi2":
        q = int(target)
        k = _bit_index(n, q)
        phi_a = _arg(-u[0, k])
        psi[q] = _arg(u[k, k]) - phi_a
        psi_p[q] = -phi_a
    else:
        raise ValueError(f"unknown gate kind {gate_kind!r}")
    U = phase_matrix(psi) @ u @ phase_matrix(psi_p).conj().T
    return U, psi, psi_p


def average_gate_fidelity(U_id, U_prime):
    U_id = np.asarray(U_id, dtype=complex)
    U_prime = np.asarray(U_prime, dtype=complex)
    if U_id.shape != U_prime.shape or U_id.shape[0] != U_id.shape[1]:
        raise DimensionMismatch(f"shapes {U_id.shape} and {U_prime.shape} differ")
    d = U_id.shape[0]
    tr = np.trace(U_id.conj().T @ U_prime)
    return float((abs(tr) ** 2 + np.trace(U_prime.conj().T @ U_prime).real) / (d * (d + 1)))


def rotation_angles(U):
    """theta_i: rotation of qubit i read from the |..0_i..> / |..1_i..> sub-block.

    The angle is arcsin of the off-diagonal magnitude of the column-normalized
    2x2 block with every other qubit in |0>.
    """
    U = np.asarray(U)
    n = n_qubits(U.shape[0])
    out = []
    for i in range(n):
        k = _bit_index(n, i)
        blk = U[np.ix_([0, k], [0, k])]
        norms = np.linalg.norm(blk, axis=0)
        norms[norms == 0] = 1.0
        blk = blk / norms
        off = 0.5 * (abs(blk[1, 0]) + abs(blk[0, 1]))
        out.append(float(np.arcsin(min(1.0, off))))
    return out


def swap_elements(U):
    """Largest |U_ij| between distinct single-excitation-number-preserving states.

    Returns {(i, j): magnitude} for off-diagonal pairs whose Hamming weight
    is equal (SWAP-like exchanges such as |1,x,0> <-> |0,x,1>).
    """
    U = np.asarray(U)
    d = U.shape[0]
    out = {}
    for i in range(d):
        for j in range(d):
            if i != j and bin(i).count("1") == bin(j).count("1"):
                out[(i, j)] = float(abs(U[i, j]))
    return out


def diagnostics(U_prime, leakage=None, exclude=()):
    """Rotation angles, SWAP-like elements and leakage of a calibrated gate.

    ``exclude`` lists qubits that are driven on purpose (skipped in the
    rotation report).
    """
    U = np.asarray(U_prime)
    angles = rotation_angles(U)
    sw = swap_elements(U)
    max_sw = max(sw.values()) if sw else 0.0
    flagged = {f"{i}->{j}": v for (i, j), v in sw.items() if v > SWAP_FLAG}
    if leakage is None:
        leakage = 1.0 - np.sum(np.abs(U) ** 2, axis=0)
    return {
        "theta": {i: a for i, a in enumerate(angles) if i not in exclude},
        "theta_over_pi": {i: a / np.pi for i, a in enumerate(angles) if i not in exclude},
        "max_swap_element": max_sw,
        "swap_flags": flagged,
        "leakage": [float(x) for x in np.asarray(leakage).ravel()],
    }


@dataclass
class GateReport:
    kind: str
    target: object
    u_raw: np.ndarray
    u_prime: np.ndarray
    U_prime: np.ndarray
    psi: np.ndarray
    psi_prime: np.ndarray
    fidelity: float
    diagnostics: dict = field(default_factory=dict)

    def summary(self):
        return f"{self.kind} {self.target}: F = {self.fidelity:.4f}"

    def to_dict(self):
        def cm(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}
        diag = dict(self.diagnostics)
        diag["theta"] = {str(k): v for k, v in diag.get("theta", {}).items()}
        diag["theta_over_pi"] = {str(k): v for k, v in diag.get("theta_over_pi", {}).items()}
        return {
            "kind": self.kind,
            "target": self.target if not isinstance(self.target, tuple) else list(self.target),
            "fidelity": self.fidelity,
            "fidelity_4dp": round(self.fidelity, 4),
            "psi": list(map(float, self.psi)),
            "psi_prime": list(map(float, self.psi_prime)),
            "u_raw": cm(self.u_raw),
            "u_prime": cm(self.u_prime),
            "U_prime": cm(self.U_prime),
            "diagnostics": diag,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def gate_report(u_raw, kind, target, leakage=None):
    """Full metric chain: global phase, calibration, fidelity, diagnostics."""
    u_raw = np.asarray(u_raw, dtype=complex)
    d = u_raw.shape[0]
    up = fix_global_phase(u_raw)
    U, psi, psi_p = calibrate_phases(up, kind, target)
    U_id = ideal_cz(d, target) if kind == "cz" else ideal_pi2(d, target)
    F = average_gate_fidelity(U_id, U)
    exclude = tuple(target) if kind == "cz" else (target,)
    return GateReport(kind, target, u_raw, up, U, psi, psi_p, F, diagnostics(U, leakage, exclude))
