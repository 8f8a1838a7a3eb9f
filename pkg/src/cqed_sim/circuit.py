"""Circuit descriptions and derived physical parameters.

Internal units: angular frequency in rad/ns, time in ns, capacitance in fF,
current in nA.  Plain frequencies (GHz, MHz) appear only at the I/O boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import constants as const

from .errors import InvalidSpec, NonPositiveDefinite, SingularMatrix

E_CHARGE = const.e
HBAR = const.hbar
PHI0 = HBAR / (2 * E_CHARGE)  # reduced flux quantum
TWO_PI = 2 * np.pi

_FF = 1e-15
_PER_NS = 1e-9


def ghz_to_radns(f_ghz):
    return TWO_PI * np.asarray(f_ghz, dtype=float)


def radns_to_ghz(w):
    return np.asarray(w, dtype=float) / TWO_PI


@dataclass(frozen=True)
class LoopSpec:
    """Loop junction of a double-transmon coupler between two coupler nodes."""

    node_a: int
    node_b: int
    ratio_rJ: float
    flux_line: str


@dataclass(frozen=True)
class SquidSpec:
    """dc SQUID of a single-transmon coupler.

    ``asymmetry`` is I_cB / I_cA.  ``shunt_fF`` optionally carries the two
    shunt halves (C_iiA, C_iiB); when present they replace the diagonal
    capacitance entry of the node.
    """

    node: int
    asymmetry: float
    flux_line: str
    shunt_fF: tuple | None = None


@dataclass(frozen=True)
class Diagnostic:
    code: str
    where: tuple = ()
    detail: str = ""

    def __str__(self):
        loc = ",".join(str(w) for w in self.where)
        s = f"{self.code}({loc})"
        return f"{s}: {self.detail}" if self.detail else s


@dataclass
class CircuitSpec:
    """Topology and design values of a transmon network.

    Node indices are 0-based positions into ``names``; JSON files use the
    1-based labels of the circuit diagrams.
    """

    names: list
    cap_matrix_fF: np.ndarray
    bare_freqs_GHz: np.ndarray
    qubit_indices: list
    coupler_indices: list
    loops: list = field(default_factory=list)
    squids: list = field(default_factory=list)
    drive_ports: list = field(default_factory=list)
    title: str = ""

    def __post_init__(self):
        self.cap_matrix_fF = np.asarray(self.cap_matrix_fF, dtype=float)
        self.bare_freqs_GHz = np.asarray(self.bare_freqs_GHz, dtype=float)

    @property
    def transmon_count(self):
        return len(self.names)

    @property
    def flux_lines(self):
        lines = [lp.flux_line for lp in self.loops] + [sq.flux_line for sq in self.squids]
        return list(dict.fromkeys(lines))

    def index(self, name_or_pos):
        if isinstance(name_or_pos, str):
            return self.names.index(name_or_pos)
        return int(name_or_pos)

    def subsystem(self, nodes, title=None):
        """Restrict the circuit to ``nodes`` (names or positions).

        Capacitances to removed nodes are dropped, so the shunt sums of the
        retained nodes only see the retained neighbours.  Loops and SQUIDs
        survive when all their nodes are retained.
        """
        keep = [self.index(n) for n in nodes]
        pos = {old: new for new, old in enumerate(keep)}
        loops = [
            LoopSpec(pos[lp.node_a], pos[lp.node_b], lp.ratio_rJ, lp.flux_line)
            for lp in self.loops
            if lp.node_a in pos and lp.node_b in pos
        ]
        squids = [
            SquidSpec(pos[sq.node], sq.asymmetry, sq.flux_line, sq.shunt_fF)
            for sq in self.squids
            if sq.node in pos
        ]
        return CircuitSpec(
            names=[self.names[k] for k in keep],
            cap_matrix_fF=self.cap_matrix_fF[np.ix_(keep, keep)],
            bare_freqs_GHz=self.bare_freqs_GHz[keep],
            qubit_indices=[pos[q] for q in self.qubit_indices if q in pos],
            coupler_indices=[pos[c] for c in self.coupler_indices if c in pos],
            loops=loops,
            squids=squids,
            drive_ports=[pos[d] for d in self.drive_ports if d in pos],
            title=title or f"{self.title}[{','.join(self.names[k] for k in keep)}]",
        )

    def content_hash(self):
        import hashlib

        blob = json.dumps(spec_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class DerivedParams:
    """Parameters derived from a :class:`CircuitSpec`.

    All angular frequencies in rad/ns, currents in nA.  ``inv_omega_C`` holds
    1/omega_C_ij = 2*hbar*C_ij/e^2 (ns), zero where C_ij = 0; the diagonal
    uses the shunt capacitance.
    """

    M_fF: np.ndarray
    W: np.ndarray
    g: np.ndarray
    omega: np.ndarray
    omega_J: np.ndarray
    I_c: np.ndarray
    omega_J_loop: np.ndarray
    I_c_loop: np.ndarray
    omega_J_squid: np.ndarray  # rows (A, B)
    I_c_squid: np.ndarray
    inv_omega_C: np.ndarray


def build_capacitance_matrix(spec: CircuitSpec) -> np.ndarray:
    """Maxwell capacitance matrix M (fF): M_ii = sum_j C_ij, M_ij = -C_ij."""
    C = np.array(spec.cap_matrix_fF, dtype=float)
    for sq in spec.squids:
        if sq.shunt_fF is not None:
            C[sq.node, sq.node] = float(sum(sq.shunt_fF))
    off = C - np.diag(np.diag(C))
    M = -off
    M[np.diag_indices_from(M)] = np.diag(C) + off.sum(axis=1)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite("capacitance matrix is not positive definite") from exc
    return M


def derive_energy_matrix(M_fF) -> np.ndarray:
    """hbar W = e^2 M^-1 / 2, returned as angular frequency in rad/ns."""
    M = np.asarray(M_fF, dtype=float)
    try:
        Minv = np.linalg.inv(M * _FF)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("capacitance matrix is singular") from exc
    W = E_CHARGE**2 * Minv / (2 * HBAR) * _PER_NS
    return 0.5 * (W + W.T)


def coupling_constants(W, omega):
    """g_ij = (W_ij/2) sqrt((w_i+W_ii)(w_j+W_jj)/(W_ii W_jj)), zero diagonal."""
    d = np.diag(W)
    scale = np.sqrt((omega + d) / d)
    g = 0.5 * W * np.outer(scale, scale)
    np.fill_diagonal(g, 0.0)
    return g


def josephson_frequency(omega, W_ii):
    return (omega + W_ii) ** 2 / (8 * W_ii)


def critical_current_nA(omega_J):
    # I_c = hbar*omega_J/phi0 = 2e*omega_J
    return 2 * E_CHARGE * np.asarray(omega_J) / _PER_NS * 1e9


def derive_junctions(spec: CircuitSpec, W) -> DerivedParams:
    omega = ghz_to_radns(spec.bare_freqs_GHz)
    d = np.diag(W)
    omega_J = josephson_frequency(omega, d)
    g = coupling_constants(W, omega)

    omega_J_loop = np.array(
        [lp.ratio_rJ * 0.5 * (omega_J[lp.node_a] + omega_J[lp.node_b]) for lp in spec.loops]
    )
    squid = []
    for sq in spec.squids:
        total = omega_J[sq.node]
        a = total / (1 + sq.asymmetry)
        squid.append((a, total - a))
    omega_J_squid = np.array(squid).reshape(-1, 2)

    M = build_capacitance_matrix(spec)
    C = -M.copy()
    np.fill_diagonal(C, np.diag(M) + np.sum(M - np.diag(np.diag(M)), axis=1))
    inv_omega_C = 2 * HBAR * C * _FF / E_CHARGE**2 / _PER_NS
    return DerivedParams(
        M_fF=M,
        W=W,
        g=g,
        omega=omega,
        omega_J=omega_J,
        I_c=critical_current_nA(omega_J),
        omega_J_loop=omega_J_loop,
        I_c_loop=critical_current_nA(omega_J_loop),
        omega_J_squid=omega_J_squid,
        I_c_squid=critical_current_nA(omega_J_squid),
        inv_omega_C=inv_omega_C,
    )


def derive(spec: CircuitSpec) -> DerivedParams:
    """Validate ``spec`` and derive every parameter in one call."""
    problems = validate_spec(spec)
    if problems:
        raise InvalidSpec(problems)
    M = build_capacitance_matrix(spec)
    return derive_junctions(spec, derive_energy_matrix(M))


def validate_spec(spec: CircuitSpec) -> list:
    """Return structural problems of ``spec`` as a list of diagnostics."""
    out = []
    n = spec.transmon_count
    C = np.asarray(spec.cap_matrix_fF, dtype=float)
    if C.shape != (n, n):
        return [Diagnostic("ShapeMismatch", (), f"cap matrix {C.shape} for {n} transmons")]
    if spec.bare_freqs_GHz.shape != (n,):
        out.append(Diagnostic("ShapeMismatch", (), "bare_freqs_GHz length"))
    squid_shunts = {sq.node for sq in spec.squids if sq.shunt_fF is not None}
    for i in range(n):
        for j in range(i + 1, n):
            if C[i, j] != C[j, i]:
                out.append(Diagnostic("AsymmetricCapacitance", (i + 1, j + 1)))
            if C[i, j] < 0 or C[j, i] < 0:
                out.append(Diagnostic("NegativeCapacitance", (i + 1, j + 1)))
        if i not in squid_shunts and not C[i, i] > 0:
            out.append(Diagnostic("NonPositiveShunt", (i + 1,)))

    q, c = set(spec.qubit_indices), set(spec.coupler_indices)
    for k in q | c:
        if not 0 <= k < n:
            out.append(Diagnostic("IndexOutOfRange", (k + 1,)))
    if q & c:
        out.append(Diagnostic("PartitionOverlap", tuple(sorted(k + 1 for k in q & c))))
    if (q | c) != set(range(n)):
        missing = sorted(set(range(n)) - (q | c))
        out.append(Diagnostic("IncompletePartition", tuple(k + 1 for k in missing)))

    used = {}
    for li, lp in enumerate(spec.loops):
        for k in (lp.node_a, lp.node_b):
            if not 0 <= k < n:
                out.append(Diagnostic("IndexOutOfRange", (k + 1,), f"loop {li}"))
            elif k in q:
                out.append(Diagnostic("LoopOnQubit", (k + 1,)))
            if k in used:
                out.append(Diagnostic("OverlappingLoop", (k + 1,)))
            used[k] = li
        if lp.node_a == lp.node_b:
            out.append(Diagnostic("LoopNodesEqual", (lp.node_a + 1,)))
        if not 0 < lp.ratio_rJ < 1:
            out.append(Diagnostic("BadJunctionRatio", (li,), f"r_J={lp.ratio_rJ}"))
    for sq in spec.squids:
        if not 0 <= sq.node < n:
            out.append(Diagnostic("IndexOutOfRange", (sq.node + 1,), "squid"))
            continue
        if sq.node in q:
            out.append(Diagnostic("SquidOnQubit", (sq.node + 1,)))
        if sq.node in used:
            out.append(Diagnostic("OverlappingLoop", (sq.node + 1,)))
        used[sq.node] = "squid"
        if not sq.asymmetry > 0:
            out.append(Diagnostic("BadAsymmetry", (sq.node + 1,)))
        if sq.shunt_fF is not None and C[sq.node, sq.node] != 0:
            out.append(Diagnostic("DuplicateShunt", (sq.node + 1,)))
        if sq.shunt_fF is not None and not all(s > 0 for s in sq.shunt_fF):
            out.append(Diagnostic("NonPositiveShunt", (sq.node + 1,)))
    for p in spec.drive_ports:
        if not 0 <= p < n:
            out.append(Diagnostic("IndexOutOfRange", (p + 1,), "drive"))
    return out


# ---------------------------------------------------------------- file I/O


def spec_from_dict(data: dict) -> CircuitSpec:
    """Build a spec from the JSON tree (1-based node labels)."""
    known = {"title", "transmons", "capacitances", "loops", "squids", "drives"}
    extra = set(data) - known
    if extra:
        from .errors import UnknownKey

        raise UnknownKey(f"unknown circuit keys: {sorted(extra)}")
    transmons = data["transmons"]
    n = len(transmons)
    names, freqs, qubits, couplers = [], [], [], []
    for k, t in enumerate(transmons):
        names.append(t.get("name", f"T{k + 1}"))
        if "freq_GHz" not in t:
            from .errors import MissingUnits

            raise MissingUnits(f"transmon {k + 1}: frequency must be given as freq_GHz")
        freqs.append(float(t["freq_GHz"]))
        (qubits if t.get("role", "qubit") == "qubit" else couplers).append(k)

    caps = data["capacitances"]
    if caps.get("unit") != "fF":
        from .errors import MissingUnits

        raise MissingUnits("capacitances.unit must be 'fF'")
    C = np.zeros((n, n))
    seen = set()
    diags = []
    for i, j, val in caps["entries"]:
        a, b = int(i) - 1, int(j) - 1
        key = (min(a, b), max(a, b))
        if key in seen:
            diags.append(Diagnostic("DuplicateCapacitance", (a + 1, b + 1)))
        seen.add(key)
        C[a, b] = C[b, a] = float(val)
    if diags:
        raise InvalidSpec(diags)

    loops = [
        LoopSpec(int(lp["nodes"][0]) - 1, int(lp["nodes"][1]) - 1, float(lp["ratio_rJ"]), str(lp["flux_line"]))
        for lp in data.get("loops", [])
    ]
    squids = [
        SquidSpec(
            int(sq["node"]) - 1,
            float(sq["asymmetry"]),
            str(sq["flux_line"]),
            tuple(float(x) for x in sq["shunt_fF"]) if "shunt_fF" in sq else None,
        )
        for sq in data.get("squids", [])
    ]
    return CircuitSpec(
        names=names,
        cap_matrix_fF=C,
        bare_freqs_GHz=np.array(freqs),
        qubit_indices=qubits,
        coupler_indices=couplers,
        loops=loops,
        squids=squids,
        drive_ports=[int(d) - 1 for d in data.get("drives", [])],
        title=data.get("title", ""),
    )


def spec_to_dict(spec: CircuitSpec) -> dict:
    n = spec.transmon_count
    C = spec.cap_matrix_fF
    entries = [[i + 1, j + 1, float(C[i, j])] for i in range(n) for j in range(i, n) if C[i, j] != 0]
    out = {
        "title": spec.title,
        "transmons": [
            {
                "name": spec.names[k],
                "role": "qubit" if k in spec.qubit_indices else "coupler",
                "freq_GHz": float(spec.bare_freqs_GHz[k]),
            }
            for k in range(n)
        ],
        "capacitances": {"unit": "fF", "entries": entries},
        "loops": [
            {"nodes": [lp.node_a + 1, lp.node_b + 1], "ratio_rJ": lp.ratio_rJ, "flux_line": lp.flux_line}
            for lp in spec.loops
        ],
        "squids": [],
        "drives": [p + 1 for p in spec.drive_ports],
    }
    for sq in spec.squids:
        d = {"node": sq.node + 1, "asymmetry": sq.asymmetry, "flux_line": sq.flux_line}
        if sq.shunt_fF is not None:
            d["shunt_fF"] = list(sq.shunt_fF)
        out["squids"].append(d)
    return out


def load_spec(path) -> CircuitSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec: CircuitSpec, path):
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2))


_DATA = Path(__file__).parent / "data"


def dtc_three_qubit() -> CircuitSpec:
    """Three fixed-frequency qubits coupled by two double-transmon couplers."""
    return load_spec(_DATA / "dtc_three_qubit.json")


def stc_three_qubit() -> CircuitSpec:
    """Same qubits coupled by two single-transmon (SQUID) couplers."""
    return load_spec(_DATA / "stc_three_qubit.json")


def dtc_pair(side="L") -> CircuitSpec:
    """Isolated two-qubit DTC subsystem L (Q1,Q2,C4,C5) or R (Q2,Q3,C6,C7)."""
    nodes = ["Q1", "Q2", "C4", "C5"] if side == "L" else ["Q2", "Q3", "C6", "C7"]
    return dtc_three_qubit().subsystem(nodes, title=f"dtc-pair-{side}")


def stc_pair(side="L") -> CircuitSpec:
    nodes = ["Q1", "Q2", "C4"] if side == "L" else ["Q2", "Q3", "C5"]
    return stc_three_qubit().subsystem(nodes, title=f"stc-pair-{side}")


# ------------------------------------------------------------ reporting


def derived_to_dict(spec: CircuitSpec, p: DerivedParams) -> dict:
    """Derived parameters in plain-frequency units (GHz/MHz) and nA."""
    n = spec.transmon_count
    names = spec.names
    out = {
        "W_MHz": {names[i]: float(p.W[i, i] / TWO_PI * 1e3) for i in range(n)},
        "g_MHz": {
            f"{names[i]}-{names[j]}": float(p.g[i, j] / TWO_PI * 1e3) for i in range(n) for j in range(i + 1, n)
        },
        "omega_J_GHz": {names[i]: float(p.omega_J[i] / TWO_PI) for i in range(n)},
        "I_c_nA": {names[i]: float(p.I_c[i]) for i in range(n)},
        "loops": [
            {
                "nodes": [names[lp.node_a], names[lp.node_b]],
                "flux_line": lp.flux_line,
                "ratio_rJ": lp.ratio_rJ,
                "omega_J_GHz": float(p.omega_J_loop[k] / TWO_PI),
                "I_c_nA": float(p.I_c_loop[k]),
            }
            for k, lp in enumerate(spec.loops)
        ],
        "squids": [
            {
                "node": names[sq.node],
                "flux_line": sq.flux_line,
                "omega_JA_GHz": float(p.omega_J_squid[k, 0] / TWO_PI),
                "omega_JB_GHz": float(p.omega_J_squid[k, 1] / TWO_PI),
                "I_cA_nA": float(p.I_c_squid[k, 0]),
                "I_cB_nA": float(p.I_c_squid[k, 1]),
            }
            for k, sq in enumerate(spec.squids)
        ],
    }
    return out


def format_table(spec: CircuitSpec, p: DerivedParams) -> str:
    """Two-column text table of design and derived values."""
    rows = []
    n = spec.transmon_count
    nm = spec.names
    for i in range(n):
        rows.append((f"omega_{nm[i]}/2pi (GHz)", f"{spec.bare_freqs_GHz[i]:.4g}"))
    for i in range(n):
        rows.append((f"I_c{nm[i]} (nA)", f"{p.I_c[i]:.1f}"))
    for i in range(n):
        rows.append((f"omega_J{nm[i]}/2pi (GHz)", f"{p.omega_J[i] / TWO_PI:.1f}"))
    for k, lp in enumerate(spec.loops):
        tag = f"{nm[lp.node_a]}{nm[lp.node_b]}"
        rows.append((f"r_J[{tag}]", f"{lp.ratio_rJ:.3g}"))
        rows.append((f"I_c[{tag}] (nA)", f"{p.I_c_loop[k]:.1f}"))
        rows.append((f"omega_J[{tag}]/2pi (GHz)", f"{p.omega_J_loop[k] / TWO_PI:.3g}"))
    for k, sq in enumerate(spec.squids):
        rows.append((f"I_cB/I_cA[{nm[sq.node]}]", f"{sq.asymmetry:.4g}"))
        rows.append((f"I_cA[{nm[sq.node]}] (nA)", f"{p.I_c_squid[k, 0]:.1f}"))
        rows.append((f"I_cB[{nm[sq.node]}] (nA)", f"{p.I_c_squid[k, 1]:.1f}"))
        rows.append((f"omega_JA[{nm[sq.node]}]/2pi (GHz)", f"{p.omega_J_squid[k, 0] / TWO_PI:.1f}"))
        rows.append((f"omega_JB[{nm[sq.node]}]/2pi (GHz)", f"{p.omega_J_squid[k, 1] / TWO_PI:.1f}"))
    for i in range(n):
        rows.append((f"W_{nm[i]}{nm[i]}/2pi (MHz)", f"{p.W[i, i] / TWO_PI * 1e3:.0f}"))
    for i in range(n):
        for j in range(i + 1, n):
            val = p.g[i, j] / TWO_PI * 1e3
            rows.append((f"g_{nm[i]}{nm[j]}/2pi (MHz)", f"{val:.3g}"))
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{a:<{width}}  {b}" for a, b in rows)
