"""Charge-basis circuit Hamiltonians of transmon networks with DTC/STC couplers.

Energies are angular frequencies in rad/ns (hbar = 1).  The total Hamiltonian
is

    H = 4 n^T W n + sum_mu thetadot_mu t_mu^T W n + sum_i alpha_i (W n)_i + U(theta)

where every flux-dependent part of U is stored as cos(theta)*Xc + sin(theta)*Xs
per flux line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .circuit import CircuitSpec, DerivedParams
from .errors import MissingFlux
from .operators import TrigBundle, embed_operator, embed_product, loop_junction_term, single_mode_operators


@dataclass
class LoopTerm:
    loop: object
    omega_J: float
    bundle: TrigBundle


@dataclass
class SquidTerm:
    squid: object
    omega_A: float
    omega_B: float
    cos_op: sp.spmatrix
    sin_op: sp.spmatrix

    def coefficients(self, theta):
        """(cos-phi, sin-phi) coefficients of the SQUID potential at ``theta``."""
        return -(self.omega_A + self.omega_B * np.cos(theta)), -self.omega_B * np.sin(theta)


@dataclass
class HamiltonianParts:
    """Operator bundle for a set of transmons (``sites``, positions in the circuit)."""

    spec: CircuitSpec
    derived: DerivedParams
    N: int
    sites: tuple
    dims: tuple
    charging: sp.spmatrix
    bare_junctions: sp.spmatrix
    static: sp.spmatrix
    loops: list = field(default_factory=list)
    squids: list = field(default_factory=list)
    flux_terms: dict = field(default_factory=dict)
    flux_rate_vectors: dict = field(default_factory=dict)
    drive_vectors: dict = field(default_factory=dict)
    flux_rate_ops: dict = field(default_factory=dict)
    drive_ops: dict = field(default_factory=dict)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    @property
    def flux_lines(self):
        return list(self.flux_terms)

    def number_op(self, site):
        """Embedded n for a spec position belonging to this part."""
        m = single_mode_operators(self.N)
        return embed_operator(m.n_op, self.sites.index(site), self.dims)

    def linear_charge_op(self, coeffs):
        """sum_k coeffs[k] n_k over the sites of this part (coeffs indexed by spec position)."""
        out = sp.csr_matrix((self.dim, self.dim))
        for k in self.sites:
            if coeffs[k] != 0:
                out = out + coeffs[k] * self.number_op(k)
        return out.tocsr()


def flux_rate_vector(spec: CircuitSpec, derived: DerivedParams, line: str) -> np.ndarray:
    """t_mu for one flux line (ns), summed over every loop/SQUID on that line."""
    n = spec.transmon_count
    inv = derived.inv_omega_C
    t = np.zeros(n)
    for lp in spec.loops:
        if lp.flux_line == line:
            c = inv[lp.node_a, lp.node_b]
            t[lp.node_a] -= c
            t[lp.node_b] += c
    for sq in spec.squids:
        if sq.flux_line == line:
            k = sq.node
            col = inv[:, k]
            for i in range(n):
                if i != k:
                    t[i] -= 0.5 * col[i]
            t[k] += 0.5 * col.sum()
    return t


def assemble_static(spec: CircuitSpec, derived: DerivedParams, N: int, sites=None) -> HamiltonianParts:
    """Charging and fixed junction terms, plus every flux/control bundle.

    ``sites`` restricts the assembly to a subset of transmons (a reduction
    group); the charging term then holds only couplings inside the subset.
    """
    sites = tuple(range(spec.transmon_count)) if sites is None else tuple(sites)
    m = single_mode_operators(N)
    dims = tuple(m.dim for _ in sites)
    W = derived.W
    n_ops = [embed_operator(m.n_op, p, dims) for p in range(len(sites))]

    charging = sp.csr_matrix((int(np.prod(dims)),) * 2)
    for a, i in enumerate(sites):
        charging = charging + 4 * W[i, i] * (n_ops[a] @ n_ops[a])
        for b in range(a + 1, len(sites)):
            j = sites[b]
            if W[i, j] != 0:
                charging = charging + 8 * W[i, j] * (n_ops[a] @ n_ops[b])

    squid_nodes = {sq.node for sq in spec.squids}
    bare = sp.csr_matrix(charging.shape)
    for a, i in enumerate(sites):
        if i not in squid_nodes:
            bare = bare - derived.omega_J[i] * embed_operator(m.cos_op, a, dims)

    parts = HamiltonianParts(
        spec=spec,
        derived=derived,
        N=N,
        sites=sites,
        dims=dims,
        charging=charging.tocsr(),
        bare_junctions=bare.tocsr(),
        static=(charging + bare).tocsr(),
    )
    _attach_flux_dependent(parts)
    _attach_controls(parts)
    return parts


def _attach_flux_dependent(parts: HamiltonianParts):
    spec, derived, sites, dims, N = parts.spec, parts.derived, parts.sites, parts.dims, parts.N
    m = single_mode_operators(N)
    static = parts.static
    for k, lp in enumerate(spec.loops):
        if lp.node_a in sites and lp.node_b in sites:
            bundle = loop_junction_term(sites.index(lp.node_a), sites.index(lp.node_b), dims, N)
            wj = derived.omega_J_loop[k]
            parts.loops.append(LoopTerm(lp, wj, bundle))
            _add_flux_term(parts, lp.flux_line, -wj * bundle.even, -wj * bundle.odd)
    for k, sq in enumerate(spec.squids):
        if sq.node in sites:
            a = sites.index(sq.node)
            wa, wb = derived.omega_J_squid[k]
            cos_op = embed_operator(m.cos_op, a, dims)
            sin_op = embed_operator(m.sin_op, a, dims)
            parts.squids.append(SquidTerm(sq, wa, wb, cos_op, sin_op))
            static = static - wa * cos_op
            _add_flux_term(parts, sq.flux_line, -wb * cos_op, -wb * sin_op)
    parts.static = static.tocsr()


def _add_flux_term(parts, line, Xc, Xs):
    if line in parts.flux_terms:
        c0, s0 = parts.flux_terms[line]
        Xc, Xs = c0 + Xc, s0 + Xs
    parts.flux_terms[line] = (Xc.tocsr(), Xs.tocsr())


def _attach_controls(parts: HamiltonianParts):
    spec, derived = parts.spec, parts.derived
    W = derived.W
    for line in spec.flux_lines:
        vec = flux_rate_vector(spec, derived, line) @ W
        parts.flux_rate_vectors[line] = vec
        parts.flux_rate_ops[line] = parts.linear_charge_op(vec)
    for port in spec.drive_ports:
        vec = W[port].copy()
        parts.drive_vectors[port] = vec
        parts.drive_ops[port] = parts.linear_charge_op(vec)


def assemble_flux_dependent(parts: HamiltonianParts) -> dict:
    """Per flux line: the loop bundles and SQUID terms it controls."""
    out = {}
    for lt in parts.loops:
        out.setdefault(lt.loop.flux_line, []).append(lt)
    for st in parts.squids:
        out.setdefault(st.squid.flux_line, []).append(st)
    return out


def _theta_dict(parts, theta):
    if theta is None:
        theta = {}
    if not isinstance(theta, Mapping):
        theta = dict(zip(parts.spec.flux_lines, np.atleast_1d(theta)))
    return theta


def hamiltonian_at(parts: HamiltonianParts, theta=None, theta_dot=None, alpha=None) -> sp.csr_matrix:
    """H(theta) as a sparse matrix.

    ``theta`` maps flux line -> radians (a sequence follows ``spec.flux_lines``).
    ``theta_dot`` (rad/ns) and ``alpha`` (port -> dimensionless drive) default
    to zero, which is the quasi-static Hamiltonian.
    """
    theta = _theta_dict(parts, theta)
    H = parts.static
    for line, (Xc, Xs) in parts.flux_terms.items():
        if line not in theta:
            raise MissingFlux(f"no flux value for line {line!r}")
        th = float(theta[line])
        H = H + np.cos(th) * Xc + np.sin(th) * Xs
    for line, rate in (theta_dot or {}).items():
        if rate:
            H = H + rate * parts.flux_rate_ops[line]
    for port, a in (alpha or {}).items():
        if a:
            H = H + a * parts.drive_ops[port]
    return sp.csr_matrix(H)


def control_operators(parts: HamiltonianParts) -> dict:
    return {"flux_rate": dict(parts.flux_rate_ops), "drive": dict(parts.drive_ops)}


def save_triplets(matrix, path):
    """Write a matrix as 'row col real imag' lines (debug export)."""
    coo = sp.coo_matrix(matrix)
    data = np.asarray(coo.data, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"# shape {coo.shape[0]} {coo.shape[1]}\n")
        for r, c, v in zip(coo.row, coo.col, data):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")
