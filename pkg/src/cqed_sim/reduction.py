"""Hierarchical dimension reduction and flux-gridded moving frames.

Transmons are split into groups (qubits, each coupler unit).  Every group
Hamiltonian is diagonalized in the charge basis and truncated; the full
Hamiltonian is then rebuilt from the retained group energies and the
inter-group charge couplings 8 W_ij n'_i n'_j.  For gate simulation the
reduced Hamiltonian is diagonalized once more on a grid of flux values and
the lowest N0 eigenvectors define a frame per grid node.
"""

from __future__ import annotations

import hashlib
import json
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .errors import EigensolveFailure, GridEdge, IncompleteCover
from .hamiltonian import assemble_static, hamiltonian_at

DENSE_EIG_LIMIT = 8192
RESIDUAL_TOL = 1e-8
DEGENERACY_GAP = 1e-9


# ------------------------------------------------------------------ solvers


def lowest_eigenpairs(H, k, check=True):
    """Lowest ``k`` eigenpairs of a Hermitian matrix or LinearOperator, ascending."""
    dim = H.shape[0]
    k = min(k, dim)
    if not isinstance(H, sla.LinearOperator) and dim <= DENSE_EIG_LIMIT:
        A = H.toarray() if sp.issparse(H) else np.asarray(H)
        if np.isrealobj(A) or not np.any(A.imag):
            A = A.real
        A = 0.5 * (A + A.conj().T)
        if k == dim:
            evals, evecs = la.eigh(A)
        else:
            evals, evecs = la.eigh(A, subset_by_index=[0, k - 1], driver="evr")
        return evals, evecs
    try:
        if isinstance(H, sla.LinearOperator):
            evals, evecs = sla.eigsh(H, k=k, which="SA", tol=1e-12)
        else:
            shift = _lower_bound(H)
            evals, evecs = sla.eigsh(H, k=k, sigma=shift, which="LM", tol=1e-12)
    except (sla.ArpackNoConvergence, RuntimeError) as exc:
        raise EigensolveFailure(str(exc)) from exc
    order = np.argsort(evals)
    evals, evecs = evals[order], evecs[:, order]
    if check:
        res = np.linalg.norm(H @ evecs - evecs * evals, axis=0)
        scale = max(1.0, np.max(np.abs(evals)))
        if np.max(res) > RESIDUAL_TOL * scale * 10:
            raise EigensolveFailure(f"eigen residual {np.max(res):.2e} above tolerance")
    return evals, evecs


def _lower_bound(H):
    # Gershgorin-style bound keeps the shift below the spectrum
    A = sp.csr_matrix(H)
    d = A.diagonal().real
    r = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(d - r)) - 1.0


def apply_on_axis(op, X, axis):
    """Apply ``op`` (matrix) to tensor ``X`` along ``axis``."""
    Y = np.tensordot(op, X, axes=([1], [axis]))
    return np.moveaxis(Y, 0, axis)


# --------------------------------------------------------------- groups


@dataclass
class GroupReduction:
    group: tuple
    cutoff: int
    eigvals: np.ndarray
    basis: np.ndarray
    reduced_n_ops: dict = field(default_factory=dict)

    def reduce(self, op):
        V = self.basis
        return V.conj().T @ (op @ V)


def reduce_group(H_group, cutoff: int, n_ops=None, group=()) -> GroupReduction:
    """Keep the lowest ``cutoff`` eigenpairs of a group Hamiltonian.

    ``n_ops`` maps site -> charge-basis number operator of that group member;
    each is projected as V^dag n V.
    """
    dim = H_group.shape[0]
    if cutoff > dim:
        raise ValueError(f"cutoff {cutoff} exceeds group dimension {dim}")
    evals, evecs = lowest_eigenpairs(H_group, cutoff)
    red = GroupReduction(tuple(group), cutoff, evals, evecs)
    for site, op in (n_ops or {}).items():
        nr = red.reduce(op)
        red.reduced_n_ops[site] = 0.5 * (nr + nr.conj().T)
    return red


def default_groups(spec):
    """Qubits together, one group per coupler unit (loop pair or SQUID node)."""
    groups = [tuple(sorted(spec.qubit_indices))] if spec.qubit_indices else []
    used = set(spec.qubit_indices)
    for lp in spec.loops:
        groups.append(tuple(sorted((lp.node_a, lp.node_b))))
        used |= {lp.node_a, lp.node_b}
    for k in spec.coupler_indices:
        if k not in used:
            groups.append((k,))
    return groups


class ReducedModel:
    """Reduced-basis Hamiltonian of a circuit, evaluable at any flux point.

    ``cutoffs`` gives the retained dimension per group (``None`` keeps the
    full group dimension).  Group reductions of flux-bearing groups are
    recomputed per flux value and cached.
    """

    def __init__(self, spec, derived, N, groups=None, cutoffs=None):
        self.spec, self.derived, self.N = spec, derived, N
        groups = [tuple(g) for g in (groups or default_groups(spec))]
        flat = [k for g in groups for k in g]
        if sorted(flat) != list(range(spec.transmon_count)):
            raise IncompleteCover(f"groups {groups} do not partition {spec.transmon_count} transmons")
        self.groups = groups
        self.parts = [assemble_static(spec, derived, N, sites=g) for g in groups]
        if cutoffs is None:
            cutoffs = [None] * len(groups)
        self.cutoffs = [p.dim if c is None else min(int(c), p.dim) for p, c in zip(self.parts, cutoffs)]
        self.group_of = {k: gi for gi, g in enumerate(groups) for k in g}
        W = derived.W
        self.cross = [
            (i, j, 8 * W[i, j])
            for i in range(spec.transmon_count)
            for j in range(i + 1, spec.transmon_count)
            if self.group_of[i] != self.group_of[j] and W[i, j] != 0
        ]
        self._cache = {}

    @property
    def dims(self):
        return tuple(self.cutoffs)

    @property
    def dim(self):
        return int(np.prod(self.cutoffs))

    def _theta_key(self, gi, theta):
        lines = self.parts[gi].flux_lines
        return (gi,) + tuple(round(float(theta[line]), 15) for line in lines)

    def reduction(self, gi, theta) -> GroupReduction:
        theta = self._theta(theta)
        key = self._theta_key(gi, theta)
        red = self._cache.get(key)
        if red is None:
            parts = self.parts[gi]
            H = hamiltonian_at(parts, {line: theta[line] for line in parts.flux_lines})
            n_ops = {k: parts.number_op(k) for k in parts.sites}
            red = reduce_group(H, self.cutoffs[gi], n_ops, group=parts.sites)
            if len(self._cache) > 256:
                self._cache.clear()
            self._cache[key] = red
        return red

    def reductions(self, theta):
        return [self.reduction(gi, theta) for gi in range(len(self.groups))]

    def _theta(self, theta):
        if theta is None:
            theta = {}
        if not isinstance(theta, dict):
            theta = dict(zip(self.spec.flux_lines, np.atleast_1d(theta)))
        return theta

    # ------------------------------------------------------------ assembly

    def embed(self, gi, op):
        """Dense operator on the reduced product space acting on group ``gi``."""
        out = np.ones((1, 1))
        for g, d in enumerate(self.dims):
            out = np.kron(out, op if g == gi else np.eye(d))
        return out

    def hamiltonian(self, theta, reds=None):
        """Dense reduced Hamiltonian H' = sum_g e_g + H'_int."""
        reds = reds or self.reductions(theta)
        diag = np.zeros(self.dims)
        for gi, red in enumerate(reds):
            shape = [1] * len(self.dims)
            shape[gi] = self.dims[gi]
            diag = diag + red.eigvals.reshape(shape)
        H = np.diag(diag.ravel()).astype(complex)
        for i, j, c in self.cross:
            gi, gj = self.group_of[i], self.group_of[j]
            H += c * (self.embed(gi, reds[gi].reduced_n_ops[i]) @ self.embed(gj, reds[gj].reduced_n_ops[j]))
        H = 0.5 * (H + H.conj().T)
        if not np.any(H.imag):
            H = H.real
        return H

    def hamiltonian_operator(self, theta, reds=None):
        """Matrix-free H' for reduced spaces too large for dense storage."""
        reds = reds or self.reductions(theta)
        dims = self.dims
        diag = np.zeros(dims)
        for gi, red in enumerate(reds):
            shape = [1] * len(dims)
            shape[gi] = dims[gi]
            diag = diag + red.eigvals.reshape(shape)
        diag = diag.ravel()
        cross = [(c, self.group_of[i], reds[self.group_of[i]].reduced_n_ops[i],
                  self.group_of[j], reds[self.group_of[j]].reduced_n_ops[j]) for i, j, c in self.cross]

        def matvec(x):
            x = np.asarray(x)
            cols = x.reshape(self.dim, -1)
            X = cols.reshape(dims + (cols.shape[1],))
            out = diag[:, None] * cols
            for c, gi, ni, gj, nj in cross:
                Y = apply_on_axis(nj, apply_on_axis(ni, X, gi), gj)
                out = out + c * Y.reshape(self.dim, -1)
            return out.reshape(x.shape)

        return sla.LinearOperator((self.dim, self.dim), matvec=matvec, matmat=matvec, dtype=complex)

    def eigensystem(self, theta, k):
        """Lowest ``k`` eigenpairs of H'(theta) plus the group reductions used."""
        reds = self.reductions(theta)
        if self.dim <= DENSE_EIG_LIMIT:
            H = self.hamiltonian(theta, reds)
        else:
            H = self.hamiltonian_operator(theta, reds)
        evals, evecs = lowest_eigenpairs(H, k)
        return evals, evecs, reds

    def apply_group_ops(self, X, ops):
        """Apply {group index: matrix} to columns X of the reduced space."""
        T = X.reshape(self.dims + (X.shape[1],))
        for gi, op in ops.items():
            T = apply_on_axis(op, T, gi)
        return T.reshape(self.dim, X.shape[1])

    def charge_combination(self, coeffs, reds, X):
        """(sum_k coeffs[k] n'_k) X for columns X of the reduced space."""
        out = np.zeros(X.shape, dtype=complex)
        for k, c in enumerate(coeffs):
            if c != 0:
                gi = self.group_of[k]
                out += c * self.apply_group_ops(X, {gi: reds[gi].reduced_n_ops[k]})
        return out

    def flux_term_ops(self, line, reds):
        """Reduced (Xc', Xs') per group for one flux line: {group: (Xc, Xs)}."""
        out = {}
        for gi, parts in enumerate(self.parts):
            if line in parts.flux_terms:
                Xc, Xs = parts.flux_terms[line]
                out[gi] = (reds[gi].reduce(Xc), reds[gi].reduce(Xs))
        return out

    def full_basis(self, reds, X):
        """Map reduced-space columns X to the full charge basis (small systems only)."""
        T = X.reshape(self.dims + (X.shape[1],))
        for gi, red in enumerate(reds):
            T = apply_on_axis(red.basis, T, gi)
        return T.reshape(-1, X.shape[1])


def assemble_reduced(groups, W, cutoffs=None):
    """Spec-level helper: see :class:`ReducedModel` (``groups`` = (spec, derived, N, groups))."""
    spec, derived, N, grp = groups
    return ReducedModel(spec, derived, N, grp, cutoffs)


# ----------------------------------------------------------------- frames


@dataclass
class FrameNode:
    theta: float
    energies: np.ndarray
    V0: np.ndarray
    reds: list
    ops: dict = field(default_factory=dict)


@dataclass
class Frames:
    """Truncated eigenframes of H' on a flux grid for one moving flux line."""

    line: str
    fixed: dict
    grid: np.ndarray
    step: float
    half_width: float
    N0: int
    nodes: list
    transfer_inc: list
    energy_offset: float = 0.0

    def bin_index(self, theta):
        """Grid node whose bin [theta_m - w, theta_m + w) contains ``theta``."""
        return int(np.floor((theta - self.grid[0]) / self.step + 0.5 + 1e-12))

    def in_range(self, theta):
        m = self.bin_index(theta)
        return 0 <= m < len(self.grid)

    def node_of(self, theta):
        m = self.bin_index(theta)
        if not 0 <= m < len(self.grid):
            raise GridEdge(f"theta={theta} outside the frame grid")
        return m

    def theta_dict(self, theta):
        d = dict(self.fixed)
        d[self.line] = theta
        return d


def _align_columns(S, energies):
    """Column phases (and near-degenerate order) making S's dominant overlaps real-positive.

    ``S[i, j]`` = <new_i | old_j>.  Returns (perm, phases) for the new columns.
    """
    n = S.shape[0]
    perm = np.arange(n)
    i = 0
    while i < n:
        j = i + 1
        while j < n and energies[j] - energies[j - 1] < DEGENERACY_GAP:
            j += 1
        if j - i > 1:
            block = np.abs(S[i:j]) ** 2
            order = np.argsort(-block.max(axis=1))
            targets = [int(np.argmax(block[r])) for r in range(j - i)]
            ranked = sorted(range(j - i), key=lambda r: targets[r])
            perm[i:j] = i + np.array(ranked if len(set(targets)) == j - i else order)
        i = j
    S = S[perm]
    idx = np.argmax(np.abs(S), axis=1)
    ov = S[np.arange(n), idx]
    mag = np.abs(ov)
    phases = np.where(mag > 0, ov / np.where(mag > 0, mag, 1), 1.0)
    return perm, phases


def _group_overlap(model, reds_new, reds_old):
    ops = {}
    for gi, (rn, ro) in enumerate(zip(reds_new, reds_old)):
        if rn is ro:
            continue
        ops[gi] = rn.basis.conj().T @ ro.basis
    return ops


def _transfer(model, node_new, node_old):
    ops = _group_overlap(model, node_new.reds, node_old.reds)
    X = model.apply_group_ops(node_old.V0, ops) if ops else node_old.V0
    return node_new.V0.conj().T @ X


def build_frames(model: ReducedModel, line, grid=None, N0=200, fixed=None, drive_ports=None, align=True):
    """Diagonalize H' at every grid node and precompute frame operators.

    ``grid`` is (start, stop, step) in radians; default (0, pi, 0.05*pi).
    Per node the frame carries: flux term operators ('flux_c', 'flux_s'),
    the flux-rate operator ('flux_rate') and per-port drive operators
    ('drive', port).
    """
    start, stop, step = grid if grid is not None else (0.0, np.pi, 0.05 * np.pi)
    thetas = start + step * np.arange(int(np.floor((stop - start) / step + 1e-9)) + 1)
    fixed = {k: v for k, v in (fixed or {}).items() if k != line}
    spec = model.spec
    if N0 > model.dim:
        raise ValueError(f"N0={N0} exceeds reduced dimension {model.dim}")
    rate_vec = model.parts[0].flux_rate_vectors.get(line)
    ports = spec.drive_ports if drive_ports is None else drive_ports

    nodes, transfers = [], []
    for th in thetas:
        theta = dict(fixed)
        theta[line] = th
        evals, V0, reds = model.eigensystem(theta, N0)
        V0 = V0.astype(complex)
        node = FrameNode(float(th), evals, V0, reds)
        if nodes:
            S = _transfer(model, node, nodes[-1])
            if align:
                perm, phases = _align_columns(S, evals)
                node.V0 = V0[:, perm] * phases.conj()[None, :]
                node.energies = evals[perm]
                S = phases.conj()[:, None] * S[perm]
            transfers.append(S)
        _frame_ops(model, node, line, rate_vec, ports)
        nodes.append(node)
    offset = 0.0
    return Frames(line, fixed, thetas, step, step / 2, N0, nodes, transfers, offset)


def _frame_ops(model, node, line, rate_vec, ports):
    V0, reds = node.V0, node.reds
    Vh = V0.conj().T
    fl = model.flux_term_ops(line, reds)
    if fl:
        node.ops["flux_c"] = _herm(Vh @ model.apply_group_ops(V0, {g: xc for g, (xc, _) in fl.items()}))
        node.ops["flux_s"] = _herm(Vh @ model.apply_group_ops(V0, {g: xs for g, (_, xs) in fl.items()}))
    if rate_vec is not None:
        node.ops["flux_rate"] = _herm(Vh @ model.charge_combination(rate_vec, reds, V0))
    for p in ports:
        vec = model.derived.W[p]
        node.ops[("drive", p)] = _herm(Vh @ model.charge_combination(vec, reds, V0))


def _herm(A):
    return 0.5 * (A + A.conj().T)


def frame_switch(frames: Frames, m: int, direction: int):
    """Frame-coordinate transfer P(theta_{m+-1})^dag P(theta_m) (N0 x N0)."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    target = m + direction
    if not (0 <= m < len(frames.nodes) and 0 <= target < len(frames.nodes)):
        raise GridEdge(f"no grid node {target} next to {m}")
    if direction == 1:
        return frames.transfer_inc[m]
    return frames.transfer_inc[target].conj().T


def frame_basis(model: ReducedModel, frames: Frames, m: int):
    """Materialize P(theta_m) in the full charge basis (small systems only)."""
    node = frames.nodes[m]
    return model.full_basis(node.reds, node.V0)


# ------------------------------------------------------------------ cache


def frames_key(model: ReducedModel, line, grid, N0, fixed=None, drive_ports=None):
    """Content hash of everything that determines a set of frames."""
    blob = json.dumps({
        "spec": model.spec.content_hash(),
        "N": model.N,
        "groups": model.groups,
        "cutoffs": model.cutoffs,
        "line": line,
        "grid": [round(float(x), 12) for x in grid],
        "N0": int(N0),
        "fixed": {k: round(float(v), 12) for k, v in sorted((fixed or {}).items()) if k != line},
        "ports": sorted(drive_ports) if drive_ports is not None else None,
    }, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cached_frames(model: ReducedModel, line, grid, N0=200, fixed=None, drive_ports=None, cache_dir=None):
    """build_frames with an on-disk pickle keyed by :func:`frames_key`.

    With ``cache_dir`` None this is a plain call to :func:`build_frames`.
    """
    if cache_dir is None:
        return build_frames(model, line, grid, N0, fixed, drive_ports)
    path = Path(cache_dir) / f"frames_{frames_key(model, line, grid, N0, fixed, drive_ports)}.pkl"
    if path.exists():
        with open(path, "rb") as fh:
            return pickle.load(fh)
    frames = build_frames(model, line, grid, N0, fixed, drive_ports)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as fh:
        pickle.dump(frames, fh, protocol=pickle.HIGHEST_PROTOCOL)
    tmp.replace(path)
    return frames
