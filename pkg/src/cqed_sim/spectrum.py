"""Eigenstate labeling, ZZ/ZZZ couplings and idle-point search."""

from __future__ import annotations

import csv
import itertools
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .circuit import radns_to_ghz
from .errors import AmbiguousLabel, MissingLabel, NoBracket
from .operators import single_mode_operators

CONFIDENCE_FLOOR = 0.5
KHZ = 1e6  # GHz -> kHz


@dataclass
class LabeledSpectrum:
    """Labeled eigenfrequencies at one flux point, anchored at the ground label."""

    theta: dict
    names: tuple
    freqs: dict
    confidence: dict
    index: dict
    energies: np.ndarray = field(repr=False, default=None)
    ambiguous: list = field(default_factory=list)
    vectors: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, label):
        return self.freqs[tuple(label)]

    def __contains__(self, label):
        return tuple(label) in self.freqs

    def shifted(self, delta):
        """Copy with every eigenvalue moved by ``delta`` and re-anchored."""
        e = None if self.energies is None else self.energies + delta
        return LabeledSpectrum(dict(self.theta), self.names, dict(self.freqs), dict(self.confidence),
                               dict(self.index), e, list(self.ambiguous))


@dataclass
class CouplingReport:
    theta: dict
    zeta: dict
    eta: dict = field(default_factory=dict)

    def khz(self):
        return {k: float(radns_to_ghz(v) * KHZ) for k, v in self.zeta.items()}


# ------------------------------------------------------------ references


def single_mode_states(model, site, theta, count):
    """Lowest ``count`` eigenvectors of one isolated transmon (no loop junction)."""
    spec, d = model.spec, model.derived
    m = single_mode_operators(model.N)
    H = 4 * d.W[site, site] * (m.n_op @ m.n_op)
    sq = [(k, s) for k, s in enumerate(spec.squids) if s.node == site]
    if sq:
        k, s = sq[0]
        wa, wb = d.omega_J_squid[k]
        th = float(theta.get(s.flux_line, 0.0))
        H = H - (wa + wb * np.cos(th)) * m.cos_op - wb * np.sin(th) * m.sin_op
    else:
        H = H - d.omega_J[site] * m.cos_op
    _, vecs = np.linalg.eigh(H)
    return vecs[:, :count]


def group_labels(model, gi, red, theta, max_occ=3):
    """Occupation tuples for the retained eigenstates of one group.

    Each group eigenvector gets the bare product label it overlaps most
    (greedy, injective).  Returns {label: (index, overlap)}.
    """
    sites = model.groups[gi]
    states = {k: single_mode_states(model, k, theta, max_occ + 1) for k in sites}
    cands = [occ for occ in itertools.product(range(max_occ + 1), repeat=len(sites)) if sum(occ) <= max_occ]
    refs = []
    for occ in cands:
        v = np.ones(1)
        for k, o in zip(sites, occ):
            v = np.kron(v, states[k][:, o])
        refs.append(v)
    R = np.array(refs)
    ov = np.abs(R.conj() @ red.basis) ** 2
    return dict((cands[r], (c, ov[r, c])) for r, c in _greedy(ov))


def _greedy(ov):
    """Injective (row, col) assignment by descending overlap."""
    pairs = []
    used_r, used_c = set(), set()
    order = np.argsort(-ov, axis=None)
    nr = min(ov.shape)
    for flat in order:
        r, c = divmod(int(flat), ov.shape[1])
        if r in used_r or c in used_c:
            continue
        pairs.append((r, c))
        used_r.add(r)
        used_c.add(c)
        if len(pairs) == nr:
            break
    return pairs


def default_targets(spec, doubles=True):
    """Computational labels, single coupler excitations and (optionally) doubly excited qubits."""
    n = spec.transmon_count
    qs, cs = list(spec.qubit_indices), list(spec.coupler_indices)
    out = []
    for bits in itertools.product((0, 1), repeat=len(qs)):
        lab = [0] * n
        for q, b in zip(qs, bits):
            lab[q] = b
        out.append(tuple(lab))
    for c in cs:
        lab = [0] * n
        lab[c] = 1
        out.append(tuple(lab))
    if doubles:
        for q in qs:
            lab = [0] * n
            lab[q] = 2
            out.append(tuple(lab))
    return out


def reference_indices(model, reds, theta, targets, max_occ=3):
    """Flat reduced-space index of the product reference for every target label."""
    glabels = [group_labels(model, gi, red, theta, max_occ) for gi, red in enumerate(reds)]
    out, conf = {}, {}
    for lab in targets:
        idx, c = [], 1.0
        for gi, g in enumerate(model.groups):
            sub = tuple(lab[k] for k in g)
            if sub not in glabels[gi]:
                break
            j, ov = glabels[gi][sub]
            idx.append(j)
            c *= ov
        else:
            out[lab] = int(np.ravel_multi_index(idx, model.dims))
            conf[lab] = c
    return out, conf


# -------------------------------------------------------------- labeling


def label_eigenstates(evals, evecs, model, reds, theta, targets=None, max_occ=3, previous=None):
    """Assign occupation labels to reduced eigenvectors by maximum overlap.

    ``evecs`` are columns in the reduced product space of ``model``.  Each
    target label is matched to the eigenvector maximizing |<ref|v>|^2 where
    ref is the product of group eigenstates carrying that label.  Labels
    whose best overlap is below 0.5 are flagged (AmbiguousLabel warning) and,
    when ``previous`` is given, resolved by energy continuity.
    """
    theta = model._theta(theta)
    targets = [tuple(t) for t in (targets or default_targets(model.spec))]
    ref, _ = reference_indices(model, reds, theta, targets, max_occ)
    labs = [t for t in targets if t in ref]
    rows = np.array([ref[t] for t in labs], dtype=int)
    ov = np.abs(evecs[rows, :]) ** 2
    assign = {labs[r]: (c, ov[r, c]) for r, c in _greedy(ov)}

    ambiguous = [lab for lab, (_, c) in assign.items() if c < CONFIDENCE_FLOOR]
    if ambiguous and previous is not None:
        taken = {i for lab, (i, _) in assign.items() if lab not in ambiguous}
        for lab in ambiguous:
            if lab not in previous.index or previous.energies is None:
                continue
            e_prev = previous.energies[previous.index[lab]]
            free = [i for i in range(len(evals)) if i not in taken]
            i = min(free, key=lambda k: abs(evals[k] - e_prev))
            assign[lab] = (i, ov[labs.index(lab), i])
            taken.add(i)
    if ambiguous:
        warnings.warn(f"low-confidence labels at {theta}: {ambiguous}", AmbiguousLabel, stacklevel=2)

    ground = tuple(0 for _ in range(model.spec.transmon_count))
    if ground not in assign:
        raise MissingLabel("ground state label could not be assigned")
    e0 = evals[assign[ground][0]]
    freqs = {lab: float(evals[i] - e0) for lab, (i, _) in assign.items()}
    conf = {lab: float(c) for lab, (_, c) in assign.items()}
    index = {lab: int(i) for lab, (i, _) in assign.items()}
    freqs[ground] = 0.0
    return LabeledSpectrum(dict(theta), tuple(model.spec.names), freqs, conf, index,
                           np.asarray(evals), ambiguous, evecs)


def labeled_spectrum(model, theta, k=None, targets=None, previous=None):
    """Diagonalize the reduced model at ``theta`` and label the result."""
    targets = targets or default_targets(model.spec)
    k = k or min(model.dim, max(24, 3 * len(targets)))
    evals, evecs, reds = model.eigensystem(theta, k)
    return label_eigenstates(evals, evecs, model, reds, theta, targets, previous=previous)


# ------------------------------------------------------------- couplings


def _excitation(n, sites, occ=1):
    lab = [0] * n
    for s in sites:
        lab[s] = occ
    return tuple(lab)


def coupling_strengths(spectrum: LabeledSpectrum, qubits) -> CouplingReport:
    """Pairwise ZZ (and ZZZ for three qubits) from labeled frequencies.

    ``qubits`` are label positions of the qubits in order (e.g. spec.qubit_indices).
    """
    n = len(spectrum.names)
    qubits = list(qubits)

    def w(*sites):
        lab = _excitation(n, sites)
        if lab not in spectrum.freqs:
            raise MissingLabel(f"label {lab} missing from spectrum")
        return spectrum.freqs[lab] - spectrum.freqs.get(_excitation(n, ()), 0.0)

    zeta = {}
    for a, b in itertools.combinations(range(len(qubits)), 2):
        qa, qb = qubits[a], qubits[b]
        zeta[f"zeta{a + 1}{b + 1}"] = w(qa, qb) - w(qa) - w(qb)
    if len(qubits) == 3:
        singles = sum(w(q) for q in qubits)
        pairs = sum(zeta.values())
        zeta["zetaZZZ"] = w(*qubits) - singles - pairs
    eta = {}
    for a, q in enumerate(qubits):
        dbl = _excitation(n, [q], 2)
        if dbl in spectrum.freqs:
            eta[f"eta{a + 1}"] = spectrum.freqs[dbl] - 2 * w(q)
    return CouplingReport(dict(spectrum.theta), zeta, eta)


# ----------------------------------------------------------------- sweeps


def sweep_flux(model, line, thetas, fixed=None, k=None, targets=None, threads=1):
    """Labeled spectra along one flux line, other lines held at ``fixed``.

    With ``threads`` > 1 the eigensolves run in a worker pool; labeling is
    always done sequentially so ambiguous labels can lean on the previous point.
    """
    targets = targets or default_targets(model.spec)
    k = k or min(model.dim, max(24, 3 * len(targets)))
    points = []
    for th in np.asarray(thetas, dtype=float):
        theta = dict(fixed or {})
        theta[line] = float(th)
        points.append(theta)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            systems = list(pool.map(lambda th: model.eigensystem(th, k), points))
    else:
        systems = (model.eigensystem(th, k) for th in points)
    out, prev = [], None
    for theta, (evals, evecs, reds) in zip(points, systems):
        spec = label_eigenstates(evals, evecs, model, reds, theta, targets, previous=prev)
        spec.vectors = None
        out.append(spec)
        prev = spec
    return out


@dataclass
class IdleResult:
    theta: float
    zeta: float
    grid_index: int
    refined: bool


def find_idle(thetas, zetas, evaluate=None, mirror=True):
    """Flux minimizing |zeta| with parabolic refinement between grid points.

    A sign change of zeta next to the best grid point is resolved as the
    root of the local parabola; otherwise the parabola vertex is used when
    it improves on the grid value.  With ``mirror`` the samples are extended
    by the symmetry zeta(-x) = zeta(x) about 0 and pi so that an idle at a
    range edge (e.g. Theta = 0) is still bracketed.  ``evaluate`` (optional)
    recomputes zeta at the refined flux; the grid point is kept if the
    recomputed value is worse.
    """
    x = np.asarray(thetas, dtype=float)
    z = np.asarray(zetas, dtype=float)
    if len(x) < 3:
        raise NoBracket("need at least three samples")
    order = np.argsort(x)
    x, z = x[order], z[order]
    if mirror:
        for edge in (0.0, np.pi):
            if np.isclose(x[0], edge, atol=1e-12):
                x = np.concatenate([2 * edge - x[1:3][::-1], x])
                z = np.concatenate([z[1:3][::-1], z])
            if np.isclose(x[-1], edge, atol=1e-12):
                x = np.concatenate([x, 2 * edge - x[-3:-1][::-1]])
                z = np.concatenate([z, z[-3:-1][::-1]])
    i = int(np.argmin(np.abs(z)))
    if i == 0 or i == len(x) - 1:
        raise NoBracket("|zeta| is monotone over the sweep range")
    xs, zs = x[i - 1:i + 2], z[i - 1:i + 2]
    a, b, c = np.polyfit(xs - x[i], zs, 2)
    best_x, best_z, refined = x[i], z[i], False
    roots = np.roots([a, b, c]) if a != 0 else (np.array([-c / b]) if b != 0 else np.array([]))
    roots = [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-14 and xs[0] - x[i] <= r.real <= xs[2] - x[i]]
    if roots:
        r = min(roots, key=abs)
        best_x, best_z, refined = x[i] + r, 0.0, True
    elif a != 0:
        v = -b / (2 * a)
        zv = c - b * b / (4 * a)
        if xs[0] - x[i] <= v <= xs[2] - x[i] and abs(zv) < abs(best_z):
            best_x, best_z, refined = x[i] + v, zv, True
    if evaluate is not None and refined:
        zr = float(evaluate(best_x))
        if abs(zr) <= abs(z[i]):
            best_z = zr
        else:
            best_x, best_z, refined = x[i], z[i], False
    # report the grid index of the original (unmirrored) samples
    gi = int(np.argmin(np.abs(np.asarray(thetas, dtype=float) - best_x)))
    return IdleResult(float(best_x), float(best_z), gi, refined)


# ----------------------------------------------------------------- export


def sweep_table(sweep, qubits, line=None):
    """Rows of (Theta/pi, labeled GHz..., zeta kHz...) for CSV/JSON export."""
    labels = sorted({lab for s in sweep for lab in s.freqs})
    rows = []
    for s in sweep:
        rep = coupling_strengths(s, qubits)
        th = s.theta.get(line) if line is not None else next(iter(s.theta.values()), 0.0)
        row = {"theta_over_pi": float(th / np.pi)}
        for lab in labels:
            row["w_" + "".join(map(str, lab)) + "_GHz"] = radns_to_ghz(s.freqs[lab]) if lab in s.freqs else float("nan")
        for key, val in rep.khz().items():
            row[key + "_kHz"] = val
        rows.append(row)
    return rows


def export_sweep_csv(sweep, qubits, path, line=None):
    rows = sweep_table(sweep, qubits, line)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def export_sweep_json(sweep, qubits, path, line=None):
    with open(path, "w") as fh:
        json.dump(sweep_table(sweep, qubits, line), fh, indent=2)
