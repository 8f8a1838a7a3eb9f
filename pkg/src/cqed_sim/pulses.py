"""Flux and microwave pulse shapes, and their hyperparameter optimization.

Flux pulses use the cosine series

    theta(t) = f(Theta_Id) + (f(Theta_P) - f(Theta_Id))/2 * sum_n lambda_n (1 - cos(2 n pi t / T))

with lambda_3 = 1 - lambda_1 eliminated by construction, and Theta(t) =
f^{-1}(theta(t)).  Microwave pulses use a raised-cosine in-phase envelope
with a derivative-shaped quadrature (DRAG-like).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize

from .errors import BudgetExhausted, CqedError, NonMonotoneMap, ZeroAnharmonicity
from .evolution import ControlSchedule, propagate_computational_basis
from .metrics import gate_report

# ---------------------------------------------------------- coordinate maps


class IdentityMap:
    """theta = Theta."""

    def __call__(self, x):
        return x

    def inverse(self, y):
        return y

    def inverse_derivative(self, y):
        return np.ones_like(np.asarray(y, dtype=float))

    def to_dict(self):
        return {"kind": "identity"}


class TabulatedMap:
    """Monotone map from samples (x_k, y_k), interpolated with PCHIP both ways."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        order = np.argsort(x)
        x, y = x[order], y[order]
        dy = np.diff(y)
        if len(x) < 2 or np.any(np.diff(x) <= 0) or not (np.all(dy > 0) or np.all(dy < 0)):
            raise NonMonotoneMap("map samples must be strictly monotone")
        self.x, self.y = x, y
        self._f = PchipInterpolator(x, y)
        inv_order = np.argsort(y)
        self._g = PchipInterpolator(y[inv_order], x[inv_order])
        self._dg = self._g.derivative()

    def __call__(self, x):
        return self._f(x)

    def inverse(self, y):
        return self._g(y)

    def inverse_derivative(self, y):
        return self._dg(y)

    def to_dict(self):
        return {"kind": "tabulated", "x": self.x.tolist(), "y": self.y.tolist()}


def martinis_map(thetas, detuning, coupling):
    """Adiabatic coordinate theta = arctan(2g / Delta(Theta)).

    ``detuning`` is the swept gap between the |1,1>-branch and its
    avoided-crossing partner, ``coupling`` the interaction g (both rad/ns).
    """
    detuning = np.asarray(detuning, dtype=float)
    return TabulatedMap(thetas, np.arctan2(2 * coupling, detuning))


# ------------------------------------------------------------- flux pulse


@dataclass
class FluxPulse:
    lam1: float
    lam2: float
    theta_P: float
    T: float
    theta_id: float
    f_map: object = field(default_factory=IdentityMap)
    line: str = "L"

    @property
    def lambdas(self):
        return (self.lam1, self.lam2, 1.0 - self.lam1)

    def _series(self, t):
        x = 2 * np.pi * np.asarray(t, dtype=float) / self.T
        s = sum(l * (1 - np.cos(n * x)) for n, l in enumerate(self.lambdas, start=1))
        ds = sum(l * n * np.sin(n * x) for n, l in enumerate(self.lambdas, start=1)) * 2 * np.pi / self.T
        return s, ds

    def control(self, t):
        """theta(t) and its time derivative in the control coordinate."""
        f0 = self.f_map(self.theta_id)
        amp = 0.5 * (self.f_map(self.theta_P) - f0)
        s, ds = self._series(np.clip(t, 0.0, self.T))
        return f0 + amp * s, amp * ds

    def theta(self, t):
        return self.f_map.inverse(self.control(t)[0])

    def theta_dot(self, t):
        y, dy = self.control(t)
        return dy * self.f_map.inverse_derivative(y)

    def schedule(self):
        return ControlSchedule(self.T, flux={self.line: (self.theta, self.theta_dot)})

    def to_dict(self, rate_per_ns=10):
        ts = np.linspace(0, self.T, int(round(self.T * rate_per_ns)) + 1)
        return {
            "kind": "flux",
            "line": self.line,
            "lambda": list(self.lambdas),
            "theta_P_over_pi": self.theta_P / np.pi,
            "theta_idle_over_pi": self.theta_id / np.pi,
            "T_ns": self.T,
            "f_map": self.f_map.to_dict(),
            "samples": {"t_ns": ts.tolist(), "theta_over_pi": (self.theta(ts) / np.pi).tolist()},
        }


def flux_pulse(lam, theta_P, T, theta_id, f_map=None, line="L") -> ControlSchedule:
    """Schedule for the cosine-series flux pulse; ``lam`` = (l1, l2[, l3])."""
    lam = tuple(lam)
    if len(lam) == 3 and not np.isclose(lam[0] + lam[2], 1.0, atol=1e-12):
        raise ValueError("lambda_1 + lambda_3 must equal 1")
    f_map = f_map or IdentityMap()
    if not isinstance(f_map, IdentityMap):
        lo, hi = sorted((theta_id, theta_P))
        xs = np.linspace(lo, hi, 33)
        dy = np.diff(np.asarray(f_map(xs), dtype=float))
        if not (np.all(dy > 0) or np.all(dy < 0)):
            raise NonMonotoneMap("f_map is not monotone between idle and peak")
    return FluxPulse(lam[0], lam[1], theta_P, T, theta_id, f_map, line).schedule()


# -------------------------------------------------------- microwave pulse


@dataclass
class MicrowavePulse:
    a: float
    b: float
    T: float
    omega: float
    eta: float
    port: int = 0

    def __post_init__(self):
        if self.eta == 0:
            raise ZeroAnharmonicity("anharmonicity must be nonzero")
        if self.T <= 0:
            raise ValueError("duration must be positive")

    def envelopes(self, t):
        x = 2 * np.pi * np.asarray(t, dtype=float) / self.T
        A = self.a * 0.5 * (1 - np.cos(x))
        B = self.b * (np.pi / self.T) / self.eta * np.sin(x)
        return A, B

    def alpha(self, t):
        A, B = self.envelopes(t)
        wt = self.omega * np.asarray(t, dtype=float)
        return A * np.sin(wt) + B * np.cos(wt)

    def schedule(self):
        return ControlSchedule(self.T, drives={self.port: self.alpha}, samples_per_ns=1)

    def to_dict(self, rate_per_ns=100):
        ts = np.linspace(0, self.T, int(round(self.T * rate_per_ns)) + 1)
        return {
            "kind": "drag",
            "port": self.port,
            "a": self.a,
            "b": self.b,
            "T_ns": self.T,
            "omega_drive_GHz": self.omega / (2 * np.pi),
            "eta_MHz": self.eta / (2 * np.pi) * 1e3,
            "samples": {"t_ns": ts.tolist(), "alpha": self.alpha(ts).tolist()},
        }


def drag_pulse(a, b, T, omega_drive, eta, port=0) -> ControlSchedule:
    return MicrowavePulse(a, b, T, omega_drive, eta, port).schedule()


# ------------------------------------------------------------ optimization


@dataclass
class OptimizationResult:
    best_params: dict
    best_fidelity: float
    evaluations: int
    trace: list = field(default_factory=list)
    report: object = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "best_params": self.best_params,
            "best_fidelity": self.best_fidelity,
            "best_fidelity_4dp": round(self.best_fidelity, 4),
            "evaluations": self.evaluations,
            "config": self.config,
            "trace": self.trace,
            "report": None if self.report is None else self.report.to_dict(),
        }

    def save_trace_csv(self, path):
        keys = sorted({k for row in self.trace for k in row})
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in self.trace:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


DEFAULT_OPT = {"step": 1e-4, "maxiter": 40, "max_evals": 2000, "tol": 1e-9, "ftol": 1e-12}


class _Budget:
    def __init__(self, cap):
        self.cap, self.count = cap, 0

    def tick(self):
        self.count += 1
        if self.count > self.cap:
            raise BudgetExhausted(f"evaluation cap {self.cap} reached")


def _lbfgsb(cost, x0, bounds, cfg):
    """Bounded quasi-Newton with central-difference gradients."""
    h = cfg["step"]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    def grad(x):
        g = np.zeros_like(x)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = h
            xp, xm = np.minimum(x + e, hi), np.maximum(x - e, lo)
            g[i] = (cost(xp) - cost(xm)) / (xp[i] - xm[i])
        return g

    return minimize(cost, np.asarray(x0, dtype=float), jac=grad, method="L-BFGS-B", bounds=bounds,
                    options={"maxiter": cfg["maxiter"], "ftol": cfg["ftol"], "gtol": 1e-10})


def cz_report(frames, basis, pulse: FluxPulse, pair=(0, 1), tol=1e-9):
    raw = propagate_computational_basis(frames, pulse.schedule(), basis, tol=tol)
    return gate_report(raw.u_raw, "cz", tuple(pair), raw.leakage)


def pi2_report(frames, basis, pulse: MicrowavePulse, qubit=0, tol=1e-9):
    raw = propagate_computational_basis(frames, pulse.schedule(), basis, tol=tol)
    return gate_report(raw.u_raw, "pi2", qubit, raw.leakage)


def optimize_cz(frames, basis, T, peak_grid, pair=(0, 1), opt_cfg=None, f_map=None, seed=0):
    """Optimize (lambda_1, lambda_2) for every peak flux on ``peak_grid``.

    ``basis`` is the IdleBasis of the model; the moving flux line is the
    frames' line.  Candidates whose pulse leaves the frame grid score 0.
    """
    cfg = dict(DEFAULT_OPT)
    cfg.update(opt_cfg or {})
    theta_id = basis.theta[frames.line]
    budget = _Budget(cfg["max_evals"])
    trace, best = [], (-1.0, None, None)
    bounds = cfg.get("lambda_bounds", [(-0.5, 2.0), (-1.0, 1.0)])

    for theta_P in np.atleast_1d(peak_grid):
        cache = {}

        def cost(x, theta_P=theta_P):
            key = tuple(np.round(x, 14))
            if key not in cache:
                budget.tick()
                pulse = FluxPulse(x[0], x[1], float(theta_P), T, theta_id, f_map or IdentityMap(), frames.line)
                try:
                    rep = cz_report(frames, basis, pulse, pair, cfg["tol"])
                    F = rep.fidelity
                except CqedError:
                    rep, F = None, 0.0
                cache[key] = (1.0 - F, rep)
            return cache[key][0]

        x0 = cfg.get("lambda_seed", (1.0, 0.0))
        _lbfgsb(cost, x0, bounds, cfg)
        key = min(cache, key=lambda k: cache[k][0])
        x = np.array(key)
        infid, rep = cache[key]
        F = 1.0 - infid
        trace.append({"theta_P_over_pi": float(theta_P / np.pi), "lambda1": float(x[0]),
                      "lambda2": float(x[1]), "lambda3": float(1 - x[0]), "fidelity": F,
                      "evaluations": len(cache)})
        if F > best[0]:
            best = (F, {"theta_P": float(theta_P), "lambda": [float(x[0]), float(x[1]), float(1 - x[0])]}, rep)
    cfg["peak_grid_over_pi"] = [float(p / np.pi) for p in np.atleast_1d(peak_grid)]
    cfg["seed"] = seed
    return OptimizationResult(best[1], best[0], budget.count, trace, best[2], cfg)


def pi2_seed_amplitude(frames, basis, qubit, T):
    """a giving a pi/2 rotation in the two-level rotating-wave picture."""
    node = frames.nodes[basis.node]
    port = basis.qubits[qubit]
    D = basis.W.conj().T @ node.ops[("drive", port)] @ basis.W
    lab0 = basis.labels[0]
    lab1 = basis.labels[1 << (len(basis.qubits) - 1 - qubit)]
    i0, i1 = basis.spectrum.index[lab0], basis.spectrum.index[lab1]
    d01 = abs(D[i0, i1])
    return np.pi / (T * d01), d01


def optimize_pi2(frames, basis, qubit, T, opt_cfg=None, seed=0, fix_b=None):
    """Optimize DRAG amplitudes (a, b) for a pi/2 rotation of one qubit."""
    cfg = dict(DEFAULT_OPT)
    cfg.update(opt_cfg or {})
    omega = basis.qubit_frequency(qubit)
    eta = basis.anharmonicity(qubit)
    port = basis.qubits[qubit]
    a0, d01 = pi2_seed_amplitude(frames, basis, qubit, T)
    budget = _Budget(cfg["max_evals"])
    cache, trace = {}, []

    def make(x):
        b = x[1] if fix_b is None else fix_b
        return MicrowavePulse(float(x[0]), float(b), T, omega, eta, port)

    def cost(x):
        key = tuple(np.round(x, 14))
        if key not in cache:
            budget.tick()
            try:
                rep = pi2_report(frames, basis, make(x), qubit, cfg["tol"])
                F = rep.fidelity
            except CqedError:
                rep, F = None, 0.0
            cache[key] = (1.0 - F, rep)
            trace.append({"a": float(x[0]), "b": float(make(x).b), "fidelity": F})
        return cache[key][0]

    b0 = 0.0 if fix_b is None else fix_b
    bounds = [(0.5 * a0, 1.5 * a0), (-2.0, 2.0)]
    if fix_b is not None:
        _lbfgsb(lambda x: cost(np.array([x[0], fix_b])), [a0], bounds[:1], cfg)
    else:
        _lbfgsb(cost, [a0, b0], bounds, cfg)
    key = min(cache, key=lambda k: cache[k][0])
    x = np.array(key)
    infid, rep = cache[key]
    cfg.update({"seed": seed, "a_seed": a0, "drive_element": d01, "omega_drive": omega, "eta": eta})
    best = {"a": float(x[0]), "b": float(make(x).b)}
    return OptimizationResult(best, 1.0 - infid, budget.count, trace, rep, cfg)
