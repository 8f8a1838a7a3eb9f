"""Command-line entry point: ``cqed-sim <subcommand> --config <path>``.

Every run writes ``manifest.json`` and ``result.json`` (plus CSV tables) to
the output directory.  Exit status is 0 on success, 2 on invalid input and
3 on numerical failure; failures also leave an ``error.json``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import os
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import circuit as cm
from .errors import ConfigError, InvalidCutoff, MissingUnits, NumericalError, UnknownKey, ValidationError

COMMANDS = ("derive", "spectrum", "zz-scan", "idle", "gate-cz", "gate-x90", "optimize", "convergence", "full-paper")

# allowed keys per section; values are defaults (None = no default)
SCHEMA = {
    "circuit": "dtc_pair_L",
    "subsystem": None,
    "title": None,
    "seed": 0,
    "cutoffs": {"N": 10, "groups": None, "N0": 1000},
    "flux": {
        "line": None,
        "start_over_pi": 0.0,
        "stop_over_pi": 1.0,
        "step_over_pi": 0.05,
        "fixed_over_pi": {},
        "points_over_pi": None,
    },
    "idle_over_pi": None,
    "frames": {"start_over_pi": None, "stop_over_pi": 1.0, "step_over_pi": 0.05, "cache_dir": None},
    "gate": {
        "kind": "cz",
        "T_ns": None,
        "pair": [1, 2],
        "qubit": 1,
        "lambda": [1.0, 0.0, 0.0],
        "theta_P_over_pi": None,
        "a": None,
        "b": 0.0,
        "zero_amplitude": False,
    },
    "optimizer": {
        "peak_start_over_pi": None,
        "peak_stop_over_pi": 1.0,
        "peak_step_over_pi": 0.01,
        "peaks_over_pi": None,
        "maxiter": 40,
        "max_evals": 2000,
        "gradient_step": 1e-4,
        "lambda_seed": [1.0, 0.0],
        "lambda_bounds": [[0.0, 1.5], [-0.6, 0.6]],
    },
    "tolerance": {"integrator": 1e-9},
    "convergence": {"N": [5, 6, 7], "groups": None, "theta_over_pi": None},
}

# bare quantity names that need a unit suffix
UNIT_HINTS = {
    "T": "T_ns", "duration": "T_ns", "theta_P": "theta_P_over_pi", "idle": "idle_over_pi",
    "theta": "theta_over_pi", "start": "start_over_pi", "stop": "stop_over_pi", "step": "step_over_pi",
    "fixed": "fixed_over_pi", "points": "points_over_pi", "peaks": "peaks_over_pi",
    "peak_start": "peak_start_over_pi", "peak_stop": "peak_stop_over_pi", "peak_step": "peak_step_over_pi",
}

GROUP_DEFAULTS = {"qubits": 120, "coupler": 25}
FULL_PAPER_WARNING = "full-paper runs the three-qubit systems at full cutoffs: expect hours of CPU time and tens of GB of memory"


class ParseError(ConfigError):
    pass


# ----------------------------------------------------------------- config


def _merge(schema, data, where, applied):
    out = {}
    for key, val in data.items():
        if key not in schema:
            if key in UNIT_HINTS:
                raise MissingUnits(f"{where}{key}: give units explicitly, e.g. '{UNIT_HINTS[key]}'")
            raise UnknownKey(f"unknown config key '{where}{key}'")
        if isinstance(schema[key], dict) and schema[key] and not key.startswith("fixed"):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}{key}' must be an object")
            out[key] = _merge(schema[key], val, f"{where}{key}.", applied)
        else:
            out[key] = val
    for key, default in schema.items():
        if key not in out:
            if isinstance(default, dict) and default:
                out[key] = _merge(default, {}, f"{where}{key}.", applied)
            else:
                out[key] = copy.deepcopy(default)
                if default is not None:
                    applied.append(f"{where}{key}")
    return out


def load_config(path):
    """Parse and validate a JSON job config; returns (config, defaults applied)."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw, base=path.parent)


def validate_config(raw, base="."):
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")
    applied = []
    cfg = _merge(SCHEMA, raw, "", applied)
    N = cfg["cutoffs"]["N"]
    if not isinstance(N, int) or isinstance(N, bool) or N < 1:
        raise InvalidCutoff(f"cutoffs.N must be an integer >= 1, got {N!r}")
    if cfg["cutoffs"]["N0"] is not None and int(cfg["cutoffs"]["N0"]) < 1:
        raise InvalidCutoff("cutoffs.N0 must be positive")
    cfg["_base"] = str(base)
    return cfg, applied


def resolve_circuit(cfg):
    name = cfg["circuit"]
    presets = {
        "dtc_three_qubit": cm.dtc_three_qubit, "stc_three_qubit": cm.stc_three_qubit,
        "dtc_pair_L": lambda: cm.dtc_pair("L"), "dtc_pair_R": lambda: cm.dtc_pair("R"),
        "stc_pair_L": lambda: cm.stc_pair("L"), "stc_pair_R": lambda: cm.stc_pair("R"),
    }
    if name in presets:
        spec = presets[name]()
    else:
        p = Path(name)
        if not p.is_absolute():
            p = Path(cfg["_base"]) / p
        spec = cm.load_spec(p)
    if cfg["subsystem"]:
        spec = spec.subsystem(cfg["subsystem"])
    diags = cm.validate_spec(spec)
    if diags:
        from .errors import InvalidSpec
        raise InvalidSpec(diags)
    return spec


def group_cutoffs(spec, groups, cfg):
    given = cfg["cutoffs"]["groups"]
    if given is not None:
        if len(given) != len(groups):
            raise ConfigError(f"cutoffs.groups needs {len(groups)} entries")
        return [int(c) for c in given]
    qset = set(spec.qubit_indices)
    return [GROUP_DEFAULTS["qubits"] if set(g) <= qset else GROUP_DEFAULTS["coupler"] for g in groups]


# ------------------------------------------------------------------ jobs


def _pi(x):
    return None if x is None else float(x) * np.pi


class Job:
    def __init__(self, cfg, out, threads=1):
        from .reduction import ReducedModel, default_groups

        self.cfg, self.out, self.threads = cfg, Path(out), threads
        self.spec = resolve_circuit(cfg)
        self.derived = cm.derive(self.spec)
        self.groups = default_groups(self.spec)
        self.cutoffs = group_cutoffs(self.spec, self.groups, cfg)
        self._model_cls = ReducedModel
        self._model = None

    @property
    def model(self):
        if self._model is None:
            self._model = self._model_cls(self.spec, self.derived, self.cfg["cutoffs"]["N"], self.groups, self.cutoffs)
        return self._model

    @property
    def line(self):
        line = self.cfg["flux"]["line"]
        lines = self.spec.flux_lines
        if line is None:
            if not lines:
                raise ConfigError("circuit has no flux lines")
            return lines[0]
        if line not in lines:
            raise ConfigError(f"flux line {line!r} not in circuit lines {lines}")
        return line

    def fixed(self):
        fx = {k: _pi(v) for k, v in self.cfg["flux"]["fixed_over_pi"].items()}
        for line in self.spec.flux_lines:
            if line != self.line and line not in fx:
                raise ConfigError(f"flux.fixed_over_pi must give a value for line {line!r}")
        return fx

    def sweep_points(self):
        f = self.cfg["flux"]
        if f["points_over_pi"] is not None:
            return np.asarray(f["points_over_pi"], dtype=float) * np.pi
        n = int(np.floor((f["stop_over_pi"] - f["start_over_pi"]) / f["step_over_pi"] + 1e-9)) + 1
        return (f["start_over_pi"] + f["step_over_pi"] * np.arange(n)) * np.pi

    def write_json(self, name, obj):
        with open(self.out / name, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)

    def write_csv(self, name, rows):
        if not rows:
            return
        with open(self.out / name, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})

    # -- subcommands

    def derive(self):
        d = cm.derived_to_dict(self.spec, self.derived)
        rows = [{"quantity": k, "value": v} for k, v in _flatten(d)]
        self.write_csv("derived.csv", rows)
        (self.out / "derived.txt").write_text(cm.format_table(self.spec, self.derived) + "\n")
        return d

    def _sweep(self):
        from .spectrum import sweep_flux

        return sweep_flux(self.model, self.line, self.sweep_points(), self.fixed(), threads=self.threads)

    def spectrum(self):
        from .spectrum import coupling_strengths, sweep_table

        sw = self._sweep()
        qubits = self.spec.qubit_indices
        self.write_csv("spectrum.csv", sweep_table(sw, qubits, self.line))
        return {"points": [
            {"theta_over_pi": s.theta[self.line] / np.pi,
             "freqs_GHz": {"".join(map(str, k)): cm.radns_to_ghz(v) for k, v in s.freqs.items()},
             "confidence": {"".join(map(str, k)): v for k, v in s.confidence.items()},
             "couplings_kHz": coupling_strengths(s, qubits).khz(),
             "ambiguous": ["".join(map(str, a)) for a in s.ambiguous]}
            for s in sw]}

    def zz_scan(self):
        from .spectrum import coupling_strengths, find_idle, sweep_table
        from .errors import NoBracket

        sw = self._sweep()
        qubits = self.spec.qubit_indices
        rows = sweep_table(sw, qubits, self.line)
        self.write_csv("zz_scan.csv", rows)
        key = _nn_key(self.spec, self.line)
        zs = [coupling_strengths(s, qubits).zeta[key] for s in sw]
        thetas = [s.theta[self.line] for s in sw]
        res = {"coupling": key, "theta_over_pi": [t / np.pi for t in thetas],
               "zeta_kHz": [cm.radns_to_ghz(z) * 1e6 for z in zs]}
        try:
            idle = find_idle(thetas, zs)
            res["idle"] = {"theta_over_pi": idle.theta / np.pi, "zeta_kHz": cm.radns_to_ghz(idle.zeta) * 1e6,
                           "refined": idle.refined}
        except NoBracket as exc:
            res["idle"] = {"error": str(exc)}
        grid_min = int(np.argmin(np.abs(zs)))
        res["grid_minimum"] = {"theta_over_pi": thetas[grid_min] / np.pi,
                               "zeta_kHz": cm.radns_to_ghz(zs[grid_min]) * 1e6}
        return res

    def idle(self):
        from .spectrum import coupling_strengths, find_idle, labeled_spectrum

        sw = self._sweep()
        qubits = self.spec.qubit_indices
        key = _nn_key(self.spec, self.line)
        zs = [coupling_strengths(s, qubits).zeta[key] for s in sw]
        thetas = [s.theta[self.line] for s in sw]

        def evaluate(th):
            theta = dict(self.fixed())
            theta[self.line] = th
            return coupling_strengths(labeled_spectrum(self.model, theta), qubits).zeta[key]

        idle = find_idle(thetas, zs, evaluate=evaluate)
        theta = dict(self.fixed())
        theta[self.line] = idle.theta
        rep = coupling_strengths(labeled_spectrum(self.model, theta), qubits)
        return {"line": self.line, "theta_idle_over_pi": idle.theta / np.pi,
                "couplings_kHz": rep.khz(),
                "anharmonicity_MHz": {k: cm.radns_to_ghz(v) * 1e3 for k, v in rep.eta.items()}}

    # gates

    def idle_theta(self):
        if self.cfg["idle_over_pi"] is not None:
            return _pi(self.cfg["idle_over_pi"])
        return self.idle()["theta_idle_over_pi"] * np.pi

    def gate_setup(self, need_drives=False):
        from .evolution import IdleBasis
        from .reduction import cached_frames

        th_id = self.idle_theta()
        fr = self.cfg["frames"]
        step = _pi(fr["step_over_pi"])
        start = _pi(fr["start_over_pi"]) if fr["start_over_pi"] is not None else step * np.floor(th_id / step - 1e-9)
        N0 = min(int(self.cfg["cutoffs"]["N0"]), self.model.dim)
        cache = fr["cache_dir"]
        if cache is not None and not Path(cache).is_absolute():
            cache = Path(self.cfg["_base"]) / cache
        frames = cached_frames(self.model, self.line, (start, _pi(fr["stop_over_pi"]), step), N0, self.fixed(),
                               self.spec.drive_ports if need_drives else [], cache)
        theta = dict(self.fixed())
        theta[self.line] = th_id
        basis = IdleBasis(self.model, frames, theta)
        return frames, basis, th_id

    def _pair(self):
        p = tuple(int(i) - 1 for i in self.cfg["gate"]["pair"])
        return p

    def _T(self, default):
        T = self.cfg["gate"]["T_ns"]
        return float(default if T is None else T)

    def gate_cz(self):
        from .pulses import FluxPulse, cz_report

        frames, basis, th_id = self.gate_setup()
        g = self.cfg["gate"]
        T = self._T(30.0)
        lam = g["lambda"]
        th_p = th_id if g["zero_amplitude"] or g["theta_P_over_pi"] is None else _pi(g["theta_P_over_pi"])
        pulse = FluxPulse(lam[0], lam[1], th_p, T, th_id, line=self.line)
        rep = cz_report(frames, basis, pulse, self._pair(), self.cfg["tolerance"]["integrator"])
        print(rep.summary())
        (self.out / "pulse.json").write_text(json.dumps(pulse.to_dict(), indent=2))
        return rep.to_dict()

    def gate_x90(self):
        from .pulses import MicrowavePulse, pi2_report, pi2_seed_amplitude

        frames, basis, th_id = self.gate_setup(need_drives=True)
        g = self.cfg["gate"]
        T = self._T(10.0)
        q = int(g["qubit"]) - 1
        a = g["a"]
        if g["zero_amplitude"]:
            a = 0.0
        elif a is None:
            a = pi2_seed_amplitude(frames, basis, q, T)[0]
        pulse = MicrowavePulse(float(a), float(g["b"]), T, basis.qubit_frequency(q), basis.anharmonicity(q),
                               basis.qubits[q])
        rep = pi2_report(frames, basis, pulse, q, self.cfg["tolerance"]["integrator"])
        print(rep.summary())
        (self.out / "pulse.json").write_text(json.dumps(pulse.to_dict(), indent=2))
        return rep.to_dict()

    def optimize(self):
        from .pulses import optimize_cz, optimize_pi2

        g, o = self.cfg["gate"], self.cfg["optimizer"]
        opt_cfg = {"maxiter": o["maxiter"], "max_evals": o["max_evals"], "step": o["gradient_step"],
                   "tol": self.cfg["tolerance"]["integrator"], "lambda_seed": tuple(o["lambda_seed"]),
                   "lambda_bounds": [tuple(b) for b in o["lambda_bounds"]]}
        if g["kind"] == "cz":
            frames, basis, th_id = self.gate_setup()
            if o["peaks_over_pi"] is not None:
                peaks = np.asarray(o["peaks_over_pi"], dtype=float) * np.pi
            else:
                lo = o["peak_start_over_pi"] if o["peak_start_over_pi"] is not None else th_id / np.pi
                n = int(np.floor((o["peak_stop_over_pi"] - lo) / o["peak_step_over_pi"] + 1e-9)) + 1
                peaks = (lo + o["peak_step_over_pi"] * np.arange(n)) * np.pi
            res = optimize_cz(frames, basis, self._T(30.0), peaks, self._pair(), opt_cfg, seed=self.cfg["seed"])
        elif g["kind"] == "pi2":
            frames, basis, th_id = self.gate_setup(need_drives=True)
            res = optimize_pi2(frames, basis, int(g["qubit"]) - 1, self._T(10.0), opt_cfg, seed=self.cfg["seed"])
        else:
            raise ConfigError(f"gate.kind must be 'cz' or 'pi2', got {g['kind']!r}")
        res.save_trace_csv(self.out / "trace.csv")
        print(f"best F = {res.best_fidelity:.4f}")
        return res.to_dict()

    def convergence(self):
        from .reduction import ReducedModel
        from .spectrum import coupling_strengths, labeled_spectrum

        c = self.cfg["convergence"]
        th = c["theta_over_pi"]
        theta = dict(self.fixed())
        theta[self.line] = _pi(th) if th is not None else self.idle_theta()
        ladder = c["groups"] or [self.cutoffs]
        key = _nn_key(self.spec, self.line)
        rows = []
        for N in c["N"]:
            for cuts in ladder:
                model = ReducedModel(self.spec, self.derived, int(N), self.groups, cuts)
                rep = coupling_strengths(labeled_spectrum(model, theta), self.spec.qubit_indices)
                rows.append({"N": int(N), "cutoffs": "x".join(map(str, model.cutoffs)),
                             "theta_over_pi": theta[self.line] / np.pi,
                             **{k + "_kHz": v for k, v in rep.khz().items()}, "key": key})
        self.write_csv("convergence.csv", rows)
        return {"rows": rows}

    def full_paper(self):
        warnings.warn(FULL_PAPER_WARNING)
        print(FULL_PAPER_WARNING, file=sys.stderr)
        from .spectrum import coupling_strengths, labeled_spectrum

        idle = self.cfg["idle_over_pi"]
        theta = {line: (0.65 if idle is None else idle) * np.pi for line in self.spec.flux_lines}
        theta.update({k: _pi(v) for k, v in self.cfg["flux"]["fixed_over_pi"].items()})
        rep = coupling_strengths(labeled_spectrum(self.model, theta), self.spec.qubit_indices)
        out = {"couplings_kHz": rep.khz(), "theta_over_pi": {k: v / np.pi for k, v in theta.items()}}
        if self.cfg["gate"]["T_ns"] is not None:
            out["optimize"] = self.optimize()
        return out


def _nn_key(spec, line):
    """ZZ key of the qubit pair bridged by the coupler on ``line``."""
    qs = list(spec.qubit_indices)
    if len(qs) == 2:
        return "zeta12"
    lines = spec.flux_lines
    return "zeta12" if lines.index(line) == 0 else "zeta23"


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def _config_hash(cfg):
    clean = {k: v for k, v in cfg.items() if not k.startswith("_")}
    return hashlib.sha256(json.dumps(clean, sort_keys=True, default=_jsonable).encode()).hexdigest()


def run_command(argv=None):
    parser = argparse.ArgumentParser(prog="cqed-sim", description="Transmon/coupler circuit simulator")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    out = Path(args.out or f"out_{args.command}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"command": args.command, "config_path": str(args.config), "code_version": __version__,
                "threads": args.threads, "python": platform.python_version(), "numpy": np.__version__,
                "scipy": scipy.__version__}
    status = 0
    try:
        cfg, applied = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        np.random.seed(cfg["seed"])
        manifest.update({"config_hash": _config_hash(cfg), "seed": cfg["seed"], "defaults_applied": applied,
                         "config": {k: v for k, v in cfg.items() if not k.startswith("_")}})
        job = Job(cfg, out, args.threads)
        manifest["cutoffs"] = {"N": cfg["cutoffs"]["N"], "groups": job.cutoffs, "N0": cfg["cutoffs"]["N0"],
                               "group_members": [[job.spec.names[k] for k in g] for g in job.groups]}
        method = getattr(job, args.command.replace("-", "_"))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result = method()
        job.write_json("result.json", result)
        manifest["warnings"] = sorted({str(w.message) for w in caught})
    except ValidationError as exc:
        status = 2
        _write_error(out, exc)
    except NumericalError as exc:
        status = 3
        _write_error(out, exc)
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["exit_status"] = status
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
    return status


def _write_error(out, exc):
    err = {"error": type(exc).__name__, "message": str(exc)}
    diags = getattr(exc, "diagnostics", None)
    if diags:
        err["diagnostics"] = [str(d) for d in diags]
    with open(out / "error.json", "w") as fh:
        json.dump(err, fh, indent=2)
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def main(argv=None):
    sys.exit(run_command(argv))


if __name__ == "__main__":
    main()
