"""
Command-line front end.

    twotime EXPERIMENT [--config PATH] [--param KEY=JSON ...] [--seed N]
                       [--out PATH] [--format json|csv]

Parameters come from a JSON object (``--config``) overlaid with ``--param``
flags; unknown keys are rejected. A ``seed`` key in the config file sets the
master seed unless ``--seed`` is given. Complex numbers are accepted as JSON
numbers, ``[re, im]`` pairs or strings such as ``"0.6+0.8j"``. Unnormalized
states are normalized with a warning that is echoed in the output header.

Exit codes: 0 success, 2 configuration error, 3 simulation-domain error
(e.g. a final branch inconsistent with the history). The worker count for
ensembles and sweeps is read from ``TWOTIME_WORKERS``; output does not depend
on it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .boundary import ClassicalBasisSpec, born_recovery
from .errors import TwoTimeError
from .experiments import (
    DEVICE,
    DEVICE_STATES,
    PARTICLE,
    IdealMeasurementConfig,
    backward_reduction,
    forward_circuit,
    initial_history,
    reinitialization_demo,
    run_two_time_measurement,
    signalling_demo,
    stability_experiment,
)
from .hilbert import StateVector, SystemLayout
from .twostate import ObservableSpec, abl_probabilities, born_probabilities, expectation_value, pauli_z, weak_value
from .weak import WeakConfig, weakness_sweep

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN = 0, 2, 3
NORM_TOL = 1e-12
S = 1 / math.sqrt(2)


class ConfigError(Exception):
    """Invalid configuration; maps to exit code 2."""


# parameter parsing


def _complex(value: Any, path: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{path}: malformed complex literal {value!r}")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError:
            pass
    raise ConfigError(f"{path}: malformed complex literal {value!r}")


def _real(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{path}: expected a finite real number, got {value!r}")
    return float(value)


def _int(value: Any, path: str) -> int:
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _list(value: Any, path: str) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list, got {value!r}")
    return value


@dataclass(frozen=True)
class Param:
    kind: str
    default: Any
    choices: tuple = ()

    def parse(self, value: Any, path: str, warnings: list[str]) -> Any:
        if self.kind == "complex":
            return _complex(value, path)
        if self.kind == "real":
            return _real(value, path)
        if self.kind == "int":
            return _int(value, path)
        if self.kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected true or false, got {value!r}")
            return value
        if self.kind == "choice":
            if value not in self.choices:
                raise ConfigError(f"{path}: expected one of {list(self.choices)}, got {value!r}")
            return value
        if self.kind == "reals":
            return [_real(v, f"{path}[{i}]") for i, v in enumerate(_list(value, path))]
        if self.kind == "ints":
            return [_int(v, f"{path}[{i}]") for i, v in enumerate(_list(value, path))]
        if self.kind == "state":
            return _normalize([_complex(v, f"{path}[{i}]") for i, v in enumerate(_list(value, path))], path, warnings)
        if self.kind == "basis":
            if value is None:
                return None
            rows = _list(value, path)
            return [[_complex(v, f"{path}[{i}][{j}]") for j, v in enumerate(_list(r, f"{path}[{i}]"))] for i, r in enumerate(rows)]
        raise AssertionError(self.kind)


def _normalize(amps: list[complex], path: str, warnings: list[str]) -> list[complex]:
    norm2 = sum(abs(a) ** 2 for a in amps)
    if norm2 == 0:
        raise ConfigError(f"{path}: the zero vector is not a state")
    if abs(norm2 - 1) > NORM_TOL:
        warnings.append(f"{path}: squared norm {norm2:.17g} != 1; state normalized")
        amps = [a / math.sqrt(norm2) for a in amps]
    return amps


def _normalize_pair(params: dict, keys: tuple[str, str], warnings: list[str]) -> None:
    x, y = (params[k] for k in keys)
    a, b = _normalize([x, y], f"parameters.({keys[0]}, {keys[1]})", warnings)
    params[keys[0]], params[keys[1]] = a, b


# experiments


def _observable(dim: int, eigenvalues, basis) -> ObservableSpec:
    layout = SystemLayout.of(("system", dim))
    if eigenvalues is None:
        eigenvalues = list(range(dim))
    if len(eigenvalues) != dim:
        raise ConfigError(f"parameters.eigenvalues: need {dim} values, got {len(eigenvalues)}")
    vectors = np.eye(dim) if basis is None else np.array(basis, dtype=complex)
    if vectors.shape != (dim, dim):
        raise ConfigError(f"parameters.basis: need {dim} vectors of length {dim}")
    return ObservableSpec.from_basis(layout, eigenvalues, vectors)


def _pair_states(p: dict, first: str, second: str) -> tuple[StateVector, StateVector]:
    if len(p[first]) != len(p[second]):
        raise ConfigError(f"parameters.{second}: length {len(p[second])} differs from {first} ({len(p[first])})")
    layout = SystemLayout.of(("system", len(p[first])))
    return StateVector(layout, p[first]), StateVector(layout, p[second])


def run_abl(p: dict, seed: int) -> dict:
    psi_i, psi_f = _pair_states(p, "psi_i", "psi_f")
    obs = _observable(psi_i.layout.dim, p["eigenvalues"], p["basis"])
    abl = abl_probabilities(psi_i, psi_f, obs)
    born = born_probabilities(psi_i, obs)
    rows = [{"eigenvalue": a, "abl": float(x), "born": float(y)} for a, x, y in zip(obs.eigenvalues, abl, born)]
    return {"rows": rows}


def run_weak_value(p: dict, seed: int) -> dict:
    psi_i, psi_f = _pair_states(p, "psi_i", "psi_f")
    obs = _observable(psi_i.layout.dim, p["eigenvalues"], p["basis"])
    aw = weak_value(psi_i, psi_f, obs)
    mean = expectation_value(psi_i, obs)
    return {"rows": [{"weak_value_real": aw.real, "weak_value_imag": aw.imag, "expectation": mean,
                      "eigenvalue_min": min(obs.eigenvalues), "eigenvalue_max": max(obs.eigenvalues)}]}


def run_weak_measure(p: dict, seed: int) -> dict:
    if len(p["phi1"]) != len(p["phi2"]):
        raise ConfigError("parameters.phi2: length differs from phi1")
    cfg = WeakConfig(
        phi1=tuple(p["phi1"]),
        phi2=tuple(p["phi2"]),
        eigenvalues=tuple(p["eigenvalues"]),
        basis=None if p["basis"] is None else tuple(tuple(r) for r in p["basis"]),
        m_points=p["m_points"],
        spacing=p["spacing"],
    )
    rows = weakness_sweep(cfg, p["sigmas"])
    return {"rows": [dict(r.__dict__) for r in rows]}


def _measure_config(p: dict, seed: int) -> IdealMeasurementConfig:
    return IdealMeasurementConfig(
        a=p["a"], b=p["b"], n_env=p["n_env"], theta=p["theta"], final_branch=p["final_branch"], seed=seed, c=p["c"], d=p["d"]
    )


def _matrix(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def run_measure(p: dict, seed: int) -> dict:
    cfg = _measure_config(p, seed)
    fwd = run_two_time_measurement(cfg)
    bwd = backward_reduction(cfg)
    rows = []
    for direction, rep in (("forward", fwd), ("backward", bwd)):
        rows.append({
            "direction": direction,
            "branch": rep.branch,
            "selected_label": rep.selected_label,
            "kappa": rep.kappa,
            "target_distance": rep.target_distance,
            "offdiag_norm": rep.offdiag_norm,
            "c0_bound": rep.c0_bound,
            "c0_measured": rep.c0_measured,
            "device_fidelity": getattr(rep, "device_fidelity", None),
        })
    return {"rows": rows, "reduced_forward": _matrix(fwd.reduced.matrix), "reduced_backward": _matrix(bwd.reduced.matrix)}


def run_born_recovery(p: dict, seed: int) -> dict:
    if p["n_runs"] < 1:
        raise ConfigError("parameters.n_runs: must be at least 1")
    cfg = IdealMeasurementConfig(a=p["a"], b=p["b"], n_env=p["n_env"], theta=p["theta"])
    rep = born_recovery(
        initial_history(cfg), forward_circuit(cfg), ClassicalBasisSpec.computational({DEVICE: DEVICE_STATES}),
        pauli_z(PARTICLE), p["n_runs"], seed,
    )
    rows = [
        {"outcome": name, "eigenvalue": a, "count": c, "frequency": f, "born": b, "z_score": z}
        for name, a, c, f, b, z in zip(("up", "down"), rep.eigenvalues, rep.counts, rep.frequencies, rep.born, rep.z_scores)
    ]
    return {"rows": rows, "indefinite_runs": rep.indefinite_runs, "pruned_mass": rep.pruned_mass,
            "branches": [{"names": list(n), "weight": w, "count": c}
                         for n, w, c in zip(rep.branch_names, rep.branch_weights, rep.branch_counts)]}


def run_stability(p: dict, seed: int) -> dict:
    n_values = p["n_values"] or [p["n_env"]]
    return {"rows": [dict(stability_experiment(n, p["theta"], p["n_disturbed"], seed).__dict__) for n in n_values]}


def run_signal_demo(p: dict, seed: int) -> dict:
    probs = signalling_demo(p["alice_acts"], p["boundary"])
    return {"rows": [{"outcome": "up_B", "probability": float(probs[0])}, {"outcome": "down_B", "probability": float(probs[1])}]}


def run_reinit_demo(p: dict, seed: int) -> dict:
    rep = reinitialization_demo(p["first"], p["second"])
    keys = sorted(set(rep.weights) | set(rep.independent_weights))
    rows = [
        {"first": k[0], "second": k[1], "weight": rep.weights.get(k, 0.0), "independent_weight": rep.independent_weights.get(k, 0.0)}
        for k in keys
    ]
    return {"rows": rows, "max_weight_difference": rep.max_weight_difference, "unitarity_error": rep.unitarity_error,
            "records_consistent": rep.records_consistent, "device_ready_after_init": rep.device_ready_after_init}


@dataclass(frozen=True)
class Experiment:
    run: Callable[[dict, int], dict]
    params: dict[str, Param]
    pairs: tuple[tuple[str, str], ...] = field(default=())


_MEASURE = {
    "a": Param("complex", 0.6), "b": Param("complex", 0.8),
    "c": Param("complex", S), "d": Param("complex", S),
    "n_env": Param("int", 8), "theta": Param("real", math.pi / 8),
    "final_branch": Param("choice", "UP", ("UP", "DOWN", "sampled")),
}
_OBS = {"eigenvalues": Param("reals", None), "basis": Param("basis", None)}

EXPERIMENTS: dict[str, Experiment] = {
    "abl": Experiment(run_abl, {"psi_i": Param("state", [1, 0]), "psi_f": Param("state", [S, S]), **_OBS}),
    "weak-value": Experiment(
        run_weak_value,
        {"psi_i": Param("state", [S, S]), "psi_f": Param("state", [2 / math.sqrt(5), -1 / math.sqrt(5)]),
         "eigenvalues": Param("reals", [1.0, -1.0]), "basis": Param("basis", None)},
    ),
    "weak-measure": Experiment(
        run_weak_measure,
        {"phi1": Param("state", [S, S]), "phi2": Param("state", [2 / math.sqrt(5), -1 / math.sqrt(5)]),
         "eigenvalues": Param("reals", [8.0, -8.0]), "basis": Param("basis", None),
         "m_points": Param("int", 4096), "spacing": Param("real", 1.0),
         "sigmas": Param("reals", [1.6, 16.0, 32.0, 64.0, 128.0, 256.0])},
    ),
    "measure": Experiment(run_measure, _MEASURE, (("a", "b"), ("c", "d"))),
    "born-recovery": Experiment(
        run_born_recovery,
        {"a": Param("complex", 0.6), "b": Param("complex", 0.8), "n_env": Param("int", 4),
         "theta": Param("real", math.pi / 8), "n_runs": Param("int", 100_000)},
        (("a", "b"),),
    ),
    "stability": Experiment(
        run_stability,
        {"n_env": Param("int", 12), "theta": Param("real", math.pi / 8), "n_disturbed": Param("int", 1),
         "n_values": Param("ints", None)},
    ),
    "signal-demo": Experiment(
        run_signal_demo, {"alice_acts": Param("bool", False), "boundary": Param("choice", "special", ("special", "trivial"))}
    ),
    "reinit-demo": Experiment(run_reinit_demo, {"first": Param("state", [0.6, 0.8]), "second": Param("state", [S, S])}),
}


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    parameters: dict
    master_seed: int
    output_path: str | None
    format: str
    warnings: tuple[str, ...] = ()


def parse_config(
    experiment: str,
    raw: dict | None = None,
    seed: int | None = None,
    output_path: str | None = None,
    fmt: str = "json",
) -> RunConfig:
    """Validate raw parameters against the experiment's schema and fill defaults."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}")
    exp = EXPERIMENTS[experiment]
    raw = dict(raw or {})
    if "seed" in raw:
        file_seed = _int(raw.pop("seed"), "seed")
        seed = file_seed if seed is None else seed
    seed = 0 if seed is None else seed
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {seed}")
    unknown = sorted(set(raw) - set(exp.params))
    if unknown:
        raise ConfigError(f"parameters.{unknown[0]}: unknown key for {experiment} (allowed: {sorted(exp.params)})")
    warnings: list[str] = []
    params = {}
    for name, spec in exp.params.items():
        if name in raw:
            params[name] = spec.parse(raw[name], f"parameters.{name}", warnings)
        else:
            params[name] = spec.default
    for pair in exp.pairs:
        _normalize_pair(params, pair, warnings)
    if fmt not in ("json", "csv"):
        raise ConfigError(f"format: expected json or csv, got {fmt!r}")
    return RunConfig(experiment, params, seed, output_path, fmt, tuple(warnings))


# emission


def _plain(value: Any) -> Any:
    """Reduce to JSON types; complex becomes a real or an [re, im] pair."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        value = complex(value)
        return float(value.real) if value.imag == 0 else [float(value.real), float(value.imag)]
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _scalar(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            return "null"
        text = format(value, ".17g")
        return text if any(c in text for c in ".en") else text + ".0"
    return json.dumps(value)


def emit_json(value: Any, indent: int = 0) -> str:
    """JSON text with every float at 17 significant digits; non-finite floats become null."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {emit_json(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, list):
        if not value:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in value):
            return "[" + ", ".join(_scalar(v) for v in value) + "]"
        return "[\n" + ",\n".join(inner + emit_json(v, indent + 1) for v in value) + "\n" + pad + "]"
    return _scalar(value)


def _header(cfg: RunConfig) -> dict:
    return {
        "experiment": cfg.experiment,
        "seed": cfg.master_seed,
        "parameters": _plain(cfg.parameters),
        "version": __version__,
        "warnings": list(cfg.warnings),
    }


def emit_csv(header: dict, rows: list[dict]) -> str:
    buf = io.StringIO()
    for key in ("experiment", "seed", "version"):
        buf.write(f"# {key}: {header[key]}\n")
    compact = re.sub(r"\n\s*", " ", emit_json(header["parameters"]))
    buf.write(f"# parameters: {compact}\n")
    for w in header["warnings"]:
        buf.write(f"# warning: {w}\n")
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        columns = list(rows[0])
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _csv_cell(value: Any) -> str:
    if isinstance(value, str):
        return value
    return emit_json(value) if isinstance(value, list) else _scalar(value)


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute one configured experiment and write its result document."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    header = _header(cfg)
    for w in cfg.warnings:
        print(f"warning: {w}", file=stderr)
    try:
        payload = _plain(EXPERIMENTS[cfg.experiment].run(dict(cfg.parameters), cfg.master_seed))
        code = EXIT_OK
        doc = {"header": header, "payload": payload}
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except TwoTimeError as exc:
        print(f"error: {exc}", file=stderr)
        code = EXIT_DOMAIN
        doc = {"header": header, "error": {"type": type(exc).__name__, "message": str(exc)}}
        payload = None
    except ValueError as exc:
        # parameter values rejected by the experiment constructors
        print(f"config error: parameters: {exc}", file=stderr)
        return EXIT_CONFIG

    if cfg.format == "csv":
        if payload is None:
            text = emit_csv(header, []) + f"# error: {doc['error']['type']}: {doc['error']['message']}\n"
        else:
            text = emit_csv(header, payload["rows"])
    else:
        text = emit_json(doc) + "\n"

    if cfg.output_path:
        Path(cfg.output_path).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    return code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twotime", description="Two-time boundary-condition quantum experiments.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", metavar="PATH", help="JSON object of experiment parameters")
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON", help="override one parameter")
    p.add_argument("--seed", type=int, help="master seed (64-bit unsigned, default 0)")
    p.add_argument("--out", metavar="PATH", help="write the result here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def _load_raw(args) -> dict:
    raw: dict = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
    for item in args.param:
        key, sep, text = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--param {item!r}: expected KEY=JSON")
        try:
            raw[key] = json.loads(text)
        except json.JSONDecodeError:
            raw[key] = text
    return raw


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.experiment, _load_raw(args), args.seed, args.out, args.format)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
