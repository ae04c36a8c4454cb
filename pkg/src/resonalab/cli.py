"""Command-line front end.

Subcommands
-----------
``analyze``    resonance sets and stability verdict for a system and phase
``flow``       reduced block flows and their growth bounds
``simulate``   pseudo-spectral run with a seeded perturbation
``kg-verify``  the Klein-Gordon verification bundle

Exit status: 0 success, 1 invalid configuration, 2 failed verification,
3 runtime error.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import io as rio

EXIT_OK, EXIT_SCHEMA, EXIT_FAILED, EXIT_RUNTIME = 0, 1, 2, 3


class ConfigError(ValueError):
    """Configuration text or overrides do not match the schema."""


# --------------------------------------------------------------------------
# schemas

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_PAIR = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}

_SYSTEM = {
    "type": "object",
    "oneOf": [
        {
            "properties": {
                "builtin": {"const": "klein-gordon"},
                "d": {"type": "integer", "minimum": 1},
                "omega0": {"type": "number", "exclusiveMinimum": 0},
                "theta0": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["builtin"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "d": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 1},
                "A0": {"type": "array"},
                "A": {"type": "array"},
                "B": {"type": "array"},
            },
            "required": ["d", "N", "A0", "A", "B"],
            "additionalProperties": False,
        },
    ],
}

_PHASE = {
    "type": "object",
    "properties": {
        "k": _VEC,
        "omega": {"type": ["number", "null"]},
        "branch": {"type": "integer", "minimum": 1},
    },
    "required": ["k"],
    "additionalProperties": False,
}

_BOX = {"type": ["array", "null"], "items": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}}

_COMMON = {
    "system": _SYSTEM,
    "phase": _PHASE,
    "amplitude": {"type": "number", "exclusiveMinimum": 0},
    "box": _BOX,
    "grid_n": {"type": ["integer", "null"], "minimum": 4},
    "h": {"type": "number", "exclusiveMinimum": 0},
}

SCHEMAS: dict[str, dict[str, Any]] = {
    "analyze": {
        "type": "object",
        "properties": dict(_COMMON),
        "required": ["system", "phase"],
        "additionalProperties": False,
    },
    "flow": {
        "type": "object",
        "properties": {
            **_COMMON,
            "epsilon": {
                "oneOf": [
                    {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}, "minItems": 1},
                ]
            },
            "gamma_plus": {"type": ["number", "null"], "minimum": 0},
            "horizon": {"type": "number", "exclusiveMinimum": 0},
            "n_times": {"type": "integer", "minimum": 5},
            "log_power_cap": {"type": "number", "minimum": 0},
            "C_cap": {"type": "number", "exclusiveMinimum": 0},
            "mode": {"enum": ["frozen-exact", "stepped"]},
            "cases": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "name": {"type": "string"},
                        "pairs": {"type": "array", "items": _PAIR, "minItems": 1},
                        "xi": _VEC,
                        "drop": {"type": "array", "items": {"type": "string", "pattern": "^b[0-9]+[+-]$"}},
                        "anchor": _PAIR,
                    },
                    "required": ["pairs", "xi"],
                    "additionalProperties": False,
                },
            },
        },
        "required": ["system", "phase", "epsilon"],
        "additionalProperties": False,
    },
    "simulate": {
        "type": "object",
        "properties": {
            "system": _SYSTEM,
            "phase": _PHASE,
            "amplitude": {"type": "number", "minimum": 0},
            "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "grid_n": {"type": "integer", "minimum": 8},
            "length": {"type": "number", "exclusiveMinimum": 0},
            "t_end": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
            "mode": {"enum": ["linearized", "nonlinear"]},
            "n_out": {"type": "integer", "minimum": 5},
            "sobolev_index": {"type": ["number", "null"]},
            "gamma_plus": {"type": ["number", "null"], "minimum": 0},
            "seed": {
                "type": "object",
                "properties": {
                    "xi": _VEC,
                    "mode": {"enum": ["growth", "branch", "singular", "vector"]},
                    "pair": _PAIR,
                    "branch": {"type": "integer", "minimum": 1},
                    "vector": {"type": "array", "items": _NUM},
                    "exponent": {"type": "number"},
                    "scale": {"type": "number"},
                    "width": {"type": "number", "exclusiveMinimum": 0},
                },
                "required": ["xi"],
                "additionalProperties": False,
            },
        },
        "required": ["system", "phase", "epsilon", "grid_n", "length"],
        "additionalProperties": False,
    },
    "kg-verify": {
        "type": "object",
        "properties": {
            "d": {"type": "integer", "minimum": 1},
            "omega0": {"type": "number", "exclusiveMinimum": 0},
            "theta0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "k": _VEC,
            "amplitude": {"type": "number", "exclusiveMinimum": 0},
            "n_samples": {"type": "integer", "minimum": 1},
            "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
            "seed": {"type": "integer"},
            "box": _BOX,
        },
        "additionalProperties": False,
    },
}

DEFAULTS: dict[str, dict[str, Any]] = {
    "analyze": {
        "system": {"builtin": "klein-gordon", "d": 1, "omega0": 1.0, "theta0": 0.5},
        "phase": {"k": [1.0], "branch": 1},
        "amplitude": 1.0,
        "h": 0.05,
    },
    "flow": {
        "system": {"builtin": "klein-gordon", "d": 1, "omega0": 1.0, "theta0": 0.5},
        "phase": {"k": [1.0], "branch": 1},
        "amplitude": 1.0,
        "h": 0.05,
        "epsilon": [1e-2, 1e-3, 1e-4],
        "horizon": 10.0,
        "n_times": 401,
        "log_power_cap": 2.0,
        "C_cap": 10.0,
        "mode": "frozen-exact",
    },
    "simulate": {
        "system": {"builtin": "klein-gordon", "d": 1, "omega0": 1.0, "theta0": 0.5},
        "phase": {"k": [1.0], "branch": 1},
        "amplitude": 1.0,
        "epsilon": 0.0025,
        "grid_n": 512,
        "length": float(np.pi / 2),
        "mode": "linearized",
        "n_out": 101,
        "seed": {"xi": [1.4549856548870312], "mode": "growth", "pair": [1, 2], "exponent": 2.0, "width": 0.2},
    },
    "kg-verify": {"d": 2, "omega0": 1.0, "theta0": 0.5, "amplitude": 1.0, "n_samples": 1000,
                  "epsilons": [1e-3, 1e-4], "seed": 0},
}


# --------------------------------------------------------------------------
# configuration handling


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict[str, Any], assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in override {assignment!r}")
    node = cfg
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot descend into {p!r} in override {assignment!r}")
        node = nxt
    node[parts[-1]] = _parse_value(raw)


def build_config(command: str, path: str | None, overrides: Sequence[str], mode: str | None, epsilon: float | None) -> dict[str, Any]:
    """Merge defaults, the config file, overrides and flags; validate the result."""
    cfg = copy.deepcopy(DEFAULTS[command])
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        for key, value in doc.items():
            cfg[key] = value
    for a in overrides:
        apply_override(cfg, a)
    if mode is not None:
        cfg["mode"] = mode
    if epsilon is not None:
        key = "epsilons" if command == "kg-verify" else "epsilon"
        cfg[key] = [epsilon] if command == "kg-verify" else epsilon
    try:
        jsonschema.validate(cfg, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    return cfg


def _system_and_phase(cfg):
    from .resonance import characteristic_phase
    from .symbol import load_system

    spec = load_system(cfg["system"])
    ph = cfg["phase"]
    beta = characteristic_phase(spec, ph["k"], omega=ph.get("omega"), branch=ph.get("branch", 1))
    return spec, beta


def _box(cfg):
    return None if cfg.get("box") is None else np.asarray(cfg["box"], dtype=float)


# --------------------------------------------------------------------------
# subcommands


def run_analyze(cfg: dict[str, Any], out: Path) -> int:
    from .coupling import classify_resonances

    spec, beta = _system_and_phase(cfg)
    verdict = classify_resonances(
        spec, beta, box=_box(cfg), amplitude=cfg["amplitude"], h=cfg["h"], grid_n=cfg.get("grid_n")
    )
    for (i, j), rset in verdict.sets.items():
        rio.write_text(out / f"resonance_{i}_{j}.csv", rset.to_csv())
    body = verdict.to_dict()
    body.pop("gamma_samples")
    rio.write_json(
        out / "stability.json",
        {"schema": rio.schema_tag("stability"), "config": cfg, "phase": beta.as_dict(), "verdict": body},
    )
    print(f"index {verdict.index_label}, gamma+ = {verdict.gamma_plus:.6g}, Re0 = {verdict.Re0}", file=sys.stderr)
    return EXIT_OK


def run_flow(cfg: dict[str, Any], out: Path, mode: str | None = None) -> int:
    from .coupling import classify_resonances
    from .flow import build_block, integrate_flow, verify_flow_bound

    spec, beta = _system_and_phase(cfg)
    eps_list = cfg["epsilon"] if isinstance(cfg["epsilon"], list) else [cfg["epsilon"]]
    gamma = cfg.get("gamma_plus")
    cases = cfg.get("cases")
    verdict = None
    if gamma is None or not cases:
        verdict = classify_resonances(spec, beta, box=_box(cfg), amplitude=cfg["amplitude"], h=cfg["h"])
    if gamma is None:
        gamma = verdict.gamma_plus
    if not cases:
        if verdict.argmax_pair is None:
            print("no non-transparent resonance: nothing to integrate", file=sys.stderr)
            cases = []
        else:
            cases = [{"name": "argmax", "pairs": [list(verdict.argmax_pair)], "xi": verdict.argmax_xi.tolist()}]
    results = []
    all_ok = True
    for n, case in enumerate(cases):
        name = case.get("name", f"case{n}")
        pairs = [tuple(p) for p in case["pairs"]]
        for eps in eps_list:
            blk = build_block(
                spec, beta, pairs, case["xi"], eps, cfg["amplitude"], pattern=name,
                drop=case.get("drop", ()), anchor=tuple(case["anchor"]) if "anchor" in case else None,
            )
            T = cfg["horizon"] * abs(np.log(eps))
            traj = integrate_flow(blk, T, n_times=cfg["n_times"], mode=cfg["mode"], epsilon=eps)
            bound = verify_flow_bound(traj, gamma, log_power_cap=cfg["log_power_cap"], C_cap=cfg["C_cap"])
            all_ok &= bound.ok
            stem = f"flow_{name}_eps{eps:.3g}"
            rio.write_text(out / f"{stem}.csv", traj.to_csv(gamma, bound.C, bound.n_star))
            results.append({"case": name, "epsilon": eps, "block": blk.as_dict(), "bound": bound.as_dict()})
            status = "ok" if bound.ok else "VIOLATED"
            print(f"{name} eps={eps:g}: N*={bound.n_star:.3g} C={bound.C:.3g} {status}", file=sys.stderr)
    rio.write_json(
        out / "flow.json",
        {"schema": rio.schema_tag("flow"), "config": cfg, "gamma_plus": gamma, "ok": all_ok, "results": results},
    )
    return EXIT_OK if all_ok else EXIT_FAILED


def sim_config_from(cfg: dict[str, Any]):
    """Translate a validated ``simulate`` document into a :class:`SimConfig`."""
    from .sim import SimConfig

    spec, beta = _system_and_phase(cfg)
    seed = cfg.get("seed") or {}
    return SimConfig(
        spec=spec,
        beta=beta,
        epsilon=cfg["epsilon"],
        grid_n=cfg["grid_n"],
        length=cfg["length"],
        amplitude=cfg["amplitude"],
        seed_xi=seed.get("xi"),
        seed_mode=seed.get("mode", "growth"),
        seed_pair=tuple(seed["pair"]) if "pair" in seed else None,
        seed_branch=seed.get("branch"),
        seed_vector=seed.get("vector"),
        seed_exponent=seed.get("exponent", 2.0),
        seed_scale=seed.get("scale", 1.0),
        envelope_width=seed.get("width", 0.2),
        t_end=cfg.get("t_end"),
        dt=cfg.get("dt"),
        mode=cfg["mode"],
        n_out=cfg["n_out"],
        sobolev_index=cfg.get("sobolev_index"),
    )


def run_simulate(cfg: dict[str, Any], out: Path) -> int:
    from .coupling import gamma_trace, principal_sqrt
    from .sim import deviation_metrics, step_run

    sc = sim_config_from(cfg)
    trace = step_run(sc)
    rate, resid, amp = deviation_metrics(trace)
    gamma = cfg.get("gamma_plus")
    if gamma is None and sc.seed_pair is not None and sc.seed_xi_lattice is not None:
        g = gamma_trace(sc.spec, *sc.seed_pair, sc.beta, sc.seed_xi_lattice)
        gamma = float(sc.amplitude * principal_sqrt(g).real)
    scaled = rate * np.sqrt(sc.epsilon)
    summary = {
        "schema": rio.schema_tag("simulation"),
        "config": sc.as_dict(),
        "status": trace.status,
        "fitted_rate": rate,
        "fitted_rate_rescaled": scaled,
        "fit_residual": resid,
        "amplification": amp,
        "gamma_plus": gamma,
        "ratio": None if not gamma else scaled / gamma,
        "imag_max": trace.imag_max,
    }
    rio.write_text(out / "trace.csv", trace.to_csv())
    rio.write_json(out / "simulation.json", summary)
    print(f"status {trace.status}, rescaled rate {scaled:.6g}, gamma+ {gamma}", file=sys.stderr)
    return EXIT_OK


def run_kg_verify(cfg: dict[str, Any], out: Path) -> int:
    from .kg import KGParams, kg_report

    params = KGParams(
        d=cfg["d"], omega0=cfg["omega0"], theta0=cfg["theta0"],
        k=tuple(cfg["k"]) if "k" in cfg else None, amplitude=cfg["amplitude"],
    )
    report = kg_report(
        params, box=_box(cfg), n_samples=cfg["n_samples"], epsilons=tuple(cfg["epsilons"]), seed=cfg["seed"]
    )
    rio.write_json(out / "kg_report.json", report.as_dict())
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_FAILED


# --------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resonalab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "flow", "simulate", "kg-verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="dotted-path override, value parsed as JSON when possible")
        p.add_argument("--mode", help="integration or simulation mode")
        p.add_argument("--epsilon", type=float, help="override epsilon")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args.command, args.config, args.set, args.mode, args.epsilon)
    except ConfigError as exc:
        print(f"resonalab: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(args.out)
    runners = {
        "analyze": run_analyze,
        "flow": run_flow,
        "simulate": run_simulate,
        "kg-verify": run_kg_verify,
    }
    start = time.perf_counter()
    try:
        code = runners[args.command](cfg, out)
    except Exception as exc:  # reported, not raised: the exit code is the contract
        print(f"resonalab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"done in {time.perf_counter() - start:.1f}s -> {out}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
