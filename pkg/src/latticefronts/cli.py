"""Command-line orchestration.

Single JSON config file plus dotted-path overrides; every command writes
deterministic CSV/JSON artifacts stamped with the config hash.  Exit
codes: 0 success, 2 convergence failure, 3 hyperbolicity violation,
4 invalid config, 5 kernel-dimension obstruction.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bvp import (DomainTooSmallError, IncommensurableShiftError,
                  NewtonDivergenceError, SingularSystemError, WaveProblem,
                  epsilon_scaled_problem, four_site_problem, infinite_range_problem,
                  initial_guess, kernel_vectors, make_grid, nagumo_problem,
                  newton_solve, two_site_problem)
from .continuation import (ContinuationOptions, continue_in_epsilon,
                           continue_in_parameter)
from .fixedpoint import (ContractionFailureError, KernelObstructionError,
                         StepRejectedError, iterate, make_context)
from .mfde import StandingWaveError, asymptotic_hyperbolicity, two_site_operator
from .model import (DecoupledLatticeError, TransformError, build_infinite_range,
                    build_nagumo, find_four_periodic_equilibria,
                    find_two_periodic_equilibria, four_site_transform,
                    two_site_transform)
from .sim import (BlowUpError, NoFrontError, check_monotonicity, extract_profile,
                  front_state, integrate, measure_speed)
from .tails import (NoRealRootError, TailFitError, periodic_decay_rate,
                    tail_report_constant)

__all__ = ["main", "run", "validate", "ConfigError"]

EXIT_OK = 0
EXIT_CONVERGENCE = 2
EXIT_HYPERBOLICITY = 3
EXIT_CONFIG = 4
EXIT_KERNEL = 5

COMMANDS = ("equilibria", "transform2", "transform4", "check-hyperbolic",
            "solve-wave", "continue", "fixed-point", "simulate", "tails",
            "sweep")

DEFAULTS = {
    "model": {"kind": "nagumo", "d1": 1.0, "d2": 0.0, "a": 0.3, "eps": 0.0,
              "q": 0.5, "scale": 1.0, "k0": 1, "k_num": 40, "period": 2,
              "minus_index": None, "plus_index": None,
              "minus": None, "plus": None},
    "grid": {"L": 40.0, "h": 1.0},
    "solver": {"tol": 1e-10, "max_iter": 50, "c0": 0.1,
               "guess_width": math.sqrt(2.0)},
    "continuation": {"eps_to": 1.0, "step0": 0.05, "step_min": 1e-5,
                     "grow": 1.5, "parameter": None, "target": None,
                     "stop_on_pinning": False, "hyper_tol": 1e-8},
    "fixedpoint": {"tol": 1e-10, "max_iter": 200},
    "sim": {"M": 400, "dt": 0.02, "T": 200.0, "stride": 10, "front_at": 0.25,
            "level": 0.5, "width": 2.0},
    "hyperbolic": {"c": None, "tol": 1e-8, "operator": None},
    "tails": {"c": None, "window": 0.5},
    "output": {"dir": "out"},
    "sweep": {"parameter": None, "values": [], "command": None},
}

REQUIRED_BLOCKS = {
    "equilibria": ["model"],
    "transform2": ["model"],
    "transform4": ["model"],
    "check-hyperbolic": ["hyperbolic"],
    "solve-wave": ["model", "grid"],
    "continue": ["model", "grid", "continuation"],
    "fixed-point": ["model", "grid"],
    "simulate": ["model", "sim"],
    "tails": ["model", "tails"],
    "sweep": ["sweep"],
}

MODEL_KINDS = ("nagumo", "eps_scaled", "two_site", "four_site", "infinite_range")


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


def validate(config: dict, command: str):
    """Normalized config with defaults filled, or the full list of violations."""
    errors = []
    if command not in COMMANDS:
        errors.append(f"unknown command {command!r}")
        raise ConfigError(errors)
    for key in config:
        if key not in DEFAULTS:
            errors.append(f"unknown config block {key!r}")
    for block in REQUIRED_BLOCKS[command]:
        if block not in config:
            errors.append(f"missing config block {block!r} required by {command}")
    normalized = copy.deepcopy(DEFAULTS)
    for key, block in config.items():
        if key not in DEFAULTS:
            continue
        if not isinstance(block, dict):
            errors.append(f"config block {key!r} must be an object")
            continue
        for field, value in block.items():
            if field not in DEFAULTS[key]:
                errors.append(f"unknown field {key}.{field}")
            else:
                normalized[key][field] = value

    m, g, s = normalized["model"], normalized["grid"], normalized["solver"]
    if m["kind"] not in MODEL_KINDS:
        errors.append(f"model.kind must be one of {MODEL_KINDS}")
    if m["kind"] != "infinite_range" and not 0.0 < m["a"] < 1.0:
        errors.append(f"model.a = {m['a']} outside (0, 1)")
    for path, value, cond in (
            ("grid.h", g["h"], g["h"] > 0), ("grid.L", g["L"], g["L"] > 0),
            ("solver.tol", s["tol"], s["tol"] > 0),
            ("sim.dt", normalized["sim"]["dt"], normalized["sim"]["dt"] > 0),
            ("sim.T", normalized["sim"]["T"], normalized["sim"]["T"] > 0),
            ("continuation.step0", normalized["continuation"]["step0"],
             normalized["continuation"]["step0"] > 0)):
        if not cond:
            errors.append(f"{path} = {value} must be positive")
    if command == "check-hyperbolic" and normalized["hyperbolic"]["operator"] is None \
            and normalized["hyperbolic"]["c"] is None:
        errors.append("hyperbolic.c is required when no explicit operator is given")
    if command == "tails" and normalized["tails"]["c"] in (None, 0.0):
        errors.append("tails.c must be a nonzero speed")
    if command == "sweep":
        sw = normalized["sweep"]
        if sw["command"] not in COMMANDS or sw["command"] == "sweep":
            errors.append("sweep.command must name a non-sweep command")
        if not sw["parameter"] or not sw["values"]:
            errors.append("sweep.parameter and sweep.values are required")
    if errors:
        raise ConfigError(errors)
    return normalized


def config_hash(normalized: dict) -> str:
    blob = json.dumps(normalized, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _g17(x) -> str:
    return f"{float(x):.17g}"


def _meta_line(h: str) -> str:
    return f"# latticefronts {__version__} config={h}"


def write_csv(path: Path, header: str, rows, h: str):
    lines = [_meta_line(h), header]
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj: dict, h: str):
    obj = dict(obj)
    obj["_meta"] = {"package": "latticefronts", "version": __version__,
                    "config_hash": h}
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_profile_csv(path: Path, xi, profile, h: str):
    N = profile.shape[1]
    header = "xi," + ",".join(f"u{i + 1}" for i in range(N))
    rows = [",".join([_g17(x)] + [_g17(v) for v in row])
            for x, row in zip(xi, profile)]
    write_csv(path, header, rows, h)


# ---------------------------------------------------------------------------
# model construction

def _select_pair(states, m):
    nontrivial = [st for st in states
                  if max(st.values) - min(st.values) > 1e-9]
    if m["minus"] is not None and m["plus"] is not None:
        def nearest(target):
            arr = np.asarray(target, dtype=float)
            best = min(states, key=lambda st: np.max(np.abs(st.as_array() - arr)))
            if np.max(np.abs(best.as_array() - arr)) > 1e-6:
                raise ConfigError([f"state {target} not found among equilibria"])
            return best
        return nearest(m["minus"]), nearest(m["plus"])
    if m["minus_index"] is not None and m["plus_index"] is not None:
        return states[int(m["minus_index"])], states[int(m["plus_index"])]
    if not nontrivial:
        raise ConfigError(["no non-homogeneous equilibria to connect; give "
                           "model.minus/model.plus explicitly"])
    return nontrivial[0], nontrivial[-1]


def build_problem(m: dict) -> WaveProblem:
    kind = m["kind"]
    if kind == "nagumo":
        return nagumo_problem(m["d1"], m["d2"], m["a"])
    if kind == "eps_scaled":
        return epsilon_scaled_problem(m["d1"], m["d2"], m["a"], m["eps"])
    if kind == "two_site":
        states = find_two_periodic_equilibria(m["d1"], m["a"])
        minus, plus = _select_pair(states, m)
        ts = two_site_transform(m["d1"], m["d2"], m["a"], minus, plus)
        return two_site_problem(ts, eps=m["eps"])
    if kind == "four_site":
        states = find_four_periodic_equilibria(m["d1"], m["d2"], m["a"])
        if m["minus"] is None and m["plus"] is None and m["minus_index"] is None:
            m = dict(m, minus=[0.0] * 4, plus=[1.0] * 4)
        minus, plus = _select_pair(states, m)
        fs = four_site_transform(m["d1"], m["d2"], m["a"], minus, plus)
        return four_site_problem(fs, eps=m["eps"])
    if kind == "infinite_range":
        irm = build_infinite_range(m["a"], m["q"], m["scale"], m["k0"], m["k_num"])
        return infinite_range_problem(irm, eps=m["eps"])
    raise ConfigError([f"unsupported model.kind {kind!r}"])


def build_lattice(m: dict):
    if m["kind"] == "nagumo":
        return build_nagumo(m["d1"], m["d2"], m["a"])
    if m["kind"] == "infinite_range":
        irm = build_infinite_range(m["a"], m["q"], m["scale"], m["k0"], m["k_num"])
        return irm.full_model(m["eps"])
    raise ConfigError([f"model.kind {m['kind']!r} has no direct lattice form; "
                       "use nagumo or infinite_range for simulation"])


def _solve(cfg, problem: WaveProblem):
    g, s = cfg["grid"], cfg["solver"]
    grid = make_grid(g["L"], g["h"], problem.all_shifts)
    guess = initial_guess(grid, s["guess_width"], problem.dimension)
    sol = newton_solve(problem, grid, guess, s["c0"], tol=s["tol"],
                       max_iter=s["max_iter"])
    return grid, sol


# ---------------------------------------------------------------------------
# commands

def cmd_equilibria(cfg, out, h):
    m = cfg["model"]
    if int(m["period"]) == 4:
        states = find_four_periodic_equilibria(m["d1"], m["d2"], m["a"])
    else:
        states = find_two_periodic_equilibria(m["d1"], m["a"])
    write_json(out / "equilibria.json", {
        "period": states[0].period if states else int(m["period"]),
        "states": [{"values": list(st.values), "residual": st.residual}
                   for st in states]}, h)
    print(f"found {len(states)} periodic equilibria")
    return EXIT_OK


def cmd_transform2(cfg, out, h):
    m = cfg["model"]
    states = find_two_periodic_equilibria(m["d1"], m["a"])
    minus, plus = _select_pair(states, m)
    ts = two_site_transform(m["d1"], m["d2"], m["a"], minus, plus)
    write_json(out / "model.json", {
        "d_e": ts.d_e, "d_o": ts.d_o, "d2": ts.d2,
        "f_e": {"k": ts.f_e.k, "a": ts.f_e.a},
        "f_o": {"k": ts.f_o.k, "a": ts.f_o.a},
        "provenance": {"minus": list(minus.values), "plus": list(plus.values),
                       "middle_root_formula_discrepancy":
                           ts.a_e_formula_discrepancy}}, h)
    print(f"d_e={ts.d_e:.6g} d_o={ts.d_o:.6g} "
          f"discrepancy={ts.a_e_formula_discrepancy}")
    return EXIT_OK


def cmd_transform4(cfg, out, h):
    m = cfg["model"]
    states = find_four_periodic_equilibria(m["d1"], m["d2"], m["a"])
    if m["minus"] is None and m["plus"] is None and m["minus_index"] is None:
        m = dict(m, minus=[0.0] * 4, plus=[1.0] * 4)
    minus, plus = _select_pair(states, m)
    fs = four_site_transform(m["d1"], m["d2"], m["a"], minus, plus)
    write_json(out / "model.json", {
        "A1": fs.A1.tolist(), "A2": fs.A2.tolist(), "A3": fs.A3.tolist(),
        "A1_ref": fs.A1_ref.tolist(), "A2_ref": fs.A2_ref.tolist(),
        "A3_ref": fs.A3_ref.tolist(), "B2": fs.B2.tolist(),
        "cubics": [{"k": c.k, "a": c.a} for c in fs.cubics],
        "provenance": {"minus": list(minus.values),
                       "plus": list(plus.values)}}, h)
    print("four-site transform written")
    return EXIT_OK


def cmd_check_hyperbolic(cfg, out, h):
    hc = cfg["hyperbolic"]
    if hc["operator"] is not None:
        o = hc["operator"]
        op = two_site_operator(o["d_e"], o["d_o"], o.get("d2", 0.0),
                               o.get("eps", 0.0),
                               (o["gamma1"], o["gamma2"]),
                               (o.get("gamma1_plus", o["gamma1"]),
                                o.get("gamma2_plus", o["gamma2"])),
                               o.get("c", 1.0))
    else:
        op = build_problem(cfg["model"]).operator(hc["c"])
    report = asymptotic_hyperbolicity(op, tol=hc["tol"])
    worst = report.worst_entry()
    write_json(out / "report.json", report.to_json(), h)
    print(f"hyperbolic={report.verdict} min_modulus={report.min_modulus:.3e} "
          f"theta={worst.theta_at_min:.6g}")
    return EXIT_OK if report.verdict else EXIT_HYPERBOLICITY


def cmd_solve_wave(cfg, out, h):
    problem = build_problem(cfg["model"])
    grid, sol = _solve(cfg, problem)
    kd = kernel_vectors(problem, grid, sol)
    payload = sol.to_json()
    payload["kernel_dim"] = kd.kernel_dim
    payload["smallest_singular_values"] = [float(v) for v in
                                           kd.singular_values[-3:]]
    write_json(out / "solution.json", payload, h)
    write_profile_csv(out / "profile.csv", grid.xi, sol.profile, h)
    print(f"c={sol.c:.10g} residual={sol.residual_norm:.3e} "
          f"iters={sol.newton_iters} kernel_dim={kd.kernel_dim}")
    if kd.kernel_dim >= 2:
        return EXIT_KERNEL
    return EXIT_OK


STOP_EXIT = {"reached_target": EXIT_OK, "hyperbolicity_lost": EXIT_HYPERBOLICITY,
             "kernel_dimension_change": EXIT_KERNEL,
             "step_underflow": EXIT_CONVERGENCE,
             "pinning_suspected": EXIT_CONVERGENCE}


def cmd_continue(cfg, out, h):
    c = cfg["continuation"]
    problem = build_problem(cfg["model"])
    grid, ref = _solve(cfg, problem)
    opts = ContinuationOptions(step0=c["step0"], step_min=c["step_min"],
                               grow=c["grow"], tol=cfg["solver"]["tol"],
                               max_iter=cfg["solver"]["max_iter"],
                               hyper_tol=c["hyper_tol"],
                               stop_on_pinning=c["stop_on_pinning"])
    if c["parameter"]:
        name, target = c["parameter"], c["target"]
        if name not in ("d1", "d2", "a", "eps"):
            raise ConfigError([f"continuation.parameter {name!r} unsupported"])
        if target is None:
            raise ConfigError(["continuation.target is required with a parameter"])
        if name == "eps":
            branch = continue_in_epsilon(problem, grid, ref, target, opts)
        else:
            def problem_of(v):
                return build_problem(dict(cfg["model"], **{name: v}))
            branch = continue_in_parameter(problem_of, cfg["model"][name],
                                           target, grid, ref, opts)
    else:
        branch = continue_in_epsilon(problem, grid, ref, c["eps_to"], opts)
    write_csv(out / "branch.csv", branch.CSV_HEADER,
              branch.csv_lines()[1:], h)
    write_json(out / "branch.json", branch.to_json(), h)
    write_profile_csv(out / "profile.csv", grid.xi,
                      branch.final.solution.profile, h)
    print(f"stop_reason={branch.stop_reason} steps={len(branch.steps)} "
          f"c={branch.final.solution.c:.10g}")
    return STOP_EXIT[branch.stop_reason]


def cmd_fixed_point(cfg, out, h):
    problem = build_problem(cfg["model"])
    eps = problem.eps
    grid, ref = _solve(cfg, problem.with_eps(0.0))
    ctx = make_context(problem.with_eps(eps), grid, ref)
    sol, state = iterate(ctx, tol=cfg["fixedpoint"]["tol"],
                         max_iter=cfg["fixedpoint"]["max_iter"])
    rows = [f"{i},{_g17(s)},{_g17(c)},{_g17(l)}"
            for i, (s, c, l) in enumerate(state.history)]
    write_csv(out / "history.csv", "iter,step_norm,c_k,lambda_hat", rows, h)
    write_json(out / "state.json", state.to_json(), h)
    write_profile_csv(out / "profile.csv", grid.xi, sol.profile, h)
    print(f"c={sol.c:.10g} iters={len(state.history)} "
          f"lambda_hat={state.contraction_ratio:.3f}")
    return EXIT_OK


def cmd_simulate(cfg, out, h):
    model = build_lattice(cfg["model"])
    sc = cfg["sim"]
    init = front_state(model, int(sc["M"]), sc["front_at"], width=sc["width"])
    traj = integrate(model, init, sc["dt"], sc["T"], stride=int(sc["stride"]))
    speed = measure_speed(traj, level=sc["level"])
    xi, prof, scatter, warn = extract_profile(traj, speed.c_measured)
    mono = check_monotonicity(prof)
    rows = []
    for t, snap in zip(traj.times, traj.states):
        rows.extend(f"{_g17(t)},{n},{_g17(v)}" for n, v in enumerate(snap))
    write_csv(out / "trajectory.csv", "t,site,value", rows, h)
    write_profile_csv(out / "profile.csv", xi, prof, h)
    write_json(out / "speed.json", {
        "c_measured": speed.c_measured, "fit_residual": speed.fit_residual,
        "window": list(speed.window), "level": speed.level,
        "profile_scatter": scatter, "traveling_wave_warning": warn,
        "monotone": mono.monotone}, h)
    print(f"c={speed.c_measured:.10g} scatter={scatter:.3e} "
          f"monotone={mono.monotone}")
    return EXIT_OK


def cmd_tails(cfg, out, h):
    m = cfg["model"]
    c = cfg["tails"]["c"]
    problem = build_problem(m)
    report = tail_report_constant(problem.operator(c))
    payload = report.to_json()
    try:
        model = build_lattice(m)
        mu0, v0 = periodic_decay_rate(model, -1, c)
        mu1, v1 = periodic_decay_rate(model, +1, c)
        payload["dispersion"] = {"mu_minus": mu0, "mu_plus": mu1,
                                 "eigvec_minus": [float(x) for x in v0],
                                 "eigvec_plus": [float(x) for x in v1]}
    except (ConfigError, NoRealRootError):
        pass
    write_json(out / "tails.json", payload, h)
    print(f"lambda0={report.lambda0:.6g} lambda1={report.lambda1:.6g}")
    return EXIT_OK


def _set_dotted(cfg: dict, path: str, value):
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def cmd_sweep(cfg, out, h):
    sw = cfg["sweep"]
    rows = []
    worst = EXIT_OK
    for i, value in enumerate(sw["values"]):
        sub = {k: copy.deepcopy(v) for k, v in cfg.items()
               if k not in ("sweep", "output")}
        _set_dotted(sub, sw["parameter"], value)
        subdir = out / f"run_{i:03d}"
        code = run(sw["command"], sub, subdir)
        rows.append(f"{i},{_g17(value)},{code}")
        if code != EXIT_OK and worst == EXIT_OK:
            worst = code
    write_csv(out / "summary.csv", "index,value,exit_code", rows, h)
    return worst


DISPATCH = {
    "equilibria": cmd_equilibria,
    "transform2": cmd_transform2,
    "transform4": cmd_transform4,
    "check-hyperbolic": cmd_check_hyperbolic,
    "solve-wave": cmd_solve_wave,
    "continue": cmd_continue,
    "fixed-point": cmd_fixed_point,
    "simulate": cmd_simulate,
    "tails": cmd_tails,
    "sweep": cmd_sweep,
}

CONVERGENCE_ERRORS = (NewtonDivergenceError, DomainTooSmallError,
                      SingularSystemError, ContractionFailureError,
                      StepRejectedError, NoFrontError, BlowUpError,
                      NoRealRootError, TailFitError)
CONFIG_ERRORS = (IncommensurableShiftError, DecoupledLatticeError,
                 TransformError, StandingWaveError, ValueError, KeyError)


def _emit_error(kind: str, exc: Exception):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        payload["violations"] = exc.errors
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def run(command: str, config: dict, outdir=None) -> int:
    """Validate, dispatch, and write artifacts; returns the exit code."""
    try:
        cfg = validate(config, command)
    except ConfigError as exc:
        _emit_error("invalid_config", exc)
        return EXIT_CONFIG
    h = config_hash(cfg)
    out = Path(outdir) if outdir is not None else Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        return DISPATCH[command](cfg, out, h)
    except ConfigError as exc:
        _emit_error("invalid_config", exc)
        return EXIT_CONFIG
    except KernelObstructionError as exc:
        _emit_error("kernel_obstruction", exc)
        return EXIT_KERNEL
    except CONVERGENCE_ERRORS as exc:
        _emit_error("convergence_failure", exc)
        return EXIT_CONVERGENCE
    except CONFIG_ERRORS as exc:
        _emit_error("invalid_config", exc)
        return EXIT_CONFIG


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError([f"override {text!r} is not of the form path=value"])
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="latticefronts",
        description="Traveling fronts of bistable lattice equations: "
                    "equilibria, transforms, hyperbolicity checks, wave "
                    "solving, continuation, fixed-point iteration, "
                    "simulation, tail rates.",
        epilog="Config precedence: command line overrides > config file > "
               "defaults. Overrides are dotted paths, e.g. grid.h=0.05. "
               f"Defaults: {json.dumps(DEFAULTS, default=str)}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--output", help="output directory (overrides config)")
    parser.add_argument("overrides", nargs="*",
                        help="dotted-path overrides: block.field=value")
    args = parser.parse_intermixed_args(argv)

    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            _emit_error("invalid_config", ConfigError([f"cannot read config: {exc}"]))
            return EXIT_CONFIG
    try:
        for text in args.overrides:
            path, value = _parse_override(text)
            _set_dotted(config, path, value)
    except ConfigError as exc:
        _emit_error("invalid_config", exc)
        return EXIT_CONFIG
    return run(args.command, config, args.output)


if __name__ == "__main__":
    sys.exit(main())
