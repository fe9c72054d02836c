"""Command-line entry point: ``sigma-flow-lab <command> --config <path> [--out DIR] [--seed N]``.

Config files are flat ``key = value`` lines with ``#`` comments; ``--set
key=value`` overrides single keys. Every command writes ``summary.txt`` (dotted
keys) into the output directory, also on failure. Exit codes: 0 success,
2 config error, 3 stall or non-convergence, 4 inequality violation,
5 construction infeasible.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constructions as cons
from . import suites
from .errors import (ConeViolationError, ConstructionInfeasibleError, DomainError,
                     FlowStallError, FlowTimeoutError, SigmaFlowError)
from .flow import TRACE_COLUMNS, FlowConfig, run
from .functionals import sharp_constants
from .geometry import GeometryDescriptor, Kind

EXIT_OK, EXIT_CONFIG, EXIT_STALL, EXIT_VIOLATION, EXIT_INFEASIBLE = 0, 2, 3, 4, 5
COMMANDS = ("flow", "verify", "constants", "construct", "sweep")
WORKERS_ENV = "SIGMA_FLOW_LAB_WORKERS"
PROFILES = ("constant", "sine", "cosine_band", "file")


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration

_FLOAT_LIST = "floats"
_SCHEMA = {
    "geometry.kind": (str, "product_circle_sphere"),
    "geometry.n": (int, 5),
    "geometry.grid_size": (int, 128),
    "geometry.circle_length": (float, 2 * math.pi),
    "flow.k": (int, 2),
    "flow.l": (int, 1),
    "flow.cfl": (float, 1.0),
    "flow.tol_residual": (float, 1e-6),
    "flow.max_time": (float, 100.0),
    "flow.conservation_check_every": (int, 1000),
    "flow.dt_min": (float, 1e-12),
    "initial_profile": (str, "sine"),
    "amplitude": (float, 0.1),
    "mode": (int, 2),
    "profile_file": (str, ""),
    "output_dir": (str, "out"),
    "seed": (int, 0),
    "constants.n": (int, 4),
    "constants.k": (int, 2),
    "constants.l": (int, 1),
    "verify.samples": (int, 100),
    "verify.grid_size": (int, 256),
    "verify.tolerance": (float, 1e-8),
    "verify.mt_tolerance": (float, 1e-6),
    "verify.symfun_samples": (int, 2000),
    "construct.n": (int, 5),
    "construct.k": (int, 2),
    "construct.l": (int, 1),
    "construct.eps0": (float, 0.6),
    "construct.epsilon": (float, 0.1),
    "construct.deltas": (_FLOAT_LIST, (0.2, 0.1, 0.05, 0.025)),
    "sweep.rows": (str, ""),
}


@dataclass(frozen=True)
class RunConfig:
    command: str
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def geometry(self, grid_size: int | None = None) -> GeometryDescriptor:
        return GeometryDescriptor(self["geometry.kind"], self["geometry.n"],
                                  grid_size or self["geometry.grid_size"],
                                  circle_length=self["geometry.circle_length"])

    def flow_config(self, k=None, l=None) -> FlowConfig:
        return FlowConfig(k=self["flow.k"] if k is None else k, l=self["flow.l"] if l is None else l,
                          cfl=self["flow.cfl"], tol_residual=self["flow.tol_residual"],
                          max_time=self["flow.max_time"],
                          conservation_check_every=self["flow.conservation_check_every"],
                          dt_min=self["flow.dt_min"])


def _convert(key: str, raw: str):
    kind = _SCHEMA[key][0]
    try:
        if kind is _FLOAT_LIST:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (x.strip() for x in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


def build_config(command: str, path: str | None, overrides, out: str | None, seed) -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    values = {k: v for k, (_, v) in _SCHEMA.items()}
    if path:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (x.strip() for x in item.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, raw)
    if out is not None:
        values["output_dir"] = out
    if seed is not None:
        values["seed"] = seed
    cfg = RunConfig(command, values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check every field a command will use before any computation starts."""
    try:
        if cfg.command in ("flow", "sweep"):
            geom = cfg.geometry()
            if not geom.compact:
                raise ConfigError("flow needs a compact geometry")
            fcfg = cfg.flow_config()
            if fcfg.k > geom.n:
                raise ConfigError(f"flow.k = {fcfg.k} exceeds geometry.n = {geom.n}")
            if cfg["initial_profile"] not in PROFILES:
                raise ConfigError(f"initial_profile must be one of {PROFILES}")
            if cfg["initial_profile"] == "file" and not cfg["profile_file"]:
                raise ConfigError("initial_profile = file needs profile_file")
            if cfg.command == "sweep":
                for k, l, _, grid in parse_rows(cfg["sweep.rows"]):
                    cfg.geometry(grid)
                    if cfg.flow_config(k, l).k > geom.n:
                        raise ConfigError(f"sweep row k = {k} exceeds geometry.n = {geom.n}")
        elif cfg.command == "constants":
            sharp_constants(cfg["constants.n"], cfg["constants.k"], cfg["constants.l"])
        elif cfg.command == "construct":
            n, k, l = cfg["construct.n"], cfg["construct.k"], cfg["construct.l"]
            if not (0 <= l < k and 2 * k < n):
                raise ConfigError(f"construct needs 0 <= l < k < n/2, got n={n}, k={k}, l={l}")
            cons.BubbleProfile(0.5, cfg["construct.eps0"])
            if not 0 < cfg["construct.epsilon"] < 0.5:
                raise ConfigError("construct.epsilon must lie in (0, 1/2)")
            if not cfg["construct.deltas"] or any(not 0 < d < 1 for d in cfg["construct.deltas"]):
                raise ConfigError("construct.deltas must be values in (0, 1)")
        elif cfg.command == "verify":
            if cfg["verify.samples"] < 1 or cfg["verify.grid_size"] < 16:
                raise ConfigError("verify.samples >= 1 and verify.grid_size >= 16 required")
    except (DomainError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_rows(text: str):
    """``k,l,amplitude,grid`` rows separated by ``;``."""
    rows = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 4:
            raise ConfigError(f"sweep row {chunk!r} needs k,l,amplitude,grid")
        try:
            rows.append((int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise ConfigError(f"sweep row {chunk!r}: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# output


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (tuple, list)):
        return ",".join(fmt(v) for v in value)
    return str(value)


def write_summary(path: Path, entries: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {fmt(value)}\n")


def read_summary(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def write_table(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _config_entries(cfg: RunConfig) -> dict:
    return {f"config.{k}": v for k, v in sorted(cfg.values.items())}


# ---------------------------------------------------------------------------
# commands


def initial_profile(cfg: RunConfig, geom: GeometryDescriptor, amplitude=None) -> np.ndarray:
    amp = cfg["amplitude"] if amplitude is None else amplitude
    kind = cfg["initial_profile"]
    x = geom.nodes if geom.kind is Kind.ROUND_SPHERE else 2 * math.pi * geom.nodes / geom.circle_length
    if kind == "constant":
        return np.full(geom.grid_size, amp)
    if kind == "sine":
        return amp * (np.cos(x) if geom.kind is Kind.ROUND_SPHERE else np.sin(x))
    if kind == "cosine_band":
        return amp * np.cos(cfg["mode"] * x)
    data = np.loadtxt(cfg["profile_file"], dtype=float).ravel()
    if data.shape != (geom.grid_size,):
        raise ConfigError(f"profile_file has {data.size} values, expected {geom.grid_size}")
    return data


def _flow_once(cfg: RunConfig, geom, u0, fcfg, outdir: Path):
    """Run one flow and write its summary and trace; returns ``(exit_code, summary)``."""
    summary = {"command": "flow", "status": "running"}
    start = time.perf_counter()
    code = EXIT_OK
    trace = None
    try:
        _, trace = run(geom, u0, fcfg)
        summary["status"] = "converged"
    except (FlowStallError, FlowTimeoutError) as exc:
        trace = exc.trace
        summary["status"] = "stalled" if isinstance(exc, FlowStallError) else "timeout"
        summary["error.type"] = type(exc).__name__
        summary["error.message"] = str(exc)
        code = EXIT_STALL
    except ConeViolationError as exc:
        summary["status"] = "cone_violation"
        summary["error.type"] = type(exc).__name__
        summary["error.message"] = str(exc)
        summary["error.node"] = exc.node if exc.node is not None else -1
        code = EXIT_STALL
    if trace is not None:
        for key, value in trace.summary.items():
            summary[f"flow.{key}"] = value
        summary["flow.trace_rows"] = len(trace)
        write_table(outdir / "trace.csv", TRACE_COLUMNS, trace.rows)
        summary["files.trace"] = str(outdir / "trace.csv")
    summary["wall_time"] = time.perf_counter() - start
    return code, summary


def cmd_flow(cfg: RunConfig, outdir: Path) -> tuple[int, dict]:
    geom = cfg.geometry()
    code, summary = _flow_once(cfg, geom, initial_profile(cfg, geom), cfg.flow_config(), outdir)
    return code, summary


def cmd_constants(cfg: RunConfig, outdir: Path) -> tuple[int, dict]:
    c = sharp_constants(cfg["constants.n"], cfg["constants.k"], cfg["constants.l"])
    rows = [("omega_n", c.omega_n), ("C_S_sphere", c.C_S_sphere),
            ("quermass_const", c.quermass_const), ("C_MT", c.C_MT)]
    width = max(len(r[0]) for r in rows)
    print(f"n={c.n} k={c.k} l={c.l}")
    for name, val in rows:
        print(f"{name:<{width}}  {'undefined' if val is None else fmt(val)}")
    summary = {"command": "constants", "status": "ok", "n": c.n, "k": c.k, "l": c.l}
    for name, val in rows:
        summary[f"constants.{name}"] = "undefined" if val is None else val
    return EXIT_OK, summary


def cmd_verify(cfg: RunConfig, outdir: Path) -> tuple[int, dict]:
    rep = suites.run_verify(cfg["seed"], samples=cfg["verify.samples"],
                            grid=cfg["verify.grid_size"], tolerance=cfg["verify.tolerance"],
                            mt_tolerance=cfg["verify.mt_tolerance"],
                            symfun_samples=cfg["verify.symfun_samples"])
    summary = {"command": "verify", "status": "ok" if not rep.violations else "violation"}
    for name, val in rep.margins.items():
        summary[f"margin.{name}"] = val
    summary["violations"] = ";".join(rep.violations) if rep.violations else "none"
    for name, u in rep.witnesses.items():
        path = outdir / f"witness_{name}.txt"
        np.savetxt(path, u, fmt="%.17g")
        summary[f"witness.{name}"] = str(path)
    return (EXIT_VIOLATION if rep.violations else EXIT_OK), summary


def _fit_slope(deltas, values):
    return float(np.polyfit(np.log(deltas), np.log(np.abs(values)), 1)[0])


def cmd_construct(cfg: RunConfig, outdir: Path) -> tuple[int, dict]:
    n, k, l = cfg["construct.n"], cfg["construct.k"], cfg["construct.l"]
    eps0, deltas = cfg["construct.eps0"], sorted(cfg["construct.deltas"], reverse=True)
    summary = {"command": "construct", "status": "ok"}
    base = cons.round_sphere_chart()
    try:
        neck = cons.build_neck(cfg["construct.epsilon"], base, n, k)
    except ConstructionInfeasibleError as exc:
        summary.update({"status": "infeasible", "error.type": type(exc).__name__,
                        "error.message": str(exc), "error.margin": exc.margin})
        return EXIT_INFEASIBLE, summary
    for key in ("epsilon", "delta", "r0", "r1", "r2", "r3", "smoothing_width"):
        summary[f"neck.{key}"] = getattr(neck, key)
    summary["neck.cylinder_constant"] = neck.cylinder_constant
    mn, where, _ = cons.verify_positive(neck, n, k)
    summary["neck.min_sigma"], summary["neck.argmin_r"] = mn, where
    grid = np.geomspace(neck.r3 * 0.5, 0.999, 400)
    write_table(outdir / "neck.csv", ("r", "u", "alpha", "sigma_k"),
                np.column_stack([grid, neck.u(grid), neck.alpha(grid), neck.sigma_k(n, k, grid)]))
    vols, sints, rows = [], [], []
    sphere = sharp_constants(n, k, l).C_S_sphere ** (n - 2 * k)
    code = EXIT_OK
    for d in deltas:
        bub = cons.BubbleProfile(d, eps0)
        bmin, barg, _ = cons.verify_positive(bub, n, k)
        vol, sint = cons.bubble_bounds(bub, n, k)
        vols.append(vol)
        sints.append(sint)
        try:
            q = cons.glue_and_quotient(base, bub, neck, k, l)
            cause = ""
        except ConstructionInfeasibleError as exc:
            q, cause = math.nan, str(exc)
        except ConeViolationError as exc:
            q, cause = math.nan, str(exc)
            code = EXIT_INFEASIBLE
        glued = cons.glue(neck, bub)
        lead = glued.leading_sigma_integral(n, k)
        total = cons.glued_sigma_integral(neck, bub, n, k)
        rows.append((d, bmin, barg, vol, sint, q, q / sphere - 1.0, total / lead - 1.0))
        if cause:
            summary[f"glue.{d:g}.error"] = cause
        r = np.geomspace(bub.delta1 * 1e-2, 1.0, 400)
        write_table(outdir / f"bubble_{d:g}.csv", ("r", "u", "alpha", "sigma_k"), bub.table(n, k, r))
    write_table(outdir / "quotients.csv",
                ("delta", "bubble_min_sigma", "bubble_argmin_r", "volume_neck", "sigma_integral_neck",
                 "quotient", "quotient_excess", "leading_term_excess"), rows)
    summary["sphere_quotient"] = sphere
    if len(deltas) >= 2:
        summary["fit.volume_slope"] = _fit_slope(deltas, vols)
        summary["fit.volume_expected"] = -2 * n / (1 - eps0)
        summary["fit.sigma_slope"] = _fit_slope(deltas, sints)
        summary["fit.sigma_bound_exponent"] = -2 * (n - 2 * k) / (1 - eps0)
        summary["fit.sigma_band_exponent"] = cons.sigma_band_exponent(n, k, eps0)
    for row in rows:
        summary[f"quotient.{row[0]:g}"] = row[5]
    summary["bubble.min_sigma"] = min(r[1] for r in rows)
    summary["files.quotients"] = str(outdir / "quotients.csv")
    if code:
        summary["status"] = "gluing_failure"
    return code, summary


def _sweep_row(args):
    i, values, row, outdir = args
    k, l, amp, grid = row
    cfg = RunConfig("flow", values)
    rdir = Path(outdir) / f"row_{i:03d}"
    try:
        geom = cfg.geometry(grid)
        code, summary = _flow_once(cfg, geom, initial_profile(cfg, geom, amp),
                                   cfg.flow_config(k, l), rdir)
    except SigmaFlowError as exc:
        code, summary = EXIT_STALL, {"status": "error", "error.type": type(exc).__name__,
                                     "error.message": str(exc)}
    write_summary(rdir / "summary.txt", summary)
    return i, row, code, summary


def cmd_sweep(cfg: RunConfig, outdir: Path) -> tuple[int, dict]:
    rows = parse_rows(cfg["sweep.rows"])
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    jobs = [(i, cfg.values, row, str(outdir)) for i, row in enumerate(rows)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    table = []
    incomplete = 0
    for i, (k, l, amp, grid), code, s in sorted(results, key=lambda r: r[0]):
        status = s.get("status", "error")
        if status == "error":
            incomplete += 1
        table.append((i, k, l, amp, grid, status, s.get("flow.final_residual", math.nan),
                      s.get("flow.conserved_drift", math.nan), s.get("flow.r_kl", math.nan),
                      s.get("flow.final_time", math.nan)))
    write_table(outdir / "sweep.csv", ("row", "k", "l", "amplitude", "grid", "status",
                                        "final_residual", "conserved_drift", "r_kl", "final_time"),
                table)
    summary = {"command": "sweep", "status": "ok" if not incomplete else "incomplete",
               "rows": len(rows), "workers": workers,
               "converged": sum(1 for r in table if r[5] == "converged"),
               "files.table": str(outdir / "sweep.csv")}
    return (EXIT_STALL if incomplete else EXIT_OK), summary


HANDLERS = {"flow": cmd_flow, "verify": cmd_verify, "constants": cmd_constants,
            "construct": cmd_construct, "sweep": cmd_sweep}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sigma-flow-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="seed for randomised suites")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    outdir = Path(args.out or "out")
    try:
        cfg = build_config(args.command, args.config, args.set, args.out, args.seed)
        outdir = Path(cfg["output_dir"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        write_summary(outdir / "summary.txt", {"command": args.command, "status": "config_error",
                                                "error.type": "ConfigError",
                                                "error.message": str(exc)})
        return EXIT_CONFIG
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        code, summary = HANDLERS[cfg.command](cfg, outdir)
    except ConfigError as exc:
        code, summary = EXIT_CONFIG, {"command": cfg.command, "status": "config_error",
                                      "error.type": "ConfigError", "error.message": str(exc)}
    except ConstructionInfeasibleError as exc:
        code, summary = EXIT_INFEASIBLE, {"command": cfg.command, "status": "infeasible",
                                          "error.type": type(exc).__name__,
                                          "error.message": str(exc)}
    summary.setdefault("wall_time", time.perf_counter() - start)
    summary.update(_config_entries(cfg))
    summary["exit_code"] = code
    write_summary(outdir / "summary.txt", summary)
    print(f"{cfg.command}: {summary.get('status')} (exit {code}); summary in {outdir / 'summary.txt'}")
    return code


if __name__ == "__main__":
    sys.exit(main())
