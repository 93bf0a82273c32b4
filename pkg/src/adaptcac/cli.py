"""Command-line entry point: validate a scenario, sweep loads, write a CSV.

Configuration is TOML; see ``data/reference.toml`` for the full grammar.
Exit status is 0 on success, 1 on a configuration error and 2 when a
fixed point fails to converge (rows finished before the failure are still
written).
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import SimpleNamespace
from typing import Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from adaptcac import sim
from adaptcac.alloc import RejectScope
from adaptcac.chain import SchemeKind, SchemeSpec, solve_fixed_point
from adaptcac.errors import ConfigError, ConvergenceError
from adaptcac.metrics import (
    ForcedTerminationMode,
    KpiRow,
    analytical_row,
    simulated_row,
)
from adaptcac.model import SystemParams, TrafficClass, class_violations, system_violations

log = logging.getLogger("adaptcac")

BASE_COLUMNS = (
    "scheme", "lambda_n", "source", "p_block", "p_drop", "utilization",
    "handover_rate", "forced_termination", "n_base", "s_extra", "l_newcall",
    "fp_iterations",
)
EXTRA_COLUMNS = ("handover_arrival_rate",)
CI_COLUMNS = ("p_block_ci", "p_drop_ci")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 1, 2


@dataclass(frozen=True)
class OutputOptions:
    csv: str | None = None
    trace: str | None = None
    new_reject_scope: RejectScope = RejectScope.ANY
    forced_termination: ForcedTerminationMode = ForcedTerminationMode.DROPPED
    extra_columns: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams
    sweep: tuple[float, ...]
    schemes: tuple[SchemeSpec, ...]
    sim: dict | None = None
    output: OutputOptions = field(default_factory=OutputOptions)

    def sim_config(self, lambda_n: float, seed: int | None = None) -> sim.SimConfig:
        opts = dict(self.sim)
        if seed is not None:
            opts["seed"] = seed
        return sim.SimConfig(lambda_n=lambda_n, reject_scope=self.output.new_reject_scope,
                             **opts)


# -- parsing -----------------------------------------------------------------

_SCHEMA = {
    "system": {"capacity", "dwell_mean", "duration_mean", "classes"},
    "class": {"name", "realtime", "beta_r", "gamma_n", "gamma_h", "mix", "duration_mean"},
    "sweep": {"lambda_n", "start", "stop", "steps"},
    "schemes": {"kinds", "guard_fraction"},
    "sim": {"horizon", "warmup", "replications", "seed", "transit_mean"},
    "output": {"csv", "trace", "new_reject_scope", "forced_termination", "extra_columns"},
}


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def unknown(self, table, allowed, where):
        if not isinstance(table, dict):
            self.errors.append(f"{where}: expected a table")
            return {}
        for key in table:
            if key not in allowed:
                self.errors.append(f"{where}.{key}: unknown key")
        return table

    def number(self, table, key, where, default=None, kind=float):
        if key not in table:
            if default is None:
                self.errors.append(f"{where}.{key}: required")
            return default
        value = table[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.errors.append(f"{where}.{key}: expected a number, got {value!r}")
            return default
        if kind is int and int(value) != value:
            self.errors.append(f"{where}.{key}: expected an integer, got {value!r}")
            return default
        return kind(value)

    def choice(self, table, key, where, enum_cls, default):
        value = table.get(key, default.value)
        try:
            return enum_cls(value)
        except ValueError:
            options = ", ".join(e.value for e in enum_cls)
            self.errors.append(f"{where}.{key}: {value!r} is not one of {options}")
            return default


def _parse_classes(c: _Collector, raw, duration_default):
    if not isinstance(raw, list) or not raw:
        c.errors.append("system.classes: at least one [[system.classes]] entry required")
        return []
    parsed = []
    for k, entry in enumerate(raw):
        where = f"system.classes[{k}]"
        entry = c.unknown(entry, _SCHEMA["class"], where)
        name = entry.get("name", f"class{k}")
        realtime = entry.get("realtime", False)
        if not isinstance(realtime, bool):
            c.errors.append(f"{where}.realtime: expected true/false, got {realtime!r}")
            realtime = False
        fields_ = SimpleNamespace(
            name=str(name),
            realtime=realtime,
            beta_r=c.number(entry, "beta_r", where, default=math.nan),
            gamma_n=c.number(entry, "gamma_n", where, default=0.0),
            gamma_h=c.number(entry, "gamma_h", where, default=0.0),
            mix=c.number(entry, "mix", where, default=math.nan),
            duration_mean=c.number(entry, "duration_mean", where, default=duration_default),
        )
        for problem in class_violations(fields_):
            c.errors.append(f"{where} ({fields_.name}): {problem}")
        parsed.append(fields_)
    return parsed


def _parse_sweep(c: _Collector, raw) -> tuple[float, ...]:
    raw = c.unknown(raw, _SCHEMA["sweep"], "sweep")
    if "lambda_n" in raw:
        if any(k in raw for k in ("start", "stop", "steps")):
            c.errors.append("sweep: give either lambda_n or start/stop/steps, not both")
        values = raw["lambda_n"]
        if not isinstance(values, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
        ):
            c.errors.append("sweep.lambda_n: expected a list of numbers")
            return ()
        values = [float(v) for v in values]
    else:
        start = c.number(raw, "start", "sweep")
        stop = c.number(raw, "stop", "sweep")
        steps = c.number(raw, "steps", "sweep", kind=int)
        if None in (start, stop, steps):
            return ()
        if steps < 1:
            c.errors.append(f"sweep.steps: must be >= 1, got {steps}")
            return ()
        values = [round(float(v), 12) for v in np.linspace(start, stop, steps)]
    if not values:
        c.errors.append("sweep: at least one load is required")
    if any(not v > 0 for v in values):
        c.errors.append("sweep: every lambda_n must be positive")
    if any(b <= a for a, b in zip(values, values[1:])):
        c.errors.append("sweep: lambda_n values must be strictly increasing")
    return tuple(values)


def _parse_schemes(c: _Collector, raw) -> tuple[SchemeSpec, ...]:
    raw = c.unknown(raw, _SCHEMA["schemes"], "schemes")
    kinds = raw.get("kinds", [k.value for k in SchemeKind])
    guard = c.number(raw, "guard_fraction", "schemes", default=0.05)
    if not isinstance(kinds, list) or not kinds:
        c.errors.append("schemes.kinds: at least one scheme is required")
        return ()
    if guard is not None and not 0.0 <= guard < 1.0:
        c.errors.append(f"schemes.guard_fraction: must lie in [0, 1), got {guard}")
        guard = 0.05
    out = []
    for k in kinds:
        try:
            kind = SchemeKind(k)
        except ValueError:
            options = ", ".join(e.value for e in SchemeKind)
            c.errors.append(f"schemes.kinds: {k!r} is not one of {options}")
            continue
        spec = SchemeSpec(kind, guard)
        if spec in out:
            c.errors.append(f"schemes.kinds: {k!r} listed twice")
            continue
        out.append(spec)
    return tuple(out)


def _parse_sim(c: _Collector, raw) -> dict:
    raw = c.unknown(raw, _SCHEMA["sim"], "sim")
    out = {}
    for key, kind in (("horizon", float), ("warmup", float), ("replications", int),
                      ("seed", int), ("transit_mean", float)):
        if key in raw:
            out[key] = c.number(raw, key, "sim", kind=kind)
    try:
        sim.SimConfig(lambda_n=1.0, **out)
    except (ValueError, TypeError) as exc:
        c.errors.append(f"sim: {exc}")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate TOML text; raises :class:`ConfigError` listing every violation."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"not valid TOML: {exc}") from exc
    c = _Collector()
    c.unknown(doc, set(_SCHEMA) - {"class"}, "<root>")
    system = c.unknown(doc.get("system", {}), _SCHEMA["system"], "system")
    if "system" not in doc:
        c.errors.append("system: section required")
    duration = c.number(system, "duration_mean", "system", default=120.0)
    capacity = c.number(system, "capacity", "system")
    dwell = c.number(system, "dwell_mean", "system", default=240.0)
    classes = _parse_classes(c, system.get("classes"), duration)
    if classes and capacity is not None and dwell is not None:
        usable = [k for k in classes if not math.isnan(k.beta_r) and not math.isnan(k.mix)]
        if len(usable) == len(classes):
            for problem in system_violations(capacity, classes, dwell):
                c.errors.append(f"system: {problem}")
    if "sweep" not in doc:
        c.errors.append("sweep: section required")
    sweep = _parse_sweep(c, doc.get("sweep", {}))
    schemes = _parse_schemes(c, doc.get("schemes", {}))
    sim_opts = _parse_sim(c, doc["sim"]) if "sim" in doc else None
    out_raw = c.unknown(doc.get("output", {}), _SCHEMA["output"], "output")
    extra = out_raw.get("extra_columns", False)
    if not isinstance(extra, bool):
        c.errors.append(f"output.extra_columns: expected true/false, got {extra!r}")
    for key in ("csv", "trace"):
        if key in out_raw and not isinstance(out_raw[key], str):
            c.errors.append(f"output.{key}: expected a path string")
    output = OutputOptions(
        csv=out_raw.get("csv"),
        trace=out_raw.get("trace"),
        new_reject_scope=c.choice(out_raw, "new_reject_scope", "output", RejectScope,
                                  RejectScope.ANY),
        forced_termination=c.choice(out_raw, "forced_termination", "output",
                                    ForcedTerminationMode, ForcedTerminationMode.DROPPED),
        extra_columns=bool(extra),
    )
    if c.errors:
        raise ConfigError(c.errors)
    params = SystemParams(
        capacity,
        tuple(TrafficClass(**vars(k)) for k in classes),
        dwell,
    )
    return ExperimentConfig(params, sweep, schemes, sim_opts, output)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        text = resources.files("adaptcac").joinpath("data/reference.toml").read_text()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
    return parse_config(text)


# -- orchestration -----------------------------------------------------------

def format_value(value) -> str:
    if value is None:
        return ""
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if value == 0:
            return "0"
        return format(value, ".10g")
    return str(value)


def csv_columns(cfg: ExperimentConfig, with_sim: bool) -> tuple[str, ...]:
    cols = BASE_COLUMNS
    if cfg.output.extra_columns:
        cols += EXTRA_COLUMNS
    if with_sim:
        cols += CI_COLUMNS
    return cols


def write_csv(rows: Sequence[KpiRow], columns: Sequence[str], stream) -> None:
    stream.write(",".join(columns) + "\n")
    ordered = sorted(rows, key=lambda r: (r.scheme, r.lambda_n, r.source.value))
    for row in ordered:
        stream.write(",".join(format_value(getattr(row, col)) for col in columns) + "\n")
    stream.flush()


def _simulate_cell(cfg: ExperimentConfig, scheme: SchemeSpec, lambda_n: float,
                   seed: int | None, want_trace: bool):
    lines: list[str] | None = [] if want_trace else None
    report = sim.run(cfg.system, scheme, cfg.sim_config(lambda_n, seed),
                     trace=lines.append if want_trace else None)
    return report, lines


def run_experiment(cfg: ExperimentConfig, out, *, simulate: bool = False,
                   trace=None, seed: int | None = None, jobs: int = 1) -> int:
    """Evaluate every (scheme, load) cell and write the CSV to ``out``.

    ``out`` and ``trace`` are text streams. Returns the process exit code.
    """
    rows: list[KpiRow] = []
    solutions = []
    status = EXIT_OK
    ft_mode = cfg.output.forced_termination
    for scheme in cfg.schemes:
        for lam in cfg.sweep:
            try:
                solution = solve_fixed_point(lam, cfg.system, scheme)
            except ConvergenceError as exc:
                log.error("%s at lambda_n=%s: %s", scheme.name, lam, exc)
                status = EXIT_CONVERGENCE
                break
            solutions.append(solution)
            rows.append(analytical_row(solution, cfg.system, ft_mode))
        if status != EXIT_OK:
            break
    if simulate and status == EXIT_OK:
        tasks = [(cfg, s.scheme, s.lambda_n, seed, trace is not None) for s in solutions]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_simulate_cell, *zip(*tasks)))
        else:
            results = [_simulate_cell(*t) for t in tasks]
        for solution, (report, lines) in zip(solutions, results):
            rows.append(simulated_row(report, solution, ft_mode))
            if trace is not None:
                trace.write(f"# scheme={solution.scheme.name} lambda_n="
                            f"{format_value(solution.lambda_n)} replication=0\n")
                trace.write("\n".join(lines) + ("\n" if lines else ""))
    write_csv(rows, csv_columns(cfg, simulate), out)
    return status


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptcac",
        description="Compare adaptive-bandwidth admission control schemes over a load sweep.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("analyze", "analytical model only"),
                        ("simulate", "analytical model plus simulation"),
                        ("validate", "check the configuration and exit")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="TOML scenario (default: bundled reference)")
        if name != "validate":
            p.add_argument("--out", help="CSV path, '-' for stdout (overrides output.csv)")
            p.add_argument("--trace", help="event trace path (simulate only)")
            p.add_argument("--seed", type=int, help="override sim.seed")
            p.add_argument("--jobs", type=int, default=1,
                           help="worker processes for simulation cells")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: {cfg.system.n_classes} classes, {len(cfg.sweep)} loads, "
              f"{len(cfg.schemes)} schemes")
        return EXIT_OK
    simulate = args.command == "simulate"
    if simulate and cfg.sim is None:
        print("config error: sim: section required for 'simulate'", file=sys.stderr)
        return EXIT_CONFIG
    out_path = args.out if args.out is not None else cfg.output.csv
    trace_path = args.trace if args.trace is not None else cfg.output.trace
    out, close_out = _open_out(out_path)
    trace = open(trace_path, "w", encoding="utf-8", newline="\n") if (
        simulate and trace_path) else None
    try:
        return run_experiment(cfg, out, simulate=simulate, trace=trace,
                              seed=args.seed, jobs=args.jobs)
    except BrokenPipeError:
        # downstream reader (e.g. head) went away; silence the interpreter's flush
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_OK
    finally:
        if close_out:
            out.close()
        if trace is not None:
            trace.close()


if __name__ == "__main__":
    sys.exit(main())
