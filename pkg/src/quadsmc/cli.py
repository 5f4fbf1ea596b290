"""Command-line entry point and scenario-file parsing.

Scenario files are TOML documents (shipped with a .cfg extension).  A
single-run document holds the scenario keys directly; a batch document
sets kind = "batch", puts the shared scenario under [base] and lists
[[runs]] entries that override the controller block per run.  Angular
quantities (reference targets, initial angles/rates) are given in degrees
by default (`units = "radians"` switches them); controller and physical
parameters are SI.

Commands:

    quadsmc run <scenario.cfg|name> [--out DIR] [--decimate K]
            [--format csv|json] [--fault-policy abort|flag] [--check]
    quadsmc batch <list.cfg> [--out DIR] [--workers N] [...]

`run --check` executes the four canonical studies and compares their
metrics against the committed acceptance ranges.  Canonical scenarios may
be referenced by bare name (nominal, disturbance, variation, comparison).
The default output root is ./quadsmc-out, overridable with the
QUADSMC_OUT environment variable.

Exit codes: 0 success, 1 fault-aborted run or failed check, 2 bad
configuration.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .analysis import chattering_index, lyapunov_monitor, step_metrics
from .controllers import AdaptiveGainState, PidGains, SurfaceGains
from .dynamics import EulerAngles, BodyRates, InertiaMatrix, QuadParams
from .simulation import (
    AXES,
    AqcsmSpec,
    DisturbancePulse,
    PidSpec,
    ReferenceStep,
    Scenario,
    SimTrace,
    SmcSpec,
    apply_variation,
    calibrated_adaptation,
    run_scenario,
)
from .traceio import write_metrics, write_trace_csv

__all__ = [
    "ParseError",
    "ValidationError",
    "RunConfig",
    "parse_scenario",
    "parse_batch",
    "canonical_scenario_path",
    "run",
    "main",
]

DEFAULT_OUT = "quadsmc-out"
OUT_ENV_VAR = "QUADSMC_OUT"
CANONICAL = ("nominal", "disturbance", "variation", "comparison")


class ParseError(ValueError):
    """Scenario document is not well-formed."""


class ValidationError(ValueError):
    """Scenario document is well-formed but violates an invariant."""


@dataclass
class RunConfig:
    """One CLI invocation's worth of settings."""

    scenario: str | Path | None
    out_dir: Path
    decimate: int = 1
    fmt: str = "csv"
    fault_policy: str = "abort"
    check: bool = False
    workers: int = 1
    seed: int | None = None  # reserved; the core is deterministic

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        if self.decimate < 1:
            raise ValidationError("decimation factor must be >= 1")
        if self.fmt not in ("csv", "json"):
            raise ValidationError(f"unknown report format {self.fmt!r}")
        if self.fault_policy not in ("abort", "flag"):
            raise ValidationError(f"unknown fault policy {self.fault_policy!r}")


def canonical_scenario_path(name: str) -> Path:
    """Path of a packaged canonical scenario ('nominal', 'nominal.cfg', ...)."""
    stem = name[:-4] if name.endswith(".cfg") else name
    if stem not in CANONICAL:
        raise ValidationError(f"unknown canonical scenario {name!r}")
    return Path(str(resources.files("quadsmc").joinpath("scenarios", f"{stem}.cfg")))


def _resolve_scenario_file(token: str | Path) -> Path:
    path = Path(token)
    if path.exists():
        return path
    stem = path.name[:-4] if path.name.endswith(".cfg") else path.name
    if path.parent == Path(".") and stem in CANONICAL:
        return canonical_scenario_path(stem)
    raise ValidationError(f"scenario file not found: {token}")


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ValidationError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _angle(value: float, units: str) -> float:
    return math.radians(value) if units == "degrees" else float(value)


def _vector(value, name: str, n: int = 3) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ValidationError(f"{name} must be a scalar or length-{n} list")
    return arr


def _parse_params(table: dict) -> QuadParams:
    allowed = {
        "mass", "arm_length", "gravity", "inertia", "drag_factor",
        "torque_scale", "k_aero", "rotor_inertia", "rate_cap",
        "payload_mass", "delta_inertia",
    }
    _reject_unknown(table, allowed, "[params]")
    kwargs = {}
    if "mass" in table:
        kwargs["m"] = float(table["mass"])
    if "arm_length" in table:
        kwargs["l"] = float(table["arm_length"])
    if "gravity" in table:
        kwargs["g"] = float(table["gravity"])
    if "inertia" in table:
        diag = _vector(table["inertia"], "params.inertia")
        kwargs["inertia"] = InertiaMatrix.from_diagonal(*diag)
    if "drag_factor" in table:
        kwargs["b"] = float(table["drag_factor"])
    if "torque_scale" in table:
        kwargs["c"] = float(table["torque_scale"])
    if "k_aero" in table:
        kwargs["k_a"] = _vector(table["k_aero"], "params.k_aero")
    if "rotor_inertia" in table:
        kwargs["I_r"] = float(table["rotor_inertia"])
    if "rate_cap" in table:
        kwargs["rate_cap"] = float(table["rate_cap"])
    try:
        params = QuadParams(**kwargs)
        payload = float(table.get("payload_mass", 0.0))
        delta = table.get("delta_inertia")
        if payload or delta is not None:
            delta_m = np.zeros((3, 3)) if delta is None else np.asarray(delta, float)
            if delta_m.shape != (3, 3):
                raise ValidationError("params.delta_inertia must be a 3x3 matrix")
            params = apply_variation(params, payload, delta_m)
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(f"invalid [params]: {exc}") from exc
    return params


def _parse_surface(table: dict) -> SurfaceGains:
    lam = _vector(table["lambda"], "controller.lambda") if "lambda" in table else None
    return SurfaceGains(*lam) if lam is not None else SurfaceGains()


def _parse_controller(table: dict):
    if "kind" not in table:
        raise ValidationError("[controller] requires a 'kind' key")
    kind = table["kind"]
    if kind == "aqcsm":
        allowed = {
            "kind", "lambda", "alpha0", "omega_bar", "epsilon", "eta",
            "alpha_min", "alpha_max", "dead_band_decay", "u_max", "delta",
            "rate_source",
        }
        _reject_unknown(table, allowed, "[controller] (aqcsm)")
        base = calibrated_adaptation()
        alpha0 = float(table.get("alpha0", base.alpha_0))
        try:
            adaptation = AdaptiveGainState(
                alpha=np.full(3, alpha0),
                alpha_0=alpha0,
                omega_bar=_vector(table.get("omega_bar", base.omega_bar), "omega_bar"),
                epsilon=_vector(table.get("epsilon", base.epsilon), "epsilon"),
                eta=_vector(table.get("eta", base.eta), "eta"),
                alpha_m=_vector(table.get("alpha_min", base.alpha_m), "alpha_min"),
                alpha_max=float(table.get("alpha_max", table.get("u_max", 5.0))),
                dead_band_decay=table.get("dead_band_decay", base.dead_band_decay),
            )
            return AqcsmSpec(
                surface=_parse_surface(table),
                adaptation=adaptation,
                u_max=float(table.get("u_max", 5.0)),
                delta=float(table.get("delta", 0.35)),
                rate_source=table.get("rate_source", "euler"),
            )
        except ValueError as exc:
            raise ValidationError(f"invalid [controller]: {exc}") from exc
    if kind == "smc":
        allowed = {"kind", "lambda", "alpha", "u_max"}
        _reject_unknown(table, allowed, "[controller] (smc)")
        return SmcSpec(
            surface=_parse_surface(table),
            alpha=_vector(table.get("alpha", 1.24), "controller.alpha"),
            u_max=float(table.get("u_max", 5.0)),
        )
    if kind == "pid":
        allowed = {"kind", "kp", "ki", "kd", "integral_limit", "u_max"}
        _reject_unknown(table, allowed, "[controller] (pid)")
        defaults = PidGains()
        gains = PidGains(
            kp=_vector(table.get("kp", defaults.kp), "controller.kp"),
            ki=_vector(table.get("ki", defaults.ki), "controller.ki"),
            kd=_vector(table.get("kd", defaults.kd), "controller.kd"),
            integral_limit=float(table.get("integral_limit", defaults.integral_limit)),
        )
        return PidSpec(gains=gains, u_max=float(table.get("u_max", 5.0)))
    raise ValidationError(f"unknown controller kind {kind!r}")


_SCENARIO_KEYS = {
    "kind", "name", "duration", "dt_plant", "dt_control", "units",
    "plant_mode", "ref_tau", "initial_angles", "initial_rates",
    "rotor_speeds", "reference", "disturbance", "params", "controller",
}


def _scenario_from_table(doc: dict, default_name: str = "") -> Scenario:
    _reject_unknown(doc, _SCENARIO_KEYS, "scenario document")
    units = doc.get("units", "degrees")
    if units not in ("degrees", "radians"):
        raise ValidationError(f"units must be 'degrees' or 'radians', got {units!r}")

    schedule = []
    for i, ev in enumerate(doc.get("reference", [])):
        _reject_unknown(ev, {"time", "axis", "target"}, f"[[reference]] #{i + 1}")
        try:
            schedule.append(
                ReferenceStep(
                    float(ev["time"]), ev["axis"], _angle(float(ev["target"]), units)
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"invalid [[reference]] #{i + 1}: {exc}") from exc

    pulses = []
    for i, seg in enumerate(doc.get("disturbance", [])):
        _reject_unknown(seg, {"start", "end", "torque"}, f"[[disturbance]] #{i + 1}")
        try:
            pulses.append(
                DisturbancePulse(
                    float(seg["start"]),
                    float(seg["end"]),
                    _vector(seg["torque"], "disturbance.torque"),
                )
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"invalid [[disturbance]] #{i + 1}: {exc}") from exc

    init_angles = [
        _angle(v, units) for v in _vector(doc.get("initial_angles", [0, 0, 0]),
                                          "initial_angles")
    ]
    init_rates = [
        _angle(v, units) for v in _vector(doc.get("initial_rates", [0, 0, 0]),
                                          "initial_rates")
    ]
    ref_tau = doc.get("ref_tau")
    try:
        return Scenario(
            duration=float(doc.get("duration", 5.0)),
            dt_plant=float(doc.get("dt_plant", 1e-3)),
            dt_control=float(doc.get("dt_control", 1e-3)),
            reference_schedule=schedule,
            disturbance_schedule=pulses,
            params=_parse_params(doc.get("params", {})),
            controller=_parse_controller(doc.get("controller", {"kind": "aqcsm"})),
            initial_angles=EulerAngles(*init_angles),
            initial_rates=BodyRates(*init_rates),
            plant_mode=doc.get("plant_mode", "control-form"),
            rotor_speeds=_vector(doc.get("rotor_speeds", np.zeros(4)),
                                 "rotor_speeds", n=4),
            ref_tau=float(ref_tau) if ref_tau is not None else None,
            name=doc.get("name", default_name),
        )
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _load_toml(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"malformed scenario document: {exc}") from exc


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a single-run scenario document."""
    doc = _load_toml(text)
    if doc.get("kind", "scenario") == "batch":
        raise ValidationError("batch document: use parse_batch / the batch command")
    return _scenario_from_table(doc)


def parse_batch(text: str) -> list[tuple[str, Scenario]]:
    """Parse a batch document into named scenarios (shared base, per-run overrides)."""
    doc = _load_toml(text)
    if doc.get("kind") != "batch":
        raise ValidationError("not a batch document (kind != 'batch')")
    _reject_unknown(doc, {"kind", "name", "base", "runs"}, "batch document")
    base = doc.get("base")
    if base is None:
        raise ValidationError("batch document requires a [base] scenario")
    runs = doc.get("runs", [])
    if not runs:
        raise ValidationError("batch document requires at least one [[runs]] entry")
    out = []
    for i, entry in enumerate(runs):
        _reject_unknown(entry, {"name", "controller"}, f"[[runs]] #{i + 1}")
        name = entry.get("name", f"run{i + 1}")
        merged = dict(base)
        if "controller" in entry:
            merged["controller"] = entry["controller"]
        merged["name"] = name
        out.append((name, _scenario_from_table(merged, default_name=name)))
    return out


def _is_batch(text: str) -> bool:
    return _load_toml(text).get("kind") == "batch"


def _steady_window(trace: SimTrace) -> tuple[float, float]:
    """Final second of the run (the steady-state chattering window)."""
    end = float(trace.time[-1])
    return max(float(trace.time[0]), end - 1.0), end


def trace_metrics(trace: SimTrace) -> dict:
    """Per-axis metrics report for one trace."""
    report: dict = {axis: {} for axis in AXES}
    for event in trace.meta.reference_events:
        m = step_metrics(trace, event)
        report[m.axis].update(
            settling_time=m.settling_time,
            overshoot=m.overshoot,
            steady_state_error=m.steady_state_error,
            peak_control=m.peak_control,
        )
    if len(trace) > 1:
        tv = chattering_index(trace, _steady_window(trace))
        for i, axis in enumerate(AXES):
            report[axis]["chattering_index"] = float(tv[i])
    _, violations = lyapunov_monitor(trace)
    report["run"] = {
        "fault": trace.fault_code or None,
        "fault_time": trace.fault_time,
        "lyapunov_violations": len(violations),
        "controller": trace.meta.controller,
        "rows": len(trace),
    }
    return report


def _execute_one(
    scenario: Scenario, cfg: RunConfig, out_dir: Path
) -> tuple[SimTrace, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    trace = run_scenario(scenario, fault_policy=cfg.fault_policy)
    write_trace_csv(trace, out_dir / "trace.csv", cfg.decimate)
    write_metrics(
        trace_metrics(trace), out_dir / f"metrics.{cfg.fmt}", cfg.fmt
    )
    return trace, out_dir


def _run_batch_entry(args):
    name, scenario, cfg, out_dir = args
    trace, _ = _execute_one(scenario, cfg, out_dir)
    return name, trace.fault_code if trace.aborted else ""


def run(cfg: RunConfig) -> int:
    """Execute a run configuration; returns the process exit status."""
    if cfg.check:
        from .checks import run_acceptance

        results = run_acceptance(verbose=True)
        return 0 if all(r.passed for r in results) else 1

    if cfg.scenario is None:
        print("error: no scenario given", file=sys.stderr)
        return 2
    try:
        path = _resolve_scenario_file(cfg.scenario)
        text = path.read_text()
        if _is_batch(text):
            entries = parse_batch(text)
            jobs = [
                (name, scn, cfg, cfg.out_dir / name) for name, scn in entries
            ]
            if cfg.workers > 1:
                with concurrent.futures.ProcessPoolExecutor(cfg.workers) as pool:
                    outcomes = list(pool.map(_run_batch_entry, jobs))
            else:
                outcomes = [_run_batch_entry(job) for job in jobs]
            faults = [name for name, fault in outcomes if fault]
            for name, fault in outcomes:
                print(f"{name}: {'fault ' + fault if fault else 'ok'}")
            return 1 if faults else 0
        scenario = parse_scenario(text)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    trace, out_dir = _execute_one(scenario, cfg, cfg.out_dir)
    print(f"wrote {out_dir / 'trace.csv'} ({len(trace)} rows)")
    if trace.aborted:
        print(
            f"run aborted by fault {trace.fault_code!r} at t={trace.fault_time}",
            file=sys.stderr,
        )
        return 1
    return 0


def _default_out() -> str:
    return os.environ.get(OUT_ENV_VAR, DEFAULT_OUT)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="quadsmc",
        description="Quadrotor attitude-control simulation studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=_default_out(), help="output directory")
        p.add_argument("--decimate", type=int, default=1,
                       help="keep every k-th trace sample")
        p.add_argument("--format", choices=("csv", "json"), default="csv",
                       dest="fmt", help="metrics report format")
        p.add_argument("--fault-policy", choices=("abort", "flag"),
                       default="abort", help="behaviour on plant faults")

    p_run = sub.add_parser("run", help="run one scenario file (or canonical name)")
    p_run.add_argument("scenario", nargs="?", help="scenario file or canonical name")
    add_common(p_run)
    p_run.add_argument("--check", action="store_true",
                       help="run the acceptance studies instead")

    p_batch = sub.add_parser("batch", help="run a batch document")
    p_batch.add_argument("scenario", help="batch file (kind = 'batch')")
    add_common(p_batch)
    p_batch.add_argument("--workers", type=int, default=1,
                         help="concurrent scenario workers")

    args = parser.parse_args(argv)
    try:
        cfg = RunConfig(
            scenario=getattr(args, "scenario", None),
            out_dir=Path(args.out),
            decimate=args.decimate,
            fmt=args.fmt,
            fault_policy=args.fault_policy,
            check=getattr(args, "check", False),
            workers=getattr(args, "workers", 1),
        )
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "batch":
        try:
            if not _is_batch(Path(_resolve_scenario_file(cfg.scenario)).read_text()):
                print("error: not a batch document", file=sys.stderr)
                return 2
        except (ParseError, ValidationError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
