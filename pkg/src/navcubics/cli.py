"""Command-line interface: scenario ingestion, batch solving, parameter
sweeps, and bit-stable artifact emission.

Subcommands:

    solve <scenario.json> [-o traj.csv] [--report report.json]
    check <scenario.json> <traj.csv>
    sweep <scenario.json> --param <sigma|tau> --values <list> --out-dir <dir>

Exit status: 0 success, 1 solver failure, 2 validation or parse error.
Identical scenario and seed produce byte-identical CSV and report files; the
wall time of a run is printed to the console and deliberately kept out of
the report file.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NavcubicsError, SolveFailureError, ValidationError
from .geometry import wrap_angle
from .solver import (
    Scenario,
    Trajectory,
    evaluate_functional,
    solve_scenario,
)

__all__ = ["main", "parse_scenario", "RunReport", "write_trajectory_csv", "load_trajectory_csv"]

_SCENARIO_KEYS = {
    "manifold": str,
    "dim": int,
    "p0": list,
    "v0": list,
    "pT": list,
    "vT": list,
    "T": (int, float),
    "m": (int, float),
    "J": (int, float),
    "sigma": (int, float),
    "tau": (int, float),
    "cutoff_radius": (int, float, type(None)),
    "constraints": str,
    "steps": int,
    "integrator_order": int,
    "newton_tol": (int, float),
    "max_iterations": int,
    "continuation_steps": int,
    "guard": (int, float),
    "seed": int,
    "variations": int,
}
_REQUIRED_KEYS = ("manifold", "p0", "v0", "pT", "vT", "T")

CHECK_TOLERANCE = 1e-9


@dataclass
class RunReport:
    """Solve outcome: scenario echo, convergence data and all residual
    diagnostics.  ``wall_time_s`` is console-only; the serialised report
    omits it so identical runs produce identical bytes."""

    scenario: dict
    converged: bool
    newton_iterations: int
    j_value: Optional[float]
    boundary_residual: Optional[float]
    max_constraint_violation: Optional[float]
    min_obstacle_clearance: Optional[float]
    first_integral_drift: Optional[float]
    first_variation_residual: Optional[float]
    homotopy_stages: int = 1
    tension_sign_convention: Optional[str] = None
    failure: Optional[str] = None
    wall_time_s: float = 0.0

    def to_json(self) -> str:
        payload = {
            "scenario": self.scenario,
            "converged": self.converged,
            "newton_iterations": self.newton_iterations,
            "j_value": self.j_value,
            "boundary_residual": self.boundary_residual,
            "max_constraint_violation": self.max_constraint_violation,
            "min_obstacle_clearance": self.min_obstacle_clearance,
            "first_integral_drift": self.first_integral_drift,
            "first_variation_residual": self.first_variation_residual,
            "homotopy_stages": self.homotopy_stages,
        }
        if self.tension_sign_convention is not None:
            payload["tension_sign_convention"] = self.tension_sign_convention
        if self.failure is not None:
            payload["failure"] = self.failure
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def parse_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file.

    Unknown fields are rejected so that a typo cannot silently change the
    physics; all validation failures raise ValidationError.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError("cannot read scenario file %s: %s" % (path, exc))
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("malformed scenario JSON in %s: %s" % (path, exc))
    if not isinstance(raw, dict):
        raise ValidationError("scenario file must contain a JSON object")
    unknown = sorted(set(raw) - set(_SCENARIO_KEYS))
    if unknown:
        raise ValidationError("unknown scenario fields: %s" % ", ".join(unknown))
    missing = [k for k in _REQUIRED_KEYS if k not in raw]
    if missing:
        raise ValidationError("missing scenario fields: %s" % ", ".join(missing))
    for key, types in _SCENARIO_KEYS.items():
        if key in raw and not isinstance(raw[key], types):
            raise ValidationError("scenario field %r has the wrong type" % key)
    kwargs = dict(raw)
    if "J" in kwargs:
        kwargs["inertia"] = kwargs.pop("J")
    try:
        scen = Scenario(**kwargs)
        scen.validate()
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc))
    return scen


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    return "%.17g" % value


def csv_header(scen: Scenario):
    model = scen.model()
    cols = ["t"]
    cols += list(model.coord_names)
    cols += ["d%s" % name for name in model.coord_names]
    cols += ["accel_norm", "nav_value", "constraint_residual", "lambda"]
    return cols


def write_trajectory_csv(path, traj: Trajectory, scen: Scenario):
    """Write the trajectory table; angle coordinates are wrapped to
    (-pi, pi] here and only here."""
    model = scen.model()
    x_out = np.array(traj.x, copy=True)
    for idx in model.angle_coords:
        x_out[:, idx] = wrap_angle(x_out[:, idx])
    lines = [",".join(csv_header(scen))]
    for i in range(len(traj.t)):
        row = [_fmt(traj.t[i])]
        row += [_fmt(v) for v in x_out[i]]
        row += [_fmt(v) for v in traj.u[i]]
        row.append(_fmt(traj.accel_norm[i]))
        row.append(_fmt(traj.nav_value[i]))
        row.append(_fmt(traj.constraint[i, 0]) if traj.constraint is not None else "")
        row.append(_fmt(traj.lam[i, 0]) if traj.lam is not None else "")
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_trajectory_csv(path, scen: Scenario) -> Trajectory:
    """Read a trajectory table back; raises ValidationError on malformed or
    mismatched files."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError("cannot read trajectory file %s: %s" % (path, exc))
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError("trajectory file %s is empty" % path)
    header = lines[0].split(",")
    expected = csv_header(scen)
    if header != expected:
        raise ValidationError(
            "trajectory header %r does not match scenario chart %r" % (header, expected)
        )
    d = scen.model().dim
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(expected):
            raise ValidationError("malformed trajectory row: %r" % ln)
        rows.append(parts)
    if len(rows) < 2:
        raise ValidationError("trajectory needs at least two samples")

    def col(idx):
        try:
            return np.array([float(r[idx]) for r in rows])
        except ValueError:
            raise ValidationError("non-numeric value in trajectory column %d" % idx)

    t = col(0)
    x = np.stack([col(1 + k) for k in range(d)], axis=1)
    u = np.stack([col(1 + d + k) for k in range(d)], axis=1)
    accel = col(1 + 2 * d)
    navv = col(2 + 2 * d)
    has_constraint = rows[0][3 + 2 * d] != ""
    constraint = col(3 + 2 * d)[:, None] if has_constraint else None
    lam = col(4 + 2 * d)[:, None] if rows[0][4 + 2 * d] != "" else None
    if np.any(np.diff(t) <= 0):
        raise ValidationError("trajectory time grid is not strictly increasing")
    return Trajectory(
        t=t, x=x, u=u, accel_norm=accel, nav_value=navv,
        constraint=constraint, lam=lam,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _report_from_trajectory(traj: Trajectory, scen: Scenario, wall: float) -> RunReport:
    diag = traj.diagnostics
    return RunReport(
        scenario=scen.to_dict(),
        converged=bool(diag.get("converged", False)),
        newton_iterations=int(diag.get("newton_iterations", 0)),
        j_value=diag.get("j_value"),
        boundary_residual=diag.get("boundary_residual"),
        max_constraint_violation=diag.get("max_constraint_violation"),
        min_obstacle_clearance=diag.get("min_obstacle_clearance"),
        first_integral_drift=diag.get("first_integral_drift"),
        first_variation_residual=diag.get("first_variation_residual"),
        homotopy_stages=int(diag.get("homotopy_stages", 1)),
        tension_sign_convention=diag.get("tension_sign_convention"),
        wall_time_s=wall,
    )


def _solve_one(scen: Scenario, csv_path, report_path, warm_start=None):
    """Shared by solve and sweep; returns (exit_code, trajectory or None)."""
    start = time.perf_counter()
    try:
        traj = solve_scenario(scen, warm_start=warm_start)
    except SolveFailureError as exc:
        wall = time.perf_counter() - start
        report = RunReport(
            scenario=scen.to_dict(), converged=False,
            newton_iterations=0, j_value=None, boundary_residual=None,
            max_constraint_violation=None, min_obstacle_clearance=None,
            first_integral_drift=None, first_variation_residual=None,
            homotopy_stages=int(exc.diagnostics.get("homotopy_stages", 1)),
            failure=str(exc), wall_time_s=wall,
        )
        if report_path:
            Path(report_path).write_text(report.to_json())
        print("solve FAILED: %s (%.2fs)" % (exc, wall), file=sys.stderr)
        return 1, None
    wall = time.perf_counter() - start
    report = _report_from_trajectory(traj, scen, wall)
    if csv_path:
        write_trajectory_csv(csv_path, traj, scen)
    if report_path:
        Path(report_path).write_text(report.to_json())
    status = "converged" if report.converged else "NOT converged"
    print(
        "solve %s: J=%s boundary_residual=%s iterations=%d wall=%.2fs"
        % (status, report.j_value, report.boundary_residual,
           report.newton_iterations, wall)
    )
    return (0 if report.converged else 1), traj


def cmd_solve(args) -> int:
    scen = parse_scenario(args.scenario)
    stem = Path(args.scenario).stem
    csv_path = args.output or ("%s.traj.csv" % stem)
    report_path = args.report or ("%s.report.json" % stem)
    code, _ = _solve_one(scen, csv_path, report_path)
    return code


def _angle_aware_residual(model, a, b):
    diff = np.abs(np.asarray(a) - np.asarray(b))
    for idx in model.angle_coords:
        diff[idx] = abs(float(wrap_angle(a[idx] - b[idx])))
    return float(np.max(diff))


def cmd_check(args) -> int:
    scen = parse_scenario(args.scenario)
    traj = load_trajectory_csv(args.trajectory, scen)
    model = scen.model()
    nav = scen.nav_field()

    boundary = max(
        _angle_aware_residual(model, traj.x[0], scen.p0),
        float(np.max(np.abs(traj.u[0] - scen.v0))),
        _angle_aware_residual(model, traj.x[-1], scen.pT),
        float(np.max(np.abs(traj.u[-1] - scen.vT))),
    )
    problems = []
    if boundary > max(CHECK_TOLERANCE, 100.0 * scen.newton_tol):
        problems.append("boundary residual %g exceeds tolerance" % boundary)

    nav_recomputed = nav.value(traj.x) if nav is not None else np.zeros(len(traj.t))
    nav_mismatch = float(np.max(np.abs(nav_recomputed - traj.nav_value)))
    if nav_mismatch > CHECK_TOLERANCE:
        problems.append("stored potential column mismatches by %g" % nav_mismatch)

    max_constraint = None
    if scen.constraints == "unicycle":
        th = traj.x[:, 0]
        recomputed = traj.u[:, 1] * np.sin(th) - traj.u[:, 2] * np.cos(th)
        max_constraint = float(np.max(np.abs(recomputed)))
        if traj.constraint is None:
            problems.append("constraint column missing for a constrained scenario")
        else:
            col_mismatch = float(np.max(np.abs(recomputed - traj.constraint[:, 0])))
            if col_mismatch > CHECK_TOLERANCE:
                problems.append("stored constraint column mismatches by %g" % col_mismatch)
        if max_constraint > 1e-6:
            problems.append("constraint violation %g exceeds tolerance" % max_constraint)

    min_clearance = None
    if model.planar_coords is not None:
        px, py = model.planar_coords
        min_clearance = float(np.min(np.hypot(traj.x[:, px], traj.x[:, py])))
        if scen.tau > 0.0 and min_clearance <= 1.0:
            problems.append("trajectory enters the obstacle (min clearance %g)" % min_clearance)

    j_value = evaluate_functional(traj, scen)

    result = {
        "boundary_residual": boundary,
        "j_value": j_value,
        "max_constraint_violation": max_constraint,
        "min_obstacle_clearance": min_clearance,
        "ok": not problems,
        "problems": problems,
    }
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0 if not problems else 1


def cmd_sweep(args) -> int:
    scen = parse_scenario(args.scenario)
    if args.param not in ("sigma", "tau"):
        raise ValidationError("sweep parameter must be sigma or tau")
    tokens = [tok.strip() for tok in args.values.split(",") if tok.strip()]
    if not tokens:
        raise ValidationError("sweep needs at least one value")
    try:
        values = [float(tok) for tok in tokens]
    except ValueError:
        raise ValidationError("sweep values must be numeric: %r" % args.values)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    worst = 0
    warm = None
    for tok, val in zip(tokens, values):
        entry = Scenario(**{**_scenario_kwargs(scen), args.param: val})
        entry.validate()
        csv_path = out_dir / ("%s_%s.traj.csv" % (args.param, tok))
        report_path = out_dir / ("%s_%s.report.json" % (args.param, tok))
        code, traj = _solve_one(entry, csv_path, report_path, warm_start=warm)
        worst = max(worst, code)
        if traj is not None and "z" in traj.internal:
            warm = traj.internal["z"]
    return worst


def _scenario_kwargs(scen: Scenario) -> dict:
    d = scen.to_dict()
    d["inertia"] = d.pop("J")
    return d


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="navcubics",
        description="Solve obstacle-avoiding variational trajectory problems "
        "and audit their solutions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a scenario and write CSV + report")
    p_solve.add_argument("scenario")
    p_solve.add_argument("-o", "--output", default=None, help="trajectory CSV path")
    p_solve.add_argument("--report", default=None, help="report JSON path")
    p_solve.set_defaults(func=cmd_solve)

    p_check = sub.add_parser("check", help="recompute residuals from a stored trajectory")
    p_check.add_argument("scenario")
    p_check.add_argument("trajectory")
    p_check.set_defaults(func=cmd_check)

    p_sweep = sub.add_parser("sweep", help="solve a family of scenarios with warm starts")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--param", required=True)
    p_sweep.add_argument("--values", required=True)
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.set_defaults(func=cmd_sweep)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print("validation error: %s" % exc, file=sys.stderr)
        return 2
    except NavcubicsError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
