"""Command-line front end: ``holonomy {phase,npc,sweep,selftest}``.

Exit codes: 0 success, 1 usage or configuration error, 2 acceptance
threshold breached (``--strict`` or a failing self-test), 3 numeric failure.
The log level comes from the ``HOLONOMY_LOG`` environment variable.

Reports are deterministic: the same config and seed give byte-identical
output. Wall-clock timing is only written with ``--timing``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig, build_curve, load_config, sweep_points
from .errors import ConfigError, ContractError, HolonomyError
from .io import fmt_float

log = logging.getLogger("holonomy")

EXIT_OK, EXIT_CONFIG, EXIT_THRESHOLD, EXIT_NUMERIC = 0, 1, 2, 3
CLASSIFY_SAMPLES = 200


@dataclass(frozen=True)
class RunReport:
    """Outcome of one ``phase`` run."""

    id: str
    n: int
    k: int
    weights: tuple[float, ...]
    per_level: tuple[float, ...]
    weighted: float
    steps: int
    converged: bool
    classification: str
    area: float | None = None
    residual: float | None = None
    runtime_ms: float | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "n": self.n,
            "k": self.k,
            "weights": list(self.weights),
            "phase": {"per_level": list(self.per_level), "weighted": self.weighted, "steps": self.steps,
                      "converged": self.converged},
            "area": self.area,
            "residual": self.residual,
            "classification": self.classification,
            "runtime_ms": self.runtime_ms,
        }

    def csv_row(self) -> list[str]:
        return ([str(self.n), str(self.k)] + [fmt_float(w) for w in self.weights]
                + [fmt_float(p) for p in self.per_level]
                + [fmt_float(self.weighted), fmt_float(self.area), fmt_float(self.residual), str(self.steps),
                   fmt_float(self.runtime_ms)])


def csv_header(k: int, params: list[str] = ()) -> list[str]:
    return (list(params) + ["n", "k"] + [f"weight_{a + 1}" for a in range(k)] + [f"phase_{a + 1}" for a in range(k)]
            + ["weighted", "area", "residual", "steps", "runtime_ms"])


def run_phase(config: ScenarioConfig, timing: bool = False) -> RunReport:
    """Build the loop, accumulate its phases and, with a surface, its symplectic area."""
    from .geometry import surface_integral
    from .npc import classify_curve
    from .transport import geometric_phases, verify_area_identity

    start = time.perf_counter()
    path, surface = build_curve(config)
    if not path.closed:
        raise ConfigError("curve", "the phase command needs a closed curve")
    tol = config.tolerances
    report = geometric_phases(path, tol["phase_tol"])
    area = residual = None
    if surface is not None:
        if surface.boundary is not None:
            _, minus_area, residual = verify_area_identity(path, surface, tol["phase_tol"], tol["quad_tol"])
            area = -minus_area
        else:
            area = surface_integral(surface, tol["quad_tol"])
            residual = abs(report.weighted + area)
    stride = max(1, path.steps // CLASSIFY_SAMPLES)
    classification = classify_curve(path.subsample(stride)).classification
    runtime = (time.perf_counter() - start) * 1e3 if timing else None
    return RunReport(id=config.id, n=config.n, k=config.k, weights=config.weights.values,
                     per_level=report.per_level, weighted=report.weighted, steps=report.steps,
                     converged=report.converged, classification=classification, area=area, residual=residual,
                     runtime_ms=runtime)


def run_npc(config: ScenarioConfig, triangle: bool = False) -> dict:
    from .npc import classify_curve, gp_open_curve, nonadditivity_check, random_triangle

    path, _ = build_curve(config)
    cls = classify_curve(path)
    out = {"id": config.id, **cls.to_json()}
    out["gp"] = gp_open_curve(path) if cls.classification != "invalid" else None
    if triangle:
        tri = config.triangle or {"seed": 0, "scale": 0.4, "steps": 200}
        sides = random_triangle(config.n, config.weights, int(tri["seed"]), scale=float(tri["scale"]),
                                steps=int(tri["steps"]))
        lhs, rhs, residual = nonadditivity_check(*sides)
        out["triangle"] = {"lhs": lhs, "rhs": rhs, "residual": residual}
    return out


def _sweep_worker(args):
    data, base_dir, timing = args
    return run_phase(ScenarioConfig.from_dict(data, base_dir), timing)


def run_sweep(config: ScenarioConfig, jobs: int = 1, timing: bool = False) -> str:
    """CSV text with one row per grid point, in row-major grid order."""
    names, points = sweep_points(config)
    tasks = [(cfg.to_dict(), cfg.base_dir, timing) for _, cfg in points]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_sweep_worker, tasks))
    else:
        reports = [_sweep_worker(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(config.k, names))
    for (values, _), rep in zip(points, reports):
        writer.writerow([fmt_float(v) for v in values] + rep.csv_row())
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n"


def _report_csv(rep: RunReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(rep.k))
    writer.writerow(rep.csv_row())
    return buf.getvalue()


def _load(args) -> ScenarioConfig:
    if not args.config:
        raise ConfigError("--config", "a scenario file is required")
    cfg = load_config(args.config)
    return cfg.with_overrides(steps=args.steps, seed=args.seed)


def cmd_phase(args) -> int:
    cfg = _load(args)
    rep = run_phase(cfg, args.timing)
    out = args.out or cfg.output
    if out and not out.endswith(".json"):
        _emit(_report_csv(rep), out)
        sys.stdout.write(_json_text(rep.to_json()))
    else:
        _emit(_json_text(rep.to_json()), out)
    if not rep.converged:
        log.warning("phase refinement did not reach phase_tol")
    if args.strict and rep.residual is not None and rep.residual > cfg.tolerances["residual_tol"]:
        print(f"residual {rep.residual:.3e} exceeds {cfg.tolerances['residual_tol']:g}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_npc(args) -> int:
    cfg = _load(args)
    result = run_npc(cfg, triangle=args.triangle)
    _emit(_json_text(result), args.out or cfg.output)
    if args.strict and args.triangle and result["triangle"]["residual"] > 1e-5:
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    _emit(run_sweep(cfg, jobs=args.jobs, timing=args.timing), args.out or cfg.output)
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .acceptance import run_checks

    results = run_checks(args.filter, reduced=not args.full)
    if not results:
        print(f"no checks match filter {args.filter!r}", file=sys.stderr)
        return EXIT_CONFIG
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_THRESHOLD if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holonomy", description="Geometric phases of mixed quantum states.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p, sweep=False):
        p.add_argument("--config", help="scenario JSON file, or the name of a bundled scenario")
        p.add_argument("--steps", type=int, help="override the number of curve samples")
        p.add_argument("--seed", type=int, help="override the curve seed")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--strict", action="store_true", help="exit 2 when a residual exceeds its threshold")
        p.add_argument("--timing", action="store_true", help="record runtime_ms (output is then not reproducible)")
        if sweep:
            p.add_argument("--jobs", type=int, default=1, help="worker processes for the grid")

    p = sub.add_parser("phase", help="accumulated geometric phases of a closed loop")
    scenario_flags(p)
    p.set_defaults(func=cmd_phase)
    p = sub.add_parser("npc", help="classify a curve; optionally test the triangle relation")
    scenario_flags(p)
    p.add_argument("--triangle", action="store_true", help="also run the non-additivity check on a random triangle")
    p.set_defaults(func=cmd_npc)
    p = sub.add_parser("sweep", help="CSV of phase reports over a parameter grid")
    scenario_flags(p, sweep=True)
    p.set_defaults(func=cmd_sweep)
    p = sub.add_parser("selftest", help="run the acceptance checks at reduced size")
    p.add_argument("--filter", help="only run checks whose name contains this text")
    p.add_argument("--full", action="store_true", help="use the full instance counts")
    p.set_defaults(func=cmd_selftest)
    return parser


def _provenance(exc: BaseException) -> str:
    module = "holonomy"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("holonomy.") and name != "holonomy.cli":
            module = name
    return module


def main(argv=None) -> int:
    level = os.environ.get("HOLONOMY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"invalid input ({_provenance(exc)}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HolonomyError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure in {_provenance(exc)}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
