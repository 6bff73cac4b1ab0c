"""Command line front end: ``wildflow <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import suites
from .errors import FormatError, GridTooCoarse, InvalidConfig, WildflowError
from .t4_hull import HullSpec, app_constants, t4_for_center
from .weak_verifier import (DEFAULT_TOLERANCES, FieldGrid, VerificationReport, constraint_stats,
                            residual_summary, verify_subsolution, weak_residuals)
from .wild_constructor import ConstructionConfig, Subsolution, direct_construction

log = logging.getLogger("wildflow")


@dataclass
class RunConfig:
    """Construction parameters plus the pipeline options around them."""

    construction: ConstructionConfig = field(default_factory=ConstructionConfig)
    grid: tuple = (128, 64)
    tolerances: dict = field(default_factory=dict)
    out: str = "wildflow_out"

    def as_dict(self):
        return {"construction": self.construction.as_dict(), "grid": list(self.grid),
                "tolerances": dict(sorted(self.tolerances.items())), "out": self.out}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        unknown = set(d) - {"construction", "grid", "tolerances", "out"}
        if unknown:
            raise InvalidConfig(f"unknown run config keys: {sorted(unknown)}")
        cc = ConstructionConfig.from_dict(d.get("construction", {}))
        return cls(cc, tuple(d.get("grid", (128, 64))), dict(d.get("tolerances", {})),
                   d.get("out", "wildflow_out"))

    def dumps(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=1)


def _pair(text, kind=float):
    try:
        a, b = text.split(",")
        return kind(a), kind(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected two comma-separated values, got {text!r}") from exc


def _tol(text):
    name, _, val = text.partition("=")
    if not name or not val:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    return name, float(val)


def build_run_config(args) -> RunConfig:
    rc = RunConfig()
    if getattr(args, "config", None):
        try:
            rc = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {args.config}: {exc}") from exc
    cc = asdict(rc.construction)
    for key in ("seed", "rounds", "delta"):
        val = getattr(args, key, None)
        if val is not None:
            cc[key] = val
    if getattr(args, "z", None) is not None:
        cc["z"] = tuple(args.z)
    rc.construction = ConstructionConfig.from_dict(cc)
    if getattr(args, "grid", None) is not None:
        rc.grid = tuple(args.grid)
    for name, val in getattr(args, "tolerance", None) or []:
        if name not in DEFAULT_TOLERANCES:
            raise InvalidConfig(f"unknown tolerance {name!r}; known: {sorted(DEFAULT_TOLERANCES)}")
        rc.tolerances[name] = val
    if getattr(args, "out", None):
        rc.out = args.out
    rc.construction.validate()
    return rc


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n")


def _write_csv(path: Path, rows, columns):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (f"{r[c]:.12g}" if isinstance(r[c], float) else r[c])
                        for c in columns])


def _emit_checks(checks, out: Path | None, name: str) -> int:
    for c in checks:
        print(c.line())
    if out is not None:
        _write_json(out / f"{name}.json", {"checks": [c.as_dict() for c in checks]})
        _write_csv(out / f"{name}.csv", [c.as_dict() for c in checks],
                   ["name", "value", "relation", "tolerance", "passed", "seconds"])
    ok = all(c.passed for c in checks)
    print(f"{name}: {'all checks pass' if ok else 'FAILED'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# subcommands


def cmd_geometry(args) -> int:
    mode = "paper" if args.inject_radius_bug else "corrected"
    checks = suites.geometry_suite(args.samples, args.seed or 0, radius_mode=mode)
    return _emit_checks(checks, Path(args.out) if args.out else None, "geometry")


def cmd_t4(args) -> int:
    z = args.z if args.z is not None else suites.DEFAULT_Z
    spec = HullSpec.for_z(z) if args.delta is None else HullSpec(tuple(z), args.delta)
    cfg = t4_for_center(spec.center, spec)
    consts = app_constants(spec)
    rec = {"z": list(spec.z), "delta": spec.delta, "center": cfg.center.tolist(),
           "corners": cfg.corners.tolist(), "weights": cfg.weights.tolist(),
           "r_x": cfg.r_x, "r_y": cfg.r_y, **consts}
    print(json.dumps(rec, sort_keys=True, indent=1))
    if args.out:
        _write_json(Path(args.out) / "t4.json", rec)
    return _emit_checks(suites.t4_suite(args.samples or 1000, args.seed or 0),
                        Path(args.out) if args.out else None, "t4_checks")


def cmd_wave(args) -> int:
    return _emit_checks(suites.wave_suite(), Path(args.out) if args.out else None, "wave")


def run_construct(rc: RunConfig, out: Path):
    subs, clog = direct_construction(rc.construction)
    out.mkdir(parents=True, exist_ok=True)
    # the output location is not part of the run's content
    cfg = rc.as_dict()
    cfg.pop("out")
    _write_json(out / "config.json", cfg)
    for k, sub in enumerate(subs):
        (out / f"round_{k}.json").write_text(sub.dumps() + "\n")
    _write_json(out / "log.json", clog.to_dict())
    cols = ["round", "N", "dist_integral", "band_fraction", "annulus_fraction", "app_fraction",
            "contraction", "patches_added", "n_patches", "n_regions", "fwc_bound", "fwc_tolerance",
            "mollifier_L1", "mollifier_sigma_cells"]
    _write_csv(out / "log.csv", clog.entries, cols)
    return subs, clog


def cmd_construct(args) -> int:
    rc = build_run_config(args)
    out = Path(rc.out)
    subs, clog = run_construct(rc, out)
    for e in clog.entries:
        print(f"round {e['round']}: dist_integral={e['dist_integral']:.6f} "
              f"band_fraction={e['band_fraction']:.4f} patches={e['n_patches']}")
    print(f"wrote {len(subs)} rounds to {out}")
    return 0


def verify_field_grid(fg: FieldGrid, tolerances=None) -> VerificationReport:
    """Grid-path verification of a smooth field dump."""
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    rep = VerificationReport()
    res = weak_residuals(fg, tolerance=tol["weak_residual"])
    rep.tables["weak_residuals"] = res
    for key, val in residual_summary(res).items():
        if key != "identity1_rhov":
            rep.add(f"{key}_max_abs", val, tol["weak_residual"])
    rep.tables["constraint_stats"] = constraint_stats(fg)
    return rep


def cmd_verify(args) -> int:
    rc = build_run_config(args)
    path = Path(args.path)
    out = Path(rc.out)
    n, m = rc.grid
    try:
        if path.suffix == ".npz":
            fg = FieldGrid.load(path)
            rep = verify_field_grid(fg, rc.tolerances)
        else:
            sub = Subsolution.loads(path.read_text())
            rep = verify_subsolution(sub, n_levels=(n // 2, n), grid=(n, m), tolerances=rc.tolerances)
    except GridTooCoarse as exc:
        print(f"grid too coarse: {exc}; refine --grid or raise --tolerance weak_residual=...",
              file=sys.stderr)
        return 2
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(rep.dumps() + "\n")
    _write_csv(out / "report.csv", rep.checks, ["name", "value", "relation", "tolerance", "pass"])
    for c in rep.checks:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']:<34s} {c['value']:.4g} {c['relation']} {c['tolerance']:.4g}")
    print(f"verify: {'all checks pass' if rep.passed else 'FAILED'}")
    return 0 if rep.passed else 1


def cmd_report(args) -> int:
    """Summarize a construct/verify output directory into ``summary.json`` and ``summary.csv``."""
    d = Path(args.path)
    try:
        logd = json.loads((d / "log.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"no construction log under {d}: {exc}") from exc
    entries = logd["entries"]
    dist = [e["dist_integral"] for e in entries]
    band = [e["band_fraction"] for e in entries]
    summary = {
        "rounds": len(entries) - 1,
        "dist_integral": dist,
        "band_fraction": band,
        "dist_strictly_decreasing": all(b < a for a, b in zip(dist, dist[1:])),
        "band_strictly_increasing": all(b > a for a, b in zip(band, band[1:])),
        "app_fraction": [e.get("app_fraction") for e in entries[1:]],
    }
    rp = d / "report.json"
    if rp.exists():
        rep = json.loads(rp.read_text())
        summary["verification_passed"] = rep["passed"]
        summary["failed_checks"] = [c["name"] for c in rep["checks"] if not c["pass"]]
    _write_json(d / "summary.json", summary)
    _write_csv(d / "summary.csv", entries, ["round", "dist_integral", "band_fraction", "app_fraction"])
    print(json.dumps(summary, sort_keys=True, indent=1))
    return 0


# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config JSON")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--rounds", type=int)
    common.add_argument("--grid", type=lambda s: _pair(s, int), help="verification grid n,m")
    common.add_argument("--z", type=_pair, help="hull center z as a,b")
    common.add_argument("--delta", type=float)
    common.add_argument("--tolerance", type=_tol, action="append", help="override NAME=VALUE")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wildflow", description="Convex-integration lab for IPM subsolutions.")
    sub = p.add_subparsers(dest="command", required=True)
    g = sub.add_parser("geometry", parents=[common], help="cone, T4 and barrier property suites")
    g.add_argument("--samples", type=int, help="reduced sample count")
    g.add_argument("--inject-radius-bug", action="store_true", help="use the literal r = 1 - rho radii")
    g.set_defaults(func=cmd_geometry)
    t = sub.add_parser("t4", parents=[common], help="T4 configuration at a center and validity sweep")
    t.add_argument("--samples", type=int)
    t.set_defaults(func=cmd_t4)
    w = sub.add_parser("wave", parents=[common], help="building block diagnostics")
    w.set_defaults(func=cmd_wave)
    c = sub.add_parser("construct", parents=[common], help="run the construction")
    c.set_defaults(func=cmd_construct)
    v = sub.add_parser("verify", parents=[common], help="verify a subsolution (.json) or field grid (.npz)")
    v.add_argument("path")
    v.set_defaults(func=cmd_verify)
    r = sub.add_parser("report", parents=[common], help="summarize an output directory")
    r.add_argument("path")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except WildflowError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
