"""Command-line front end: ``dualmink {verify,solve,spectrum,scan,polar}``.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .body import (
    body_to_dict,
    load_body,
    make_random_body,
    polar_identity_check,
    polar_body,
)
from .reports import dumps, outcome_to_dict, scan_csv_text
from .solver import (
    SolverConfig,
    linearized_spectrum,
    perturbed_start,
    polar_problem_map,
    pde_sup_residual,
    solve,
    uniqueness_scan,
)
from .sphere_grid import build_grid
from .verify import TOL, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
MIN_CLI_LMAX = 8
SPECTRUM_TOL = 1e-6

DEFAULTS = {
    "verify": {"lmax": 32, "seeds": [0, 1, 2, 3, 4]},
    "solve": {"lmax": 16, "p": [-1.0], "q": [2.5], "seeds": [0]},
    "spectrum": {"lmax": 8, "p": [-1.0], "q": [2.5]},
    "scan": {"lmax": 16, "p": [-2.5, -2.0, -1.5, -1.0], "q": [2.0, 2.25, 2.5, 2.75],
             "seeds": [0, 1, 2]},
    "polar": {"lmax": 32, "seeds": [0]},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    lmax: int = 16
    p: list = field(default_factory=list)
    q: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    out: str | None = None
    body: str | None = None
    method: str = "damped-fixed-point"
    max_iters: int = 400
    tol_residual: float = 1e-10
    amplitude: float = 0.05
    workers: int = 1

    def digest(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if k != "out"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def solver_config(self, **extra) -> SolverConfig:
        return SolverConfig(method=self.method, max_iters=self.max_iters,
                            tol_residual=self.tol_residual, lmax=self.lmax, **extra)


def parse_values(text, kind=float) -> list:
    """Comma list ``a,b,c`` or inclusive range ``start:step:end``."""
    if isinstance(text, (list, tuple)):
        return [kind(v) for v in text]
    if isinstance(text, (int, float)):
        return [kind(text)]
    text = str(text).strip()
    if not text:
        return []
    if ":" in text:
        try:
            start, step, end = (float(t) for t in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}: expected start:step:end") from exc
        if step == 0 or (end - start) * step < 0:
            raise ConfigError(f"range {text!r} does not reach its end")
        count = int(math.floor((end - start) / step + 1e-12)) + 1
        vals = [start + i * step for i in range(count)]
        if abs(vals[-1] - end) <= 1e-12:
            vals[-1] = end
        return [kind(round(v, 12)) for v in vals]
    try:
        return [kind(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}") from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(DEFAULTS[args.command])
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON at line {exc.lineno} "
                              f"column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        known = {f.name for f in fields(RunConfig)} - {"command"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {sorted(unknown)}")
        merged.update(doc)
    for key in ("lmax", "p", "q", "seeds", "out", "body", "method", "max_iters",
                "tol_residual", "amplitude", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    try:
        cfg = RunConfig(
            command=args.command,
            lmax=int(merged.get("lmax", 16)),
            p=parse_values(merged.get("p", [])),
            q=parse_values(merged.get("q", [])),
            seeds=parse_values(merged.get("seeds", []), int),
            out=merged.get("out"),
            body=merged.get("body"),
            method=str(merged.get("method", "damped-fixed-point")),
            max_iters=int(merged.get("max_iters", 400)),
            tol_residual=float(merged.get("tol_residual", 1e-10)),
            amplitude=float(merged.get("amplitude", 0.05)),
            workers=int(merged.get("workers", 1)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    minimum = 2 if cfg.command == "spectrum" else MIN_CLI_LMAX
    if cfg.lmax < minimum:
        raise ConfigError(f"lmax={cfg.lmax} is below the minimum {minimum} for {cfg.command}")
    if cfg.command in ("solve", "spectrum", "scan") and (not cfg.p or not cfg.q):
        if cfg.command != "scan":
            raise ConfigError("need non-empty --p and --q")
    try:
        cfg.solver_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _metadata(cfg: RunConfig, **extra) -> dict:
    meta = {"version": __version__, "config": asdict(cfg), "config_hash": cfg.digest(),
            "lmax": cfg.lmax, "timestamp": datetime.now(timezone.utc).isoformat()}
    meta.update(extra)
    return meta


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_body_or_fail(path, grid):
    try:
        return load_body(path, grid)
    except OSError as exc:
        raise ConfigError(f"cannot read body {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno} "
                          f"(char {exc.pos}): {exc.msg}") from exc
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_verify(cfg: RunConfig) -> int:
    grid = build_grid(cfg.lmax)
    extra = []
    if cfg.body:
        extra.append((f"file:{Path(cfg.body).name}", _load_body_or_fail(cfg.body, grid)))
    report = run_suite(cfg.lmax, cfg.seeds, cfg.amplitude, extra_bodies=extra)
    report["metadata"] = _metadata(cfg, tolerances=TOL)
    for fam in report["summary"]["families"]:
        rows = [c for c in report["checks"] if c["check_name"].split("[")[0] == fam]
        bad = sum(not c["pass"] for c in rows)
        print(f"{'PASS' if not bad else 'FAIL'} {fam}: {len(rows) - bad}/{len(rows)}",
              file=sys.stderr)
    _emit(dumps(report), cfg.out)
    return EXIT_OK if report["summary"]["all_pass"] else EXIT_FAIL


def cmd_solve(cfg: RunConfig) -> int:
    grid = build_grid(cfg.lmax)
    p, q = cfg.p[0], cfg.q[0]
    if cfg.body:
        h0 = _load_body_or_fail(cfg.body, grid)
        start = f"file:{cfg.body}"
    else:
        h0, start = perturbed_start(grid, cfg.seeds[0] if cfg.seeds else 0)
    scfg = cfg.solver_config(normalize_scale=(p == q))
    out = solve(h0, p, q, scfg)
    doc = outcome_to_dict(out, p, q, {"start": start,
                                      "metadata": _metadata(cfg, solver=asdict(scfg))})
    _emit(dumps(doc), cfg.out)
    print(f"{out.status.value}: residual={out.residual:.3e} iterations={out.iterations} "
          f"sphere_distance={out.sphere_distance:.3e}", file=sys.stderr)
    return EXIT_OK if out.status.converged else EXIT_FAIL


def cmd_spectrum(cfg: RunConfig) -> int:
    reports = []
    worst = 0.0
    for p in cfg.p:
        for q in cfg.q:
            rep = linearized_spectrum(p, q, cfg.lmax)
            worst = max(worst, rep.max_abs_gap)
            reports.append({"p": p, "q": q, "closed_form": rep.closed_form,
                            "numeric": rep.numeric, "max_abs_gap": rep.max_abs_gap})
    _emit(dumps({"spectra": reports, "tolerance": SPECTRUM_TOL,
                 "metadata": _metadata(cfg)}), cfg.out)
    return EXIT_OK if worst <= SPECTRUM_TOL else EXIT_FAIL


def cmd_scan(cfg: RunConfig) -> int:
    scfg = cfg.solver_config()
    scan = uniqueness_scan(cfg.p, cfg.q, cfg.seeds, scfg, workers=cfg.workers)
    _emit(scan_csv_text(scan), cfg.out)
    in_region = [r for r in scan.rows if r["in_region"]]
    failed = [r for r in in_region if r["status"] != "ConvergedSphere"]
    meta = _metadata(cfg, scan=scan.metadata, tolerances={
        "tol_residual": scfg.tol_residual, "tol_sphere": scfg.tol_sphere},
        in_region_cells=len(in_region), in_region_failures=len(failed),
        perturbations=[r["perturbation_spec"] for r in scan.rows],
        explorations=[{"p": r["p"], "q": r["q"], "seed": r["seed"], **r["exploration"]}
                      for r in scan.rows if r["exploration"]])
    if cfg.out:
        Path(str(cfg.out) + ".meta.json").write_text(dumps(meta))
    print(f"scan: {len(scan.rows)} cells, {len(in_region)} in region, "
          f"{len(failed)} in-region failures", file=sys.stderr)
    return EXIT_OK if not failed else EXIT_FAIL


def cmd_polar(cfg: RunConfig) -> int:
    grid = build_grid(cfg.lmax)
    if cfg.body:
        sf = _load_body_or_fail(cfg.body, grid)
    else:
        sf = make_random_body(grid, cfg.seeds[0] if cfg.seeds else 0, cfg.amplitude)
    pb = polar_body(sf)
    deviation = polar_identity_check(sf, pb)
    doc = {"polar_body": body_to_dict(pb.support), "polar_identity_deviation": deviation,
           "tolerance": TOL["polar_identity"], "metadata": _metadata(cfg)}
    if cfg.p and cfg.q:
        hstar, p2, q2 = polar_problem_map(sf, cfg.p[0], cfg.q[0])
        doc["mapped_exponents"] = {"p": p2, "q": q2}
        doc["mapped_residual"] = pde_sup_residual(hstar, p2, q2)
    _emit(dumps(doc), cfg.out)
    return EXIT_OK if deviation <= TOL["polar_identity"] else EXIT_FAIL


COMMANDS = {"verify": cmd_verify, "solve": cmd_solve, "spectrum": cmd_spectrum,
            "scan": cmd_scan, "polar": cmd_polar}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualmink",
        description="Isotropic L_p dual Minkowski problem on S^2: identity checks, "
                    "solver, spectra and uniqueness scans.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"verify": "run the identity/inequality suite",
             "solve": "solve one (p, q) problem from a perturbed start",
             "spectrum": "linearised spectrum at the unit sphere (--lmax = top degree)",
             "scan": "uniqueness scan over a (p, q) lattice, CSV output",
             "polar": "polar body and polar identity deviation"}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--lmax", type=int)
        sp.add_argument("--p", help="comma list or start:step:end")
        sp.add_argument("--q", help="comma list or start:step:end")
        sp.add_argument("--seeds", help="comma list or start:step:end")
        sp.add_argument("--out")
        sp.add_argument("--config", help="JSON file with RunConfig fields")
        sp.add_argument("--body", help="body JSON document")
        sp.add_argument("--method", choices=["damped-fixed-point", "newton"])
        sp.add_argument("--max-iters", dest="max_iters", type=int)
        sp.add_argument("--tol-residual", dest="tol_residual", type=float)
        sp.add_argument("--amplitude", type=float)
        sp.add_argument("--workers", type=int)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
