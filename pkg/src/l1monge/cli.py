"""Command line entry point: ``l1monge {run,select,entropy,diagnose,fixtures}``.

Every verb accepts ``--config PATH`` (a JSON document with
:class:`ExperimentConfig` fields) and the override flags ``--out``,
``--seed``, ``--workers``, ``--epsilons``, ``--grid`` and ``--dim``.
Flags win over the file, the file over the defaults.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import fixtures as fx
from .epsilon_selection import DEFAULT_EPSILONS, FACE_TOL, parse_epsilons, run_ladder, two_stage_oracle
from .exceptions import ConfigError, L1MongeError, TooLarge
from .gaussian_model import UINT64_MAX, build_covariance
from .interpolation_entropy import (CONVEXITY_SLACK, DEFAULT_TS, build_path, check_convexity,
                                    covering_grid, geodesic_check, refinement_delta)
from .io import (config_hash, ensure_dir, load_measure, plan_to_dict, save_measure, write_csv,
                 write_plan_csv, write_report)
from .support_diagnostics import (SupportSet, check_cyclical_monotonicity, check_hsupopt,
                                  check_potential, graphness, lebesgue_ratio_estimate)
from .transport_lp import optimal_face_dimension, solve_exact

logger = logging.getLogger("l1monge")

SUITES = ("selection", "entropy", "diagnostics", "ratio")
MAX_GRID_ATOMS = 4096
DECOMPOSITION_TOL = 1e-8


@dataclass
class ExperimentConfig:
    """Everything a run depends on; serialisable to JSON."""

    covariance: dict = field(default_factory=lambda: {"c1": 1.0, "alpha": 3.0, "dim_max": 8,
                                                      "mode": "equality", "sequence": None})
    dims: list = field(default_factory=lambda: [1, 2])
    grid: int = 64
    half_width: float = 4.0
    samples: int = 64
    shift: float = 1.0
    epsilons: list = field(default_factory=lambda: list(DEFAULT_EPSILONS))
    ts: list = field(default_factory=lambda: list(DEFAULT_TS))
    seeds: list = field(default_factory=lambda: [0])
    suites: list = field(default_factory=lambda: list(SUITES))
    mc_samples: int = 20_000
    deltas: list = field(default_factory=lambda: [0.5, 0.25, 0.1])
    ratio_radius: float = 0.5
    face_tol: float = FACE_TOL
    slack_floor: float = CONVEXITY_SLACK
    workers: int = 1
    output_dir: str = "l1monge-out"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def validate(self):
        bad = set(self.suites) - set(SUITES)
        if bad:
            raise ConfigError(f"unknown suites {sorted(bad)}; choose from {SUITES}")
        try:
            self.epsilons = parse_epsilons(self.epsilons)
            self.covariance_spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        for s in self.seeds:
            if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s <= UINT64_MAX:
                raise ConfigError(f"seed {s!r} is not an unsigned 64-bit integer")
        dim_max = int(self.covariance.get("dim_max", 8))
        if not self.dims or any(not 1 <= int(d) <= dim_max for d in self.dims):
            raise ConfigError(f"dims must lie in 1..{dim_max}")
        if self.grid < 4 or self.samples < 2 or self.workers < 1 or self.mc_samples < 1:
            raise ConfigError("grid >= 4, samples >= 2, workers >= 1 and mc_samples >= 1 are required")
        if any(not 0 < t < 1 for t in self.ts):
            raise ConfigError("interpolation times must lie strictly inside (0, 1)")

    def covariance_spec(self):
        c = self.covariance
        return build_covariance(c.get("c1", 1.0), c.get("alpha", 3.0), c.get("dim_max", 8),
                                c.get("mode", "equality"), c.get("sequence"))

    def to_dict(self):
        return asdict(self)

    def digest(self):
        """Hash of the fields that affect results (not output_dir or workers)."""
        doc = self.to_dict()
        doc.pop("output_dir")
        doc.pop("workers")
        return config_hash(doc)


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


# suites -----------------------------------------------------------------

@dataclass
class CellResult:
    name: str
    passed: bool
    files: list = field(default_factory=list)
    error: str = None
    summary: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _selection(src, tgt, cfg, out, name, h):
    ladder = run_ladder(src, tgt, cfg.epsilons)
    oracle, cert = two_stage_oracle(src, tgt, cfg.face_tol, ladder=ladder)
    payload = {"ladder": ladder.to_dict(), "certificate": cert.to_dict(),
               "oracle_plan": plan_to_dict(oracle), "limit_plan": plan_to_dict(ladder.limit_plan)}
    passed = cert.passed
    if len(src) <= 12 and len(tgt) <= 12:
        payload["optimal_face_dimension"] = optimal_face_dimension(src, tgt)
    files = [write_report(out / f"{name}.json", "selection", payload, h),
             write_plan_csv(out / f"{name}_plan.csv", ladder.limit_plan)]
    return CellResult(name, passed, [f.name for f in files],
                      summary={"gaps": list(cert.gaps), "stabilized": cert.stabilized})


def _entropy(dim, cfg, out, h):
    name = f"entropy_d{dim}"
    cov = cfg.covariance_spec()
    levels = (cfg.grid // 2, cfg.grid)
    if levels[-1] ** dim > MAX_GRID_ATOMS:
        raise TooLarge(f"{levels[-1]}**{dim} grid atoms exceed {MAX_GRID_ATOMS}")
    paths, reports, rows = {}, {}, []
    residual = 0.0
    for cells in levels:
        src, tgt, g, width = fx.gaussian_pair(dim, cells, cfg.half_width, max(cells // 8, 1), cov)
        ladder = run_ladder(src, tgt, cfg.epsilons)
        grid = covering_grid([src, tgt], width)
        for mode, plan in (("w1", ladder.limit_plan), ("c_epsilon", ladder.plans[0])):
            path = build_path(plan, g, grid, cfg.ts)
            paths[mode, cells] = path
            residual = max(residual, max(abs(r.residual) for r in path.entropies))
    slack = max([refinement_delta(paths[m, levels[0]], paths[m, levels[1]]) for m in ("w1", "c_epsilon")]
                + [cfg.slack_floor])
    passed = residual <= DECOMPOSITION_TOL
    for (mode, cells), path in sorted(paths.items(), key=lambda kv: (kv[0][1], kv[0][0])):
        rep = check_convexity(path, mode, slack=slack)
        reports[f"{mode}@{cells}"] = rep.to_dict()
        if cells == levels[-1]:
            passed &= rep.passed
            coarse = check_convexity(paths[mode, levels[0]], mode, slack=slack)
            passed &= rep.worst_margin >= coarse.worst_margin - 1e-12
        for r in rep.rows:
            rows.append([cells, mode, r["t"], r["ent_gamma"], r["bound"], r["margin"]])
    payload = {"levels": list(levels), "slack": slack, "max_decomposition_residual": residual,
               "convexity": reports}
    files = [write_report(out / f"{name}.json", "entropy", payload, h),
             write_csv(out / f"{name}.csv", ["cells", "mode", "t", "ent_gamma", "bound", "margin"], rows)]
    return CellResult(name, bool(passed), [f.name for f in files],
                      summary={"slack": slack, "residual": residual})


def _diagnostics(src, tgt, cfg, out, name, h):
    plan, pot = solve_exact(src, tgt)
    s = SupportSet.from_plan(plan)
    ladder = run_ladder(src, tgt, cfg.epsilons)
    sel = SupportSet.from_plan(ladder.limit_plan)
    checks = {
        "cyclical_monotonicity": check_cyclical_monotonicity(s, max_cycle=3).to_dict(),
        "potential": check_potential(s, pot).to_dict(),
        "hsupopt": check_hsupopt(sel).to_dict(),
        "graphness": graphness(sel).to_dict(),
    }
    geo = geodesic_check(build_path(plan, ts=(0.25, 0.5, 0.75)))
    passed = all(c["passed"] for k, c in checks.items() if k != "graphness") and all(r["passed"] for r in geo)
    payload = {"checks": checks, "geodesic": geo, "selected_is_map": checks["graphness"]["split_sources"] == 0}
    files = [write_report(out / f"{name}.json", "diagnostics", payload, h)]
    return CellResult(name, bool(passed), [f.name for f in files],
                      summary={"split_sources": checks["graphness"]["split_sources"],
                               "hsupopt_vacuous": checks["hsupopt"]["vacuous"]})


def _ratio(dim, seed, cfg, out, h):
    name = f"ratio_d{dim}_s{seed}"
    src, tgt, g = fx.empirical_pair(dim, cfg.samples, seed, cfg.shift, cfg.covariance_spec())
    ladder = run_ladder(src, tgt, cfg.epsilons)
    s = SupportSet.from_plan(ladder.limit_plan)
    k = int(np.argmax(s.mass))
    x, y = s.sources[k], s.targets[k]
    curve = lebesgue_ratio_estimate(s, g, x, y, cfg.ratio_radius, cfg.deltas, cfg.mc_samples, seed)
    full = lebesgue_ratio_estimate(s, g, x, y, cfg.ratio_radius, cfg.deltas, min(cfg.mc_samples, 1000),
                                   seed, membership=lambda z: np.ones(len(z), dtype=bool))
    passed = all(0.0 <= p.ratio <= 1.0 for p in curve) and all(p.ratio == 1.0 for p in full)
    payload = {"x": x, "y": y, "r": cfg.ratio_radius, "surrogate": "nearest support source",
               "seed": seed, "curve": [p.to_dict() for p in curve]}
    files = [write_report(out / f"{name}.json", "ratio", payload, h),
             write_csv(out / f"{name}.csv", ["delta", "ratio", "stderr"],
                       [[p.delta, p.ratio, p.stderr] for p in curve])]
    return CellResult(name, bool(passed), [f.name for f in files])


def _cells(cfg, out, h):
    """Independent units of work as ``(name, thunk)`` pairs."""
    cells = []
    cov = cfg.covariance_spec()

    def pair(dim, seed):
        src, tgt, _ = fx.empirical_pair(dim, cfg.samples, seed, cfg.shift, cov)
        return src, tgt

    if "selection" in cfg.suites:
        cells.append(("selection_book-shift",
                      lambda: _selection(*fx.book_shift(), cfg, out, "selection_book-shift", h)))
        for dim in cfg.dims:
            for seed in cfg.seeds:
                n = f"selection_d{dim}_s{seed}"
                cells.append((n, lambda d=dim, s=seed, n=n: _selection(*pair(d, s), cfg, out, n, h)))
    if "entropy" in cfg.suites:
        for dim in cfg.dims:
            cells.append((f"entropy_d{dim}", lambda d=dim: _entropy(d, cfg, out, h)))
    if "diagnostics" in cfg.suites:
        for dim in cfg.dims:
            for seed in cfg.seeds:
                n = f"diagnostics_d{dim}_s{seed}"
                cells.append((n, lambda d=dim, s=seed, n=n: _diagnostics(*pair(d, s), cfg, out, n, h)))
    if "ratio" in cfg.suites:
        for dim in cfg.dims:
            for seed in cfg.seeds:
                cells.append((f"ratio_d{dim}_s{seed}", lambda d=dim, s=seed: _ratio(d, s, cfg, out, h)))
    return cells


def _guard(name, thunk):
    try:
        return thunk()
    except Exception as exc:  # aggregated into the report, not raised
        logger.error("%s failed: %s", name, exc)
        return CellResult(name, False, error=f"{type(exc).__name__}: {exc}")


def run(cfg, cells=None):
    """Execute the configured suites; returns ``(exit_status, results)``."""
    out = ensure_dir(cfg.output_dir)
    h = cfg.digest()
    cells = _cells(cfg, out, h) if cells is None else cells
    if cfg.workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(lambda c: _guard(*c), cells))
    else:
        results = [_guard(*c) for c in cells]
    failures = [r.name for r in results if not r.passed]
    payload = {"config": cfg.to_dict(), "cells": [r.to_dict() for r in results],
               "failures": failures, "passed": not failures}
    payload["config"].pop("output_dir")
    payload["config"].pop("workers")
    write_report(out / "report.json", "run", payload, h)
    for r in results:
        logger.info("%-28s %s", r.name, "ok" if r.passed else f"FAIL {r.error or ''}")
    return (1 if failures else 0), results


# command line -----------------------------------------------------------

def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON experiment config")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", metavar="U64", type=int, help="single seed (overrides config seeds)")
    p.add_argument("--workers", metavar="INT", type=int, help="concurrent cells")
    p.add_argument("--epsilons", metavar="SPEC", help="'1e-1:1e-4:geometric' or comma list")
    p.add_argument("--grid", metavar="INT", type=int, help="cells per axis of the gaussian pair")
    p.add_argument("--dim", metavar="INT", type=int, help="single dimension (overrides config dims)")


def _pair_args(p):
    p.add_argument("--src", metavar="FILE", help="source measure JSON")
    p.add_argument("--tgt", metavar="FILE", help="target measure JSON")
    p.add_argument("--fixture", default=None, help="built-in instance used when --src/--tgt are absent")


def build_parser():
    parser = argparse.ArgumentParser(prog="l1monge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="run the configured suites")
    _common(p)
    p = sub.add_parser("select", help="epsilon ladder and selection certificate for one pair")
    _common(p)
    _pair_args(p)
    p.add_argument("--oracle", action="store_true", help="also run the two-stage LP oracle")
    p = sub.add_parser("entropy", help="entropy convexity suite on the gaussian pair")
    _common(p)
    p = sub.add_parser("diagnose", help="support diagnostics for one pair")
    _common(p)
    _pair_args(p)
    p = sub.add_parser("fixtures", help="list (and with --out, write) the built-in instances")
    _common(p)
    return parser


def config_from_args(args):
    doc = ExperimentConfig().to_dict()
    if args.config:
        doc.update(load_config(args.config))
    if args.out is not None:
        doc["output_dir"] = args.out
    if args.seed is not None:
        doc["seeds"] = [args.seed]
    if args.workers is not None:
        doc["workers"] = args.workers
    if args.epsilons is not None:
        doc["epsilons"] = args.epsilons
    if args.grid is not None:
        doc["grid"] = args.grid
    if args.dim is not None:
        doc["dims"] = [args.dim]
    return ExperimentConfig.from_dict(doc)


def _load_pair(args, cfg):
    if args.src or args.tgt:
        if not (args.src and args.tgt):
            raise ConfigError("--src and --tgt go together")
        return load_measure(args.src), load_measure(args.tgt), Path(args.src).stem
    name = args.fixture or "book-shift"
    if name == "empirical-pair":
        src, tgt, _ = fx.empirical_pair(cfg.dims[0], cfg.samples, cfg.seeds[0], cfg.shift, cfg.covariance_spec())
    elif name == "gaussian-pair":
        src, tgt, _, _ = fx.gaussian_pair(cfg.dims[0], cfg.grid, cfg.half_width, covariance=cfg.covariance_spec())
    elif name in ("book-shift", "identity"):
        src, tgt = fx.load(name)
    else:
        raise ConfigError(f"fixture {name!r} is not a pair of measures")
    return src, tgt, name


def _write_fixtures(cfg):
    out = ensure_dir(cfg.output_dir)
    cov = cfg.covariance_spec()
    for name in ("book-shift", "identity"):
        src, tgt = fx.load(name)
        save_measure(out / f"{name}_src.json", src)
        save_measure(out / f"{name}_tgt.json", tgt)
    for dim in cfg.dims:
        src, tgt, _, _ = fx.gaussian_pair(dim, cfg.grid, cfg.half_width, covariance=cov)
        save_measure(out / f"gaussian-pair_d{dim}_src.json", src, cov)
        save_measure(out / f"gaussian-pair_d{dim}_tgt.json", tgt, cov)
        for seed in cfg.seeds:
            src, tgt, _ = fx.empirical_pair(dim, cfg.samples, seed, cfg.shift, cov)
            save_measure(out / f"empirical-pair_d{dim}_s{seed}_src.json", src, cov, seed)
            save_measure(out / f"empirical-pair_d{dim}_s{seed}_tgt.json", tgt, cov, seed)
    write_report(out / "split-witness.json", "plan", plan_to_dict(fx.split_witness()), cfg.digest())


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if args.verb == "run":
            status, _ = run(cfg)
            return status
        if args.verb == "fixtures":
            print(json.dumps(fx.fixtures(), indent=2))
            if args.out is not None:
                _write_fixtures(cfg)
            return 0
        if args.verb == "entropy":
            cfg.suites = ["entropy"]
            return run(cfg)[0]
        src, tgt, name = _load_pair(args, cfg)
        out = ensure_dir(cfg.output_dir)
        h = cfg.digest()
        if args.verb == "select":
            if args.oracle:
                thunk = lambda: _selection(src, tgt, cfg, out, f"select_{name}", h)  # noqa: E731
            else:
                thunk = lambda: _ladder_only(src, tgt, cfg, out, f"select_{name}", h)  # noqa: E731
            return run(cfg, [(f"select_{name}", thunk)])[0]
        return run(cfg, [(f"diagnose_{name}",
                          lambda: _diagnostics(src, tgt, cfg, out, f"diagnose_{name}", h))])[0]
    except L1MongeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _ladder_only(src, tgt, cfg, out, name, h):
    ladder = run_ladder(src, tgt, cfg.epsilons)
    dw, da = ladder.monotonicity_violations()
    passed = dw <= 1e-9 and da <= 1e-9
    payload = {"ladder": ladder.to_dict(), "limit_plan": plan_to_dict(ladder.limit_plan)}
    files = [write_report(out / f"{name}.json", "selection", payload, h),
             write_plan_csv(out / f"{name}_plan.csv", ladder.limit_plan)]
    return CellResult(name, passed, [f.name for f in files])


if __name__ == "__main__":
    sys.exit(main())
