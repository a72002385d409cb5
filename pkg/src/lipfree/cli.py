"""Command line front end.

    lipfree verify <suite> [--config c.toml] [--n 5,10,20] [--seed S]
                           [--out dir] [--timings] [--manifold NAME]
                           [--dim D]
    lipfree gamma build --config c.toml --n 10 --out op.json
    lipfree gamma verify --op op.json --suite-seed 7 --report out.csv
    lipfree counterexample run [--config c.toml] [--out dir]
    lipfree plot-data summary.json [...] [--label L ...] [--out plot.json]

Exit codes: 0 all bounds pass, 1 some bound failed, 2 configuration
error, 3 calibration failure (message names the stage).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import os
import sys

import numpy as np

from .assembly import CoverageGapError, build_gamma, verify_gamma
from .config import (ConfigError, ExperimentConfig, dumps_config,
                     load_config, loads_config, merge_overrides)
from .lipschitz import random_lip_suite
from .manifolds import make_manifold
from .mollify import CalibrationError
from .norms import make_norm
from .reporting import (BoundRow, emit_plot_data, fmt17,
                        rows_from_summary, sort_rows, write_report)
from .suites import SUITE_NAMES, counterexample_report, run_suite

__all__ = ["main", "OPERATOR_SCHEMA"]

OPERATOR_SCHEMA = "lipfree-operator-v1"

_MANIFOLD_PRESETS = {
    "circle": {"kind": "circle", "radius": 1.0},
    "sphere": {"kind": "sphere", "radius": 1.0},
    "torus": {"kind": "torus", "R": 2.0, "r": 0.5},
    "normsphere": {"kind": "normsphere", "dim": 3},
}


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lipfree",
        description="verify quantitative bounds of the finite-rank "
                    "approximation pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="run a named bound suite")
    v.add_argument("suite", choices=SUITE_NAMES)
    v.add_argument("--config", help="TOML experiment config")
    v.add_argument("--n", help="comma-separated n values, e.g. 5,10,20")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="report directory")
    v.add_argument("--timings", action="store_true",
                   help="record per-row seconds in the CSV")
    v.add_argument("--manifold", choices=sorted(_MANIFOLD_PRESETS),
                   help="replace the configured manifold by a preset")
    v.add_argument("--dim", type=int,
                   help="restrict the kernel suite to one ambient "
                        "dimension")
    v.set_defaults(handler=_cmd_verify)

    g = sub.add_parser("gamma", help="build or re-verify one operator")
    gs = g.add_subparsers(dest="gamma_command", required=True)
    gb = gs.add_parser("build", help="assemble the operator and persist "
                                     "its constants and vertex metadata")
    gb.add_argument("--config", help="TOML experiment config")
    gb.add_argument("--n", type=int, required=True)
    gb.add_argument("--out", required=True, help="operator JSON path")
    gb.set_defaults(handler=_cmd_gamma_build)
    gv = gs.add_parser("verify", help="rebuild a persisted operator and "
                                      "re-check its bounds")
    gv.add_argument("--op", required=True, help="operator JSON path")
    gv.add_argument("--suite-seed", type=int, default=7)
    gv.add_argument("--report", required=True, help="output CSV path")
    gv.set_defaults(handler=_cmd_gamma_verify)

    c = sub.add_parser("counterexample",
                       help="flat patch, averaged derivative, and "
                            "projection search")
    cs = c.add_subparsers(dest="ce_command", required=True)
    cr = cs.add_parser("run")
    cr.add_argument("--config", help="TOML experiment config")
    cr.add_argument("--seed", type=int)
    cr.add_argument("--out", help="report directory")
    cr.set_defaults(handler=_cmd_counterexample)

    pd = sub.add_parser("plot-data",
                        help="merge report summaries into labelled "
                             "(n, bound, sampled) series")
    pd.add_argument("summaries", nargs="+", help="summary JSON paths")
    pd.add_argument("--label", action="append",
                    help="series label (repeat, one per summary)")
    pd.add_argument("--out", help="plot JSON path (default stdout)")
    pd.set_defaults(handler=_cmd_plot_data)
    return p


def _load_cfg(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return load_config(path)


def _parse_n_list(raw: str) -> tuple:
    items = [s for s in raw.split(",") if s.strip()]
    if not items:
        raise ConfigError("empty n list")
    try:
        return tuple(int(s) for s in items)
    except ValueError as e:
        raise ConfigError(f"bad n list {raw!r}: {e}") from None


def _write_reports(rows, cfg: ExperimentConfig, name: str) -> dict:
    os.makedirs(cfg.out, exist_ok=True)
    csv_path = os.path.join(cfg.out, f"{name}.csv")
    summary_path = os.path.join(cfg.out, f"{name}.summary.json")
    plot_path = os.path.join(cfg.out, f"{name}.plot.json")
    summary = write_report(rows, csv_path, summary_path,
                           config_echo=dumps_config(cfg),
                           timings=cfg.timings)
    with open(plot_path, "w", encoding="utf-8") as fh:
        json.dump(emit_plot_data([(name, rows)]), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    summary["csv_path"] = csv_path
    return summary


def _report_exit(summary: dict, name: str) -> int:
    print(f"{name}: {summary['passed']}/{summary['total']} bounds pass"
          f" -> {summary.get('csv_path', '')}")
    for f in summary["failures"]:
        print(f"  FAIL {f['bound_name']} (n={f['n']}, f={f['f_index']}):"
              f" sampled {f['sampled_value']} vs budget {f['budget']}")
    return 0 if summary["failed"] == 0 else 1


def _cmd_verify(args) -> int:
    cfg = _load_cfg(args.config)
    if args.manifold:
        cfg = dataclasses.replace(
            cfg, manifold=dict(_MANIFOLD_PRESETS[args.manifold]))
    n_list = _parse_n_list(args.n) if args.n is not None else None
    cfg = merge_overrides(cfg, n_list=n_list, seed=args.seed,
                          out=args.out,
                          timings=True if args.timings else None)
    if args.dim is not None and args.suite != "kernel":
        raise ConfigError("--dim only applies to the kernel suite")
    rows = run_suite(cfg, args.suite)
    if args.dim is not None:
        rows = [r for r in rows if r.n == args.dim]
        if not rows:
            raise ConfigError(f"kernel suite has no dimension {args.dim}")
    summary = _write_reports(rows, cfg, args.suite)
    return _report_exit(summary, args.suite)


def _operator_descriptor(G, cfg: ExperimentConfig) -> dict:
    charts = []
    for op in G.charts:
        m = op.mesh
        charts.append({
            "lo": list(m.lo), "hi": list(m.hi), "cells": list(m.cells),
            "pitch": list(m.pitch), "vertex_count": m.vertex_count,
        })
    return {
        "schema_id": OPERATOR_SCHEMA,
        "n": G.n,
        "config": dumps_config(cfg),
        "constants": {k: v for k, v in G.constants.items()
                      if k != "build_seconds"},
        "cover": {
            "m": G.cover.m,
            "halfwidth": G.cover.halfwidth,
            "margin": G.cover.margin,
            "seed": G.cover.seed,
            "centers": G.cover.centers.tolist(),
            "frames": G.cover.frames.tolist(),
        },
        "charts": charts,
        "vertex_count": G.vertex_count,
    }


def _build_from_cfg(cfg: ExperimentConfig, n: int):
    man = make_manifold(cfg.manifold)
    norm = make_norm(cfg.norm)
    return build_gamma(man, norm, n,
                       halfwidth=cfg.gamma.halfwidth,
                       margin=cfg.gamma.margin, seed=cfg.seed,
                       nodes=cfg.quad.nodes,
                       check_nodes=cfg.quad.check_nodes,
                       pool_size=cfg.gamma.pool_size,
                       suite_size=min(6, cfg.gamma.suite_size),
                       pou_samples=cfg.gamma.pou_samples)


def _cmd_gamma_build(args) -> int:
    cfg = merge_overrides(_load_cfg(args.config), n_list=(args.n,))
    G = _build_from_cfg(cfg, args.n)
    desc = _operator_descriptor(G, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(desc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"gamma build: n={G.n}, {G.cover.m} charts, "
          f"{G.vertex_count} vertices -> {args.out}")
    return 0


def _rebuild_residual(desc: dict, G) -> float:
    """Largest discrepancy between the persisted descriptor and the
    rebuilt operator; 0.0 when the rebuild is byte-faithful."""
    worst = 0.0
    rebuilt = _operator_descriptor(G, loads_config(desc["config"]))
    for key, val in desc["constants"].items():
        new = rebuilt["constants"].get(key)
        if isinstance(val, float) or isinstance(new, float):
            worst = max(worst, abs(float(val) - float(new)))
        elif val != new:
            worst = max(worst, 1.0)
    for part in ("cover", "charts"):
        if json.dumps(desc[part], sort_keys=True) != \
                json.dumps(rebuilt[part], sort_keys=True):
            worst = max(worst, 1.0)
    return worst


_SHORT_COLUMNS = ("bound_name", "paper_value", "sampled_value", "witness",
                  "pass")


def _short_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_SHORT_COLUMNS)
    for r in sort_rows(rows):
        w.writerow([r.bound_name, fmt17(r.paper_value),
                    fmt17(r.sampled_value), r.witness,
                    "true" if r.passed else "false"])
    return buf.getvalue()


def _cmd_gamma_verify(args) -> int:
    with open(args.op, encoding="utf-8") as fh:
        desc = json.load(fh)
    if desc.get("schema_id") != OPERATOR_SCHEMA:
        raise ConfigError(f"{args.op} is not an operator descriptor "
                          f"(schema {desc.get('schema_id')!r})")
    cfg = loads_config(desc["config"])
    G = _build_from_cfg(cfg, int(desc["n"]))
    rows = [r for r in verify_gamma(
        G, random_lip_suite(args.suite_seed, cfg.gamma.suite_size,
                            G.man, G.norm),
        probe_count=cfg.gamma.probe_count, seed=args.suite_seed,
        slack=cfg.slack_for("gamma", 0.05),
        uniform_slack=cfg.slack_for("gamma-uniform", 0.0),
        lip_points=cfg.gamma.lip_points)]
    rows.append(BoundRow("rebuild-deterministic", 0.0,
                         _rebuild_residual(desc, G),
                         witness=f"rebuilt from {args.op}"))
    for r in rows:
        r.suite = "gamma"
        if r.n is None:
            r.n = G.n
    with open(args.report, "w", newline="", encoding="utf-8") as fh:
        fh.write(_short_csv(rows))
    failed = [r for r in rows if not r.passed]
    print(f"gamma verify: {len(rows) - len(failed)}/{len(rows)} bounds "
          f"pass -> {args.report}")
    for r in failed:
        print(f"  FAIL {r.bound_name}: sampled {fmt17(r.sampled_value)}"
              f" vs budget {fmt17(r.budget)}")
    return 0 if not failed else 1


def _print_counterexample(rows, artifacts) -> None:
    A = np.asarray(artifacts["matrix"])
    print("norm descriptor: |x|~ = |Ax|_1 with A =")
    for row in A:
        print("   [% .6f % .6f % .6f]" % tuple(row))

    by_name = {}
    for r in rows:
        by_name.setdefault(r.bound_name, []).append(r)

    print("flat patch:")
    for name in ("flat-patch-body-value", "flat-patch-gauge",
                 "flat-patch-off-control"):
        for r in by_name.get(name, []):
            print(f"   {name:24s} residual {fmt17(r.sampled_value):>24s}"
                  f"  {'pass' if r.passed else 'FAIL'}")

    res = artifacts["search"]
    print("projection search (starts: value at z):")
    for v, z1, z2 in res.trace:
        print(f"   {v:.12f} at z=({z1: .6f}, {z2: .6f})")
    print(f"   reported minimum {fmt17(res.value)} at "
          f"z=({res.z[0]:.6f}, {res.z[1]:.6f}), spread {res.spread:.3g}, "
          f"{res.directions} directions, {res.refine_rounds} refinements")

    T = np.asarray(artifacts["T"])
    print(f"averaged derivative of {artifacts['candidate']} "
          f"(xi={artifacts['xi']:g}):")
    for row in T:
        print("   [% .6f % .6f % .6f]" % tuple(row))
    print("defect table:")
    for name in ("averaged-defect-e1", "averaged-defect-e2",
                 "retraction-displacement", "projection-tension"):
        for r in by_name.get(name, []):
            print(f"   {name:24s} sampled {fmt17(r.sampled_value):>24s}"
                  f" budget {fmt17(r.budget):>24s}"
                  f"  {'pass' if r.passed else 'FAIL'}")


def _cmd_counterexample(args) -> int:
    cfg = merge_overrides(_load_cfg(args.config), seed=args.seed,
                          out=args.out)
    rows, artifacts = counterexample_report(cfg)
    _print_counterexample(rows, artifacts)
    summary = _write_reports(rows, cfg, "counterexample")
    return _report_exit(summary, "counterexample")


def _cmd_plot_data(args) -> int:
    labels = args.label or []
    if labels and len(labels) != len(args.summaries):
        raise ConfigError("--label count must match the summary count")
    labelled = []
    for i, path in enumerate(args.summaries):
        with open(path, encoding="utf-8") as fh:
            summary = json.load(fh)
        label = labels[i] if labels else \
            os.path.splitext(os.path.basename(path))[0]
        labelled.append((label, rows_from_summary(summary)))
    payload = json.dumps(emit_plot_data(labelled), indent=2,
                         sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CalibrationError as e:
        print(f"calibration failure in stage {e.stage}: {e}",
              file=sys.stderr)
        return 3
    except CoverageGapError as e:
        print(f"calibration failure in stage cover: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
