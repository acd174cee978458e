"""Command-line front end: simulate, compare, gdop-map, and selftest."""

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .config import (
    PRESETS,
    ExperimentSpec,
    ScenarioConfig,
    emit_spec,
    load_spec,
    parse_spec,
)
from .errors import SchemaError
from .gdop import DeploymentSpec, gdop_map, raster_grid
from .harness import run_experiment


def _add_common(p):
    p.add_argument("--config", help="experiment JSON document")
    p.add_argument("--preset", choices=sorted(PRESETS), help="scenario preset")
    p.add_argument("--seed", type=int, help="base seed (first of the seed list)")
    p.add_argument("--seeds", type=int, help="number of seeded realizations")
    p.add_argument("--out", help="output directory (default: the spec's out_dir)")
    p.add_argument(
        "--methods", help="comma-separated method list (tracker,no-offgrid,...)"
    )
    p.add_argument("--sweep", help="sweep axis and values, e.g. N=16,64,256")


def _spec_from_args(args, default_methods=None) -> ExperimentSpec:
    if args.config:
        spec = load_spec(args.config)
    else:
        doc = {}
        if args.preset:
            doc["preset"] = args.preset
        spec = parse_spec(doc)
    if args.methods:
        spec.methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    elif default_methods and not args.config:
        spec.methods = list(default_methods)
    if args.sweep:
        if "=" not in args.sweep:
            raise SchemaError("sweep", "expected <axis>=<v1,v2,...>")
        axis, vals = args.sweep.split("=", 1)
        spec.sweep_axis = axis.strip()
        spec.sweep_values = [float(v) for v in vals.split(",") if v.strip()]
    if args.seeds:
        base = args.seed if args.seed is not None else 0
        spec.seeds = list(range(base, base + args.seeds))
    elif args.seed is not None:
        spec.seeds = [args.seed]
    if args.out:
        spec.out_dir = args.out
    return ExperimentSpec(
        scenario=spec.scenario,
        methods=spec.methods,
        sweep_axis=spec.sweep_axis,
        sweep_values=spec.sweep_values,
        seeds=spec.seeds,
        out_dir=spec.out_dir,
    )


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    table = run_experiment(spec, spec.out_dir)
    for agg in table.aggregates():
        print(
            f"{agg['method']}"
            + (f" @ {agg['sweep_value']}" if agg["sweep_value"] is not None else "")
            + f": rmse {agg['mean_rmse']:.4g} m over {len(agg['cdf'])} slots"
        )
    print(f"wrote {os.path.join(spec.out_dir, 'results.csv')}")
    return 0


def cmd_compare(args) -> int:
    if not args.methods and not args.config:
        args.methods = "tracker,no-offgrid,lasso,naive-vbi"
    return cmd_simulate(args)


def cmd_gdop_map(args) -> int:
    deployments = [
        DeploymentSpec(
            kind=k,
            n_antennas=args.K,
            n_ris_h=args.nh,
            n_ris_v=args.nv,
            sigma2=10 ** (args.noise_dbm / 10) * 1e-3,
        )
        for k in args.deployments.split(",")
    ]
    pts = raster_grid(
        (args.xmin, args.xmax), (args.ymin, args.ymax), args.nx, args.ny
    )
    report = gdop_map(pts, deployments)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "gdop.csv")
    report.to_csv(path)
    for name, vals in report.values.items():
        finite = vals[np.isfinite(vals)]
        print(f"{name}: min {finite.min():.4g} median {np.median(finite):.4g}")
    print(f"wrote {path}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest(verbose=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="platoonloc",
        description="Vehicle-platoon location tracking simulator and analytics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run an experiment spec")
    _add_common(p_sim)
    p_sim.set_defaults(fn=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="multi-method sweep comparison")
    _add_common(p_cmp)
    p_cmp.set_defaults(fn=cmd_compare)

    p_gdop = sub.add_parser("gdop-map", help="emit a GDOP raster CSV")
    p_gdop.add_argument("--out", default="results")
    p_gdop.add_argument("--deployments", default="bs,bs+bs,bs+ris")
    p_gdop.add_argument("--K", type=int, default=4)
    p_gdop.add_argument("--nh", type=int, default=16)
    p_gdop.add_argument("--nv", type=int, default=16)
    p_gdop.add_argument("--noise-dbm", type=float, default=-100.0)
    p_gdop.add_argument("--xmin", type=float, default=0.0)
    p_gdop.add_argument("--xmax", type=float, default=200.0)
    p_gdop.add_argument("--ymin", type=float, default=0.0)
    p_gdop.add_argument("--ymax", type=float, default=100.0)
    p_gdop.add_argument("--nx", type=int, default=41)
    p_gdop.add_argument("--ny", type=int, default=21)
    p_gdop.set_defaults(fn=cmd_gdop_map)

    p_self = sub.add_parser("selftest", help="run the built-in oracle checks")
    p_self.set_defaults(fn=cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
