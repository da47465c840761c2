"""Command-line entry point: ``wallmodels <subcommand> [options]``.

Exit status is 0 on success, 1 when a run completes but fails its
validation check (or a model error is raised), and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .. import surface
from ..eqwm import Method
from ..errors import ConfigurationError, WallModelError
from ..quadrature import rule_table_csv
from . import bench, coupled
from .apriori import run_apriori
from .config import DriverConfig, Model, output_dir, read_config
from .profiles import ProfileFormat, ingest_profile, synthetic_reichardt

APRIORI_TARGET = 0.03
FILTER_TARGET = 0.30
EXACT_TARGET = 1e-8


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value file overriding defaults")

    p = argparse.ArgumentParser(prog="wallmodels", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("quadtable", parents=[common], help="print GLL nodes and weights as CSV")
    q.add_argument("--q", type=int, action="append", dest="q_values", help="rule order (repeatable)")

    a = sub.add_parser("apriori", parents=[common], help="drive a wall model with reference data")
    a.add_argument("--model", choices=[m.value for m in Model])
    a.add_argument("--retau", type=float, dest="re_tau")
    a.add_argument("--profile", type=Path, help="two-column reference profile")
    a.add_argument("--format", choices=[f.value for f in ProfileFormat], dest="profile_format")
    a.add_argument("--synthetic", action="store_true", help="use a generated Reichardt profile")
    a.add_argument("--n", type=int, help="points or cells (default: optimal count)")
    a.add_argument("--h-wm", type=float, dest="h_wm_over_delta")
    a.add_argument("--dt", type=float)
    a.add_argument("--steps", type=int)

    b = sub.add_parser("bench", parents=[common], help="cost benchmarks to CSV")
    b.add_argument("--models", help="comma-separated subset of fv,gq-linear,gq-clustered")
    b.add_argument("--retau", help="comma-separated Re_tau values", dest="re_list")
    b.add_argument("--n", help="comma-separated counts (default: optimal count)", dest="n_list")
    b.add_argument("--reps", type=int)
    b.add_argument("--output", type=Path, help="CSV path (default: $WALLMODELS_OUTPUT_DIR/bench.csv)")

    c = sub.add_parser("coupled", parents=[common], help="synchronised loop on a scenario mesh")
    c.add_argument("--scenario", choices=[k.value for k in surface.ScenarioKind])
    c.add_argument("--flow", choices=[k.value for k in coupled.FlowKind])
    c.add_argument("--steps", type=int)
    c.add_argument("--dt", type=float)
    c.add_argument("--retau", type=float, dest="re_tau")
    c.add_argument("--u0", type=float)
    c.add_argument("--amplitude", type=float, help="sinusoid amplitude (relative) or pulse dp/dx")
    c.add_argument("--h-wm", type=float, dest="h_wm")
    c.add_argument("--mode", choices=[m.value for m in surface.GradientMode])
    c.add_argument("--filter-passes", type=int)
    c.add_argument("--noise", type=float, help="std of seeded perturbations added to U (m/s)")
    c.add_argument("--seed", type=int)
    c.add_argument("--iwm-legacy-sublayer", action="store_true", default=None)
    c.add_argument("--output", type=Path, help="time-series CSV path")
    c.add_argument("--checkpoint", type=Path, help="per-face state CSV path")

    g = sub.add_parser("gradtest", parents=[common], help="surface-gradient scenario check")
    g.add_argument("--scenario", choices=[k.value for k in surface.ScenarioKind])
    g.add_argument("--mode", choices=[m.value for m in surface.GradientMode])
    g.add_argument("--filter-passes", type=int)
    g.add_argument("--output", type=Path, help="diagnostics CSV path")

    defaults = {
        "quadtable": {"q_values": None},
        "apriori": {
            "model": Model.GQ_CLUSTERED.value,
            "re_tau": 1000.0,
            "profile": None,
            "profile_format": ProfileFormat.Y_PLUS_U_PLUS.value,
            "synthetic": False,
            "n": None,
            "h_wm_over_delta": 0.1,
            "dt": 5e-3,
            "steps": 20000,
        },
        "bench": {
            "models": "fv,gq-linear,gq-clustered",
            "re_list": "1000,10000,100000,1000000",
            "n_list": None,
            "reps": bench.MIN_REPS,
            "output": None,
        },
        "coupled": {
            "scenario": surface.ScenarioKind.UNIFORM_HEX.value,
            "flow": coupled.FlowKind.UNIFORM.value,
            "steps": 100,
            "dt": 5e-3,
            "re_tau": 1000.0,
            "u0": 16.9,
            "amplitude": 0.1,
            "h_wm": 0.1,
            "mode": surface.GradientMode.GLOBAL_VECTOR.value,
            "filter_passes": 0,
            "noise": 0.0,
            "seed": 0,
            "iwm_legacy_sublayer": False,
            "output": None,
            "checkpoint": None,
        },
        "gradtest": {
            "scenario": surface.ScenarioKind.ROTATED_JUNCTURE.value,
            "mode": surface.GradientMode.NAIVE.value,
            "filter_passes": 0,
            "output": None,
        },
    }
    for name, sp in sub.choices.items():
        sp.set_defaults(**defaults[name])
    return p, sub.choices, defaults


def _parse(argv):
    """Parse ``argv``; a ``--config`` file replaces built-in defaults, explicit flags win."""
    parser, subparsers, defaults = _build_parser()
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        cfg = read_config(args.config)
    except OSError as exc:
        parser.error(f"cannot read config: {exc}")
    unknown = set(cfg) - set(defaults[args.command])
    if unknown:
        parser.error(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
    subparsers[args.command].set_defaults(**cfg)
    return parser.parse_args(argv)


def _cmd_quadtable(args) -> int:
    sys.stdout.write(rule_table_csv(args.q_values or [8]))
    return 0


def _cmd_apriori(args) -> int:
    cfg = DriverConfig(
        model=Model(args.model),
        re_tau=float(args.re_tau),
        h_wm_over_delta=float(args.h_wm_over_delta),
        n=args.n,
        dt=float(args.dt),
        steps=int(args.steps),
    )
    if args.profile is not None:
        profile = ingest_profile(args.profile, ProfileFormat(args.profile_format), None)
    elif args.synthetic:
        profile = synthetic_reichardt(cfg.re_tau)
    else:
        raise ConfigurationError("apriori needs --profile <file> or --synthetic")
    report = run_apriori(cfg, profile)
    print(f"profile = {profile.source}")
    print("\n".join(report.lines()))
    target = APRIORI_TARGET if not cfg.model.is_iwm else 0.05
    ok = report.tau_w_rel_error < target
    print(f"result = {'pass' if ok else 'fail'} (tau_w error target {target:g})")
    return 0 if ok else 1


def _split(text, cast):
    return [cast(x) for x in str(text).split(",") if x.strip()]


def _cmd_bench(args) -> int:
    methods = [Method(m.strip()) for m in str(args.models).split(",") if m.strip()]
    res = _split(args.re_list, float)
    ns = _split(args.n_list, int) if args.n_list else [None]
    sweep = [(m, re, n) for re in res for m in methods for n in ns]
    records = bench.run_benchmarks(sweep, reps=int(args.reps))
    path = args.output or output_dir() / "bench.csv"
    Path(path).write_text(bench.records_csv(records))
    for key, val in sorted(bench.summarize(records).items()):
        print(f"{key} = {val:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_coupled(args) -> int:
    kind = surface.ScenarioKind(args.scenario)
    params = {"periodic": True} if kind is surface.ScenarioKind.UNIFORM_HEX else {}
    sc = surface.generate_scenario(kind, **params)
    xs = [f.centroid[0] for f in sc.mesh.wall_faces]
    extent = max(xs) + min(xs)  # cells start at x = 0
    flow = coupled.OuterFlow(
        args.flow,
        u0=float(args.u0),
        amplitude=float(args.amplitude),
        wavelength=float(extent),
        pulse_start=5 * float(args.dt),
        pulse_width=5 * float(args.dt),
        noise=float(args.noise),
        seed=int(args.seed),
    )
    result = coupled.run_coupled_loop(
        sc.mesh,
        flow,
        int(args.steps),
        float(args.dt),
        h_wm=float(args.h_wm),
        nu=1.0 / float(args.re_tau),
        legacy=bool(args.iwm_legacy_sublayer),
        mode=args.mode,
        filter_passes=int(args.filter_passes),
    )
    out = args.output or output_dir() / "coupled.csv"
    Path(out).write_text(result.csv())
    ck = args.checkpoint or output_dir() / "checkpoint.csv"
    Path(ck).write_text(coupled.checkpoint_csv(result.states))
    ordered = coupled.stage_sequence_ok(result.stage_log)
    fallbacks = sum(s.fallback for s in result.states)
    print(f"steps = {args.steps}")
    print(f"faces = {sc.mesh.n_faces}")
    print(f"stage_order = {'ok' if ordered else 'broken'}")
    print(f"homogeneity_defect = {coupled.homogeneity_defect(result.states):.3e}")
    print(f"fallback_faces = {fallbacks}")
    print(f"wrote {out}")
    print(f"wrote {ck}")
    return 0 if ordered else 1


def _cmd_gradtest(args) -> int:
    kind = surface.ScenarioKind(args.scenario)
    sc = surface.generate_scenario(kind)
    fmap = surface.build_face_cell_map(sc.mesh)
    bundle = surface.surface_gradients(sc.local_fields(), sc.mesh, fmap, sc.h_wm, args.mode)
    if args.filter_passes:
        bundle = surface.spatial_filter(bundle, sc.mesh, int(args.filter_passes))
    ref = sc.analytic_gradients()
    faces = sc.focus_faces or sc.interior_faces
    if kind is surface.ScenarioKind.TET_FAN:
        # derivative of L_x along local x is the one the defect zeroes
        err = surface.relative_error(bundle, ref, faces, columns=[0])
        target = FILTER_TARGET
    else:
        err = surface.relative_error(bundle, ref, faces)
        target = EXACT_TARGET
    out = args.output or output_dir() / f"gradtest_{kind.value}_{args.mode}.csv"
    Path(out).write_text(surface.diagnostics_csv(bundle, ref, args.mode))
    ok = bool(np.isfinite(err) and err <= target)
    print(f"scenario = {kind.value}")
    print(f"mode = {args.mode}")
    print(f"filter_passes = {args.filter_passes}")
    print(f"max_relative_error = {err:.6g}")
    print(f"result = {'pass' if ok else 'fail'} (target {target:g})")
    print(f"wrote {out}")
    return 0 if ok else 1


COMMANDS = {
    "quadtable": _cmd_quadtable,
    "apriori": _cmd_apriori,
    "bench": _cmd_bench,
    "coupled": _cmd_coupled,
    "gradtest": _cmd_gradtest,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (WallModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
