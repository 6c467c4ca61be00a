"""Command-line frontend: generate | fit | evaluate | diff | experiment.

Exit codes: 0 success, 2 input error, 3 solver failure, 4 fit ran out of
iterations with points still outside tolerance (outputs are written
anyway).  A plain ``key = value`` config file can pre-set any long flag of
the chosen subcommand; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as tsio
from .fitting import FitConfig, Method, SolverError, fit, observation_arrays
from .metrics import CSV_HEADER, evaluate, write_reports
from .mc import Experiment, run_experiment, write_experiment
from .splines import InputError
from .surface import write_xyz_grid
from .synthdata import DOMAIN as SYNTH_DOMAIN
from .synthdata import SurfaceKind, SyntheticSpec, exact_surface, sample_with_truth
from .tmesh import ParamRect

_DEFAULT_MAX_ITERS = {Method.LS_T: 8, Method.NURBS_LS: 8, Method.MTA_COMBINED: 10}


def read_config(path) -> dict[str, str]:
    """Parse a ``key = value`` file; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    try:
        fh = open(path, "r", encoding="ascii")
    except OSError as err:
        raise InputError(f"cannot read config {path}: {err}") from err
    with fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, value = text.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(raw: str, like) -> object:
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"cannot parse boolean from {raw!r}")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    return raw


def _merge_config(args: argparse.Namespace, defaults: dict) -> None:
    """Fill unset (None) flags from the config file, then hard defaults."""
    cfg = read_config(args.config) if args.config else {}
    for key, value in cfg.items():
        if key not in defaults:
            raise InputError(f"unknown config key {key!r}")
        if getattr(args, key, None) is None:
            setattr(args, key, _coerce(value, defaults[key]))
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)


def _method(name: str) -> Method:
    try:
        return Method(name)
    except ValueError:
        raise InputError(f"unknown method {name!r}; choose from "
                         f"{[m.value for m in Method]}") from None


def _kind(name: str) -> SurfaceKind:
    try:
        return SurfaceKind(name)
    except ValueError:
        raise InputError(f"unknown surface kind {name!r}") from None


def _check_parent(path) -> None:
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise InputError(f"output directory {parent} does not exist")


# ----------------------------------------------------------------------
# subcommands

_GEN_DEFAULTS = dict(kind="smooth", n=200, sigma_z=0.003, sigma_xy=0.001,
                     gap=False, outliers=0.0, seed=0, out="", truth_out="")


def cmd_generate(args: argparse.Namespace) -> int:
    _merge_config(args, _GEN_DEFAULTS)
    if not args.out:
        raise InputError("generate requires --out")
    _check_parent(args.out)
    if args.truth_out:
        _check_parent(args.truth_out)
    spec = SyntheticSpec(kind=_kind(args.kind), n=args.n, sigma_z=args.sigma_z,
                         sigma_xy=args.sigma_xy, gap=args.gap,
                         outlier_fraction=args.outliers, seed=args.seed)
    obs, truth = sample_with_truth(spec)
    _, phys = observation_arrays(obs)
    tsio.write_xyz(args.out, phys)
    if args.truth_out:
        with open(args.truth_out, "w", encoding="ascii") as fh:
            fh.write("u,v,z_exact,outlier\n")
            for o, ze, fl in zip(obs, truth["z_exact"], truth["outlier"]):
                fh.write(f"{o.param[0]!r},{o.param[1]!r},{ze!r},{int(fl)}\n")
    print(f"wrote {len(obs)} points to {args.out}")
    return 0


_FIT_DEFAULTS = dict(input="", method="mta", th=0.01, max_iters=-1, ls_iters=3,
                     mark_count=2, nu=4, nv=4, seed=0, parametrize="unit",
                     exact="", out="", report="", dump_mesh_svg="",
                     grid_out="", grid_n=0)


def _load_parametrized(path, mode: str):
    cloud = tsio.read_xyz(path)
    if mode == "unit":
        return tsio.parametrize(cloud)
    if mode == "native":
        pts = cloud.points
        domain = ParamRect(float(pts[:, 0].min()), float(pts[:, 0].max()),
                           float(pts[:, 1].min()), float(pts[:, 1].max()))
        obs = [((float(x), float(y)), (float(x), float(y), float(z)))
               for x, y, z in pts]
        from .fitting import Observation
        obs = [Observation(p, q) for p, q in obs]
        return (obs, None), domain
    raise InputError(f"unknown parametrization {mode!r}")


def _exact_fn_for(kind_name: str, transform):
    if not kind_name:
        return None
    kind = _kind(kind_name)
    if transform is None:
        return lambda u, v: exact_surface(kind, u, v)

    def fn(u, v):
        x, y = transform.to_phys(u, v)
        return exact_surface(kind, x, y)

    return fn


def cmd_fit(args: argparse.Namespace) -> int:
    _merge_config(args, _FIT_DEFAULTS)
    if not args.input:
        raise InputError("fit requires --input")
    if not args.out and not args.report:
        raise InputError("fit requires --out and/or --report")
    for p in (args.out, args.report, args.dump_mesh_svg, args.grid_out):
        if p:
            _check_parent(p)
    method = _method(args.method)
    max_iters = args.max_iters if args.max_iters > 0 else _DEFAULT_MAX_ITERS[method]

    if args.parametrize == "unit":
        obs, transform = tsio.parametrize(tsio.read_xyz(args.input))
        domain = ParamRect(0.0, 1.0, 0.0, 1.0)
    else:
        (obs, transform), domain = _load_parametrized(args.input, args.parametrize)

    cfg = FitConfig(th=args.th, max_iters=max_iters, ls_iters=args.ls_iters,
                    mark_count=args.mark_count, method=method,
                    initial_nu=args.nu, initial_nv=args.nv,
                    domain=domain, seed=args.seed)
    exact_fn = _exact_fn_for(args.exact, transform)

    try:
        result = fit(obs, cfg, exact_fn=exact_fn)
    except SolverError as err:
        print(f"solver failure at iteration {err.iteration}: {err}",
              file=sys.stderr)
        return 3

    if args.out:
        tsio.save_surface(args.out, result.surface, transform=transform,
                          meta={"method": method.value, "th": cfg.th})
    if args.report:
        write_reports(args.report, result.reports)
    if args.dump_mesh_svg:
        with open(args.dump_mesh_svg, "w", encoding="ascii") as fh:
            fh.write(result.surface.space.mesh.to_svg())
    if args.grid_out:
        n = args.grid_n if args.grid_n >= 2 else 200
        write_xyz_grid(args.grid_out, result.surface.eval_grid(n, n))
    for ev in result.events:
        print(ev)
    last = result.reports[-1]
    print(f"final: iter={last.iteration} rmse_noise={last.rmse_noise:.6g} "
          f"maxerr={last.maxerr:.6g} n_out={last.n_out} n_cp={last.n_cp}")
    if last.n_out > 0 and last.iteration == max_iters:
        return 4
    return 0


_EVAL_DEFAULTS = dict(surface="", data="", th=0.01, exact="", out="")


def cmd_evaluate(args: argparse.Namespace) -> int:
    _merge_config(args, _EVAL_DEFAULTS)
    if not args.surface or not args.data:
        raise InputError("evaluate requires --surface and --data")
    if args.out:
        _check_parent(args.out)
    surf, transform = tsio.load_surface(args.surface)
    cloud = tsio.read_xyz(args.data)
    pts = cloud.points
    dom = surf.space.domain
    if transform is not None:
        u, v = transform.to_param(pts[:, 0], pts[:, 1])
    else:
        u, v = pts[:, 0], pts[:, 1]
    u = np.clip(u, dom.u_min, dom.u_max)
    v = np.clip(v, dom.v_min, dom.v_max)
    obs = (np.column_stack([u, v]), pts)
    report = evaluate(surf, obs, exact_fn=_exact_fn_for(args.exact, transform),
                      th=args.th)
    lines = CSV_HEADER + "\n" + report.csv_row() + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(lines)
    print(lines, end="")
    return 0


_DIFF_DEFAULTS = dict(a="", b="", nu=200, nv=200, out="")


def cmd_diff(args: argparse.Namespace) -> int:
    _merge_config(args, _DIFF_DEFAULTS)
    if not args.a or not args.b or not args.out:
        raise InputError("diff requires --a, --b and --out")
    _check_parent(args.out)
    surf_a, tr_a = tsio.load_surface(args.a)
    surf_b, _ = tsio.load_surface(args.b)
    U, V, dz = tsio.diff_surfaces(surf_a, surf_b, args.nu, args.nv)
    tsio.write_diff_grid(args.out, U, V, dz, transform=tr_a)
    print(f"diff grid {args.nu}x{args.nv}: mean={dz.mean():.6g} "
          f"min={dz.min():.6g} max={dz.max():.6g}")
    return 0


_EXP_DEFAULTS = dict(kind="smooth", n=100, runs=3, base_seed=0, th=0.01,
                     gap=False, outliers=0.0, methods="ls_t,mta",
                     max_iters=-1, nu=4, nv=4, out_dir="")


def cmd_experiment(args: argparse.Namespace) -> int:
    _merge_config(args, _EXP_DEFAULTS)
    if not args.out_dir:
        raise InputError("experiment requires --out-dir")
    methods = [_method(m.strip()) for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise InputError("no methods given")
    kind = _kind(args.kind)
    spec = SyntheticSpec(kind=kind, n=args.n, gap=args.gap,
                         outlier_fraction=args.outliers)
    tag = kind.value + ("_gap" if args.gap else "") + \
        ("_outliers" if args.outliers else "")
    for method in methods:
        iters = args.max_iters if args.max_iters > 0 else _DEFAULT_MAX_ITERS[method]
        cfg = FitConfig(th=args.th, max_iters=iters, method=method,
                        initial_nu=args.nu, initial_nv=args.nv,
                        domain=SYNTH_DOMAIN)
        exp = Experiment(spec=spec, cfg=cfg, n_runs=args.runs,
                         base_seed=args.base_seed)
        result = run_experiment(exp)
        name = f"{tag}_{method.value}"
        write_experiment(args.out_dir, name, result)
        final = result.final_means()
        print(f"{name}: iter={final['iter']} "
              f"rmse_noise={final['mean_rmse_noise']:.6g} "
              f"n_out={final['mean_n_out']:.6g} n_cp={final['mean_n_cp']:.6g} "
              f"excluded={len(result.excluded)}")
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="tsfit", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic benchmark dataset")
    g.add_argument("--kind", choices=["smooth", "sharp"])
    g.add_argument("--n", type=int)
    g.add_argument("--sigma-z", dest="sigma_z", type=float)
    g.add_argument("--sigma-xy", dest="sigma_xy", type=float)
    g.add_argument("--gap", action="store_const", const=True)
    g.add_argument("--outliers", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--truth-out", dest="truth_out")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a point cloud")
    f.add_argument("--input")
    f.add_argument("--method", choices=[m.value for m in Method])
    f.add_argument("--th", type=float)
    f.add_argument("--max-iters", dest="max_iters", type=int)
    f.add_argument("--ls-iters", dest="ls_iters", type=int)
    f.add_argument("--mark-count", dest="mark_count", type=int)
    f.add_argument("--nu", type=int)
    f.add_argument("--nv", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--parametrize", choices=["unit", "native"])
    f.add_argument("--exact", choices=["", "smooth", "sharp"])
    f.add_argument("--out")
    f.add_argument("--report")
    f.add_argument("--dump-mesh-svg", dest="dump_mesh_svg")
    f.add_argument("--grid-out", dest="grid_out")
    f.add_argument("--grid-n", dest="grid_n", type=int)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("evaluate", help="indicator row of a surface vs data")
    e.add_argument("--surface")
    e.add_argument("--data")
    e.add_argument("--th", type=float)
    e.add_argument("--exact", choices=["", "smooth", "sharp"])
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("diff", help="z-difference grid of two fitted surfaces")
    d.add_argument("--a")
    d.add_argument("--b")
    d.add_argument("--nu", type=int)
    d.add_argument("--nv", type=int)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diff)

    x = sub.add_parser("experiment", help="Monte-Carlo comparison runs")
    x.add_argument("--kind", choices=["smooth", "sharp"])
    x.add_argument("--n", type=int)
    x.add_argument("--runs", type=int)
    x.add_argument("--base-seed", dest="base_seed", type=int)
    x.add_argument("--th", type=float)
    x.add_argument("--gap", action="store_const", const=True)
    x.add_argument("--outliers", type=float)
    x.add_argument("--methods")
    x.add_argument("--max-iters", dest="max_iters", type=int)
    x.add_argument("--nu", type=int)
    x.add_argument("--nv", type=int)
    x.add_argument("--out-dir", dest="out_dir")
    x.set_defaults(func=cmd_experiment)

    for p in (g, f, e, d, x):
        p.add_argument("--config", help="key = value file of flag defaults")

    return top


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except SolverError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
