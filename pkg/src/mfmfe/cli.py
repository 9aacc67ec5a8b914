"""Command-line entry points.

Subcommands: ``convergence`` (refinement study of the smooth-solution
benchmark), ``fivespot`` (quarter five-spot marched to steady state),
``randfield`` (Matern log-permeability sample) and ``mesh`` (mesh
generation/export).  Each run writes its delimited outputs, rendered
figures and a manifest with the fully resolved configuration into the
output directory.

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O
error.
"""

import argparse
import os
import sys

from .io import ConfigError, parse_config_file, write_csv, write_manifest, write_vtk
from .mesh import MeshFamilyParams, MeshGenerationError, generate_mesh
from .quadrature import QuadratureVariant
from .random_field import MaternParams, SamplingError, sample_log_normal_field
from .solver import (
    EliminationError,
    LinearSolverError,
    NewtonConvergenceError,
    SolverConfig,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

_COMMON = {
    "outdir": (str, "out", "output directory"),
}

SCHEMAS = {
    "convergence": {
        "family": (str, "smooth", "mesh family: uniform|smooth|kershaw|random"),
        "levels": (int, 5, "number of refinement levels"),
        "n0": (int, 16, "cells per direction on the coarsest level"),
        "variant": (str, "symmetric", "quadrature rule: symmetric|nonsymmetric"),
        "tau": (float, 0.1, "time step"),
        "t_final": (float, 2.0, "final time"),
        "seed": (int, 20170, "seed for the random mesh family"),
        **_COMMON,
    },
    "fivespot": {
        "perm": (str, "constant-full", "permeability: constant-full|piecewise-full|random"),
        "n": (int, 128, "cells per direction"),
        "tau": (float, 5e-3, "time step"),
        "t_final": (float, 10.0, "time horizon (steady stop usually hits first)"),
        "variant": (str, "symmetric", "quadrature rule"),
        "nu": (float, 0.5, "Matern smoothness (random case)"),
        "range": (float, 0.3, "Matern correlation range (random case)"),
        "var": (float, 1.0, "Matern variance (random case)"),
        "seed": (int, 0, "random-field seed"),
        "steady_tol": (float, 1e-8, "stationarity stopping tolerance"),
        **_COMMON,
    },
    "randfield": {
        "nu": (float, 0.5, "Matern smoothness"),
        "range": (float, 0.3, "Matern correlation range"),
        "var": (float, 1.0, "Matern variance"),
        "n": (int, 128, "cells per direction"),
        "seed": (int, 0, "seed"),
        **_COMMON,
    },
    "mesh": {
        "family": (str, "uniform", "mesh family"),
        "n": (int, 16, "cells per direction"),
        "seed": (int, 0, "seed for the random family"),
        **_COMMON,
    },
}

_VARIANTS = {
    "symmetric": QuadratureVariant.SYMMETRIC,
    "nonsymmetric": QuadratureVariant.NONSYMMETRIC,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mfmfe",
        description="Multipoint flux mixed finite elements for slightly compressible Darcy flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="key=value config file")
        for key, (typ, default, help_) in schema.items():
            p.add_argument(
                f"--{key.replace('_', '-')}", dest=key, type=typ, default=None,
                help=f"{help_} (default: {default})",
            )
    return parser


def _resolve(args):
    """Defaults, overridden by the config file, overridden by CLI flags."""
    schema = SCHEMAS[args.command]
    resolved = {k: v[1] for k, v in schema.items()}
    if args.config is not None:
        file_cfg = parse_config_file(args.config)
        unknown = set(file_cfg) - set(schema)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for k, v in file_cfg.items():
            typ = schema[k][0]
            try:
                resolved[k] = typ(v)
            except ValueError:
                raise ConfigError(f"config key {k}: cannot parse {v!r} as {typ.__name__}") from None
    for k in schema:
        v = getattr(args, k)
        if v is not None:
            resolved[k] = v
    return resolved


def _variant(name):
    try:
        return _VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown quadrature variant {name!r}") from None


def _stats_rows(records):
    return [
        [r.step, r.time, r.newton_iters, r.final_residual, r.linear_iters]
        for r in records
    ]


def _cmd_convergence(cfg):
    from .plots import plot_convergence
    from .verification import StudySpec, convergence_study

    study = StudySpec(
        family=cfg["family"],
        levels=cfg["levels"],
        n0=cfg["n0"],
        tau=cfg["tau"],
        t_final=cfg["t_final"],
        variant=_variant(cfg["variant"]),
        seed=cfg["seed"],
    )

    def progress(level, n, err):
        print(
            f"level {level} (n={n}): e_p={err.e_p:.3e} e_p_centers={err.e_p_centers:.3e} "
            f"e_u={err.e_u:.3e} e_u_face={err.e_u_face:.3e}",
            flush=True,
        )

    report = convergence_study(study, progress=progress)
    stem = f"convergence_{cfg['family']}_{cfg['variant']}"
    out = cfg["outdir"]
    write_csv(report.HEADER, report.rows(), os.path.join(out, f"{stem}.csv"))
    plot_convergence(
        report, os.path.join(out, f"{stem}.png"),
        title=f"{cfg['family']} meshes, {cfg['variant']} rule",
    )
    write_manifest(os.path.join(out, f"manifest_{stem}.txt"), {"command": "convergence", **cfg})
    return EXIT_OK


def _cmd_fivespot(cfg):
    from .plots import plot_fivespot
    from .verification import fivespot_run

    config = SolverConfig(steady_tol=cfg["steady_tol"])
    result = fivespot_run(
        case=cfg["perm"],
        n=cfg["n"],
        tau=cfg["tau"],
        t_final=cfg["t_final"],
        variant=_variant(cfg["variant"]),
        config=config,
        nu=cfg["nu"],
        corr_range=cfg["range"],
        variance=cfg["var"],
        seed=cfg["seed"],
    )
    stem = f"fivespot_{cfg['perm']}"
    out = cfg["outdir"]
    fields = {
        "pressure": result.pressure,
        "speed": result.speed,
        "log_speed": result.log_speed,
    }
    if result.log_permeability is not None:
        fields["log_permeability"] = result.log_permeability
    write_vtk(result.mesh, fields, os.path.join(out, f"{stem}.vtk"), title=stem)
    write_csv(
        ["step", "time", "newton_iters", "final_residual", "linear_iters"],
        _stats_rows(result.records),
        os.path.join(out, f"{stem}_stats.csv"),
    )
    plot_fivespot(result, os.path.join(out, f"{stem}.png"))
    write_manifest(
        os.path.join(out, f"manifest_{stem}.txt"),
        {"command": "fivespot", **cfg, "steps": len(result.records), "steady": result.steady},
    )
    print(f"steady={result.steady} after {len(result.records)} steps", flush=True)
    return EXIT_OK


def _cmd_randfield(cfg):
    from .plots import plot_random_field

    params = MaternParams(nu=cfg["nu"], corr_range=cfg["range"], variance=cfg["var"])
    sample = sample_log_normal_field((cfg["n"], cfg["n"]), params, cfg["seed"])
    out = cfg["outdir"]
    n = cfg["n"]
    header = [f"c{i}" for i in range(n)]
    write_csv(header, sample.values.tolist(), os.path.join(out, "randfield.csv"))
    mesh = generate_mesh(MeshFamilyParams("uniform", n))
    write_vtk(
        mesh,
        {"log_permeability": sample.values.ravel()},
        os.path.join(out, "randfield.vtk"),
        title="log permeability sample",
    )
    plot_random_field(mesh, sample.values.ravel(), os.path.join(out, "randfield.png"))
    write_manifest(os.path.join(out, "manifest_randfield.txt"), {"command": "randfield", **cfg})
    return EXIT_OK


def _cmd_mesh(cfg):
    from .plots import plot_mesh

    params = MeshFamilyParams(
        cfg["family"], cfg["n"], seed=cfg["seed"] if cfg["family"] == "random" else None
    )
    mesh = generate_mesh(params)
    stem = f"mesh_{cfg['family']}_{cfg['n']}"
    out = cfg["outdir"]
    write_vtk(mesh, {}, os.path.join(out, f"{stem}.vtk"), title=stem)
    plot_mesh(mesh, os.path.join(out, f"{stem}.png"), title=f"{cfg['family']} n={cfg['n']}")
    write_manifest(os.path.join(out, f"manifest_{stem}.txt"), {"command": "mesh", **cfg})
    return EXIT_OK


_COMMANDS = {
    "convergence": _cmd_convergence,
    "fivespot": _cmd_fivespot,
    "randfield": _cmd_randfield,
    "mesh": _cmd_mesh,
}


def run_cli(argv):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = _resolve(args)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonConvergenceError, LinearSolverError, EliminationError,
            MeshGenerationError, SamplingError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
