"""Command-line front end: mesh generation and inspection, operator
application, PDE runs and studies, all reproducible from flags alone.

Mesh arguments accept either a file path (OFF/OBJ) or the shorthands
``icosphere:K`` and ``torus:NxM``, which generate in memory so every
experiment is a one-liner.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io, pde, studies
from .mesh import MeshError, TriangleMesh, gen_icosphere, gen_torus
from .operators import LtlOperators


def _cap_threads() -> None:
    # LTL_THREADS caps effective parallelism (library work is deterministic
    # either way; this only restricts CPU concurrency, e.g. of BLAS pools).
    cap = os.environ.get("LTL_THREADS")
    if not cap:
        return
    try:
        n = max(1, int(cap))
    except ValueError:
        raise SystemExit(f"LTL_THREADS must be an integer, got '{cap}'")
    if hasattr(os, "sched_setaffinity"):
        cpus = sorted(os.sched_getaffinity(0))
        os.sched_setaffinity(0, set(cpus[:n]))


def resolve_mesh(spec: str) -> TriangleMesh:
    """Load a mesh file or generate from 'icosphere:K' / 'torus:NxM'."""
    if spec.startswith("icosphere:"):
        return gen_icosphere(int(spec.split(":", 1)[1]))
    if spec.startswith("torus:"):
        dims = spec.split(":", 1)[1]
        try:
            n_theta, n_eta = (int(tok) for tok in dims.lower().split("x"))
        except ValueError:
            raise MeshError(f"bad torus spec '{spec}'; expected torus:NxM")
        return gen_torus(n_theta, n_eta)
    return io.load_mesh(spec)


def scalar_field(spec: str, mesh: TriangleMesh) -> np.ndarray:
    """Builtin scalar field specs.

    cos_eta | sin3theta_sin7eta | torus_disk | const:C |
    poly:c0,c1,... (canonical monomial order) | csv:PATH[:COLUMN]
    """
    if spec == "cos_eta" or spec == "sin3theta_sin7eta":
        return pde.spherical_field(mesh, spec)
    if spec == "torus_disk":
        return pde.torus_disk_field(mesh)
    if spec.startswith("const:"):
        return np.full(mesh.n_vertices, float(spec.split(":", 1)[1]))
    if spec.startswith("poly:"):
        coeffs = [float(tok) for tok in spec.split(":", 1)[1].split(",")]
        return studies.PolynomialField.from_coeffs(coeffs).eval(mesh.vertices)
    if spec.startswith("csv:"):
        parts = spec.split(":")
        fields = io.load_field_csv(parts[1])
        name = parts[2] if len(parts) > 2 else next(iter(fields))
        if name not in fields:
            raise ValueError(f"no column '{name}' in {parts[1]}")
        values = fields[name]
        if values.ndim != 1:
            raise ValueError(f"column '{name}' is not a scalar field")
        if len(values) != mesh.n_vertices:
            raise ValueError("field length does not match the mesh")
        return values
    raise ValueError(f"unknown scalar field spec '{spec}'")


def vector_field(spec: str, mesh: TriangleMesh) -> np.ndarray:
    """Builtin vector field specs: zero | rot_z | csv:PATH[:NAME]."""
    if spec == "zero":
        return np.zeros((mesh.n_vertices, 3))
    if spec == "rot_z":
        # tangential rotation field around the z axis: e_z x position
        return np.cross(np.array([0.0, 0.0, 1.0]), mesh.vertices)
    if spec.startswith("csv:"):
        parts = spec.split(":")
        fields = io.load_field_csv(parts[1])
        vectors = {k: v for k, v in fields.items() if v.ndim == 2}
        name = parts[2] if len(parts) > 2 else next(iter(vectors), None)
        if name is None or name not in vectors:
            raise ValueError(f"no vector field columns in {parts[1]}")
        if len(vectors[name]) != mesh.n_vertices:
            raise ValueError("field length does not match the mesh")
        return vectors[name]
    raise ValueError(f"unknown vector field spec '{spec}'")


def _write_output(path: str, fmt: str | None, mesh: TriangleMesh,
                  fields: dict[str, np.ndarray]) -> None:
    if fmt is None:
        fmt = os.path.splitext(path)[1].lstrip(".").lower() or "vtk"
    if fmt == "vtk":
        io.write_vtk(path, mesh, fields)
    elif fmt == "csv":
        io.write_field_csv(path, mesh, fields)
    else:
        raise ValueError(f"unknown output format '{fmt}' (use vtk or csv)")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_mesh(args) -> int:
    if args.action == "gen":
        if args.shape == "icosphere":
            mesh = gen_icosphere(args.subdiv)
        else:
            mesh = gen_torus(args.ntheta, args.neta)
        ext = os.path.splitext(args.out)[1].lower()
        if ext == ".obj":
            io.write_obj(args.out, mesh)
        else:
            io.write_off(args.out, mesh)
        print(f"wrote {args.out}: {mesh.n_vertices} vertices, "
              f"{mesh.n_triangles} triangles")
        return 0
    mesh = resolve_mesh(args.mesh)
    report = mesh.validate()
    print(f"vertices:  {mesh.n_vertices}")
    print(f"triangles: {mesh.n_triangles}")
    print(f"edges:     {len(mesh.edges)}")
    print(f"mesh size: {mesh.mesh_size():.6g}")
    print(f"area:      {mesh.area():.6g}")
    print(f"euler:     {mesh.euler_characteristic()}")
    print(f"status:    {report.summary()}")
    return 0 if report.valid else 1


def cmd_op(args) -> int:
    mesh = resolve_mesh(args.mesh)
    ops = LtlOperators.build(mesh)
    fields: dict[str, np.ndarray] = {}
    if args.operator == "grad":
        h = scalar_field(args.field, mesh)
        fields["input"] = h
        fields["grad"] = ops.gradient(h)
    elif args.operator == "div":
        x = vector_field(args.field, mesh)
        div = ops.divergence(x)
        fields["div"] = div
        residual = ops.integrate(div)
        print(f"conservation residual (integral of div): {residual:.6e}")
    else:
        h = scalar_field(args.field, mesh)
        lap = ops.laplacian(h)
        fields["input"] = h
        fields["lap"] = lap
        residual = ops.integrate(lap)
        print(f"conservation residual (integral of lap): {residual:.6e}")
        if args.field == "cos_eta":
            # eigenfield of the sphere Laplacian: reference value -2z
            err = np.abs(lap + 2.0 * mesh.vertices[:, 2]).max()
            print(f"max error vs reference -2*cos_eta: {err:.6e}")
    _write_output(args.out, args.format, mesh, fields)
    print(f"wrote {args.out}")
    return 0


def cmd_pde(args) -> int:
    mesh = resolve_mesh(args.mesh)
    ops = LtlOperators.build(mesh)
    kind = args.equation.replace("-", "_")
    default_fields = {
        "heat": "cos_eta",
        "biharmonic": "sin3theta_sin7eta",
        "allen_cahn": "torus_disk",
    }
    spec = args.field or default_fields[kind]
    u0 = scalar_field(spec, mesh)
    problem = pde.PdeProblem(
        kind=kind,
        initial=u0,
        t_end=args.t_end,
        dt=args.dt,
        epsilon=args.eps,
        reaction_sign=args.reaction_sign,
    )
    reference = None
    if kind == "heat" and spec == "cos_eta":
        on_sphere = np.allclose(
            np.linalg.norm(mesh.vertices, axis=1), 1.0, atol=1e-9
        )
        if on_sphere:
            reference = lambda t: pde.exact_heat_sphere(mesh, t)  # noqa: E731
    traj = pde.solve(problem, ops, sample_every=args.sample_every,
                     reference=reference)
    written = pde.write_trajectory(args.out_prefix, mesh, traj)
    drift = np.abs(traj.energy - traj.energy[0]).max()
    print(f"dt = {traj.dt:.6g}, steps = {traj.n_steps}, "
          f"samples = {len(traj.times)}")
    print(f"energy drift |E(t)-E(0)| max = {drift:.6e}")
    if traj.linf_error is not None:
        print(f"final linf error vs reference = {traj.linf_error[-1]:.6e}")
    print(f"wrote {len(written)} files with prefix {args.out_prefix}")
    return 0


def cmd_study(args) -> int:
    if args.study == "convergence":
        levels = [int(tok) for tok in args.levels.split(",")]
        surface = "unit_sphere" if args.surface == "sphere" else "paper_torus"
        report = studies.run_polynomial_study(
            surface=surface, levels=levels, n_fields=args.fields, seed=args.seed
        )
        report.to_csv(f"{args.out_prefix}_convergence.csv")
        print(report.summary())
        print(f"wrote {args.out_prefix}_convergence.csv")
        return 0
    mesh = resolve_mesh(args.mesh)
    report = studies.run_conservation_study(
        mesh, n_trials=args.trials, seed=args.seed, mesh_label=args.mesh
    )
    report.to_csv(f"{args.out_prefix}_conservation.csv")
    print(report.summary())
    print(f"wrote {args.out_prefix}_conservation.csv")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltlmesh",
        description="Surface calculus on triangle meshes via tangential "
                    "lifting: conservative gradient/divergence/Laplacian "
                    "operators, surface PDE solvers and convergence studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="generate or inspect meshes")
    mesh_sub = p_mesh.add_subparsers(dest="action", required=True)
    p_gen = mesh_sub.add_parser("gen", help="generate an analytic mesh")
    p_gen.add_argument("--shape", choices=["icosphere", "torus"], required=True)
    p_gen.add_argument("--subdiv", type=int, default=3,
                       help="icosphere subdivision level (default 3)")
    p_gen.add_argument("--ntheta", type=int, default=64,
                       help="torus major-circle resolution (default 64)")
    p_gen.add_argument("--neta", type=int, default=32,
                       help="torus minor-circle resolution (default 32)")
    p_gen.add_argument("--out", required=True,
                       help="output path (.off or .obj)")
    p_gen.set_defaults(func=cmd_mesh)
    p_info = mesh_sub.add_parser("info", help="print counts and validation")
    p_info.add_argument("mesh", help="mesh path or icosphere:K / torus:NxM")
    p_info.set_defaults(func=cmd_mesh)

    p_op = sub.add_parser("op", help="apply a discrete operator to a field")
    p_op.add_argument("operator", choices=["grad", "div", "lap"])
    p_op.add_argument("--mesh", required=True,
                      help="mesh path or icosphere:K / torus:NxM")
    p_op.add_argument("--field", required=True,
                      help="scalar: cos_eta | sin3theta_sin7eta | torus_disk "
                           "| const:C | poly:c0,c1,... | csv:PATH[:COL]; "
                           "vector (div): zero | rot_z | csv:PATH[:NAME]")
    p_op.add_argument("--out", required=True, help="output file (.vtk or .csv)")
    p_op.add_argument("--format", choices=["vtk", "csv"], default=None)
    p_op.set_defaults(func=cmd_op)

    p_pde = sub.add_parser("pde", help="integrate a surface PDE")
    p_pde.add_argument("equation", choices=["heat", "biharmonic", "allen-cahn"])
    p_pde.add_argument("--mesh", required=True)
    p_pde.add_argument("--field", default=None,
                       help="initial data spec (defaults: heat cos_eta, "
                            "biharmonic sin3theta_sin7eta, allen-cahn "
                            "torus_disk)")
    p_pde.add_argument("--t-end", type=float, default=0.5)
    p_pde.add_argument("--dt", type=float, default=None,
                       help="time step (default: automatic stable step)")
    p_pde.add_argument("--eps", type=float, default=0.1,
                       help="Allen-Cahn interface parameter (default 0.1)")
    p_pde.add_argument("--reaction-sign", choices=["standard", "flipped"],
                       default="standard",
                       help="Allen-Cahn reaction u-u^3 (standard) or u^3-u")
    p_pde.add_argument("--sample-every", type=int, default=50)
    p_pde.add_argument("--out-prefix", default="pde",
                       help="prefix for VTK series and energy CSV")
    p_pde.set_defaults(func=cmd_pde)

    p_study = sub.add_parser("study", help="convergence / conservation studies")
    study_sub = p_study.add_subparsers(dest="study", required=True)
    p_conv = study_sub.add_parser("convergence")
    p_conv.add_argument("--surface", choices=["sphere", "torus"],
                        default="sphere")
    p_conv.add_argument("--levels", default="2,3,4,5",
                        help="comma-separated refinement levels")
    p_conv.add_argument("--fields", type=int, default=100,
                        help="number of random polynomial fields")
    p_conv.add_argument("--seed", type=int, default=0)
    p_conv.add_argument("--out-prefix", default="study")
    p_conv.set_defaults(func=cmd_study)
    p_cons = study_sub.add_parser("conservation")
    p_cons.add_argument("--mesh", required=True)
    p_cons.add_argument("--trials", type=int, default=20)
    p_cons.add_argument("--seed", type=int, default=0)
    p_cons.add_argument("--out-prefix", default="study")
    p_cons.set_defaults(func=cmd_study)

    return parser


def main(argv=None) -> int:
    _cap_threads()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MeshError, io.MeshFormatError, pde.UnstableStepError,
            ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
