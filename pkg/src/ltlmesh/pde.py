"""Explicit time stepping for surface PDEs: heat, fourth-order diffusion,
Allen-Cahn.

The integrator is plain explicit Euler on the precomputed sparse
Laplacian. That choice is deliberate: the lumped integral of the discrete
Laplacian vanishes identically on closed meshes, so every Euler step
preserves the total integral of the solution exactly (up to round-off),
and the conservation behavior of the spatial discretization stays visible
in the time series instead of being absorbed by a solver.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .io import write_vtk
from .mesh import TriangleMesh
from .operators import LtlOperators

KINDS = ("heat", "biharmonic", "allen_cahn")


class UnstableStepError(RuntimeError):
    """A step produced non-finite values; the message names the offending dt."""

    def __init__(self, dt: float, t: float):
        super().__init__(
            f"unstable step: non-finite values at t={t:g} with dt={dt:g}; "
            f"reduce dt or use the automatic step size"
        )
        self.dt = dt
        self.t = t


@dataclass
class PdeProblem:
    """Problem description for :func:`solve`.

    kind is one of 'heat' (u_t = lap u), 'biharmonic' (u_t = -lap lap u) or
    'allen_cahn' (u_t = eps^2 lap u + reaction). dt=None selects the
    automatic stable step size. The Allen-Cahn reaction defaults to
    u - u^3, which makes the constant states +-1 attracting; set
    reaction_sign='flipped' for the sign-reversed variant u^3 - u.
    """

    kind: str
    initial: np.ndarray
    t_end: float
    dt: float | None = None
    epsilon: float = 0.1
    reaction_sign: str = "standard"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown PDE kind '{self.kind}'; expected one of {KINDS}")
        if self.t_end < 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.dt is not None and self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.kind == "allen_cahn" and self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if self.reaction_sign not in ("standard", "flipped"):
            raise ValueError("reaction_sign must be 'standard' or 'flipped'")
        self.initial = np.asarray(self.initial, dtype=np.float64)


@dataclass
class Trajectory:
    """Sampled solve output; times are strictly increasing, fields finite."""

    times: np.ndarray
    fields: list[np.ndarray]
    energy: np.ndarray
    linf_error: np.ndarray | None
    dt: float
    n_steps: int


# ---------------------------------------------------------------------------
# Initial data and references


def _require_unit_sphere(mesh: TriangleMesh) -> None:
    norms = np.linalg.norm(mesh.vertices, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise ValueError(
            f"vertex {bad} is off the unit sphere (|radius - 1| = "
            f"{abs(norms[bad] - 1.0):.3g})"
        )


def spherical_field(mesh: TriangleMesh, formula: str) -> np.ndarray:
    """Builtin scalar fields on the unit sphere.

    'cos_eta' is the cosine of the polar angle (equals the z coordinate);
    'sin3theta_sin7eta' is sin(3 theta) sin(7 eta) with theta the azimuth
    and eta the polar angle measured from +z.
    """
    _require_unit_sphere(mesh)
    v = mesh.vertices
    if formula == "cos_eta":
        return v[:, 2].copy()
    if formula == "sin3theta_sin7eta":
        theta = np.arctan2(v[:, 1], v[:, 0])
        eta = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
        return np.sin(3.0 * theta) * np.sin(7.0 * eta)
    raise ValueError(f"unknown spherical field '{formula}'")


def torus_disk_field(mesh: TriangleMesh) -> np.ndarray:
    """+-1 indicator of a parameter-space disk on a generated torus mesh.

    Value +1 where sqrt((theta - pi/2)^2 + (eta - pi/2)^2) <= 4/5 and -1
    elsewhere; requires the (theta, eta) chart coordinates the torus
    generator stores on the mesh.
    """
    if mesh.uv is None:
        raise ValueError(
            "mesh carries no chart coordinates; use gen_torus to build it"
        )
    d = np.hypot(mesh.uv[:, 0] - np.pi / 2.0, mesh.uv[:, 1] - np.pi / 2.0)
    return np.where(d <= 0.8, 1.0, -1.0)


def exact_heat_sphere(mesh: TriangleMesh, t: float) -> np.ndarray:
    """Reference heat solution exp(-2t) cos(eta) on the unit sphere."""
    _require_unit_sphere(mesh)
    return np.exp(-2.0 * t) * mesh.vertices[:, 2]


# ---------------------------------------------------------------------------
# Stepping


def stable_dt(ops: LtlOperators, kind: str, epsilon: float = 0.1) -> float:
    """Automatic explicit-Euler step size.

    Combines a curvature-scale heuristic (0.2 r^2 over the largest Laplacian
    of the coordinate fields, r^4 for the fourth-order problem) with a hard
    Gershgorin cap from the assembled operator, which is what actually
    guarantees stability: the heuristic alone can exceed the stability
    limit since it does not scale with the operator's spectral radius.
    """
    r = ops.mesh.mesh_size()
    lam_est = max(
        float(np.abs(ops.laplacian(ops.mesh.vertices[:, k])).max())
        for k in range(3)
    )
    lam_est = max(lam_est, 1e-6)
    gersh = ops.laplacian_infinity_norm()
    if kind == "heat":
        return min(0.2 * r**2 / lam_est, 0.9 / gersh)
    if kind == "allen_cahn":
        # reaction Jacobian |1 - 3u^2| <= 2 on the invariant range [-1, 1]
        return min(0.2 * r**2 / lam_est, 0.9 / (epsilon**2 * gersh + 2.0))
    if kind == "biharmonic":
        return min(0.1 * r**4 / lam_est, 0.9 / gersh**2)
    raise ValueError(f"unknown PDE kind '{kind}'")


def _reaction(u: np.ndarray, sign: str) -> np.ndarray:
    r = u - u**3
    return r if sign == "standard" else -r


def step(problem: PdeProblem, u: np.ndarray, ops: LtlOperators,
         dt: float, t: float = 0.0) -> np.ndarray:
    """One explicit Euler step; raises UnstableStepError on non-finite output."""
    if problem.kind == "heat":
        out = u + dt * ops.laplacian(u)
    elif problem.kind == "biharmonic":
        out = u - dt * ops.laplacian(ops.laplacian(u))
    else:
        out = u + dt * (
            problem.epsilon**2 * ops.laplacian(u)
            + _reaction(u, problem.reaction_sign)
        )
    if not np.all(np.isfinite(out)):
        raise UnstableStepError(dt, t)
    return out


def solve(problem: PdeProblem, ops: LtlOperators, sample_every: int = 10,
          reference=None) -> Trajectory:
    """Integrate to t_end, sampling fields, energies and optional errors.

    Parameters
    ----------
    problem : PdeProblem
    ops : LtlOperators
        Operators for the (closed) mesh carrying the problem.
    sample_every : int
        Record every this-many steps (the initial and final states are
        always recorded).
    reference : callable, optional
        Map t -> exact field; when given, the max-norm error is recorded at
        each sample.
    """
    if len(problem.initial) != ops.n_vertices:
        raise ValueError("initial field length does not match the mesh")
    dt = problem.dt if problem.dt is not None else stable_dt(
        ops, problem.kind, problem.epsilon
    )
    n_steps = int(np.ceil(problem.t_end / dt - 1e-12)) if problem.t_end > 0 else 0

    times = [0.0]
    fields = [problem.initial.copy()]
    energy = [ops.integrate(problem.initial)]
    errors = [] if reference is not None else None
    if errors is not None:
        errors.append(float(np.max(np.abs(problem.initial - reference(0.0)))))

    u = problem.initial.copy()
    t = 0.0
    for k in range(n_steps):
        dt_k = min(dt, problem.t_end - t)
        u = step(problem, u, ops, dt_k, t)
        t += dt_k
        if (k + 1) % sample_every == 0 or k == n_steps - 1:
            times.append(t)
            fields.append(u.copy())
            energy.append(ops.integrate(u))
            if errors is not None:
                errors.append(float(np.max(np.abs(u - reference(t)))))

    return Trajectory(
        times=np.asarray(times),
        fields=fields,
        energy=np.asarray(energy),
        linf_error=None if errors is None else np.asarray(errors),
        dt=dt,
        n_steps=n_steps,
    )


def write_trajectory(prefix: str, mesh: TriangleMesh, trajectory: Trajectory,
                     field_name: str = "u") -> list[str]:
    """Write one VTK file per sample plus an energy/error CSV.

    Files are ``<prefix>_NNNN.vtk`` and ``<prefix>_energy.csv`` with columns
    t, energy, linf_error (the error column stays empty without a
    reference solution). Returns the list of written paths.
    """
    written = []
    for i, (t, f) in enumerate(zip(trajectory.times, trajectory.fields)):
        path = f"{prefix}_{i:04d}.vtk"
        write_vtk(path, mesh, {field_name: f}, title=f"{field_name} at t={t:g}")
        written.append(path)
    csv_path = f"{prefix}_energy.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "energy", "linf_error"])
        for i, t in enumerate(trajectory.times):
            err = (
                ""
                if trajectory.linf_error is None
                else f"{trajectory.linf_error[i]:.17g}"
            )
            writer.writerow([f"{t:.17g}", f"{trajectory.energy[i]:.17g}", err])
    written.append(csv_path)
    return written
