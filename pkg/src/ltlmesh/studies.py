"""Convergence and conservation studies with analytic oracles.

The convergence protocol evaluates the discrete Laplacian of random
trivariate polynomials (total degree at most 4) over a refinement family
of sphere or torus meshes and fits log-log error slopes. The reference
values come from the closed-form restriction identity

    lap_surface f = lap f - Hess f(n, n) - H * df/dn

where n is the outward unit surface normal and H the sum of the principal
curvatures; for the unit sphere and the standard torus (major radius 1,
minor radius 1/2) both are available in closed form, and polynomial
derivatives are exact, so the oracle carries no discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import _fmt
from .mesh import TriangleMesh, gen_icosphere, gen_torus
from .operators import LtlOperators

SURFACES = ("unit_sphere", "paper_torus")
MAX_DEGREE = 4


def monomial_exponents(max_degree: int = MAX_DEGREE) -> np.ndarray:
    """Canonical monomial order: ascending total degree, then lexicographic
    with the x exponent varying slowest. Shape (n_monomials, 3)."""
    exps = []
    for d in range(max_degree + 1):
        for a in range(d, -1, -1):
            for b in range(d - a, -1, -1):
                exps.append((a, b, d - a - b))
    return np.asarray(exps, dtype=np.int64)


@dataclass(frozen=True)
class PolynomialField:
    """Trivariate polynomial with exact evaluation and derivatives.

    ``exponents`` holds one (a, b, c) row per monomial x^a y^b z^c and
    ``coeffs`` the matching coefficients. Total degree is capped at 4 and
    at least one coefficient must be nonzero.
    """

    exponents: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        exps = np.asarray(self.exponents, dtype=np.int64)
        cf = np.asarray(self.coeffs, dtype=np.float64)
        if exps.ndim != 2 or exps.shape[1] != 3 or len(exps) != len(cf):
            raise ValueError("exponents must be (m, 3) with matching coefficients")
        if exps.size and exps.sum(axis=1).max() > MAX_DEGREE:
            raise ValueError(f"total degree above {MAX_DEGREE} is not supported")
        if not np.any(cf != 0.0):
            raise ValueError("polynomial must have at least one nonzero coefficient")
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "coeffs", cf)

    @classmethod
    def from_coeffs(cls, coeffs) -> "PolynomialField":
        """Build from coefficients in the canonical monomial order (padded)."""
        exps = monomial_exponents()
        cf = np.zeros(len(exps))
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if len(coeffs) > len(exps):
            raise ValueError(f"at most {len(exps)} coefficients supported")
        cf[: len(coeffs)] = coeffs
        keep = cf != 0.0
        return cls(exps[keep], cf[keep])

    @classmethod
    def random(cls, rng: np.random.Generator,
               max_degree: int = MAX_DEGREE) -> "PolynomialField":
        """Coefficients i.i.d. uniform on [-1, 1] over all monomials."""
        exps = monomial_exponents(max_degree)
        while True:
            cf = rng.uniform(-1.0, 1.0, len(exps))
            if np.any(cf != 0.0):
                return cls(exps, cf)

    def _powers(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        # powers[i, m] = x_i^a_m * y_i^b_m * z_i^c_m
        return (
            pts[:, 0][:, None] ** self.exponents[:, 0]
            * pts[:, 1][:, None] ** self.exponents[:, 1]
            * pts[:, 2][:, None] ** self.exponents[:, 2]
        )

    def eval(self, points: np.ndarray) -> np.ndarray:
        out = self._powers(points) @ self.coeffs
        return out if np.ndim(points) == 2 else out[0]

    def partial(self, axis: int) -> "PolynomialField | None":
        """Exact partial derivative; None when it vanishes identically."""
        keep = self.exponents[:, axis] > 0
        if not np.any(keep):
            return None
        exps = self.exponents[keep].copy()
        cf = self.coeffs[keep] * exps[:, axis]
        exps[:, axis] -= 1
        return PolynomialField(exps, cf)

    def grad(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 3))
        for axis in range(3):
            d = self.partial(axis)
            if d is not None:
                out[:, axis] = d.eval(pts)
        return out if np.ndim(points) == 2 else out[0]

    def hess(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        out = np.zeros((len(pts), 3, 3))
        for i in range(3):
            di = self.partial(i)
            if di is None:
                continue
            for j in range(i, 3):
                dij = di.partial(j)
                if dij is not None:
                    vals = dij.eval(pts)
                    out[:, i, j] = vals
                    if i != j:
                        out[:, j, i] = vals
        return out if np.ndim(points) == 2 else out[0]


# ---------------------------------------------------------------------------
# Analytic surface geometry


def _on_unit_sphere(points: np.ndarray) -> None:
    r = np.linalg.norm(points, axis=-1)
    if np.any(np.abs(r - 1.0) > 1e-9):
        raise ValueError("point off the unit sphere")


def _on_paper_torus(points: np.ndarray) -> None:
    rho = np.hypot(points[..., 0], points[..., 1])
    level = (rho - 1.0) ** 2 + points[..., 2] ** 2
    if np.any(np.abs(level - 0.25) > 1e-9):
        raise ValueError("point off the torus")


def surface_normal(surface: str, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if surface == "unit_sphere":
        _on_unit_sphere(pts)
        out = pts.copy()
    elif surface == "paper_torus":
        _on_paper_torus(pts)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        out = 2.0 * np.stack(
            [(rho - 1.0) * pts[:, 0] / rho, (rho - 1.0) * pts[:, 1] / rho, pts[:, 2]],
            axis=1,
        )
    else:
        raise ValueError(f"unknown surface '{surface}'; expected one of {SURFACES}")
    return out if np.ndim(points) == 2 else out[0]


def surface_mean_curvature_sum(surface: str, points: np.ndarray) -> np.ndarray:
    """Sum of the principal curvatures with respect to the outward normal."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if surface == "unit_sphere":
        _on_unit_sphere(pts)
        out = np.full(len(pts), 2.0)
    elif surface == "paper_torus":
        _on_paper_torus(pts)
        rho = np.hypot(pts[:, 0], pts[:, 1])
        out = 2.0 + 2.0 * (rho - 1.0) / rho
    else:
        raise ValueError(f"unknown surface '{surface}'; expected one of {SURFACES}")
    return out if np.ndim(points) == 2 else out[0]


def surface_laplacian(poly: PolynomialField, surface: str,
                      points: np.ndarray) -> np.ndarray:
    """Exact surface Laplacian of a polynomial restricted to the surface."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = surface_normal(surface, pts)
    h = surface_mean_curvature_sum(surface, pts)
    hess = poly.hess(pts)
    grad = poly.grad(pts)
    full = np.trace(hess, axis1=1, axis2=2)
    nhn = np.einsum("ni,nij,nj->n", n, hess, n)
    gn = np.sum(grad * n, axis=1)
    out = full - nhn - h * gn
    return out if np.ndim(points) == 2 else out[0]


# ---------------------------------------------------------------------------
# Reports


def fit_loglog_slope(r: np.ndarray, err: np.ndarray) -> float:
    """Least-squares slope of log(err) against log(r)."""
    r = np.asarray(r, dtype=np.float64)
    err = np.maximum(np.asarray(err, dtype=np.float64), 1e-300)
    return float(np.polyfit(np.log(r), np.log(err), 1)[0])


@dataclass(frozen=True)
class StudyReport:
    """Per-level error norms and fitted convergence orders.

    The l2 norm is the area-weighted RMS over vertices,
    sqrt(sum A_v e_v^2 / sum A_v), so l2 <= linf holds level by level;
    per-level values aggregate the random trials by their median (max also
    kept for reference).
    """

    surface: str
    levels: tuple
    r: np.ndarray
    linf: np.ndarray
    l2: np.ndarray
    linf_max: np.ndarray
    l2_max: np.ndarray
    slope_linf: float
    slope_l2: float
    n_fields: int
    seed: int

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("level,r,linf,l2,slope_linf,slope_l2\n")
            for i, lvl in enumerate(self.levels):
                fh.write(
                    f"{lvl},{_fmt(self.r[i])},{_fmt(self.linf[i])},"
                    f"{_fmt(self.l2[i])},{_fmt(self.slope_linf)},"
                    f"{_fmt(self.slope_l2)}\n"
                )

    def summary(self) -> str:
        lines = [
            f"Laplacian convergence on {self.surface} "
            f"({self.n_fields} random polynomial fields, seed {self.seed})",
            "errors are median over fields; l2 = area-weighted RMS over vertices",
            f"{'level':>6} {'r':>12} {'linf':>14} {'l2':>14}",
        ]
        for i, lvl in enumerate(self.levels):
            lines.append(
                f"{lvl:>6} {self.r[i]:>12.6g} {self.linf[i]:>14.6g} "
                f"{self.l2[i]:>14.6g}"
            )
        lines.append(
            f"fitted slopes: linf {self.slope_linf:.3f}, l2 {self.slope_l2:.3f}"
        )
        return "\n".join(lines)


@dataclass(frozen=True)
class ConservationReport:
    """Residuals of the two discrete conservation laws on random fields."""

    mesh_label: str
    n_trials: int
    seed: int
    divergence_residuals: np.ndarray
    laplacian_residuals: np.ndarray
    divergence_normalized: np.ndarray
    laplacian_normalized: np.ndarray

    @property
    def max_normalized(self) -> float:
        both = np.concatenate(
            [self.divergence_normalized, self.laplacian_normalized]
        )
        return float(np.abs(both).max()) if len(both) else 0.0

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("trial,kind,residual,normalized\n")
            for i in range(self.n_trials):
                fh.write(
                    f"{i},divergence,{_fmt(self.divergence_residuals[i])},"
                    f"{_fmt(self.divergence_normalized[i])}\n"
                )
            for i in range(self.n_trials):
                fh.write(
                    f"{i},laplacian,{_fmt(self.laplacian_residuals[i])},"
                    f"{_fmt(self.laplacian_normalized[i])}\n"
                )

    def summary(self) -> str:
        if self.n_trials == 0:
            return f"conservation study on {self.mesh_label}: no trials"
        return (
            f"conservation study on {self.mesh_label} "
            f"({self.n_trials} trials, seed {self.seed})\n"
            f"max |integral of div X|  = "
            f"{np.abs(self.divergence_residuals).max():.3e} "
            f"(normalized {np.abs(self.divergence_normalized).max():.3e})\n"
            f"max |integral of lap h|  = "
            f"{np.abs(self.laplacian_residuals).max():.3e} "
            f"(normalized {np.abs(self.laplacian_normalized).max():.3e})"
        )


# ---------------------------------------------------------------------------
# Study runners


def level_mesh(surface: str, level: int) -> TriangleMesh:
    """Refinement family member: icosphere subdivision level, or a torus
    grid with n_theta = 2^level * 4 and a 2:1 aspect."""
    if surface == "unit_sphere":
        return gen_icosphere(level)
    if surface == "paper_torus":
        n_theta = 4 * 2**level
        return gen_torus(n_theta, max(3, n_theta // 2))
    raise ValueError(f"unknown surface '{surface}'; expected one of {SURFACES}")


def run_polynomial_study(surface: str = "unit_sphere",
                         levels=(2, 3, 4, 5), n_fields: int = 100,
                         seed: int = 0) -> StudyReport:
    """Discrete-Laplacian errors on random polynomial fields over a mesh family.

    The same ``n_fields`` polynomials (sub-seeded from (seed, trial), so the
    report is reproducible bit for bit) are evaluated on every level; errors
    against the closed-form surface Laplacian are aggregated per level by
    the median over fields.
    """
    levels = tuple(int(lv) for lv in levels)
    if len(levels) < 2:
        raise ValueError("need at least 2 refinement levels to fit a slope")
    polys = [
        PolynomialField.random(np.random.default_rng((seed, t)))
        for t in range(n_fields)
    ]

    r = np.zeros(len(levels))
    linf = np.zeros(len(levels))
    l2 = np.zeros(len(levels))
    linf_max = np.zeros(len(levels))
    l2_max = np.zeros(len(levels))
    for i, lvl in enumerate(levels):
        mesh = level_mesh(surface, lvl)
        ops = LtlOperators.build(mesh)
        r[i] = mesh.mesh_size()
        va = mesh.vertex_areas
        total = va.sum()
        e_linf = np.zeros(n_fields)
        e_l2 = np.zeros(n_fields)
        for t, poly in enumerate(polys):
            sampled = poly.eval(mesh.vertices)
            err = ops.laplacian(sampled) - surface_laplacian(
                poly, surface, mesh.vertices
            )
            e_linf[t] = np.abs(err).max()
            e_l2[t] = np.sqrt((va * err**2).sum() / total)
        linf[i] = np.median(e_linf) if n_fields else 0.0
        l2[i] = np.median(e_l2) if n_fields else 0.0
        linf_max[i] = e_linf.max() if n_fields else 0.0
        l2_max[i] = e_l2.max() if n_fields else 0.0

    return StudyReport(
        surface=surface,
        levels=levels,
        r=r,
        linf=linf,
        l2=l2,
        linf_max=linf_max,
        l2_max=l2_max,
        slope_linf=fit_loglog_slope(r, linf),
        slope_l2=fit_loglog_slope(r, l2),
        n_fields=n_fields,
        seed=seed,
    )


def run_conservation_study(mesh: TriangleMesh, n_trials: int = 20,
                           seed: int = 0, mesh_label: str = "mesh",
                           ops: LtlOperators | None = None) -> ConservationReport:
    """Conservation residuals for random vector and scalar fields.

    For each trial the lumped integral of the discrete divergence of a
    random vector field, and of the discrete Laplacian of a random scalar
    field, is recorded; normalization is by (total area x max field
    magnitude). On a valid closed mesh both vanish to round-off.
    """
    mesh.require_closed()
    if ops is None:
        ops = LtlOperators.build(mesh)
    area = mesh.area()
    res_div = np.zeros(n_trials)
    res_lap = np.zeros(n_trials)
    norm_div = np.zeros(n_trials)
    norm_lap = np.zeros(n_trials)
    for t in range(n_trials):
        x = np.random.default_rng((seed, 0, t)).uniform(
            -1.0, 1.0, (mesh.n_vertices, 3)
        )
        res_div[t] = ops.conservation_residual(x)
        norm_div[t] = res_div[t] / (area * np.linalg.norm(x, axis=1).max())
        h = np.random.default_rng((seed, 1, t)).uniform(-1.0, 1.0, mesh.n_vertices)
        res_lap[t] = ops.integrate(ops.laplacian(h))
        norm_lap[t] = res_lap[t] / (area * np.abs(h).max())
    return ConservationReport(
        mesh_label=mesh_label,
        n_trials=n_trials,
        seed=seed,
        divergence_residuals=res_div,
        laplacian_residuals=res_lap,
        divergence_normalized=norm_div,
        laplacian_normalized=norm_lap,
    )
