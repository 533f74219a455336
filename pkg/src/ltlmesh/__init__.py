"""Surface calculus on triangle meshes via local tangential lifting.

Discrete gradient, divergence and Laplace-Beltrami operators whose lumped
divergence integral vanishes identically on closed meshes, plus explicit
solvers for surface PDEs and convergence/conservation study harnesses.
"""

from .frames import (
    DegenerateNormalError,
    LiftedPolygon,
    TangentFrames,
    build_frames,
    lift_points,
    lift_polygon,
    lift_scalar,
    lift_vector,
    tangent_frames,
    vertex_normals,
)
from .io import (
    MeshFormatError,
    load_field_csv,
    load_mesh,
    load_obj,
    load_off,
    write_field_csv,
    write_obj,
    write_off,
    write_vtk,
)
from .mesh import (
    BoundaryMeshError,
    DegenerateTriangleError,
    MeshError,
    NonManifoldError,
    TriangleMesh,
    ValidationReport,
    VertexStar,
    VertexStars,
    build_stars,
    gen_flat_patch,
    gen_icosphere,
    gen_torus,
)
from .operators import (
    DegenerateStencilError,
    GradientStencil,
    LtlOperators,
    build_stencils,
    conservation_residual,
    divergence,
    divergence_matrix,
    gradient,
    gradient_matrix,
    integrate,
    laplacian,
    outer_normal,
    refine_frames,
    solve_stencil,
)
from .pde import (
    PdeProblem,
    Trajectory,
    UnstableStepError,
    exact_heat_sphere,
    solve,
    spherical_field,
    stable_dt,
    step,
    torus_disk_field,
    write_trajectory,
)
from .studies import (
    ConservationReport,
    PolynomialField,
    StudyReport,
    fit_loglog_slope,
    run_conservation_study,
    run_polynomial_study,
    surface_laplacian,
    surface_mean_curvature_sum,
    surface_normal,
)

__version__ = "0.1.0"
