"""Triangle mesh container, validation, ordered one-ring stars and analytic generators.

The mesh is immutable after construction: all queries are pure and cached
lazily, so a validated mesh can be shared freely between operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

# A triangle counts as degenerate when its area falls at or below this
# fraction of (max edge length)^2.
DEGENERATE_AREA_FACTOR = 1e-12


class MeshError(ValueError):
    """Base class for mesh construction and topology errors."""


class NonManifoldError(MeshError):
    """A vertex whose incident triangles do not form a single fan."""


class DegenerateTriangleError(MeshError):
    """A triangle with (numerically) zero area."""


class BoundaryMeshError(MeshError):
    """An operation that requires a closed mesh received one with boundary."""


class TriangleMesh:
    """Indexed triangle mesh in 3D.

    Parameters
    ----------
    vertices : array_like
        Vertex positions, shape (n_vertices, 3).
    triangles : array_like
        Vertex index triples, shape (n_triangles, 3). Windings must be
        globally consistent for downstream operators; use :meth:`validate`
        to check.
    uv : array_like, optional
        Per-vertex parameter coordinates, shape (n_vertices, 2). Stored by
        generators that sample a chart (e.g. the torus) so that fields
        defined in parameter space can be evaluated later.
    """

    def __init__(self, vertices, triangles, uv=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must have shape (m, 3)")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshError("triangle index out of range")
        self.uv = None if uv is None else np.ascontiguousarray(uv, dtype=np.float64)
        if self.uv is not None and self.uv.shape != (len(self.vertices), 2):
            raise MeshError("uv must have shape (n_vertices, 2)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def _halfedges(self) -> np.ndarray:
        """Directed edges (t0->t1, t1->t2, t2->t0), shape (3m, 2)."""
        t = self.triangles
        return np.stack(
            [t[:, [0, 1, 2]].reshape(-1), t[:, [1, 2, 0]].reshape(-1)], axis=1
        )

    @cached_property
    def _adj_dir(self) -> sparse.csr_matrix:
        """Directed edge-incidence counts; entry (i,j) = #triangles traversing i->j."""
        he = self._halfedges
        n = self.n_vertices
        data = np.ones(len(he))
        return sparse.csr_matrix((data, (he[:, 0], he[:, 1])), shape=(n, n))

    @cached_property
    def _adj_sym(self) -> sparse.csr_matrix:
        return self._adj_dir + self._adj_dir.T

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (n_edges, 2)."""
        he = np.sort(self._halfedges, axis=1)
        return np.unique(he, axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def mesh_size(self) -> float:
        """Maximum edge length (the refinement parameter of the discretization)."""
        if not len(self.edges):
            raise MeshError("mesh has no edges")
        return float(self.edge_lengths.max())

    @cached_property
    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        t = self.triangles
        v = self.vertices
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    @cached_property
    def triangle_cross(self) -> np.ndarray:
        """Unnormalized oriented area vectors cross(v1-v0, v2-v0), shape (m, 3)."""
        v0, v1, v2 = self.triangle_corners
        return np.cross(v1 - v0, v2 - v0)

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.triangle_cross, axis=1)

    @cached_property
    def triangle_normals(self) -> np.ndarray:
        """Oriented unit normals from the stored winding, shape (m, 3)."""
        cr = self.triangle_cross
        nrm = np.linalg.norm(cr, axis=1)
        if np.any(nrm == 0.0):
            bad = int(np.nonzero(nrm == 0.0)[0][0])
            raise DegenerateTriangleError(f"triangle {bad} has zero area")
        return cr / nrm[:, None]

    @cached_property
    def triangle_centroids(self) -> np.ndarray:
        v0, v1, v2 = self.triangle_corners
        return (v0 + v1 + v2) / 3.0

    def triangle_area(self, t: int) -> float:
        """Area of one triangle; raises on degenerate triangles."""
        area = float(self.triangle_areas[t])
        if area <= DEGENERATE_AREA_FACTOR * self.mesh_size() ** 2:
            raise DegenerateTriangleError(f"triangle {t} is degenerate (area {area:g})")
        return area

    def triangle_centroid(self, t: int) -> np.ndarray:
        return self.triangle_centroids[t]

    def area(self) -> float:
        return float(self.triangle_areas.sum())

    @cached_property
    def star_areas(self) -> np.ndarray:
        """Per-vertex total incident triangle area, shape (n,)."""
        rep = np.repeat(self.triangle_areas, 3)
        return np.bincount(self.triangles.reshape(-1), rep, minlength=self.n_vertices)

    @cached_property
    def vertex_areas(self) -> np.ndarray:
        """Lumped vertex areas (one third of the incident star area)."""
        return self.star_areas / 3.0

    @cached_property
    def vertex_triangles(self) -> list[np.ndarray]:
        """Unordered incident-triangle indices per vertex."""
        order = np.argsort(self.triangles.reshape(-1), kind="stable")
        tri_of_entry = order // 3
        counts = np.bincount(self.triangles.reshape(-1), minlength=self.n_vertices)
        splits = np.cumsum(counts)[:-1]
        return np.split(tri_of_entry, splits)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    def is_edge_manifold(self) -> bool:
        return bool(self._adj_sym.data.max(initial=0) <= 2)

    def is_oriented(self) -> bool:
        """True when no directed edge is traversed twice in the same direction."""
        return bool(self._adj_dir.data.max(initial=0) <= 1)

    def is_closed(self) -> bool:
        coo = sparse.triu(self._adj_sym, format="coo")
        return not np.any(coo.data == 1)

    def validate(self) -> "ValidationReport":
        """Check manifoldness, orientation, closedness and degeneracy.

        Never raises; all violations are collected in the report so that
        broken files can still be inspected.
        """
        sym = sparse.triu(self._adj_sym, format="coo")
        edge_ij = np.stack([sym.row, sym.col], axis=1)
        boundary = edge_ij[sym.data == 1]
        nonmanifold = edge_ij[sym.data > 2]

        dircoo = self._adj_dir.tocoo()
        mis = dircoo.data > 1
        misoriented = np.sort(
            np.stack([dircoo.row[mis], dircoo.col[mis]], axis=1), axis=1
        )
        misoriented = np.unique(misoriented, axis=0) if len(misoriented) else misoriented

        if self.n_triangles:
            thr = DEGENERATE_AREA_FACTOR * self.mesh_size() ** 2
            degenerate = np.nonzero(self.triangle_areas <= thr)[0]
        else:
            degenerate = np.empty(0, dtype=np.int64)

        referenced = np.zeros(self.n_vertices, dtype=bool)
        referenced[self.triangles.reshape(-1)] = True
        unreferenced = np.nonzero(~referenced)[0]

        return ValidationReport(
            n_vertices=self.n_vertices,
            n_triangles=self.n_triangles,
            boundary_edges=boundary,
            nonmanifold_edges=nonmanifold,
            misoriented_edges=misoriented,
            degenerate_triangles=degenerate,
            unreferenced_vertices=unreferenced,
        )

    def require_closed(self) -> None:
        """Raise unless the mesh passes validation and is closed."""
        report = self.validate()
        if not report.valid:
            raise MeshError(f"invalid mesh: {report.summary()}")
        if not report.closed:
            raise BoundaryMeshError(
                f"operation requires a closed mesh; found "
                f"{len(report.boundary_edges)} boundary edges"
            )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :meth:`TriangleMesh.validate`; empty arrays mean no violations."""

    n_vertices: int
    n_triangles: int
    boundary_edges: np.ndarray
    nonmanifold_edges: np.ndarray
    misoriented_edges: np.ndarray
    degenerate_triangles: np.ndarray
    unreferenced_vertices: np.ndarray

    @property
    def closed(self) -> bool:
        return len(self.boundary_edges) == 0 and self.edge_manifold

    @property
    def edge_manifold(self) -> bool:
        return len(self.nonmanifold_edges) == 0

    @property
    def oriented(self) -> bool:
        return len(self.misoriented_edges) == 0

    @property
    def valid(self) -> bool:
        """Manifold, consistently oriented, no degenerate triangles or stray vertices."""
        return (
            self.edge_manifold
            and self.oriented
            and len(self.degenerate_triangles) == 0
            and len(self.unreferenced_vertices) == 0
        )

    def summary(self) -> str:
        parts = [
            f"{self.n_vertices} vertices, {self.n_triangles} triangles",
            "closed" if self.closed else f"{len(self.boundary_edges)} boundary edges",
        ]
        if not self.edge_manifold:
            parts.append(f"{len(self.nonmanifold_edges)} non-manifold edges")
        if not self.oriented:
            parts.append(f"{len(self.misoriented_edges)} misoriented edges")
        if len(self.degenerate_triangles):
            parts.append(f"{len(self.degenerate_triangles)} degenerate triangles")
        if len(self.unreferenced_vertices):
            parts.append(f"{len(self.unreferenced_vertices)} unreferenced vertices")
        return "; ".join(parts)


@dataclass(frozen=True)
class VertexStar:
    """Ordered one-ring of a vertex.

    ``ring[j]`` and ``ring[(j+1) % n]`` are the endpoints of the j-th link
    edge and ``ring_triangles[j]`` the triangle spanning (center, ring[j],
    ring[j+1]). For closed stars the ring is cyclic and counterclockwise
    about the vertex normal; open (boundary) stars keep the walk order and
    satisfy ``len(ring_triangles) == len(ring) - 1``.
    """

    center: int
    ring: np.ndarray
    ring_triangles: np.ndarray
    closed: bool

    @property
    def valence(self) -> int:
        return len(self.ring)


class VertexStars:
    """Container of ordered one-ring stars for all vertices."""

    def __init__(self, stars: list[VertexStar]):
        self._stars = stars

    def __len__(self) -> int:
        return len(self._stars)

    def __getitem__(self, v: int) -> VertexStar:
        return self._stars[v]

    def __iter__(self):
        return iter(self._stars)


def build_stars(mesh: TriangleMesh, normals: np.ndarray) -> VertexStars:
    """Order each vertex's one-ring by walking shared link edges.

    Connectivity is authoritative; the normal only fixes the sense, so the
    ordering is robust on coarse meshes where lifted angles are unreliable.

    Parameters
    ----------
    mesh : TriangleMesh
    normals : np.ndarray
        Per-vertex approximate unit normals, shape (n, 3); used to make
        closed rings counterclockwise.

    Raises
    ------
    NonManifoldError
        If a vertex's incident triangles do not form a single fan.
    """
    tris = mesh.triangles
    verts = mesh.vertices
    stars: list[VertexStar] = []
    empty = np.empty(0, dtype=np.int64)

    for v, incident in enumerate(mesh.vertex_triangles):
        if len(incident) == 0:
            stars.append(VertexStar(v, empty, empty, False))
            continue

        # Rotate each incident triangle so the center comes first; the
        # remaining ordered pair is a directed link edge.
        successor: dict[int, tuple[int, int]] = {}
        heads = []
        for t in incident:
            a, b, c = tris[t]
            if a == v:
                e = (b, c)
            elif b == v:
                e = (c, a)
            else:
                e = (a, b)
            if e[0] in successor:
                raise NonManifoldError(
                    f"vertex {v}: link edge from {e[0]} repeated"
                )
            successor[e[0]] = (e[1], int(t))
            heads.append(e[0])

        targets = {s[0] for s in successor.values()}
        starts = [h for h in heads if h not in targets]
        if len(starts) > 1:
            raise NonManifoldError(f"vertex {v}: incident triangles form multiple fans")
        start = starts[0] if starts else min(successor)

        ring = [start]
        ring_tris = []
        cur = start
        while cur in successor:
            nxt, t = successor.pop(cur)
            ring_tris.append(t)
            if nxt == start:
                break
            ring.append(nxt)
            cur = nxt
        if successor:
            raise NonManifoldError(f"vertex {v}: incident triangles form multiple fans")

        closed = len(ring_tris) == len(ring)
        ring_arr = np.asarray(ring, dtype=np.int64)
        tris_arr = np.asarray(ring_tris, dtype=np.int64)

        if closed:
            # Fix the sense: the signed area of the polygon projected onto
            # the tangent plane must be positive about the normal.
            d = verts[ring_arr] - verts[v]
            n = normals[v]
            lifted = d - np.outer(d @ n, n)
            signed = np.cross(lifted, np.roll(lifted, -1, axis=0)) @ n
            if signed.sum() < 0.0:
                ring_arr = np.concatenate([ring_arr[:1], ring_arr[1:][::-1]])
                tris_arr = tris_arr[::-1]

        stars.append(VertexStar(v, ring_arr, tris_arr, closed))

    return VertexStars(stars)


# ---------------------------------------------------------------------------
# Generators


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    return verts, faces


def gen_icosphere(subdivisions: int) -> TriangleMesh:
    """Unit sphere mesh: 4-way subdivided icosahedron, 20 * 4**k triangles.

    Vertices are reprojected to the unit sphere after every subdivision
    level, which keeps the triangles close to uniform.

    Parameters
    ----------
    subdivisions : int
        Number of subdivision levels, 0 <= subdivisions <= 8 (resource guard).
    """
    if not 0 <= subdivisions <= 8:
        raise ValueError("subdivisions must be between 0 and 8")
    verts, faces = _icosahedron()
    for _ in range(subdivisions):
        vlist = list(verts)
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                p = vlist[a] + vlist[b]
                vlist.append(p / np.linalg.norm(p))
                idx = len(vlist) - 1
                midpoint[key] = idx
            return idx

        new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
        for i, (a, b, c) in enumerate(faces):
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces[4 * i : 4 * i + 4] = [
                [a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca],
            ]
        verts = np.asarray(vlist)
        faces = new_faces
    return TriangleMesh(verts, faces)


def gen_torus(n_theta: int, n_eta: int) -> TriangleMesh:
    """Torus with major radius 1 and minor radius 1/2 on a regular chart grid.

    The chart is x(theta, eta) = ((cos(eta)/2 + 1) cos(theta),
    (cos(eta)/2 + 1) sin(theta), sin(eta)/2); each grid quad is split into
    two triangles, giving 2 * n_theta * n_eta triangles. The (theta, eta)
    coordinates are stored on the mesh as ``uv``.
    """
    if n_theta < 3 or n_eta < 3:
        raise ValueError("n_theta and n_eta must be at least 3")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    eta = 2.0 * np.pi * np.arange(n_eta) / n_eta
    tt, ee = np.meshgrid(theta, eta, indexing="ij")
    tt = tt.reshape(-1)
    ee = ee.reshape(-1)
    ring = 0.5 * np.cos(ee) + 1.0
    verts = np.stack([ring * np.cos(tt), ring * np.sin(tt), 0.5 * np.sin(ee)], axis=1)

    def idx(i, j):
        return (i % n_theta) * n_eta + (j % n_eta)

    faces = []
    for i in range(n_theta):
        for j in range(n_eta):
            v00 = idx(i, j)
            v10 = idx(i + 1, j)
            v01 = idx(i, j + 1)
            v11 = idx(i + 1, j + 1)
            # Counterclockwise in the (theta, eta) chart = outward in space.
            faces.append([v00, v10, v11])
            faces.append([v00, v11, v01])
    uv = np.stack([tt, ee], axis=1)
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64), uv=uv)


def gen_flat_patch(rings: int, spacing: float = 1.0) -> TriangleMesh:
    """Flat triangular-lattice disk in the z = 0 plane, centered at the origin.

    With ``rings >= 2`` every vertex of the innermost ring has a complete
    one-ring of interior vertices, which makes the patch suitable for
    pointwise operator evaluation at the center.
    """
    if rings < 1:
        raise ValueError("rings must be at least 1")
    coords = []
    for r in range(-rings, rings + 1):
        for q in range(-rings, rings + 1):
            if (abs(q) + abs(r) + abs(q + r)) // 2 <= rings:
                coords.append((q, r))
    coords.sort(key=lambda qr: (qr[1], qr[0]))
    index = {qr: i for i, qr in enumerate(coords)}
    verts = np.array(
        [(spacing * (q + 0.5 * r), spacing * (np.sqrt(3.0) / 2.0) * r, 0.0)
         for q, r in coords]
    )
    faces = []
    for q, r in coords:
        up = [(q, r), (q + 1, r), (q, r + 1)]
        down = [(q + 1, r), (q + 1, r + 1), (q, r + 1)]
        for tri in (up, down):
            if all(p in index for p in tri):
                faces.append([index[p] for p in tri])
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))
