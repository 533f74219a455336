"""Per-vertex normals, tangent frames and the tangential lifting maps.

Every surface operation in this package starts the same way: project a
vertex's neighborhood onto its approximate tangent plane, which turns the
curved-surface problem into a flat 2D one. The vertex normal is an
inverse-square centroid-distance weighted average of the incident oriented
triangle normals; the tangent frame is any orthonormal basis of its
orthogonal complement (results are frame-invariant, the choice here is just
a deterministic convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshError, TriangleMesh, VertexStars


class DegenerateNormalError(MeshError):
    """Weighted triangle normals cancelled; no usable vertex normal."""


@dataclass(frozen=True)
class TangentFrames:
    """Per-vertex orthonormal frames: (e1, e2, normal) is right-handed."""

    normal: np.ndarray
    e1: np.ndarray
    e2: np.ndarray

    def __len__(self) -> int:
        return len(self.normal)


@dataclass(frozen=True)
class LiftedPolygon:
    """One-ring neighbors of a vertex projected into its tangent plane.

    ``points[i]`` holds the (x, y) frame coordinates of ring vertex i; the
    center vertex itself lifts to the origin.
    """

    center: int
    points: np.ndarray


def vertex_normals(mesh: TriangleMesh) -> np.ndarray:
    """Approximate vertex normals from centroid-weighted triangle normals.

    Each incident triangle contributes its oriented unit normal with weight
    proportional to the inverse squared distance from the vertex to the
    triangle centroid; weights are normalized to sum to one per vertex.

    Returns
    -------
    np.ndarray
        Unit normals, shape (n_vertices, 3).

    Raises
    ------
    DegenerateNormalError
        If the weighted sum cancels (antipodal triangle normals).
    """
    n = mesh.n_vertices
    tri_n = mesh.triangle_normals
    tri_c = mesh.triangle_centroids
    wsum = np.zeros(n)
    nsum = np.zeros((n, 3))
    for k in range(3):
        idx = mesh.triangles[:, k]
        d2 = np.sum((tri_c - mesh.vertices[idx]) ** 2, axis=1)
        if np.any(d2 == 0.0):
            bad = int(idx[np.nonzero(d2 == 0.0)[0][0]])
            raise DegenerateNormalError(
                f"vertex {bad} coincides with an incident triangle centroid"
            )
        w = 1.0 / d2
        np.add.at(wsum, idx, w)
        np.add.at(nsum, idx, w[:, None] * tri_n)

    used = wsum > 0.0
    nsum[used] /= wsum[used, None]
    norms = np.linalg.norm(nsum, axis=1)
    bad = used & (norms < 1e-12)
    if np.any(bad):
        raise DegenerateNormalError(
            f"degenerate normal at vertex {int(np.nonzero(bad)[0][0])}"
        )
    out = np.zeros_like(nsum)
    out[used] = nsum[used] / norms[used, None]
    return out


def tangent_frames(normals: np.ndarray) -> TangentFrames:
    """Deterministic orthonormal tangent frames for unit normals.

    e1 is the projection of the global axis least aligned with the normal
    (ties broken in x, y, z order), e2 = normal x e1. Same input, bit-equal
    output: no randomness anywhere.
    """
    normals = np.asarray(normals, dtype=np.float64)
    single = normals.ndim == 1
    N = normals.reshape(-1, 3)
    axis = np.argmin(np.abs(N), axis=1)
    seed = np.zeros_like(N)
    seed[np.arange(len(N)), axis] = 1.0
    e1 = seed - (np.sum(seed * N, axis=1))[:, None] * N
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(N, e1)
    if single:
        return TangentFrames(N[0], e1[0], e2[0])
    return TangentFrames(N, e1, e2)


def build_frames(mesh: TriangleMesh) -> TangentFrames:
    return tangent_frames(vertex_normals(mesh))


def lift_vector(w: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Project ambient vector(s) onto the tangent plane of a unit normal.

    Accepts a single 3-vector or an (k, 3) batch; idempotent.
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        return w - (w @ normal) * normal
    return w - np.outer(w @ normal, normal)


def lift_points(vertices: np.ndarray, v: int, neighbors: np.ndarray,
                frames: TangentFrames) -> np.ndarray:
    """Frame coordinates of neighbors lifted into the tangent plane at v.

    Returns (x_i, y_i) pairs, shape (k, 2). Because e1 and e2 are orthogonal
    to the normal, the inner products with the raw offsets already realize
    the projection.
    """
    d = vertices[neighbors] - vertices[v]
    return np.stack([d @ frames.e1[v], d @ frames.e2[v]], axis=1)


def lift_polygon(mesh: TriangleMesh, stars: VertexStars, frames: TangentFrames,
                 v: int) -> LiftedPolygon:
    """Lift the ordered one-ring of vertex v into its tangent plane."""
    return LiftedPolygon(v, lift_points(mesh.vertices, v, stars[v].ring, frames))


def lift_scalar(values: np.ndarray, star) -> np.ndarray:
    """Ring-ordered samples of a vertex scalar field (the lift keeps values)."""
    return np.asarray(values)[star.ring]
