"""Convex-hull compression: keep the hull vertices, classify by membership."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ..compression import CompressionScheme, Multiset

HULL_TOL = 1e-9


def as_points(examples, dim: int) -> np.ndarray:
    if isinstance(examples, np.ndarray):
        return examples.reshape(-1, dim)
    return np.array(list(examples), dtype=float).reshape(-1, dim)


def _affine_frame(pts: np.ndarray):
    """Origin and orthonormal basis of the affine hull of ``pts``."""
    origin = pts[0]
    centered = pts - origin
    if len(pts) == 1:
        return origin, np.zeros((pts.shape[1], 0))
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(1.0, float(np.abs(centered).max()))
    rank = int(np.sum(s > HULL_TOL * scale))
    return origin, vt[:rank].T


def hull_vertex_indices(pts: np.ndarray) -> list[int]:
    """Indices of the extreme points of ``pts`` (rows assumed distinct)."""
    n = len(pts)
    if n <= 1:
        return list(range(n))
    origin, basis = _affine_frame(pts)
    r = basis.shape[1]
    if r == 0:
        return [0]
    coords = (pts - origin) @ basis
    if r == 1:
        c = coords[:, 0]
        lo, hi = int(np.argmin(c)), int(np.argmax(c))
        return sorted({lo, hi})
    try:
        return sorted(int(i) for i in ConvexHull(coords).vertices)
    except QhullError:
        # nearly flat input that passed the rank test; drop to its joggled hull
        return sorted(int(i) for i in ConvexHull(coords, qhull_options="QJ").vertices)


@dataclass(frozen=True)
class HullModel:
    """A convex region given by its vertices, tested with tolerance HULL_TOL."""

    dim: int
    vertices: np.ndarray
    origin: Optional[np.ndarray] = None
    basis: Optional[np.ndarray] = None
    equations: Optional[np.ndarray] = None
    interval: Optional[tuple[float, float]] = None

    @classmethod
    def fit(cls, vertices: np.ndarray, dim: int) -> "HullModel":
        vertices = np.asarray(vertices, dtype=float).reshape(-1, dim)
        if len(vertices) == 0:
            return cls(dim, vertices)
        origin, basis = _affine_frame(vertices)
        r = basis.shape[1]
        coords = (vertices - origin) @ basis
        if r == 1:
            return cls(dim, vertices, origin, basis, interval=(coords.min(), coords.max()))
        eqs = None
        if r >= 2:
            try:
                eqs = ConvexHull(coords).equations
            except QhullError:
                eqs = ConvexHull(coords, qhull_options="QJ").equations
        return cls(dim, vertices, origin, basis, equations=eqs)

    def outside(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        if len(self.vertices) == 0:
            return np.ones(len(X), dtype=bool)
        rel = X - self.origin
        proj = rel @ self.basis
        off_plane = np.linalg.norm(rel - proj @ self.basis.T, axis=1) > HULL_TOL
        if self.basis.shape[1] == 0:
            return off_plane
        if self.interval is not None:
            lo, hi = self.interval
            c = proj[:, 0]
            return off_plane | (c < lo - HULL_TOL) | (c > hi + HULL_TOL)
        A, b = self.equations[:, :-1], self.equations[:, -1]
        return off_plane | ((proj @ A.T + b).max(axis=1) > HULL_TOL)

    def to_dict(self) -> dict:
        return {"kind": "hull", "dim": self.dim, "vertices": self.vertices.tolist()}


def hull_scheme(dim: int) -> CompressionScheme:
    """Compression to hull vertices; loss 1 iff a point falls strictly outside.

    Coincident points collapse to one representative, so every vertex
    appears exactly once in the compression.
    """
    if dim not in (2, 3):
        raise ValueError(f"hull scheme supports dimension 2 or 3, got {dim}")

    def compress(U: Multiset) -> Multiset:
        distinct = U.distinct()
        if not distinct:
            return Multiset()
        pts = as_points(distinct, dim)
        return Multiset(distinct[i] for i in hull_vertex_indices(pts))

    def learner(U: Multiset) -> HullModel:
        distinct = U.distinct()
        if not distinct:
            return HullModel(dim, np.zeros((0, dim)))
        pts = as_points(distinct, dim)
        return HullModel.fit(pts[hull_vertex_indices(pts)], dim)

    def loss(h: HullModel, z) -> int:
        return int(h.outside([z])[0])

    def batch_loss(h: HullModel, Z) -> np.ndarray:
        return h.outside(Z).astype(np.int8)

    return CompressionScheme(f"hull{dim}", compress, learner, loss, learner, batch_loss)
