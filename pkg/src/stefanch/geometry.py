"""Bulk/boundary meshes and paired nodal fields.

A :class:`MeshPair` holds a P1 triangulation of a polygonal domain together
with its boundary polygon. The boundary is stored as an ordered closed loop
of bulk node indices (the trace map), so a conforming field is fully
described by its bulk nodal vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch


@dataclass(frozen=True, eq=False)
class MeshPair:
    nodes: np.ndarray        # (n, 2)
    triangles: np.ndarray    # (nt, 3), counter-clockwise
    trace: np.ndarray        # (nb,) bulk index of each boundary node, in loop order

    def __post_init__(self):
        for name in ("nodes", "triangles", "trace"):
            getattr(self, name).setflags(write=False)
        self.validate()

    # -- measures ---------------------------------------------------------
    @property
    def n_bulk(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.trace.shape[0]

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        """Edges of the boundary loop as pairs of boundary-local indices."""
        i = np.arange(self.n_boundary)
        return np.stack([i, (i + 1) % self.n_boundary], axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.trace]
        e = self.boundary_edges
        return np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)

    @cached_property
    def arc_length(self) -> np.ndarray:
        """Arc-length parameter of each boundary node, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)[:-1]])

    @property
    def area(self) -> float:
        return float(self.triangle_areas.sum())

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    @cached_property
    def bulk_weights(self) -> np.ndarray:
        """Integrals of the bulk hat functions (row sums of the P1 mass)."""
        w = np.zeros(self.n_bulk)
        np.add.at(w, self.triangles.ravel(), np.repeat(self.triangle_areas / 3.0, 3))
        return w

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        w = np.zeros(self.n_boundary)
        np.add.at(w, self.boundary_edges.ravel(), np.repeat(self.edge_lengths / 2.0, 2))
        return w

    @cached_property
    def trace_weights(self) -> np.ndarray:
        """Boundary weights scattered onto bulk numbering."""
        w = np.zeros(self.n_bulk)
        np.add.at(w, self.trace, self.boundary_weights)
        return w

    # -- invariants -------------------------------------------------------
    def validate(self) -> None:
        n = self.n_bulk
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise ValueError("triangle index out of range")
        if np.any(self.triangle_areas <= 0):
            raise ValueError("non-positive or clockwise triangle")
        if len(np.unique(self.trace)) != len(self.trace):
            raise ValueError("trace map is not injective")
        if np.any(self.edge_lengths <= 0):
            raise ValueError("degenerate boundary edge")
        # boundary edges of the triangulation: edges used by exactly one triangle
        t = self.triangles
        e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        tri_bnd = {tuple(x) for x in uniq[counts == 1]}
        loop = {tuple(sorted((int(self.trace[a]), int(self.trace[b]))))
                for a, b in self.boundary_edges}
        if tri_bnd != loop:
            raise ValueError("boundary loop does not match the triangulation boundary")

    # -- constructors -----------------------------------------------------
    @classmethod
    def unit_square(cls, N: int = 33) -> "MeshPair":
        """Structured triangulation of [0,1]^2 with N x N nodes."""
        if N < 2:
            raise ValueError("N must be at least 2")
        x = np.linspace(0.0, 1.0, N)
        X, Y = np.meshgrid(x, x, indexing="xy")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        idx = np.arange(N * N).reshape(N, N)     # idx[j, i] -> node at (x_i, y_j)
        a = idx[:-1, :-1].ravel()
        b = idx[:-1, 1:].ravel()
        c = idx[1:, 1:].ravel()
        d = idx[1:, :-1].ravel()
        tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
        loop = np.concatenate([idx[0, :-1], idx[:-1, -1], idx[-1, :0:-1], idx[:0:-1, 0]])
        return cls(nodes, tris.astype(np.int64), loop.astype(np.int64))

    @classmethod
    def two_triangle(cls) -> "MeshPair":
        """The unit square split along its diagonal; every node is on the boundary."""
        nodes = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        tris = np.array([[0, 1, 2], [0, 2, 3]])
        return cls(nodes, tris, np.array([0, 1, 2, 3]))

    def dump(self, path: str | Path) -> None:
        """Plain-text listing of nodes, triangles and the boundary loop."""
        lines = [f"nodes {self.n_bulk}"]
        lines += [f"{x!r} {y!r}" for x, y in self.nodes.tolist()]
        lines.append(f"triangles {len(self.triangles)}")
        lines += [" ".join(str(i) for i in t) for t in self.triangles.tolist()]
        lines.append(f"boundary {self.n_boundary}")
        lines += [str(i) for i in self.trace.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class PairedField:
    """Nodal values on the bulk and on the boundary.

    ``conforming`` marks members of the discrete V, where the boundary values
    are the trace of the bulk values.
    """

    bulk: np.ndarray
    boundary: np.ndarray
    conforming: bool = field(default=False)

    def __post_init__(self):
        self.bulk = np.asarray(self.bulk, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)

    def __add__(self, other: "PairedField") -> "PairedField":
        return PairedField(self.bulk + other.bulk, self.boundary + other.boundary,
                           self.conforming and other.conforming)

    def __sub__(self, other: "PairedField") -> "PairedField":
        return PairedField(self.bulk - other.bulk, self.boundary - other.boundary,
                           self.conforming and other.conforming)

    def __mul__(self, a: float) -> "PairedField":
        return PairedField(a * self.bulk, a * self.boundary, self.conforming)

    __rmul__ = __mul__

    @classmethod
    def constant(cls, mesh: MeshPair, c: float) -> "PairedField":
        return cls(np.full(mesh.n_bulk, float(c)), np.full(mesh.n_boundary, float(c)), True)

    @classmethod
    def zeros(cls, mesh: MeshPair) -> "PairedField":
        return cls.constant(mesh, 0.0)


def check_dims(mesh: MeshPair, z: PairedField) -> None:
    if z.bulk.shape != (mesh.n_bulk,) or z.boundary.shape != (mesh.n_boundary,):
        raise DimensionMismatch(
            f"field of shape {z.bulk.shape}/{z.boundary.shape} on mesh with "
            f"{mesh.n_bulk}/{mesh.n_boundary} nodes")


def mean(mesh: MeshPair, z: PairedField) -> float:
    """Combined bulk+boundary average ``(int_Omega z + int_Gamma z_Gamma)/(|Omega|+|Gamma|)``."""
    check_dims(mesh, z)
    total = mesh.bulk_weights @ z.bulk + mesh.boundary_weights @ z.boundary
    return float(total / (mesh.area + mesh.perimeter))


def project_zero_mean(mesh: MeshPair, z: PairedField) -> PairedField:
    """``P z = z - m(z) 1``; preserves conformity."""
    m = mean(mesh, z)
    return PairedField(z.bulk - m, z.boundary - m, z.conforming)


def trace_conform(mesh: MeshPair, bulk_values) -> PairedField:
    """Conforming field whose boundary component is the trace of ``bulk_values``."""
    b = np.asarray(bulk_values, dtype=float)
    if b.shape != (mesh.n_bulk,):
        raise DimensionMismatch(f"expected {mesh.n_bulk} bulk values, got {b.shape}")
    return PairedField(b.copy(), b[mesh.trace].copy(), True)


def is_conforming(mesh: MeshPair, z: PairedField) -> bool:
    check_dims(mesh, z)
    return bool(np.array_equal(z.boundary, z.bulk[mesh.trace]))
