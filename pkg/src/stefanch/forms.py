"""Assembled bilinear forms on conforming P1 fields.

The combined Dirichlet form

    a(u, z) = int_Omega grad u . grad z + int_Gamma grad_G u_G . grad_G z_G

becomes, on conforming fields, the single matrix ``K = K_bulk + T' K_gamma T``
where ``T`` picks boundary values out of the bulk vector. The boundary part
is the periodic 1D P1 stiffness along the arc length of the polygon.

Zero-mean solves with ``K`` use one Lagrange-multiplier row carrying the mean
weights, so ``K`` itself is never modified.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, IncompatibleRHS, NonZeroMean, SolverFailure
from .geometry import MeshPair, PairedField, check_dims, mean, trace_conform

# mutation hook for the verification suite; never changed in production code
_BOUNDARY_STIFFNESS_SIGN = 1.0

MEAN_TOL = 1e-10
CG_RTOL = 1e-11


def _p1_bulk(mesh: MeshPair) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    t = mesh.triangles
    p = mesh.nodes[t]                       # (nt, 3, 2)
    area = mesh.triangle_areas
    # gradients of barycentric coordinates: rotate the opposite edge
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    g = np.stack([e0, e1, e2], axis=1)[:, :, ::-1] * np.array([-1.0, 1.0])
    g /= (2.0 * area)[:, None, None]
    kloc = area[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    mloc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_bulk
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((mloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def _p1_loop(mesh: MeshPair) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    e = mesh.boundary_edges
    h = mesh.edge_lengths
    kloc = (np.array([[1.0, -1.0], [-1.0, 1.0]])[None] / h[:, None, None])
    mloc = (np.array([[2.0, 1.0], [1.0, 2.0]])[None] * (h / 6.0)[:, None, None])
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    nb = mesh.n_boundary
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(nb, nb)).tocsr()
    M = sp.coo_matrix((mloc.ravel(), (rows, cols)), shape=(nb, nb)).tocsr()
    return K, M


class DiscreteSpace:
    """Mesh plus assembled operators; immutable after construction.

    Parameters
    ----------
    mesh : MeshPair
    solver : {"direct", "cg"}
        Zero-mean stiffness solves by sparse LU of the bordered system, or by
        conjugate gradients on the compatible singular system.
    """

    def __init__(self, mesh: MeshPair, solver: str = "direct"):
        if solver not in ("direct", "cg"):
            raise ValueError(f"unknown solver {solver!r}")
        self.mesh = mesh
        self.solver = solver
        n, nb = mesh.n_bulk, mesh.n_boundary
        self.K_bulk, self.M_bulk = _p1_bulk(mesh)
        self.K_gamma, self.M_gamma = _p1_loop(mesh)
        self.K_gamma = self.K_gamma * _BOUNDARY_STIFFNESS_SIGN
        self.T = sp.csr_matrix((np.ones(nb), (np.arange(nb), mesh.trace)), shape=(nb, n))
        Tt = self.T.T.tocsr()
        self.K = (self.K_bulk + Tt @ self.K_gamma @ self.T).tocsr()
        self.M = (self.M_bulk + Tt @ self.M_gamma @ self.T).tocsr()
        self.lumped = mesh.bulk_weights + mesh.trace_weights
        self.w = self.lumped.copy()          # M @ 1: mean-constraint row
        self.total = mesh.area + mesh.perimeter

    @property
    def n(self) -> int:
        return self.mesh.n_bulk

    # -- factorizations ---------------------------------------------------
    @cached_property
    def _bordered_lu(self):
        n = self.n
        w = sp.csr_matrix(self.w.reshape(1, n))
        A = sp.bmat([[self.K, w.T], [w, None]], format="csc")
        try:
            return spla.splu(A)
        except RuntimeError as exc:   # pragma: no cover - singular assembly
            raise SolverFailure(str(exc)) from exc

    @cached_property
    def _mass_lu(self):
        return spla.splu(self.M.tocsc())

    # -- primitive solves -------------------------------------------------
    def solve_zero_mean(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        """Zero-mean ``x`` with ``a(x, z) = <rhs, z>`` for every zero-mean conforming ``z``."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.n,):
            raise DimensionMismatch(f"dual vector of length {rhs.shape} for {self.n} nodes")
        if check:
            scale = np.abs(rhs).sum()
            if abs(rhs.sum()) > 1e-10 * scale + 1e-13:
                raise IncompatibleRHS(
                    f"rhs does not annihilate constants: <rhs, 1> = {rhs.sum():.3e}")
        if self.solver == "direct":
            sol = self._bordered_lu.solve(np.append(rhs, 0.0))
            x = sol[:-1]
        else:
            b = rhs - rhs.sum() * self.w / self.w.sum()
            x, info = spla.cg(self.K, b, rtol=CG_RTOL, atol=0.0, maxiter=20 * self.n)
            if info != 0:
                raise SolverFailure(f"conjugate gradients stopped with info={info}")
            x = x - (self.w @ x) / self.total
        if not np.all(np.isfinite(x)):
            raise SolverFailure("non-finite solution")
        return x

    def solve_mass(self, rhs: np.ndarray, lumped: bool = False) -> np.ndarray:
        if lumped:
            return rhs / self.lumped
        return self._mass_lu.solve(np.asarray(rhs, dtype=float))

    def mass_matrix(self, lumped: bool = False):
        return sp.diags(self.lumped) if lumped else self.M

    # -- inner products ---------------------------------------------------
    def embed(self, z: PairedField, lumped: bool = False) -> np.ndarray:
        """Dual vector ``w -> (z, w)_H`` acting on conforming fields."""
        check_dims(self.mesh, z)
        if lumped:
            wb, wg = self.mesh.bulk_weights, self.mesh.boundary_weights
            return wb * z.bulk + self.T.T @ (wg * z.boundary)
        return self.M_bulk @ z.bulk + self.T.T @ (self.M_gamma @ z.boundary)

    def h_inner(self, z1: PairedField, z2: PairedField, lumped: bool = False) -> float:
        check_dims(self.mesh, z2)
        if lumped:
            wb, wg = self.mesh.bulk_weights, self.mesh.boundary_weights
            return float(z1.bulk @ (wb * z2.bulk) + z1.boundary @ (wg * z2.boundary))
        return float(z1.bulk @ (self.M_bulk @ z2.bulk) + z1.boundary @ (self.M_gamma @ z2.boundary))

    def h_norm(self, z: PairedField, lumped: bool = False) -> float:
        return float(np.sqrt(max(self.h_inner(z, z, lumped), 0.0)))

    def a(self, u: PairedField, z: PairedField) -> float:
        return float(u.bulk @ (self.K @ z.bulk))

    def v0_norm(self, z: PairedField) -> float:
        return float(np.sqrt(max(self.a(z, z), 0.0)))

    def v_norm(self, z: PairedField) -> float:
        return float(np.sqrt(max(self.a(z, z) + self.h_inner(z, z), 0.0)))

    @cached_property
    def poincare(self) -> float:
        return poincare_constant(self)

    def stats(self) -> dict[str, float]:
        return {"n_bulk": self.n, "n_boundary": self.mesh.n_boundary,
                "nnz_K": self.K.nnz, "area": self.mesh.area, "perimeter": self.mesh.perimeter}


def _require_zero_mean(space: DiscreteSpace, z: PairedField) -> None:
    m = mean(space.mesh, z)
    scale = max(1.0, float(np.max(np.abs(z.bulk), initial=0.0)),
                float(np.max(np.abs(z.boundary), initial=0.0)))
    if abs(m) > MEAN_TOL * scale:
        raise NonZeroMean(f"mean {m:.3e} exceeds tolerance")


def _require_conforming(space: DiscreteSpace, z: PairedField) -> None:
    check_dims(space.mesh, z)
    if not np.allclose(z.boundary, z.bulk[space.mesh.trace], rtol=0.0, atol=1e-14):
        raise ValueError("field is not conforming")


def apply_F(space: DiscreteSpace, z: PairedField) -> np.ndarray:
    """Duality map: the dual vector ``w -> a(z, w)``."""
    _require_conforming(space, z)
    _require_zero_mean(space, z)
    return space.K @ z.bulk


def invert_F(space: DiscreteSpace, rhs: np.ndarray) -> PairedField:
    """Zero-mean conforming solution of ``a(x, .) = rhs`` on zero-mean fields."""
    return trace_conform(space.mesh, space.solve_zero_mean(rhs))


def dual_inner(space: DiscreteSpace, z1: PairedField, z2: PairedField,
               lumped: bool = False) -> float:
    """``(z1, z2)_{V0*} = <z1, F^{-1} z2>`` for zero-mean fields embedded through H."""
    _require_zero_mean(space, z1)
    _require_zero_mean(space, z2)
    b1 = space.embed(z1, lumped)
    b2 = space.embed(z2, lumped)
    return float(b1 @ space.solve_zero_mean(b2, check=False))


def dual_norm(space: DiscreteSpace, z: PairedField, lumped: bool = False) -> float:
    _require_zero_mean(space, z)
    b = space.embed(z, lumped)
    return float(np.sqrt(max(b @ space.solve_zero_mean(b, check=False), 0.0)))


def dual_norm_vec(space: DiscreteSpace, dual: np.ndarray) -> float:
    """``V0*`` norm of an already-embedded dual vector."""
    return float(np.sqrt(max(dual @ space.solve_zero_mean(dual, check=False), 0.0)))


def phi(space: DiscreteSpace, z: PairedField) -> float:
    """Half the Dirichlet energy on zero-mean conforming fields, ``+inf`` elsewhere."""
    try:
        _require_conforming(space, z)
        _require_zero_mean(space, z)
    except (ValueError, NonZeroMean):
        return float("inf")
    return 0.5 * space.a(z, z)


def apply_subdiff_phi(space: DiscreteSpace, z: PairedField, lumped: bool = False) -> PairedField:
    """The field ``y`` with ``(y, w)_H = a(z, w)`` for all conforming ``w``."""
    _require_conforming(space, z)
    _require_zero_mean(space, z)
    y = space.solve_mass(space.K @ z.bulk, lumped)
    if not np.all(np.isfinite(y)):
        raise SolverFailure("mass solve failed")
    return trace_conform(space.mesh, y)


def poincare_constant(space: DiscreteSpace) -> float:
    """Smallest ``c`` with ``c |z|_V^2 <= |z|_V0^2`` on zero-mean conforming fields.

    Every non-constant eigenvector of the pencil ``(K, K + M)`` is
    ``(K+M)``-orthogonal to constants, i.e. zero-mean, so ``c_p`` is the second
    eigenvalue of the pencil.
    """
    K, B = space.K, space.K + space.M
    try:
        if space.n <= 2500:
            vals = scipy.linalg.eigh(K.toarray(), B.toarray(), eigvals_only=True,
                                     subset_by_index=[0, 1])
        else:
            vals = spla.eigsh(K.tocsc(), k=2, M=B.tocsc(), sigma=-1e-3, which="LM",
                              return_eigenvectors=False)
    except (np.linalg.LinAlgError, spla.ArpackError) as exc:
        raise SolverFailure(f"eigensolver failed: {exc}") from exc
    vals = np.sort(vals)
    c = float(vals[1])
    if not c > 0:
        raise SolverFailure(f"non-positive Poincare constant {c}")
    return c


def lift_source(space: DiscreteSpace, g: PairedField) -> PairedField:
    """Zero-mean conforming ``f`` with ``a(f, z) = (g, z)_H`` on zero-mean ``z``."""
    _require_zero_mean(space, g)
    return invert_F(space, space.embed(g))
