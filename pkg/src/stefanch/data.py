"""Initial data, source presets and manufactured solutions.

Every source preset returned here has zero combined mean: raw profiles are
passed through :func:`~stefanch.geometry.project_zero_mean` before use.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import sympy

from .forms import DiscreteSpace
from .geometry import MeshPair, PairedField, project_zero_mean, trace_conform
from .monotone import GraphKind, GraphSpec

Source = Callable[[float], PairedField]


# ---------------------------------------------------------------------------
# initial data


def constant_field(mesh: MeshPair, m0: float) -> PairedField:
    return PairedField.constant(mesh, m0)


def cosine_field(mesh: MeshPair, m0: float, amplitude: float, kx: int = 1, ky: int = 1) -> PairedField:
    """``m0 + A cos(kx pi x) cos(ky pi y)`` on the unit square.

    For odd ``kx`` or ``ky`` the cosine part has zero combined mean, so the
    field has mean ``m0`` up to round-off on symmetric meshes; the result is
    re-centred exactly anyway.
    """
    x, y = mesh.nodes.T
    z = trace_conform(mesh, np.cos(kx * np.pi * x) * np.cos(ky * np.pi * y))
    z = project_zero_mean(mesh, z)
    return PairedField(m0 + amplitude * z.bulk, m0 + amplitude * z.boundary, True)


def zero_mean_mode(mesh: MeshPair) -> PairedField:
    """A smooth, non-symmetric, zero-mean conforming perturbation profile."""
    x, y = mesh.nodes.T
    z = trace_conform(mesh, np.sin(2.0 * np.pi * x) * np.cos(np.pi * y) + 0.5 * x * y)
    return project_zero_mean(mesh, z)


# ---------------------------------------------------------------------------
# sources


def zero_source(mesh: MeshPair) -> Source:
    z = PairedField.zeros(mesh)
    return lambda t: z


def bump_profile(mesh: MeshPair, center=(0.3, 0.6), width: float = 0.2,
                 boundary_amplitude: float = 0.5) -> PairedField:
    """Gaussian bulk bump paired with one boundary wave, projected to zero mean."""
    x, y = mesh.nodes.T
    bulk = np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / width ** 2)
    s = mesh.arc_length / mesh.perimeter
    bnd = boundary_amplitude * np.cos(2.0 * np.pi * s)
    return project_zero_mean(mesh, PairedField(bulk, bnd))


def bump_source(mesh: MeshPair, amplitude: float = 1.0, omega: float = 2.0 * np.pi,
                **profile) -> Source:
    """``g(t) = amplitude * cos(omega t) * P(bump)``; zero mean at every time."""
    g0 = bump_profile(mesh, **profile)

    def source(t: float) -> PairedField:
        return (amplitude * np.cos(omega * t)) * g0

    return source


def scaled(source: Source, a: float) -> Source:
    return lambda t: a * source(t)


def added(s1: Source, s2: Source) -> Source:
    return lambda t: s1(t) + s2(t)


# ---------------------------------------------------------------------------
# manufactured solutions for the limit problem


_x, _y, _t = sympy.symbols("x y t", real=True)

# (outward normal derivative, tangential second derivative) per side of the unit square
_SIDES = {
    "bottom": (lambda e: -sympy.diff(e, _y), lambda e: sympy.diff(e, _x, 2)),
    "right": (lambda e: sympy.diff(e, _x), lambda e: sympy.diff(e, _y, 2)),
    "top": (lambda e: sympy.diff(e, _y), lambda e: sympy.diff(e, _x, 2)),
    "left": (lambda e: -sympy.diff(e, _x), lambda e: sympy.diff(e, _y, 2)),
}


@dataclass(frozen=True)
class Manufactured:
    """Smooth single-phase solution ``u*`` of the limit problem on the unit square.

    ``expr`` is a sympy-parsable expression in ``x, y, t``. On the liquid
    branch ``beta(u) = k_l (u - L)``, so the bulk source is
    ``u_t - k_l Lap u`` and the boundary source is
    ``u_t + k_l d_nu u - k_l d_ss u``.
    """

    expr: str
    graph: GraphSpec

    @cached_property
    def _sym(self):
        return sympy.sympify(self.expr, locals={"x": _x, "y": _y, "t": _t})

    @cached_property
    def _funcs(self):
        if self.graph.kind is not GraphKind.STEFAN:
            raise ValueError("manufactured solutions are built for the Stefan graph")
        u = self._sym
        kl = self.graph.k_l
        ut = sympy.diff(u, _t)
        bulk = sympy.simplify(ut - kl * (sympy.diff(u, _x, 2) + sympy.diff(u, _y, 2)))
        sides = {k: sympy.simplify(ut + kl * dn(u) - kl * dss(u)) for k, (dn, dss) in _SIDES.items()}
        args = (_x, _y, _t)
        lam = {k: sympy.lambdify(args, e, "numpy") for k, e in sides.items()}
        return sympy.lambdify(args, u, "numpy"), sympy.lambdify(args, bulk, "numpy"), lam

    def exact(self, x, y, t) -> np.ndarray:
        return np.broadcast_to(self._funcs[0](x, y, t), np.shape(x)).astype(float)

    def initial(self, mesh: MeshPair) -> PairedField:
        x, y = mesh.nodes.T
        return trace_conform(mesh, self.exact(x, y, 0.0))

    def check_single_phase(self, mesh: MeshPair, T: float, n_times: int = 21) -> float:
        """Smallest ``u* - L`` on mesh nodes over sampled times; raises if not positive."""
        x, y = mesh.nodes.T
        low = min(float(np.min(self.exact(x, y, t))) for t in np.linspace(0.0, T, n_times))
        if low <= self.graph.L:
            raise ValueError(f"manufactured solution enters the mushy region (min u* = {low})")
        return low - self.graph.L

    def source(self, mesh: MeshPair) -> Source:
        """Nodal interpolants of ``(g, g_Gamma)``; corner values average the two sides."""
        _, bulk_f, side_f = self._funcs
        x, y = mesh.nodes.T
        pb = mesh.nodes[mesh.trace]
        tol = 1e-12
        masks = {
            "bottom": np.abs(pb[:, 1]) < tol,
            "right": np.abs(pb[:, 0] - 1.0) < tol,
            "top": np.abs(pb[:, 1] - 1.0) < tol,
            "left": np.abs(pb[:, 0]) < tol,
        }
        count = sum(m.astype(float) for m in masks.values())
        if np.any(count == 0):
            raise ValueError("manufactured sources need the unit-square mesh")

        def source(t: float) -> PairedField:
            gb = np.broadcast_to(bulk_f(x, y, t), x.shape).astype(float)
            gg = np.zeros(mesh.n_boundary)
            for side, m in masks.items():
                vals = np.broadcast_to(side_f[side](pb[:, 0], pb[:, 1], t), (mesh.n_boundary,))
                gg += np.where(m, vals, 0.0)
            return project_zero_mean(mesh, PairedField(gb, gg / count))

        return source


DEFAULT_MMS_SPATIAL = "2 + (1 + t)/2*cos(pi*x)*cos(pi*y)"
DEFAULT_MMS_TEMPORAL = "2 + 4/5*sin(10*t)*cos(pi*x)*cos(pi*y)"


# ---------------------------------------------------------------------------
# quadrature errors

_GAUSS3 = np.polynomial.legendre.leggauss(3)


def h_error(space: DiscreteSpace, uh: np.ndarray, exact: Callable) -> float:
    """``|(u_h, u_h|Gamma) - (u*, u*|Gamma)|_H`` by quadrature.

    Bulk: edge-midpoint rule on each triangle (exact for quadratics).
    Boundary: 3-point Gauss rule on each edge. ``exact(x, y)`` is vectorized.
    """
    mesh = space.mesh
    p = mesh.nodes
    tri = mesh.triangles
    err2 = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (p[tri[:, a]] + p[tri[:, b]])
        diff = 0.5 * (uh[tri[:, a]] + uh[tri[:, b]]) - exact(mid[:, 0], mid[:, 1])
        err2 += float(np.sum(mesh.triangle_areas / 3.0 * diff ** 2))
    pts, wts = _GAUSS3
    e = mesh.boundary_edges
    ia, ib = mesh.trace[e[:, 0]], mesh.trace[e[:, 1]]
    for s, w in zip(0.5 * (pts + 1.0), 0.5 * wts):
        q = (1.0 - s) * p[ia] + s * p[ib]
        diff = (1.0 - s) * uh[ia] + s * uh[ib] - exact(q[:, 0], q[:, 1])
        err2 += float(np.sum(w * mesh.edge_lengths * diff ** 2))
    return float(np.sqrt(err2))
