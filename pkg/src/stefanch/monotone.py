"""Maximal monotone graphs on the real line.

Three graph families are shipped:

* ``STEFAN`` -- the enthalpy-temperature law with slopes ``k_s``, 0, ``k_l`` on
  ``(-inf, 0)``, ``[0, L]``, ``(L, inf)``;
* ``CUBIC`` -- ``beta(r) = r**3``;
* ``INDICATOR`` -- the subdifferential of the indicator of ``[-1, 1]``.

For each, resolvents ``J_lam = (I + lam*beta)^{-1}`` are closed form, so the
Yosida approximation and the Moreau envelope carry no solver tolerance.
All functions accept scalars or numpy arrays and return the same shape.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InteriorityError

#: Default certificate window for the grid-validated inequalities.
CERT_WINDOW = (-10.0, 10.0)
CERT_STEP = 1e-3
CERT_LAMBDAS = (1.0, 1e-1, 1e-2, 1e-3, 1e-4)


class GraphKind(str, enum.Enum):
    STEFAN = "stefan"
    CUBIC = "cubic"
    INDICATOR = "indicator"


class PerturbationKind(str, enum.Enum):
    STEFAN_PLATEAU = "stefan_plateau"
    ZERO = "zero"


@dataclass(frozen=True)
class GraphSpec:
    """A monotone graph together with its growth certificate.

    ``c1``, ``c2`` certify ``beta_hat(r) >= c1*r**2 - c2``. ``c_beta`` is the
    Lipschitz constant of ``beta`` or ``None`` when ``beta`` is not Lipschitz.
    """

    kind: GraphKind
    k_s: float = 1.0
    k_l: float = 1.0
    L: float = 1.0
    c1: float = 1.0
    c2: float = 1.0
    c_beta: float | None = None

    @classmethod
    def stefan(cls, k_s: float = 2.0, k_l: float = 1.0, L: float = 1.0) -> "GraphSpec":
        if min(k_s, k_l, L) <= 0:
            raise ValueError("k_s, k_l and L must be positive")
        # c1 = min(k)/4; the worst point of k_l(r-L)^2/2 - c1 r^2 is bounded by k_l L^2/2
        c1 = min(k_s, k_l) / 4.0
        c2 = max(k_l * L * L / 2.0, c1 * L * L)
        return cls(GraphKind.STEFAN, float(k_s), float(k_l), float(L), c1, c2, float(max(k_s, k_l)))

    @classmethod
    def cubic(cls) -> "GraphSpec":
        # r^4/4 - r^2 + 1 = (r^2/2 - 1)^2 >= 0
        return cls(GraphKind.CUBIC, c1=1.0, c2=1.0, c_beta=None)

    @classmethod
    def indicator(cls) -> "GraphSpec":
        return cls(GraphKind.INDICATOR, c1=1.0, c2=1.0, c_beta=None)

    @property
    def lipschitz(self) -> bool:
        return self.c_beta is not None

    @property
    def domain(self) -> tuple[float, float]:
        """Closure of D(beta) as an interval."""
        if self.kind is GraphKind.INDICATOR:
            return (-1.0, 1.0)
        return (-np.inf, np.inf)


@dataclass(frozen=True)
class PerturbationSpec:
    """The Lipschitz perturbation pi added with weight epsilon."""

    kind: PerturbationKind = PerturbationKind.STEFAN_PLATEAU
    L: float = 1.0

    @classmethod
    def stefan_plateau(cls, L: float = 1.0) -> "PerturbationSpec":
        if L <= 0:
            raise ValueError("L must be positive")
        return cls(PerturbationKind.STEFAN_PLATEAU, float(L))

    @classmethod
    def zero(cls) -> "PerturbationSpec":
        return cls(PerturbationKind.ZERO)


def _out(x, like):
    return float(x) if np.ndim(like) == 0 else x


# ---------------------------------------------------------------------------
# the graph itself


def beta(g: GraphSpec, r):
    """Single-valued section of beta.

    For the indicator graph the minimal section is returned inside ``[-1, 1]``;
    outside the domain the value is ``nan``.
    """
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        y = np.where(x < 0.0, g.k_s * x, np.where(x > g.L, g.k_l * (x - g.L), 0.0))
    elif g.kind is GraphKind.CUBIC:
        y = x ** 3
    else:
        y = np.where(np.abs(x) <= 1.0, 0.0, np.nan)
    return _out(y, r)


def beta_slope(g: GraphSpec, r):
    """Generalized derivative of beta, taken from the plateau side at kinks."""
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        y = np.where(x < 0.0, g.k_s, np.where(x > g.L, g.k_l, 0.0))
    elif g.kind is GraphKind.CUBIC:
        y = 3.0 * x ** 2
    else:
        y = np.zeros_like(x)
    return _out(y, r)


def beta_hat(g: GraphSpec, r):
    """Convex primitive of beta with ``beta_hat(0) = 0``.

    Raises
    ------
    DomainError
        If any ``r`` lies outside the effective domain (indicator graph only).
    """
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        y = np.where(x < 0.0, 0.5 * g.k_s * x * x,
                     np.where(x > g.L, 0.5 * g.k_l * (x - g.L) ** 2, 0.0))
    elif g.kind is GraphKind.CUBIC:
        y = 0.25 * x ** 4
    else:
        if np.any(np.abs(x) > 1.0):
            raise DomainError("beta_hat of the indicator graph is +inf outside [-1, 1]")
        y = np.zeros_like(x)
    return _out(y, r)


# ---------------------------------------------------------------------------
# resolvent calculus


def _cubic_resolvent(x: np.ndarray, lam: float) -> np.ndarray:
    # real root of j^3 + j/lam - x/lam = 0 (one real root since p = 1/lam > 0)
    p = 1.0 / lam
    s = 0.5 * np.abs(x) / lam
    d = np.sqrt(s * s + p ** 3 / 27.0)
    a = np.cbrt(s + d)
    j = np.sign(x) * (a - p / (3.0 * a))
    # one Newton polish removes the cancellation error of the Cardano form
    f = j + lam * j ** 3 - x
    return j - f / (1.0 + 3.0 * lam * j * j)


def resolvent(g: GraphSpec, r, lam: float):
    """``J_lam(r) = (I + lam*beta)^{-1}(r)``, the unique solution of ``j + lam*beta(j) = r``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        j = np.where(x < 0.0, x / (1.0 + lam * g.k_s),
                     np.where(x > g.L, (x + lam * g.k_l * g.L) / (1.0 + lam * g.k_l), x))
    elif g.kind is GraphKind.CUBIC:
        j = _cubic_resolvent(x, lam)
    else:
        j = np.clip(x, -1.0, 1.0)
    return _out(j, r)


def yosida(g: GraphSpec, r, lam: float):
    """Yosida approximation ``beta_lam(r) = (r - J_lam(r)) / lam``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        # closed form avoids the cancellation in (r - J)/lam for tiny lam
        y = np.where(x < 0.0, g.k_s * x / (1.0 + lam * g.k_s),
                     np.where(x > g.L, g.k_l * (x - g.L) / (1.0 + lam * g.k_l), 0.0))
    else:
        y = (x - np.asarray(resolvent(g, x, lam))) / lam
    return _out(y, r)


def yosida_slope(g: GraphSpec, r, lam: float):
    """Derivative of ``beta_lam`` (plateau side at kinks)."""
    x = np.asarray(r, dtype=float)
    if g.kind is GraphKind.STEFAN:
        y = np.where(x < 0.0, g.k_s / (1.0 + lam * g.k_s),
                     np.where(x > g.L, g.k_l / (1.0 + lam * g.k_l), 0.0))
    elif g.kind is GraphKind.CUBIC:
        j = np.asarray(resolvent(g, x, lam))
        b = 3.0 * j * j
        y = b / (1.0 + lam * b)
    else:
        y = np.where(np.abs(x) > 1.0, 1.0 / lam, 0.0)
    return _out(y, r)


def moreau(g: GraphSpec, r, lam: float):
    """Moreau-Yosida envelope ``|r - J|^2/(2 lam) + beta_hat(J)`` with ``J = J_lam(r)``."""
    x = np.asarray(r, dtype=float)
    j = np.asarray(resolvent(g, x, lam))
    y = (x - j) ** 2 / (2.0 * lam) + np.asarray(beta_hat(g, j))
    return _out(y, r)


# ---------------------------------------------------------------------------
# the perturbation pi


def pi(p: PerturbationSpec, r):
    x = np.asarray(r, dtype=float)
    if p.kind is PerturbationKind.ZERO:
        y = np.zeros_like(x)
    else:
        h = 0.5 * p.L
        y = np.where(x < 0.0, h, np.where(x > p.L, -h, h - x))
    return _out(y, r)


def pi_slope(p: PerturbationSpec, r):
    x = np.asarray(r, dtype=float)
    if p.kind is PerturbationKind.ZERO:
        y = np.zeros_like(x)
    else:
        y = np.where((x >= 0.0) & (x <= p.L), -1.0, 0.0)
    return _out(y, r)


def pi_hat(p: PerturbationSpec, r):
    """Primitive of pi vanishing at 0."""
    x = np.asarray(r, dtype=float)
    if p.kind is PerturbationKind.ZERO:
        y = np.zeros_like(x)
    else:
        h = 0.5 * p.L
        xc = np.clip(x, 0.0, p.L)
        y = h * np.minimum(x, 0.0) + (h * xc - 0.5 * xc * xc) - h * np.maximum(x - p.L, 0.0)
    return _out(y, r)


# ---------------------------------------------------------------------------
# certificates


def cert_grid(window: tuple[float, float] = CERT_WINDOW, step: float = CERT_STEP) -> np.ndarray:
    n = int(round((window[1] - window[0]) / step)) + 1
    return np.linspace(window[0], window[1], n)


def growth_violation(g: GraphSpec, r: np.ndarray | None = None) -> float:
    """Largest violation of ``beta_hat(r) >= c1 r^2 - c2`` on the grid (<= 0 means certified)."""
    r = cert_grid() if r is None else np.asarray(r, dtype=float)
    lo, hi = g.domain
    r = r[(r >= lo) & (r <= hi)]
    return float(np.max(g.c1 * r * r - g.c2 - beta_hat(g, r)))


def perturbation_lipschitz(p: PerturbationSpec, r: np.ndarray | None = None) -> float:
    """Empirical Lipschitz constant of pi on the grid."""
    r = cert_grid() if r is None else np.asarray(r, dtype=float)
    v = pi(p, r)
    return float(np.max(np.abs(np.diff(v)) / np.diff(r)))


def gms_constants(g: GraphSpec, m0: float, *, window: tuple[float, float] = CERT_WINDOW,
                  step: float = CERT_STEP, lambdas=CERT_LAMBDAS,
                  c3_cap: float = 1.0) -> tuple[float, float]:
    """Constants of ``beta_lam(r)(r - m0) >= c3 |beta_lam(r)| - c4``.

    ``c3`` is half the distance from ``m0`` to the boundary of D(beta), capped at
    ``c3_cap``; ``c4`` is then the smallest value making the inequality hold on
    the ``(r, lambda)`` grid, including the limit ``lambda -> 0`` for single-valued
    graphs. The absolute-value form implies the form without it.

    Raises
    ------
    InteriorityError
        If ``m0`` is not in the interior of D(beta).
    """
    lo, hi = g.domain
    if not (lo < m0 < hi) or not np.isfinite(m0):
        raise InteriorityError(f"m0 = {m0} is not interior to D(beta) = [{lo}, {hi}]")
    c3 = min(c3_cap, 0.5 * min(m0 - lo, hi - m0))
    r = cert_grid(window, step)
    worst = 0.0
    rows = [np.asarray(yosida(g, r, lam)) for lam in lambdas]
    if g.kind is not GraphKind.INDICATOR:
        rows.append(np.asarray(beta(g, r)))
    for b in rows:
        worst = max(worst, float(np.max(c3 * np.abs(b) - b * (r - m0))))
    c4 = worst * (1.0 + 1e-9) + 1e-12
    return float(c3), float(c4)
