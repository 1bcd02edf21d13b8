"""Backward-Euler integration of the three problem variants.

All variants share one assembled :class:`~stefanch.forms.DiscreteSpace` and
work with conforming nodal vectors (length ``n_bulk``).

Cahn-Hilliard variants (unknowns ``u`` and ``mu``)::

    Ml (u - u_old)/dt + K mu = 0
    Ml mu = lam Ml (u - u_old)/dt + eps K u + Ml (N(u) - f)

with ``N = beta_lam + eps*pi`` (regularized) or ``N = beta + eps*pi`` (``lam = 0``).
Limit problem (enthalpy form)::

    Ml (u - u_old)/dt + K beta(u) = b(g)

``Ml`` is the lumped mass: with a diagonal mass the nodewise nonlinearity
pairs with the time difference node by node, which is what makes the
discrete energy ledger and the discrete monotonicity argument exact. Loads
``b(g)`` use the consistent mass.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import monotone as mono
from .errors import (ConfigError, InconsistentState, InteriorityError, NewtonDivergence,
                     StepRejected, DomainError)
from .forms import DiscreteSpace
from .geometry import PairedField, mean, project_zero_mean, trace_conform
from .monotone import GraphKind, GraphSpec, PerturbationSpec

log = logging.getLogger(__name__)


class Problem(str, enum.Enum):
    REGULARIZED_CH = "regularized_ch"
    CH = "ch"
    STEFAN = "stefan"


@dataclass(frozen=True)
class SolveConfig:
    epsilon: float = 0.125
    lam: float = 0.0
    dt: float = 0.01
    T: float = 0.2
    newton_tol: float = 1e-11
    newton_max_iter: int = 40
    graph: GraphSpec = field(default_factory=GraphSpec.stefan)
    perturbation: PerturbationSpec = field(default_factory=PerturbationSpec.stefan_plateau)
    problem: Problem = Problem.CH
    m0: float | None = None
    max_halvings: int = 4

    def __post_init__(self):
        object.__setattr__(self, "problem", Problem(self.problem))
        if self.problem is not Problem.STEFAN and not 0.0 < self.epsilon <= 0.25:
            raise ConfigError("must lie in (0, 1/4]", key="epsilon")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("must lie in [0, 1]", key="lambda")
        if self.problem is Problem.REGULARIZED_CH and self.lam <= 0.0:
            raise ConfigError("regularized problem needs lambda > 0", key="lambda")
        if self.problem is Problem.CH and self.lam != 0.0:
            raise ConfigError("the CH problem is the lambda = 0 system", key="lambda")
        if self.problem is Problem.CH and not self.graph.lipschitz:
            raise ConfigError("lambda = 0 needs a Lipschitz graph", key="graph")
        if self.problem is Problem.STEFAN and self.graph.kind is GraphKind.INDICATOR:
            raise ConfigError("the limit problem needs a single-valued graph", key="graph")
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError("dt and T must be positive", key="dt")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ConfigError("invalid Newton controls", key="newton_tol")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


@dataclass
class State:
    """Solution at one time level; all arrays are conforming nodal vectors."""

    u: np.ndarray
    mu: np.ndarray
    xi: np.ndarray
    t: float
    m0: float
    delta: np.ndarray | None = None
    f: np.ndarray | None = None
    newton_iters: int = 0
    residual: float = 0.0

    @property
    def v(self) -> np.ndarray:
        return self.u - self.m0

    def paired(self, space: DiscreteSpace, name: str) -> PairedField:
        return trace_conform(space.mesh, getattr(self, name))


# ---------------------------------------------------------------------------
# nonlinearities


def _nonlinearity(cfg: SolveConfig, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g, p, eps = cfg.graph, cfg.perturbation, cfg.epsilon
    if cfg.problem is Problem.REGULARIZED_CH:
        val = mono.yosida(g, u, cfg.lam)
        slope = mono.yosida_slope(g, u, cfg.lam)
    else:
        val = mono.beta(g, u)
        slope = mono.beta_slope(g, u)
    if cfg.problem is not Problem.STEFAN:
        val = val + eps * mono.pi(p, u)
        slope = slope + eps * mono.pi_slope(p, u)
    return np.asarray(val), np.asarray(slope)


def selection(cfg: SolveConfig, u: np.ndarray) -> np.ndarray:
    """The section xi of beta(u) carried by the state."""
    if cfg.problem is Problem.REGULARIZED_CH:
        return np.asarray(mono.yosida(cfg.graph, u, cfg.lam))
    return np.asarray(mono.beta(cfg.graph, u))


def envelope(cfg: SolveConfig, u: np.ndarray) -> np.ndarray:
    """Nodewise primitive matching the selection (Moreau envelope when lam > 0)."""
    if cfg.problem is Problem.REGULARIZED_CH:
        return np.asarray(mono.moreau(cfg.graph, u, cfg.lam))
    return np.asarray(mono.beta_hat(cfg.graph, u))


# ---------------------------------------------------------------------------
# Newton driver


def _newton(residual: Callable, jacobian: Callable, x0: np.ndarray, tol: float,
            max_iter: int) -> tuple[np.ndarray, int, float]:
    """Semismooth Newton with backtracking; falls back to a damped chord iteration."""
    x = x0.copy()
    r = residual(x)
    rn = float(np.linalg.norm(r, np.inf))
    it = 0
    J0 = None
    while rn > tol and it < max_iter:
        it += 1
        J = jacobian(x).tocsc()
        if J0 is None:
            J0 = J
        try:
            dx = spla.splu(J).solve(-r)
        except RuntimeError:
            dx = None
        accepted = False
        if dx is not None and np.all(np.isfinite(dx)):
            alpha = 1.0
            while alpha >= 1.0 / 64:
                xt = x + alpha * dx
                rt = residual(xt)
                rtn = float(np.linalg.norm(rt, np.inf))
                if rtn < (1.0 - 1e-4 * alpha) * rn or rtn <= tol:
                    x, r, rn = xt, rt, rtn
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            # damped fixed point: frozen first Jacobian, step 1/2
            lu0 = spla.splu(J0)
            for _ in range(max_iter):
                it += 1
                xt = x + 0.5 * lu0.solve(-r)
                rt = residual(xt)
                rtn = float(np.linalg.norm(rt, np.inf))
                if not np.isfinite(rtn) or rtn >= rn:
                    raise NewtonDivergence(f"residual stuck at {rn:.3e} after {it} iterations")
                x, r, rn = xt, rt, rtn
                if rn <= tol:
                    break
    if rn > tol:
        raise NewtonDivergence(f"residual {rn:.3e} > {tol:.1e} after {it} iterations")
    return x, it, rn


# ---------------------------------------------------------------------------
# steps


def _f_vector(f_slice) -> np.ndarray:
    if isinstance(f_slice, PairedField):
        return f_slice.bulk
    return np.asarray(f_slice, dtype=float)


def _step_cahn_hilliard(space: DiscreteSpace, cfg: SolveConfig, state: State, f_slice) -> State:
    n, dt, eps, lam = space.n, cfg.dt, cfg.epsilon, cfg.lam
    Ml = space.lumped
    K = space.K
    f = _f_vector(f_slice)
    u_old = state.u
    Mld = sp.diags(Ml)

    def residual(x):
        u, mu = x[:n], x[n:]
        du = u - u_old
        nl, _ = _nonlinearity(cfg, u)
        r1 = Ml * du + dt * (K @ mu)
        r2 = Ml * mu - (lam / dt) * Ml * du - eps * (K @ u) - Ml * (nl - f)
        return np.concatenate([r1, dt * r2])

    def jacobian(x):
        _, slope = _nonlinearity(cfg, x[:n])
        lower = -(lam * sp.diags(Ml) + dt * eps * K + dt * sp.diags(Ml * slope))
        return sp.bmat([[Mld, dt * K], [lower, dt * Mld]], format="csc")

    x0 = np.concatenate([state.u, state.mu])
    x, it, res = _newton(residual, jacobian, x0, cfg.newton_tol, cfg.newton_max_iter)
    u, mu = x[:n], x[n:]
    return State(u=u, mu=mu, xi=selection(cfg, u), t=state.t + dt, m0=state.m0,
                 delta=(u - u_old) / dt, f=f.copy(), newton_iters=it, residual=res)


def step_regularized(space: DiscreteSpace, config: SolveConfig, state: State, f_slice) -> State:
    """One backward-Euler step of the Yosida-regularized viscous Cahn-Hilliard system.

    ``f_slice`` is the lifted source at the new time level.
    """
    if config.problem is not Problem.REGULARIZED_CH:
        raise ValueError("step_regularized needs problem = regularized_ch")
    return _step_cahn_hilliard(space, config, state, f_slice)


def step_ch(space: DiscreteSpace, config: SolveConfig, state: State, f_slice) -> State:
    """One step of the Cahn-Hilliard system with the exact Lipschitz graph (``lam = 0``)."""
    if config.problem is not Problem.CH:
        raise ValueError("step_ch needs problem = ch")
    return _step_cahn_hilliard(space, config, state, f_slice)


def step_stefan(space: DiscreteSpace, config: SolveConfig, state: State, g_slice: PairedField) -> State:
    """One enthalpy step of the limit problem with raw source ``g_slice``.

    The boundary rows of the coupled system carry the dynamic boundary
    condition; there is no separate boundary solve.
    """
    if config.problem is not Problem.STEFAN:
        raise ValueError("step_stefan needs problem = stefan")
    dt, g = config.dt, config.graph
    Ml, K = space.lumped, space.K
    b = space.embed(g_slice)
    u_old = state.u
    rhs = Ml * u_old + dt * b

    def residual(u):
        return Ml * u + dt * (K @ np.asarray(mono.beta(g, u))) - rhs

    def jacobian(u):
        return sp.diags(Ml) + dt * (K @ sp.diags(np.asarray(mono.beta_slope(g, u))))

    u, it, res = _newton(residual, jacobian, state.u.copy(), config.newton_tol,
                         config.newton_max_iter)
    xi = np.asarray(mono.beta(g, u))
    f = _stefan_lift(space, g_slice)
    return State(u=u, mu=xi - f, xi=xi, t=state.t + dt, m0=state.m0,
                 delta=(u - u_old) / dt, f=f, newton_iters=it, residual=res)


def _stefan_lift(space: DiscreteSpace, g: PairedField) -> np.ndarray:
    # only the zero-mean part of g can be lifted
    return space.solve_zero_mean(space.embed(project_zero_mean(space.mesh, g)), check=False)


def reconstruct_mu(space: DiscreteSpace, config: SolveConfig, state: State) -> PairedField:
    """Chemical potential from the constitutive relation of the last step.

    ``mu = lam*v' + eps*dphi(v) + N(u) - f`` for the Cahn-Hilliard variants and
    ``mu = xi - f`` for the limit problem.
    """
    if state.delta is None or state.f is None:
        raise InconsistentState("no step has been taken")
    if config.problem is Problem.STEFAN:
        return trace_conform(space.mesh, state.xi - state.f)
    nl, _ = _nonlinearity(config, state.u)
    dphi = space.solve_mass(space.K @ state.v, lumped=True)
    mu = config.lam * state.delta + config.epsilon * dphi + nl - state.f
    return trace_conform(space.mesh, mu)


def weak1_residual(space: DiscreteSpace, state: State) -> float:
    """Max-norm of ``Ml v' + K mu``, the discrete mass-balance residual."""
    if state.delta is None:
        raise InconsistentState("no step has been taken")
    return float(np.linalg.norm(space.lumped * state.delta + space.K @ state.mu, np.inf))


# ---------------------------------------------------------------------------
# time integration


Source = Callable[[float], PairedField]


def zero_source(space: DiscreteSpace) -> Source:
    z = PairedField.zeros(space.mesh)
    return lambda t: z


def check_initial(space: DiscreteSpace, cfg: SolveConfig, u0: PairedField) -> float:
    """Compatibility checks on initial data; returns the initial mean."""
    mesh = space.mesh
    if not np.array_equal(u0.boundary, u0.bulk[mesh.trace]):
        raise ConfigError("initial datum must be conforming", key="u0")
    try:
        vals = np.concatenate([np.asarray(mono.beta_hat(cfg.graph, u0.bulk)),
                               np.asarray(mono.beta_hat(cfg.graph, u0.boundary))])
    except DomainError as exc:
        raise ConfigError(f"beta_hat(u0) is not finite: {exc}", key="u0") from exc
    if not np.all(np.isfinite(vals)):
        raise ConfigError("beta_hat(u0) is not finite", key="u0")
    m0 = mean(mesh, u0)
    lo, hi = cfg.graph.domain
    if not lo < m0 < hi:
        raise InteriorityError(f"initial mean {m0} is not interior to D(beta)")
    if cfg.m0 is not None and abs(cfg.m0 - m0) > 1e-12 * max(1.0, abs(m0)):
        raise ConfigError(f"initial datum has mean {m0}, configured {cfg.m0}", key="m0")
    return m0


def initial_state(space: DiscreteSpace, cfg: SolveConfig, u0: PairedField, source: Source,
                  t0: float = 0.0) -> State:
    m0 = check_initial(space, cfg, u0)
    u = u0.bulk.copy()
    g0 = source(t0)
    if cfg.problem is Problem.STEFAN:
        f = _stefan_lift(space, g0)
        xi = np.asarray(mono.beta(cfg.graph, u))
        mu = xi - f
    else:
        f = space.solve_zero_mean(space.embed(g0))
        nl, _ = _nonlinearity(cfg, u)
        mu = cfg.epsilon * space.solve_mass(space.K @ (u - m0), lumped=True) + nl - f
        xi = selection(cfg, u)
    return State(u=u, mu=mu, xi=xi, t=t0, m0=m0, f=f)


def _advance(space: DiscreteSpace, cfg: SolveConfig, state: State, source: Source,
             depth: int = 0) -> list[tuple[float, State]]:
    """Advance by ``cfg.dt``, halving on failure; returns ``(dt, state)`` substeps."""
    t_new = state.t + cfg.dt
    g = source(t_new)
    try:
        if cfg.problem is Problem.STEFAN:
            new = step_stefan(space, cfg, state, g)
        else:
            f = space.solve_zero_mean(space.embed(g))
            stepper = step_regularized if cfg.problem is Problem.REGULARIZED_CH else step_ch
            new = stepper(space, cfg, state, f)
        return [(cfg.dt, new)]
    except NewtonDivergence as exc:
        if depth >= cfg.max_halvings:
            raise StepRejected(f"step at t={state.t:.6g} failed: {exc}", cfg.dt / 2) from exc
        log.info("halving dt=%g at t=%g: %s", cfg.dt, state.t, exc)
        half = replace(cfg, dt=cfg.dt / 2)
        first = _advance(space, half, state, source, depth + 1)
        second = _advance(space, half, first[-1][1], source, depth + 1)
        return first + second


RECORD_FIELDS = (
    "t", "mass", "mass_drift", "v_dual_sq", "v_h_sq", "u_h_sq", "v_v0_sq",
    "env_bulk", "env_bnd", "l1_bulk", "l1_bnd", "delta_h_sq", "delta_dual_sq",
    "f_v0_sq", "mu_mean", "mu_v_sq", "pmu_v0_sq", "xi_h_sq",
    "ledger_lhs", "ledger_rhs", "ledger_ok", "newton_iters", "residual",
)


@dataclass
class RunResult:
    config: SolveConfig
    times: np.ndarray
    u: np.ndarray            # (steps+1, n)
    xi: np.ndarray
    mu: np.ndarray
    records: list[dict]
    final: State

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)


class _Recorder:
    def __init__(self, space: DiscreteSpace, cfg: SolveConfig, state0: State):
        self.space, self.cfg = space, cfg
        self.wb = space.mesh.bulk_weights
        self.wg = space.mesh.boundary_weights
        self.trace = space.mesh.trace
        self.dissipation = 0.0
        self.forcing = 0.0
        self.E0 = self._energy(state0)
        self.records = [self._record(state0, None)]

    def _dual_sq(self, z: np.ndarray) -> float:
        b = self.space.lumped * z
        b -= b.sum() * self.space.lumped / self.space.lumped.sum()
        return float(b @ self.space.solve_zero_mean(b, check=False))

    def _energy(self, s: State) -> float:
        if self.cfg.problem is Problem.STEFAN:
            return float("nan")
        env = envelope(self.cfg, s.u)
        return (self.cfg.epsilon * float(s.v @ (self.space.K @ s.v))
                + 2.0 * float(self.wb @ env + self.wg @ env[self.trace]))

    def add_step(self, dt: float, s: State) -> None:
        if self.cfg.problem is not Problem.STEFAN:
            K, Ml = self.space.K, self.space.lumped
            self.dissipation += dt * (2.0 * self.cfg.lam * float(Ml @ s.delta ** 2)
                                      + self._dual_sq(s.delta))
            self.forcing += 2.0 * dt * (self.cfg.epsilon ** 2 * float(s.v @ (K @ s.v))
                                        + float(s.f @ (K @ s.f)))

    def _record(self, s: State, _unused) -> dict:
        sp_, cfg = self.space, self.cfg
        K, Ml = sp_.K, sp_.lumped
        v = s.v
        sel = s.xi
        env = envelope(cfg, s.u) if cfg.problem is not Problem.STEFAN else np.asarray(
            mono.beta_hat(cfg.graph, s.u))
        mass = float(Ml @ s.u) / sp_.total
        rec = {
            "t": s.t,
            "mass": mass,
            "mass_drift": mass - s.m0,
            "v_dual_sq": self._dual_sq(v),
            "v_h_sq": float(Ml @ v ** 2),
            "u_h_sq": float(Ml @ s.u ** 2),
            "v_v0_sq": float(v @ (K @ v)),
            "env_bulk": float(self.wb @ env),
            "env_bnd": float(self.wg @ env[self.trace]),
            "l1_bulk": float(self.wb @ np.abs(sel)),
            "l1_bnd": float(self.wg @ np.abs(sel[self.trace])),
            "delta_h_sq": float(Ml @ s.delta ** 2) if s.delta is not None else 0.0,
            "delta_dual_sq": self._dual_sq(s.delta) if s.delta is not None else 0.0,
            "f_v0_sq": float(s.f @ (K @ s.f)) if s.f is not None else 0.0,
            "mu_mean": float(Ml @ s.mu) / sp_.total,
            "mu_v_sq": float(s.mu @ (K @ s.mu) + Ml @ s.mu ** 2),
            "pmu_v0_sq": float(s.mu @ (K @ s.mu)),
            "xi_h_sq": float(Ml @ s.xi ** 2),
            "newton_iters": s.newton_iters,
            "residual": s.residual,
        }
        if cfg.problem is Problem.STEFAN:
            rec.update(ledger_lhs=float("nan"), ledger_rhs=float("nan"), ledger_ok=1)
        else:
            lhs = self._energy(s) + self.dissipation
            rhs = self.E0 + self.forcing
            rec.update(ledger_lhs=lhs, ledger_rhs=rhs,
                       ledger_ok=int(lhs <= rhs + 1e-10 * max(1.0, abs(rhs))))
        return rec

    def record(self, s: State) -> None:
        self.records.append(self._record(s, None))


def integrate(space: DiscreteSpace, config: SolveConfig, u0: PairedField,
              source: Source | None = None) -> RunResult:
    """Run ``config.n_steps`` backward-Euler steps from ``u0``.

    ``source(t)`` returns the raw heat source ``(g, g_Gamma)`` at time ``t``;
    for the Cahn-Hilliard variants it must have zero mean and is lifted to ``f``
    at every new time level.
    """
    source = source or zero_source(space)
    state = initial_state(space, config, u0, source)
    rec = _Recorder(space, config, state)
    us, xis, mus, ts = [state.u], [state.xi], [state.mu], [state.t]
    for k in range(config.n_steps):
        target = (k + 1) * config.dt
        cfg = replace(config, dt=target - state.t)
        for dt, sub in _advance(space, cfg, state, source):
            rec.add_step(dt, sub)
            state = sub
        state.t = target
        rec.record(state)
        us.append(state.u)
        xis.append(state.xi)
        mus.append(state.mu)
        ts.append(state.t)
    return RunResult(config, np.array(ts), np.array(us), np.array(xis), np.array(mus),
                     rec.records, state)
