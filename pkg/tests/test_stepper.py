import numpy as np
import pytest

from stefanch import data, stepper
from stefanch import monotone as mono
from stefanch.errors import ConfigError, InconsistentState, InteriorityError, NewtonDivergence, StepRejected
from stefanch.forms import DiscreteSpace
from stefanch.geometry import MeshPair, PairedField, mean, project_zero_mean, trace_conform
from stefanch.monotone import GraphSpec, PerturbationSpec
from stefanch.stepper import (Problem, SolveConfig, initial_state, integrate, reconstruct_mu,
                              step_ch, step_regularized, step_stefan, weak1_residual)

import oracles

STEFAN = GraphSpec.stefan()
VARIANTS = [
    dict(problem=Problem.REGULARIZED_CH, lam=1e-2, epsilon=0.125),
    dict(problem=Problem.CH, lam=0.0, epsilon=0.125),
    dict(problem=Problem.STEFAN),
]
IDS = ["regularized", "ch", "stefan"]


@pytest.fixture(scope="module")
def space():
    return DiscreteSpace(MeshPair.unit_square(17))


@pytest.fixture(scope="module")
def two():
    return DiscreteSpace(MeshPair.two_triangle())


# -- configuration ---------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(epsilon=0.3), dict(epsilon=0.0), dict(lam=1.5),
                                dict(problem="regularized_ch", lam=0.0),
                                dict(problem="ch", graph=GraphSpec.cubic()),
                                dict(problem="stefan", graph=GraphSpec.indicator()),
                                dict(dt=0.0)])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        SolveConfig(**kw)


def test_initial_checks(space):
    cfg = SolveConfig(problem="regularized_ch", lam=0.1, graph=GraphSpec.indicator(),
                      perturbation=PerturbationSpec.zero())
    with pytest.raises(ConfigError):
        initial_state(space, cfg, PairedField.constant(space.mesh, 1.5), data.zero_source(space.mesh))
    with pytest.raises(InteriorityError):
        initial_state(space, cfg, PairedField.constant(space.mesh, 1.0), data.zero_source(space.mesh))
    bad = PairedField(np.zeros(space.n), np.ones(space.mesh.n_boundary))
    with pytest.raises(ConfigError):
        initial_state(space, SolveConfig(), bad, data.zero_source(space.mesh))


# -- stationary states -----------------------------------------------------------

@pytest.mark.parametrize("kw", VARIANTS, ids=IDS)
def test_constant_state_is_stationary(space, kw):
    m0 = 1.7
    cfg = SolveConfig(dt=0.01, T=0.05, **kw)
    r = integrate(space, cfg, PairedField.constant(space.mesh, m0))
    assert np.max(np.abs(r.u - m0)) < 1e-13
    mu = reconstruct_mu(space, cfg, r.final)
    expected = mono.beta(STEFAN, m0)
    if cfg.problem is not Problem.STEFAN:
        expected += cfg.epsilon * mono.pi(cfg.perturbation, m0)
    if cfg.problem is Problem.REGULARIZED_CH:
        expected = mono.yosida(STEFAN, m0, cfg.lam) + cfg.epsilon * mono.pi(cfg.perturbation, m0)
    assert np.allclose(mu.bulk, expected, atol=1e-12)
    assert r.column("delta_dual_sq").max() < 1e-24


# -- conservation and selections -------------------------------------------------

@pytest.mark.parametrize("kw", VARIANTS, ids=IDS)
def test_mass_conservation_and_ledger(space, kw):
    u0 = data.cosine_field(space.mesh, 0.5, 1.5)
    cfg = SolveConfig(dt=2e-3, T=0.1, **kw)
    r = integrate(space, cfg, u0, data.bump_source(space.mesh, amplitude=2.0))
    assert np.max(np.abs(r.column("mass_drift"))) <= 1e-10
    assert np.all(r.column("ledger_ok") == 1)
    assert np.max(r.column("residual")) <= cfg.newton_tol


def test_selection_consistency(space):
    u0 = data.cosine_field(space.mesh, 0.5, 1.5)
    cfg = SolveConfig(problem="regularized_ch", lam=1e-2, dt=1e-2, T=0.03)
    r = integrate(space, cfg, u0)
    assert np.array_equal(r.final.xi, mono.yosida(STEFAN, r.final.u, cfg.lam))
    cfg = SolveConfig(problem="ch", dt=1e-2, T=0.03)
    s = integrate(space, cfg, u0).final
    plateau = (s.u >= 0) & (s.u <= STEFAN.L)
    assert plateau.any() and np.all(np.abs(s.xi[plateau]) <= cfg.newton_tol)


# -- chemical potential ----------------------------------------------------------

@pytest.mark.parametrize("kw", VARIANTS[:2], ids=IDS[:2])
def test_reconstruct_mu_satisfies_mass_balance(space, kw):
    u0 = data.cosine_field(space.mesh, 0.5, 1.2)
    cfg = SolveConfig(dt=5e-3, T=0.02, **kw)
    r = integrate(space, cfg, u0, data.bump_source(space.mesh))
    s = r.final
    mu = reconstruct_mu(space, cfg, s)
    s2 = stepper.State(u=s.u, mu=mu.bulk, xi=s.xi, t=s.t, m0=s.m0, delta=s.delta, f=s.f)
    assert weak1_residual(space, s2) <= 10 * cfg.newton_tol
    assert np.max(np.abs(mu.bulk - s.mu)) <= 1e-8


def test_reconstruct_mu_stefan_is_xi_minus_f(space):
    cfg = SolveConfig(problem="stefan", dt=1e-2, T=0.02)
    r = integrate(space, cfg, data.cosine_field(space.mesh, 0.5, 1.2), data.bump_source(space.mesh))
    mu = reconstruct_mu(space, cfg, r.final)
    assert np.array_equal(mu.bulk, r.final.xi - r.final.f)


def test_reconstruct_mu_needs_a_step(space):
    cfg = SolveConfig()
    s = initial_state(space, cfg, PairedField.constant(space.mesh, 0.5), data.zero_source(space.mesh))
    with pytest.raises(InconsistentState):
        reconstruct_mu(space, cfg, s)


# -- dense oracle on two triangles -----------------------------------------------

U0 = np.array([-0.6, 0.4, 1.9, 2.4])
G = (np.array([0.3, -0.8, 0.5, 0.1]), np.array([-0.2, 0.4, -0.1, 0.3]))


def _two_data(two):
    g = project_zero_mean(two.mesh, PairedField(*G))
    u0 = trace_conform(two.mesh, U0)
    b = oracles.M_BULK @ g.bulk + oracles.M_LOOP @ g.boundary
    return u0, g, b


@pytest.mark.parametrize("lam", [0.0, 0.05])
def test_ch_step_matches_dense_oracle(two, lam):
    u0, g, b = _two_data(two)
    eps, dt = 0.2, 0.05
    f = oracles.dense_lift(b)
    if lam > 0:
        beta = lambda u: np.array([oracles.bisect_yosida(oracles.stefan_beta, x, lam) for x in u])
        cfg = SolveConfig(problem="regularized_ch", lam=lam, epsilon=eps, dt=dt)
        step = step_regularized
    else:
        beta = oracles.stefan_beta
        cfg = SolveConfig(problem="ch", epsilon=eps, dt=dt)
        step = step_ch
    ref = oracles.dense_ch_step(U0, f, dt, eps, lam, lambda u: beta(u) + eps * oracles.stefan_pi(u))
    s0 = initial_state(two, cfg, u0, lambda t: g)
    s1 = step(two, cfg, s0, two.solve_zero_mean(two.embed(g)))
    assert np.max(np.abs(s1.u - ref)) <= 1e-10


def test_stefan_step_matches_dense_oracle(two):
    u0, g, b = _two_data(two)
    dt = 0.05
    ref = oracles.dense_stefan_step(U0, b, dt, oracles.stefan_beta)
    cfg = SolveConfig(problem="stefan", dt=dt)
    s1 = step_stefan(two, cfg, initial_state(two, cfg, u0, lambda t: g), g)
    assert np.max(np.abs(s1.u - ref)) <= 1e-10


def test_step_kind_guard(two):
    u0, g, _ = _two_data(two)
    cfg = SolveConfig(problem="ch")
    s0 = initial_state(two, cfg, u0, lambda t: g)
    with pytest.raises(ValueError):
        step_stefan(two, cfg, s0, g)


# -- lambda consistency ----------------------------------------------------------

def test_regularized_step_converges_to_ch_step(space):
    u0 = data.cosine_field(space.mesh, 0.5, 1.5)
    src = data.bump_source(space.mesh)
    ch = SolveConfig(problem="ch", dt=1e-2, T=1e-2)
    ref = integrate(space, ch, u0, src).final.u
    dists = []
    for lam in (1e-2, 1e-3, 1e-4):
        cfg = SolveConfig(problem="regularized_ch", lam=lam, dt=1e-2, T=1e-2)
        d = integrate(space, cfg, u0, src).final.u - ref
        b = space.lumped * d
        dists.append(np.sqrt(b @ space.solve_zero_mean(b, check=False)))
    assert dists[0] > dists[1] > dists[2]


# -- step rejection ---------------------------------------------------------------

def test_halving_on_newton_failure(space, monkeypatch):
    real = stepper.step_ch
    calls = []

    def flaky(sp, cfg, state, f):
        calls.append(cfg.dt)
        if cfg.dt > 0.006:
            raise NewtonDivergence("forced")
        return real(sp, cfg, state, f)

    monkeypatch.setattr(stepper, "step_ch", flaky)
    cfg = SolveConfig(problem="ch", dt=0.02, T=0.02)
    r = integrate(space, cfg, data.cosine_field(space.mesh, 0.5, 1.0))
    assert r.final.t == pytest.approx(0.02)
    assert calls[:3] == [0.02, 0.01, 0.005]
    assert np.all(r.column("ledger_ok") == 1)


def test_step_rejected_after_max_halvings(space, monkeypatch):
    def broken(*a):
        raise NewtonDivergence("forced")

    monkeypatch.setattr(stepper, "step_ch", broken)
    with pytest.raises(StepRejected) as info:
        integrate(space, SolveConfig(problem="ch", dt=0.02, T=0.02, max_halvings=2),
                  data.cosine_field(space.mesh, 0.5, 1.0))
    assert info.value.suggested_dt == pytest.approx(0.02 / 8)


def test_newton_divergence_reported(two):
    u0, g, _ = _two_data(two)
    cfg = SolveConfig(problem="stefan", dt=0.5, newton_max_iter=1, newton_tol=1e-300)
    s0 = initial_state(two, cfg, u0, lambda t: g)
    with pytest.raises(NewtonDivergence):
        step_stefan(two, cfg, s0, g)


def test_mean_is_initial_mean(space):
    u0 = data.cosine_field(space.mesh, 0.3, 1.0)
    s = initial_state(space, SolveConfig(), u0, data.zero_source(space.mesh))
    assert s.m0 == pytest.approx(mean(space.mesh, u0))
    assert abs(mean(space.mesh, trace_conform(space.mesh, s.v))) < 1e-14
