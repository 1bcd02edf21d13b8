import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stefanch import monotone as mono
from stefanch.errors import DomainError, InteriorityError
from stefanch.monotone import GraphKind, GraphSpec, PerturbationSpec

import oracles

STEFAN = GraphSpec.stefan(k_s=2.0, k_l=1.0, L=1.0)
GRAPHS = [STEFAN, GraphSpec.cubic(), GraphSpec.indicator()]
reals = st.floats(-10, 10, allow_nan=False)
lams = st.floats(1e-4, 1.0)


# -- worked examples ----------------------------------------------------------

def test_resolvent_identity_on_plateau():
    assert mono.resolvent(STEFAN, 0.5, 0.1) == 0.5


def test_resolvent_solid_branch_matches_bisection():
    j = mono.resolvent(STEFAN, -1.0, 0.5)
    assert j == pytest.approx(-0.5, abs=1e-15)
    assert j == pytest.approx(oracles.bisect_resolvent(oracles.stefan_beta, -1.0, 0.5), abs=1e-12)


def test_indicator_resolvent_clamps():
    for lam in (1e-3, 0.5, 1.0):
        assert mono.resolvent(GraphSpec.indicator(), 3.0, lam) == 1.0


def test_yosida_examples():
    assert mono.yosida(STEFAN, 0.7, 0.3) == 0.0
    assert mono.yosida(STEFAN, -1.0, 0.5) == pytest.approx(-1.0, abs=1e-15)
    assert mono.yosida(STEFAN, -1.0, 0.5) == pytest.approx(2 * -1.0 / (1 + 0.5 * 2), abs=1e-15)
    for g in GRAPHS:
        assert mono.yosida(g, 0.0, 0.1) == 0.0


def test_moreau_examples():
    assert mono.moreau(STEFAN, 0.4, 0.2) == 0.0
    v = mono.moreau(STEFAN, -1.0, 0.5)
    assert v == pytest.approx(0.5, abs=1e-15)
    q = oracles.quad_primitive(lambda s: oracles.bisect_yosida(oracles.stefan_beta, s, 0.5), -1.0)
    assert v == pytest.approx(q, abs=1e-9)
    for g in GRAPHS:
        assert mono.moreau(g, 0.0, 0.3) == 0.0


def test_beta_hat_examples():
    assert mono.beta_hat(STEFAN, 3.0) == pytest.approx(2.0)
    assert mono.beta_hat(STEFAN, 3.0) == pytest.approx(
        oracles.quad_primitive(lambda s: float(oracles.stefan_beta(s)), 3.0, points=(1.0,)), abs=1e-10)
    assert mono.beta_hat(STEFAN, 0.5) == 0.0
    assert mono.beta_hat(STEFAN, -2.0) == pytest.approx(4.0)
    with pytest.raises(DomainError):
        mono.beta_hat(GraphSpec.indicator(), 1.5)


def test_stefan_slopes_and_shape():
    r = np.linspace(-3, 3, 601)
    b = mono.beta(STEFAN, r)
    assert np.all(np.diff(b) >= 0)
    assert np.allclose(mono.beta(STEFAN, r), oracles.stefan_beta(r))
    assert mono.beta_slope(STEFAN, 0.0) == 0.0 and mono.beta_slope(STEFAN, 1.0) == 0.0
    assert mono.beta_slope(STEFAN, -1e-9) == 2.0 and mono.beta_slope(STEFAN, 1 + 1e-9) == 1.0


def test_pi_matches_definition_and_lipschitz():
    p = PerturbationSpec.stefan_plateau(1.0)
    r = np.linspace(-3, 3, 1201)
    assert np.allclose(mono.pi(p, r), oracles.stefan_pi(r))
    assert mono.perturbation_lipschitz(p) <= 1.0 + 1e-12
    # primitive is consistent with pi
    for x in (-2.0, 0.3, 1.7):
        q = oracles.quad_primitive(lambda s: float(oracles.stefan_pi(s)), x, points=(0.0, 1.0))
        assert mono.pi_hat(p, x) == pytest.approx(q, abs=1e-10)
    assert np.all(mono.pi(PerturbationSpec.zero(), r) == 0)


@pytest.mark.parametrize("g", GRAPHS, ids=lambda g: g.kind.value)
def test_growth_certificate(g):
    assert mono.growth_violation(g) <= 0.0
    r = mono.cert_grid()
    for lam in mono.CERT_LAMBDAS:
        assert np.all(mono.moreau(g, r, lam) + g.c2 >= 0)


def test_cubic_resolvent_matches_bisection():
    g = GraphSpec.cubic()
    for r in (-9.0, -0.3, 0.0, 2.0, 7.5):
        for lam in (1.0, 1e-2, 1e-4):
            ref = oracles.bisect_resolvent(lambda j: j ** 3, r, lam, lo=-20, hi=20)
            assert mono.resolvent(g, r, lam) == pytest.approx(ref, abs=1e-12)


# -- GMS constants ------------------------------------------------------------

@pytest.mark.parametrize("g,m0", [(STEFAN, 0.5), (GraphSpec.indicator(), 0.0), (STEFAN, -5.0),
                                  (GraphSpec.cubic(), 1.0)])
def test_gms_constants_certified_on_grid(g, m0):
    c3, c4 = mono.gms_constants(g, m0)
    assert c3 > 0 and c4 > 0
    r = mono.cert_grid()
    for lam in (1.0, 0.1, 0.01):
        b = mono.yosida(g, r, lam)
        assert np.all(b * (r - m0) - c3 * b + c4 >= 0)
        assert np.all(b * (r - m0) - c3 * np.abs(b) + c4 >= 0)


def test_gms_rejects_boundary_mean():
    with pytest.raises(InteriorityError):
        mono.gms_constants(GraphSpec.indicator(), 1.0)


def test_yosida_requires_positive_lambda():
    with pytest.raises(ValueError):
        mono.yosida(STEFAN, 1.0, 0.0)


# -- properties ---------------------------------------------------------------

@pytest.mark.parametrize("g", GRAPHS, ids=lambda g: g.kind.value)
@settings(max_examples=300, deadline=None)
@given(r=reals, s=reals, lam=lams)
def test_resolvent_nonexpansive_yosida_lipschitz_monotone(g, r, s, lam):
    jr, js = mono.resolvent(g, r, lam), mono.resolvent(g, s, lam)
    assert abs(jr - js) <= abs(r - s) * (1 + 1e-12) + 1e-12
    br, bs = mono.yosida(g, r, lam), mono.yosida(g, s, lam)
    assert abs(br - bs) <= abs(r - s) / lam * (1 + 1e-9) + 1e-9
    if r <= s:
        assert br <= bs + 1e-9


@pytest.mark.parametrize("g", GRAPHS, ids=lambda g: g.kind.value)
@settings(max_examples=200, deadline=None)
@given(r=reals, lam=lams)
def test_envelope_ordering(g, r, lam):
    env = mono.moreau(g, r, lam)
    assert env >= 0
    lo, hi = g.domain
    if lo <= r <= hi:
        assert env <= mono.beta_hat(g, r) * (1 + 1e-12) + 1e-15


@settings(max_examples=60, deadline=None)
@given(r=reals, lam=lams)
def test_envelope_equals_quadrature_of_yosida(r, lam):
    q = oracles.quad_primitive(lambda s: oracles.bisect_yosida(oracles.stefan_beta, s, lam), r,
                               points=(0.0, 1.0, 1.0 + lam))
    assert mono.moreau(STEFAN, r, lam) == pytest.approx(q, rel=1e-8, abs=1e-8)


@settings(max_examples=200, deadline=None)
@given(r=reals, lam=lams)
def test_lambda_consistency_for_lipschitz_graph(r, lam):
    b = mono.beta(STEFAN, r)
    assert abs(mono.yosida(STEFAN, r, lam) - b) <= lam * STEFAN.c_beta * abs(b) + 1e-12


def test_yosida_converges_to_beta():
    r = np.linspace(-5, 5, 101)
    errs = [np.max(np.abs(mono.yosida(STEFAN, r, lam) - mono.beta(STEFAN, r))) for lam in (1e-1, 1e-2, 1e-3)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[1] / errs[2] == pytest.approx(10, rel=0.1)


def test_graph_kinds_have_expected_domains():
    assert GraphSpec.indicator().domain == (-1.0, 1.0)
    assert GraphSpec.cubic().kind is GraphKind.CUBIC
    assert STEFAN.lipschitz and not GraphSpec.cubic().lipschitz
