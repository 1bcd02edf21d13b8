"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line.

The built-in experiments are run once, timed and written to a directory; the
determinism check then runs ``stefanch verify`` from the command line and
compares the CSV bytes.
"""

import time

import numpy as np
import pytest

from stefanch import cli, harness
from stefanch.forms import DiscreteSpace
from stefanch.geometry import MeshPair, PairedField, project_zero_mean, trace_conform
from stefanch.stepper import SolveConfig, initial_state, step_ch, step_regularized, step_stefan

import oracles

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    """Every built-in experiment, timed, with its CSV output in one directory."""
    out = tmp_path_factory.mktemp("verify_a")
    runs = {}
    for name in harness.EXPERIMENTS:
        start = time.perf_counter()
        exp = harness.run_experiments([name])[0]
        runs[name] = (exp, time.perf_counter() - start)
    exps = [e for e, _ in runs.values()]
    for e in exps:
        e.write(out)
    harness.write_summary(out / "summary.txt", exps)
    return runs, out


def _rows(exp, key):
    return exp.tables[key].rows


def test_01_convex_analysis(suite, acceptance):
    exp, sec = suite[0]["convex"]
    worst = max(r[6] for r in _rows(exp, "properties"))
    viol = sum(sum(r[2:6]) for r in _rows(exp, "properties"))
    ok = exp.passed and viol == 0 and worst <= 1e-8 and sec < 5
    acceptance("1 convex analysis", ok,
               f"violations {viol}, Moreau error {worst:.2e}, {sec:.1f} s (< 5 s)")
    assert ok


def test_02_operator_identities(suite, acceptance):
    exp, sec = suite[0]["operators"]
    vals = {r[0]: r[1] for r in _rows(exp, "identities")}
    ok = exp.passed and sec < 30
    acceptance("2 operator identities", ok,
               f"round trip {vals['F_round_trip_rel']:.1e}, 2phi-a {vals['two_phi_minus_a']:g}, "
               f"mean {vals['mean_after_projection']:.1e}, lifting violations "
               f"{vals['lifting_violations']}, {sec:.1f} s (< 30 s)")
    assert ok


def test_03_mass_conservation(suite, acceptance):
    exp, _ = suite[0]["mass"]
    drift = max(r[2] for r in _rows(exp, "drift"))
    ok = exp.passed and drift <= 1e-10
    acceptance("3 mass conservation", ok, f"max drift {drift:.1e} over 3 variants x 200 steps")
    assert ok


def test_04_dense_oracle(acceptance):
    space = DiscreteSpace(MeshPair.two_triangle())
    mesh = space.mesh
    u_old = np.array([-0.6, 0.4, 1.9, 2.4])
    g = project_zero_mean(mesh, PairedField(np.array([0.3, -0.8, 0.5, 0.1]),
                                            np.array([-0.2, 0.4, -0.1, 0.3])))
    b = oracles.M_BULK @ g.bulk + oracles.M_LOOP @ g.boundary
    f = oracles.dense_lift(b)
    u0 = trace_conform(mesh, u_old)
    eps, lam, dt = 0.2, 0.05, 0.05
    pi = oracles.stefan_pi
    yos = lambda u: np.array([oracles.bisect_yosida(oracles.stefan_beta, x, lam) for x in u])
    cases = {
        "regularized": (SolveConfig(problem="regularized_ch", lam=lam, epsilon=eps, dt=dt),
                        step_regularized, space.solve_zero_mean(space.embed(g)),
                        oracles.dense_ch_step(u_old, f, dt, eps, lam, lambda u: yos(u) + eps * pi(u))),
        "ch": (SolveConfig(problem="ch", epsilon=eps, dt=dt), step_ch,
               space.solve_zero_mean(space.embed(g)),
               oracles.dense_ch_step(u_old, f, dt, eps, 0.0,
                                     lambda u: oracles.stefan_beta(u) + eps * pi(u))),
        "stefan": (SolveConfig(problem="stefan", dt=dt), step_stefan, g,
                   oracles.dense_stefan_step(u_old, b, dt, oracles.stefan_beta)),
    }
    errs = {}
    for name, (cfg, step, forcing, ref) in cases.items():
        s1 = step(space, cfg, initial_state(space, cfg, u0, lambda t: g), forcing)
        errs[name] = float(np.max(np.abs(s1.u - ref)))
    ok = all(e <= 1e-10 for e in errs.values())
    acceptance("4 dense oracle", ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()))
    assert ok


def test_05_lambda_convergence(suite, acceptance):
    exp, sec = suite[0]["lambda"]
    errs = [r[1] for r in _rows(exp, "convergence")]
    ok = exp.passed and sec < 120
    acceptance("5 lambda -> 0", ok,
               f"errors {', '.join(f'{e:.3g}' for e in errs)}; {exp.notes[0]}; {sec:.1f} s (< 120 s)")
    assert ok


def test_06_epsilon_convergence(suite, acceptance):
    exp, sec = suite[0]["eps"]
    errs = [r[1] for r in _rows(exp, "convergence")]
    ok = exp.passed and sec < 300
    acceptance("6 epsilon -> 0", ok,
               f"sup dual errors {', '.join(f'{e:.3g}' for e in errs)}; {sec:.1f} s (< 300 s)")
    assert ok


def test_07_uniform_bounds(suite, acceptance):
    exp, _ = suite[0]["bounds"]
    tab = exp.tables["ledger"]
    keys = harness.LEDGER_KEYS
    ref = tab.rows[0][2:2 + len(keys)]
    worst = max(r[2 + i] / ref[i] for r in tab.rows[1:] for i in range(len(keys)) if ref[i] > 0)
    steps_ok = all(r[-1] for r in tab.rows)
    ok = exp.passed and steps_ok and worst <= harness.BOUND_FACTOR
    acceptance("7 uniform bounds", ok,
               f"worst ratio to eps=1/4 entry {worst:.3f} (<= 4), per-step ledger held: {steps_ok}")
    assert ok


def test_08_continuous_dependence(suite, acceptance):
    exp, sec = suite[0]["depend"]
    rows = _rows(exp, "inequalities")
    viol = sum(r[5] for r in rows)
    xi_ok = all(r[6] <= r[7] for r in rows)
    ok = exp.passed and viol == 0 and xi_ok and len(rows) == 6 and sec < 120
    acceptance("8 continuous dependence", ok,
               f"violations {viol}, max ratio {max(r[4] for r in rows):.3f}, xi bound held: {xi_ok}, "
               f"C = {rows[0][8]:.4f}, {sec:.1f} s (< 120 s)")
    assert ok


def test_09_mms_orders(suite, acceptance):
    exp, sec = suite[0]["mms"]
    ok = exp.passed and sec < 300
    acceptance("9 manufactured orders", ok, f"{'; '.join(exp.notes)}; {sec:.1f} s (< 300 s)")
    assert ok


def test_10_determinism(suite, acceptance, tmp_path):
    _, first = suite
    second = tmp_path / "verify_b"
    code = cli.main(["verify", "--out", str(second), "--threads", "4"])
    a = sorted(p.name for p in first.glob("*.csv"))
    b = sorted(p.name for p in second.glob("*.csv"))
    differ = [n for n in a if (first / n).read_bytes() != (second / n).read_bytes()] if a == b else a
    ok = code == 0 and a == b and not differ and len(a) > 0
    acceptance("10 determinism", ok,
               f"{len(a)} CSV files, {len(differ)} differ, second run exit {code}")
    assert ok
