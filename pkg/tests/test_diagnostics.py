import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from crossdiff.diagnostics import (
    DiagnosticsConfig, DualProbeSpec, check_mass_estimate, check_max_principle, d2phi_p, d2phi_u,
    dphi_p, dual_probe, duality_functional, entropy_u_constant, entropy_u_step_check,
    entropy_v_cumulative, entropy_v_series, entropy_v_step_check, log_entropy_checks, mass_constant,
    phi_p, probe_forcing, regularity_norms, run_diagnostics,
)
from crossdiff.grid import Grid
from crossdiff.model import ParamSet, sample_params
from crossdiff.stepper import SchemeConfig, State, Trajectory, run


def constant_trajectory(p, grid, u, v, T, N):
    times = np.linspace(0.0, T, N + 1)
    shape = (N + 1,) + grid.shape
    return Trajectory(grid, p, times, np.full(shape, float(u)), np.full(shape, float(v)))


def canonical_run(n=32, N=40, T=0.2, p=None):
    p = p or ParamSet()
    g = Grid(1, n)
    (x,) = g.coords()
    s = State(g, 1 + 0.5 * np.cos(np.pi * x), 1.5 + 0.5 * np.cos(2 * np.pi * x))
    traj, _ = run(s, p, SchemeConfig(T, N), with_report=False)
    return traj


def _numeric_sup(f, hi):
    r = minimize_scalar(lambda z: -f(z), bounds=(0, hi), method="bounded", options={"xatol": 1e-12})
    return -r.fun


# --- entropy densities ----------------------------------------------------


@given(st.floats(0, 0.999), st.floats(1e-6, 1e3))
def test_phi_p_nonnegative_with_minimum_at_one(p, z):
    assert phi_p(1.0, p) == pytest.approx(0.0, abs=1e-15)
    assert phi_p(z, p) >= -1e-12 * (1 + z)
    assert d2phi_p(z, p) >= 0


@given(st.floats(1e-4, 0.999), st.floats(0.05, 20))
def test_phi_p_derivative_consistent(p, z):
    eps = 1e-6 * z
    fd = (phi_p(z + eps, p) - phi_p(z - eps, p)) / (2 * eps)
    assert fd == pytest.approx(float(dphi_p(z, p)), abs=1e-6 * (1 + abs(fd)))


def test_phi_zero_is_limit_of_phi_p():
    z = np.array([0.1, 0.7, 2.0, 9.0])
    np.testing.assert_allclose(phi_p(z, 1e-7), phi_p(z, 0.0), rtol=1e-5)


@given(st.floats(0, 1e8))
def test_mu_one_bound(z):
    assert d2phi_u(z) * z**2 <= 1.0


# --- explicit constants ---------------------------------------------------


def test_mass_constant_examples():
    assert mass_constant(1.0, 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert mass_constant(1.0, 2.0, 1.0) == pytest.approx(2.0, rel=1e-15)
    # frozen from a bounded scalar maximiser
    assert mass_constant(0.5, 1.3, 0.7) == pytest.approx(2.6569916855631144, rel=1e-9)
    assert mass_constant(1.0, 0.0, 1.0) == 0.0
    assert mass_constant(1.0, 1.0, 0.0) == math.inf


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3))
def test_mass_constant_matches_numeric_sup(a, r_u, r_a):
    zstar = (2 * r_u / (r_a * (1 + a))) ** (1 / a)
    num = _numeric_sup(lambda z: r_u * z - 0.5 * r_a * z ** (1 + a), 4 * zstar + 1)
    assert mass_constant(a, r_u, r_a) == pytest.approx(num, rel=1e-8, abs=1e-12)


def test_entropy_u_constant_examples():
    assert entropy_u_constant(1.0, 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert entropy_u_constant(2.0, 1.0, 2.0) == pytest.approx(2.1773242158072694, rel=1e-9)


@given(st.floats(0.1, 3), st.floats(0.1, 3), st.floats(0.1, 3))
def test_entropy_u_constant_matches_numeric_sup(r_u, r_a, a):
    zstar = (r_u / (r_a * (1 + a))) ** (1 / a)
    num = _numeric_sup(lambda z: 2 * z * (r_u - r_a * z**a), 4 * zstar + 1)
    assert entropy_u_constant(r_u, r_a, a) == pytest.approx(num, rel=1e-8, abs=1e-12)


# --- maximum principle and mass ------------------------------------------


def test_max_principle_bounds():
    g = Grid(1, 8)
    p = ParamSet(r_v=1, r_c=1, c=1)
    assert check_max_principle(constant_trajectory(p, g, 1, 2.0, 1, 4)).bound[0] == 2.0
    assert check_max_principle(constant_trajectory(p, g, 1, 0.5, 1, 4)).bound[0] == 1.0
    relaxed = ParamSet(r_v=0, r_c=0, strict_validation=False)
    assert check_max_principle(constant_trajectory(relaxed, g, 1, 1, 1, 4)).status == "not_applicable"


def test_mass_estimate_zero_trajectory():
    g = Grid(1, 8, 2.0)
    mon = check_mass_estimate(constant_trajectory(ParamSet(), g, 0.0, 1.0, 1.0, 5))
    assert np.all(mon.value == 0.0)
    assert mon.bound[-1] == pytest.approx(0 + 2.0 * 1.0 * mass_constant(1, 2, 1))
    assert mon.status == "pass"


def test_mass_estimate_equilibrium_values():
    g = Grid(1, 10, 1.5)
    T = 0.8
    mon = check_mass_estimate(constant_trajectory(ParamSet(), g, 1.0, 1.0, T, 8))
    vol = 1.5
    assert mon.value[-1] == pytest.approx(vol + 0.5 * T * vol, rel=1e-14)
    assert mon.bound[-1] == pytest.approx(vol + vol * T * 2.0, rel=1e-14)
    assert mon.status == "pass"


# --- duality --------------------------------------------------------------


def test_duality_functional_examples():
    g = Grid(1, 9)
    assert duality_functional(constant_trajectory(ParamSet(), g, 0.0, 1.0, 1.0, 7)) == 0.0
    assert duality_functional(constant_trajectory(ParamSet(alpha=1.0), g, 1.0, 1.0, 1.0, 7)) == pytest.approx(2.0)


# --- entropy checks -------------------------------------------------------


@pytest.mark.parametrize("p_exp", [0.0, 0.3, 0.5])
def test_entropy_v_equilibrium_roundoff(p_exp):
    mon = entropy_v_step_check(constant_trajectory(ParamSet(), Grid(1, 8), 1.0, 1.0, 0.5, 5), p_exp)
    assert np.max(np.abs(mon.value)) <= 1e-15
    assert mon.status == "pass"


def test_entropy_v_requires_small_p():
    with pytest.raises(ValueError):
        entropy_v_step_check(constant_trajectory(ParamSet(), Grid(1, 8), 1, 1, 1, 2), 1.5)


def test_entropy_v_assembly_against_dense_oracle():
    # dense recomputation on n = 16: dissipation = -h phi'(v)^T L v
    traj = canonical_run(n=16, N=10, T=0.1)
    g, p, q = traj.grid, traj.params, 0.5
    h = g.h[0]
    L = g.laplacian_matrix.toarray()
    mon = entropy_v_step_check(traj, q)
    for k in range(1, len(traj)):
        u, v, vp = traj.u[k], traj.v[k], traj.v[k - 1]
        dt = traj.times[k] - traj.times[k - 1]
        dE = h * np.sum(phi_p(v, q) - phi_p(vp, q))
        diss = -h * dphi_p(v, q) @ L @ v * p.d_v
        react = h * np.sum(dphi_p(v, q) * v * (p.r_v - p.r_c * v**p.c - p.r_d * u**p.d))
        assert mon.value[k - 1] == pytest.approx(dE + dt * diss - dt * react, abs=1e-13)


def test_entropy_u_equilibrium_and_bound():
    traj = constant_trajectory(ParamSet(), Grid(1, 8), 1.0, 1.0, 0.5, 5)
    mon = entropy_u_step_check(traj)
    assert np.all(mon.value == 0.0)
    # right-hand side is tau |Omega| C with C(2, 1, 1) = 2
    assert mon.bound[0] == pytest.approx(0.1 * 2.0)
    relaxed = ParamSet(r_a=0, strict_validation=False)
    assert entropy_u_step_check(constant_trajectory(relaxed, Grid(1, 8), 1, 1, 1, 2)).status == "not_applicable"


def test_entropy_margins_on_canonical_run():
    traj = canonical_run()
    for q in (0.0, 0.5):
        assert entropy_v_step_check(traj, q).status == "pass"
    assert entropy_u_step_check(traj).status == "pass"


def test_entropy_v_series_and_cumulative_monotone():
    traj = canonical_run()
    values, diss = entropy_v_series(traj, 0.5)
    assert len(values) == len(traj) and np.all(np.diff(diss) >= 0)
    for q in (0.5, 2.0, 1.0):
        assert np.all(np.diff(entropy_v_cumulative(traj, q)) >= 0)


def test_log_entropy_checks():
    traj = canonical_run()
    mu, mv, extra = log_entropy_checks(traj)
    assert mu.status == mv.status == "pass"
    assert np.all(np.diff(extra["grad_log_sum_v"]) >= 0)
    assert np.all(np.diff(extra["sup_abs_log_u"]) >= 0)


# --- dual probe -----------------------------------------------------------


def test_dual_probe_constant_coefficient_is_T_minus_t():
    traj = canonical_run(n=16, N=20, T=0.4)
    M = np.ones_like(traj.u)
    rep = dual_probe(traj, "constant", M=M)
    for k, t in enumerate(traj.times):
        np.testing.assert_allclose(rep.solution[k], traj.times[-1] - t, atol=1e-10)


def test_dual_probe_zero_forcing():
    traj = canonical_run(n=16, N=10, T=0.1)
    rep = dual_probe(traj, lambda t, *x: np.zeros_like(x[0]))
    assert np.all(rep.solution == 0.0)
    assert all(r == 0.0 for r in rep.ratios.values())


@pytest.mark.parametrize("f", ["constant", "random:1", "random:7"])
def test_dual_probe_positive_and_identity(f):
    traj = canonical_run()
    rep = dual_probe(traj, f)
    assert rep.positive and rep.min_value >= -1e-12
    assert rep.identity_residual < 1e-6
    assert set(rep.ratios) == {0.0, 0.05, 0.1}
    assert all(r > 0 for r in rep.ratios.values())


def test_dual_probe_rejects_positive_forcing():
    traj = canonical_run(n=8, N=4, T=0.04)
    with pytest.raises(ValueError):
        dual_probe(traj, lambda t, *x: np.ones_like(x[0]))


def test_random_forcing_is_nonpositive_and_seeded():
    g = Grid(2, (7, 5))
    x, y = g.coords()
    f1, f2 = probe_forcing("random:3", g, 1.0), probe_forcing("random:3", g, 1.0)
    for t in np.linspace(0, 1, 11):
        assert np.all(f1(t, x, y) <= -0.1 + 1e-12)
        assert np.array_equal(f1(t, x, y), f2(t, x, y))
    with pytest.raises(ValueError):
        probe_forcing("bogus", g, 1.0)


# --- regularity and driver ------------------------------------------------


def test_regularity_norms_finite_gamma_zero():
    traj = canonical_run(p=ParamSet(gamma=0.0))
    norms = regularity_norms(traj, 2.0)
    assert all(math.isfinite(v) for v in norms.values())
    rep = run_diagnostics(traj)
    assert rep.monitors["regularity"].status == "pass"


def test_regularity_of_constant_is_zero():
    norms = regularity_norms(constant_trajectory(ParamSet(), Grid(2, (5, 4)), 1, 1, 1, 3), 1.5)
    assert norms["dt_v_Lq"] == norms["hess_v_Lq"] == norms["grad_v_L2q"] == 0.0


def test_exponent_validation():
    cfg = DiagnosticsConfig(entropy_exponents=(0.5, 1.0))
    with pytest.raises(ValueError):
        cfg.exponents(ParamSet())
    assert DiagnosticsConfig().exponents(ParamSet(beta=1.0)) == [0.5, 2.0]
    assert DiagnosticsConfig().exponents(ParamSet(beta=1.5)) == [0.5, 2.0, 1.5]


def test_run_diagnostics_pure_and_written(tmp_path):
    traj = canonical_run()
    cfg = DiagnosticsConfig(dual_probe=DualProbeSpec("constant"))
    a, b = run_diagnostics(traj, cfg), run_diagnostics(traj, cfg)
    assert a.summary() == b.summary()
    assert a.all_pass
    files = a.write(tmp_path)
    names = {f.name for f in files}
    assert "summary.json" in names and "monitor_max_principle.csv" in names
    header = (tmp_path / "monitor_mass.csv").read_text().splitlines()[0]
    assert header == "step,time,value,bound,margin,pass"
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["all_pass"] is True
    assert "dual_probe_ratio_nu0" in summary["measured"]


def test_monitor_selection():
    traj = canonical_run(n=16, N=10, T=0.1)
    rep = run_diagnostics(traj, DiagnosticsConfig(monitors=("max_principle",)))
    assert set(rep.monitors) == {"max_principle", "cumulative_monotone"}


def test_relaxed_pure_diffusion_skips_reaction_monitors():
    p = ParamSet(r_u=0, r_v=0, r_a=0, r_b=0, r_c=0, r_d=0, strict_validation=False)
    rep = run_diagnostics(canonical_run(n=16, N=10, T=0.1, p=p))
    assert rep.monitors["max_principle"].status == "not_applicable"
    assert rep.monitors["mass"].status == "not_applicable"
    assert rep.all_pass


@pytest.mark.parametrize("seed", range(4))
def test_monitors_pass_on_random_admissible_runs(seed):
    rng = np.random.default_rng(seed)
    p = sample_params(rng)
    g = Grid(1, 24)
    u = rng.uniform(0.2, 2.0, g.shape)
    v = rng.uniform(0.2, 2.0, g.shape)
    T = 0.2
    N = max(10, math.ceil(T * max(p.r_u, p.r_v) / 0.45))
    traj, rep = run(State(g, u, v), p, SchemeConfig(T, N))
    assert rep.all_pass, rep.failed
