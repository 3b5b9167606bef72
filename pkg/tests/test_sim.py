"""Time integration: conservation, stability guards, twins, weak forms."""

import math

import numpy as np
import pytest

from msdiff.entropy import identity_renorm
from msdiff.flux import DiffusionMatrix
from msdiff.grid import ConcentrationState, PeriodicGrid, integrate, l2_norm
from msdiff.mollify import fit_loglog
from msdiff.sim import (
    CflViolation,
    Perturbation,
    PositivityFailure,
    Scenario,
    apply_positivity,
    bump_test_function,
    exact_binary_mode,
    max_stable_dt,
    run,
    step,
    twin_experiment,
    weak_form_residual,
)

D2 = DiffusionMatrix.uniform(2, 1.5)
D3 = DiffusionMatrix([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])


def test_uniform_mixture_is_a_fixed_point():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((16,)), t_final=0.001,
                  preset="uniform", cadence=1)
    traj = run(sc)
    assert len(traj.states) >= 3
    for c in traj.states[1:]:
        assert np.array_equal(c, traj.states[0])
    assert traj.flux_inf == 0.0
    assert traj.clipped_total == 0.0


def test_binary_mode_matches_exact_solution():
    grid = PeriodicGrid((64,))
    sc = Scenario(n=2, D=D2, grid=grid, t_final=0.01, preset="binary_mode",
                  amplitude=0.3)
    traj = run(sc)
    exact = exact_binary_mode(grid, 1.5, 0.3, 1, 0.01)
    rel = l2_norm(traj.states[-1] - exact.c, grid) / l2_norm(exact.c, grid)
    assert rel < 1e-4
    # the mode amplitude decays at the closed-form rate
    amp = np.abs(traj.states[-1][0] - 0.5).max()
    lam = 1.5 * (2 * math.pi) ** 2
    assert abs(amp / (0.3 * math.exp(-lam * 0.01)) - 1.0) < 0.01


def test_exact_binary_mode_at_time_zero_is_the_preset():
    grid = PeriodicGrid((32,))
    sc = Scenario(n=2, D=D2, grid=grid, t_final=1.0, preset="binary_mode",
                  amplitude=0.25, mode=2)
    assert np.array_equal(sc.initial_state().c, exact_binary_mode(grid, 1.5, 0.25, 2, 0.0).c)


def test_conservation_and_simplex():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((32,)), t_final=0.005,
                  amplitude=0.4)
    traj = run(sc)
    assert traj.species_mass_drift() < 1e-12
    assert traj.simplex_defect() < 1e-12


def test_entropy_series_never_increases():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((32,)), t_final=0.005,
                  amplitude=0.4)
    traj = run(sc)
    assert len(traj.entropy_series) == len(traj.step_times)
    assert np.diff(traj.entropy_series).max() <= 1e-10


def test_runs_are_deterministic():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((24,)), t_final=0.002, cadence=4)
    a, b = run(sc), run(sc)
    assert a.times == b.times
    for ca, cb in zip(a.states, b.states):
        assert np.array_equal(ca, cb)
    assert a.entropy_series == b.entropy_series


def test_stability_guards():
    grid = PeriodicGrid((32,))
    cap = max_stable_dt(grid, D3)
    with pytest.raises(CflViolation):
        run(Scenario(n=3, D=D3, grid=grid, t_final=0.001, dt=0.00025))
    state = Scenario(n=3, D=D3, grid=grid, t_final=1.0, preset="uniform").initial_state()
    with pytest.raises(CflViolation):
        step(state, D3, 2.0 * cap)
    # an explicit dt must tile t_final exactly
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=0.001, dt=0.0003).resolve_steps()


def test_scenario_validation():
    grid = PeriodicGrid((16,))
    with pytest.raises(ValueError):
        Scenario(n=2, D=D3, grid=grid, t_final=1.0)
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=-1.0)
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, cfl=1.5)
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, scheme="rk4")
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, cadence=0)
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, preset="vortex").initial_state()
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, weights=[1.0, 1.0]).initial_state()
    with pytest.raises(ValueError):
        Scenario(n=3, D=D3, grid=grid, t_final=1.0, preset="binary_mode").initial_state()


def test_scenario_refine_scales_time_step_parabolically():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((16,)), t_final=0.001,
                  dt=1e-4, cadence=2)
    fine = sc.refine(2)
    assert fine.grid.cells == (32,)
    assert fine.dt == 2.5e-5
    assert fine.cadence == 8
    auto = Scenario(n=3, D=D3, grid=PeriodicGrid((16,)), t_final=0.001).refine(2)
    assert auto.dt is None and auto.cadence == 1


def test_apply_positivity_cases():
    # harmless rounding noise passes through untouched
    c = np.array([[0.5, -1e-13], [0.5, 1.0]])
    out, lost = apply_positivity(c, 0.5)
    assert out is c and lost == 0.0
    # genuine undershoot within budget: clipped cell back on the simplex
    c = np.array([[0.5, -1e-10], [0.5, 1.0 + 1e-10]])
    out, lost = apply_positivity(c, 0.5)
    assert lost > 0.0
    assert out.min() == 0.0
    assert abs(out[:, 1].sum() - 1.0) < 1e-15
    assert np.array_equal(out[:, 0], c[:, 0])
    with pytest.raises(PositivityFailure):
        apply_positivity(np.array([[-0.1, 0.6], [1.1, 0.4]]), 0.5)


def test_scheme_orders_against_fine_reference():
    grid = PeriodicGrid((32,))
    T = 0.004
    mk = lambda steps, scheme: Scenario(
        n=2, D=D2, grid=grid, t_final=T, preset="binary_mode",
        amplitude=0.3, dt=T / steps, scheme=scheme,
    )
    ref = run(mk(512, "heun")).states[-1]
    orders = {}
    for scheme in ("euler", "heun"):
        errs = [l2_norm(run(mk(steps, scheme)).states[-1] - ref, grid)
                for steps in (16, 32)]
        orders[scheme] = math.log2(errs[0] / errs[1])
    assert 0.8 < orders["euler"] < 1.3, orders
    assert orders["heun"] > 1.7, orders


def test_twin_without_perturbation_is_bitwise_identical():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((24,)), t_final=0.002, cadence=2)
    res = twin_experiment(sc)
    for ca, cb in zip(res.base.states, res.twin.states):
        assert np.array_equal(ca, cb)
    assert np.all(res.certificate.r_series == 0.0)
    assert res.certificate.holds


def test_twin_time_refinement_aligns_snapshots():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((24,)), t_final=0.002, cadence=2)
    res = twin_experiment(sc, dt_divisor=2)
    assert res.twin.dt == res.base.dt / 2
    assert np.abs(np.asarray(res.base.times) - np.asarray(res.twin.times)).max() == 0.0
    assert res.certificate.holds
    with pytest.raises(ValueError):
        twin_experiment(sc, dt_divisor=1.5)


def test_perturbation_is_mass_neutral_and_guarded():
    grid = PeriodicGrid((32,))
    sc = Scenario(n=3, D=D3, grid=grid, t_final=1.0, amplitude=0.3)
    state = sc.initial_state()
    shaken = Perturbation(amplitude=0.01, mode=2).apply(state)
    before = integrate(state.c, grid)
    after = integrate(shaken.c, grid)
    assert np.abs(after - before).max() < 1e-14
    assert np.abs(shaken.c[2] - state.c[2]).max() == 0.0  # untouched species
    big = Perturbation(amplitude=0.7)
    with pytest.raises(ValueError):
        Scenario(n=2, D=D2, grid=grid, t_final=1.0, preset="uniform",
                 perturbation=big).initial_state()


def test_trajectory_accessors():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((16,)), t_final=0.001, cadence=3)
    traj = run(sc)
    st = traj.state(1)
    assert isinstance(st, ConcentrationState)
    assert st.time == traj.times[1]
    assert traj.n == 3
    assert traj.flux_inf > 0.0


def test_bump_test_function_support_and_derivatives():
    grid = PeriodicGrid((64,))
    phi = bump_test_function(grid, -0.004, 0.0035)
    assert np.all(phi.value(0.0035) == 0.0)
    assert np.all(phi.value(0.01) == 0.0)
    assert np.abs(phi.value(0.0)).max() > 0.0  # active at the initial time
    t, h = 0.001, 1e-7
    fd = (phi.value(t + h) - phi.value(t - h)) / (2 * h)
    assert np.abs(fd - phi.dt(t)).max() < 1e-5 * np.abs(phi.dt(t)).max()
    # analytic space gradient against the central difference of the samples
    v = phi.value(t)
    hx = grid.spacing[0]
    fd_x = (np.roll(v, -1) - np.roll(v, 1)) / (2 * hx)
    assert np.abs(fd_x - phi.grad(t)[0]).max() < 0.02 * np.abs(phi.grad(t)).max()


def test_weak_form_requires_vanishing_final_test_function():
    sc = Scenario(n=3, D=D3, grid=PeriodicGrid((16,)), t_final=0.004,
                  dt=0.004 / 32, cadence=1)
    traj = run(sc)
    alive = bump_test_function(traj.grid, -0.004, 0.008)
    with pytest.raises(ValueError):
        weak_form_residual(traj, identity_renorm(), alive)


def test_weak_form_residual_refines():
    T = 0.004
    beta = identity_renorm()
    residuals, widths = [], []
    for k in range(2):
        cells = 16 * 2**k
        sc = Scenario(n=3, D=D3, grid=PeriodicGrid((cells,)), t_final=T,
                      amplitude=0.3, dt=T / (32 * 4**k), cadence=2**k)
        traj = run(sc)
        phi = bump_test_function(traj.grid, -T, 0.0035)
        residuals.append(weak_form_residual(traj, beta, phi))
        widths.append(1.0 / cells)
    ratios = residuals[0] / residuals[1]
    assert ratios.min() > 2.0, (residuals, ratios)
