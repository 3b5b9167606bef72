"""Entropy functionals, the balance identity, and the twin certificates."""

import math

import numpy as np
import pytest

from msdiff.entropy import (
    DeltaNonpositive,
    MeshMismatch,
    csiszar_kullback_check,
    dissipation,
    entropy,
    error_terms,
    gronwall_certificate,
    heat_identity_residual,
    identity_renorm,
    identity_residual,
    identity_series,
    log_shift_renorm,
    quadratic_log_gap,
    regularized_relative_entropy,
    relative_entropy,
    renormalized_entropy,
    renormalized_relative_entropy,
    square_renorm,
    symmetrized_relative_entropy,
)
from msdiff.flux import DiffusionMatrix
from msdiff.grid import ConcentrationState, PeriodicGrid
from msdiff.sim import Perturbation, Scenario, run, twin_experiment


def constant_state(grid, fractions, time=0.0):
    n = len(fractions)
    c = np.tile(np.asarray(fractions, float).reshape((n,) + (1,) * grid.dim),
                (1,) + grid.cells)
    return ConcentrationState(grid, c, time)


GRID = PeriodicGrid((16,))


def test_entropy_uniform_and_pure():
    # uniform mixture: H = ln(1/n) - 1; a pure species gives exactly -1
    for n in (2, 3, 5):
        state = constant_state(GRID, [1.0 / n] * n)
        assert abs(entropy(state) - (-math.log(n) - 1.0)) < 1e-14
    pure = constant_state(GRID, [1.0, 0.0])
    assert abs(entropy(pure) - (-1.0)) < 1e-14


def test_relative_entropy_hand_values():
    a = constant_state(GRID, [0.6, 0.4])
    b = constant_state(GRID, [0.5, 0.5])
    expected = 0.6 * math.log(0.6 / 0.5) + 0.4 * math.log(0.4 / 0.5)
    assert abs(relative_entropy(a, b) - expected) < 1e-14
    assert relative_entropy(a, a) == 0.0
    # mass term cancels only when both states sit on the simplex
    skew = 0.6 * math.log(0.6 / 0.3) - 0.3
    c = ConcentrationState(GRID, np.tile([[0.3], [0.7]], (1, 16)))
    got = relative_entropy(constant_state(GRID, [0.6, 0.4]), c)
    expected = skew + 0.4 * math.log(0.4 / 0.7) + 0.3
    assert abs(got - expected) < 1e-14


def test_relative_entropy_infinite_on_lost_support():
    a = constant_state(GRID, [0.5, 0.5])
    b = constant_state(GRID, [1.0, 0.0])
    assert relative_entropy(a, b) == math.inf


def test_symmetrized_entropy_matches_sum_of_relatives():
    a = constant_state(GRID, [0.6, 0.4])
    b = constant_state(GRID, [0.4, 0.6])
    expected = 0.4 * math.log(1.5)  # (0.2) ln(0.6/0.4) twice
    val = symmetrized_relative_entropy(a, b)
    assert abs(val - expected) < 1e-14
    assert abs(val - (relative_entropy(a, b) + relative_entropy(b, a))) < 1e-14


def test_symmetrized_entropy_vanishing_conventions():
    a = constant_state(GRID, [1.0, 0.0])
    b = constant_state(GRID, [0.5, 0.5])
    assert symmetrized_relative_entropy(a, b) == math.inf
    both = constant_state(GRID, [1.0, 0.0])
    assert symmetrized_relative_entropy(both, both.copy()) == math.inf
    assert symmetrized_relative_entropy(both, both.copy(), both_vanish="zero") == 0.0
    with pytest.raises(ValueError):
        symmetrized_relative_entropy(a, b, both_vanish="nan")


def test_regularized_entropy_value_and_guard():
    a = constant_state(GRID, [0.6, 0.4])
    b = constant_state(GRID, [0.4, 0.6])
    delta = 0.05
    expected = 2 * 0.2 * math.log(0.65 / 0.45)
    assert abs(regularized_relative_entropy(a, b, delta) - expected) < 1e-14
    with pytest.raises(DeltaNonpositive):
        regularized_relative_entropy(a, b, 0.0)


def test_renormalized_profiles():
    a = constant_state(GRID, [0.6, 0.4])
    b = constant_state(GRID, [0.4, 0.6])
    ident = identity_renorm()
    assert abs(renormalized_relative_entropy(a, b, ident) - 2 * 0.04) < 1e-14
    sq = square_renorm()
    expected = (0.36 - 0.16) * 0.2 * 2
    assert abs(renormalized_relative_entropy(a, b, sq) - expected) < 1e-14
    log5 = log_shift_renorm(0.05)
    assert abs(
        renormalized_relative_entropy(a, b, log5)
        - regularized_relative_entropy(a, b, 0.05)
    ) < 1e-14
    with pytest.raises(DeltaNonpositive):
        log_shift_renorm(-1.0)


def test_renorm_antiderivatives():
    log3 = log_shift_renorm(0.3)
    assert abs(log3.antideriv(np.array(0.0))) < 1e-15
    # numeric derivative of the primitive recovers the profile
    s = np.linspace(0.1, 0.9, 7)
    h = 1e-6
    num = (log3.antideriv(s + h) - log3.antideriv(s - h)) / (2 * h)
    assert np.abs(num - log3.f(s)).max() < 1e-9
    state = constant_state(GRID, [0.5, 0.5])
    val = renormalized_entropy(state, square_renorm())
    assert abs(val - 2 * 0.125 / 3.0) < 1e-14


def test_dissipation_hand_case_and_invariances():
    grid = PeriodicGrid((8,))
    D = DiffusionMatrix.uniform(2, 1.0)
    w = np.ones((2, 8))
    u = np.zeros((2, 1, 8))
    ub = np.zeros((2, 1, 8))
    u[0] += 1.0  # velocity difference gap of 1 between the two species
    q = dissipation(w, w, u, ub, D, grid=grid)
    assert abs(q - 2.0) < 1e-14
    # adding one common field to every species leaves Q unchanged
    shift = np.sin(2 * math.pi * np.arange(8) / 8.0)
    q2 = dissipation(w, w, u + shift, ub, D, grid=grid)
    assert abs(q2 - q) < 1e-12
    # quadratic in the velocity gap
    q4 = dissipation(w, w, 2.0 * u, 2.0 * ub, D, grid=grid)
    assert abs(q4 - 4.0 * q) < 1e-12
    with pytest.raises(Exception):
        dissipation(w, w, u, ub, D)  # raw arrays need a grid


def test_quadratic_log_gap_and_counterexamples():
    assert csiszar_kullback_check(0.5, 0.25)
    assert csiszar_kullback_check(2.0, 0.1)
    assert csiszar_kullback_check(1.0, 1.0)
    # pairs with logarithmic mean above one violate the plain inequality
    assert not csiszar_kullback_check(1.5, 1.2)
    assert not csiszar_kullback_check(1.05, 1.0)
    gap = quadratic_log_gap(np.array([1.5]), np.array([1.2]))
    hand = (1.5 - 1.2) * (math.log(1.5) - math.log(1.2)) - (1.5 - 1.2) ** 2
    assert abs(gap[0] - hand) < 1e-15
    assert hand < 0.0
    # the constant-2 version does hold on (0, 2]^2
    rng = np.random.default_rng(9)
    d = rng.uniform(1e-3, 2.0, size=20000)
    db = rng.uniform(1e-3, 2.0, size=20000)
    assert np.all((d - db) ** 2 <= 2.0 * (d - db) * (np.log(d) - np.log(db)) + 1e-15)


def make_pair_fields(rng, grid, n, delta):
    g = -np.log(rng.uniform(size=(n,) + grid.cells))
    c = g / g.sum(axis=0)
    g2 = -np.log(rng.uniform(size=(n,) + grid.cells))
    cb = g2 / g2.sum(axis=0)
    d, dbar = c + delta, cb + delta
    v = rng.normal(size=(n, grid.dim) + grid.cells)
    vbar = rng.normal(size=(n, grid.dim) + grid.cells)
    # project onto the weighted zero-sum constraint sum_i d_i v_i = 0
    v -= (d[:, None] * v).sum(axis=0) / d.sum(axis=0)
    vbar -= (dbar[:, None] * vbar).sum(axis=0) / dbar.sum(axis=0)
    return d, dbar, v, vbar


def test_error_terms_vanish_for_identical_fields():
    grid = PeriodicGrid((12,))
    rng = np.random.default_rng(10)
    D = DiffusionMatrix.uniform(3, 1.0)
    d, _, v, _ = make_pair_fields(rng, grid, 3, 0.05)
    terms = error_terms(d, d, v, v, D, 0.05, grid)
    assert terms.j1 == terms.j2 == terms.j3 == terms.j4 == 0.0
    assert terms.s_dissipation == 0.0 and terms.r_distance == 0.0
    assert terms.respects_bounds()


def test_error_terms_bounds_hold_on_random_pairs():
    grid = PeriodicGrid((10,))
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        vals = np.exp(rng.uniform(math.log(0.5), math.log(2.0), size=(n, n)))
        D = DiffusionMatrix(np.triu(vals, 1) + np.triu(vals, 1).T)
        delta = float(rng.uniform(0.02, 0.3))
        d, dbar, v, vbar = make_pair_fields(rng, grid, n, delta)
        terms = error_terms(d, dbar, v, vbar, D, delta, grid)
        assert terms.respects_bounds(), (terms.j1 + terms.j2, terms.bound_j12)
        assert terms.q_shifted >= terms.q_lower_bound - 1e-12 * max(
            1.0, abs(terms.q_lower_bound)
        )


def test_error_terms_delta_guards():
    grid = PeriodicGrid((8,))
    D = DiffusionMatrix.uniform(2, 1.0)
    z = np.full((2, 8), 0.5)
    v = np.zeros((2, 1, 8))
    with pytest.raises(DeltaNonpositive):
        error_terms(z, z, v, v, D, 0.0, grid)
    with pytest.raises(Exception):
        error_terms(z, z, v, v, D, 1.0, grid)


def small_scenario(**kw):
    D = DiffusionMatrix([[0.0, 1.0, 2.0], [1.0, 0.0, 3.0], [2.0, 3.0, 0.0]])
    args = dict(n=3, D=D, grid=PeriodicGrid((24,)), t_final=0.001,
                delta=0.05, cadence=2, amplitude=0.2)
    args.update(kw)
    return Scenario(**args)


def test_identity_residual_small_for_twin_pair():
    sc = small_scenario()
    res = twin_experiment(sc, perturbation=Perturbation(amplitude=1e-3, mode=1))
    out = identity_residual(res.base, res.twin, sc.D)
    # the balance nearly cancels; the defect is scheme error, well below the terms
    assert out.residual < 0.1 * max(abs(out.q_integral), abs(out.dh_sym))
    series = identity_series(res.base, res.twin, sc.D)
    assert abs(series.residuals()[-1] - out.residual) < 1e-18
    windowed = identity_residual(
        res.base, res.twin, sc.D, window=(res.base.times[1], res.base.times[-1])
    )
    assert windowed.window[0] == res.base.times[1]


def test_identity_residual_refines():
    # joint grid/time refinement: the defect drops about 4x per level
    base = small_scenario(grid=PeriodicGrid((16,)), dt=0.001 / 8, cadence=1)
    residuals = []
    for k in range(3):
        sc = base.refine(2**k)
        res = twin_experiment(sc, perturbation=Perturbation(amplitude=1e-3, mode=1))
        residuals.append(identity_residual(res.base, res.twin, sc.D).residual)
    orders = [math.log2(residuals[k] / residuals[k + 1]) for k in range(2)]
    assert min(orders) > 1.5, (residuals, orders)


def test_identity_residual_rejects_mismatched_pairs():
    sc = small_scenario()
    a = run(sc)
    b = run(small_scenario(cadence=4))
    with pytest.raises(MeshMismatch):
        identity_residual(a, b, sc.D)


def test_certificate_identical_trajectories():
    sc = small_scenario()
    traj = run(sc)
    cert = gronwall_certificate(traj, traj, sc.D, sc.delta)
    assert cert.holds_master and cert.holds_envelope
    assert np.all(cert.r_series == 0.0) and np.all(cert.f_series == 0.0)
    assert not cert.admissible  # 0.05 sits far above the certified window


def test_certificate_perturbed_pair_holds():
    sc = small_scenario()
    res = twin_experiment(sc, perturbation=Perturbation(amplitude=1e-4, mode=1))
    cert = res.certificate
    assert cert.holds_master
    assert cert.holds_envelope
    assert cert.flux_bound > 0.0
    assert cert.constants.delta_max < sc.delta
    assert len(cert.f_series) == len(res.base.times)


def test_certificate_admissible_delta_branch():
    sc = small_scenario()
    res = twin_experiment(sc, perturbation=Perturbation(amplitude=1e-4, mode=1))
    # the cap depends only on the diffusivities, not on the shift itself
    cap = res.certificate.constants.delta_max
    cert = gronwall_certificate(res.base, res.twin, sc.D, 0.5 * cap)
    assert cert.admissible
    assert cert.holds_master and cert.holds_envelope


def test_certificate_requires_positive_delta():
    sc = small_scenario()
    traj = run(sc)
    with pytest.raises(DeltaNonpositive):
        gronwall_certificate(traj, traj, sc.D, 0.0)


def test_heat_identity_residual_refines():
    # two exact positive heat flows: the symmetric-entropy balance defect
    # is pure quadrature error and drops at second order
    residuals = []
    for m in (16, 32, 64):
        grid = PeriodicGrid((m,))
        (x,) = grid.axes()
        steps = 4 * (m // 16) ** 2
        times = np.linspace(0.0, 0.01, steps + 1)
        lam = (2 * math.pi) ** 2
        rho_a = np.stack([1.0 + 0.3 * np.cos(2 * math.pi * x) * math.exp(-lam * t) for t in times])
        rho_b = np.stack([1.0 + 0.2 * np.sin(2 * math.pi * x) * math.exp(-lam * t) for t in times])
        residuals.append(heat_identity_residual(rho_a, rho_b, grid, times))
    orders = [math.log2(residuals[k] / residuals[k + 1]) for k in range(2)]
    assert min(orders) > 1.5, (residuals, orders)
