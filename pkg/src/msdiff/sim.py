"""Finite-volume time integration of the multicomponent diffusion system.

Cell-centered compositions on a periodic grid; face compositions are
arithmetic means renormalized to the simplex, face gradients are exact
differences, and the pointwise force-flux solve runs vectorized over all
faces of an axis. The divergence telescopes, so species masses are
conserved to rounding and the zero-sum of the face solves keeps every
cell on the simplex. Explicit Euler is the default scheme with a Heun
toggle; the time step respects a parabolic stability bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .flux import solve_fluxes_batch
from .grid import ConcentrationState, PeriodicGrid, gradient, integrate


class CflViolation(ValueError):
    """The requested time step exceeds the parabolic stability bound."""


class PositivityFailure(RuntimeError):
    """Clipping negative undershoots would move more mass than budgeted."""


def max_stable_dt(grid, D):
    """Parabolic step bound h^2 / (2 dim D_max) on the finest axis."""
    h = min(grid.spacing)
    return h**2 / (2.0 * grid.dim * float(D.d.max()))


def _face_divergence(c, D, grid):
    """Assemble the conservative divergence of the face fluxes.

    Returns (divergence (n, *cells), per-axis face fluxes, max |face flux|).
    Face index k holds the face between cells k and k+1 along that axis.
    """
    n = c.shape[0]
    div = np.zeros_like(c)
    faces = []
    fmax = 0.0
    for k, h in enumerate(grid.spacing):
        ax = 1 + k
        cR = np.roll(c, -1, axis=ax)
        cf = 0.5 * (c + cR)
        cf = cf / cf.sum(axis=0, keepdims=True)
        g = (cR - c) / h
        m = cf[0].size
        J, _ = solve_fluxes_batch(
            cf.reshape(n, m).T.copy(), g.reshape(n, m).T.copy(), D
        )
        Jf = J.T.reshape(c.shape)
        faces.append(Jf)
        div += (Jf - np.roll(Jf, 1, axis=ax)) / h
        fmax = max(fmax, float(np.abs(Jf).max()))
    return div, faces, fmax


def cell_fluxes(c, D, grid):
    """Cell-centered flux vectors (n, dim, *cells) by averaging face fluxes."""
    _, faces, _ = _face_divergence(c, D, grid)
    comps = [0.5 * (F + np.roll(F, 1, axis=1 + k)) for k, F in enumerate(faces)]
    return np.stack(comps, axis=1)


def apply_positivity(c, cell_volume, budget=1e-8, trigger=-1e-12):
    """Clip negative undershoots and renormalize the affected cells.

    Undershoots above ``trigger`` are rounding noise and left alone.
    Returns (array, clipped mass); raises PositivityFailure beyond budget.
    """
    worst = float(c.min())
    if worst >= trigger:
        return c, 0.0
    clipped = np.maximum(c, 0.0)
    lost = float((clipped - c).sum() * cell_volume)
    if lost > budget:
        raise PositivityFailure(
            f"positivity clipping would move {lost:.3e} mass, budget {budget:.1e}"
        )
    mask = (c < 0.0).any(axis=0)
    clipped[:, mask] /= clipped[:, mask].sum(axis=0, keepdims=True)
    return clipped, lost


@dataclass
class StepInfo:
    flux_max: float
    clipped_mass: float


def step(state, D, dt, scheme="euler", clip_budget=1e-8, stability_check=True):
    """Advance one explicit step; returns (new state, StepInfo)."""
    grid = state.grid
    if stability_check:
        cap = max_stable_dt(grid, D)
        if dt > cap * (1.0 + 1e-9):
            raise CflViolation(f"dt={dt:.3e} exceeds stability bound {cap:.3e}")
    vol = grid.cell_volume
    div, _, fmax = _face_divergence(state.c, D, grid)
    clipped = 0.0
    if scheme == "euler":
        c_new = state.c - dt * div
    elif scheme == "heun":
        c_pred = state.c - dt * div
        c_pred, lost = apply_positivity(c_pred, vol, budget=clip_budget)
        clipped += lost
        div2, _, fmax2 = _face_divergence(c_pred, D, grid)
        fmax = max(fmax, fmax2)
        c_new = state.c - 0.5 * dt * (div + div2)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    c_new, lost = apply_positivity(c_new, vol, budget=clip_budget)
    clipped += lost
    return (
        ConcentrationState(grid, c_new, state.time + dt),
        StepInfo(flux_max=fmax, clipped_mass=clipped),
    )


@dataclass
class Perturbation:
    """Mass-neutral initial perturbation moving mass between two species."""

    amplitude: float
    mode: int = 1
    species: tuple = (0, 1)
    axis: int = 0

    def apply(self, state):
        grid = state.grid
        x = grid.axes()[self.axis]
        shape = [1] * grid.dim
        shape[self.axis] = len(x)
        wave = self.amplitude * np.sin(
            2.0 * math.pi * self.mode * x / grid.lengths[self.axis]
        ).reshape(shape)
        c = state.c.copy()
        i, j = self.species
        c[i] = c[i] + wave
        c[j] = c[j] - wave
        out = ConcentrationState(grid, c, state.time)
        out.validate()
        return out


@dataclass
class Scenario:
    """Everything needed to reproduce one simulation run."""

    n: int
    D: DiffusionMatrix
    grid: PeriodicGrid
    t_final: float
    preset: str = "sine_mix"
    amplitude: float = 0.2
    mode: int = 1
    weights: np.ndarray = None
    dt: float = None
    cfl: float = 0.25
    scheme: str = "euler"
    delta: float = 0.05
    cadence: int = 1
    perturbation: Perturbation = None

    def __post_init__(self):
        if self.n != self.D.n:
            raise ValueError(f"scenario has {self.n} species but D has {self.D.n}")
        if self.t_final <= 0.0:
            raise ValueError("t_final must be positive")
        if not 0.0 < self.cfl <= 1.0:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.scheme not in ("euler", "heun"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.cadence < 1:
            raise ValueError("cadence must be a positive step count")

    def resolve_steps(self):
        """Concrete (dt, step count) for this run; dt must divide t_final."""
        if self.dt is not None:
            steps = round(self.t_final / self.dt)
            if steps < 1 or abs(steps * self.dt - self.t_final) > 1e-9 * self.t_final:
                raise ValueError(
                    f"dt={self.dt} does not divide t_final={self.t_final}"
                )
            return float(self.dt), int(steps)
        target = self.cfl * max_stable_dt(self.grid, self.D)
        steps = max(1, int(math.ceil(self.t_final / target - 1e-12)))
        return self.t_final / steps, steps

    def initial_state(self):
        c = _build_preset(self)
        state = ConcentrationState(self.grid, c, 0.0)
        if self.perturbation is not None:
            state = self.perturbation.apply(state)
        state.validate()
        return state

    def refine(self, factor=2):
        """Halve the mesh width; an explicit dt is scaled parabolically."""
        new_dt = self.dt / factor**2 if self.dt is not None else None
        new_cad = self.cadence * factor**2 if self.dt is not None else self.cadence
        return replace(self, grid=self.grid.refine(factor), dt=new_dt, cadence=new_cad)


def _build_preset(sc):
    grid, n = sc.grid, sc.n
    w = np.full(n, 1.0 / n) if sc.weights is None else np.asarray(sc.weights, float)
    if w.size != n or np.any(w <= 0.0):
        raise ValueError("weights must be positive, one per species")
    w = w / w.sum()
    X = grid.meshgrid()
    if sc.preset == "uniform":
        c = np.broadcast_to(w.reshape((n,) + (1,) * grid.dim), (n,) + grid.cells).copy()
        return c
    if sc.preset == "binary_mode":
        if n != 2:
            raise ValueError("binary_mode needs exactly two species")
        base = w[0]
        if not sc.amplitude < min(base, 1.0 - base):
            raise ValueError("amplitude pushes the binary profile out of (0, 1)")
        wave = sc.amplitude * np.cos(2.0 * math.pi * sc.mode * X[0] / grid.lengths[0])
        return np.stack([base + wave, 1.0 - base - wave])
    if sc.preset == "sine_mix":
        if not 0.0 <= sc.amplitude < 1.0:
            raise ValueError("sine_mix amplitude must lie in [0, 1)")
        g = np.empty((n,) + grid.cells)
        for i in range(n):
            phase = 2.0 * math.pi * i / n
            s = np.sin(2.0 * math.pi * (sc.mode + i) * X[0] / grid.lengths[0] + phase)
            if grid.dim >= 2:
                s = 0.5 * s + 0.5 * np.sin(
                    2.0 * math.pi * (sc.mode + i) * X[1] / grid.lengths[1] - phase
                )
            g[i] = w[i] * (1.0 + sc.amplitude * s)
        return g / g.sum(axis=0, keepdims=True)
    raise ValueError(f"unknown preset {sc.preset!r}")


@dataclass
class Trajectory:
    """Recorded snapshots of one run, plus per-step scalar series."""

    grid: PeriodicGrid
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    fluxes: list = field(default_factory=list)
    step_times: list = field(default_factory=list)
    entropy_series: list = field(default_factory=list)
    flux_inf_series: list = field(default_factory=list)
    clipped_series: list = field(default_factory=list)
    dt: float = 0.0
    scheme: str = "euler"

    @property
    def n(self):
        return self.states[0].shape[0]

    def state(self, k):
        return ConcentrationState(self.grid, self.states[k], float(self.times[k]))

    @property
    def flux_inf(self):
        return max(self.flux_inf_series) if self.flux_inf_series else 0.0

    @property
    def clipped_total(self):
        return float(sum(self.clipped_series))

    def species_mass_drift(self):
        first = integrate(self.states[0], self.grid)
        last = integrate(self.states[-1], self.grid)
        return float(np.abs(last - first).max())

    def simplex_defect(self):
        return max(
            float(np.abs(c.sum(axis=0) - 1.0).max()) for c in self.states
        )


def run(scenario):
    """Integrate a scenario, recording snapshots every ``cadence`` steps.

    Snapshots carry the state and its instantaneous cell-centered fluxes;
    the mixing entropy is tracked at every step. Fully deterministic.
    """
    from .entropy import entropy as _entropy

    dt, steps = scenario.resolve_steps()
    cap = max_stable_dt(scenario.grid, scenario.D)
    if dt > cap * (1.0 + 1e-9):
        raise CflViolation(
            f"dt={dt:.3e} exceeds stability bound {cap:.3e}; "
            f"refine the time step or lower cfl"
        )
    state = scenario.initial_state()
    traj = Trajectory(grid=scenario.grid, dt=dt, scheme=scenario.scheme)

    def record(st):
        traj.times.append(st.time)
        traj.states.append(st.c.copy())
        traj.fluxes.append(cell_fluxes(st.c, scenario.D, scenario.grid))

    record(state)
    traj.step_times.append(0.0)
    traj.entropy_series.append(_entropy(state))
    traj.flux_inf_series.append(0.0)
    traj.clipped_series.append(0.0)

    for k in range(1, steps + 1):
        state, info = step(
            state, scenario.D, dt, scheme=scenario.scheme, stability_check=False
        )
        state.time = k * dt
        traj.step_times.append(state.time)
        traj.entropy_series.append(_entropy(state))
        traj.flux_inf_series.append(info.flux_max)
        traj.clipped_series.append(info.clipped_mass)
        if k % scenario.cadence == 0 or k == steps:
            record(state)
    return traj


@dataclass
class TwinResult:
    base: Trajectory
    twin: Trajectory
    certificate: object
    scenario: Scenario


def twin_experiment(scenario, perturbation=None, dt_divisor=1):
    """Run a scenario and a perturbed or refined twin, then certify.

    ``perturbation`` displaces the twin's initial data; ``dt_divisor``
    refines the twin's time step by an integer factor while keeping the
    snapshot times aligned. Both may be combined.
    """
    from .entropy import gronwall_certificate

    if dt_divisor < 1 or int(dt_divisor) != dt_divisor:
        raise ValueError("dt_divisor must be a positive integer")
    dt, _ = scenario.resolve_steps()
    base_sc = replace(scenario, dt=dt)
    twin_sc = replace(
        base_sc,
        dt=dt / dt_divisor,
        cadence=scenario.cadence * int(dt_divisor),
        perturbation=perturbation,
    )
    base = run(base_sc)
    twin = run(twin_sc)
    cert = gronwall_certificate(base, twin, scenario.D, scenario.delta)
    return TwinResult(base=base, twin=twin, certificate=cert, scenario=scenario)


def exact_binary_mode(grid, d12, amplitude, mode, t, base=0.5, axis=0):
    """Closed-form two-species solution with a single cosine mode.

    The two-species force balance reduces exactly to a linear diffusion
    equation for the first component, so the profile decays by
    exp(-D (2 pi mode / L)^2 t) with no shape change at any amplitude.
    """
    X = grid.meshgrid()
    L = grid.lengths[axis]
    lam = d12 * (2.0 * math.pi * mode / L) ** 2
    wave = amplitude * np.cos(2.0 * math.pi * mode * X[axis] / L) * math.exp(-lam * t)
    return ConcentrationState(grid, np.stack([base + wave, 1.0 - base - wave]), t)


@dataclass
class GridTestFunction:
    """Smooth space-time test function sampled on a grid's cell centers.

    value/dt return (*cells) arrays, grad returns (dim, *cells); all are
    functions of time. Compact support in time is the caller's business.
    """

    value: callable
    dt: callable
    grad: callable


def bump_test_function(grid, t_lo, t_hi, mode=1, phases=None, floor=0.5):
    """Periodic-in-space, bump-in-time test function with analytic derivatives.

    Space factor: product over axes of (1 + floor * sin(2 pi mode x / L + phase)).
    Time factor: the standard C-infinity bump rescaled to (t_lo, t_hi); it
    vanishes with all derivatives at both ends. t_lo may be negative, which
    leaves the function active at time zero.
    """
    X = grid.meshgrid()
    if phases is None:
        phases = [0.3 + 0.4 * k for k in range(grid.dim)]
    factors = []
    dfactors = []
    for k in range(grid.dim):
        arg = 2.0 * math.pi * mode * X[k] / grid.lengths[k] + phases[k]
        factors.append(1.0 + floor * np.sin(arg))
        dfactors.append(
            floor * np.cos(arg) * 2.0 * math.pi * mode / grid.lengths[k]
        )
    space = np.prod(factors, axis=0)
    grad_space = np.stack(
        [
            dfactors[k] * np.prod([factors[j] for j in range(grid.dim) if j != k] or [np.ones_like(space)], axis=0)
            for k in range(grid.dim)
        ]
    )

    half = 0.5 * (t_hi - t_lo)
    mid = 0.5 * (t_hi + t_lo)

    def w(t):
        s = (t - mid) / half
        if abs(s) >= 1.0:
            return 0.0
        return math.exp(-1.0 / (1.0 - s * s))

    def dw(t):
        s = (t - mid) / half
        if abs(s) >= 1.0:
            return 0.0
        val = math.exp(-1.0 / (1.0 - s * s))
        return val * (-2.0 * s / (1.0 - s * s) ** 2) / half

    return GridTestFunction(
        value=lambda t: space * w(t),
        dt=lambda t: space * dw(t),
        grad=lambda t: grad_space * w(t),
    )


def weak_form_residual(traj, beta, phi):
    """Defect of the renormalized weak form along a recorded trajectory.

    Evaluates, per species,
        int beta(c0) phi(0) + int dt [ int beta(c) phi_t
            + beta'(c) (c u) . grad phi + beta''(c) ((c u) . grad c) phi ]
    with trapezoid quadrature over the recorded snapshots. The test
    function must vanish at the final recorded time. Returns one residual
    per species; all tend to zero under mesh refinement for solutions of
    the divergence-form system.
    """
    grid = traj.grid
    n = traj.n
    times = np.asarray(traj.times, dtype=float)
    if float(np.max(np.abs(phi.value(times[-1])))) > 1e-14:
        raise ValueError("test function must vanish at the final snapshot time")
    rows = []
    for k, t in enumerate(times):
        c = traj.states[k]
        J = traj.fluxes[k]
        pv = phi.value(t)
        pt = phi.dt(t)
        pg = phi.grad(t)
        gc = gradient(c, grid)
        term_t = integrate(beta.f(c) * pt, grid)
        term_adv = integrate((beta.df(c)[:, None] * J * pg[None]).sum(axis=1), grid)
        term_curv = integrate(beta.d2f(c) * (J * gc).sum(axis=1) * pv, grid)
        rows.append(term_t + term_adv + term_curv)
    rows = np.asarray(rows)
    bulk = np.trapezoid(rows, times, axis=0)
    initial = integrate(beta.f(traj.states[0]) * phi.value(times[0]), grid)
    return np.abs(initial + bulk)
