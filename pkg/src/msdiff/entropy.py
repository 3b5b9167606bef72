"""Entropy functionals and the stability estimates built on them.

Everything here is a plain quadrature over grid fields: the mixing
entropy, relative entropies (plain, symmetrized, shift-regularized, and
renormalized through a user-supplied convex profile), the pairwise
dissipation form, the discrete entropy-identity residual for trajectory
pairs, the four cross-term functionals of the twin estimate together
with their certified upper bounds, and an exponential stability
certificate assembled from all of the above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr, xlogy

from .flux import DeltaOutOfRange, stability_constants
from .grid import ConcentrationState, GridMismatch, gradient, integrate


class MeshMismatch(ValueError):
    """Trajectory pairs must share snapshot times."""


class DeltaNonpositive(ValueError):
    """A positive shift is required."""


@dataclass
class RenormFunction:
    """A scalar profile with derivatives, used to renormalize entropies.

    f, df, d2f  -- the profile and its first two derivatives, vectorized
    antideriv   -- the primitive of f with antideriv(0) = 0, if available
    """

    f: callable
    df: callable
    d2f: callable
    antideriv: callable = None
    label: str = "custom"


def identity_renorm():
    return RenormFunction(
        f=lambda s: s,
        df=lambda s: np.ones_like(s),
        d2f=lambda s: np.zeros_like(s),
        antideriv=lambda s: 0.5 * s**2,
        label="identity",
    )


def log_shift_renorm(delta):
    """The profile ln(s + delta); bounded derivatives for delta > 0."""
    if delta <= 0.0:
        raise DeltaNonpositive(f"log shift needs delta > 0, got {delta}")

    def antideriv(s):
        return (s + delta) * np.log(s + delta) - s - delta * math.log(delta)

    return RenormFunction(
        f=lambda s: np.log(s + delta),
        df=lambda s: 1.0 / (s + delta),
        d2f=lambda s: -1.0 / (s + delta) ** 2,
        antideriv=antideriv,
        label=f"log_shift({delta!r})",
    )


def square_renorm():
    return RenormFunction(
        f=lambda s: s**2,
        df=lambda s: 2.0 * s,
        d2f=lambda s: 2.0 * np.ones_like(s),
        antideriv=lambda s: s**3 / 3.0,
        label="square",
    )


def _pair_layout(a, b):
    if a.grid != b.grid:
        raise GridMismatch("states live on different grids")
    if a.n != b.n:
        raise GridMismatch(f"species counts differ: {a.n} vs {b.n}")
    return a.grid


def entropy(state):
    """Mixing entropy H = integral of sum_i c_i (ln c_i - 1); 0 ln 0 = 0."""
    c = state.c
    return integrate((xlogy(c, c) - c).sum(axis=0), state.grid)


def relative_entropy(a, b):
    """H(a|b) = integral of sum_i [c_i ln(c_i/cb_i) - (c_i - cb_i)].

    Infinite when a has mass where b vanishes; the convention 0 ln 0 = 0
    applies where a vanishes.
    """
    grid = _pair_layout(a, b)
    cells = rel_entr(a.c, b.c) - (a.c - b.c)
    return float(integrate(cells.sum(axis=0), grid))


def symmetrized_relative_entropy(a, b, both_vanish="inf"):
    """Symmetrized relative entropy, integral of (ln c - ln cb)(c - cb).

    Where exactly one of the two concentrations vanishes the integrand is
    +inf. Where both vanish the limit is ambiguous; ``both_vanish`` selects
    "inf" (default) or "zero".
    """
    if both_vanish not in ("inf", "zero"):
        raise ValueError(f"both_vanish must be 'inf' or 'zero', got {both_vanish!r}")
    grid = _pair_layout(a, b)
    c, cb = a.c, b.c
    pos = (c > 0.0) & (cb > 0.0)
    none = (c <= 0.0) & (cb <= 0.0)
    if np.any((c > 0.0) ^ (cb > 0.0)):
        return math.inf
    if both_vanish == "inf" and np.any(none):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(pos, (np.log(np.where(pos, c, 1.0)) - np.log(np.where(pos, cb, 1.0))) * (c - cb), 0.0)
    return float(integrate(cells.sum(axis=0), grid))


def regularized_relative_entropy(a, b, delta):
    """Shift-regularized symmetric entropy, always finite for delta > 0."""
    if delta <= 0.0:
        raise DeltaNonpositive(f"regularization needs delta > 0, got {delta}")
    grid = _pair_layout(a, b)
    diff = a.c - b.c
    cells = (np.log(a.c + delta) - np.log(b.c + delta)) * diff
    return float(integrate(cells.sum(axis=0), grid))


def renormalized_relative_entropy(a, b, beta):
    """Symmetric entropy through a monotone profile: (beta(c)-beta(cb))(c-cb)."""
    grid = _pair_layout(a, b)
    cells = (beta.f(a.c) - beta.f(b.c)) * (a.c - b.c)
    return float(integrate(cells.sum(axis=0), grid))


def renormalized_entropy(state, beta):
    """Integral of the primitive of the profile over all species."""
    if beta.antideriv is None:
        raise ValueError(f"profile {beta.label} has no antiderivative")
    return float(integrate(beta.antideriv(state.c).sum(axis=0), state.grid))


def _weights_and_grid(a, grid):
    if isinstance(a, ConcentrationState):
        return a.c, a.grid
    if grid is None:
        raise GridMismatch("raw weight arrays need an explicit grid")
    return np.asarray(a, dtype=float), grid


def dissipation(a, b, u, ubar, D, grid=None):
    """Pairwise velocity-difference dissipation of a trajectory pair.

    Q = integral of sum_{i != j} (w_i w_j + wb_i wb_j) / (2 D_ij)
        |(u_i - ubar_i) - (u_j - ubar_j)|^2.

    ``a`` and ``b`` may be states or plain nonnegative weight fields (the
    shifted variant passes c + delta); velocities have shape (n, dim, *cells).
    """
    w, g1 = _weights_and_grid(a, grid)
    wb, g2 = _weights_and_grid(b, grid)
    if g1 != g2:
        raise GridMismatch("states live on different grids")
    du = np.asarray(u, dtype=float) - np.asarray(ubar, dtype=float)
    n = w.shape[0]
    K = D.inv
    cells = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if K[i, j] == 0.0:
                continue
            rel2 = ((du[i] - du[j]) ** 2).sum(axis=0)
            cells = cells + K[i, j] * (w[i] * w[j] + wb[i] * wb[j]) * rel2
    return float(integrate(cells, g1))


def _entropy_rhs(c, cb, u, ub, D, grid):
    """Right-hand side of the symmetric-entropy balance for a pair."""
    K = D.inv
    n = c.shape[0]
    du = u - ub
    cells = 0.0
    for i in range(n):
        for j in range(n):
            if K[i, j] == 0.0:
                continue
            mix = c[i] * (ub[i] - ub[j]) + cb[i] * (u[i] - u[j])
            cells = cells + K[i, j] * (c[j] - cb[j]) * (du[i] * mix).sum(axis=0)
    return -float(integrate(cells, grid))


@dataclass
class IdentityResidual:
    residual: float
    dh_sym: float
    q_integral: float
    rhs_integral: float
    window: tuple


@dataclass
class IdentitySeries:
    """Per-snapshot pieces of the symmetric-entropy balance for a pair."""

    times: np.ndarray
    h_sym: np.ndarray
    q_values: np.ndarray
    rhs_values: np.ndarray
    q_cumulative: np.ndarray
    rhs_cumulative: np.ndarray

    def residuals(self):
        """|Delta H_sym + int Q - int RHS| from the first snapshot to each."""
        return np.abs(
            (self.h_sym - self.h_sym[0]) + self.q_cumulative - self.rhs_cumulative
        )


def identity_series(traj_a, traj_b, D, velocity_floor=1e-14):
    """Evaluate the symmetric-entropy balance pieces at every snapshot.

    Velocities come from the recorded fluxes with a small positivity floor;
    time integrals are cumulative trapezoids over the snapshot times.
    Trajectories must share snapshot times and grids.
    """
    ta, tb = np.asarray(traj_a.times), np.asarray(traj_b.times)
    if ta.shape != tb.shape or np.abs(ta - tb).max() > 1e-12:
        raise MeshMismatch("trajectories have different snapshot times")
    if traj_a.grid != traj_b.grid:
        raise GridMismatch("trajectories live on different grids")
    grid = traj_a.grid

    h_vals, q_vals, rhs_vals = [], [], []
    for k in range(len(ta)):
        c, cb = traj_a.states[k], traj_b.states[k]
        u = traj_a.fluxes[k] / np.maximum(c, velocity_floor)[:, None]
        ub = traj_b.fluxes[k] / np.maximum(cb, velocity_floor)[:, None]
        q_vals.append(dissipation(c, cb, u, ub, D, grid=grid))
        rhs_vals.append(_entropy_rhs(c, cb, u, ub, D, grid))
        h_vals.append(
            symmetrized_relative_entropy(
                ConcentrationState(grid, c, float(ta[k])),
                ConcentrationState(grid, cb, float(ta[k])),
            )
        )
    q_vals = np.asarray(q_vals)
    rhs_vals = np.asarray(rhs_vals)
    cum = lambda v: np.concatenate(
        [[0.0], np.cumsum(np.diff(ta) * 0.5 * (v[1:] + v[:-1]))]
    )
    return IdentitySeries(
        times=ta,
        h_sym=np.asarray(h_vals),
        q_values=q_vals,
        rhs_values=rhs_vals,
        q_cumulative=cum(q_vals),
        rhs_cumulative=cum(rhs_vals),
    )


def identity_residual(traj_a, traj_b, D, window=None, velocity_floor=1e-14):
    """Discrete defect of the symmetric-entropy balance over a time window.

    Compares the change of the symmetrized relative entropy against the
    time-integrated dissipation and the exchange term, both by trapezoid
    quadrature on the recorded snapshots (trapezoids are interval-additive,
    so windowed values agree with differences of the cumulative series).
    """
    series = identity_series(traj_a, traj_b, D, velocity_floor=velocity_floor)
    ta = series.times
    lo = window[0] if window is not None else ta[0]
    hi = window[1] if window is not None else ta[-1]
    sel = np.nonzero((ta >= lo - 1e-12) & (ta <= hi + 1e-12))[0]
    if sel.size < 2:
        raise ValueError("window must contain at least two snapshots")
    a, b = sel[0], sel[-1]
    dh = float(series.h_sym[b] - series.h_sym[a])
    q_int = float(series.q_cumulative[b] - series.q_cumulative[a])
    rhs_int = float(series.rhs_cumulative[b] - series.rhs_cumulative[a])
    return IdentityResidual(
        residual=abs(dh + q_int - rhs_int),
        dh_sym=dh,
        q_integral=q_int,
        rhs_integral=rhs_int,
        window=(float(ta[a]), float(ta[b])),
    )


@dataclass
class ErrorTerms:
    """The four cross-term functionals of the twin estimate at one instant.

    Each value comes with the certified upper bound built from the
    stability constants; ``s_dissipation`` and ``r_distance`` are the
    weighted velocity-difference and concentration-distance integrals the
    bounds are expressed in.
    """

    j1: float
    j2: float
    j3: float
    j4: float
    bound_j12: float
    bound_j3: float
    bound_j4: float
    s_dissipation: float
    r_distance: float
    q_shifted: float
    q_lower_bound: float
    flux_bound: float
    constants: object

    def respects_bounds(self, slack=1e-12):
        ref = lambda b: slack * max(1.0, abs(b))
        return (
            self.j1 + self.j2 <= self.bound_j12 + ref(self.bound_j12)
            and self.j3 <= self.bound_j3 + ref(self.bound_j3)
            and self.j4 <= self.bound_j4 + ref(self.bound_j4)
        )


def error_terms(d, dbar, v, vbar, D, delta, grid, flux_bound=None):
    """Evaluate the four twin cross terms and their certified bounds.

    d, dbar      -- shifted concentrations (entries >= delta), shape (n, *cells)
    v, vbar      -- partial velocities, shape (n, dim, *cells)
    flux_bound   -- sup-norm bound on d_i v_i; measured from the fields if omitted

    The dissipation lower bound ``q_lower_bound`` additionally requires the
    velocity fields to satisfy the zero-sum constraint sum_i d_i v_i = 0.
    """
    if delta <= 0.0:
        raise DeltaNonpositive(f"error terms need delta > 0, got {delta}")
    if delta >= 1.0:
        raise DeltaOutOfRange(f"error terms need delta < 1, got {delta}")
    d = np.asarray(d, dtype=float)
    dbar = np.asarray(dbar, dtype=float)
    v = np.asarray(v, dtype=float)
    vbar = np.asarray(vbar, dtype=float)
    n = d.shape[0]
    K = D.inv
    dv = v - vbar
    dd = d - dbar

    if flux_bound is None:
        speed = lambda w, vel: np.sqrt(((w[:, None] * vel) ** 2).sum(axis=1)).max()
        flux_bound = max(speed(d, v), speed(dbar, vbar))

    j1_cells = j2_cells = j4_cells = 0.0
    for i in range(n):
        for j in range(n):
            if K[i, j] == 0.0:
                continue
            j1_cells = j1_cells + K[i, j] * d[i] * dd[j] * (dv[i] * (vbar[i] - vbar[j])).sum(axis=0)
            j2_cells = j2_cells + K[i, j] * dbar[i] * dd[j] * (dv[i] * (v[i] - v[j])).sum(axis=0)
            mix = (d[j] / d[i]) * v[j] - (dbar[j] / dbar[i]) * vbar[j]
            j4_cells = j4_cells + K[i, j] * (d[i] + dbar[i]) * (dv[i] * mix).sum(axis=0)
    row = K.sum(axis=1)
    j3_cells = sum(
        row[i] * (d[i] + dbar[i]) * (dv[i] ** 2).sum(axis=0) for i in range(n)
    )
    j1 = -float(integrate(j1_cells, grid))
    j2 = -float(integrate(j2_cells, grid))
    j3 = delta * float(integrate(j3_cells, grid))
    j4 = -delta * float(integrate(j4_cells, grid))

    s_val = float(integrate(sum((d[i] + dbar[i]) * (dv[i] ** 2).sum(axis=0) for i in range(n)), grid))
    r_val = float(integrate((dd**2).sum(axis=0), grid))
    q_val = dissipation(d, dbar, v, vbar, D, grid=grid)

    k = stability_constants(D, delta, flux_bound, enforce_admissible=False)
    mu = k.mu
    bound_j12 = 0.25 * mu * s_val + (k.c1 / delta**2) * r_val
    bound_j3 = n * delta * k.big_m * s_val
    bound_j4 = (0.5 * mu + k.c2 * delta) * s_val + (k.c3 / delta**4) * r_val
    q_lower = mu * s_val - (2.0 * n * mu / delta**2) * flux_bound**2 * r_val

    return ErrorTerms(
        j1=j1,
        j2=j2,
        j3=j3,
        j4=j4,
        bound_j12=bound_j12,
        bound_j3=bound_j3,
        bound_j4=bound_j4,
        s_dissipation=s_val,
        r_distance=r_val,
        q_shifted=q_val,
        q_lower_bound=q_lower,
        flux_bound=float(flux_bound),
        constants=k,
    )


def quadratic_log_gap(d, dbar):
    """Gap (d - dbar)(ln d - ln dbar) - (d - dbar)^2, elementwise, for d > 0."""
    d = np.asarray(d, dtype=float)
    dbar = np.asarray(dbar, dtype=float)
    diff = d - dbar
    return diff * (np.log(d) - np.log(dbar)) - diff**2


def csiszar_kullback_check(d, dbar):
    """Whether |d - dbar|^2 <= (d - dbar)(ln d - ln dbar) holds elementwise.

    True wherever the logarithmic mean of the pair is at most one; in
    particular on (0, 1]^2. Pairs with both entries above one can violate
    the inequality, which then only holds with a constant: on (0, 2]^2 the
    sharp factor is min(d, dbar, 1)^-1 <= 2.
    """
    gap = quadratic_log_gap(d, dbar)
    out = gap >= 0.0
    return bool(out) if np.ndim(out) == 0 else out


@dataclass
class GronwallReport:
    """Numerical twin-stability certificate along a trajectory pair.

    Checks, at every recorded time, the master inequality
        F(T) - F(0) + (mu/4 - c4 delta) int S <= (c5 / delta^4) int R
    and the exponential envelope
        R(T) <= 2 A(T) exp(2 (c5/delta^4) T),
    with A(T) = F(0) + max(0, c4 delta - mu/4) int_0^T S. The envelope is
    compared in log space; when delta exceeds its admissible window the
    eroded dissipation margin is carried explicitly instead of dropped,
    and ``admissible`` records the fact.
    """

    times: np.ndarray
    f_series: np.ndarray
    r_series: np.ndarray
    s_series: np.ndarray
    master_lhs: np.ndarray
    master_rhs: np.ndarray
    log_envelope: np.ndarray
    log_r: np.ndarray
    holds_master: bool
    holds_envelope: bool
    admissible: bool
    constants: object
    flux_bound: float

    @property
    def holds(self):
        return self.holds_master and self.holds_envelope


def gronwall_certificate(traj_a, traj_b, D, delta, flux_bound=None, slack=1e-9):
    """Certify the twin stability estimate numerically for two trajectories.

    Velocities are recovered from the recorded fluxes as v = J / (c + delta),
    which satisfies the shifted zero-sum constraint exactly. The flux bound
    defaults to the measured sup of |J_i| over both trajectories.
    """
    if delta <= 0.0:
        raise DeltaNonpositive(f"certificate needs delta > 0, got {delta}")
    ta, tb = np.asarray(traj_a.times), np.asarray(traj_b.times)
    if ta.shape != tb.shape or np.abs(ta - tb).max() > 1e-12:
        raise MeshMismatch("trajectories have different snapshot times")
    if traj_a.grid != traj_b.grid:
        raise GridMismatch("trajectories live on different grids")
    grid = traj_a.grid

    if flux_bound is None:
        fb = 0.0
        for traj in (traj_a, traj_b):
            for J in traj.fluxes:
                fb = max(fb, float(np.sqrt((J**2).sum(axis=1)).max()))
        flux_bound = fb
    k = stability_constants(D, delta, flux_bound, enforce_admissible=False)

    f_series, r_series, s_series = [], [], []
    for idx in range(len(ta)):
        c, cb = traj_a.states[idx], traj_b.states[idx]
        d, dbar = c + delta, cb + delta
        v = traj_a.fluxes[idx] / d[:, None]
        vbar = traj_b.fluxes[idx] / dbar[:, None]
        diff = c - cb
        f_series.append(float(integrate(((np.log(d) - np.log(dbar)) * diff).sum(axis=0), grid)))
        r_series.append(float(integrate((diff**2).sum(axis=0), grid)))
        dv = v - vbar
        s_series.append(float(integrate(sum((d[i] + dbar[i]) * (dv[i] ** 2).sum(axis=0) for i in range(c.shape[0])), grid)))
    f_series = np.array(f_series)
    r_series = np.array(r_series)
    s_series = np.array(s_series)

    t0 = ta - ta[0]
    int_r = np.concatenate([[0.0], np.cumsum(np.diff(t0) * 0.5 * (r_series[1:] + r_series[:-1]))])
    int_s = np.concatenate([[0.0], np.cumsum(np.diff(t0) * 0.5 * (s_series[1:] + s_series[:-1]))])

    margin = 0.25 * k.mu - k.c4 * delta
    rate = k.c5 / delta**4
    master_lhs = f_series - f_series[0] + margin * int_s
    master_rhs = rate * int_r
    ref = np.maximum(1e-300, np.maximum(np.abs(master_rhs), 1.0))
    holds_master = bool(np.all(master_lhs <= master_rhs + slack * ref))

    # envelope in log space; rate/delta^4 overflows exp() for small delta
    forcing = f_series[0] + max(0.0, -margin) * int_s
    with np.errstate(divide="ignore"):
        log_env = np.log(2.0) + np.log(np.maximum(forcing, 0.0)) + 2.0 * rate * t0
        log_r = np.log(r_series)
    if forcing[-1] <= 0.0:
        # identical data and no margin erosion: distances must stay at zero
        holds_envelope = bool(np.all(r_series <= slack))
    else:
        holds_envelope = bool(np.all((r_series <= slack) | (log_r <= log_env + slack)))

    return GronwallReport(
        times=ta,
        f_series=f_series,
        r_series=r_series,
        s_series=s_series,
        master_lhs=master_lhs,
        master_rhs=master_rhs,
        log_envelope=log_env,
        log_r=log_r,
        holds_master=holds_master,
        holds_envelope=holds_envelope,
        admissible=k.admissible,
        constants=k,
        flux_bound=float(flux_bound),
    )


def heat_identity_residual(rho_a, rho_b, grid, times):
    """Defect of the symmetric-entropy balance for two positive heat flows.

    rho_a, rho_b -- arrays of shape (T, *cells) sampling two densities
    Returns |Delta H_sym + int (rho + rhob) |grad(ln rho - ln rhob)|^2 dt|.
    """
    rho_a = np.asarray(rho_a, dtype=float)
    rho_b = np.asarray(rho_b, dtype=float)
    times = np.asarray(times, dtype=float)
    gap = np.log(rho_a) - np.log(rho_b)
    h_sym = np.array(
        [float(integrate(gap[k] * (rho_a[k] - rho_b[k]), grid)) for k in range(len(times))]
    )
    diss = np.array(
        [
            float(
                integrate(
                    (rho_a[k] + rho_b[k]) * (gradient(gap[k], grid) ** 2).sum(axis=0),
                    grid,
                )
            )
            for k in range(len(times))
        ]
    )
    return abs((h_sym[-1] - h_sym[0]) + float(np.trapezoid(diss, times)))


CSV_COLUMNS = [
    "time",
    "entropy",
    "relative_entropy",
    "symmetrized_entropy",
    "regularized_entropy",
    "renorm_entropy",
    "dissipation",
    "identity_residual",
    "j1",
    "j2",
    "j3",
    "j4",
    "gronwall_lhs",
    "gronwall_rhs",
]


@dataclass
class EntropyReport:
    """One diagnostics row for a trajectory (pair) at a single time."""

    time: float
    entropy: float
    relative_entropy: float = math.nan
    symmetrized_entropy: float = math.nan
    regularized_entropy: float = math.nan
    renorm_entropy: float = math.nan
    dissipation: float = math.nan
    identity_residual: float = math.nan
    j1: float = math.nan
    j2: float = math.nan
    j3: float = math.nan
    j4: float = math.nan
    gronwall_lhs: float = math.nan
    gronwall_rhs: float = math.nan

    def row(self):
        return [repr(float(getattr(self, k))) for k in CSV_COLUMNS]


def write_reports_csv(reports, path):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rep in reports:
            writer.writerow(rep.row())
