"""Compactly supported mollifiers and space-time regularization studies.

The kernel is the standard smooth bump on (-1, 1), normalized numerically.
The quadruple-sum operator below mollifies a space-time integrand against
a doubled test function on the torus, restricted to the positive time
half-line; pinning the outer time at zero isolates the initial trace,
where exactly half of the kernel mass survives the restriction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


class EpsilonTooSmallForGrid(ValueError):
    """The mollification width must cover at least two grid spacings."""


def bump_profile(sigma):
    """Unnormalized C-infinity bump exp(-1/(1 - sigma^2)) on (-1, 1)."""
    sigma = np.asarray(sigma, dtype=float)
    inside = np.abs(sigma) < 1.0
    safe = np.where(inside, sigma, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        vals = np.where(inside, np.exp(-1.0 / (1.0 - safe**2)), 0.0)
    return vals if vals.ndim else float(vals)


class Mollifier:
    """A symmetric even kernel of unit mass supported on (-width, width)."""

    def __init__(self, width=1.0, profile=bump_profile, norm_samples=1 << 13):
        if width <= 0.0:
            raise ValueError(f"width must be positive, got {width}")
        self.width = float(width)
        self.profile = profile
        # smooth compactly supported integrand, trapezoid converges fast
        s = np.linspace(-1.0, 1.0, norm_samples + 1)
        self._norm = float(np.trapezoid(profile(s), s))
        if self._norm <= 0.0:
            raise ValueError("profile must have positive mass")

    def __call__(self, sigma):
        """Normalized kernel value at sigma, in support units of ``width``."""
        return self.profile(np.asarray(sigma, dtype=float) / self.width) / (
            self._norm * self.width
        )

    def mass(self, samples=1 << 15):
        s = np.linspace(-self.width, self.width, samples + 1)
        return float(np.trapezoid(self(s), s))

    def half_mass(self, samples=1 << 15):
        s = np.linspace(0.0, self.width, samples + 1)
        return float(np.trapezoid(self(s), s))


@dataclass
class SpaceTimeFunction:
    """Scalar function of (x, t) with analytic derivatives, vectorized.

    value(x, t); dt(x, t) the time derivative; dx(x, t) the space
    derivative. Space coordinates live on a torus of the caller's length.
    """

    value: callable
    dt: callable = None
    dx: callable = None


def _offsets_and_weights(eps, h, count):
    """Kernel offsets (in cells) and discretely normalized weights.

    The weight at offset a samples the kernel at a*h/eps; weights are
    normalized over the full symmetric offset range so restricted sums
    measure genuine kernel mass fractions.
    """
    reach = int(math.ceil(eps / h)) - 1
    reach = min(reach, count - 1)
    a = np.arange(-reach, reach + 1)
    w = np.asarray(bump_profile(a * h / eps), dtype=float)
    return a, w / w.sum()


def _check_eps(eps, hx, ht):
    if eps < 2.0 * hx or eps < 2.0 * ht:
        raise EpsilonTooSmallForGrid(
            f"eps={eps} must be at least two grid spacings (hx={hx}, ht={ht})"
        )


def mollify_spacetime(f, phi, eps, grid, t_max, t_cells):
    """Quadruple-sum mollification of f against a doubled test function.

    Approximates the pairing of f(y, tau) with
    phi((x+y)/2, (t+tau)/2) * kernel((x-y)/eps) * kernel((t-tau)/eps)
    over the 1-D torus in space and (0, t_max) in time, both integrals
    cell-centered. Inner time points outside (0, t_max) drop out, which is
    the only deviation from unit kernel mass. Converges to the plain
    pairing of f with phi at first order in eps when the integrand does
    not vanish at the time boundary.
    """
    if grid.dim != 1:
        raise ValueError("space-time mollification is implemented for 1-D grids")
    (nx,) = grid.cells
    hx = grid.spacing[0]
    ht = t_max / t_cells
    _check_eps(eps, hx, ht)

    (x,) = grid.axes()
    t = (np.arange(t_cells) + 0.5) * ht
    ax, wx = _offsets_and_weights(eps, hx, nx)
    at, wt = _offsets_and_weights(eps, ht, t_cells)

    fx = f(x[:, None], t[None, :])
    total = 0.0
    for b, wtb in zip(at, wt):
        tj = np.arange(t_cells) - b
        valid = (tj >= 0) & (tj < t_cells)
        if not np.any(valid):
            continue
        t_out = t[valid]
        t_in = t_out - b * ht
        t_mid = t_out - 0.5 * b * ht
        for a, wxa in zip(ax, wx):
            idx = (np.arange(nx) - a) % nx
            f_vals = fx[idx][:, tj[valid]]
            phi_vals = phi(x[:, None] - 0.5 * a * hx, t_mid[None, :])
            total += wtb * wxa * float((f_vals * phi_vals).sum())
    return total * hx * ht


def plain_pairing(f, phi, grid, t_max, t_cells):
    """Midpoint quadrature of f * phi over the same space-time grid."""
    (x,) = grid.axes()
    ht = t_max / t_cells
    t = (np.arange(t_cells) + 0.5) * ht
    return float((f(x[:, None], t[None, :]) * phi(x[:, None], t[None, :])).sum()) * grid.spacing[0] * ht


def initial_trace_mollification(f, phi, eps, grid, t_max, t_cells):
    """Half-line mollification pinned at the initial time.

    Pairs f(y, tau) for tau > 0 against phi((x+y)/2, tau/2) with kernel
    weights centered at time zero. Because only the positive half of the
    symmetric kernel mass survives, the value converges to one half of the
    spatial pairing of f(., 0) with phi(., 0) as eps shrinks.
    """
    if grid.dim != 1:
        raise ValueError("space-time mollification is implemented for 1-D grids")
    (nx,) = grid.cells
    hx = grid.spacing[0]
    ht = t_max / t_cells
    _check_eps(eps, hx, ht)

    (x,) = grid.axes()
    ax, wx = _offsets_and_weights(eps, hx, nx)
    # cell-centered times (j + 1/2) h are symmetric about zero with their
    # mirror images, so the surviving weight fraction is exactly one half
    j_reach = int(math.ceil(eps / ht))
    tau = (np.arange(j_reach) + 0.5) * ht
    tau = tau[tau < eps]
    w_full = bump_profile(np.concatenate([-tau[::-1], tau]) / eps)
    wt = bump_profile(tau / eps) / w_full.sum()

    total = 0.0
    for a, wxa in zip(ax, wx):
        y = (x - a * hx) % grid.lengths[0]
        mid = x - 0.5 * a * hx
        f_vals = f(y[:, None], tau[None, :])
        phi_vals = phi(mid[:, None], 0.5 * tau[None, :])
        total += wxa * float((f_vals * phi_vals * wt[None, :]).sum())
    return total * hx


def initial_pairing(f, phi, grid):
    (x,) = grid.axes()
    return float((f(x, np.zeros_like(x)) * phi(x, np.zeros_like(x))).sum()) * grid.spacing[0]


class DoubledTestFunction:
    """phi((x+y)/2, (t+tau)/2) times a product kernel in (x-y) and (t-tau).

    The space difference is wrapped to the nearest torus image, which makes
    the object jointly periodic in (x, y). The symmetric-derivative
    identities reduce to derivatives of phi at the midpoint because the
    kernel depends only on differences.
    """

    def __init__(self, phi, eps, length=1.0, mollifier=None):
        self.phi = phi
        self.eps = float(eps)
        self.length = float(length)
        self.kernel = mollifier if mollifier is not None else Mollifier()

    def _geometry(self, x, y):
        L = self.length
        dx = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float) + 0.5 * L) % L - 0.5 * L
        mid = np.asarray(y, dtype=float) + 0.5 * dx
        return dx, mid

    def kernel_value(self, x, t, y, tau):
        dx, _ = self._geometry(x, y)
        dt = np.asarray(t, dtype=float) - np.asarray(tau, dtype=float)
        return self.kernel(dx / self.eps) * self.kernel(dt / self.eps) / self.eps**2

    def value(self, x, t, y, tau):
        dx, mid = self._geometry(x, y)
        return self.phi.value(mid, 0.5 * (np.asarray(t) + np.asarray(tau))) * self.kernel_value(x, t, y, tau)

    def sum_space_grad(self, x, t, y, tau):
        """(d/dx + d/dy) of the doubled function; the kernel part cancels."""
        dx, mid = self._geometry(x, y)
        return self.phi.dx(mid, 0.5 * (np.asarray(t) + np.asarray(tau))) * self.kernel_value(x, t, y, tau)

    def sum_time_deriv(self, x, t, y, tau):
        """(d/dt + d/dtau) of the doubled function; the kernel part cancels."""
        dx, mid = self._geometry(x, y)
        return self.phi.dt(mid, 0.5 * (np.asarray(t) + np.asarray(tau))) * self.kernel_value(x, t, y, tau)

    def mass_against(self, x, t, grid, t_max, t_cells):
        """Quadrature of value(x, t, ., .) over the inner space-time grid."""
        (y,) = grid.axes()
        ht = t_max / t_cells
        tau = (np.arange(t_cells) + 0.5) * ht
        vals = self.value(x, t, y[:, None], tau[None, :])
        return float(vals.sum()) * grid.spacing[0] * ht


def fit_loglog(eps_values, errors):
    """Least-squares slope of log(error) against log(eps), with R^2."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0.0 else 1.0
    return float(slope), float(r2)


@dataclass
class RateStudy:
    eps_values: list
    values: list
    reference: float
    errors: list
    slope: float
    r2: float


def rate_study(operator, eps_values, reference, csv_path=None):
    """Run ``operator(eps)`` over widths, fit the log-log error slope.

    Writes epsilon/value/reference/error rows when ``csv_path`` is given.
    """
    eps_values = sorted(float(e) for e in eps_values)
    values = [float(operator(e)) for e in eps_values]
    errors = [abs(v - reference) for v in values]
    slope, r2 = fit_loglog(eps_values, errors)
    study = RateStudy(
        eps_values=eps_values,
        values=values,
        reference=float(reference),
        errors=errors,
        slope=slope,
        r2=r2,
    )
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epsilon", "value", "reference", "error"])
            for e, v, err in zip(eps_values, values, errors):
                writer.writerow([repr(e), repr(v), repr(study.reference), repr(err)])
    return study
