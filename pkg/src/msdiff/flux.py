"""Pointwise force-flux linear algebra for multicomponent diffusion.

The cross-diffusion force balance at a point is a singular linear system:
the friction matrix has the composition direction as kernel and maps onto
the zero-sum hyperplane. Solvers here pin down the unique zero-sum flux by
a rank-one bordering of that system, which is equivalent to the augmented
least-squares formulation but stays a square solve. A shifted variant with
a positive offset delta keeps every entry bounded away from the singular
set and underlies the stability certificates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InconsistentGradient(ValueError):
    """Driving gradients must sum to zero across species."""


class SingularComposition(ValueError):
    """The force-flux system could not be solved to tolerance."""


class DeltaOutOfRange(ValueError):
    """The shift delta violates its admissible interval."""


class DiffusionMatrix:
    """Symmetric pairwise diffusivities D_ij > 0 for i != j.

    The diagonal carries no physics and is stored as zero. ``inv`` holds
    the reciprocal matrix (zero diagonal), whose off-diagonal extremes
    ``mu`` and ``big_m`` bound the friction strength from below and above.
    """

    def __init__(self, d):
        d = np.array(d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError(f"diffusivities must form a square matrix, got {d.shape}")
        n = d.shape[0]
        if n < 2:
            raise ValueError("need at least two species")
        off = ~np.eye(n, dtype=bool)
        if not np.allclose(d, d.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(d).max())):
            raise ValueError("diffusivities must be symmetric")
        if np.any(d[off] <= 0.0):
            raise ValueError("off-diagonal diffusivities must be positive")
        self.d = d * off
        self.inv = np.where(off, 1.0 / np.where(off, d, 1.0), 0.0)
        self.n = n
        self.mu = float(self.inv[off].min())
        self.big_m = float(self.inv[off].max())

    @classmethod
    def from_pairs(cls, n, pairs):
        """Build from {(i, j): D_ij} with 0-based, unordered species pairs."""
        d = np.zeros((n, n))
        for (i, j), val in pairs.items():
            if i == j:
                raise ValueError(f"pair ({i}, {j}) is diagonal")
            if d[i, j] != 0.0 and d[i, j] != val:
                raise ValueError(f"conflicting values for pair ({i}, {j})")
            d[i, j] = d[j, i] = val
        off = ~np.eye(n, dtype=bool)
        if np.any(d[off] == 0.0):
            missing = [(i, j) for i in range(n) for j in range(i + 1, n) if d[i, j] == 0.0]
            raise ValueError(f"missing diffusivities for pairs {missing}")
        return cls(d)

    @classmethod
    def uniform(cls, n, value=1.0):
        return cls(np.full((n, n), float(value)))

    def __repr__(self):
        return f"DiffusionMatrix(n={self.n}, mu={self.mu!r}, big_m={self.big_m!r})"


@dataclass
class PointComposition:
    """Mole fractions at one spatial point, with an optional shift delta."""

    c: np.ndarray
    delta: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if self.c.ndim != 1 or self.c.size < 2:
            raise ValueError("composition must be a vector of at least two entries")
        if self.delta < 0.0:
            raise DeltaOutOfRange(f"delta must be nonnegative, got {self.delta}")

    @property
    def n(self):
        return self.c.size

    @property
    def d(self):
        return self.c + self.delta

    def validate(self, tol=1e-12):
        defect = abs(self.c.sum() - 1.0)
        if defect > tol:
            raise ValueError(f"composition sum is {defect:.3e} away from 1")
        if self.c.min() < -tol or self.c.max() > 1.0 + tol:
            raise ValueError(f"composition entries outside [0, 1]: {self.c}")
        return self


@dataclass
class PointFlux:
    """Zero-sum species fluxes at a point; shape (n, dim) or (n,)."""

    j: np.ndarray

    @property
    def n(self):
        return self.j.shape[0]

    def zero_sum_defect(self):
        return float(np.abs(self.j.sum(axis=0)).max())

    def velocities(self, c, floor=1e-14):
        cc = np.maximum(np.asarray(c, dtype=float), floor)
        return self.j / cc.reshape((-1,) + (1,) * (self.j.ndim - 1))


@dataclass
class MsOperator:
    """Assembled quadratic-form data for a shifted composition.

    friction      -- symmetric PSD matrix with kernel spanned by sqrt_shifted
    perturbation  -- delta-correction matrix, annihilated by sqrt_shifted on the left
    proj_range    -- orthogonal projector onto the complement of the kernel
    proj_kernel   -- projector onto the kernel direction
    mu            -- coercivity floor, the smallest reciprocal diffusivity
    """

    friction: np.ndarray
    perturbation: np.ndarray
    proj_range: np.ndarray
    proj_kernel: np.ndarray
    mu: float
    sqrt_shifted: np.ndarray
    shifted_mass: float
    delta: float

    @property
    def n(self):
        return self.friction.shape[0]


def assemble_operator(comp, D):
    """Assemble the friction and shift-correction matrices at a composition."""
    if comp.n != D.n:
        raise ValueError(f"composition has {comp.n} species, diffusivities {D.n}")
    K = D.inv
    d = comp.d
    if np.any(d < 0.0):
        raise ValueError("shifted composition has negative entries")
    s = np.sqrt(d)
    friction = -np.outer(s, s) * K
    np.fill_diagonal(friction, K @ d)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(s[:, None] > 0.0, s[None, :] / np.where(s[:, None] > 0.0, s[:, None], 1.0), 0.0)
    perturbation = ratio * K
    np.fill_diagonal(perturbation, -K.sum(axis=1))
    total = float(d.sum())
    proj_kernel = np.outer(s, s) / total
    proj_range = np.eye(comp.n) - proj_kernel
    return MsOperator(
        friction=friction,
        perturbation=perturbation,
        proj_range=proj_range,
        proj_kernel=proj_kernel,
        mu=D.mu,
        sqrt_shifted=s,
        shifted_mass=total,
        delta=float(comp.delta),
    )


def spectral_gap_check(op, z, total_shift=None):
    """Evaluate the coercivity bound z'Az >= (1 + n*delta) * mu * |Pz|^2.

    Returns (lhs, rhs, holds) with a 1e-12 slack on ``holds``. Equality is
    attained for z orthogonal to the kernel when all diffusivities agree.
    """
    z = np.asarray(z, dtype=float)
    mass = float(total_shift) + 1.0 if total_shift is not None else op.shifted_mass
    lhs = float(z @ op.friction @ z)
    pz = op.proj_range @ z
    rhs = mass * op.mu * float(pz @ pz)
    return lhs, rhs, lhs >= rhs - 1e-12


def _friction_system(c, K):
    """Batched force-flux matrices: (m, n) compositions -> (m, n, n)."""
    m, n = c.shape
    M = -c[:, :, None] * K[None, :, :]
    idx = np.arange(n)
    M[:, idx, idx] = c @ K
    return M


def _solve_zero_sum(M, rhs):
    """Solve the singular systems M x = rhs subject to a zero species sum.

    The friction matrix has zero column sums, so adding the all-ones
    rank-one term makes it invertible while forcing sum(x) = sum(rhs-part);
    projecting the right-hand side onto the zero-sum hyperplane first makes
    the bordered solve return exactly the zero-sum solution.
    """
    b = rhs - rhs.mean(axis=-1, keepdims=True)
    try:
        x = np.linalg.solve(M + 1.0, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularComposition(str(exc)) from None
    return x, b


def solve_fluxes(comp, grad_c, D, consistency_tol=1e-10, residual_tol=1e-10):
    """Invert the force-flux balance at a point.

    grad_c holds one driving gradient per species, shape (n, dim) or (n,).
    The gradients must sum to zero across species (the simplex constraint
    propagates); the returned fluxes sum to zero by construction.
    """
    if comp.n != D.n:
        raise ValueError(f"composition has {comp.n} species, diffusivities {D.n}")
    g = np.asarray(grad_c, dtype=float)
    squeeze = g.ndim == 1
    if squeeze:
        g = g[:, None]
    if g.shape[0] != comp.n:
        raise ValueError(f"gradient shape {g.shape} does not match {comp.n} species")
    defect = np.abs(g.sum(axis=0)).max()
    if defect > consistency_tol:
        raise InconsistentGradient(
            f"species gradients sum to {defect:.3e}, above {consistency_tol:.1e}"
        )
    M = _friction_system(comp.c[None, :], D.inv)[0]
    # columns of g are independent right-hand sides
    x, b = _solve_zero_sum(M[None, :, :], -g.T)
    residual = np.abs(M @ x[..., None] - b[..., None]).max()
    scale = max(1.0, np.abs(g).max())
    if residual > residual_tol * scale:
        raise SingularComposition(
            f"force-flux residual {residual:.3e} exceeds tolerance"
        )
    j = x.T
    return PointFlux(j[:, 0] if squeeze else j)


def force_flux_residual(comp, grad_c, j, D):
    """Max-norm residual of the force-flux balance for given fluxes."""
    g = np.atleast_2d(np.asarray(grad_c, dtype=float).T).T
    jj = np.atleast_2d(np.asarray(j, dtype=float).T).T
    M = _friction_system(comp.c[None, :], D.inv)[0]
    return float(np.abs(M @ jj + g).max())


def solve_fluxes_batch(c, grad_c, D, residual_tol=1e-10):
    """Vectorized force-flux solve for many points, one gradient component.

    c, grad_c: shape (m, n). Returns (fluxes (m, n), max residual). The
    per-point gradient consistency is not rechecked here; callers feed
    gradients that are zero-sum by construction.
    """
    M = _friction_system(c, D.inv)
    x, b = _solve_zero_sum(M, -grad_c)
    residual = float(np.abs(np.einsum("mij,mj->mi", M, x) - b).max())
    scale = max(1.0, float(np.abs(grad_c).max()))
    if residual > residual_tol * scale:
        raise SingularComposition(
            f"force-flux residual {residual:.3e} exceeds tolerance"
        )
    return x, residual


def solve_fluxes_lstsq(comp, grad_c, D):
    """Dense constrained least-squares oracle for the force-flux solve.

    Stacks the zero-sum constraint under the friction system and solves the
    (n+1) x n problem by SVD. Slower than the bordered solve; used to
    cross-check it.
    """
    g = np.asarray(grad_c, dtype=float)
    squeeze = g.ndim == 1
    if squeeze:
        g = g[:, None]
    M = _friction_system(comp.c[None, :], D.inv)[0]
    A = np.vstack([M, np.ones((1, comp.n))])
    out = np.empty_like(g)
    for k in range(g.shape[1]):
        rhs = np.concatenate([-g[:, k], [0.0]])
        out[:, k] = np.linalg.lstsq(A, rhs, rcond=None)[0]
    return out[:, 0] if squeeze else out


def _shifted_system(d, K):
    """Batched friction and shift-correction matrices for d of shape (m, n)."""
    m, n = d.shape
    s = np.sqrt(d)
    A = -(s[:, :, None] * s[:, None, :]) * K[None, :, :]
    idx = np.arange(n)
    A[:, idx, idx] = d @ K
    B = (s[:, None, :] / s[:, :, None]) * K[None, :, :]
    B[:, idx, idx] = -K.sum(axis=1)[None, :]
    return A, B, s


def solve_shifted_fluxes(comp, grad_sqrt_d, D, residual_tol=1e-10):
    """Solve the shifted force-flux system for partial velocities.

    Takes gradients of sqrt(c_i + delta), shape (n, dim) or (n,), and
    returns the velocities v with sum_i d_i v_i = 0. Requires delta > 0 so
    every shifted entry is bounded away from zero. Algebraically equivalent
    to solve_fluxes at matched data: v = J / (c + delta).
    """
    if comp.delta <= 0.0:
        raise DeltaOutOfRange(f"shifted solve needs delta > 0, got {comp.delta}")
    if comp.n != D.n:
        raise ValueError(f"composition has {comp.n} species, diffusivities {D.n}")
    g = np.asarray(grad_sqrt_d, dtype=float)
    squeeze = g.ndim == 1
    if squeeze:
        g = g[:, None]
    d = comp.d
    A, B, s = _shifted_system(d[None, :], D.inv)
    A, B, s = A[0], B[0], s[0]
    G = A + comp.delta * B
    rhs = -2.0 * g
    # project onto the hyperplane orthogonal to sqrt(d); the bordered term
    # sqrt(d) sqrt(d)' then pins the unique solution with s . w = 0
    rhs = rhs - s[:, None] * (s @ rhs)[None, :] / float(d.sum())
    try:
        w = np.linalg.solve(G + np.outer(s, s), rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularComposition(str(exc)) from None
    residual = float(np.abs(G @ w - rhs).max())
    scale = max(1.0, float(np.abs(g).max()))
    if residual > residual_tol * scale:
        raise SingularComposition(
            f"shifted-system residual {residual:.3e} exceeds tolerance"
        )
    v = w / s[:, None]
    return v[:, 0] if squeeze else v


@dataclass
class StabilityConstants:
    """Constants of the twin-trajectory stability estimate.

    All are explicit functions of the species count, the reciprocal
    diffusivity extremes mu and big_m, and the measured flux bound; none
    depends on delta. c1 collects the quadratic-distance cost of the two
    leading cross terms plus the dissipation correction, c2 the
    velocity-weighted cost of the shift coupling, c3 its quadratic-distance
    cost, c4 the total coefficient eroding the dissipation margin, and c5
    the aggregate quadratic-distance coefficient of the final estimate.
    """

    n: int
    mu: float
    big_m: float
    delta: float
    flux_bound: float
    velocity_bound: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    delta_max: float
    admissible: bool


def admissible_delta_max(D):
    """Largest shift for which the dissipation margin mu/4 - c4*delta stays positive."""
    c4 = D.n * D.big_m + 2.0 * D.n**2 * D.big_m**2 / D.mu
    return min(1.0, D.mu / (4.0 * c4))


def stability_constants(D, delta, flux_bound, enforce_admissible=True):
    """Explicit constants for the twin stability estimate at shift delta.

    flux_bound is the measured sup-norm of the species fluxes c_i u_i along
    the trajectories. With ``enforce_admissible`` the shift must lie in
    (0, min(1, mu/(4 c4))) so the certified dissipation margin is positive;
    pass False to obtain the constants outside that window (the certificates
    then carry the eroded margin explicitly).
    """
    n, mu, M = D.n, D.mu, D.big_m
    F = float(flux_bound)
    if F < 0.0:
        raise ValueError("flux bound must be nonnegative")
    c1 = 16.0 * n**2 * M**2 * F**2 / mu
    c2 = 2.0 * n**2 * M**2 / mu
    c3 = 40.0 * n**2 * M**2 * F**2 / mu
    c4 = n * M + c2
    c5 = 2.0 * n * mu * F**2 + c1 + c3
    delta_max = min(1.0, mu / (4.0 * c4))
    admissible = 0.0 < delta < delta_max
    if enforce_admissible and not admissible:
        raise DeltaOutOfRange(
            f"delta={delta} outside admissible interval (0, {delta_max:.6g})"
        )
    if not 0.0 < delta < 1.0:
        raise DeltaOutOfRange(f"delta must lie in (0, 1), got {delta}")
    return StabilityConstants(
        n=n,
        mu=mu,
        big_m=M,
        delta=float(delta),
        flux_bound=F,
        velocity_bound=F / delta,
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        c5=c5,
        delta_max=delta_max,
        admissible=admissible,
    )
