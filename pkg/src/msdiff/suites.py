"""Certification suites behind the command line: randomized certification
of the pointwise solver and operator algebra, and mesh studies for the
entropy identity, mollification limits, twin stability, and binary
convergence. Every suite writes machine-readable artifacts whose bytes
depend only on the configuration and seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import mollify, sim
from .entropy import (
    EntropyReport,
    dissipation,
    entropy as mixing_entropy,
    error_terms,
    identity_residual,
    identity_series,
    log_shift_renorm,
    regularized_relative_entropy,
    relative_entropy,
    renormalized_entropy,
    symmetrized_relative_entropy,
    write_reports_csv,
)
from .flux import (
    DiffusionMatrix,
    PointComposition,
    assemble_operator,
    solve_fluxes_batch,
    spectral_gap_check,
    _friction_system,
)
from .grid import PeriodicGrid, l2_norm


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: list
    artifacts: list = field(default_factory=list)
    details: dict = field(default_factory=dict)


def _check(name, operation, value, threshold, kind="<="):
    ok = value <= threshold if kind == "<=" else value >= threshold
    return {
        "check": name,
        "operation": operation,
        "value": float(value),
        "threshold": float(threshold),
        "comparison": kind,
        "passed": bool(ok),
    }


def _param(cfg, suite, name, conv, default):
    raw = cfg.params.get(f"{suite}.{name}")
    if raw is None:
        return default
    return conv(raw)


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _random_simplex(rng, m, n):
    g = -np.log(rng.uniform(size=(m, n)))
    return g / g.sum(axis=1, keepdims=True)


def _random_diffusivities(rng, n):
    vals = np.exp(rng.uniform(math.log(0.1), math.log(10.0), size=(n, n)))
    d = np.triu(vals, 1)
    return DiffusionMatrix(d + d.T)


def _zero_sum_gradients(rng, m, n):
    g = rng.normal(size=(m, n))
    return g - g.mean(axis=1, keepdims=True)


def flux_certify(cfg, rng):
    """Randomized certification of the pointwise force-flux solve."""
    suite = "flux-certify"
    samples = _param(cfg, suite, "samples", int, 10000)
    n_lo = _param(cfg, suite, "species_min", int, 2)
    n_hi = _param(cfg, suite, "species_max", int, 6)
    species = list(range(n_lo, n_hi + 1))
    per_n = max(1, samples // len(species))

    max_res = max_zero = max_oracle = 0.0
    total = 0
    for n in species:
        chunks = 4
        for _ in range(chunks):
            m = max(1, per_n // chunks)
            total += m
            D = _random_diffusivities(rng, n)
            c = _random_simplex(rng, m, n)
            g = _zero_sum_gradients(rng, m, n)
            j, res = solve_fluxes_batch(c, g, D)
            max_res = max(max_res, res)
            max_zero = max(max_zero, float(np.abs(j.sum(axis=1)).max()))
            # dense pseudo-inverse oracle, shifted onto the zero-sum slice
            M = _friction_system(c, D.inv)
            b = -g
            b = b - b.mean(axis=1, keepdims=True)
            j_or = np.einsum("mij,mj->mi", np.linalg.pinv(M), b)
            j_or = j_or - j_or.sum(axis=1, keepdims=True) * c
            max_oracle = max(max_oracle, float(np.abs(j - j_or).max()))

    checks = [
        _check("force_flux_residual", "flux.solve_fluxes", max_res, 1e-10),
        _check("flux_zero_sum", "flux.solve_fluxes", max_zero, 1e-12),
        _check("oracle_agreement", "flux.solve_fluxes", max_oracle, 1e-9),
    ]
    details = {
        "samples": total,
        "species": species,
        "max_residual": max_res,
        "max_zero_sum": max_zero,
        "max_oracle_gap": max_oracle,
    }
    return SuiteResult(suite, all(c["passed"] for c in checks), checks, details=details)


def spectral_certify(cfg, rng):
    """Operator algebra identities plus the coercivity bound, randomized."""
    suite = "spectral-certify"
    samples = _param(cfg, suite, "samples", int, 10000)
    op_samples = _param(cfg, suite, "operator_samples", int, 1000)

    worst = {
        "kernel_action": 0.0,
        "left_annihilation": 0.0,
        "projector_idempotence": 0.0,
        "projector_split": 0.0,
        "scaling_identity": 0.0,
        "column_sums": 0.0,
    }
    for _ in range(op_samples):
        n = int(rng.integers(2, 7))
        D = _random_diffusivities(rng, n)
        delta = float(rng.uniform(0.01, 0.5))
        c = _random_simplex(rng, 1, n)[0]
        comp = PointComposition(c, delta)
        op = assemble_operator(comp, D)
        s = op.sqrt_shifted
        full = op.friction + delta * op.perturbation
        # the friction part kills sqrt(d) on the right, the full matrix on the left
        worst["kernel_action"] = max(worst["kernel_action"], float(np.abs(op.friction @ s).max()))
        worst["left_annihilation"] = max(
            worst["left_annihilation"], float(np.abs(s @ full).max())
        )
        worst["projector_idempotence"] = max(
            worst["projector_idempotence"],
            float(np.abs(op.proj_range @ op.proj_range - op.proj_range).max()),
        )
        worst["projector_split"] = max(
            worst["projector_split"],
            float(np.abs(op.proj_range + op.proj_kernel - np.eye(n)).max()),
        )
        # friction scales linearly when the shifted mass is rescaled
        lam = float(comp.d.sum())
        scaled = assemble_operator(
            PointComposition(comp.d / lam, 0.0), D
        ).friction
        worst["scaling_identity"] = max(
            worst["scaling_identity"], float(np.abs(op.friction - lam * scaled).max())
        )
        M = _friction_system(c[None, :], D.inv)[0]
        worst["column_sums"] = max(worst["column_sums"], float(np.abs(M.sum(axis=0)).max()))

    violations = 0
    worst_slack = -math.inf
    for _ in range(samples):
        n = int(rng.integers(2, 5))
        D = _random_diffusivities(rng, n)
        delta = float(rng.uniform(0.01, 0.5))
        comp = PointComposition(_random_simplex(rng, 1, n)[0], delta)
        op = assemble_operator(comp, D)
        z = rng.normal(size=n)
        lhs, rhs, holds = spectral_gap_check(op, z)
        if not holds:
            violations += 1
        worst_slack = max(worst_slack, rhs - lhs)

    checks = [
        _check(f"operator_{key}", "flux.assemble_operator", val, 1e-12)
        for key, val in worst.items()
    ]
    checks.append(
        _check("spectral_gap_violations", "flux.spectral_gap_check", violations, 0)
    )
    details = {
        "operator_samples": op_samples,
        "gap_samples": samples,
        "worst_defects": worst,
        "gap_violations": violations,
        "worst_gap_slack": worst_slack,
    }
    return SuiteResult(suite, all(c["passed"] for c in checks), checks, details=details)


def _identity_level(args):
    scenario, level = args
    sc = scenario.refine(2**level) if level else scenario
    pert = sim.Perturbation(amplitude=0.02, mode=2)
    result = sim.twin_experiment(sc, perturbation=pert)
    res = identity_residual(result.base, result.twin, sc.D)
    return level, min(sc.grid.spacing), res.residual


def identity_study(cfg, rng):
    """Entropy-balance residual under dyadic space-time refinement."""
    suite = "identity-study"
    levels = _param(cfg, suite, "levels", int, 3)
    base_cells = _param(cfg, suite, "cells", int, 32)
    t_final = _param(cfg, suite, "t_final", float, 0.002)

    base_grid = PeriodicGrid((base_cells,))
    dt0 = 0.25 * sim.max_stable_dt(base_grid, cfg.scenario.D)
    steps = max(1, math.ceil(t_final / dt0))
    scenario = replace(
        cfg.scenario,
        grid=base_grid,
        t_final=t_final,
        dt=t_final / steps,
        cadence=1,
        scheme="euler",
        perturbation=None,
    )
    jobs = [(scenario, lvl) for lvl in range(levels)]
    rows = _map_jobs(_identity_level, jobs, cfg.workers)
    rows.sort()
    residuals = [r for _, _, r in rows]
    orders = [
        math.log2(residuals[k] / residuals[k + 1]) for k in range(len(residuals) - 1)
    ]
    slope, _ = mollify.fit_loglog([h for _, h, _ in rows], residuals)

    art = os.path.join(cfg.out_dir, "identity_study.csv")
    with open(art, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["level", "h", "residual", "observed_order"])
        for k, (lvl, h, r) in enumerate(rows):
            writer.writerow(
                [lvl, repr(h), repr(r), "" if k == 0 else repr(orders[k - 1])]
            )
    checks = [
        _check("identity_refinement_order", "entropy.identity_residual", min(orders), 1.0, ">=")
    ]
    details = {
        "residuals": residuals,
        "orders": orders,
        "fitted_slope": slope,
        "levels": levels,
    }
    return SuiteResult(
        suite, all(c["passed"] for c in checks), checks, [art], details
    )


def mollifier_study(cfg, rng):
    """Space-time mollification limits and the initial-trace half factor."""
    suite = "mollifier-study"
    cells = _param(cfg, suite, "cells", int, 64)
    t_cells = _param(cfg, suite, "t_cells", int, 64)
    trace_cells = _param(cfg, suite, "trace_cells", int, 256)

    grid = PeriodicGrid((cells,))
    f = lambda x, t: (0.8 + 0.3 * np.cos(2 * np.pi * x)) * (1.0 + 0.25 * t)
    phi = lambda x, t: (1.0 + 0.5 * np.sin(2 * np.pi * x)) * np.cos(0.5 * np.pi * t) ** 2
    ref = mollify.plain_pairing(f, phi, grid, 1.0, t_cells)
    art1 = os.path.join(cfg.out_dir, "mollifier_study.csv")
    study = mollify.rate_study(
        lambda e: mollify.mollify_spacetime(f, phi, e, grid, 1.0, t_cells),
        [0.2, 0.1, 0.05],
        ref,
        csv_path=art1,
    )

    tgrid = PeriodicGrid((trace_cells,))
    eps_trace = _param(cfg, suite, "trace_eps", float, 0.05)
    trace = mollify.initial_trace_mollification(
        f, phi, eps_trace, tgrid, 1.0, trace_cells
    )
    half_ref = 0.5 * mollify.initial_pairing(f, phi, tgrid)
    rel_half = abs(trace - half_ref) / abs(half_ref)
    rel_full = abs(trace - 2.0 * half_ref) / abs(2.0 * half_ref)

    checks = [
        _check("mollify_rate", "mollify.mollify_spacetime", study.slope, 0.9, ">="),
        _check("mollify_fit_r2", "mollify.mollify_spacetime", study.r2, 0.99, ">="),
        _check("trace_half_factor", "mollify.initial_trace_mollification", rel_half, 0.01),
        _check("trace_excludes_full", "mollify.initial_trace_mollification", rel_full, 0.25, ">="),
    ]
    details = {
        "rate_slope": study.slope,
        "rate_r2": study.r2,
        "trace_value": trace,
        "half_reference": half_ref,
        "relative_gap_half": rel_half,
        "relative_gap_full": rel_full,
    }
    return SuiteResult(
        suite, all(c["passed"] for c in checks), checks, [art1], details
    )


def _twin_reports(result, D, delta):
    """Per-snapshot diagnostics rows for a twin experiment."""
    base, twin, cert = result.base, result.twin, result.certificate
    grid = base.grid
    beta = log_shift_renorm(delta)
    series = identity_series(base, twin, D)
    residuals = series.residuals()
    reports = []
    for k, t in enumerate(base.times):
        a = base.state(k)
        b = twin.state(k)
        u = base.fluxes[k] / np.maximum(a.c, 1e-14)[:, None]
        ub = twin.fluxes[k] / np.maximum(b.c, 1e-14)[:, None]
        d, dbar = a.c + delta, b.c + delta
        v = base.fluxes[k] / d[:, None]
        vbar = twin.fluxes[k] / dbar[:, None]
        terms = error_terms(
            d, dbar, v, vbar, D, delta, grid, flux_bound=cert.flux_bound
        )
        res = float(residuals[k])
        reports.append(
            EntropyReport(
                time=float(t),
                entropy=mixing_entropy(a),
                relative_entropy=relative_entropy(a, b),
                symmetrized_entropy=symmetrized_relative_entropy(a, b),
                regularized_entropy=regularized_relative_entropy(a, b, delta),
                renorm_entropy=renormalized_entropy(a, beta),
                dissipation=dissipation(a, b, u, ub, D),
                identity_residual=res,
                j1=terms.j1,
                j2=terms.j2,
                j3=terms.j3,
                j4=terms.j4,
                gronwall_lhs=float(cert.master_lhs[k]),
                gronwall_rhs=float(cert.master_rhs[k]),
            )
        )
    return reports


def twin_study(cfg, rng):
    """Twin stability: dt-refinement distance decay plus the certificate."""
    suite = "twin-study"
    scenario = cfg.scenario
    delta = scenario.delta
    halvings = _param(cfg, suite, "halvings", int, 3)

    # pair each run with a half-step twin from the same data; the gap at the
    # final time must shrink at least first order in dt under dt halving
    dt0, steps0 = scenario.resolve_steps()
    f_gaps, dts = [], []
    for k in range(halvings):
        steps_k = steps0 * 2**k
        sc_k = replace(
            scenario,
            dt=scenario.t_final / steps_k,
            cadence=steps_k,
            perturbation=None,
        )
        result = sim.twin_experiment(sc_k, dt_divisor=2)
        f_gaps.append(
            regularized_relative_entropy(
                result.base.state(-1), result.twin.state(-1), delta
            )
        )
        dts.append(scenario.t_final / steps_k)
    slope, _ = mollify.fit_loglog(dts, [max(g, 1e-300) for g in f_gaps])

    pert = scenario.perturbation or sim.Perturbation(amplitude=1e-4, mode=1)
    perturbed = sim.twin_experiment(
        replace(scenario, perturbation=None), perturbation=pert
    )
    cert = perturbed.certificate
    reports = _twin_reports(perturbed, scenario.D, delta)
    art_csv = os.path.join(cfg.out_dir, "twin_diagnostics.csv")
    write_reports_csv(reports, art_csv)

    checks = [
        _check("dt_refinement_order", "entropy.regularized_relative_entropy", slope, 0.9, ">="),
        _check("master_inequality", "entropy.gronwall_certificate", 0.0 if cert.holds_master else 1.0, 0),
        _check("exponential_envelope", "entropy.gronwall_certificate", 0.0 if cert.holds_envelope else 1.0, 0),
    ]
    art_json = os.path.join(cfg.out_dir, "twin_study.json")
    details = {
        "dt_values": dts,
        "f_gaps": f_gaps,
        "dt_order_slope": slope,
        "delta": delta,
        "delta_admissible": bool(cert.admissible),
        "delta_max": cert.constants.delta_max,
        "flux_bound": cert.flux_bound,
        "constants": {
            k: getattr(cert.constants, k)
            for k in ("mu", "big_m", "c1", "c2", "c3", "c4", "c5")
        },
    }
    _write_json(art_json, details)
    return SuiteResult(
        suite,
        all(c["passed"] for c in checks),
        checks,
        [art_csv, art_json],
        details,
    )


def _convergence_level(args):
    d12, base_cells, level, t_final, amplitude, mode = args
    cells = base_cells * 2**level
    grid = PeriodicGrid((cells,))
    D = DiffusionMatrix.uniform(2, d12)
    dt0 = 0.25 * sim.max_stable_dt(grid, D)
    steps = math.ceil(t_final / dt0)
    scenario = sim.Scenario(
        n=2,
        D=D,
        grid=grid,
        t_final=t_final,
        preset="binary_mode",
        amplitude=amplitude,
        mode=mode,
        dt=t_final / steps,
        cadence=steps,
    )
    traj = sim.run(scenario)
    exact = sim.exact_binary_mode(grid, d12, amplitude, mode, t_final)
    err = l2_norm(traj.states[-1] - exact.c, grid) / l2_norm(exact.c, grid)
    return level, grid.spacing[0], err


def convergence_study(cfg, rng):
    """Two-species single-mode decay against the closed-form solution."""
    suite = "convergence-study"
    levels = _param(cfg, suite, "levels", int, 3)
    base_cells = _param(cfg, suite, "cells", int, 64)
    d12 = _param(cfg, suite, "d12", float, 1.0)
    t_final = _param(cfg, suite, "t_final", float, 0.01)
    amplitude = _param(cfg, suite, "amplitude", float, 0.2)

    jobs = [(d12, base_cells, lvl, t_final, amplitude, 1) for lvl in range(levels)]
    rows = _map_jobs(_convergence_level, jobs, cfg.workers)
    rows.sort()
    errs = [e for _, _, e in rows]
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(len(errs) - 1)]

    art = os.path.join(cfg.out_dir, "convergence_study.csv")
    with open(art, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cells", "h", "rel_l2_error", "observed_order"])
        for k, (lvl, h, e) in enumerate(rows):
            writer.writerow(
                [
                    base_cells * 2**lvl,
                    repr(h),
                    repr(e),
                    "" if k == 0 else repr(orders[k - 1]),
                ]
            )
    checks = [
        _check("binary_convergence_order", "sim.run", min(orders), 1.9, ">="),
        _check("binary_finest_error", "sim.run", errs[-1], 1e-3),
    ]
    details = {"errors": errs, "orders": orders}
    return SuiteResult(
        suite, all(c["passed"] for c in checks), checks, [art], details
    )


def _map_jobs(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


_SUITES = {
    "flux-certify": flux_certify,
    "spectral-certify": spectral_certify,
    "identity-study": identity_study,
    "mollifier-study": mollifier_study,
    "twin-study": twin_study,
    "convergence-study": convergence_study,
}


def execute(cfg, log=print):
    """Run the selected suites, write artifacts, return the exit code."""
    if not cfg.suites:
        log("warning: no suites selected; nothing to do")
        return 0
    os.makedirs(cfg.out_dir, exist_ok=True)
    for w in cfg.warnings:
        log(f"warning: {w}")

    summary = {"seed": cfg.seed, "warnings": list(cfg.warnings), "suites": {}}
    all_passed = True
    artifacts = []
    for idx, name in enumerate(cfg.suites):
        rng = np.random.default_rng([cfg.seed, idx])
        result = _SUITES[name](cfg, rng)
        all_passed &= result.passed
        artifacts.extend(result.artifacts)
        summary["suites"][name] = {
            "passed": result.passed,
            "checks": result.checks,
            "details": _jsonable(result.details),
            "artifacts": [os.path.basename(a) for a in result.artifacts],
        }
        for c in result.checks:
            log(
                f"[{name}] {'PASS' if c['passed'] else 'FAIL'} {c['check']}: "
                f"{c['value']:.6g} {c['comparison']} {c['threshold']:.6g} "
                f"({c['operation']})"
            )
    summary["exit_code"] = 0 if all_passed else 1

    sum_path = os.path.join(cfg.out_dir, "summary.json")
    _write_json(sum_path, summary)
    artifacts.append(sum_path)

    manifest = {"files": []}
    for path in sorted(set(artifacts)):
        with open(path, "rb") as fh:
            blob = fh.read()
        manifest["files"].append(
            {
                "name": os.path.basename(path),
                "sha256": hashlib.sha256(blob).hexdigest(),
                "bytes": len(blob),
            }
        )
    _write_json(os.path.join(cfg.out_dir, "manifest.json"), manifest)
    log(f"summary written to {sum_path}")
    return summary["exit_code"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj
