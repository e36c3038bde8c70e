"""Command-line front end: ``conifold-lab {profile,cutoff,positivity,curvature,report}``.

Every subcommand writes a JSON report (and CSV or JSON data where it has
any) to --out and exits with 0 if all checks pass, 1 on a usage or config
error and 2 on a failed check or internal verification error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from conifold_lab import __version__
from conifold_lab import cutoffs as co
from conifold_lab import deformed_geometry as dg
from conifold_lab import frame_algebra as fa
from conifold_lab import radial_profiles as rp
from conifold_lab import resolved_frame as rf
from conifold_lab.config import ConfigError, ProfileConfig, RunConfig, default_jobs
from conifold_lab.errors import DomainError, SearchError, VerificationError
from conifold_lab.report import Check, Report, jsonable, merge_reports, write_csv, write_json

EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2

PROFILE_COLUMNS = ["kind", "t", "r2", "eta", "f", "f1", "f2", "f3", "f4", "ode_residual"]
CURVATURE_COLUMNS = ["t", "r2", "ratio", "sup_R_r43", "ricci_defect", "symmetry_defect", "vol_ratio_r2", "grad_const"]


# ---------------------------------------------------------------------------
# parallel map


@contextmanager
def parallel_map(jobs: int) -> Iterator[Callable]:
    """Ordered map over a process pool; results come back in input order, so
    output does not depend on the number of workers."""
    if jobs <= 1:
        yield lambda fn, items: list(map(fn, items))
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield lambda fn, items: list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


# ---------------------------------------------------------------------------
# sampling


def sample_grid(p: ProfileConfig, seed: int) -> list[tuple[float, float]]:
    """(t, r2) pairs, log-uniform in t and in r2/t."""
    rng = np.random.default_rng(seed)
    lt = rng.uniform(math.log(p.t_min), math.log(p.t_max), p.samples)
    lr = rng.uniform(math.log(p.ratio_min), math.log(p.ratio_max), p.samples)
    t = np.exp(lt)
    return [(float(a), float(a * b)) for a, b in zip(t, np.exp(lr))]


# ---------------------------------------------------------------------------
# workers (module level so they pickle)


def _profile_row(pair: tuple[float, float]) -> list[float]:
    t, r2 = pair
    kind = rp.ProfileKind.deformed(t)
    ev = rp.derivatives(kind, r2, check=True)
    return [ev.eta, ev.f, ev.f1, ev.f2, ev.f3, ev.f4, ev.ode_residual, rp.ode_residual_fd(kind, r2)]


def _metric_row(pair: tuple[float, float]) -> list[float]:
    t, r2 = pair
    table = dg.r2_partials(t, r2, verify=False)
    m = dg.metric_at_q(t, r2, table)
    cmp = dg.volume_and_gradient_comparison(t, r2)
    return [float(np.max(np.abs(m.g - np.eye(3)))), cmp.vol_ratio * r2, cmp.grad_const]


def _curvature_row(pair: tuple[float, float]) -> list[float]:
    t, r2 = pair
    table = dg.r2_partials(t, r2, verify=False)
    curv = dg.CurvatureTensor(t=t, r2=r2, R=dg.curvature_from_table(table))
    lhs, rhs = dg.combined_identity(table)
    cmp = dg.volume_and_gradient_comparison(t, r2)
    return [
        curv.sup_scaled(),
        curv.ricci_defect(),
        curv.symmetry_defect(),
        abs(lhs - rhs) / abs(rhs),
        cmp.vol_ratio * r2,
        cmp.grad_const,
    ]


def _oracle_row(pair: tuple[float, float]) -> float:
    t, r2 = pair
    curv = dg.curvature_at_q(t, r2, check=False)
    return dg.oracle_discrepancy(curv.R, dg.curvature_fd_oracle(dg.chart_map(t, r2)))


# ---------------------------------------------------------------------------
# subcommands


def _echo(cfg: RunConfig) -> dict:
    # jobs and out do not change any result, so they stay out of the report
    d = cfg.to_dict()
    d.pop("jobs")
    d.pop("out")
    return d


def cmd_profile(cfg: RunConfig, out: Path, pmap: Callable) -> Report:
    p = cfg.profile
    rep = Report("profile", _echo(cfg))
    pairs = sample_grid(p, cfg.seed)
    with rep.timed("ode_grid"):
        rows = pmap(_profile_row, pairs)
    csv_rows = [["deformed", t, r2, *row[:7]] for (t, r2), row in zip(pairs, rows)]
    for kind in (rp.ProfileKind.resolved(), rp.ProfileKind.cone()):
        for r2 in p.reference_r2:
            ev = rp.derivatives(kind, r2, check=True)
            csv_rows.append([kind.name, kind.t, r2, ev.eta, ev.f, ev.f1, ev.f2, ev.f3, ev.f4, ev.ode_residual])
    write_csv(out / "profile.csv", PROFILE_COLUMNS, csv_rows)

    res = np.array([r[6] for r in rows])
    res_fd = np.array([r[7] for r in rows])
    grid_inputs = {"samples": p.samples, "t": [p.t_min, p.t_max], "ratio": [p.ratio_min, p.ratio_max]}
    rep.add(Check("ode_residual_analytic", "Ricci-flatness ODE for eta, analytic derivative",
                  bool(res.max() < cfg.tol(p.ode_tol)), {"max_relative_residual": res.max()},
                  cfg.tol(p.ode_tol), grid_inputs))
    rep.add(Check("ode_residual_fd", "Ricci-flatness ODE for eta, finite-difference cross-check",
                  bool(res_fd.max() < cfg.tol(p.ode_fd_tol)), {"max_relative_residual": res_fd.max()},
                  cfg.tol(p.ode_fd_tol), grid_inputs))

    with rep.timed("monotonicity"):
        taus = np.geomspace(p.tau_min, p.tau_max, p.tau_points)
        wit = rp.monotonicity_witness(1.0, taus)
    lo_err = abs(wit.h_values[0] - 2 / 3)
    hi_err = abs(wit.h_values[-1] - 1)
    tau_inputs = {"tau": [p.tau_min, p.tau_max], "points": p.tau_points}
    rep.add(Check("h_monotone", "h(tau) strictly increasing with positive derivative",
                  wit.increasing and wit.h1_positive,
                  {"increasing": wit.increasing, "h1_positive": wit.h1_positive, "h1_min": min(wit.h1_values)},
                  None, tau_inputs))
    rep.add(Check("h_limit_small_tau", "h(tau) -> 2/3 as tau -> 0", bool(lo_err < cfg.tol(p.h_lower_tol)),
                  {"h": wit.h_values[0], "abs_error": lo_err}, cfg.tol(p.h_lower_tol), {"tau": p.tau_min}))
    rep.add(Check("h_limit_large_tau", "h(tau) -> 1 as tau -> infinity", bool(hi_err < cfg.tol(p.h_upper_tol)),
                  {"h": wit.h_values[-1], "abs_error": hi_err}, cfg.tol(p.h_upper_tol), {"tau": p.tau_max}))

    with rep.timed("convergence"):
        tables = [rp.convergence_table(k, p.convergence_delta, p.convergence_t) for k in (0, 1, 2)]
    for tab in tables:
        rep.add(Check(f"convergence_k{tab.k}", "small-t convergence of f_t^(k) to the cone profile",
                      tab.decreasing, {"t": tab.t_list, "sup_error": tab.sup_errors}, None,
                      {"k": tab.k, "interval": [tab.delta, 1.0]}))
    k1 = tables[1]
    i_min = int(np.argmin(k1.t_list))
    rep.add(Check("convergence_k1_bound", "small-t convergence of f_t' at the smallest t",
                  bool(k1.sup_errors[i_min] < cfg.tol(p.convergence_k1_tol)),
                  {"sup_error": k1.sup_errors[i_min]}, cfg.tol(p.convergence_k1_tol), {"t": k1.t_list[i_min]}))

    with rep.timed("ratio_bands"):
        rb = rp.ratio_bounds(p.ratio_band[0], p.ratio_band[1], p.ratio_t)
    rep.add(Check("ratio_bands", "1/2 <= f_t^(k)/f_0^(k) <= 2 for k = 1, 2 near the apex", rb.holds,
                  {"first_ratio": rb.first_ratio, "second_ratio": rb.second_ratio,
                   "alpha_estimate": rb.alpha_estimate, "failure_point": rb.failure_point},
                  [0.5, 2.0], {"interval": p.ratio_band, "t": p.ratio_t}))

    with rep.timed("asymptotic_constants"):
        lo = max(p.ratio_min, 1.0 / (1 - 1e-3) * (1 + 1e-9))
        consts = []
        for t in sorted({p.t_min, p.t_max}):
            consts.append(rp.asymptotic_constants(t, list(t * np.geomspace(lo, p.ratio_max, 60))))
    ok = all(all(math.isfinite(c) for c in a.constants) and a.eta_prime_in_unit_interval for a in consts)
    rep.add(Check("asymptotic_constants", "weighted bounds on f^(k), k = 1..4, and r^(2/3) eta' in (0, 1)", ok,
                  {str(a.t): {"constants": a.constants, "eta_prime_scaled": [a.eta_prime_scaled_min,
                                                                              a.eta_prime_scaled_max]}
                   for a in consts},
                  None, {"ratio": [lo, p.ratio_max]}))
    return rep


def _interval_minima(spec: co.ChiSpec, grid_size: int) -> dict:
    g2 = np.linspace(spec.c1, spec.c3, grid_size)
    g3 = np.linspace(spec.c3, spec.c4, grid_size)
    psi, dpsi = co.psi_eval(spec, g3, 0), co.psi_eval(spec, g3, 1)
    return {
        "chi1_on_c1_c3": float(co.chi_eval(spec, g2, 1).min()),
        "law_on_c1_c3": float(co.chi_law(spec, g2).min()),
        "psi_on_c3_c4": float(psi.min()),
        "law_on_c3_c4": float((2 * psi + g3 * dpsi).min()),
    }


def cmd_cutoff(cfg: RunConfig, out: Path, pmap: Callable) -> Report:
    c = cfg.cutoff
    rep = Report("cutoff", _echo(cfg))
    if any(n < 4 for n in c.n_list):
        raise ConfigError("cutoff needs n >= 4")
    with rep.timed("bounds"):
        b = co.verify_chi_bounds(c.n_list, c.grid_size, raise_on_growth=False)
    inputs = {"n_list": c.n_list, "grid_size": c.grid_size}
    rep.add(Check("item1_identity", "chi(s) = s on [0, c1]", b.item1, {"holds": b.item1}, None, inputs))
    rep.add(Check("item2_item3_bounds", "chi' and 2 chi' + s chi'' bounded below by -C1 n^-p",
                  bool(math.isfinite(b.c1_hat)),
                  {"c1_hat": b.c1_hat, "c1_hat_per_n": dict(zip(map(str, b.n_list), b.c1_hat_per_n)),
                   "scaled_by_n": b.details["scaled_by_n"]}, None, inputs))
    rep.add(Check("c1_hat_stable", "the fitted constant C1 is independent of n",
                  bool(b.variation < c.variation_tol), {"variation": b.variation}, c.variation_tol, inputs))
    rep.add(Check("item4_constant", "chi constant past c4", b.item4, {"holds": b.item4}, None, inputs))
    rep.add(Check("phi_segment", "chi' > 0 and 2 chi' + s chi'' >= 0 on [c1, c2]", b.phi_segment_ok,
                  {"holds": b.phi_segment_ok}, None, inputs))
    rep.add(Check("law_vanishes", "2 chi' + s chi'' = 0 on [c2, c3]", bool(b.law_residual < cfg.tol(c.law_tol)),
                  {"max_abs": b.law_residual}, cfg.tol(c.law_tol), inputs))
    rep.add(Check("a_signs", "a2 < 0 < a3", b.signs_ok,
                  {"a2": [d.a2 for d in b.deficits], "a3": [d.a3 for d in b.deficits]}, None, inputs))
    rep.add(Check("a_scalings", "|a2| <= C1 n^(-10/3) and a3 <= C1 n^(-11/3)", b.a_bounds_ok,
                  {"a2_scaled": [abs(d.a2) * d.n ** (10 / 3) for d in b.deficits],
                   "a3_scaled": [d.a3 * d.n ** (11 / 3) for d in b.deficits]}, b.c1_hat, inputs))
    rep.extras["interval_minima"] = {str(n): _interval_minima(co.build_chi(n), c.grid_size) for n in b.n_list}
    return rep


def _scenario(spec, rng: np.random.Generator) -> rf.ScenarioH:
    if isinstance(spec, dict):
        try:
            return rf.ScenarioH.from_json(spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario mapping: {exc}") from exc
    if spec == "default":
        return rf.ScenarioH.default()
    if spec == "trivial":
        return rf.ScenarioH.trivial()
    return rf.ScenarioH.random(rng)


def _random_point(rng: np.random.Generator, n: int) -> rf.ResolvedPoint:
    z = 2.0 * math.sqrt(rng.uniform()) * np.exp(2j * np.pi * rng.uniform())
    r = (1.0 + rng.uniform()) / n
    d = rng.normal(size=2) + 1j * rng.normal(size=2)
    return rf.ResolvedPoint.from_polar(z, r, d)


def _minors(E: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    m1 = E[..., 0, 0]
    m2 = E[..., 0, 0] * E[..., 1, 1] - E[..., 0, 1] * E[..., 1, 0]
    m3 = np.linalg.det(E)
    return m1.real, m2.real, m3.real


def cmd_positivity(cfg: RunConfig, out: Path, pmap: Callable) -> Report:
    q = cfg.positivity
    rep = Report("positivity", _echo(cfg))
    main_ss, oracle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    scen = _scenario(q.scenario, np.random.default_rng(main_ss))
    n0 = min(q.n_list)

    # chi = id near the zero section: Phi is the square of omega_co0 there
    chi = co.build_chi(n0)
    worst = 0.0
    for x in (0.2, 0.6, 0.95):
        for z in (0, 0.5 - 1j):
            p = rf.ResolvedPoint.from_polar(z, x / n0, (1, 1j))
            phi = fa.to_lambda22(rf.phi_form(n0, chi, p)).e
            w0 = rf.form_11(rf.omega_co0_matrix(p))
            sq = fa.to_lambda22(fa.wedge(w0, w0)).e
            worst = max(worst, float(np.max(np.abs(phi - sq)) / np.max(np.abs(sq))))
    rep.add(Check("phi_identity_region", "Phi = omega_co0^2 where chi = id", bool(worst <= cfg.tol(q.phi_tol)),
                  {"max_rel_error": worst}, cfg.tol(q.phi_tol), {"n": n0, "r_over_inv_n": [0.2, 0.6, 0.95]}))

    with rep.timed("c2"):
        c2 = {n: rf.measure_c2(n).c2_hat for n in q.n_list}
    var = (max(c2.values()) - min(c2.values())) / max(c2.values())
    rep.add(Check("c2_stable", "outer-region constant C2 independent of n", bool(var < q.c2_variation_tol),
                  {"c2_hat": {str(n): v for n, v in c2.items()}, "variation": var}, q.c2_variation_tol,
                  {"n_list": q.n_list}))

    # expansion oracle: default plus random scenarios at random annulus points
    orng = np.random.default_rng(oracle_ss)
    scenarios = [rf.ScenarioH.default()] + [rf.ScenarioH.random(orng) for _ in range(q.random_scenarios)]
    worst_rel, compared, typo, beyond = 0.0, 0, [], []
    with rep.timed("oracle"):
        for si, s in enumerate(scenarios):
            for _ in range(q.oracle_points):
                p = _random_point(orng, n0)
                cmp = rf.compare_expansion(s, n0, co.SIGMA, p, rtol=cfg.tol(q.match_rtol))
                compared += 1
                worst_rel = max(worst_rel, cmp.max_rel_error)
                for m in cmp.mismatches:
                    item = {"scenario": si, "point": [p.z, p.u, p.v], "entry": m.entry,
                            "printed": m.printed, "direct": m.direct, "rel_error": m.rel_error}
                    (typo if m.rel_error <= q.report_only_rtol else beyond).append(item)
    rep.extras["typo_candidates"] = typo + beyond
    rep.add(Check("expansion_oracle", "alpha-assembled Omega_0 matrix equals the direct wedge expansion",
                  not beyond, {"compared": compared, "max_rel_error": worst_rel, "mismatches": len(typo) + len(beyond),
                               "beyond_report_only": len(beyond)},
                  {"match": cfg.tol(q.match_rtol), "report_only": q.report_only_rtol},
                  {"n": n0, "scenarios": len(scenarios), "points_per_scenario": q.oracle_points}))

    with rep.timed("search"):
        res = rf.positivity_search(scen, q.n_list, q.density, co.SIGMA, q.kappa, q.c0_max)
    frontier = {
        "scenario": scen.to_json(),
        "c0_star": res.c0_star,
        "n_of_c0": res.n_of_c0,
        "grid_points": res.grid_points,
        "frontier": [
            {"n": n, "c0": res.c0_by_n[n], "c0_e": res.c0_e_by_n[n], "c0_form": res.c0_form_by_n[n],
             "c2_hat": res.c2_by_n[n], "c3_hat": res.c3_by_n[n], "outer_ok": res.outer_ok[n]}
            for n in sorted(res.n_list)
        ],
    }
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "frontier.json", jsonable(frontier))
    search_inputs = {"n_list": q.n_list, "density": q.density, "kappa": q.kappa}
    rep.add(Check("c0_found", "annulus positivity for some C0 below the bound", bool(res.c0_star < q.c0_bound),
                  {"c0_star": res.c0_star, "c3_hat": {str(n): v for n, v in res.c3_by_n.items()}},
                  q.c0_bound, search_inputs))
    rep.add(Check("c0_nonincreasing", "C0*(n) nonincreasing in n", res.nonincreasing,
                  {"c0_by_n": {str(n): res.c0_by_n[n] for n in sorted(res.n_list)}}, None, search_inputs))

    cert: dict = {}
    ok = res.n_of_c0 is not None
    if ok:
        n = res.n_of_c0
        grid = rf.annulus_grid(n, q.density)
        A, B = rf.e_matrix_parts(scen, n, co.SIGMA, grid, res.c3_by_n[n])
        m1, m2, m3 = _minors(res.c0_star * A + B)
        ok = bool(np.all(m1 > 0) and np.all(m2 > 0) and np.all(m3 > 0))
        cert = {"n": n, "points": len(grid), "min_minor_1": m1.min(), "min_minor_2": m2.min(),
                "min_minor_3": m3.min()}
    rep.add(Check("minor_certificate", "leading minors of [e_ij] positive on the annulus grid at n(C0*)", ok,
                  cert, None, search_inputs))
    rep.add(Check("outer_region", "Omega_0 positive on the outer region for n(C0*)", res.n_of_c0 is not None,
                  {"outer_ok": {str(n): v for n, v in res.outer_ok.items()}, "n_of_c0": res.n_of_c0},
                  None, search_inputs))
    return rep


def _guarded(pairs: Sequence[tuple[float, float]]) -> tuple[list, list]:
    keep, rejected = [], []
    for t, r2 in pairs:
        if r2 > t * (1 + dg.CURVATURE_GUARD):
            keep.append((t, r2))
        else:
            rejected.append({"t": t, "r2": r2, "reason": f"r2 <= t (1 + {dg.CURVATURE_GUARD:g})"})
    return keep, rejected


def cmd_curvature(cfg: RunConfig, out: Path, pmap: Callable) -> Report:
    k = cfg.curvature
    rep = Report("curvature", _echo(cfg))
    ratios = dg.ratio_grid(k.ratio_min, k.ratio_max, k.per_decade)
    base, rejected = _guarded([(t, float(ra * t)) for t in k.t_list for ra in ratios])
    extra, rej_extra = _guarded([(float(a), float(b)) for a, b in k.extra_r2])
    rejected += rej_extra
    rep.extras["rejected_points"] = rejected
    ext_t = sorted(set(k.t_list) | {min(k.t_list) / k.extend, max(k.t_list) * k.extend})
    ext_ratios = dg.ratio_grid(k.ratio_min, k.ratio_max * k.extend, k.per_decade)
    ext, _ = _guarded([(t, float(ra * t)) for t in ext_t for ra in ext_ratios])

    with rep.timed("curvature_grid"):
        rows = pmap(_curvature_row, base + extra + ext)
    nb = len(base) + len(extra)
    main_rows, ext_rows = rows[:nb], rows[nb:]
    write_csv(out / "curvature.csv", CURVATURE_COLUMNS,
              [[t, r2, r2 / t, r[0], r[1], r[2], r[4], r[5]] for (t, r2), r in zip(base + extra, main_rows)])

    arr = np.array(main_rows)
    c_base = float(arr[: len(base), 0].max()) if base else math.nan
    c_ext = float(np.array(ext_rows)[:, 0].max())
    drift = abs(c_ext - c_base) / c_base
    grid_inputs = {"t_list": k.t_list, "ratio": [k.ratio_min, k.ratio_max], "per_decade": k.per_decade,
                   "points": nb}
    rep.add(Check("curvature_sup_stable", "sup |R| r^(4/3) is a finite constant independent of the grid",
                  bool(math.isfinite(c_base) and drift < k.sup_variation_tol),
                  {"C_hat": c_base, "C_hat_extended": c_ext, "relative_change": drift},
                  k.sup_variation_tol, {**grid_inputs, "extend": k.extend}))
    rep.add(Check("ricci_flat", "Ricci trace of R vanishes", bool(arr[:, 1].max() < cfg.tol(k.ricci_tol)),
                  {"max_ricci_over_r_minus_4_3": arr[:, 1].max()}, cfg.tol(k.ricci_tol), grid_inputs))
    rep.add(Check("kahler_symmetries", "Kahler symmetries of R", bool(arr[:, 2].max() < cfg.tol(k.symmetry_tol)),
                  {"max_relative_defect": arr[:, 2].max()}, cfg.tol(k.symmetry_tol), grid_inputs))
    rep.add(Check("combined_identity", "closed form of the R_{1 3bar 1 3bar} combination",
                  bool(arr[:, 3].max() < cfg.tol(k.identity_tol)), {"max_relative_error": arr[:, 3].max()},
                  cfg.tol(k.identity_tol), grid_inputs))

    idx = sorted({int(round(x)) for x in np.linspace(0, len(base) - 1, k.oracle_points)}) if k.oracle_points else []
    opairs = [base[i] for i in idx]
    with rep.timed("fd_oracle"):
        odis = pmap(_oracle_row, opairs)
    worst = max(odis, default=0.0)
    rep.add(Check("fd_curvature_oracle", "curvature agrees with finite differences of the metric",
                  bool(worst < cfg.tol(k.oracle_tol)),
                  {"worst_relative": worst, "per_point": [{"t": t, "r2": r2, "rel": d} for (t, r2), d in
                                                          zip(opairs, odis)]},
                  cfg.tol(k.oracle_tol), {"floor": dg.CURVATURE_FLOOR}))

    # metric at q on the ODE sample grid, plus the curvature grid for volume
    samples = sample_grid(cfg.profile, cfg.seed)
    with rep.timed("metric_grid"):
        mrows = np.array(pmap(_metric_row, samples))
    rep.add(Check("metric_orthonormal", "the coframe at q is orthonormal: g(q) = I",
                  bool(mrows[:, 0].max() < cfg.tol(k.metric_tol)), {"max_abs": mrows[:, 0].max()},
                  cfg.tol(k.metric_tol), {"samples": len(samples), "seed": cfg.seed}))
    vol = np.concatenate([mrows[:, 1], arr[:, 4]])
    vol_err = float(np.max(np.abs(vol - 2 / 3)))
    rep.add(Check("volume_ratio", "vol_co / vol_e = (2/3) r^-2", bool(vol_err < cfg.tol(k.vol_tol)),
                  {"max_abs_error": vol_err}, cfg.tol(k.vol_tol), {"points": len(vol)}))
    g_base = float(arr[:, 5].max())
    g_ext = float(np.array(ext_rows)[:, 5].max())
    g_drift = abs(g_ext - g_base) / g_base
    rep.add(Check("gradient_comparison", "|grad f|_e^2 <= C r^(-2/3) |grad f|_co^2 with C independent of the grid",
                  bool(math.isfinite(g_base) and g_drift < k.grad_drift_tol),
                  {"grad_const_sup": g_base, "grad_const_sup_extended": g_ext,
                   "grad_const_min": float(arr[:, 5].min()), "relative_change": g_drift},
                  k.grad_drift_tol, grid_inputs))

    with rep.timed("s3_limit"):
        lims = [dg.s3_limit(t, k.s3_eps) for t in k.s3_t]
    for lim in lims:
        rel = abs(lim.limit - lim.expected) / lim.expected
        rep.add(Check(f"s3_limit_t{lim.t:g}", "metric on the vanishing S^3 tends to (1/2)(2t^2/3)^(1/3)",
                      bool(rel < cfg.tol(k.s3_tol)),
                      {"limit": lim.limit, "expected": lim.expected, "relative_error": rel,
                       "spread": lim.limit_spread, "eigenvalues": lim.eigenvalues},
                      cfg.tol(k.s3_tol), {"t": lim.t, "epsilons": lim.epsilons}))
    return rep


def cmd_report(inputs: Sequence[str], out: Path) -> dict:
    if not inputs:
        raise ConfigError("report needs at least one input file")
    docs = []
    seen: dict[str, int] = {}
    for name in inputs:
        path = Path(name)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        label = path.stem
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        docs.append((label, doc))
    try:
        merged = merge_reports(docs)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "merged_report.json", merged)
    return merged


COMMANDS = {"profile": cmd_profile, "cutoff": cmd_cutoff, "positivity": cmd_positivity, "curvature": cmd_curvature}


# ---------------------------------------------------------------------------
# argument handling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes (default: $CONIFOLD_LAB_JOBS or 1)")
    common.add_argument("--seed", type=int, help="random seed for sampling")
    common.add_argument("--tolerance-scale", type=float, help="multiply every tolerance by this factor")

    parser = _Parser(prog="conifold-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("profile", parents=[common], help="radial profiles: ODE, monotonicity, convergence")
    sub.add_parser("cutoff", parents=[common], help="cutoff function bounds")
    sub.add_parser("positivity", parents=[common], help="annulus positivity search and expansion oracle")
    sub.add_parser("curvature", parents=[common], help="deformed conifold metric and curvature")
    rp_ = sub.add_parser("report", parents=[common], help="merge report files into one verdict")
    rp_.add_argument("inputs", nargs="*", help="report JSON files (or report.inputs in the config)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    overrides["jobs"] = args.jobs if args.jobs is not None else (cfg.jobs if args.config else default_jobs())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.tolerance_scale is not None:
        overrides["tolerance_scale"] = args.tolerance_scale
    if args.out is not None:
        overrides["out"] = str(args.out)
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def _summary(doc: dict) -> str:
    s = doc["summary"]
    lines = [f"{doc['command']}: {doc['status'].upper()} ({s['passed']}/{s['checks']} checks)"]
    lines += [f"  failed: {cid}" for cid in s["failed"]]
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        if args.command == "report":
            doc = cmd_report(args.inputs or cfg.report.inputs, out)
        else:
            out.mkdir(parents=True, exist_ok=True)
            with parallel_map(cfg.jobs) as pmap:
                rep = COMMANDS[args.command](cfg, out, pmap)
            rep.write(out)
            doc = rep.to_dict()
    except (ConfigError, DomainError) as exc:
        print(f"conifold-lab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (VerificationError, SearchError) as exc:
        print(f"conifold-lab: verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(_summary(doc))
    return EXIT_OK if doc["status"] == "pass" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
