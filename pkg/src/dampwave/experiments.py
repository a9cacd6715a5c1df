"""One runner per experiment kind.

Every runner writes its CSV tables plus ``checks.csv`` (one row per gated
quantity: name, value, limit, relation) into the output directory and returns
the summary dictionary.  The verdict is the conjunction of the checks, so it
can be recomputed from the CSV files alone (see :func:`recheck`).
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .certificates import (
    RegionTag,
    Thresholds,
    block_scales,
    big_lambda,
    classify_region,
    mu_weight,
    quasimode_terms,
    sharpness_witness,
    slow_variation_probe,
    reduction_identity_residual,
)
from .config import ExperimentConfig
from .damping import DampingProfile, cross_strip, depends_only_on
from .geometry import gcc_certify
from .resolvent import (
    UnresolvedGridError,
    fit_exponent,
    fmt,
    omega_probes,
    p_lambda_sweep,
    read_sweep_csv,
    q0_branches,
    circle_sweep,
    write_summary,
)
from .spectral import to_modal, torus_grid
from .wave import default_data, dissipation_residual, trajectory, worst_case_decay

RELATIONS: dict[str, Callable[[float, float], bool]] = {
    "<=": lambda v, lim: v <= lim,
    ">=": lambda v, lim: v >= lim,
}


def profile_from_config(cfg: ExperimentConfig, ndim: int = 1) -> DampingProfile:
    """Damping profile described by the ``damping.*`` keys.

    ``strip`` without an explicit center is the perpendicular pair of strips
    through ``x = pi`` on the 2-torus, the shipped geometric-control example.
    """
    kind = cfg["damping.kind"]
    center = cfg["damping.center"]
    axes = tuple(cfg["damping.axes"]) if cfg["damping.axes"] is not None else None
    common = dict(eps0=cfg["damping.eps0"], amplitude=cfg["damping.amplitude"], floor=cfg["damping.floor"])
    if kind == "strip" and center is None:
        return cross_strip(cfg["damping.sharpness"], cfg["damping.amplitude"])
    if kind == "constant":
        return DampingProfile("constant", amplitude=cfg["damping.amplitude"])
    center = tuple(center) if center is not None else (0.0,) * ndim
    return DampingProfile(kind, gamma=cfg["damping.gamma"], center=center, axes=axes,
                          sharpness=cfg["damping.sharpness"], **common)


class Checks:
    def __init__(self):
        self.rows: list[tuple[str, float, float, str]] = []

    def add(self, name: str, value: float, limit: float, relation: str) -> bool:
        self.rows.append((name, float(value), float(limit), relation))
        return RELATIONS[relation](value, limit)

    @property
    def passed(self) -> bool:
        return all(RELATIONS[r](v, lim) for _, v, lim, r in self.rows)

    def write(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["check", "value", "limit", "relation", "passed"])
            for name, v, lim, r in self.rows:
                w.writerow([name, fmt(v), fmt(lim), r, int(RELATIONS[r](v, lim))])


def read_checks(path: Path) -> bool:
    with open(path, newline="") as fh:
        return all(RELATIONS[r["relation"]](float(r["value"]), float(r["limit"])) for r in csv.DictReader(fh))


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) else v for v in row])


def _summary(cfg: ExperimentConfig, checks: Checks, measured, target, tolerance, **extra) -> dict:
    delta = abs(measured - target) if measured is not None and target is not None else None
    return {
        "experiment": cfg.kind,
        "gamma": cfg["damping.gamma"] if cfg["damping.kind"] not in ("strip", "constant") else None,
        "measured_exponent": measured,
        "target_exponent": target,
        "tolerance": tolerance,
        "delta": delta,
        "passed": checks.passed,
        **extra,
    }


# --- runners -----------------------------------------------------------------

def run_resolvent_q0(cfg: ExperimentConfig, out: Path) -> dict:
    gamma = cfg["damping.gamma"]
    opts: dict[str, Any] = {"box": cfg["geometry.box"], "box_factor": cfg["geometry.box_factor"],
                            "box_min": cfg["geometry.box_min"], "modes": cfg["geometry.modes"]}
    if cfg["damping.kind"] != "radial-power":
        opts["damping"] = profile_from_config(cfg, 1)
    window = (cfg["params.fit_lo"], cfg["params.fit_hi"])
    sweep, rep = q0_branches(gamma, cfg["params.mu"], cfg["params.tol"], cfg["params.exponent_tol"], window,
                                    grid_opts=opts)
    sweep.write_csv(out / "sweep.csv")
    checks = Checks()
    checks.add("exponent_error", abs(rep.fitted_exponent - rep.target_exponent), rep.tolerance, "<=")
    checks.add("negative_branch_ratio", rep.negative_min_ratio, 1 - 1e-6, ">=")
    checks.add("middle_branch_min_sigma", rep.middle_min_sigma, 0.0, ">=")
    checks.write(out / "checks.csv")
    if not sweep.all_resolved:
        raise UnresolvedGridError("samples moved by 1% or more under grid doubling; see sweep.csv")
    return _summary(cfg, checks, rep.fitted_exponent, rep.target_exponent, rep.tolerance,
                    fit_window=list(window), fit_residual=sweep.fit_residual, parameter="mu")


def run_resolvent_1d(cfg: ExperimentConfig, out: Path) -> dict:
    gamma = cfg["damping.gamma"]
    delta = cfg["params.delta"]
    profile = profile_from_config(cfg, 1)
    sweep = circle_sweep(gamma, cfg["params.lambda"], lambda lam: omega_probes(lam, delta), profile, cfg["params.tol"])
    sweep.write_csv(out / "sweep.csv")
    rows = [(lam, om, s) for lam, pairs in sweep.extra["per_lambda"].items() for om, s in pairs]
    _write_rows(out / "omega.csv", ["lambda", "omega", "sigma_min"], rows)
    target = 1 / (gamma + 1)
    tol = cfg["params.exponent_tol"]
    checks = Checks()
    checks.add("exponent_error", abs(sweep.fitted_exponent - target), tol, "<=")
    top = sweep.extra.get("omega_top_exponent", float("nan"))
    checks.add("omega_top_exponent", top, cfg["params.top_min_slope"], ">=")
    checks.write(out / "checks.csv")
    if not sweep.all_resolved:
        raise UnresolvedGridError("samples moved by 1% or more under grid doubling; see sweep.csv")
    return _summary(cfg, checks, sweep.fitted_exponent, target, tol, fit_window=list(sweep.fit_window),
                    fit_residual=sweep.fit_residual, omega_top_exponent=top, parameter="lambda")


def run_gcc(cfg: ExperimentConfig, out: Path) -> dict:
    dims = tuple(cfg["geometry.dims"])
    ndim = sum(dims)
    profile = profile_from_config(cfg, 1)
    verdict = gcc_certify(profile, cfg["params.direction_count"], cfg["params.base_count"], cfg["params.t_max"], ndim,
                          cfg["params.eps"])
    verdict.write_csv(out / "witnesses.csv")
    checks = Checks()
    extra: dict[str, Any] = {"certified": verdict.satisfied, "max_hit_time": verdict.max_hit_time,
                             "witness_count": len(verdict.witnesses), "ray_count": verdict.ray_count}
    if verdict.satisfied:
        target, tol = 1.0, cfg["params.exponent_tol"] or 0.1
    elif depends_only_on(profile, tuple(range(dims[0]))) and profile.is_power:
        target, tol = 1 / (profile.gamma + 1), cfg["params.exponent_tol"] or 0.07
    else:
        checks.add("certified", 0.0, 1.0, ">=")
        checks.write(out / "checks.csv")
        return _summary(cfg, checks, None, None, None, **extra)
    sweep = p_lambda_sweep(profile, cfg["params.lambda"], dims, cfg["params.tol"])
    sweep.write_csv(out / "sweep.csv")
    checks.add("exponent_error", abs(sweep.fitted_exponent - target), tol, "<=")
    checks.write(out / "checks.csv")
    if not sweep.all_resolved:
        raise UnresolvedGridError("samples moved by 1% or more under grid doubling; see sweep.csv")
    return _summary(cfg, checks, sweep.fitted_exponent, target, tol, fit_window=list(sweep.fit_window),
                    fit_residual=sweep.fit_residual, parameter="lambda", **extra)


def run_simulate(cfg: ExperimentConfig, out: Path) -> dict:
    dims = tuple(cfg["geometry.dims"])
    grid = torus_grid([cfg["geometry.modes"]] * sum(dims), split_dims=dims)
    profile = profile_from_config(cfg, 1)
    state = default_data(grid, cfg["params.bump_center"], cfg["params.bump_width"])
    dt, horizon = cfg["params.dt"], cfg["params.horizon"]
    traj = trajectory(state, dt, horizon, profile, energy_tol=math.inf)
    stride = max(1, int(round(cfg["params.stride"] / dt)))
    idx = np.arange(0, len(traj.times), stride)
    _write_rows(out / "energy.csv", ["t", "E", "sqrtE"],
                [(float(traj.times[i]), float(traj.energies[i]), float(math.sqrt(traj.energies[i]))) for i in idx])
    e0 = traj.energies[0]
    residual = dissipation_residual(traj)
    growth = float(np.max(np.diff(traj.energies), initial=0.0)) / dt / e0 if e0 else 0.0
    checks = Checks()
    checks.add("dissipation_residual_per_time", residual / horizon, cfg["params.residual_tol"], "<=")
    checks.add("energy_growth_per_time", growth, cfg["params.energy_tol"], "<=")
    extra: dict[str, Any] = {"dissipation_residual": residual, "horizon": horizon, "dt": dt,
                             "final_energy_ratio": float(traj.energies[-1] / e0) if e0 else 0.0}
    if cfg["params.order_check"]:
        w = cfg["params.order_window"]
        r1 = dissipation_residual(trajectory(state, dt, w, profile, energy_tol=math.inf))
        r2 = dissipation_residual(trajectory(state, dt / 2, w, profile, energy_tol=math.inf))
        order = math.log2(r1 / r2) if r2 > 0 and r1 > 0 else float("nan")
        extra["observed_order"] = order
        checks.add("observed_order_low", order, 1.8, ">=")
        checks.add("observed_order_high", order, 2.2, "<=")
    measured = target = None
    if cfg["params.decay"] and profile.is_power:
        k_values = np.unique(np.round(np.geomspace(1, cfg["params.decay_k_max"], 50)).astype(int))
        times = np.arange(1.0, cfg["params.decay_horizon"] + 0.5, 1.0)
        decay = worst_case_decay(profile, times, k_values)
        decay.write_csv(out / "decay.csv")
        measured = decay.exponent
        target = -(1 + 1 / profile.gamma)
        extra["decay_window"] = [cfg["params.decay_window_lo"], cfg["params.decay_window_hi"]]
        extra["decay_in_window"] = bool(cfg["params.decay_window_lo"] <= measured <= cfg["params.decay_window_hi"])
        extra["decay_gating"] = False
    checks.write(out / "checks.csv")
    return _summary(cfg, checks, measured, target, None, **extra)


def run_quasimode(cfg: ExperimentConfig, out: Path) -> dict:
    gamma = cfg["damping.gamma"]
    profile = profile_from_config(cfg, 1)
    terms = [quasimode_terms(k, gamma, profile, cutoff=cfg["params.cutoff"], eps0=cfg["damping.eps0"])
             for k in cfg["params.k"]]
    _write_rows(out / "quasimode.csv", ["k", "ratio", "laplacian_term", "damping_term"],
                [(t.k, t.ratio, t.laplacian_term, t.damping_term) for t in terms])
    ratios = [t.ratio for t in terms]
    checks = Checks()
    checks.add("ratio_spread", max(ratios) / min(ratios), cfg["params.ratio_tol"], "<=")
    checks.write(out / "checks.csv")
    target = 1 / (gamma + 1)
    measured = None
    if len(terms) >= 5:
        measured = fit_exponent([(t.k, t.ratio * t.k**target) for t in terms])[0]
    return _summary(cfg, checks, measured, target, None, parameter="k")


def run_sharpness(cfg: ExperimentConfig, out: Path) -> dict:
    gamma = cfg["damping.gamma"]
    mus = cfg["params.mu"]
    ratios = [sharpness_witness(m, gamma) for m in mus]
    _write_rows(out / "sharpness.csv", ["mu", "ratio"], list(zip(mus, ratios)))
    med = float(np.median(ratios))
    checks = Checks()
    checks.add("max_over_median", max(ratios) / med, cfg["params.spread_tol"], "<=")
    checks.add("median_over_min", med / min(ratios), cfg["params.spread_tol"], "<=")
    checks.write(out / "checks.csv")
    target = gamma / (2 * gamma + 1)
    measured = fit_exponent([(m, r * m**target) for m, r in zip(mus, ratios)])[0] if len(mus) >= 5 else None
    return _summary(cfg, checks, measured, target, None, parameter="mu")


def shell_samples(lam: float, count: int, rng: np.random.Generator, width: float = 0.125):
    """Points near ``{|xi| = lam}`` spread over all scales of ``x'`` and ``xi'`` (one primed dimension)."""
    x_p = np.exp(rng.uniform(math.log(1e-2 / lam), 0.0, count)) * rng.choice([-1.0, 1.0], count)
    xi_p = np.exp(rng.uniform(math.log(1e-3), math.log(lam), count)) * rng.choice([-1.0, 1.0], count)
    shell = lam**2 * (1 + rng.uniform(-width, width, count) * 0.999)
    xi_pp = np.sqrt(np.maximum(shell - xi_p**2, 0.0)) * rng.choice([-1.0, 1.0], count)
    return x_p, xi_p, xi_pp


def run_regions(cfg: ExperimentConfig, out: Path) -> dict:
    gamma = cfg["damping.gamma"]
    rng = np.random.default_rng(cfg["seed"])
    th = Thresholds(small=cfg["params.threshold"], x_gcc=cfg["params.threshold"], char_eps=cfg["params.threshold"])
    lams = cfg["params.lambda"]
    per = cfg["params.samples"] // len(lams)
    counts = {t.name: 0 for t in RegionTag}
    table = []
    failures = 0
    for lam in lams:
        x_p, xi_p, xi_pp = shell_samples(lam, per, rng, th.char_eps)
        for a, b, c in zip(x_p, xi_p, xi_pp):
            try:
                tag = classify_region(a, b, c, lam, gamma, th)
            except ValueError:
                failures += 1
                continue
            counts[tag.name] += 1
            if len(table) < cfg["params.table_rows"]:
                table.append((float(lam), float(a), float(b), float(c), tag.name))
    _write_rows(out / "regions.csv", ["lambda", "x_p", "xi_p", "xi_pp", "tag"], table)
    n = cfg["params.metric_samples"]
    xi = np.exp(rng.uniform(0.0, math.log(1e6), (n, 1))) * rng.standard_normal((n, 2))
    mu = mu_weight(xi[:, :1], xi[:, 1:], gamma)
    big = big_lambda(xi[:, :1], xi[:, 1:])
    s = block_scales(xi[:, :1], xi[:, 1:], gamma)
    prod_mu = float(np.max(np.abs(s[0] * s[1] / mu**2 - 1)))
    prod_lam = float(np.max(np.abs(s[2] * s[3] / big**2 - 1)))
    c1 = slow_variation_probe(gamma, cfg["params.probe_samples"], cfg["params.r"], cfg["seed"])
    c10 = slow_variation_probe(gamma, 10 * cfg["params.probe_samples"], cfg["params.r"], cfg["seed"] + 1)
    checks = Checks()
    checks.add("classification_failures", failures, 0, "<=")
    checks.add("classified_total", sum(counts.values()), per * len(lams), ">=")
    checks.add("min_mu_weight", float(mu.min()), 1.0, ">=")
    checks.add("max_mu_over_two_lambda", float(np.max(mu / (2 * big))), 1.0, "<=")
    checks.add("xi_prime_block_product_error", prod_mu, 1e-12, "<=")
    checks.add("xi_second_block_product_error", prod_lam, 1e-12, "<=")
    checks.add("slow_variation_drift", abs(c10 - c1) / c1, 0.05, "<=")
    checks.write(out / "checks.csv")
    return _summary(cfg, checks, None, None, None, region_counts=counts, slow_variation_constant=c1,
                    slow_variation_constant_10x=c10)


def run_reduce_check(cfg: ExperimentConfig, out: Path) -> dict:
    dims = tuple(cfg["geometry.dims"])
    grid = torus_grid([cfg["geometry.modes"]] * sum(dims), split_dims=dims)
    profile = profile_from_config(cfg, 1)
    rng = np.random.default_rng(cfg["seed"])
    res = []
    for _ in range(cfg["params.count"]):
        u = to_modal(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        res.append(reduction_identity_residual(u, cfg["params.lambda"], profile))
    _write_rows(out / "reduction.csv", ["index", "residual"], [(i, float(r)) for i, r in enumerate(res)])
    checks = Checks()
    checks.add("max_residual", max(res), cfg["params.tol"], "<=")
    checks.write(out / "checks.csv")
    return _summary(cfg, checks, None, None, None, max_residual=max(res))


RUNNERS: dict[str, Callable[[ExperimentConfig, Path], dict]] = {
    "resolvent-q0": run_resolvent_q0,
    "resolvent-1d": run_resolvent_1d,
    "gcc": run_gcc,
    "simulate": run_simulate,
    "quasimode": run_quasimode,
    "sharpness": run_sharpness,
    "regions": run_regions,
    "reduce-check": run_reduce_check,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> dict:
    """Run one configured experiment and write ``summary.json`` next to its CSVs."""
    out = Path(out_dir if out_dir is not None else cfg["output.dir"])
    out.mkdir(parents=True, exist_ok=True)
    summary = RUNNERS[cfg.kind](cfg, out)
    write_summary(out / "summary.json", summary)
    return summary


def recheck(out_dir: str | os.PathLike) -> bool:
    """Recompute the verdict from the CSVs: refit sweeps, then re-evaluate ``checks.csv``."""
    out = Path(out_dir)
    with open(out / "summary.json") as fh:
        summary = json.load(fh)
    ok = read_checks(out / "checks.csv")
    if (out / "sweep.csv").exists() and summary.get("tolerance") is not None:
        sweep = read_sweep_csv(out / "sweep.csv")
        slope = sweep.fit(tuple(summary["fit_window"])).fitted_exponent
        ok = ok and abs(slope - summary["target_exponent"]) <= summary["tolerance"]
    return ok
