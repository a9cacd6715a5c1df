"""Smallest singular values, parameter sweeps and log-log exponent fits."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .damping import DampingProfile, depends_only_on
from .operators import OperatorSpec, assemble
from .spectral import PERIODIC, box_grid, make_grid

log = logging.getLogger(__name__)

WORKERS_ENV = "DAMPWAVE_WORKERS"


class ConvergenceError(RuntimeError):
    """Inverse iteration did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, iterations=None):
        super().__init__(message)
        self.estimate = estimate
        self.iterations = iterations


class UnresolvedGridError(RuntimeError):
    """A sample moved by more than the allowed amount under grid refinement."""


# --- sigma_min ---------------------------------------------------------------

def _factor(matrix):
    if sp.issparse(matrix):
        lu = spla.splu(sp.csc_matrix(matrix, dtype=complex))
        return lu.solve, lambda b: lu.solve(b, trans="H")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(np.asarray(matrix, dtype=complex), check_finite=False)
    if np.any(np.diag(lu[0]) == 0):
        raise sla.LinAlgError("exactly singular matrix")
    return (lambda b: sla.lu_solve(lu, b, check_finite=False),
            lambda b: sla.lu_solve(lu, b, trans=2, check_finite=False))


def inverse_iteration(matrix, tol: float = 1e-6, max_iter: int = 200) -> tuple[float, int]:
    """``sigma_min`` by Krylov-accelerated inverse iteration on ``A^* A``.

    ``(A^* A)^{-1}`` is applied through one LU factorization of ``A`` and its
    largest eigenvalue is found by Lanczos (ARPACK) from the all-ones start
    vector.  Plain power iteration stalls when the bottom singular values
    cluster, as they do for ``Q0 - mu`` with ``mu << 0``.  Returns
    ``(sigma, number of inner solves)``.
    """
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("matrix must be square")
    if n <= 8:
        a = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        return float(sla.svdvals(a).min()), 0
    try:
        solve, solve_h = _factor(matrix)
    except (RuntimeError, sla.LinAlgError):
        return 0.0, 0
    count = [0]

    def matvec(x):
        count[0] += 1
        with np.errstate(all="ignore"):
            return solve(solve_h(x))

    op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
    v0 = np.ones(n, dtype=complex)
    try:
        theta, vec = spla.eigsh(op, k=1, which="LM", v0=v0, tol=tol * 1e-2, maxiter=max_iter,
                                ncv=min(n - 1, 20))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError(f"sigma_min did not converge in {max_iter} restarts", None, max_iter) from exc
    theta = float(np.real(theta[0]))
    if not np.isfinite(theta) or theta <= 0:
        return 0.0, count[0]
    # polish with the true residual norm of the returned vector
    q = vec[:, 0] / np.linalg.norm(vec[:, 0])
    return min(float(np.linalg.norm(matrix @ q)), 1.0 / math.sqrt(theta)), count[0]


def dense_sigma_min(matrix) -> float:
    """Oracle: smallest singular value from a full SVD."""
    a = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
    return float(sla.svdvals(a).min())


def _block_spec(spec: OperatorSpec, k2: float) -> OperatorSpec:
    sub = spec.grid.primed_grid()
    return OperatorSpec("P_lambda_omega", spec.lam, spec.damping, sub, omega=spec.lam**2 - k2)


def reducible(spec: OperatorSpec) -> bool:
    g = spec.grid
    return (
        spec.family == "P_lambda"
        and g.split_dims[0] >= 1
        and g.split_dims[1] >= 1
        and depends_only_on(spec.damping, g.primed_axes)
    )


def sigma_min_reduced(spec: OperatorSpec, tol: float = 1e-6, max_iter: int = 200) -> tuple[float, int]:
    """``sigma_min(P_lambda)`` through the torus-mode decomposition.

    With ``b`` independent of ``x''`` the operator is block diagonal with
    blocks ``P_{lambda, lambda^2 - |k|^2}`` on ``M'``.  Blocks with
    ``omega < 0`` satisfy ``sigma >= |omega|`` and are skipped once that bound
    exceeds the running minimum.
    """
    g = spec.grid
    k2 = sorted(set(np.round(g.k_squared_on(g.torus_axes)[(0,) * g.split_dims[0]].ravel(), 12)))
    k2 = sorted(k2, key=lambda q: abs(spec.lam**2 - q))
    best, iters = np.inf, 0
    for q in k2:
        omega = spec.lam**2 - q
        if omega < 0 and -omega >= best:
            continue
        s, it = inverse_iteration(assemble(_block_spec(spec, q)), tol, max_iter)
        iters += it
        best = min(best, s)
    return float(best), iters


def sigma_min(target, tol: float = 1e-6, max_iter: int = 200, reduce: bool | str = "auto") -> float:
    """Smallest singular value of an :class:`OperatorSpec` or a matrix."""
    return sigma_min_info(target, tol, max_iter, reduce)[0]


def sigma_min_info(target, tol: float = 1e-6, max_iter: int = 200, reduce: bool | str = "auto") -> tuple[float, int]:
    if not 0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")
    if isinstance(target, OperatorSpec):
        if reduce is True or (reduce == "auto" and reducible(target)):
            if not reducible(target):
                raise ValueError("reduction needs P_lambda with x''-independent damping")
            return sigma_min_reduced(target, tol, max_iter)
        target = assemble(target)
    return inverse_iteration(target, tol, max_iter)


# --- sweeps ------------------------------------------------------------------

@dataclass
class Sample:
    parameter: float
    sigma_min: float
    iters: int
    resolved: bool = True
    coarse_sigma: float | None = None


@dataclass
class SweepResult:
    parameter_name: str
    samples: list[Sample]
    fitted_exponent: float = float("nan")
    fit_residual: float = float("nan")
    fit_window: tuple[float, float] = (0.0, float("inf"))
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = sorted(self.samples, key=lambda s: s.parameter)

    @property
    def parameters(self) -> np.ndarray:
        return np.array([s.parameter for s in self.samples])

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s.sigma_min for s in self.samples])

    @property
    def all_resolved(self) -> bool:
        return all(s.resolved for s in self.samples)

    def fit(self, window: tuple[float, float] | None = None) -> "SweepResult":
        window = self.fit_window if window is None else window
        pts = [(s.parameter, s.sigma_min) for s in self.samples]
        self.fitted_exponent, self.fit_residual = fit_exponent(pts, window)
        self.fit_window = (float(window[0]), float(window[1]))
        return self

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["parameter", "sigma_min", "iters", "resolved_flag"])
            for s in self.samples:
                w.writerow([fmt(s.parameter), fmt(s.sigma_min), s.iters, int(s.resolved)])

    def summary(self) -> dict:
        return {
            "parameter_name": self.parameter_name,
            "fitted_exponent": self.fitted_exponent,
            "residual": self.fit_residual,
            "window": list(self.fit_window),
            "all_resolved": self.all_resolved,
            **self.extra,
        }


def fmt(x: float) -> str:
    """Reals in the CSV dialect: 17 significant digits."""
    return f"{x:.17g}"


def read_sweep_csv(path, parameter_name: str = "parameter") -> SweepResult:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    samples = [Sample(float(r["parameter"]), float(r["sigma_min"]), int(r["iters"]), bool(int(r["resolved_flag"]))) for r in rows]
    return SweepResult(parameter_name, samples)


def fit_exponent(samples: Iterable[tuple[float, float]], window: tuple[float, float] = (0.0, math.inf)) -> tuple[float, float]:
    """Least-squares slope of ``log sigma`` against ``log parameter``.

    Only samples with ``window[0] <= parameter <= window[1]`` count.  Returns
    ``(slope, rms deviation of the fit in log space)``.
    """
    lo, hi = window
    pts = np.array([(p, s) for p, s in samples if lo <= p <= hi], dtype=float).reshape(-1, 2)
    if len(pts) < 5:
        raise ValueError(f"need at least 5 samples in the fit window, got {len(pts)}")
    if np.any(pts <= 0):
        raise ValueError("log-log fit needs positive parameters and values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), resid


def worker_count(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, default)))
    except ValueError:
        return default


def parallel_map(func: Callable, items: Sequence, workers: int | None = None) -> list:
    """Order-preserving map, over a process pool when more than one worker is asked for."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def resolved_sigma(make_spec: Callable[[int], OperatorSpec], tol: float = 1e-6, rtol: float = 0.01) -> Sample:
    """``sigma_min`` on a grid and on its refinement (``make_spec(level)``).

    The refined value is reported; the sample is flagged unresolved when the
    two differ by ``rtol`` or more (relative).
    """
    coarse, it0 = sigma_min_info(make_spec(0), tol)
    fine, it1 = sigma_min_info(make_spec(1), tol)
    ok = abs(fine - coarse) < rtol * max(abs(fine), 1e-300)
    return Sample(float("nan"), fine, it0 + it1, ok, coarse)


# --- Q0 on R^d: the three branches -------------------------------------------

def q0_box_length(mu: float, gamma: float, factor: float = 8.0, minimum: float = 20.0) -> float:
    """Box side ``max(factor nu^{1/(2g+1)}, minimum)`` with ``nu = |mu|^{1/2}``.

    ``nu^{1/(2g+1)}`` is the spatial scale of the near-minimizers of
    ``||(Q0 - mu) u||``.
    """
    nu = math.sqrt(abs(mu))
    return max(factor * nu ** (1 / (2 * gamma + 1)), minimum)


def _even_up(n: float, quantum: int = 32) -> int:
    return int(quantum * math.ceil(n / quantum))


def q0_modes(mu: float, gamma: float, length: float) -> int:
    """Mode count with ``k_max >= 3 nu + 12`` and at least 128 modes."""
    nu = math.sqrt(max(mu, 0.0))
    kmax = 3 * nu + 12
    return max(128, _even_up(kmax * length / math.pi))


def q0_spec(mu: float, gamma: float, level: int = 0, dim: int = 1, box: float | None = None,
            box_factor: float = 8.0, box_min: float = 20.0, modes: int | None = None,
            damping: DampingProfile | None = None) -> OperatorSpec:
    """``Q0 - mu`` on a box, refined ``level`` times.

    ``W`` is the homogeneous extension of ``damping``, by default
    ``|x|^{2 gamma}``.  The box side is ``box`` when given, else
    :func:`q0_box_length` with the stated factor and minimum.  Each level
    doubles the box side and halves the grid spacing, so the mode count
    grows fourfold.
    """
    length = box if box is not None else q0_box_length(mu, gamma, box_factor, box_min)
    n = modes if modes is not None else q0_modes(mu, gamma, length)
    grid = box_grid(n * 4**level, length * 2**level, dim)
    w = damping or DampingProfile("radial-power", gamma=gamma, center=(0.0,) * dim)
    return OperatorSpec("Q0", 1.0, w, grid, mu=mu)


def _q0_sample(args) -> Sample:
    mu, gamma, tol, grid_opts = args
    s = resolved_sigma(lambda lvl: q0_spec(mu, gamma, lvl, **grid_opts), tol)
    s.parameter = mu
    return s


@dataclass
class BranchReport:
    gamma: float
    target_exponent: float
    fitted_exponent: float
    negative_min_ratio: float
    middle_min_sigma: float
    negative_ok: bool
    middle_ok: bool
    positive_ok: bool
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.negative_ok and self.middle_ok and self.positive_ok


def q0_branches(gamma: float, mu_grid: Sequence[float], tol: float = 1e-6, exponent_tol: float = 0.05,
                       fit_window: tuple[float, float] = (10.0, 1e3), workers: int | None = None,
                       grid_opts: dict | None = None) -> tuple[SweepResult, BranchReport]:
    """Sweep ``sigma_min(Q0 - mu)`` and check the three regimes of the lower bound.

    * ``mu <= -1``: ``sigma_min >= |mu|`` (reported as the ratio ``sigma/|mu|``);
    * ``|mu| <= 1``: ``sigma_min`` bounded below by a positive constant;
    * ``mu >= 10``: log-log slope against ``gamma / (2 gamma + 1)``.

    ``grid_opts`` is forwarded to :func:`q0_spec` (box side, box rule, modes,
    damping profile).
    """
    mus = sorted(float(m) for m in mu_grid)
    if not (min(mus) <= -100 and any(-1 <= m <= 1 for m in mus) and max(mus) >= 1000):
        raise ValueError("mu_grid must reach mu <= -100, touch [-1, 1] and reach mu >= 1000")
    samples = parallel_map(_q0_sample, [(m, gamma, tol, grid_opts or {}) for m in mus], workers)
    if not all(s.resolved for s in samples):
        bad = [s.parameter for s in samples if not s.resolved]
        log.warning("unresolved samples at mu=%s", bad)
    sweep = SweepResult("mu", samples, fit_window=fit_window)
    pos = [s for s in sweep.samples if fit_window[0] <= s.parameter <= fit_window[1]]
    sweep.fit()
    target = gamma / (2 * gamma + 1)
    neg = [s.sigma_min / abs(s.parameter) for s in sweep.samples if s.parameter <= -1]
    mid = [s.sigma_min for s in sweep.samples if -1 <= s.parameter <= 1]
    report = BranchReport(
        gamma=gamma,
        target_exponent=target,
        fitted_exponent=sweep.fitted_exponent,
        negative_min_ratio=min(neg),
        middle_min_sigma=min(mid),
        negative_ok=min(neg) >= 1 - 1e-6,
        middle_ok=min(mid) > 0,
        positive_ok=abs(sweep.fitted_exponent - target) <= exponent_tol and all(s.resolved for s in pos),
        tolerance=exponent_tol,
    )
    sweep.extra.update(target_exponent=target, tolerance=exponent_tol)
    return sweep, report


# --- P_{lambda, omega} on the circle -----------------------------------------

def omega_probes(lam: float, delta: float = 0.125) -> np.ndarray:
    """Deterministic probe set: five anchors plus 8 log-spaced interior points of ``(0, lam^2)``."""
    anchors = [0.0, delta * lam**2 / 2, delta * lam**2, (1 - delta / 2) * lam**2, lam**2]
    interior = np.geomspace(1.0, lam**2, 10)[1:-1]
    return np.unique(np.concatenate([anchors, interior]))


def circle_modes(lam: float) -> int:
    """Mode count on ``T^1`` with ``k_max >= 2 lam + 32``."""
    return max(128, _even_up(2 * (2 * lam + 32)))


def p_lambda_omega_spec(lam: float, omega: float, damping: DampingProfile, level: int = 0, modes: int | None = None) -> OperatorSpec:
    n = (modes or circle_modes(lam)) * 2**level
    grid = make_grid((1, 0), [n], [2 * np.pi], PERIODIC)
    return OperatorSpec("P_lambda_omega", lam, damping, grid, omega=omega)


def _circle_sample(args):
    lam, omega, damping, tol = args
    s = resolved_sigma(lambda lvl: p_lambda_omega_spec(lam, omega, damping, lvl), tol)
    s.parameter = lam
    return omega, s


def circle_sweep(gamma: float, lam_grid: Sequence[float], omega_sampler: Callable[[float], Iterable[float]] | None = None,
                    damping: DampingProfile | None = None, tol: float = 1e-6, fit_window: tuple[float, float] | None = None,
                    workers: int | None = None) -> SweepResult:
    """Worst-over-``omega`` ``sigma_min(P_{lambda,omega})`` on the circle against ``lambda``.

    ``extra['per_omega']`` keeps every probe value, keyed by the probe's
    position in the sampler output, so the ``omega = lambda^2`` column can be
    fitted separately.
    """
    damping = damping or DampingProfile("periodic-power", gamma=gamma)
    sampler = omega_sampler or omega_probes
    lams = sorted(float(x) for x in lam_grid)
    jobs = [(lam, float(om), damping, tol) for lam in lams for om in sampler(lam)]
    results = parallel_map(_circle_sample, jobs, workers)
    per_lam: dict[float, list] = {}
    for (lam, om, _, _), (_, s) in zip(jobs, results):
        per_lam.setdefault(lam, []).append((om, s))
    samples = []
    at_top = []
    for lam in lams:
        pairs = per_lam[lam]
        worst_om, worst = min(pairs, key=lambda p: p[1].sigma_min)
        samples.append(Sample(lam, worst.sigma_min, sum(p[1].iters for p in pairs), all(p[1].resolved for p in pairs)))
        top = [s for om, s in pairs if om == lam**2]
        if top:
            at_top.append((lam, top[0].sigma_min))
    window = fit_window or (min(lams), max(lams))
    sweep = SweepResult("lambda", samples, fit_window=window).fit()
    sweep.extra.update(
        target_exponent=1 / (gamma + 1),
        per_lambda={lam: [(om, s.sigma_min) for om, s in per_lam[lam]] for lam in lams},
        omega_top=at_top,
    )
    if len(at_top) >= 5:
        sweep.extra["omega_top_exponent"] = fit_exponent(at_top, window)[0]
    return sweep


# --- P_lambda on the torus ---------------------------------------------------

def torus_modes(lam: float, quantum: int = 16) -> int:
    return max(32, _even_up(2 * (lam + 8), quantum))


def p_lambda_spec(lam: float, damping: DampingProfile, dims: tuple[int, int] = (1, 1), level: int = 0,
                  modes: int | None = None) -> OperatorSpec:
    n = (modes or torus_modes(lam)) * 2**level
    d = sum(dims)
    grid = make_grid(dims, [n] * d, [2 * np.pi] * d, PERIODIC)
    return OperatorSpec("P_lambda", lam, damping, grid)


def _pl_sample(args):
    lam, damping, dims, tol, modes = args
    s = resolved_sigma(lambda lvl: p_lambda_spec(lam, damping, dims, lvl, modes), tol)
    s.parameter = lam
    return s


def p_lambda_sweep(damping: DampingProfile, lam_grid: Sequence[float], dims: tuple[int, int] = (1, 1), tol: float = 1e-6,
                   fit_window: tuple[float, float] | None = None, modes: int | None = None, workers: int | None = None) -> SweepResult:
    """``sigma_min(P_lambda)`` on the flat torus against ``lambda``."""
    lams = sorted(float(x) for x in lam_grid)
    samples = parallel_map(_pl_sample, [(lam, damping, dims, tol, modes) for lam in lams], workers)
    window = fit_window or (min(lams), max(lams))
    return SweepResult("lambda", samples, fit_window=window).fit()


def gcc_resolvent_check(profile: DampingProfile, lam_grid: Sequence[float], dims: tuple[int, int] = (1, 1),
                        tol: float = 1e-6, certify: bool = True, **kwargs) -> SweepResult:
    """Sweep ``sigma_min(P_lambda)`` for a profile that satisfies geometric control.

    With ``certify`` the profile is first run through the ray certifier; a
    violation raises ``ValueError``.
    """
    if certify:
        from .geometry import gcc_certify

        verdict = gcc_certify(profile, ndim=sum(dims))
        if not verdict.satisfied:
            raise ValueError(f"profile is not certified: {len(verdict.witnesses)} undamped witness rays")
    sweep = p_lambda_sweep(profile, lam_grid, dims, tol, **kwargs)
    sweep.extra["target_exponent"] = 1.0
    return sweep


def write_summary(path, data: dict) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o))

    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=default)
