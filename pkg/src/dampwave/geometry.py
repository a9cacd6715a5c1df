"""Straight-line geodesic flow on flat tori and geometric-control certification.

The flow is the Hamiltonian flow of ``|xi|^2``, so points move at speed 2:
``phi_t(x, xi) = (x + 2 t xi, xi)``.  Certification scans a deterministic
lattice of rays over a finite horizon; a ray that has not entered the damped
region by then is reported as a witness of failure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .damping import DampingProfile, feature_size, omega_b
from .resolvent import fmt, parallel_map

TWO_PI = 2 * np.pi
SNAP = 1e-12


def _snap(values: np.ndarray) -> np.ndarray:
    return np.where(np.abs(values) < SNAP, 0.0, values)


def _wrap(x: np.ndarray) -> np.ndarray:
    """Reduce to ``[0, 2 pi)``; ``np.mod`` can round tiny negatives up to ``2 pi``."""
    x = np.mod(x, TWO_PI)
    return np.where(x >= TWO_PI, 0.0, x)


@dataclass(frozen=True)
class PhasePoint:
    """A point of the cosphere bundle of the flat torus ``(R / 2 pi Z)^d``.

    ``xi`` is normalized to unit length and ``x`` reduced to ``[0, 2 pi)`` on
    construction.
    """

    x: tuple[float, ...]
    xi: tuple[float, ...]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        if x.shape != xi.shape or x.ndim != 1 or x.size == 0:
            raise ValueError("x and xi must be non-empty vectors of equal length")
        n = float(np.linalg.norm(xi))
        if n == 0:
            raise ValueError("xi must be non-zero")
        object.__setattr__(self, "x", tuple(float(v) for v in _wrap(x)))
        object.__setattr__(self, "xi", tuple(float(v) for v in _snap(xi / n)))

    @property
    def ndim(self) -> int:
        return len(self.x)


def flow(p: PhasePoint, t: float) -> PhasePoint:
    """Geodesic flow at speed 2; exact, no integrator.  ``xi`` is carried over untouched."""
    x = _wrap(np.asarray(p.x) + 2.0 * t * np.asarray(p.xi))
    out = object.__new__(PhasePoint)
    object.__setattr__(out, "x", tuple(float(v) for v in x))
    object.__setattr__(out, "xi", p.xi)
    return out


Predicate = Callable[..., np.ndarray]


def _positions(x0: np.ndarray, xi: np.ndarray, t: np.ndarray) -> list[np.ndarray]:
    """Coordinates of rays ``x0 + 2 t xi`` (rays along axis 0, times along axis 1)."""
    return [np.mod(x0[:, a, None] + 2.0 * xi[:, a, None] * t[None, :], TWO_PI) for a in range(x0.shape[1])]


def _bisect(x0, xi, region: Predicate, lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    """Shrink ``[lo, hi]`` (``lo`` outside, ``hi`` inside) to width ``tol`` per ray."""
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        coords = [np.mod(x0[:, a] + 2.0 * xi[:, a] * mid, TWO_PI) for a in range(x0.shape[1])]
        inside = np.asarray(region(*coords), dtype=bool)
        hi = np.where(inside, mid, hi)
        lo = np.where(inside, lo, mid)
    return hi


def hit_times(x0: np.ndarray, xi: np.ndarray, region: Predicate, t_max: float, dt_scan: float,
              tol: float = 1e-9, chunk: int = 512) -> np.ndarray:
    """Vectorized first hit times for many rays; ``nan`` where no hit up to ``t_max``."""
    if not t_max > 0 or not dt_scan > 0:
        raise ValueError("t_max and dt_scan must be positive")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    nsteps = int(math.ceil(t_max / dt_scan))
    t = np.minimum(np.arange(nsteps + 1) * dt_scan, t_max)
    out = np.full(len(x0), np.nan)
    for start in range(0, len(x0), chunk):
        sl = slice(start, start + chunk)
        inside = np.asarray(region(*_positions(x0[sl], xi[sl], t)), dtype=bool)
        inside = np.broadcast_to(inside, (len(x0[sl]), len(t)))
        any_hit = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        res = np.full(len(first), np.nan)
        res[any_hit & (first == 0)] = 0.0
        need = np.flatnonzero(any_hit & (first > 0))
        if need.size:
            lo = t[first[need] - 1]
            hi = t[first[need]]
            res[need] = _bisect(x0[sl][need], xi[sl][need], region, lo, hi, tol)
        out[sl] = res
    return out


def first_hit_time(p: PhasePoint, region: Predicate, t_max: float, dt_scan: float) -> float | None:
    """Smallest ``t`` in ``[0, t_max]`` with ``flow(p, t).x`` in the region, to ``1e-9``.

    The scan looks at multiples of ``dt_scan`` and bisects the first bracket
    where the predicate turns true; ``None`` when nothing is hit.
    """
    t = hit_times(np.asarray([p.x]), np.asarray([p.xi]), region, t_max, dt_scan)[0]
    return None if np.isnan(t) else float(t)


# --- lattices ----------------------------------------------------------------

def direction_lattice(ndim: int, count: int) -> np.ndarray:
    """Deterministic unit directions, at least ``count`` of them.

    In 2-D these are ``count`` equally spaced angles (a multiple of 4, so the
    coordinate directions are included).  In 3-D a latitude-longitude lattice
    about the last axis, with an odd number of latitudes and a multiple of 4
    longitudes, contains the poles, the equator and the coordinate planes.
    """
    if ndim == 1:
        return np.array([[1.0], [-1.0]])
    if ndim == 2:
        m = 4 * math.ceil(count / 4)
        ang = TWO_PI * np.arange(m) / m
        return _snap(np.stack([np.cos(ang), np.sin(ang)], axis=1))
    if ndim == 3:
        n_phi = 4 * math.ceil(math.sqrt(2 * count) / 4)
        n_theta = 2 * math.ceil(count / n_phi / 2) + 1
        while (n_theta - 2) * n_phi + 2 < count:
            n_theta += 2
        dirs = [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
        for th in np.pi * np.arange(1, n_theta - 1) / (n_theta - 1):
            for ph in TWO_PI * np.arange(n_phi) / n_phi:
                dirs.append([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
        return _snap(np.asarray(dirs))
    raise ValueError("direction lattices are provided for 1 to 3 dimensions")


def base_lattice(ndim: int, per_axis: int) -> np.ndarray:
    """``per_axis^ndim`` base points on the uniform grid of ``[0, 2 pi)^ndim`` (includes the origin)."""
    axes = [TWO_PI * np.arange(per_axis) / per_axis] * ndim
    return np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=1)


def torus_diameter(ndim: int) -> float:
    return math.pi * math.sqrt(ndim)


@dataclass
class GCCVerdict:
    satisfied: bool
    max_hit_time: float | None
    witnesses: list[PhasePoint]
    ray_count: int
    t_max: float
    dt_scan: float
    hit_times: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    def write_csv(self, path) -> None:
        """Witness rays: x coordinates, xi coordinates, hit time (``none`` for witnesses)."""
        ndim = len(self.witnesses[0].x) if self.witnesses else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j}" for j in range(ndim)] + [f"xi{j}" for j in range(ndim)] + ["hit_time_or_none"])
            for p in self.witnesses:
                w.writerow([fmt(v) for v in p.x] + [fmt(v) for v in p.xi] + ["none"])


def _scan_chunk(args):
    x0, xi, profile, eps, t_max, dt_scan = args
    return hit_times(x0, xi, omega_b(profile, eps), t_max, dt_scan)


def gcc_certify(profile: DampingProfile, direction_count: int = 64, base_count: int = 16, t_max: float | None = None,
                ndim: int = 2, eps: float = 1e-2, dt_scan: float | None = None, workers: int | None = None) -> GCCVerdict:
    """Scan the ray lattice ``base x directions`` for entry into ``{b >= eps}``.

    ``base_count`` is the number of base points per axis and
    ``direction_count`` the total number of directions; the lattice must
    hold at least 64 of each.  The horizon defaults to ten torus diameters
    and the scan step to a sixteenth of the region's feature size (in
    distance, so half that in time at speed 2).
    """
    if direction_count < 64 or base_count**ndim < 64:
        raise ValueError("sampling needs at least 64 directions and 64 base points")
    t_max = 10 * torus_diameter(ndim) if t_max is None else t_max
    if dt_scan is None:
        dt_scan = feature_size(profile, eps) / 16 / 2
    base = base_lattice(ndim, base_count)
    dirs = direction_lattice(ndim, direction_count)
    x0 = np.repeat(base, len(dirs), axis=0)
    xi = np.tile(dirs, (len(base), 1))
    chunk = 4096
    jobs = [(x0[s:s + chunk], xi[s:s + chunk], profile, eps, t_max, dt_scan) for s in range(0, len(x0), chunk)]
    times = np.concatenate(parallel_map(_scan_chunk, jobs, workers))
    miss = np.isnan(times)
    witnesses = [PhasePoint(tuple(a), tuple(b)) for a, b in zip(x0[miss], xi[miss])]
    hits = times[~miss]
    return GCCVerdict(
        satisfied=not miss.any(),
        max_hit_time=float(hits.max()) if hits.size and not miss.any() else None,
        witnesses=witnesses,
        ray_count=len(times),
        t_max=t_max,
        dt_scan=dt_scan,
        hit_times=times,
    )


def undamped_set_sample(profile: DampingProfile, t_max: float | None = None, density: int = 16, ndim: int = 2,
                        direction_count: int = 64, eps: float = 1e-2) -> list[PhasePoint]:
    """Sampled rays that never meet ``{b >= eps}`` up to ``t_max``."""
    return gcc_certify(profile, direction_count, density, t_max, ndim, eps).witnesses
