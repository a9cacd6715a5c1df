"""Closed-form damping coefficients with a prescribed vanishing order.

A profile is a plain callable of the grid coordinates.  The power kinds vanish
like ``|x' - y'|^{2 gamma}`` at one (or several) marked points and are
positive elsewhere; ``strip`` and ``constant`` are the geometric-control
examples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

KINDS = ("periodic-power", "radial-power", "strip", "constant", "custom-closure")
POWER_KINDS = ("periodic-power", "radial-power")


@dataclass(frozen=True)
class DampingProfile:
    """Damping coefficient ``b``.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    gamma : float
        Half vanishing order; ``b ~ |x' - y'|^{2 gamma}`` near the center.
    center : tuple of float
        The point ``y'``; its length fixes which leading axes ``b`` reads,
        unless ``axes`` is given.
    eps0 : float
        Radius of the neighbourhood where the power law is prescribed.
    amplitude : float
        Overall factor (the constant value for ``constant``).
    axes : tuple of int, optional
        Coordinate axes ``b`` depends on.
    sharpness : int
        Exponent ``p`` of the strip bump ``cos^{2p}((x - c)/2)``.
    extra_centers : tuple of (center, gamma)
        Further vanishing points for the power kinds; ``b`` is the product of
        one factor per center.
    func : callable, optional
        ``func(*coords)`` for ``custom-closure``.
    floor : float, optional
        Declared lower bound ``c_out`` outside the neighbourhood.
    """

    kind: str
    gamma: float = 1.0
    center: tuple[float, ...] = (0.0,)
    eps0: float = 1.0
    amplitude: float = 1.0
    axes: tuple[int, ...] | None = None
    sharpness: int = 4
    extra_centers: tuple = ()
    func: Callable | None = field(default=None, compare=False)
    floor: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown damping kind {self.kind!r}")
        if self.kind in POWER_KINDS and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.kind == "custom-closure" and self.func is None:
            raise ValueError("custom-closure profiles need func")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def dependence_axes(self) -> tuple[int, ...]:
        if self.axes is not None:
            return tuple(self.axes)
        if self.kind == "constant":
            return ()
        return tuple(range(len(self.center)))

    @property
    def is_power(self) -> bool:
        return self.kind in POWER_KINDS

    @property
    def max_gamma(self) -> float:
        return max([self.gamma] + [g for _, g in self.extra_centers])

    def __call__(self, *coords: np.ndarray) -> np.ndarray:
        return eval_b(self, *coords)


def _offsets(profile: DampingProfile, coords, center) -> list[np.ndarray]:
    axes = profile.dependence_axes
    if len(coords) <= max(axes, default=-1):
        raise ValueError(f"profile reads axes {axes} but got {len(coords)} coordinates")
    return [np.asarray(coords[a], dtype=float) - c for a, c in zip(axes, center)]


def _power_factor(profile: DampingProfile, coords, center, gamma) -> np.ndarray:
    offs = _offsets(profile, coords, center)
    if profile.kind == "periodic-power":
        r2 = sum((2 * np.sin(d / 2)) ** 2 for d in offs)
    else:
        r2 = sum(d**2 for d in offs)
    return r2**gamma


def eval_b(profile: DampingProfile, *coords: np.ndarray) -> np.ndarray:
    """Evaluate ``b`` at points given as one coordinate array per axis."""
    kind = profile.kind
    if kind == "constant":
        shape = np.broadcast(*coords).shape if coords else ()
        return np.full(shape, float(profile.amplitude))
    if kind == "custom-closure":
        return np.asarray(profile.func(*coords), dtype=float)
    if kind == "strip":
        offs = _offsets(profile, coords, profile.center)
        return profile.amplitude * sum(np.cos(d / 2) ** (2 * profile.sharpness) for d in offs)
    out = _power_factor(profile, coords, profile.center, profile.gamma)
    for center, gamma in profile.extra_centers:
        out = out * _power_factor(profile, coords, tuple(center), gamma)
    return profile.amplitude * out


def depends_only_on(profile: DampingProfile, axes: Sequence[int]) -> bool:
    if profile.kind == "custom-closure" and profile.axes is None:
        return False
    return set(profile.dependence_axes) <= set(axes)


def _ball_samples(dim: int, eps0: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic points of the punctured ball ``0 < |x| <= eps0``."""
    if dim == 1:
        t = eps0 * np.arange(1, count // 2 + 1) / (count // 2)
        return np.concatenate([t, -t])[:, None]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((count, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = eps0 * np.geomspace(1e-3, 1.0, count)
    return dirs * radii[:, None]


def homogeneity_bounds(profile: DampingProfile, sample_count: int = 1000) -> tuple[float, float]:
    """Empirical constants for ``C^-1 |x'-y'|^{2g} <= b <= C |x'-y'|^{2g}``.

    Returns ``(c_lower, c_upper)`` where ``c_lower = 1 / min(ratio)`` is the
    constant the lower bound needs and ``c_upper = max(ratio)``, with
    ``ratio = b(x') / |x' - y'|^{2 gamma}`` on the punctured
    ``eps0``-neighbourhood.  Their product is ``max/min >= 1``.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be at least 100")
    dim = len(profile.center)
    pts = _ball_samples(dim, profile.eps0, sample_count) + np.asarray(profile.center)
    coords = [pts[:, j] for j in range(dim)]
    if profile.axes is not None:
        full = [np.zeros(len(pts))] * (max(profile.axes) + 1)
        for j, a in enumerate(profile.axes):
            full[a] = coords[j]
        coords = full
    r = np.linalg.norm(pts - np.asarray(profile.center), axis=1)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = eval_b(profile, *coords) / r ** (2 * profile.gamma)
    lo, hi = float(np.min(ratio)), float(np.max(ratio))
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo <= 1e-12 or hi >= 1e12:
        raise ValueError(
            f"profile violates the homogeneity hypothesis (ratio range [{lo:.3g}, {hi:.3g}])"
        )
    return 1.0 / lo, hi


def extend_W(profile: DampingProfile) -> Callable[..., np.ndarray]:
    """Extend ``b`` from the ``eps0``-ball to ``R^{n'}`` by ``2 gamma``-homogeneity.

    ``W = b`` on the ball and ``W(y + t e) = (t/eps0)^{2 gamma} b(y + eps0 e)``
    for ``t > eps0`` and unit ``e``.
    """
    if not profile.is_power:
        raise ValueError(f"extend_W needs a power-type profile, got {profile.kind!r}")
    if profile.extra_centers:
        raise ValueError("extend_W is defined around a single vanishing point")
    center = np.asarray(profile.center, dtype=float)
    g2 = 2 * profile.gamma
    eps0 = profile.eps0
    axes = profile.dependence_axes

    if profile.kind == "radial-power":
        # already homogeneous about the center
        return lambda *coords: eval_b(profile, *coords)

    def W(*coords):
        offs = [np.asarray(coords[a], dtype=float) - c for a, c in zip(axes, center)]
        r = np.sqrt(sum(d**2 for d in offs))
        scale = np.where(r > eps0, eps0 / np.where(r > 0, r, 1.0), 1.0)
        inner = list(coords)
        for a, c, d in zip(axes, center, offs):
            inner[a] = c + d * scale
        return eval_b(profile, *inner) * np.where(r > eps0, (r / eps0) ** g2, 1.0)

    return W


def omega_b(profile: DampingProfile, eps: float = 1e-2) -> Callable[..., np.ndarray]:
    """Predicate of the effective damping region ``{b >= eps}``.

    For the continuous profiles handled here the region where the damping is
    effective is ``{b > 0}``; the threshold makes it robust to round-off.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return lambda *coords: eval_b(profile, *coords) >= eps


def feature_size(profile: DampingProfile, eps: float = 1e-2, period: float = 2 * np.pi, samples: int = 4096) -> float:
    """Shortest run of ``{b >= eps}`` along lines through the center, per axis.

    Used to pick ray-scan steps; a line where the region is empty or full
    contributes nothing.
    """
    axes = profile.dependence_axes
    if not axes:
        return period
    ndim = max(axes) + 1
    base = [np.zeros(samples)] * ndim
    center = dict(zip(axes, profile.center))
    for a in axes:
        base[a] = np.full(samples, center.get(a, 0.0))
    t = np.arange(samples) * (period / samples)
    best = period
    for a in axes:
        # lines through the center and lines shifted half a period in the other axes
        for shift in (0.0, period / 2):
            coords = [c if j == a else c + shift for j, c in enumerate(base)]
            coords[a] = center.get(a, 0.0) + t
            inside = eval_b(profile, *coords) >= eps
            if inside.all() or not inside.any():
                continue
            # rotate so the scan starts outside, then measure runs of True
            start = int(np.argmin(inside))
            run = np.append(np.roll(inside, -start), False)
            edges = np.flatnonzero(np.diff(run.astype(int)))
            lengths = (edges[1::2] - edges[0::2]) * (period / samples)
            if lengths.size:
                best = min(best, float(lengths.min()))
    return best


def outside_floor(profile: DampingProfile, period: float = 2 * np.pi, samples: int = 20000, seed: int = 0) -> float:
    """Empirical ``min b`` outside the ``eps0``-neighbourhood (periodic cell)."""
    axes = profile.dependence_axes
    if not axes:
        return float(eval_b(profile))
    rng = np.random.default_rng(seed)
    ndim = max(axes) + 1
    pts = rng.uniform(-period / 2, period / 2, size=(samples, ndim))
    center = np.zeros(ndim)
    for a, c in zip(axes, profile.center):
        center[a] = c
    offs = pts[:, list(axes)]
    keep = np.linalg.norm(offs, axis=1) > profile.eps0
    coords = [pts[keep, j] + center[j] for j in range(ndim)]
    return float(np.min(eval_b(profile, *coords)))


def sine_power_1d(gamma: float = 1.0, eps0: float = 1.0) -> DampingProfile:
    """``b(x1) = |2 sin(x1/2)|^{2 gamma}`` on the 2-torus."""
    return DampingProfile("periodic-power", gamma=gamma, center=(0.0,), eps0=eps0)


def sine_power_2d(gamma: float = 1.0, eps0: float = 1.0) -> DampingProfile:
    """``b(x1, x2) = (4 sin^2(x1/2) + 4 sin^2(x2/2))^gamma``, vanishing on ``x1 = x2 = 0`` of the 3-torus."""
    return DampingProfile("periodic-power", gamma=gamma, center=(0.0, 0.0), eps0=eps0)


def cross_strip(sharpness: int = 4, amplitude: float = 1.0) -> DampingProfile:
    """Two perpendicular strips centred at ``x_a = pi``; satisfies GCC on ``T^2``."""
    return DampingProfile("strip", center=(np.pi, np.pi), axes=(0, 1), sharpness=sharpness, amplitude=amplitude)
