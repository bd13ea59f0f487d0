"""Weak inverse mean curvature flow in radial symmetry.

In a rotationally symmetric chart the weak flow is explicit: with
Â(r) = inf_{s >= r} A(s), the solution starting from the sphere at
r_start is w(r) = log(Â(r) / A(r_start)). Level sets fatten exactly on
the intervals where Â < A, which in a single sweep become the jump
intervals (r_before, r_after) of the strictly outward minimizing hull.
Between jumps the flow moves through round spheres and the area law
A(t) = A_0 e^t holds with A continuous across each jump, while enclosed
volume jumps upward by the volume of the fattened shell.

The flow record samples (t, r, A, V, m_H) on a uniform t grid with a
pre/post pair at every jump time, and t_of_v inverts the volume along
the record. The Geroch derivative is the smooth-stretch rate of change
of the Hawking mass in flow time.
"""

from __future__ import annotations

import csv
import json
import math
import threading
import weakref
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .geometry import RadialMetric

__all__ = [
    "FlowRecord",
    "FlowSample",
    "ImcfError",
    "JumpInterval",
    "geroch_derivative",
    "imcf_from_pole",
    "t_of_v",
    "tail_min_area",
    "weak_imcf",
]

FOUR_PI = 4.0 * math.pi
SIXTEEN_PI = 16.0 * math.pi

# Fattening is declared when the tail infimum drops below A by this
# relative margin; ties resolve to "no jump".
JUMP_REL_TOL = 1e-12

_GRID_SIZE = 8192


class ImcfError(ValueError):
    """Flow preconditions violated or the flow horizon exceeded."""


@dataclass(frozen=True)
class FlowSample:
    t: float
    r: float
    area: float
    volume: float
    hawking: float
    is_jump: bool = False

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "r": self.r,
            "area": self.area,
            "volume": self.volume,
            "hawking": self.hawking,
            "is_jump": self.is_jump,
        }


@dataclass(frozen=True)
class JumpInterval:
    t: float
    r_before: float
    r_after: float
    area: float

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "r_before": self.r_before,
            "r_after": self.r_after,
            "area": self.area,
        }


@dataclass(frozen=True)
class FlowRecord:
    """Sampled weak flow; samples are time-ordered with jump pairs
    sharing their jump time (pre sphere first)."""

    origin: str
    r_start: float
    normalization: float
    samples: Tuple[FlowSample, ...]
    jumps: Tuple[JumpInterval, ...]
    metric: RadialMetric

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "r_start": self.r_start,
            "normalization": self.normalization,
            "samples": [s.to_dict() for s in self.samples],
            "jumps": [j.to_dict() for j in self.jumps],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as handle:
                handle.write(text + "\n")
        return text

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "r", "area", "volume", "hawking", "is_jump"])
            for s in self.samples:
                writer.writerow(
                    [repr(s.t), repr(s.r), repr(s.area), repr(s.volume),
                     repr(s.hawking), int(s.is_jump)]
                )

    def validate(self) -> None:
        """Assert the flow-record invariants; raises ImcfError."""
        ts = np.array([s.t for s in self.samples])
        rs = np.array([s.r for s in self.samples])
        areas = np.array([s.area for s in self.samples])
        vols = np.array([s.volume for s in self.samples])
        dt = np.diff(ts)
        if np.any(dt < 0):
            raise ImcfError("flow times decrease")
        for i in np.flatnonzero(dt == 0):
            if not (self.samples[i].is_jump and self.samples[i + 1].is_jump):
                raise ImcfError(f"repeated time {ts[i]} outside a jump pair")
        if np.any(np.diff(rs) < 0):
            raise ImcfError("flow radii decrease")
        law = np.abs(areas / (self.normalization * np.exp(ts)) - 1.0)
        if np.max(law) > 1e-10:
            raise ImcfError(f"area law violated by {np.max(law):.2e} relative")
        for i in np.flatnonzero(dt == 0):
            gap = abs(areas[i + 1] / areas[i] - 1.0)
            if gap > 1e-8:
                raise ImcfError(f"area jumps by {gap:.2e} relative at t = {ts[i]}")
            if vols[i + 1] <= vols[i]:
                raise ImcfError(f"volume fails to jump upward at t = {ts[i]}")


class _Hull:
    """Jump intervals of the strictly outward minimizing hull.

    A right-to-left running minimum of A over a radius grid marks the
    fattening regions; each maximal run is then sharpened by a bounded
    minimization (the post-jump radius, at the area dip) and a bracketed
    root (the pre-jump radius on the rising branch).
    """

    def __init__(self, metric: RadialMetric):
        self.metric = metric
        if metric.r_max is not None:
            self.r_top = metric.r_max
            grid = np.linspace(metric.r_min, self.r_top, _GRID_SIZE)
        else:
            self.r_top = 1e4 * max(1.0, metric.r_min)
            lo = metric.r_min if metric.r_min > 0 else 1e-10 * self.r_top
            grid = np.geomspace(lo, self.r_top, _GRID_SIZE)
            if metric.r_min > 0:
                grid[0] = metric.r_min
        area = metric.sphere_area(grid)
        if area[-1] <= np.max(area[:-1]):
            raise ImcfError(
                "sphere area does not dominate at the hull horizon "
                f"r = {self.r_top:g}; the tail is not asymptotically flat "
                "or the tabulated range is too short"
            )
        tail_min = np.minimum.accumulate(area[::-1])[::-1]
        fattened = tail_min < area * (1.0 - JUMP_REL_TOL)
        self.intervals = self._refine_runs(grid, fattened)

    def _refine_runs(self, grid: np.ndarray, mask: np.ndarray) -> Tuple[Tuple[float, float, float], ...]:
        metric = self.metric
        n = grid.size
        runs: List[Tuple[int, int]] = []
        idx = np.flatnonzero(mask)
        if idx.size:
            breaks = np.flatnonzero(np.diff(idx) > 1)
            starts = np.concatenate([[idx[0]], idx[breaks + 1]])
            ends = np.concatenate([idx[breaks], [idx[-1]]])
            runs = list(zip(starts, ends))
        refined = []
        for i0, i1 in runs:
            dip_lo = grid[i1]
            dip_hi = grid[min(i1 + 3, n - 1)]
            best = minimize_scalar(
                metric.sphere_area,
                bounds=(dip_lo, dip_hi),
                method="bounded",
                options={"xatol": 1e-13 * max(1.0, dip_hi)},
            )
            r_after = float(best.x)
            area_jump = float(metric.sphere_area(r_after))
            if i0 == 0:
                r_before = float(grid[0])
            else:
                lo = float(grid[i0 - 1])
                hi = float(grid[i0])
                f_lo = metric.sphere_area(lo) - area_jump
                if f_lo >= 0.0:
                    r_before = lo
                else:
                    r_before = float(
                        brentq(
                            lambda s: metric.sphere_area(s) - area_jump,
                            lo,
                            hi,
                            xtol=1e-15 * max(1.0, hi),
                            rtol=8.0 * np.finfo(float).eps,
                        )
                    )
            refined.append((r_before, r_after, area_jump))
        return tuple(refined)

    def jump_at(self, r: float) -> Optional[Tuple[float, float, float]]:
        for interval in self.intervals:
            if interval[0] <= r <= interval[1]:
                return interval
        return None

    def tail_min(self, r: float) -> Tuple[float, float]:
        hit = self.jump_at(r)
        if hit is not None:
            return hit[2], hit[1]
        return float(self.metric.sphere_area(r)), float(r)

    def is_outward_minimizing(self, r: float) -> bool:
        amin, _ = self.tail_min(r)
        return amin >= self.metric.sphere_area(r) * (1.0 - JUMP_REL_TOL)


_hull_cache: "weakref.WeakKeyDictionary[RadialMetric, _Hull]" = weakref.WeakKeyDictionary()
_hull_lock = threading.Lock()


def _hull_for(metric: RadialMetric) -> _Hull:
    with _hull_lock:
        hull = _hull_cache.get(metric)
    if hull is None:
        hull = _Hull(metric)
        with _hull_lock:
            hull = _hull_cache.setdefault(metric, hull)
    return hull


def tail_min_area(metric: RadialMetric, r: float) -> Tuple[float, float]:
    """inf over s >= r of A(s), with the largest radius attaining it."""
    metric.sphere_area(r)  # domain validation
    return _hull_for(metric).tail_min(float(r))


def _log_root(f, lo: float, hi: float) -> float:
    """Bracketed root with relative accuracy across widely spaced scales."""
    if lo > 0:
        x = brentq(lambda y: f(math.exp(y)), math.log(lo), math.log(hi), xtol=1e-14)
        return float(math.exp(x))
    return float(brentq(f, lo, hi, xtol=1e-15 * max(1.0, hi), rtol=8.0 * np.finfo(float).eps))


def _solve_radius_for_area(metric: RadialMetric, target: float, lo: float, hi: float) -> float:
    if target <= metric.sphere_area(lo) * (1.0 + 1e-14):
        return lo
    if target >= metric.sphere_area(hi) * (1.0 - 1e-14):
        return hi
    return _log_root(lambda s: metric.sphere_area(s) - target, lo, hi)


def _build_record(
    metric: RadialMetric,
    hull: _Hull,
    origin: str,
    r_first: float,
    normalization: float,
    t_lo: float,
    t_hi: float,
    dt: float,
) -> FlowRecord:
    if dt <= 0:
        raise ImcfError(f"sampling step must be positive, got {dt}")
    if t_hi <= t_lo:
        raise ImcfError(f"empty flow horizon [{t_lo}, {t_hi}]")
    top_area = metric.sphere_area(hull.r_top)
    if normalization * math.exp(t_hi) > top_area:
        raise ImcfError(
            f"flow horizon t = {t_hi:g} needs sphere area "
            f"{normalization * math.exp(t_hi):.3e}, beyond the hull range "
            f"(A = {top_area:.3e} at r = {hull.r_top:g}); reduce the horizon "
            "or extend the chart"
        )

    # Smooth segments between jumps, annotated with their area ranges.
    cuts = [j for j in hull.intervals if j[0] > r_first]
    seg_edges = [r_first]
    for r_b, r_a, _ in cuts:
        seg_edges += [r_b, r_a]
    seg_edges.append(hull.r_top)
    segments = [
        (seg_edges[2 * i], seg_edges[2 * i + 1]) for i in range(len(seg_edges) // 2)
    ]
    seg_areas = [
        (float(metric.sphere_area(a)), float(metric.sphere_area(b))) for a, b in segments
    ]

    jump_times = [math.log(j_area / normalization) for _, _, j_area in cuts]

    n_steps = int(math.floor((t_hi - t_lo) / dt + 1e-9))
    grid_t = t_lo + dt * np.arange(n_steps + 1)

    def volume(r: float) -> float:
        return metric.enclosed_volume(metric.r_min, r)

    samples: List[FlowSample] = []
    seg_idx = 0
    for t in grid_t:
        t = float(t)
        if any(abs(t - tj) < 1e-9 for tj in jump_times):
            continue  # the jump pair itself covers this instant
        target = normalization * math.exp(t)
        while seg_idx + 1 < len(segments) and target > seg_areas[seg_idx][1]:
            seg_idx += 1
        lo, hi = segments[seg_idx]
        r = r_first if t == t_lo else _solve_radius_for_area(metric, target, lo, hi)
        samples.append(
            FlowSample(
                t=t,
                r=r,
                area=float(metric.sphere_area(r)),
                volume=volume(r),
                hawking=float(metric.hawking_mass(r)),
            )
        )

    jumps = []
    for (r_b, r_a, j_area), t_j in zip(cuts, jump_times):
        if not t_lo <= t_j <= t_hi:
            continue
        jumps.append(JumpInterval(t=t_j, r_before=r_b, r_after=r_a, area=j_area))
        for radius in (r_b, r_a):
            samples.append(
                FlowSample(
                    t=t_j,
                    r=radius,
                    area=float(metric.sphere_area(radius)),
                    volume=volume(radius),
                    hawking=float(metric.hawking_mass(radius)),
                    is_jump=True,
                )
            )

    samples.sort(key=lambda s: (s.t, s.r))
    return FlowRecord(
        origin=origin,
        r_start=r_first,
        normalization=normalization,
        samples=tuple(samples),
        jumps=tuple(jumps),
        metric=metric,
    )


def weak_imcf(
    metric: RadialMetric,
    r_start: float,
    t_max: float = 10.0,
    dt: float = 0.01,
) -> FlowRecord:
    """Weak flow from the coordinate sphere at r_start.

    The start sphere must be outward minimizing; the record then runs
    from t = 0 to t_max with the start area as normalization.
    """
    area_start = metric.sphere_area(r_start)  # validates the radius
    hull = _hull_for(metric)
    if not hull.is_outward_minimizing(r_start):
        amin, attained = hull.tail_min(r_start)
        raise ImcfError(
            f"sphere at r = {r_start:g} is not outward minimizing: "
            f"A = {area_start:.6g} but the tail reaches {amin:.6g} at r = {attained:g}"
        )
    return _build_record(
        metric, hull, "boundary", float(r_start), float(area_start), 0.0, t_max, dt
    )


def imcf_from_pole(
    metric: RadialMetric,
    t_min: float = -10.0,
    t_max: float = 10.0,
    dt: float = 0.01,
) -> FlowRecord:
    """Weak flow on a complete chart, normalized so A(t) = 4 pi e^t.

    The flow emanates from the pole (t -> -infinity); the record starts
    at t_min.
    """
    if not metric.has_pole:
        raise ImcfError("pole flow needs a complete chart; this metric has a boundary")
    hull = _hull_for(metric)
    area_first = FOUR_PI * math.exp(t_min)
    lo = 1e-12 * hull.r_top
    if metric.sphere_area(lo) > area_first:
        raise ImcfError(f"t_min = {t_min:g} is below the resolvable pole neighborhood")
    r_first = _solve_radius_for_area(metric, area_first, lo, hull.r_top)
    if not hull.is_outward_minimizing(r_first):
        raise ImcfError(
            f"sphere at r = {r_first:g} (t = {t_min:g}) is not outward minimizing; "
            "start the record above the fattened region"
        )
    return _build_record(metric, hull, "pole", r_first, FOUR_PI, t_min, t_max, dt)


def t_of_v(flow: FlowRecord, v: float) -> float:
    """First flow time whose region has volume at least v."""
    if not v > 0:
        raise ValueError(f"volume must be positive, got {v}")
    metric = flow.metric
    first, last = flow.samples[0], flow.samples[-1]
    if v > last.volume * (1.0 + 1e-12):
        raise ImcfError(
            f"volume {v:g} beyond the recorded flow (max {last.volume:g}); "
            "rerun the flow with a larger horizon"
        )
    if v < first.volume * (1.0 - 1e-12):
        raise ImcfError(
            f"volume {v:g} below the first recorded sample ({first.volume:g}); "
            "rerun the flow with an earlier start"
        )
    if v <= first.volume:
        return first.t
    if v >= last.volume:
        return last.t
    for jump in flow.jumps:
        v_before = metric.enclosed_volume(metric.r_min, jump.r_before)
        v_after = metric.enclosed_volume(metric.r_min, jump.r_after)
        if v_before < v <= v_after:
            return jump.t
    r = _log_root(
        lambda s: metric.enclosed_volume(metric.r_min, s) - v, first.r, last.r
    )
    hit = _hull_for(metric).jump_at(float(r))
    if hit is not None:
        return math.log(hit[2] / flow.normalization)
    return math.log(metric.sphere_area(r) / flow.normalization)


def geroch_derivative(metric: RadialMetric, r: float) -> float:
    """dm_H/dt on a smooth stretch of the flow through the r-sphere.

    For round spheres the traceless second fundamental form and the
    curvature gradient vanish and the Gauss-Bonnet term is saturated, so
    the monotonicity-formula derivative reduces to
    A^{3/2} Scal / (16 pi)^{3/2}.
    """
    hull = _hull_for(metric)
    if not hull.is_outward_minimizing(r):
        raise ImcfError(
            f"sphere at r = {r:g} lies in a fattening interval; "
            "the smooth-stretch derivative is undefined there"
        )
    area = metric.sphere_area(r)
    return area**1.5 * metric.scalar_curvature(r) / SIXTEEN_PI**1.5
