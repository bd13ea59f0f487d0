"""Global mass functionals at finite scale and in the extrapolated limit.

Three families are evaluated on radius ladders: the isoperimetric
quotient built from (volume, area), the p-isocapacitary quotient built
from (volume, ncap) in two algebraically different but limit-equivalent
formulations, and the ADM surface integral evaluated on coordinate
spheres of a Cartesian chart. Each ladder is reduced by least-squares
extrapolation in 1/scale; the result is a radial-exhaustion estimate of
the corresponding mass, not a supremum over arbitrary exhaustions.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .capacity import p_capacity_radial
from .geometry import GeometryError, RadialMetric
from .numerics import ExtrapolationResult, extrapolate_limit

__all__ = [
    "ChartMetric",
    "MassError",
    "MassEstimate",
    "adm_flux",
    "adm_mass_limit",
    "conformal_adm_flux",
    "hawking_mass_limit",
    "iso_mass_limit",
    "iso_mass_quotient",
    "p_iso_mass_alt_quotient",
    "p_iso_mass_limit",
    "p_iso_mass_quotient",
]

FOUR_PI = 4.0 * math.pi

KINDS = ("iso", "p_iso", "p_iso_alt", "adm", "hawking_limit")

SCAL_FLAG = "scalar curvature nonnegative on sampled ladder"
MINIMAL_FLAG = "minimal boundary"


class MassError(ValueError):
    """Invalid mass-functional input or an unusable ladder."""


@dataclass(frozen=True)
class MassEstimate:
    """One mass functional sampled on a scale ladder, with its limit."""

    kind: str
    samples: Tuple[Tuple[float, float], ...]
    extrapolation: Optional[ExtrapolationResult]
    assumptions: Tuple[str, ...]
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MassError(f"unknown mass kind {self.kind!r}")
        if not self.samples:
            raise MassError("mass estimate needs at least one sample")
        if self.kind.startswith("p_iso") and self.p is None:
            raise MassError(f"kind {self.kind!r} needs the exponent p")
        if len(self.samples) >= 4 and self.extrapolation is None:
            raise MassError("ladders with 4+ samples must carry an extrapolation")

    @property
    def label(self) -> str:
        if self.p is not None:
            return f"{self.kind}(p={self.p:g})"
        return self.kind

    @property
    def limit(self) -> float:
        if self.extrapolation is not None:
            return self.extrapolation.limit
        return self.samples[-1][1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "p": self.p,
            "label": self.label,
            "samples": [[s, v] for s, v in self.samples],
            "extrapolation": None
            if self.extrapolation is None
            else self.extrapolation.to_dict(),
            "assumptions": list(self.assumptions),
            "limit": self.limit,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as handle:
                handle.write(text + "\n")
        return text

    def samples_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["scale", "value"])
            for scale, value in self.samples:
                writer.writerow([repr(scale), repr(value)])


# -- ladder plumbing -------------------------------------------------------


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("AFMASS_THREADS", "1")))
    except ValueError:
        return 1


def _ladder_map(fn: Callable[[float], float], scales: Sequence[float]):
    """Evaluate fn at every scale, in deterministic ladder order."""
    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, scales))
    return [fn(s) for s in scales]


def _check_ladder(ladder: Sequence[float], r_min: Optional[float]) -> np.ndarray:
    radii = np.asarray(list(ladder), dtype=np.float64)
    if radii.size < 2:
        raise MassError("ladder needs at least 2 radii")
    if not np.all(np.diff(radii) > 0):
        raise MassError("ladder radii must be strictly increasing")
    if r_min is not None and radii[0] <= r_min:
        raise MassError(
            f"ladder must start beyond the chart start {r_min:g}, got {radii[0]:g}"
        )
    if radii[-1] < 100.0 * radii[0]:
        raise MassError("ladder must span at least 2 decades")
    return radii


def _assumption_flags(metric: RadialMetric, radii: np.ndarray) -> Tuple[str, ...]:
    probes = np.unique(np.concatenate([radii, np.sqrt(radii[:-1] * radii[1:])]))
    flags = []
    if float(np.min(metric.scalar_curvature(probes))) >= -1e-8:
        flags.append(SCAL_FLAG)
    if metric.boundary_minimal_flag:
        flags.append(MINIMAL_FLAG)
    return tuple(flags)


def _estimate(kind, scales, values, assumptions, p=None) -> MassEstimate:
    samples = tuple((float(s), float(v)) for s, v in zip(scales, values))
    extrapolation = None
    if len(samples) >= 4:
        extrapolation = extrapolate_limit(samples, order=2)
    return MassEstimate(
        kind=kind, samples=samples, extrapolation=extrapolation,
        assumptions=tuple(assumptions), p=p,
    )


# -- quotients -------------------------------------------------------------


def iso_mass_quotient(volume: float, area: float) -> float:
    """(2/area)(volume - area^{3/2}/(6 sqrt(pi))), the deficit quotient."""
    if not area > 0:
        raise MassError(f"area must be positive, got {area}")
    if volume < 0:
        raise MassError(f"volume must be nonnegative, got {volume}")
    return (2.0 / area) * (volume - area**1.5 / (6.0 * math.sqrt(math.pi)))


def p_iso_mass_quotient(volume: float, ncap: float, p: float) -> float:
    """Capacitary deficit quotient normalized with ncap^{2/(3-p)}."""
    _check_capacitary_args(volume, ncap, p)
    radius_sq = ncap ** (2.0 / (3.0 - p))
    ball = (FOUR_PI / 3.0) * ncap ** (3.0 / (3.0 - p))
    return (volume - ball) / (2.0 * p * math.pi * radius_sq)


def p_iso_mass_alt_quotient(volume: float, ncap: float, p: float) -> float:
    """Equivalent-in-the-limit formulation through the volume radius."""
    _check_capacitary_args(volume, ncap, p)
    volume_radius = (3.0 * volume / FOUR_PI) ** ((3.0 - p) / 3.0)
    prefactor = 2.0 * ncap ** ((p - 2.0) / (3.0 - p)) / (p * (3.0 - p))
    return prefactor * (volume_radius - ncap)


def _check_capacitary_args(volume: float, ncap: float, p: float) -> None:
    if not 1.0 < p < 3.0:
        raise MassError(f"p = {p} outside the admissible range (1, 3)")
    if not ncap > 0:
        raise MassError(f"ncap must be positive, got {ncap}")
    if volume < 0:
        raise MassError(f"volume must be nonnegative, got {volume}")


# -- ladder limits ---------------------------------------------------------


def iso_mass_limit(metric: RadialMetric, ladder: Sequence[float]) -> MassEstimate:
    """Isoperimetric quotient on coordinate spheres, extrapolated."""
    radii = _check_ladder(ladder, metric.r_min)

    def at(r: float) -> float:
        data = metric.sphere_data(r)
        return iso_mass_quotient(data.volume, data.area)

    values = _ladder_map(at, radii)
    return _estimate("iso", radii, values, _assumption_flags(metric, radii))


def p_iso_mass_limit(
    metric: RadialMetric,
    ladder: Sequence[float],
    p: float,
    alternative: bool = False,
) -> MassEstimate:
    """p-isocapacitary quotient on coordinate spheres, extrapolated."""
    radii = _check_ladder(ladder, metric.r_min)
    quotient = p_iso_mass_alt_quotient if alternative else p_iso_mass_quotient

    def at(r: float) -> float:
        data = metric.sphere_data(r)
        ncap = p_capacity_radial(metric, r, p, grid_points=2).ncap
        return quotient(data.volume, ncap, p)

    values = _ladder_map(at, radii)
    kind = "p_iso_alt" if alternative else "p_iso"
    return _estimate(kind, radii, values, _assumption_flags(metric, radii), p=p)


def hawking_mass_limit(metric: RadialMetric, ladder: Sequence[float]) -> MassEstimate:
    """Hawking mass of coordinate spheres, extrapolated."""
    radii = _check_ladder(ladder, metric.r_min)
    values = _ladder_map(metric.hawking_mass, radii)
    return _estimate("hawking_limit", radii, values, _assumption_flags(metric, radii))


# -- ADM surface integral --------------------------------------------------


class ChartMetric:
    """Cartesian-chart metric g_ij with first partial derivatives.

    metric_fn maps an (N, 3) point array to (N, 3, 3) symmetric matrices;
    derivative_fn maps it to (N, 3, 3, 3) with axes (point, k, i, j)
    holding d g_ij / d x^k. Without derivative_fn, central finite
    differences of metric_fn are used.
    """

    def __init__(
        self,
        metric_fn: Callable[[np.ndarray], np.ndarray],
        derivative_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        description: str = "chart",
        r_min: float = 0.0,
    ):
        self._g = metric_fn
        self._dg = derivative_fn
        self.description = description
        self.r_min = float(r_min)

    @classmethod
    def flat(cls) -> "ChartMetric":
        def g(points: np.ndarray) -> np.ndarray:
            return np.broadcast_to(np.eye(3), (len(points), 3, 3)).copy()

        def dg(points: np.ndarray) -> np.ndarray:
            return np.zeros((len(points), 3, 3, 3))

        return cls(g, dg, description="flat")

    @classmethod
    def isotropic(cls, u_value, u_slope, description="isotropic", r_min=0.0) -> "ChartMetric":
        """Conformally flat chart g = u(|x|)^4 delta with analytic derivatives."""

        def g(points: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(points, axis=1)
            u4 = np.asarray(u_value(r), dtype=np.float64) ** 4
            return u4[:, None, None] * np.eye(3)

        def dg(points: np.ndarray) -> np.ndarray:
            r = np.linalg.norm(points, axis=1)
            u = np.asarray(u_value(r), dtype=np.float64)
            du = np.asarray(u_slope(r), dtype=np.float64)
            radial = 4.0 * u**3 * du / r
            return radial[:, None, None, None] * points[:, :, None, None] * np.eye(3)

        return cls(g, dg, description=description, r_min=r_min)

    @classmethod
    def from_radial(cls, metric: RadialMetric) -> "ChartMetric":
        if not metric.is_conformal:
            raise MassError(
                "ADM chart synthesis needs a conformal factor; warped or "
                "tabulated charts do not determine a Cartesian metric"
            )
        return cls.isotropic(
            metric.conformal_factor,
            metric.conformal_factor_derivative,
            description=repr(metric),
            r_min=metric.r_min,
        )

    def metric_at(self, points: np.ndarray) -> np.ndarray:
        g = np.asarray(self._g(points), dtype=np.float64)
        if g.shape != (len(points), 3, 3):
            raise MassError(f"chart metric returned shape {g.shape}")
        return g

    def derivative_at(self, points: np.ndarray) -> np.ndarray:
        if self._dg is not None:
            dg = np.asarray(self._dg(points), dtype=np.float64)
            if dg.shape != (len(points), 3, 3, 3):
                raise MassError(f"chart derivative returned shape {dg.shape}")
            return dg
        # Central differences, one coordinate at a time.
        out = np.empty((len(points), 3, 3, 3))
        step = 1e-6 * np.maximum(1.0, np.linalg.norm(points, axis=1))
        for k in range(3):
            offset = np.zeros_like(points)
            offset[:, k] = step
            plus = self.metric_at(points + offset)
            minus = self.metric_at(points - offset)
            out[:, k] = (plus - minus) / (2.0 * step)[:, None, None]
        return out


def _sphere_rule(n_polar: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product rule on the unit sphere: GL in cos(theta) x uniform azimuth."""
    mu, w_mu = np.polynomial.legendre.leggauss(n_polar)
    n_az = 2 * n_polar
    az = 2.0 * math.pi * (np.arange(n_az) + 0.5) / n_az
    sin_theta = np.sqrt(1.0 - mu**2)
    x = np.outer(sin_theta, np.cos(az)).ravel()
    y = np.outer(sin_theta, np.sin(az)).ravel()
    z = np.repeat(mu, n_az)
    weights = np.repeat(w_mu, n_az) * (2.0 * math.pi / n_az)
    return np.column_stack([x, y, z]), weights


def _flux_at_order(chart: ChartMetric, r: float, n_polar: int) -> float:
    normals, weights = _sphere_rule(n_polar)
    points = r * normals
    g = chart.metric_at(points)
    deriv = chart.derivative_at(points)
    ginv = np.linalg.inv(g)
    # E_k = g^{ij}(d_i g_{jk} - d_k g_{ij})
    term1 = np.einsum("bij,bijk->bk", ginv, deriv)
    term2 = np.einsum("bij,bkij->bk", ginv, deriv)
    e_vec = term1 - term2
    # g-unit normal and induced measure on the coordinate sphere
    gn = np.einsum("bkl,bl->bk", ginv, normals)
    q = np.einsum("bk,bk->b", gn, normals)
    if np.any(q <= 0):
        raise MassError("chart metric is not positive definite on the sphere")
    density = np.sqrt(np.linalg.det(g) * q) * r * r
    integrand = np.einsum("bk,bk->b", e_vec, gn) / np.sqrt(q)
    return float(np.sum(weights * integrand * density) / (16.0 * math.pi))


def adm_flux(
    chart: ChartMetric,
    r: float,
    order: int = 32,
    tol: float = 1e-9,
    max_order: int = 256,
) -> float:
    """ADM surface integral over the coordinate sphere of radius r.

    The product quadrature order is doubled until two successive values
    agree to tol; failure to settle raises.
    """
    if not r > chart.r_min:
        raise MassError(f"sphere radius {r:g} not beyond the chart start {chart.r_min:g}")
    previous = None
    n = order
    while n <= max_order:
        value = _flux_at_order(chart, r, n)
        if previous is not None and abs(value - previous) <= tol * max(1.0, abs(value)):
            return value
        previous = value
        n *= 2
    raise MassError(
        f"sphere quadrature did not settle below {tol:g} by order {max_order}"
    )


def conformal_adm_flux(metric: RadialMetric, r: float) -> float:
    """Closed-form ADM flux -2 r^2 u u' for conformally flat charts."""
    if not metric.is_conformal:
        raise MassError("closed-form flux needs a conformal factor")
    u = metric.conformal_factor(r)
    du = metric.conformal_factor_derivative(r)
    return -2.0 * r * r * u * du


def adm_mass_limit(source, ladder: Sequence[float]) -> MassEstimate:
    """ADM flux ladder with extrapolation.

    Accepts a ChartMetric or a conformal RadialMetric. The extrapolation
    carries the monotone-tail flag; oscillating tails are the signature
    of charts decaying too slowly for the flux to settle.
    """
    if isinstance(source, RadialMetric):
        assumptions = _assumption_flags(
            source, np.asarray(list(ladder), dtype=np.float64)
        )
        chart = ChartMetric.from_radial(source)
    else:
        chart = source
        assumptions = ()
    radii = _check_ladder(ladder, chart.r_min if chart.r_min > 0 else None)
    values = _ladder_map(lambda r: adm_flux(chart, r), radii)
    return _estimate("adm", radii, values, assumptions)
