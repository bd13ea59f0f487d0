"""Normalized p-capacity of radial spheres and the hypergeometric bound.

In radial symmetry the p-capacity minimization has an explicit solution:
the potential depends on r alone and its Euler-Lagrange equation
integrates to u'(r) proportional to phi rho^{-2/(p-1)}. Everything then
reduces to the tail integral

    T(r0) = integral_{r0}^infinity phi(r) rho(r)^{-2/(p-1)} dr,

with normalized capacity ncap = [((3-p)/(p-1)) T]^{-(p-1)}. The
normalization makes the Euclidean ball of radius R come out as R^{3-p}.
The upper bound of the capacity comparison combines the sphere's area
and Willmore energy through a Gauss hypergeometric factor and applies in
the reverse-Willmore regime (Willmore energy at most 16 pi).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .geometry import RadialMetric
from .numerics import QuadratureError, hyp2f1, integrate_improper, quad_adaptive

__all__ = [
    "CapacityError",
    "CapacitySolution",
    "bray_miao_bound",
    "p_capacity_radial",
    "radial_p_energy",
]

FOUR_PI = 4.0 * math.pi
SIXTEEN_PI = 16.0 * math.pi

# Tail exponents blow up as p -> 3; the quadrature is qualified only up
# to this value.
P_MAX = 2.9


class CapacityError(ValueError):
    """Invalid capacity parameters or a non-convergent tail integral."""


@dataclass(frozen=True)
class CapacitySolution:
    """Radial p-capacity data for the sphere at r0."""

    p: float
    r0: float
    ncap: float
    tail_integral: float
    potential: Tuple[Tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "r0": self.r0,
            "ncap": self.ncap,
            "tail_integral": self.tail_integral,
            "potential": [[r, u] for r, u in self.potential],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as handle:
                handle.write(text + "\n")
        return text

    def potential_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["r", "u"])
            for r, u in self.potential:
                writer.writerow([repr(r), repr(u)])


def _check_p(p: float, for_quadrature: bool) -> None:
    if not 1.0 < p < 3.0:
        raise CapacityError(f"p = {p} outside the admissible range (1, 3)")
    if for_quadrature and p > P_MAX:
        raise CapacityError(
            f"p = {p} too close to 3 for the tail quadrature; supported up to {P_MAX}"
        )


def _tail_integrand(metric: RadialMetric, exponent: float):
    def integrand(r):
        r = np.asarray(r, dtype=np.float64)
        return metric.phi(r) * metric.rho(r) ** exponent

    return integrand


def p_capacity_radial(
    metric: RadialMetric,
    r0: float,
    p: float,
    grid_points: int = 129,
) -> CapacitySolution:
    """Normalized p-capacity of the r0-sphere, with its radial potential.

    The potential is sampled on a geometric reporting grid from r0
    outward; it starts at 1 and decays to 0.
    """
    _check_p(p, for_quadrature=True)
    if grid_points < 2:
        raise CapacityError("potential grid needs at least 2 points")
    if metric.r_max is not None:
        raise CapacityError(
            "tabulated metrics end at a finite radius; the capacity tail "
            "integral needs the complete chart"
        )
    if not r0 > 0:
        raise CapacityError("r0 must be positive; points have zero capacity")
    metric.sphere_area(r0)  # domain validation

    exponent = -2.0 / (p - 1.0)
    integrand = _tail_integrand(metric, exponent)
    try:
        tail = integrate_improper(integrand, r0, rel_tol=1e-11)
    except QuadratureError as exc:
        raise CapacityError(
            f"capacity tail integral from r0 = {r0:g} did not converge: {exc}"
        ) from exc
    big_t = tail.value
    ncap = (((3.0 - p) / (p - 1.0)) * big_t) ** (-(p - 1.0))

    radii = np.geomspace(r0, 1e4 * max(1.0, r0), grid_points)
    radii[0] = r0
    increments = [0.0]
    for lo, hi in zip(radii[:-1], radii[1:]):
        increments.append(quad_adaptive(integrand, float(lo), float(hi), rel_tol=1e-11).value)
    cumulative = np.cumsum(increments)
    u = np.clip(1.0 - cumulative / big_t, 0.0, 1.0)
    potential = tuple((float(r), float(v)) for r, v in zip(radii, u))

    return CapacitySolution(
        p=float(p), r0=float(r0), ncap=float(ncap),
        tail_integral=float(big_t), potential=potential,
    )


def radial_p_energy(metric: RadialMetric, r0: float, p: float, slope) -> float:
    """Normalized p-energy of a radial test function given its derivative.

    Computes C_p * 4 pi * integral |slope|^p phi^{1-p} rho^2 dr with
    C_p = (1/4 pi)((p-1)/(3-p))^{p-1}, the same normalization as the
    capacity, so the minimizer's energy equals its ncap.
    """
    _check_p(p, for_quadrature=True)

    def integrand(r):
        r = np.asarray(r, dtype=np.float64)
        rho = metric.rho(r)
        phi = metric.phi(r)
        return np.abs(slope(r)) ** p * phi ** (1.0 - p) * rho * rho

    value = integrate_improper(integrand, r0, rel_tol=1e-10).value
    return ((p - 1.0) / (3.0 - p)) ** (p - 1.0) * value


def bray_miao_bound(area: float, willmore: float, p: float) -> float:
    """Hypergeometric upper bound for the normalized p-capacity.

    (area/4 pi)^{(3-p)/2} * 2F1(1/2, (3-p)/(p-1); 2/(p-1); z)^{-(p-1)}
    with z = 1 - willmore/16 pi; valid in the reverse-Willmore regime.
    """
    _check_p(p, for_quadrature=False)
    if not area > 0:
        raise CapacityError(f"area must be positive, got {area}")
    if willmore < -1e-12 * SIXTEEN_PI:
        raise CapacityError(f"Willmore energy must be nonnegative, got {willmore}")
    z = 1.0 - willmore / SIXTEEN_PI
    if z < -1e-12:
        raise CapacityError(
            f"Willmore energy {willmore:g} exceeds 16 pi: outside the "
            "reverse-Willmore regime where the bound applies"
        )
    z = min(max(z, 0.0), 1.0)
    factor = hyp2f1(0.5, (3.0 - p) / (p - 1.0), 2.0 / (p - 1.0), z)
    return (area / FOUR_PI) ** (0.5 * (3.0 - p)) * factor ** (-(p - 1.0))
