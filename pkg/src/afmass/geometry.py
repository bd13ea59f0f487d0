"""Rotationally symmetric metrics and the geometry of their radial spheres.

A metric here is g = phi(r)^2 dr^2 + rho(r)^2 g_{S^2} on [r_min, infinity),
with r_min = 0 for complete charts where the sphere degenerates to a pole.
Built-in models (Euclidean, Schwarzschild in the isotropic chart, general
conformal factors) carry exact symbolic derivatives; tabulated models use
cubic splines over their finite range.

Every sphere quantity reduces to the two profiles:

    area            A(r) = 4 pi rho^2
    mean curvature  H(r) = 2 rho' / (rho phi)
    Hawking mass    m_H  = (rho / 2) (1 - (rho'/phi)^2)

and enclosed volume integrates 4 pi rho^2 phi. The isoperimetric view is
radial_profile, which inverts the volume and reports area and its exact
first variation dA/dV = H.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .expressions import (
    EvaluationError,
    ProfileExpression,
    VAR_R,
    parse_radial_expression,
)
from .numerics import quad_adaptive

__all__ = [
    "GeometryError",
    "RadialMetric",
    "SphereData",
    "enclosed_volume",
    "fd_derivative",
    "hawking_mass",
    "mean_curvature",
    "radial_profile",
    "scalar_curvature",
    "schwarzschild_isotropic_radius",
    "sphere_area",
]

FOUR_PI = 4.0 * math.pi

# |rho'(r_min)| below this (relative to max(1, rho)) counts as minimal.
MINIMAL_TOL = 1e-10

NON_MINIMIZING_FLAG = "non-outward-minimizing region present"


class GeometryError(ValueError):
    """Invalid metric data or a query outside the chart domain."""


def fd_derivative(func: Callable[[float], float], r: float, step: Optional[float] = None) -> float:
    """Central finite difference, the cross-check fallback for derivatives."""
    h = step if step is not None else max(1e-6, 1e-6 * abs(r))
    return (func(r + h) - func(r - h)) / (2.0 * h)


def schwarzschild_isotropic_radius(mass: float, areal_radius: float) -> float:
    """Isotropic coordinate radius of the sphere with areal radius s >= 2m.

    Inverts s = r (1 + m/2r)^2 on the branch outside the minimal sphere.
    """
    if areal_radius < 2.0 * mass:
        raise GeometryError(
            f"areal radius {areal_radius} below the minimal sphere at {2.0 * mass}"
        )
    d = areal_radius - mass
    return 0.5 * (d + math.sqrt(areal_radius * (areal_radius - 2.0 * mass)))


@dataclass(frozen=True)
class SphereData:
    """Geometric data of one radial sphere."""

    r: float
    area: float
    volume: float
    mean_curvature: float
    willmore: float
    hawking: float

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "area": self.area,
            "volume": self.volume,
            "mean_curvature": self.mean_curvature,
            "willmore": self.willmore,
            "hawking": self.hawking,
        }


class _SplineProfile:
    """Value/first/second derivative triple backed by one cubic spline."""

    def __init__(self, x: np.ndarray, y: np.ndarray):
        spline = CubicSpline(x, y, bc_type="natural")
        self.value = spline
        self.d1 = spline.derivative(1)
        self.d2 = spline.derivative(2)


class RadialMetric:
    """Immutable rotationally symmetric metric; construct via classmethods.

    Thread-safe: the only mutable state is the volume checkpoint cache,
    which stores pure-function values under a lock, so results never
    depend on query order or thread count.
    """

    def __init__(
        self,
        *,
        kind: str,
        phi,
        rho,
        r_min: float,
        r_max: Optional[float],
        has_pole: bool,
        u=None,
        mass: Optional[float] = None,
        detail: str = "",
    ):
        self._kind = kind
        self._phi = phi
        self._rho = rho
        self._u = u
        self._r_min = float(r_min)
        self._r_max = None if r_max is None else float(r_max)
        self._has_pole = bool(has_pole)
        self._mass = mass
        self._detail = detail

        self._validate_profiles()
        self._boundary_minimal = self._detect_minimal_boundary()
        self._flags = self._detect_flags()

        # Volume checkpoints double in width so V(r) at any radius sums a
        # logarithmic number of cached segment integrals plus one partial.
        self._vol_base = max(1.0, self._r_min)
        self._vol_cache: dict = {}
        self._vol_lock = threading.Lock()

    # -- construction ------------------------------------------------------

    @classmethod
    def euclidean(cls) -> "RadialMetric":
        u = parse_radial_expression("1")
        return cls._from_conformal_factor(u, r_min=0.0, kind="euclidean", detail="")

    @classmethod
    def schwarzschild(cls, mass: float) -> "RadialMetric":
        """Isotropic chart of the spatial Schwarzschild slice.

        The chart starts at the minimal sphere r_min = m/2, where the areal
        radius is 2m and the area 16 pi m^2.
        """
        if not mass > 0:
            raise GeometryError(f"mass must be positive, got {mass}")
        u = parse_radial_expression("1 + m/(2*r)", {"m": mass})
        return cls._from_conformal_factor(
            u, r_min=0.5 * mass, kind="schwarzschild", mass=mass, detail=f"m={mass:g}"
        )

    @classmethod
    def conformal(
        cls,
        u: Union[str, ProfileExpression],
        r_min: float = 0.0,
        parameters: Optional[dict] = None,
    ) -> "RadialMetric":
        """Conformally flat metric g = u^4 delta restricted to r >= r_min."""
        if isinstance(u, str):
            profile = parse_radial_expression(u, parameters)
        else:
            profile = u
        if r_min < 0:
            raise GeometryError(f"r_min must be nonnegative, got {r_min}")
        return cls._from_conformal_factor(
            profile, r_min=r_min, kind="conformal", detail=profile.source
        )

    @classmethod
    def _from_conformal_factor(cls, u: ProfileExpression, *, r_min, kind, mass=None, detail=""):
        e = u.expr
        phi = ProfileExpression(e * e)
        rho = ProfileExpression(e * e * VAR_R)
        return cls(
            kind=kind,
            phi=phi,
            rho=rho,
            u=u,
            r_min=r_min,
            r_max=None,
            has_pole=(r_min == 0.0),
            mass=mass,
            detail=detail,
        )

    @classmethod
    def from_table(cls, r, phi, rho) -> "RadialMetric":
        """Tabulated metric; natural cubic splines over the given range.

        Queries are confined to [r[0], r[-1]]; the spline is never
        extrapolated.
        """
        r = np.asarray(r, dtype=np.float64)
        phi = np.asarray(phi, dtype=np.float64)
        rho = np.asarray(rho, dtype=np.float64)
        if r.ndim != 1 or r.shape != phi.shape or r.shape != rho.shape:
            raise GeometryError("r, phi, rho must be 1-d arrays of equal length")
        if r.size < 16:
            raise GeometryError(f"need at least 16 rows, got {r.size}")
        if not np.isfinite(r).all() or not np.isfinite(phi).all() or not np.isfinite(rho).all():
            raise GeometryError("table contains non-finite entries")
        if not np.all(np.diff(r) > 0):
            raise GeometryError("radii must be strictly increasing")
        if r[0] < 0:
            raise GeometryError("radii must be nonnegative")
        if np.any(phi <= 0) or np.any(rho <= 0):
            raise GeometryError("phi and rho must be positive")
        return cls(
            kind="warped",
            phi=_SplineProfile(r, phi),
            rho=_SplineProfile(r, rho),
            r_min=float(r[0]),
            r_max=float(r[-1]),
            has_pole=False,
            detail=f"table[{r.size}]",
        )

    @classmethod
    def from_csv(cls, path) -> "RadialMetric":
        """Load a tabulated metric from CSV with header ``r,phi,rho``."""
        rows = []
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise GeometryError(f"{path}: empty file") from None
            if [h.strip() for h in header] != ["r", "phi", "rho"]:
                raise GeometryError(
                    f"{path}: expected header 'r,phi,rho', got {','.join(header)!r}"
                )
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                if len(row) != 3:
                    raise GeometryError(f"{path}:{lineno}: expected 3 columns")
                try:
                    rows.append([float(cell) for cell in row])
                except ValueError as exc:
                    raise GeometryError(f"{path}:{lineno}: {exc}") from None
        if not rows:
            raise GeometryError(f"{path}: no data rows")
        data = np.array(rows)
        return cls.from_table(data[:, 0], data[:, 1], data[:, 2])

    # -- validation --------------------------------------------------------

    def _probe_radii(self) -> np.ndarray:
        if self._r_max is not None:
            return np.linspace(self._r_min, self._r_max, 513)
        lo = self._r_min if self._r_min > 0 else 1e-6
        hi = max(1e4, 100.0 * lo)
        radii = np.geomspace(lo, hi, 257)
        if self._r_min > 0:
            radii[0] = self._r_min
        return radii

    def _validate_profiles(self) -> None:
        radii = self._probe_radii()
        try:
            phi = self._phi.value(radii)
            rho = self._rho.value(radii)
        except EvaluationError as exc:
            raise GeometryError(f"profile undefined on the chart: {exc}") from exc
        if np.any(~np.isfinite(phi)) or np.any(phi <= 0):
            bad = float(radii[np.flatnonzero(~np.isfinite(phi) | (phi <= 0))[0]])
            raise GeometryError(f"lapse not positive at r = {bad:g}")
        interior = radii > 0
        if np.any(~np.isfinite(rho[interior])) or np.any(rho[interior] <= 0):
            idx = np.flatnonzero(~np.isfinite(rho) | ((rho <= 0) & interior))
            raise GeometryError(f"areal radius not positive at r = {float(radii[idx[0]]):g}")
        if self._u is not None:
            u = np.atleast_1d(self._u.value(radii))
            if np.any(u <= 0):
                bad = float(radii[np.flatnonzero(u <= 0)[0]])
                raise GeometryError(f"conformal factor not positive at r = {bad:g}")
        if self._has_pole:
            try:
                at_pole = self._rho.value(0.0)
            except EvaluationError as exc:
                raise GeometryError(
                    f"complete chart needs rho finite at the pole: {exc}"
                ) from exc
            if not math.isfinite(at_pole) or abs(at_pole) > 1e-12:
                raise GeometryError(f"rho(0) = {at_pole:g} but a pole chart needs rho(0) = 0")

    def _detect_minimal_boundary(self) -> bool:
        if self._has_pole or self._r_min <= 0:
            return False
        slope = float(self._rho.d1(self._r_min))
        size = float(self._rho.value(self._r_min))
        return abs(slope) <= MINIMAL_TOL * max(1.0, abs(size))

    def _detect_flags(self) -> Tuple[str, ...]:
        radii = self._probe_radii()
        slopes = self._rho.d1(radii)
        if np.any(slopes < -1e-10):
            return (NON_MINIMIZING_FLAG,)
        return ()

    # -- basic accessors ---------------------------------------------------

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def kind_tag(self) -> str:
        return f"{self._kind}({self._detail})" if self._detail else self._kind

    @property
    def r_min(self) -> float:
        return self._r_min

    @property
    def r_max(self) -> Optional[float]:
        """Upper end of the chart; None when it extends to infinity."""
        return self._r_max

    @property
    def has_pole(self) -> bool:
        return self._has_pole

    @property
    def is_table(self) -> bool:
        return self._r_max is not None

    @property
    def is_conformal(self) -> bool:
        return self._u is not None

    @property
    def mass_parameter(self) -> Optional[float]:
        return self._mass

    @property
    def boundary_minimal_flag(self) -> bool:
        return self._boundary_minimal

    @property
    def flags(self) -> Tuple[str, ...]:
        return self._flags

    def _domain(self, r, *, exclude_pole: bool = False):
        """Validate radii, returning (array, scalar_flag)."""
        arr = np.asarray(r, dtype=np.float64)
        scalar = arr.ndim == 0
        arr = np.atleast_1d(arr).astype(np.float64)
        if not np.isfinite(arr).all():
            raise GeometryError("non-finite radius")
        slack = 1e-12 * max(1.0, abs(self._r_min))
        if np.any(arr < self._r_min - slack):
            low = float(arr[arr < self._r_min - slack][0])
            raise GeometryError(f"r = {low:g} below the chart start r_min = {self._r_min:g}")
        if self._r_max is not None:
            upper_slack = 1e-12 * max(1.0, self._r_max)
            if np.any(arr > self._r_max + upper_slack):
                high = float(arr[arr > self._r_max + upper_slack][0])
                raise GeometryError(
                    f"r = {high:g} beyond the tabulated range ending at {self._r_max:g}"
                )
            arr = np.minimum(arr, self._r_max)
        arr = np.maximum(arr, self._r_min)
        if exclude_pole and self._has_pole and np.any(arr == 0.0):
            raise GeometryError("quantity undefined at the pole r = 0")
        return arr, scalar

    @staticmethod
    def _out(values: np.ndarray, scalar: bool):
        return float(values[0]) if scalar else values

    def phi(self, r):
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._phi.value(arr)), scalar)

    def dphi(self, r):
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._phi.d1(arr)), scalar)

    def rho(self, r):
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._rho.value(arr)), scalar)

    def drho(self, r):
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._rho.d1(arr)), scalar)

    def d2rho(self, r):
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._rho.d2(arr)), scalar)

    def conformal_factor(self, r):
        if self._u is None:
            raise GeometryError(f"{self._kind} metric has no conformal factor")
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._u.value(arr)), scalar)

    def conformal_factor_derivative(self, r):
        if self._u is None:
            raise GeometryError(f"{self._kind} metric has no conformal factor")
        arr, scalar = self._domain(r)
        return self._out(np.atleast_1d(self._u.d1(arr)), scalar)

    # -- sphere quantities -------------------------------------------------

    def sphere_area(self, r):
        arr, scalar = self._domain(r)
        rho = np.atleast_1d(self._rho.value(arr))
        return self._out(FOUR_PI * rho * rho, scalar)

    def mean_curvature(self, r):
        arr, scalar = self._domain(r, exclude_pole=True)
        rho = np.atleast_1d(self._rho.value(arr))
        drho = np.atleast_1d(self._rho.d1(arr))
        phi = np.atleast_1d(self._phi.value(arr))
        return self._out(2.0 * drho / (rho * phi), scalar)

    def hawking_mass(self, r):
        """(rho/2)(1 - (rho'/phi)^2), the Hawking mass of the r-sphere.

        This is sqrt(A/16 pi)(1 - A H^2/16 pi) written in the radial
        profiles; the Willmore energy of a round sphere is A H^2.
        """
        arr, scalar = self._domain(r, exclude_pole=True)
        rho = np.atleast_1d(self._rho.value(arr))
        drho = np.atleast_1d(self._rho.d1(arr))
        phi = np.atleast_1d(self._phi.value(arr))
        ratio = drho / phi
        return self._out(0.5 * rho * (1.0 - ratio * ratio), scalar)

    def scalar_curvature(self, r):
        """Scalar curvature of the metric at radius r.

        Conformal models use Scal = -8 u^-5 (u'' + 2u'/r); the general
        warped-product expression covers tabulated profiles. Both are
        exact given exact profile derivatives and agree to roundoff.
        """
        arr, scalar = self._domain(r, exclude_pole=True)
        if self._u is not None:
            u = np.atleast_1d(self._u.value(arr))
            du = np.atleast_1d(self._u.d1(arr))
            d2u = np.atleast_1d(self._u.d2(arr))
            lap = d2u + 2.0 * du / arr
            return self._out(-8.0 * lap / u**5, scalar)
        rho = np.atleast_1d(self._rho.value(arr))
        drho = np.atleast_1d(self._rho.d1(arr))
        d2rho = np.atleast_1d(self._rho.d2(arr))
        phi = np.atleast_1d(self._phi.value(arr))
        dphi = np.atleast_1d(self._phi.d1(arr))
        phi2 = phi * phi
        val = (
            2.0 / rho**2
            - 2.0 * drho**2 / (phi2 * rho**2)
            - 4.0 * d2rho / (phi2 * rho)
            + 4.0 * drho * dphi / (phi2 * phi * rho)
        )
        return self._out(val, scalar)

    def flatness_defects(self, r):
        """(|rho/r - 1|, |phi - 1|), the asymptotic-flatness diagnostics."""
        arr, scalar = self._domain(r, exclude_pole=True)
        rho = np.atleast_1d(self._rho.value(arr))
        phi = np.atleast_1d(self._phi.value(arr))
        areal = np.abs(rho / arr - 1.0)
        lapse = np.abs(phi - 1.0)
        if scalar:
            return float(areal[0]), float(lapse[0])
        return areal, lapse

    def is_asymptotically_flat(self, tol: float = 1e-2, radii: Optional[Sequence[float]] = None) -> bool:
        """Both defects below tol at the far end of a diagnostic ladder."""
        if radii is None:
            if self._r_max is not None:
                hi = self._r_max
                lo = max(self._r_min, hi / 100.0)
                if lo <= 0:
                    lo = hi / 100.0
            else:
                lo = max(10.0, 10.0 * max(self._r_min, 0.1))
                hi = 1000.0 * lo
            radii = np.geomspace(lo, hi, 9)
        areal, lapse = self.flatness_defects(np.asarray(radii, dtype=np.float64))
        return bool(areal[-1] <= tol and lapse[-1] <= tol)

    # -- volume ------------------------------------------------------------

    def _volume_integrand(self, s):
        s = np.asarray(s, dtype=np.float64)
        rho = self._rho.value(s)
        return FOUR_PI * rho * rho * self._phi.value(s)

    def _checkpoint(self, k: int) -> float:
        return self._r_min + self._vol_base * (2.0**k - 1.0)

    def _segment(self, k: int) -> float:
        with self._vol_lock:
            cached = self._vol_cache.get(k)
        if cached is not None:
            return cached
        lo, hi = self._checkpoint(k), self._checkpoint(k + 1)
        if self._r_max is not None:
            hi = min(hi, self._r_max)
        value = quad_adaptive(self._volume_integrand, lo, hi, rel_tol=1e-13).value
        with self._vol_lock:
            self._vol_cache[k] = value
        return value

    def _volume_from_start(self, r: float) -> float:
        if r <= self._r_min:
            return 0.0
        parts = []
        k = 0
        while self._checkpoint(k + 1) <= r:
            parts.append(self._segment(k))
            k += 1
        low = self._checkpoint(k)
        if r > low:
            parts.append(quad_adaptive(self._volume_integrand, low, r, rel_tol=1e-13).value)
        return math.fsum(parts)

    def enclosed_volume(self, r1, r2) -> float:
        """Volume of the region between the r1- and r2-spheres."""
        a1, _ = self._domain(r1)
        a2, _ = self._domain(r2)
        lo, hi = float(a1[0]), float(a2[0])
        if hi < lo:
            raise GeometryError(f"need r1 <= r2, got ({lo:g}, {hi:g})")
        return self._volume_from_start(hi) - self._volume_from_start(lo)

    def sphere_data(self, r) -> SphereData:
        """All sphere quantities at one radius, volume taken from r_min."""
        arr, _ = self._domain(r, exclude_pole=True)
        radius = float(arr[0])
        area = self.sphere_area(radius)
        h = self.mean_curvature(radius)
        return SphereData(
            r=radius,
            area=area,
            volume=self._volume_from_start(radius),
            mean_curvature=h,
            willmore=area * h * h,
            hawking=self.hawking_mass(radius),
        )

    def radial_profile(self, volume: float) -> Tuple[float, float, float]:
        """(r(V), A(r(V)), H(r(V))): the radial isoperimetric profile.

        dA/dV = H exactly for radial spheres, so the derivative slot needs
        no differencing.
        """
        if volume < 0:
            raise GeometryError(f"volume must be nonnegative, got {volume}")
        if volume == 0.0:
            r = self._r_min
            if self._has_pole:
                return 0.0, 0.0, math.inf
            return r, self.sphere_area(r), self.mean_curvature(r)
        hi = max(2.0 * max(self._r_min, 1.0), 1.0)
        if self._r_max is not None:
            top = self._volume_from_start(self._r_max)
            if volume > top * (1.0 + 1e-12):
                raise GeometryError(
                    f"volume {volume:g} exceeds the tabulated range's total {top:g}"
                )
            hi = self._r_max
        else:
            while self._volume_from_start(hi) < volume:
                hi *= 2.0
                if hi > 1e12:
                    raise GeometryError(f"failed to bracket volume {volume:g}")
        r = brentq(
            lambda s: self._volume_from_start(s) - volume,
            self._r_min,
            hi,
            xtol=1e-15 * max(1.0, hi),
            rtol=8.0 * np.finfo(float).eps,
        )
        return float(r), self.sphere_area(r), self.mean_curvature(r)

    def __repr__(self) -> str:
        return f"RadialMetric({self.kind_tag}, r_min={self._r_min:g})"


# -- operation-level wrappers ----------------------------------------------

def sphere_area(metric: RadialMetric, r):
    return metric.sphere_area(r)


def mean_curvature(metric: RadialMetric, r):
    return metric.mean_curvature(r)


def enclosed_volume(metric: RadialMetric, r1, r2) -> float:
    return metric.enclosed_volume(r1, r2)


def scalar_curvature(metric: RadialMetric, r):
    return metric.scalar_curvature(r)


def hawking_mass(metric: RadialMetric, r):
    return metric.hawking_mass(r)


def radial_profile(metric: RadialMetric, volume: float) -> Tuple[float, float, float]:
    return metric.radial_profile(volume)
