"""Named numerical checks of the mass inequalities, with reports.

Each check evaluates one inequality or identity on sampled data and
reports (lhs, rhs, margin, tolerance, status). A check whose hypothesis
fails on the sampled data is gated: it reports its reason and runs
nothing, rather than passing vacuously. Checks relying on ladder
extrapolation report "inconclusive" when the extrapolation tail is not
monotone, since finite data then cannot distinguish a limit from an
oscillation. Reports are deterministic: the same metric and
configuration produce byte-identical JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .capacity import CapacityError, bray_miao_bound, p_capacity_radial
from .geometry import NON_MINIMIZING_FLAG, RadialMetric
from .imcf import FlowRecord, geroch_derivative, imcf_from_pole, tail_min_area, weak_imcf
from .masses import (
    MassEstimate,
    adm_mass_limit,
    hawking_mass_limit,
    iso_mass_limit,
    p_iso_mass_limit,
)
from .numerics import extrapolate_limit

__all__ = [
    "CheckResult",
    "VerificationReport",
    "VerifyConfig",
    "VerifyError",
    "check_asymptotic_comparison",
    "check_bray_miao",
    "check_geroch",
    "check_mass_equivalence",
    "check_penrose",
    "check_profile_chain",
    "check_profile_monotonicity",
    "check_shi",
    "verify_metric",
]

FOUR_PI = 4.0 * math.pi
SIXTEEN_PI = 16.0 * math.pi

STATUSES = ("pass", "fail", "inconclusive", "skipped")

DEFAULT_TOLERANCES: Dict[str, float] = {
    "penrose": 1e-4,
    "geroch": 1e-9,
    "shi": 1e-9,
    "asymptotic_comparison": 1e-3,
    "profile_chain": 1e-6,
    "mass_equivalence": 2e-3,
    "bray_miao": 1e-9,
    "profile_monotonicity": 0.0,
}

CHECK_NAMES = tuple(sorted(DEFAULT_TOLERANCES))


class VerifyError(ValueError):
    """Invalid verification configuration."""


@dataclass(frozen=True)
class CheckResult:
    """One evaluated check: pass iff margin = rhs - lhs >= -tolerance."""

    name: str
    lhs: float
    rhs: float
    tolerance: float
    status: str
    assumptions: Tuple[str, ...] = ()
    notes: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise VerifyError(f"unknown status {self.status!r}")

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "tolerance": self.tolerance,
            "status": self.status,
            "assumptions": list(self.assumptions),
            "notes": self.notes,
        }


@dataclass(frozen=True)
class VerifyConfig:
    """Ladders and tolerance overrides shared by the checks."""

    radius_ladder: Tuple[float, ...] = (1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5)
    volume_points: int = 30
    monotonicity_points: int = 50
    p_values: Tuple[float, ...] = (1.2, 1.5, 2.0)
    flow_dt: float = 0.02
    flow_t_span: float = 6.0
    tolerances: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name in self.tolerances:
            if name not in DEFAULT_TOLERANCES:
                raise VerifyError(f"tolerance override for unknown check {name!r}")
        if len(self.radius_ladder) < 4:
            raise VerifyError("radius ladder needs at least 4 rungs to extrapolate")

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


def _status(margin: float, tol: float, inconclusive: bool = False) -> str:
    if inconclusive:
        return "inconclusive"
    return "pass" if margin >= -tol else "fail"


def _skipped(name: str, tol: float, reason: str) -> CheckResult:
    return CheckResult(
        name=name, lhs=math.nan, rhs=math.nan, tolerance=tol,
        status="skipped", notes=reason,
    )


def _scal_nonnegative(metric: RadialMetric, radii: np.ndarray) -> bool:
    return float(np.min(metric.scalar_curvature(radii))) >= -1e-8


def _probe_radii(metric: RadialMetric, config: VerifyConfig) -> np.ndarray:
    lo = metric.r_min if metric.r_min > 0 else 1e-3
    return np.geomspace(lo * 1.001, config.radius_ladder[-1], 64)


def _tail_not_monotone(*estimates: MassEstimate) -> bool:
    # The proxy fires on oscillating tails, not on converged ladders
    # whose last samples differ by roundoff jitter alone.
    for e in estimates:
        if e.extrapolation is None or e.extrapolation.monotone_tail:
            continue
        tail = [v for _, v in e.samples[-3:]]
        span = max(tail) - min(tail)
        if span > 1e-9 * max(1.0, abs(tail[-1])):
            return True
    return False


def _default_flow(metric: RadialMetric, config: VerifyConfig) -> FlowRecord:
    if metric.has_pole:
        return imcf_from_pole(
            metric, t_min=-config.flow_t_span, t_max=config.flow_t_span,
            dt=config.flow_dt,
        )
    return weak_imcf(
        metric, metric.r_min, t_max=2.0 * config.flow_t_span, dt=config.flow_dt
    )


# -- individual checks -----------------------------------------------------


def check_penrose(metric: RadialMetric, config: Optional[VerifyConfig] = None) -> CheckResult:
    """sqrt(A(r_min)/16 pi) <= isoperimetric mass, with rigidity proxy."""
    config = config or VerifyConfig()
    tol = config.tol("penrose")
    if metric.has_pole:
        return _skipped("penrose", tol, "no horizon")
    if not metric.boundary_minimal_flag:
        return _skipped("penrose", tol, "assumption violated: boundary is not minimal")
    if NON_MINIMIZING_FLAG in metric.flags:
        return _skipped(
            "penrose", tol, f"assumption violated: {NON_MINIMIZING_FLAG}"
        )
    probes = _probe_radii(metric, config)
    if not _scal_nonnegative(metric, probes):
        return _skipped(
            "penrose", tol, "assumption violated: scalar curvature negative on samples"
        )
    lhs = math.sqrt(metric.sphere_area(metric.r_min) / SIXTEEN_PI)
    iso = iso_mass_limit(metric, config.radius_ladder)
    rhs = iso.limit
    notes = "radial-exhaustion estimate"
    status = _status(rhs - lhs, tol, _tail_not_monotone(iso))
    if status == "pass" and abs(rhs - lhs) < tol:
        scal_max = float(np.max(np.abs(metric.scalar_curvature(probes))))
        if scal_max < 1e-8:
            notes = "equality case: scalar curvature vanishes on sample grid (rigidity proxy)"
        else:
            status = "fail"
            notes = "equality without vanishing scalar curvature (rigidity proxy)"
    return CheckResult(
        name="penrose", lhs=lhs, rhs=rhs, tolerance=tol, status=status,
        assumptions=iso.assumptions, notes=notes,
    )


def check_geroch(
    metric: RadialMetric,
    flow: Optional[FlowRecord] = None,
    config: Optional[VerifyConfig] = None,
) -> CheckResult:
    """Hawking mass nondecreasing along the flow, slope matching Geroch."""
    config = config or VerifyConfig()
    tol = config.tol("geroch")
    if flow is None:
        flow = _default_flow(metric, config)
    smooth = [s for s in flow.samples if not s.is_jump]
    radii = np.array([s.r for s in smooth])
    if not _scal_nonnegative(metric, radii):
        return _skipped(
            "geroch", tol, "assumption violated: scalar curvature negative on samples"
        )
    hawking = np.array([s.hawking for s in flow.samples])
    max_drop = float(np.max(hawking[:-1] - hawking[1:])) if len(hawking) > 1 else 0.0

    # Central slopes on uniform non-jump stretches vs the exact derivative.
    times = np.array([s.t for s in smooth])
    values = np.array([s.hawking for s in smooth])
    worst_rel = 0.0
    for i in range(1, len(smooth) - 1):
        dt_left = times[i] - times[i - 1]
        dt_right = times[i + 1] - times[i]
        if abs(dt_left - dt_right) > 1e-12 or dt_left <= 0:
            continue
        slope = (values[i + 1] - values[i - 1]) / (dt_left + dt_right)
        exact = geroch_derivative(metric, float(radii[i]))
        rel = abs(slope - exact) / max(1.0, abs(slope))
        worst_rel = max(worst_rel, rel)
    status = _status(-max_drop, tol)
    notes = f"max slope deviation {worst_rel:.3e} (rel, tol 1e-4)"
    if worst_rel > 1e-4:
        status = "fail"
        notes = "finite-difference slope disagrees with Geroch derivative; " + notes
    return CheckResult(
        name="geroch", lhs=max_drop, rhs=0.0, tolerance=tol, status=status,
        notes=notes,
    )


def check_shi(metric: RadialMetric, config: Optional[VerifyConfig] = None) -> CheckResult:
    """Reverse isoperimetric and reverse Willmore inequalities, pole flow."""
    config = config or VerifyConfig()
    tol = config.tol("shi")
    if not metric.has_pole:
        return _skipped(
            "shi", tol,
            "assumption violated: chart starts at a boundary, the inequality "
            "needs a complete manifold",
        )
    radii = np.geomspace(0.5, 500.0, config.volume_points)
    if not _scal_nonnegative(metric, radii):
        return _skipped(
            "shi", tol, "assumption violated: scalar curvature negative on samples"
        )
    worst_iso = -math.inf
    worst_willmore = -math.inf
    for r in radii:
        data = metric.sphere_data(float(r))
        model = (36.0 * math.pi) ** (1.0 / 3.0) * data.volume ** (2.0 / 3.0)
        worst_iso = max(worst_iso, (data.area - model) / model)
        if tail_min_area(metric, float(r))[0] >= data.area * (1.0 - 1e-12):
            worst_willmore = max(
                worst_willmore, (data.willmore - SIXTEEN_PI) / SIXTEEN_PI
            )
    lhs = max(worst_iso, worst_willmore)
    return CheckResult(
        name="shi", lhs=lhs, rhs=0.0, tolerance=tol,
        status=_status(-lhs, tol),
        notes=(
            f"area excess {worst_iso:.3e}, Willmore excess {worst_willmore:.3e} "
            "(relative)"
        ),
    )


def _chain_forms(metric: RadialMetric, r: float) -> Tuple[float, float]:
    """The de L'Hopital chain form and its Hawking-mass rewriting."""
    data = metric.sphere_data(r)
    x = math.sqrt(data.willmore / SIXTEEN_PI)
    direct = 2.0 * math.sqrt(data.area / data.willmore) * (1.0 - x)
    via_hawking = 2.0 * data.hawking / (x * (1.0 + x))
    return direct, via_hawking


def check_asymptotic_comparison(
    metric: RadialMetric, config: Optional[VerifyConfig] = None
) -> CheckResult:
    """Tail inequality m_H <= iso quotient, plus the algebraic rewriting."""
    config = config or VerifyConfig()
    tol = config.tol("asymptotic_comparison")
    identity_dev = 0.0
    for r in config.radius_ladder:
        direct, via_hawking = _chain_forms(metric, float(r))
        identity_dev = max(
            identity_dev, abs(direct - via_hawking) / max(1.0, abs(direct))
        )
    hawking = hawking_mass_limit(metric, config.radius_ladder)
    iso = iso_mass_limit(metric, config.radius_ladder)
    status = _status(iso.limit - hawking.limit, tol, _tail_not_monotone(hawking, iso))
    notes = f"algebraic identity deviation {identity_dev:.3e} (tol 1e-10)"
    if identity_dev > 1e-10:
        status = "fail"
        notes = "chain rewriting is not an identity on samples; " + notes
    return CheckResult(
        name="asymptotic_comparison", lhs=hawking.limit, rhs=iso.limit,
        tolerance=tol, status=status, assumptions=iso.assumptions, notes=notes,
    )


def check_profile_chain(
    metric: RadialMetric, config: Optional[VerifyConfig] = None
) -> CheckResult:
    """Chain inequality on the radial profile; I'(V)^2 I(V) -> 16 pi."""
    config = config or VerifyConfig()
    tol = config.tol("profile_chain")
    radii = np.asarray(config.radius_ladder, dtype=np.float64)
    # Chain comparison in the last sampled decade.
    tail = radii[radii >= radii[-1] / 10.0]
    worst = -math.inf
    for r in tail:
        data = metric.sphere_data(float(r))
        iso_form = (2.0 / data.area) * (
            data.volume - data.area**1.5 / (6.0 * math.sqrt(math.pi))
        )
        h = data.mean_curvature
        denom = 4.0 * math.sqrt(math.pi) * h * math.sqrt(data.area) + h * h * data.area
        hawking_form = 32.0 * math.pi * data.hawking / denom
        worst = max(worst, hawking_form - iso_form)
    # I'^2 I along the full ladder, extrapolated.
    samples = []
    for r in radii:
        data = metric.sphere_data(float(r))
        samples.append((float(r), data.mean_curvature**2 * data.area))
    extrap = extrapolate_limit(samples, order=2)
    rel_dev = abs(extrap.limit / SIXTEEN_PI - 1.0)
    status = _status(-worst, tol, not extrap.monotone_tail and rel_dev > 1e-3)
    notes = f"I'(V)^2 I(V) limit deviates from 16 pi by {rel_dev:.3e} (rel, tol 1e-3)"
    if rel_dev > 1e-3 and status == "pass":
        status = "fail"
        notes = "focusing product misses 16 pi; " + notes
    return CheckResult(
        name="profile_chain", lhs=worst, rhs=0.0, tolerance=tol, status=status,
        notes=notes,
    )


def check_mass_equivalence(
    metric: RadialMetric, config: Optional[VerifyConfig] = None
) -> List[CheckResult]:
    """Pairwise gaps among the extrapolated mass estimates."""
    config = config or VerifyConfig()
    tol = config.tol("mass_equivalence")
    ladder = config.radius_ladder
    estimates: List[MassEstimate] = [iso_mass_limit(metric, ladder)]
    for p in config.p_values:
        estimates.append(p_iso_mass_limit(metric, ladder, p))
        estimates.append(p_iso_mass_limit(metric, ladder, p, alternative=True))
    adm_note = ""
    if metric.is_conformal:
        estimates.append(adm_mass_limit(metric, ladder[:5]))
    else:
        adm_note = "; ADM omitted (no conformal chart)"
    limits = {e.label: e.limit for e in estimates}
    labels = sorted(limits)
    gap = 0.0
    pair = ""
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            d = abs(limits[a] - limits[b])
            if d > gap:
                gap, pair = d, f"{a} vs {b}"
    inconclusive = _tail_not_monotone(*estimates)
    gap_entry = CheckResult(
        name="mass_equivalence", lhs=gap, rhs=0.0, tolerance=tol,
        status=_status(-gap, tol, inconclusive),
        assumptions=estimates[0].assumptions,
        notes=f"largest gap at {pair}{adm_note}" if pair else adm_note.strip("; "),
    )
    iso_limit = limits["iso"]
    side_tol = 1e-3
    worst_side = -math.inf
    worst_label = ""
    for e in estimates:
        if e.kind == "p_iso":
            excess = e.limit - iso_limit
            if excess > worst_side:
                worst_side, worst_label = excess, e.label
    side_entry = CheckResult(
        name="mass_equivalence.p_iso_below_iso", lhs=worst_side, rhs=0.0,
        tolerance=side_tol, status=_status(-worst_side, side_tol, inconclusive),
        notes=f"largest excess from {worst_label}",
    )
    return [gap_entry, side_entry]


def check_bray_miao(
    metric: RadialMetric,
    ladder: Optional[Sequence[float]] = None,
    config: Optional[VerifyConfig] = None,
) -> List[CheckResult]:
    """Capacity below the area/Willmore bound at every sphere and p."""
    config = config or VerifyConfig()
    tol = config.tol("bray_miao")
    if metric.is_table:
        return [
            _skipped(
                "bray_miao", tol,
                "assumption violated: capacity needs the complete chart, "
                "tabulated metrics end at finite radius",
            )
        ]
    if ladder is None:
        base = max(1.0, 2.0 * metric.r_min)
        ladder = (base, 4.0 * base, 16.0 * base)
    probes = _probe_radii(metric, config)
    if not _scal_nonnegative(metric, probes):
        return [
            _skipped(
                "bray_miao", tol,
                "assumption violated: scalar curvature negative on samples",
            )
        ]
    worst = -math.inf
    at = ""
    for r in ladder:
        if tail_min_area(metric, float(r))[0] < metric.sphere_area(r) * (1.0 - 1e-12):
            continue  # sphere not outward minimizing, bound not applicable
        for p in config.p_values:
            ncap = p_capacity_radial(metric, float(r), p, grid_points=2).ncap
            area = metric.sphere_area(r)
            willmore = area * metric.mean_curvature(r) ** 2
            bound = bray_miao_bound(area, min(willmore, SIXTEEN_PI), p)
            excess = (ncap - bound) / max(1.0, bound)
            if excess > worst:
                worst, at = excess, f"r={r:g}, p={p:g}"
    entries = [
        CheckResult(
            name="bray_miao", lhs=worst, rhs=0.0, tolerance=tol,
            status=_status(-worst, tol), notes=f"largest relative excess at {at}",
        )
    ]
    if metric.boundary_minimal_flag:
        eq_tol = 1e-8
        ncap = p_capacity_radial(metric, metric.r_min, 2.0, grid_points=2).ncap
        area = metric.sphere_area(metric.r_min)
        bound = bray_miao_bound(area, 0.0, 2.0)
        entries.append(
            CheckResult(
                name="bray_miao.horizon_equality", lhs=abs(ncap - bound), rhs=0.0,
                tolerance=eq_tol, status=_status(-abs(ncap - bound), eq_tol),
                notes="conformal capacity of the minimal boundary meets the bound",
            )
        )
    return entries


def check_profile_monotonicity(
    metric: RadialMetric, config: Optional[VerifyConfig] = None
) -> CheckResult:
    """Area profile strictly increasing with positive first variation."""
    config = config or VerifyConfig()
    tol = config.tol("profile_monotonicity")
    lo = metric.r_min if metric.r_min > 0 else 1e-3
    hi = config.radius_ladder[-1]
    radii = np.geomspace(lo * 1.01, hi, config.monotonicity_points)
    areas = metric.sphere_area(radii)
    curvatures = metric.mean_curvature(radii)
    min_step = float(np.min(np.diff(areas) / areas[:-1]))
    min_h = float(np.min(curvatures))
    lhs = -min(min_step, min_h)
    if NON_MINIMIZING_FLAG in metric.flags:
        return CheckResult(
            name="profile_monotonicity", lhs=lhs, rhs=0.0, tolerance=tol,
            status="inconclusive",
            notes="radial profile not isoperimetric in non-outward-minimizing "
            "regions; informational only",
        )
    return CheckResult(
        name="profile_monotonicity", lhs=lhs, rhs=0.0, tolerance=tol,
        status=_status(-lhs, tol),
        notes=f"min relative area step {min_step:.3e}, min mean curvature {min_h:.3e}",
    )


# -- report assembly -------------------------------------------------------


@dataclass(frozen=True)
class VerificationReport:
    """All check results for one metric, sorted by check name."""

    checks: Tuple[CheckResult, ...]
    metadata: Dict[str, object]

    @property
    def exit_status(self) -> int:
        statuses = [c.status for c in self.checks]
        if any(s == "fail" for s in statuses):
            return 1
        if any(s == "inconclusive" for s in statuses) or not any(
            s == "pass" for s in statuses
        ):
            return 2
        return 0

    def to_dict(self) -> dict:
        return {
            "checks": [c.to_dict() for c in self.checks],
            "metadata": self.metadata,
            "exit_status": self.exit_status,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as handle:
                handle.write(text + "\n")
        return text

    def to_text(self) -> str:
        header = f"{'check':<34} {'status':<13} {'lhs':>13} {'rhs':>13} {'margin':>13}  notes"
        lines = [header, "-" * len(header)]
        for c in self.checks:
            lhs = "-" if math.isnan(c.lhs) else f"{c.lhs: .4e}"
            rhs = "-" if math.isnan(c.rhs) else f"{c.rhs: .4e}"
            margin = "-" if math.isnan(c.margin) else f"{c.margin: .4e}"
            lines.append(
                f"{c.name:<34} {c.status:<13} {lhs:>13} {rhs:>13} {margin:>13}  {c.notes}"
            )
        lines.append(f"exit status: {self.exit_status}")
        return "\n".join(lines)


def verify_metric(
    metric: RadialMetric, config: Optional[VerifyConfig] = None
) -> VerificationReport:
    """Run every applicable check and assemble the sorted report."""
    config = config or VerifyConfig()
    if metric.r_max is not None and config.radius_ladder[-1] > metric.r_max:
        raise VerifyError(
            f"radius ladder tops out at {config.radius_ladder[-1]:g} but the "
            f"tabulated chart ends at {metric.r_max:g}; configure a ladder "
            "inside the chart"
        )
    results: List[CheckResult] = []
    results.append(check_penrose(metric, config))
    results.append(check_geroch(metric, config=config))
    results.append(check_shi(metric, config))
    results.append(check_asymptotic_comparison(metric, config))
    results.append(check_profile_chain(metric, config))
    if metric.is_table:
        results.append(
            _skipped(
                "mass_equivalence", config.tol("mass_equivalence"),
                "assumption violated: capacity needs the complete chart",
            )
        )
    else:
        results.extend(check_mass_equivalence(metric, config))
    results.extend(check_bray_miao(metric, config=config))
    results.append(check_profile_monotonicity(metric, config))
    results.sort(key=lambda c: c.name)
    metadata = {
        "metric": repr(metric),
        "radius_ladder": list(config.radius_ladder),
        "volume_points": config.volume_points,
        "p_values": list(config.p_values),
        "flow_dt": config.flow_dt,
        "seeds": [],
        "tolerances": {name: config.tol(name) for name in CHECK_NAMES},
        "version": __version__,
        "extrapolation_model": "least squares in 1/scale, order 2",
    }
    return VerificationReport(checks=tuple(results), metadata=metadata)
