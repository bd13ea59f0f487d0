"""Acceptance gate: the twelve release criteria, one test each.

Run with ``python3 -m pytest tests/test_acceptance.py -v`` to get one
pass/fail line per criterion. Tolerances here are contractual; do not
loosen them to make a failing build green.
"""

import json
import math

import numpy as np
import pytest

from afmass.capacity import bray_miao_bound, p_capacity_radial
from afmass.cli import main as cli_main
from afmass.geometry import RadialMetric, schwarzschild_isotropic_radius
from afmass.imcf import geroch_derivative, imcf_from_pole, t_of_v, weak_imcf
from afmass.masses import (
    adm_mass_limit,
    conformal_adm_flux,
    hawking_mass_limit,
    iso_mass_limit,
    p_iso_mass_limit,
)
from afmass.numerics import hyp2f1

LADDER = (1e2, 3e2, 1e3, 3e3, 1e4, 3e4, 1e5)
POWER_LADDER = (1e2, 1e3, 1e4, 1e5)


@pytest.fixture(scope="module")
def schw():
    return RadialMetric.schwarzschild(1.0)


@pytest.fixture(scope="module")
def euclid():
    return RadialMetric.euclidean()


@pytest.fixture(scope="module")
def u_family():
    return RadialMetric.conformal("1 + 0.5/sqrt(r^2 + 1)")


def test_01_schwarzschild_hawking_constancy(schw):
    for areal in (3.0, 10.0, 100.0):
        r = schwarzschild_isotropic_radius(1.0, areal)
        data = schw.sphere_data(r)
        assert data.hawking == pytest.approx(1.0, abs=1e-10)


def test_02_penrose_equality_case(schw):
    horizon_mass = math.sqrt(schw.sphere_area(schw.r_min) / (16.0 * math.pi))
    assert horizon_mass == pytest.approx(1.0, abs=1e-10)
    estimate = iso_mass_limit(schw, POWER_LADDER)
    assert estimate.limit == pytest.approx(1.0, abs=1e-4)


def test_03_adm_recovery(schw):
    estimate = adm_mass_limit(schw, LADDER)
    assert estimate.limit == pytest.approx(1.0, abs=1e-3)
    for radius, flux in estimate.samples:
        assert flux == pytest.approx(conformal_adm_flux(schw, radius), abs=1e-6)


def test_04_euclidean_zero_and_capacity_normalization(euclid):
    estimates = [
        iso_mass_limit(euclid, LADDER),
        p_iso_mass_limit(euclid, LADDER, 2.0),
        p_iso_mass_limit(euclid, LADDER, 2.0, alternative=True),
        adm_mass_limit(euclid, LADDER),
        hawking_mass_limit(euclid, LADDER),
    ]
    assert len(estimates) == 5
    for estimate in estimates:
        assert abs(estimate.limit) < 1e-6, estimate.label
    for p in (1.5, 2.0, 2.5):
        for radius in (0.5, 1.0, 4.0):
            solution = p_capacity_radial(euclid, radius, p)
            assert solution.ncap == pytest.approx(radius ** (3.0 - p), abs=1e-9)


def test_05_schwarzschild_2_capacity(schw):
    solution = p_capacity_radial(schw, schw.r_min, 2.0)
    assert solution.ncap == pytest.approx(1.0, abs=1e-8)
    data = schw.sphere_data(schw.r_min)
    bound = bray_miao_bound(data.area, data.willmore, 2.0)
    assert solution.ncap == pytest.approx(bound, abs=1e-8)


def test_06_geroch_derivative_matches_flow(u_family):
    flow = imcf_from_pole(u_family, t_min=-2.0, t_max=6.0, dt=0.01)
    smooth = [s for s in flow.samples if not s.is_jump]
    hawking = np.array([s.hawking for s in smooth])
    assert np.all(np.diff(hawking) >= -1e-12)
    indices = np.linspace(5, len(smooth) - 6, 20).astype(int)
    for i in indices:
        dt = smooth[i + 1].t - smooth[i - 1].t
        slope = (smooth[i + 1].hawking - smooth[i - 1].hawking) / dt
        exact = geroch_derivative(u_family, smooth[i].r)
        assert slope == pytest.approx(exact, rel=1e-4, abs=1e-12)


def test_07_shi_reverse_isoperimetric(u_family, euclid):
    volumes = np.geomspace(0.5, 5e4, 30)
    for v in volumes:
        _, area, _ = u_family.radial_profile(v)
        assert area <= (36.0 * math.pi) ** (1.0 / 3.0) * v ** (2.0 / 3.0) + 1e-9
    for v in (1.0, 100.0):
        _, area, _ = euclid.radial_profile(v)
        euclidean_area = (36.0 * math.pi) ** (1.0 / 3.0) * v ** (2.0 / 3.0)
        assert area == pytest.approx(euclidean_area, abs=1e-10)


def test_08_jump_semantics_on_neck():
    r = np.linspace(0.5, 40.0, 2001)
    rho = r + 1.1 * np.exp(-((r - 2.0) ** 2) / (2.0 * 0.35**2))
    neck = RadialMetric.from_table(r, np.ones_like(r), rho)

    # brute-force hull: dense running minimum of area from the far end
    dense = np.linspace(neck.r_min, neck.r_max, 20001)
    area = neck.sphere_area(dense)
    tail = np.minimum.accumulate(area[::-1])[::-1]
    strict = tail < area * (1.0 - 1e-12)
    covered = np.flatnonzero(strict)
    brute_before, brute_after = dense[covered[0]], dense[covered[-1]]
    spacing = (neck.r_max - neck.r_min) / (len(dense) - 1)

    flow = weak_imcf(neck, 0.6, t_max=8.0, dt=0.005)
    assert len(flow.jumps) == 1
    jump = flow.jumps[0]
    assert jump.r_before == pytest.approx(brute_before, abs=2.0 * spacing)
    assert jump.r_after == pytest.approx(brute_after, abs=2.0 * spacing)

    area_before = neck.sphere_area(jump.r_before)
    area_after = neck.sphere_area(jump.r_after)
    assert area_after == pytest.approx(area_before, rel=1e-8)

    # the level-set function stays nondecreasing through the fattening
    times = [s.t for s in flow.samples]
    radii = [s.r for s in flow.samples]
    assert all(b >= a for a, b in zip(times, times[1:]))
    assert all(b >= a for a, b in zip(radii, radii[1:]))


def test_09_hypergeometric_kernel():
    for z in np.linspace(0.0, 0.99, 100):
        value = hyp2f1(0.5, 1.0, 2.0, float(z))
        closed = 1.0 if z == 0.0 else 2.0 * (1.0 - math.sqrt(1.0 - z)) / z
        assert value == pytest.approx(closed, abs=1e-12)
    assert hyp2f1(0.5, 1.0, 2.0, 1.0) == pytest.approx(2.0, abs=1e-12)


def test_10_mass_equivalence(schw, euclid, u_family):
    for metric in (schw, u_family):
        estimates = [iso_mass_limit(metric, LADDER), adm_mass_limit(metric, LADDER)]
        for p in (1.2, 1.5, 2.0):
            estimates.append(p_iso_mass_limit(metric, LADDER, p))
            estimates.append(p_iso_mass_limit(metric, LADDER, p, alternative=True))
        limits = [e.limit for e in estimates]
        for i in range(len(limits)):
            for j in range(i + 1, len(limits)):
                gap = abs(limits[i] - limits[j])
                assert gap < 2e-3, (estimates[i].label, estimates[j].label, gap)
    for metric in (euclid, schw, u_family):
        iso = iso_mass_limit(metric, LADDER).limit
        for p in (1.2, 1.5, 2.0):
            p_iso = p_iso_mass_limit(metric, LADDER, p).limit
            assert p_iso <= iso + 1e-3


def test_11_profile_identities(schw):
    volumes = np.geomspace(1.0, 1e6, 12)
    areas = []
    for v in volumes:
        _, area, mean_curvature = schw.radial_profile(v)
        areas.append(area)
        dv = 1e-5 * v
        _, area_hi, _ = schw.radial_profile(v + dv)
        _, area_lo, _ = schw.radial_profile(v - dv)
        slope = (area_hi - area_lo) / (2.0 * dv)
        assert slope == pytest.approx(mean_curvature, rel=1e-5)
    assert all(b > a for a, b in zip(areas, areas[1:]))

    # I'(V)^2 I(V) -> 16 pi along a growing volume ladder
    tail_volumes = np.geomspace(1e7, 1e13, 7)
    products = []
    for v in tail_volumes:
        _, area, mean_curvature = schw.radial_profile(v)
        products.append(mean_curvature**2 * area)
    assert products[-1] == pytest.approx(16.0 * math.pi, rel=1e-3)


def test_12_determinism(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {"command": "verify", "metric": {"type": "schwarzschild", "mass": 1.0}}
        )
    )
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli_main([str(config), "--stable-output", "--out", str(out)]) == 0
        outputs.append((out / "verify.json").read_bytes())
    assert outputs[0] == outputs[1]
