"""Weak flow construction, jumps, and the Geroch derivative."""

import csv
import json
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from afmass.geometry import RadialMetric
from afmass.imcf import (
    ImcfError,
    geroch_derivative,
    imcf_from_pole,
    t_of_v,
    tail_min_area,
    weak_imcf,
)

FOUR_PI = 4.0 * math.pi


@pytest.fixture(scope="module")
def euclid():
    return RadialMetric.euclidean()


@pytest.fixture(scope="module")
def schw():
    return RadialMetric.schwarzschild(1.0)


@pytest.fixture(scope="module")
def bump():
    return RadialMetric.conformal("1 + 0.5/sqrt(r^2+1)")


def make_neck():
    r = np.linspace(0.5, 40.0, 2001)
    rho = r + 1.1 * np.exp(-((r - 2.0) ** 2) / (2.0 * 0.35**2))
    return RadialMetric.from_table(r, np.ones_like(r), rho)


@pytest.fixture(scope="module")
def neck():
    return make_neck()


def brute_force_jump(metric, n=20001):
    """Hull by dense running minimum; returns (r_before, r_after, area)."""
    r = np.linspace(metric.r_min, metric.r_max, n)
    area = metric.sphere_area(r)
    tail = np.minimum.accumulate(area[::-1])[::-1]
    mask = tail < area * (1.0 - 1e-12)
    idx = np.flatnonzero(mask)
    spacing = (metric.r_max - metric.r_min) / (n - 1)
    return r[idx[0]], r[idx[-1]], float(tail[idx[0]]), spacing


class TestTailMinArea:
    def test_euclidean_monotone(self, euclid):
        value, attained = tail_min_area(euclid, 2.0)
        assert value == pytest.approx(16.0 * math.pi, rel=1e-14)
        assert attained == 2.0

    def test_schwarzschild_outside_horizon(self, schw):
        value, attained = tail_min_area(schw, 0.6)
        assert value == pytest.approx(schw.sphere_area(0.6), rel=1e-14)
        assert attained == 0.6

    def test_neck_dip(self, neck):
        r_b, r_a, brute_area, spacing = brute_force_jump(neck)
        value, attained = tail_min_area(neck, 1.0)
        # Left of the neck the whole sphere family is still minimizing.
        assert value == pytest.approx(neck.sphere_area(1.0), rel=1e-12)
        inside, att_inside = tail_min_area(neck, 2.0)
        assert inside == pytest.approx(brute_area, rel=1e-6)
        assert att_inside == pytest.approx(r_a, abs=2.0 * spacing)

    def test_nondecreasing_and_dominated(self, neck):
        radii = np.linspace(0.6, 10.0, 200)
        values = [tail_min_area(neck, r)[0] for r in radii]
        assert all(b >= a * (1.0 - 1e-13) for a, b in zip(values, values[1:]))
        assert all(v <= neck.sphere_area(r) * (1.0 + 1e-13) for v, r in zip(values, radii))

    def test_shrinking_tail_rejected(self):
        r = np.linspace(1.0, 30.0, 64)
        rho = 2.0 + 1.0 / r  # areas shrink outward: no flat infinity
        with pytest.raises(ImcfError, match="asymptotically flat|dominate"):
            tail_min_area(RadialMetric.from_table(r, np.ones_like(r), rho), 1.5)


class TestBoundaryFlow:
    def test_euclidean_log_law(self, euclid):
        flow = weak_imcf(euclid, 1.0, t_max=6.0, dt=0.05)
        flow.validate()
        assert not flow.jumps
        for s in flow.samples[:: len(flow.samples) // 17]:
            assert s.r == pytest.approx(math.exp(s.t / 2.0), rel=1e-12)

    def test_schwarzschild_constant_hawking(self, schw):
        flow = weak_imcf(schw, 0.5, t_max=10.0, dt=0.02)
        flow.validate()
        assert not flow.jumps
        masses = np.array([s.hawking for s in flow.samples])
        assert np.max(np.abs(masses - 1.0)) < 1e-9

    def test_start_area_is_normalization(self, schw):
        flow = weak_imcf(schw, 0.5, t_max=1.0, dt=0.1)
        assert flow.normalization == pytest.approx(16.0 * math.pi, rel=1e-14)
        assert flow.samples[0].t == 0.0
        assert flow.samples[0].r == 0.5

    def test_horizon_beyond_hull_rejected(self, schw):
        with pytest.raises(ImcfError, match="horizon"):
            weak_imcf(schw, 0.5, t_max=30.0)

    def test_non_minimizing_start_rejected(self, neck):
        with pytest.raises(ImcfError, match="not outward minimizing"):
            weak_imcf(neck, 2.2, t_max=2.0)


@pytest.fixture(scope="module")
def neck_flow(neck):
    return weak_imcf(neck, 1.0, t_max=4.0, dt=0.02)


@pytest.fixture(scope="module")
def ball_flow():
    return imcf_from_pole(RadialMetric.euclidean(), t_min=-6.0, t_max=6.0, dt=0.05)


class TestNeckJump:
    def test_single_jump_matches_brute_force(self, neck_flow, neck):
        r_b, r_a, _, spacing = brute_force_jump(neck)
        assert len(neck_flow.jumps) == 1
        jump = neck_flow.jumps[0]
        assert jump.r_before == pytest.approx(r_b, abs=2.0 * spacing)
        assert jump.r_after == pytest.approx(r_a, abs=2.0 * spacing)

    def test_record_invariants(self, neck_flow):
        neck_flow.validate()

    def test_area_continuous_volume_jumps(self, neck_flow):
        jump_rows = [s for s in neck_flow.samples if s.is_jump]
        assert len(jump_rows) == 2
        pre, post = jump_rows
        assert pre.t == post.t
        assert post.area == pytest.approx(pre.area, rel=1e-8)
        assert post.volume > pre.volume * (1.0 + 1e-6)

    def test_w_constant_on_jump(self, neck_flow):
        # The two jump rows share one flow time: w holds its value across
        # the fattened shell while r advances.
        jump = neck_flow.jumps[0]
        assert jump.t == pytest.approx(
            math.log(jump.area / neck_flow.normalization), abs=1e-12
        )

    def test_post_jump_sphere_is_minimal(self, neck_flow, neck):
        jump = neck_flow.jumps[0]
        assert neck.mean_curvature(jump.r_after) == pytest.approx(0.0, abs=1e-8)

    def test_hawking_rises_across_jump(self, neck_flow):
        pre, post = [s for s in neck_flow.samples if s.is_jump]
        assert post.hawking > pre.hawking


class TestPoleFlow:
    def test_euclidean_ball_family(self, euclid):
        flow = imcf_from_pole(euclid, t_min=-6.0, t_max=6.0, dt=0.05)
        flow.validate()
        assert flow.origin == "pole"
        assert flow.normalization == pytest.approx(FOUR_PI)
        for s in flow.samples[:: len(flow.samples) // 13]:
            assert s.r == pytest.approx(math.exp(s.t / 2.0), rel=1e-12)

    def test_conformal_area_law(self, bump):
        flow = imcf_from_pole(bump, t_min=-8.0, t_max=8.0, dt=0.02)
        areas = np.array([s.area for s in flow.samples])
        ts = np.array([s.t for s in flow.samples])
        assert np.max(np.abs(areas / (FOUR_PI * np.exp(ts)) - 1.0)) < 1e-10

    def test_conformal_volume_oracle(self, bump):
        flow = imcf_from_pole(bump, t_min=-4.0, t_max=4.0, dt=0.1)
        for s in flow.samples[:: len(flow.samples) // 7]:
            x = np.linspace(0.0, s.r, 20001)
            u = 1.0 + 0.5 / np.sqrt(x * x + 1.0)
            f = FOUR_PI * u**6 * x * x
            w = np.ones_like(x)
            w[1:-1:2], w[2:-1:2] = 4.0, 2.0
            oracle = float(np.dot(w, f)) * (s.r / (x.size - 1)) / 3.0
            assert s.volume == pytest.approx(oracle, rel=1e-9)

    def test_boundary_chart_rejected(self, schw):
        with pytest.raises(ImcfError, match="boundary"):
            imcf_from_pole(schw)

    def test_geroch_monotone_with_positive_curvature(self, bump):
        flow = imcf_from_pole(bump, t_min=-8.0, t_max=8.0, dt=0.02)
        masses = np.array([s.hawking for s in flow.samples])
        assert np.min(np.diff(masses)) > -1e-9

    def test_reverse_willmore(self, bump):
        flow = imcf_from_pole(bump, t_min=-8.0, t_max=8.0, dt=0.02)
        for s in flow.samples:
            willmore = s.area * flow.metric.mean_curvature(s.r) ** 2
            assert willmore <= 16.0 * math.pi + 1e-9


class TestTimeOfVolume:
    def test_unit_ball(self, ball_flow):
        assert t_of_v(ball_flow, FOUR_PI / 3.0) == pytest.approx(0.0, abs=1e-10)

    def test_radius_two_ball(self, ball_flow):
        assert t_of_v(ball_flow, 32.0 * math.pi / 3.0) == pytest.approx(
            2.0 * math.log(2.0), abs=1e-10
        )

    def test_monotone_in_v(self, ball_flow):
        vs = np.geomspace(0.1, 100.0, 24)
        ts = [t_of_v(ball_flow, v) for v in vs]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_jump_gap_maps_to_jump_time(self, neck):
        flow = weak_imcf(neck, 1.0, t_max=4.0, dt=0.05)
        jump = flow.jumps[0]
        v_before = neck.enclosed_volume(neck.r_min, jump.r_before)
        v_after = neck.enclosed_volume(neck.r_min, jump.r_after)
        v_mid = 0.5 * (v_before + v_after)
        t_mid = t_of_v(flow, v_mid)
        assert t_mid == pytest.approx(jump.t, abs=1e-12)
        area_at = flow.normalization * math.exp(t_mid)
        assert area_at == pytest.approx(jump.area, rel=1e-8)

    def test_beyond_range(self, ball_flow):
        top = ball_flow.samples[-1].volume
        with pytest.raises(ImcfError, match="larger horizon"):
            t_of_v(ball_flow, 10.0 * top)
        with pytest.raises(ValueError, match="positive"):
            t_of_v(ball_flow, 0.0)


class TestShiInequality:
    def test_euclidean_equality(self):
        flow = imcf_from_pole(RadialMetric.euclidean(), t_min=-4.0, t_max=6.0, dt=0.05)
        coeff = (36.0 * math.pi) ** (1.0 / 3.0)
        for v in np.geomspace(0.05, 400.0, 20):
            area = FOUR_PI * math.exp(t_of_v(flow, v))
            assert area == pytest.approx(coeff * v ** (2.0 / 3.0), rel=1e-10)

    def test_positive_curvature_bound(self, bump):
        flow = imcf_from_pole(bump, t_min=-8.0, t_max=8.0, dt=0.02)
        coeff = (36.0 * math.pi) ** (1.0 / 3.0)
        v_lo = flow.samples[0].volume * 1.5
        v_hi = flow.samples[-1].volume * 0.9
        for v in np.geomspace(v_lo, v_hi, 30):
            area = FOUR_PI * math.exp(t_of_v(flow, v))
            assert area <= coeff * v ** (2.0 / 3.0) + 1e-9


class TestGerochDerivative:
    def test_euclidean_zero(self, euclid):
        assert geroch_derivative(euclid, 3.0) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("r", [0.6, 1.0, 10.0])
    def test_schwarzschild_zero(self, schw, r):
        assert geroch_derivative(schw, r) == pytest.approx(0.0, abs=1e-10)

    def test_matches_finite_difference(self, bump):
        h = 1e-4
        for r in np.geomspace(0.2, 20.0, 20):
            a0 = bump.sphere_area(r)

            def mass_at(t):
                radius = brentq(
                    lambda s: bump.sphere_area(s) - a0 * math.exp(t),
                    r / 3.0,
                    3.0 * r + 1.0,
                    rtol=8.0 * np.finfo(float).eps,
                )
                return bump.hawking_mass(radius)

            fd = (mass_at(h) - mass_at(-h)) / (2.0 * h)
            assert geroch_derivative(bump, r) == pytest.approx(fd, rel=1e-4)

    def test_fattening_region_rejected(self, neck):
        with pytest.raises(ImcfError, match="fattening"):
            geroch_derivative(neck, 2.2)


class TestSerialization:
    def test_csv_shape(self, tmp_path, neck):
        flow = weak_imcf(neck, 1.0, t_max=3.0, dt=0.1)
        path = tmp_path / "flow.csv"
        flow.to_csv(path)
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["t", "r", "area", "volume", "hawking", "is_jump"]
        flags = [row[5] for row in rows[1:]]
        assert flags.count("1") == 2
        assert len(rows) - 1 == len(flow.samples)

    def test_json_round_trip(self, tmp_path, euclid):
        flow = weak_imcf(euclid, 1.0, t_max=1.0, dt=0.2)
        path = tmp_path / "flow.json"
        flow.to_json(path)
        data = json.loads(path.read_text())
        assert data["origin"] == "boundary"
        assert data["normalization"] == pytest.approx(FOUR_PI)
        assert len(data["samples"]) == len(flow.samples)
        assert data["jumps"] == []
