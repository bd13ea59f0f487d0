"""Tests for the named checks and report assembly.

Gate behavior is exercised with purpose-built metrics: a conformal bump
that keeps the horizon minimal (strict Penrose margin), a subharmonic
perturbation (negative scalar curvature, gates fire), and a tabulated
areal chart (finite domain, capacity checks skipped).
"""

import json
import math

import numpy as np
import pytest

from afmass.geometry import RadialMetric
from afmass.verify import (
    CheckResult,
    VerificationReport,
    VerifyConfig,
    VerifyError,
    check_asymptotic_comparison,
    check_bray_miao,
    check_geroch,
    check_mass_equivalence,
    check_penrose,
    check_profile_chain,
    check_profile_monotonicity,
    check_shi,
    verify_metric,
)

SIXTEEN_PI = 16.0 * math.pi


@pytest.fixture(scope="module")
def euclid():
    return RadialMetric.euclidean()


@pytest.fixture(scope="module")
def schw():
    return RadialMetric.schwarzschild(1.0)


@pytest.fixture(scope="module")
def u_family():
    return RadialMetric.conformal("1 + 0.5/sqrt(r^2+1)")


@pytest.fixture(scope="module")
def bump_horizon():
    # The extra superharmonic term vanishes from u + 2 r u' at r = 1/2,
    # so the boundary stays exactly minimal while the mass grows.
    return RadialMetric.conformal("1 + 1/(2*r) + 0.1/sqrt(r^2 + 0.25)", r_min=0.5)


@pytest.fixture(scope="module")
def negative_scal():
    # Subharmonic perturbation: scalar curvature negative, boundary
    # still minimal.
    return RadialMetric.conformal("1 + 1/(2*r) - 0.05/sqrt(r^2 + 0.25)", r_min=0.5)


@pytest.fixture(scope="module")
def neck_table():
    r = np.linspace(0.5, 40.0, 2001)
    rho = r + 1.1 * np.exp(-((r - 2.0) ** 2) / (2.0 * 0.35**2))
    return RadialMetric.from_table(r, np.ones_like(r), rho)


@pytest.fixture(scope="module")
def areal_table():
    s = np.geomspace(3.0, 1e4, 4001)
    return RadialMetric.from_table(s, 1.0 / np.sqrt(1.0 - 2.0 / s), s)


class TestPenrose:
    def test_schwarzschild_equality(self, schw):
        result = check_penrose(schw)
        assert result.status == "pass"
        assert result.lhs == pytest.approx(1.0, abs=1e-12)
        assert abs(result.margin) < 1e-4
        assert "rigidity proxy" in result.notes

    def test_bump_strict_margin(self, bump_horizon):
        result = check_penrose(bump_horizon)
        assert result.status == "pass"
        assert result.margin > 0.03

    def test_no_horizon_skip(self, euclid, u_family):
        for metric in (euclid, u_family):
            result = check_penrose(metric)
            assert result.status == "skipped"
            assert result.notes == "no horizon"
            assert math.isnan(result.lhs)

    def test_non_minimal_boundary_skip(self):
        r = np.geomspace(1.0, 500.0, 256)
        metric = RadialMetric.from_table(r, np.ones_like(r), r)
        result = check_penrose(
            metric, VerifyConfig(radius_ladder=(2.0, 10.0, 50.0, 400.0))
        )
        assert result.status == "skipped"
        assert "not minimal" in result.notes

    def test_negative_scal_gate(self, negative_scal):
        result = check_penrose(negative_scal)
        assert result.status == "skipped"
        assert "scalar curvature" in result.notes


class TestGeroch:
    def test_schwarzschild_constant(self, schw):
        result = check_geroch(schw)
        assert result.status == "pass"
        assert result.lhs < 1e-9

    def test_euclidean_zero(self, euclid):
        result = check_geroch(euclid)
        assert result.status == "pass"
        assert abs(result.lhs) < 1e-12

    def test_superharmonic_increasing(self, u_family):
        result = check_geroch(u_family)
        assert result.status == "pass"
        # strictly increasing Hawking mass: every forward step gains
        assert result.lhs < 0

    def test_negative_scal_gate(self, negative_scal):
        result = check_geroch(negative_scal)
        assert result.status == "skipped"
        assert "scalar curvature" in result.notes


class TestShi:
    def test_euclidean_equality(self, euclid):
        result = check_shi(euclid)
        assert result.status == "pass"
        assert abs(result.lhs) < 1e-10

    def test_superharmonic_margins(self, u_family):
        result = check_shi(u_family)
        assert result.status == "pass"
        assert result.lhs <= 1e-10

    def test_boundary_chart_skip(self, schw):
        result = check_shi(schw)
        assert result.status == "skipped"
        assert "complete" in result.notes

    def test_negative_scal_gate(self):
        metric = RadialMetric.conformal("1 - 0.2/sqrt(r^2 + 1)")
        result = check_shi(metric)
        assert result.status == "skipped"
        assert "scalar curvature" in result.notes


class TestAsymptoticComparison:
    def test_schwarzschild_both_one(self, schw):
        result = check_asymptotic_comparison(schw)
        assert result.status == "pass"
        assert result.lhs == pytest.approx(1.0, abs=1e-3)
        assert result.rhs == pytest.approx(1.0, abs=1e-3)

    def test_euclidean_both_zero(self, euclid):
        result = check_asymptotic_comparison(euclid)
        assert result.status == "pass"
        assert abs(result.lhs) < 1e-6
        assert abs(result.rhs) < 1e-6

    def test_identity_subcheck_reported(self, u_family):
        result = check_asymptotic_comparison(u_family)
        assert result.status == "pass"
        assert "identity deviation" in result.notes


class TestProfileChain:
    def test_euclidean_exact(self, euclid):
        result = check_profile_chain(euclid)
        assert result.status == "pass"
        assert abs(result.lhs) < 1e-10

    def test_schwarzschild(self, schw):
        result = check_profile_chain(schw)
        assert result.status == "pass"
        assert "16 pi" in result.notes

    def test_superharmonic_direction(self, u_family):
        result = check_profile_chain(u_family)
        assert result.status == "pass"
        assert result.margin >= -1e-6


class TestMassEquivalence:
    def test_schwarzschild_gaps(self, schw):
        entries = check_mass_equivalence(schw)
        assert len(entries) == 2
        gap, side = entries
        assert gap.name == "mass_equivalence"
        assert gap.status == "pass"
        assert gap.lhs < 2e-3
        assert side.name == "mass_equivalence.p_iso_below_iso"
        assert side.status == "pass"

    def test_euclidean_near_zero(self, euclid):
        gap, _ = check_mass_equivalence(euclid)
        assert gap.lhs < 1e-6

    def test_u_family_gaps(self, u_family):
        gap, side = check_mass_equivalence(u_family)
        assert gap.status == "pass"
        assert gap.lhs < 2e-3
        assert side.status == "pass"


class TestBrayMiao:
    def test_schwarzschild_entries(self, schw):
        entries = check_bray_miao(schw)
        assert [e.name for e in entries] == ["bray_miao", "bray_miao.horizon_equality"]
        assert entries[0].status == "pass"
        assert entries[1].status == "pass"
        assert entries[1].lhs < 1e-8

    def test_schwarzschild_saturates_everywhere(self, schw):
        # Every Schwarzschild sphere meets the bound to roundoff: the
        # margin is never materially positive, and never negative.
        entries = check_bray_miao(
            schw, ladder=(2.0,), config=VerifyConfig(p_values=(1.5,))
        )
        assert entries[0].status == "pass"
        assert abs(entries[0].margin) < 1e-9

    def test_strict_margin_off_model(self, u_family):
        entries = check_bray_miao(
            u_family, ladder=(2.0,), config=VerifyConfig(p_values=(1.5,))
        )
        assert entries[0].margin > 1e-3

    def test_euclidean_equality(self, euclid):
        entries = check_bray_miao(euclid)
        assert len(entries) == 1
        assert abs(entries[0].lhs) <= 1e-9

    def test_table_skip(self, areal_table):
        entries = check_bray_miao(
            areal_table, config=VerifyConfig(radius_ladder=(10.0, 100.0, 1e3, 9e3))
        )
        assert entries[0].status == "skipped"
        assert "tabulated" in entries[0].notes


class TestProfileMonotonicity:
    def test_euclidean(self, euclid):
        result = check_profile_monotonicity(euclid)
        assert result.status == "pass"

    def test_schwarzschild(self, schw):
        result = check_profile_monotonicity(schw)
        assert result.status == "pass"
        assert result.margin > 0

    def test_neck_informational(self, neck_table):
        config = VerifyConfig(radius_ladder=(0.6, 2.0, 10.0, 39.0))
        result = check_profile_monotonicity(neck_table, config)
        assert result.status == "inconclusive"
        assert "non-outward-minimizing" in result.notes


class TestReport:
    def test_schwarzschild_report(self, schw):
        report = verify_metric(schw)
        assert report.exit_status == 0
        names = [c.name for c in report.checks]
        assert names == sorted(names)
        assert sum(1 for c in report.checks if c.status != "skipped") >= 1
        penrose = next(c for c in report.checks if c.name == "penrose")
        assert penrose.status == "pass"

    def test_euclidean_report(self, euclid):
        report = verify_metric(euclid)
        assert report.exit_status == 0
        statuses = {c.name: c.status for c in report.checks}
        assert statuses["penrose"] == "skipped"
        assert statuses["shi"] == "pass"

    def test_deterministic_json(self, schw):
        first = verify_metric(schw).to_json()
        second = verify_metric(schw).to_json()
        assert first == second

    def test_json_structure(self, u_family, tmp_path):
        report = verify_metric(u_family)
        path = tmp_path / "report.json"
        report.to_json(path)
        data = json.loads(path.read_text())
        assert data["exit_status"] == report.exit_status
        assert data["metadata"]["version"]
        assert data["metadata"]["tolerances"]["penrose"] == 1e-4
        assert all("margin" in c for c in data["checks"])

    def test_text_rendering(self, schw):
        text = verify_metric(schw).to_text()
        assert "exit status: 0" in text
        assert "penrose" in text

    def test_tolerance_override_flips_to_fail(self, schw):
        config = VerifyConfig(tolerances={"penrose": 1e-9})
        report = verify_metric(schw, config)
        penrose = next(c for c in report.checks if c.name == "penrose")
        assert penrose.status == "fail"
        assert report.exit_status == 1

    def test_table_ladder_guard(self, areal_table):
        with pytest.raises(VerifyError, match="ladder"):
            verify_metric(areal_table)

    def test_table_report_with_fitting_ladder(self, areal_table):
        config = VerifyConfig(radius_ladder=(10.0, 60.0, 300.0, 1500.0, 9000.0))
        report = verify_metric(areal_table, config)
        statuses = {c.name: c.status for c in report.checks}
        assert statuses["mass_equivalence"] == "skipped"
        assert statuses["bray_miao"] == "skipped"
        assert sum(1 for c in report.checks if c.status != "skipped") >= 1
        assert report.exit_status in (0, 2)

    def test_exit_status_logic(self):
        def entry(name, status):
            return CheckResult(
                name=name, lhs=0.0, rhs=0.0, tolerance=1e-6, status=status
            )

        assert VerificationReport((entry("a", "pass"),), {}).exit_status == 0
        assert VerificationReport(
            (entry("a", "pass"), entry("b", "fail")), {}
        ).exit_status == 1
        assert VerificationReport(
            (entry("a", "pass"), entry("b", "inconclusive")), {}
        ).exit_status == 2
        assert VerificationReport((entry("a", "skipped"),), {}).exit_status == 2

    def test_config_validation(self):
        with pytest.raises(VerifyError, match="unknown check"):
            VerifyConfig(tolerances={"not_a_check": 1.0})
        with pytest.raises(VerifyError, match="rungs"):
            VerifyConfig(radius_ladder=(1.0, 10.0, 100.0))
        with pytest.raises(VerifyError, match="status"):
            CheckResult(name="x", lhs=0.0, rhs=0.0, tolerance=0.0, status="meh")
