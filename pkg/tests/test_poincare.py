"""
Tests for sections, return maps, fixed points and spectral summaries.

The half-turn oracle has P(z) = lam^2 z on every section through its orbit;
the projection oracle has a rank-one linear return map.
"""

import logging

import numpy as np
import pytest

from hybridred import PoincareMapHandle, Section, build_model, find_periodic_orbit, spectral_summary
from hybridred.errors import NoConvergence, NoReturn, WrongSequence
from hybridred.poincare import (
    compare_sections, constant_rank_certificate, guard_handle_on_orbit, iterate_jacobian,
    iterate_jacobian_fd, level_handle_on_orbit, sample_ball, tangent_chart,
)
from hybridred.systems.oracles import halfturn_return, projectglue_jacobian


LAM = 0.8


class TestSections:
    """Charts and coordinates."""

    def test_tangent_chart_is_orthonormal(self):
        """The chart spans the hyperplane orthogonal to the normal."""
        normal = np.array([1.0, 2.0, -0.5])
        chart = tangent_chart(normal)
        assert chart.shape == (3, 2)
        np.testing.assert_allclose(chart.T @ chart, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(normal @ chart, 0.0, atol=1e-12)

    def test_axis_aligned_chart(self):
        """Axis-aligned normals give axis-aligned charts."""
        np.testing.assert_allclose(tangent_chart(np.array([1.0, 0.0])), [[0.0], [1.0]])

    def test_nonlinear_section_round_trip(self):
        """Points mapped from coordinates lie on the level set and map back."""
        section = Section.at("circle", "d", lambda s: s[0] ** 2 + s[1] ** 2 - 1.0, (0.0, 1.1))
        np.testing.assert_allclose(section.base, [0.0, 1.0], atol=1e-12)
        state = section.to_state([0.3])
        assert state.x[0] ** 2 + state.x[1] ** 2 == pytest.approx(1.0, abs=1e-12)
        assert section.coordinates(state)[0] == pytest.approx(0.3)


class TestHalfTurnReturnMap:
    """Return maps of the half-turn oracle."""

    def setup_method(self):
        """Build the oracle and its upper section."""
        self.bundle = build_model("halfturn", {"lam": LAM, "x0": 1.0})
        self.handle = self.bundle.handle("upper")

    def test_first_return_closed_form(self):
        """The return map matches the closed form on an 11-point grid."""
        for z in np.linspace(-0.4, 0.4, 11):
            expected = halfturn_return(1.0 + z, LAM) - 1.0
            assert self.handle.first_return([z])[0] == pytest.approx(expected, abs=1e-8)

    def test_fixed_point_and_period(self):
        """Newton finds the unit circle orbit with period 2 pi."""
        orbit = find_periodic_orbit(self.handle, [0.3])
        np.testing.assert_allclose(orbit.xi.x, [0.0, 1.0], atol=1e-9)
        assert orbit.period == pytest.approx(2.0 * np.pi, abs=1e-8)
        assert orbit.residual <= 1e-9
        # the returned handle is based at the fixed point
        np.testing.assert_allclose(orbit.handle.section.base, [0.0, 1.0], atol=1e-9)

    def test_spectral_summary(self):
        """One multiplier lam^2 with a constant rank profile."""
        summary = spectral_summary(self.handle)
        assert summary.section_dimension == 1
        assert summary.m == 2 and summary.rank_bound == 1
        assert summary.eigenvalues[0][0] == pytest.approx(LAM ** 2, abs=1e-6)
        assert summary.ranks == [1, 1, 1]
        assert summary.nilpotent_index == 1
        assert summary.passed

    def test_chained_jacobian_matches_differenced_iterate(self):
        """The chain-rule Jacobian of P^2 agrees with differencing P^2."""
        J, J_next = iterate_jacobian(self.handle, [0.0], 2)
        assert J[0, 0] == pytest.approx(LAM ** 4, abs=1e-6)
        assert J_next[0, 0] == pytest.approx(LAM ** 6, abs=1e-6)
        np.testing.assert_allclose(iterate_jacobian_fd(self.handle, [0.0], 2), J, atol=1e-6)

    def test_sections_share_nonzero_spectrum(self):
        """Level and guard sections through the orbit see the same multiplier."""
        orbit = find_periodic_orbit(self.handle)
        lower = self.bundle.handle("lower")
        guard = guard_handle_on_orbit(orbit, "upper_to_lower")
        level = level_handle_on_orbit(orbit, "lower", lambda s: s[0], direction=1, name="lower_mid")
        assert guard.section.kind == "guard"
        for other in (lower, guard, level):
            comparison = compare_sections(orbit.handle, other)
            assert comparison.unmatched == 0
            assert comparison.max_discrepancy <= 1e-8
            assert comparison.nonzero_b[0][0] == pytest.approx(LAM ** 2, abs=1e-8)

    def test_rebased_handle(self):
        """Rebasing moves the coordinate origin to the given point."""
        rebased = self.handle.rebased([0.5])
        np.testing.assert_allclose(rebased.section.base, [0.0, 1.5], atol=1e-12)
        assert rebased.first_return([0.0])[0] == pytest.approx(LAM ** 2 * 0.5 - 0.5, abs=1e-8)

    def test_no_return_within_event_budget(self):
        """A return needing more events than allowed raises NoReturn."""
        handle = PoincareMapHandle(self.handle.system, self.handle.section, max_events=1)
        with pytest.raises(NoReturn, match="within 1 events"):
            handle.first_return([0.0])

    def test_wrong_sequence(self):
        """A strict handle rejects an unexpected guard sequence."""
        handle = PoincareMapHandle(self.handle.system, self.handle.section,
                                   expected_sequence=("lower_to_upper", "upper_to_lower"), strict=True)
        with pytest.raises(WrongSequence, match="Unexpected guard sequence"):
            handle.first_return([0.0])

    def test_fixed_point_with_wrong_cycle_rejected(self):
        """A fixed point whose cycle differs from the declared sequence is not an orbit."""
        handle = PoincareMapHandle(self.handle.system, self.handle.section,
                                   expected_sequence=("lower_to_upper",))
        with pytest.raises(NoConvergence, match="does not match expected") as info:
            find_periodic_orbit(handle, [0.3])
        assert info.value.details["observed"] == ["upper_to_lower", "lower_to_upper"]
        assert info.value.details["expected"] == ["lower_to_upper"]

    def test_wrong_sequence_warns_when_lenient(self):
        """A lenient handle logs the unexpected sequence and still returns."""
        handle = PoincareMapHandle(self.handle.system, self.handle.section,
                                   expected_sequence=("lower_to_upper",))
        records = []
        handler = logging.Handler()
        handler.emit = records.append
        logger = logging.getLogger("hybridred.poincare")
        logger.addHandler(handler)
        try:
            handle.first_return([0.0])
        finally:
            logger.removeHandler(handler)
        assert any("Unexpected guard sequence" in r.getMessage() for r in records)


class TestProjectionOracle:
    """Rank-deficient return map across domains of unequal dimension."""

    def setup_method(self):
        """Build the oracle at its default parameters."""
        self.bundle = build_model("projectglue")
        self.handle = self.bundle.handle()

    def test_jacobian_closed_form(self):
        """DP equals the exact rank-one matrix."""
        np.testing.assert_allclose(self.handle.linearize(), projectglue_jacobian(), atol=1e-8)

    def test_rank_profile(self):
        """One nonzero multiplier, rank one at every iterate."""
        summary = spectral_summary(self.handle)
        assert summary.m == 2
        assert summary.ranks == [1, 1, 1]
        assert summary.spectral_radius == pytest.approx(0.5, abs=1e-7)
        assert summary.eigenvalues[1][0] == pytest.approx(0.0, abs=1e-7)

    def test_certificate_holds(self):
        """The sampled constant-rank certificate holds at rank one."""
        report = constant_rank_certificate(self.handle, radius=0.1, n_samples=6, k=1, seed=1)
        assert report.holds
        assert report.rank == 1
        assert report.histogram == {"1": 6}

    def test_zero_radius_certificate_is_degenerate(self):
        """A zero radius checks only the center and is flagged."""
        report = constant_rank_certificate(self.handle, radius=0.0, k=1)
        assert report.degenerate
        assert report.n_samples == 1
        assert not report.passed
        assert "zero radius" in report.reason


class TestSampling:
    """Uniform samples in a ball."""

    def test_sample_ball(self):
        """Samples have the requested shape and stay inside the radius."""
        points = sample_ball(np.random.default_rng(0), 3, 0.2, 50)
        assert points.shape == (50, 3)
        assert np.all(np.linalg.norm(points, axis=1) <= 0.2 + 1e-12)
