"""
Tests for deadbeat synthesis on controlled return maps.

The half-turn oracle with a perturbed upward reset has the closed-form
deadbeat input halfturn_deadbeat; the linear oracles have P(z, theta) = A z + B theta.
"""

import numpy as np
import pytest

from hybridred import (
    ControlledReturnMap, ControlOptions, DeadbeatLaw, OutputConstraint, build_model, control_analysis,
    structural_stability_probe, synth_deadbeat_multicycle, synth_deadbeat_onecycle, synth_linear_deadbeat,
)
from hybridred.control import LawKind, build_law, deadbeat_report
from hybridred.errors import ConfigError, NotStabilizable, RankDeficient
from hybridred.models import AnalysisOptions, Verdict
from hybridred.reduction import analyze_reduction
from hybridred.systems.hopper import make_hopper
from hybridred.systems.oracles import halfturn_deadbeat, make_halfturn


class TestLinearDeadbeat:
    """Gain synthesis placing every closed-loop eigenvalue at zero."""

    def test_companion_pair(self):
        """The double integrator needs two cycles."""
        A = np.array([[1.0, 1.0], [0.0, 1.0]])
        B = np.array([[0.0], [1.0]])
        gain, k = synth_linear_deadbeat(A, B)
        assert k == 2
        np.testing.assert_allclose(gain, [[-1.0, -2.0]], atol=1e-12)
        closed = A + B @ gain
        assert np.linalg.matrix_rank(closed) == 1
        np.testing.assert_allclose(closed @ closed, 0.0, atol=1e-12)

    def test_random_controllable_pairs(self):
        """(A + B Psi)^k vanishes for generic controllable pairs."""
        rng = np.random.default_rng(7)
        for n, p in ((3, 1), (4, 2), (5, 2)):
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, p))
            gain, k = synth_linear_deadbeat(A, B)
            assert k <= n
            power = np.linalg.matrix_power(A + B @ gain, k)
            assert np.linalg.norm(power) <= 1e-8 * max(1.0, np.linalg.norm(A)) ** k

    def test_uncontrollable_pair(self):
        """An unstable mode outside the reach of the input cannot be removed."""
        with pytest.raises(NotStabilizable, match="can be steered") as info:
            synth_linear_deadbeat(np.diag([0.5, 2.0]), [[1.0], [0.0]])
        assert info.value.details["reachable_dim"] == 1

    def test_invariant_target(self):
        """Steering into an invariant target handles the uncontrollable mode."""
        gain, k = synth_linear_deadbeat(np.diag([0.5, 2.0]), [[1.0], [0.0]], target=[[0.0], [1.0]])
        assert k == 1
        np.testing.assert_allclose(gain, [[-0.5, 0.0]], atol=1e-12)

    def test_target_not_invariant(self):
        """A target the input cannot keep invariant is rejected."""
        with pytest.raises(NotStabilizable, match="not controlled invariant"):
            synth_linear_deadbeat([[0.0, 1.0], [1.0, 0.0]], [[1.0], [0.0]], target=[[1.0], [0.0]])


class TestLinearOraclePlant:
    """Deadbeat laws on the companion oracle, through the hybrid execution."""

    def setup_method(self):
        """Controlled return map of the companion oracle."""
        self.bundle = build_model("linear", {"variant": "companion"})
        self.plant = ControlledReturnMap.from_bundle(self.bundle)

    def test_linearization(self):
        """The differenced blocks recover A and B."""
        A, B = self.plant.linearize_control()
        np.testing.assert_allclose(A, self.bundle.extras["A"], atol=1e-8)
        np.testing.assert_allclose(B, self.bundle.extras["B"], atol=1e-8)

    def test_one_cycle_is_rank_deficient(self):
        """One scalar input cannot zero a two-dimensional state in one cycle."""
        with pytest.raises(RankDeficient, match="multi-cycle") as info:
            synth_deadbeat_onecycle(self.plant)
        assert (info.value.achieved, info.value.required) == (1, 2)
        assert info.value.exit_code == 3

    def test_two_cycle_law(self):
        """Two cycles of input return any nearby point to the fixed point."""
        law = synth_deadbeat_multicycle(self.plant, 2)
        assert law.horizon == 2 and law.achieved_rank == 2
        z = np.array([0.03, -0.02])
        assert law.psi(z).shape == (2, 1)
        np.testing.assert_allclose(law.closed_loop_return(z), 0.0, atol=1e-9)

    def test_linear_feedback_law(self):
        """The linear law reaches the fixed point after its horizon."""
        law = build_law(self.plant, ControlOptions(law="linear"))
        assert law.kind == LawKind.LINEAR_FEEDBACK
        np.testing.assert_allclose(law.gain, [[-1.0, -2.0]], atol=1e-6)
        report = deadbeat_report(law, ControlOptions(law="linear", ball_radius=0.1, n_samples=4))
        assert report.k == 2
        assert report.max_residual <= 1e-8
        assert report.closed_loop_rank == 1

    def test_partial_law(self):
        """An output constraint needs only as much input rank as it has outputs."""
        law = synth_deadbeat_onecycle(self.plant, OutputConstraint(lambda z: z[1:], 1))
        assert (law.achieved_rank, law.required_rank) == (1, 1)
        z = np.array([0.3, 0.2])
        assert law.psi(z)[0, 0] == pytest.approx(-0.2, abs=1e-9)
        assert law.closed_loop_return(z)[1] == pytest.approx(0.0, abs=1e-9)

    def test_unreachable_output(self):
        """An output the input does not move is rank deficient."""
        with pytest.raises(RankDeficient):
            synth_deadbeat_onecycle(self.plant, OutputConstraint(lambda z: z[:1], 1))

    def test_constraint_must_vanish_at_fixed_point(self):
        """Constraints nonzero at the fixed point are configuration errors."""
        with pytest.raises(ConfigError, match="does not vanish"):
            synth_deadbeat_onecycle(self.plant, OutputConstraint(lambda z: z[1:] + 1.0, 1))

    def test_control_analysis_recommends_more_cycles(self):
        """A failed one-cycle synthesis becomes a report with advice."""
        report = control_analysis(self.bundle, ControlOptions(law="onecycle"))
        assert report.achieved_rank == 1 and report.required_rank == 2
        assert "multi-cycle law with k > 1" in report.recommendation
        assert not report.residuals


class TestLawValidation:
    """Construction checks on DeadbeatLaw."""

    def setup_method(self):
        """Plant of the companion oracle."""
        self.plant = ControlledReturnMap.from_bundle(build_model("linear", {"variant": "companion"}))

    def test_horizon_must_be_positive(self):
        """k = 0 is rejected."""
        with pytest.raises(ValueError, match="k >= 1"):
            DeadbeatLaw(LawKind.ONE_CYCLE, self.plant, 0)

    def test_linear_law_needs_gain(self):
        """A linear law without a gain is rejected."""
        with pytest.raises(ValueError, match="needs a gain"):
            DeadbeatLaw(LawKind.LINEAR_FEEDBACK, self.plant, 2)

    def test_gain_shape(self):
        """The gain must be p x n."""
        with pytest.raises(ValueError, match="Gain must be 1x2"):
            DeadbeatLaw(LawKind.LINEAR_FEEDBACK, self.plant, 2, gain=np.zeros((2, 2)))


class TestHalfTurnDeadbeat:
    """One-cycle deadbeat control of the half-turn oracle."""

    def setup_method(self):
        """Plant and one-cycle law on the upper section."""
        self.plant = ControlledReturnMap.from_bundle(build_model("halfturn"))
        self.law = synth_deadbeat_onecycle(self.plant)

    def test_psi_matches_closed_form(self):
        """The solved input equals the closed-form deadbeat input."""
        for z in (-0.1, 0.05, 0.2):
            assert self.law.psi([z])[0, 0] == pytest.approx(halfturn_deadbeat(1.0 + z), abs=1e-9)
            assert self.law.closed_loop_return([z])[0] == pytest.approx(0.0, abs=1e-9)

    def test_closed_loop_jacobian_vanishes(self):
        """The closed loop is nilpotent after one cycle."""
        np.testing.assert_allclose(self.law.closed_loop_jacobian(), [[0.0]], atol=1e-6)
        assert self.law.psi_jacobian()[0, 0] == pytest.approx(-0.64, abs=1e-6)

    def test_additive_perturbation(self):
        """A constant perturbation epsilon moves the fixed point to epsilon."""
        probe = structural_stability_probe(self.law, epsilon=1e-3)
        assert probe.fixed_point[0] == pytest.approx(1e-3, abs=1e-9)
        assert abs(probe.multipliers[0]) <= 1e-5
        assert probe.residual <= 1e-9

    def test_perturbed_plant(self):
        """With a different reset gain the loop is no longer deadbeat but stays stable."""
        other = self.plant.with_builder(lambda th: make_halfturn(0.85, 1.0, th[0]))
        probe = structural_stability_probe(self.law, plant=other)
        assert probe.fixed_point[0] == pytest.approx(0.0, abs=1e-9)
        assert probe.multipliers[0].real == pytest.approx(0.85 ** 2 - 0.64, abs=1e-5)

    def test_report(self):
        """Residuals on the ball vanish and the probe is recorded."""
        report = deadbeat_report(self.law, ControlOptions(n_samples=3, epsilon=1e-3), seed=4)
        assert report.law == "onecycle"
        assert len(report.residuals) == 3
        assert report.max_residual <= 1e-8
        assert report.closed_loop_rank == 0
        assert report.probe_epsilon == 1e-3
        assert report.perturbed_fixed_point[0] == pytest.approx(1e-3, abs=1e-9)

    def test_closed_loop_handle(self):
        """The closed-loop handle returns nearby points to the fixed point."""
        handle = self.law.closed_loop_handle()
        assert handle.first_return([0.1])[0] == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(handle.linearize(), [[0.0]], atol=1e-6)

    def test_closed_loop_reduces_to_the_orbit(self):
        """A rank-zero closed loop is certified exact onto the orbit itself."""
        report = analyze_reduction(self.law.closed_loop_handle(), AnalysisOptions(n_samples=4), seed=2)
        assert report.verdict == Verdict.EXACT_CERTIFIED
        assert report.r == 0
        assert report.rank_profile == [0, 0, 0]
        assert report.subsystem_dimension == 1


class TestHopperDeadbeat:
    """One-cycle deadbeat on the hopper through the ground stiffness."""

    def setup_method(self):
        """Plant on the midstance section with a as input."""
        self.bundle = build_model("hopper")
        self.plant = ControlledReturnMap.from_bundle(self.bundle)
        self.law = synth_deadbeat_onecycle(self.plant)

    def test_returns_to_fixed_point(self):
        """A nearby midstance height is returned to the orbit in one cycle."""
        assert self.law.closed_loop_return([0.01])[0] == pytest.approx(0.0, abs=1e-8)

    def test_stiffness_error(self):
        """A one percent spring error leaves a nearby stable fixed point."""
        params = self.bundle.params.model_copy(update={"k": 10.1})
        other = self.plant.with_builder(lambda th: make_hopper(params, a=th[0]))
        probe = structural_stability_probe(self.law, plant=other)
        assert abs(probe.fixed_point[0]) <= 0.05
        assert np.max(np.abs(probe.multipliers)) < 1.0
