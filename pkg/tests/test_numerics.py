"""
Tests for the numerical services: integration, events, Jacobians, Newton.
"""

import numpy as np
import pytest
from scipy.optimize import brentq

from hybridred.errors import (
    EvaluationFailure, NoConvergence, NoEventBeforeTmax, SingularJacobian, TangentialCrossing,
)
from hybridred.models import IntegratorOptions
from hybridred.numerics import (
    eigen, fd_jacobian, integrate, integrate_to_event, kernel_basis, newton_solve, numerical_rank,
)


def oscillator(x):
    return np.array([x[1], -x[0]])


class TestIntegrate:
    """Dense integration and event location."""

    def setup_method(self):
        """Tight tolerances for comparisons against closed forms."""
        self.opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13)

    def test_flow_matches_closed_form(self):
        """The harmonic oscillator returns to (-1, 0) at t = pi."""
        segment, hit = integrate(oscillator, [1.0, 0.0], np.pi, opts=self.opts)
        assert hit is None
        assert segment.t_end == pytest.approx(np.pi)
        np.testing.assert_allclose(segment.x_end, [-1.0, 0.0], atol=1e-9)

    def test_dense_output_between_steps(self):
        """The dense segment interpolates inside the integration interval."""
        segment, _ = integrate(oscillator, [1.0, 0.0], 2.0, opts=self.opts)
        for t in (0.3, 1.1, 1.7):
            np.testing.assert_allclose(segment(t), [np.cos(t), -np.sin(t)], atol=1e-8)
        ts, xs = segment.sample(5)
        assert ts[0] == 0.0 and ts[-1] == pytest.approx(2.0)
        assert xs.shape == (5, 2)

    def test_event_located_precisely(self):
        """The first zero of cos t is found at pi / 2."""
        result = integrate_to_event(oscillator, [lambda x: x[0]], [1.0, 0.0], 10.0, self.opts)
        assert result.guard_id == 0
        assert result.t_hit == pytest.approx(np.pi / 2, abs=1e-10)
        np.testing.assert_allclose(result.x_hit, [0.0, -1.0], atol=1e-9)

    def test_guard_starting_at_zero_is_not_armed(self):
        """A guard that starts on its zero set only fires after becoming positive."""
        result = integrate_to_event(oscillator, [lambda x: -x[1]], [1.0, 0.0], 10.0, self.opts)
        assert result.t_hit == pytest.approx(np.pi, abs=1e-9)

    def test_no_event_before_tmax(self):
        """A guard that never crosses raises NoEventBeforeTmax."""
        with pytest.raises(NoEventBeforeTmax, match="No guard crossing"):
            integrate_to_event(lambda x: np.array([1.0]), [lambda x: 1.0 + x[0]], [0.0], 2.0, self.opts)

    def test_tangential_crossing(self):
        """A crossing with the field tangent to the level set is rejected."""
        def field(x):
            return np.array([1.0, 0.0])

        with pytest.raises(TangentialCrossing, match="tangent"):
            integrate_to_event(field, [lambda x: x[1] - x[0] ** 3], [-1.0, 0.0], 5.0, self.opts)

    def test_root_finder_failure_is_hybrid_error(self, monkeypatch):
        """A failing bracketed root search surfaces as TangentialCrossing."""
        def failing(*args, **kwargs):
            raise RuntimeError("Failed to converge after 100 iterations")

        monkeypatch.setattr("hybridred.numerics.brentq", failing)
        with pytest.raises(TangentialCrossing, match="Event location on guard 0 failed") as info:
            integrate_to_event(oscillator, [lambda x: x[0]], [1.0, 0.0], 5.0, self.opts)
        assert info.value.details["guard"] == 0

    def test_root_finder_retries_at_event_tol(self, monkeypatch):
        """A search that stalls at round-off is repeated at the event tolerance."""
        calls = []

        def stalling(f, a, b, xtol, **kwargs):
            calls.append(xtol)
            root, info = brentq(f, a, b, xtol=xtol, **kwargs)
            if len(calls) == 1:
                info.converged = False
            return root, info

        monkeypatch.setattr("hybridred.numerics.brentq", stalling)
        opts = IntegratorOptions(rel_tol=1e-11, abs_tol=1e-13, event_tol=1e-9)
        result = integrate_to_event(oscillator, [lambda x: x[0]], [1.0, 0.0], 5.0, opts)
        assert len(calls) == 2
        assert calls[1] > calls[0]
        assert result.t_hit == pytest.approx(np.pi / 2, abs=1e-8)


class TestFiniteDifferences:
    """Central-difference Jacobians."""

    def test_linear_map(self):
        """A linear map is differentiated exactly up to round-off."""
        A = np.array([[1.0, 2.0, 0.0], [0.0, -1.0, 3.0]])
        J = fd_jacobian(lambda x: A @ x, [0.5, -0.2, 1.0])
        np.testing.assert_allclose(J, A, atol=1e-8)

    def test_custom_step(self):
        """A scalar step is broadcast to every coordinate."""
        J = fd_jacobian(lambda x: x ** 2, [1.0, 2.0], step=1e-3)
        np.testing.assert_allclose(J, np.diag([2.0, 4.0]), atol=1e-9)

    def test_evaluation_failure_reports_point(self):
        """A failing map evaluation is wrapped with the offending stencil point."""
        def fn(x):
            if x[0] > 1.0:
                raise ValueError("outside the chart")
            return x

        with pytest.raises(EvaluationFailure, match="stencil point") as info:
            fd_jacobian(fn, [1.0])
        assert info.value.details["point"][0] > 1.0


class TestDecompositions:
    """Rank, kernels and sorted spectra."""

    def test_numerical_rank(self):
        """Singular values below the relative tolerance do not count."""
        assert numerical_rank(np.diag([1.0, 1e-10])) == 1
        assert numerical_rank(np.zeros((3, 3))) == 0
        assert numerical_rank(np.diag([1e-12, 1e-12]), atol=1e-10) == 0

    def test_kernel_basis(self):
        """The kernel basis is orthonormal and annihilated by the matrix."""
        M = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
        K = kernel_basis(M)
        assert K.shape == (3, 2)
        np.testing.assert_allclose(M @ K, 0.0, atol=1e-12)
        np.testing.assert_allclose(K.T @ K, np.eye(2), atol=1e-12)

    def test_eigen_sorted_by_magnitude(self):
        """Eigenvalues come sorted by descending magnitude."""
        spectrum = eigen(np.diag([0.5, -2.0, 1.0]))
        np.testing.assert_allclose(spectrum.eigenvalues, [-2.0, 1.0, 0.5])
        assert spectrum.spectral_radius == pytest.approx(2.0)

    def test_eigen_needs_square(self):
        """Non-square matrices are rejected."""
        with pytest.raises(ValueError, match="square"):
            eigen(np.ones((2, 3)))


class TestNewton:
    """Damped Newton root finding."""

    def test_square_root(self):
        """x^2 = 2 converges to sqrt(2)."""
        x, info = newton_solve(lambda x: x ** 2 - 2.0, [1.0], full_output=True)
        assert x[0] == pytest.approx(np.sqrt(2.0), abs=1e-12)
        assert info["residual"] <= 1e-12
        assert info["history"][0] > info["history"][-1]

    def test_least_squares_overdetermined(self):
        """A consistent overdetermined system is solved in the least-squares sense."""
        x = newton_solve(lambda x: np.array([x[0] - 1.0, 2.0 * x[0] - 2.0]), [0.0])
        assert x[0] == pytest.approx(1.0)

    def test_singular_jacobian(self):
        """A rank-deficient square system raises SingularJacobian."""
        def f(x):
            return np.array([x[0] + x[1] - 1.0, 2.0 * x[0] + 2.0 * x[1] - 3.0])

        with pytest.raises(SingularJacobian, match="Singular Jacobian"):
            newton_solve(f, [0.0, 0.0], jacobian=lambda x: np.array([[1.0, 1.0], [2.0, 2.0]]))

    def test_no_convergence_details(self):
        """Failure carries the final residual and iterate."""
        with pytest.raises(NoConvergence, match="did not converge") as info:
            newton_solve(np.exp, [1.0], max_iter=5)
        assert info.value.details["residual"] == pytest.approx(np.exp(-4.0), rel=1e-6)
        assert info.value.details["point"][0] == pytest.approx(-4.0, abs=1e-6)
