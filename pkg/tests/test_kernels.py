import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_difference, matern_closed_form
from seqkrig.exceptions import UnsupportedKernelError
from seqkrig.kernels import (
    KernelSpec,
    correlation,
    correlation_matrix,
    cross_correlation_jacobian,
    cross_correlations,
    second_derivative_diagonal,
)

pos = st.floats(1e-2, 50.0)


class TestKernelSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            KernelSpec("gaussian", (1.0, 0.0))
        with pytest.raises(ValueError):
            KernelSpec("gaussian", ())
        with pytest.raises(ValueError):
            KernelSpec("matern", nu=0.0)
        with pytest.raises(ValueError):
            KernelSpec("matern", phi=-1.0)
        with pytest.raises(ValueError):
            KernelSpec("gaussian", (1.0,), nugget=-1e-3)
        with pytest.raises(ValueError):
            KernelSpec("cubic", (1.0,))

    def test_json_round_trip(self):
        spec = KernelSpec("gaussian", (0.5, 3.0), nugget=1e-4)
        assert KernelSpec.from_json(spec.to_json()) == spec
        assert set(spec.to_dict()) == {"family", "theta", "nu", "phi", "nugget"}
        mat = KernelSpec("matern", nu=1.5, phi=0.7, nugget=0.01)
        assert KernelSpec.from_json(mat.to_json()) == mat


class TestCorrelation:
    def test_self_correlation_includes_nugget(self):
        spec = KernelSpec("gaussian", (3.0, 0.2), nugget=0.01)
        assert correlation(spec, [0.3, 0.9], [0.3, 0.9]) == pytest.approx(1.01, abs=1e-15)

    def test_gaussian_hand_value(self):
        spec = KernelSpec("gaussian", (1.0, 1.0))
        assert correlation(spec, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(math.exp(-1.0), rel=1e-15)

    def test_nugget_only_on_exact_match(self):
        spec = KernelSpec("gaussian", (1.0,), nugget=0.5)
        assert correlation(spec, [0.2], [0.2 + 1e-15]) < 1.0 + 1e-12

    @pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
    def test_matern_closed_forms(self, nu):
        for phi in (0.3, 0.5, 2.0):
            spec = KernelSpec("matern", nu=nu, phi=phi)
            for r in (1e-4, 0.1, 0.5, 1.0, 3.0):
                got = correlation(spec, [0.0, 0.0], [r / math.sqrt(2), r / math.sqrt(2)])
                assert got == pytest.approx(matern_closed_form(nu, phi, r), rel=1e-10)

    def test_matern_origin_limit(self):
        spec = KernelSpec("matern", nu=2.5, phi=1.0, nugget=0.2)
        assert correlation(spec, [0.4], [0.4]) == pytest.approx(1.2)

    def test_dimension_mismatch(self):
        spec = KernelSpec("gaussian", (1.0, 1.0))
        with pytest.raises(ValueError):
            correlation(spec, [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            correlation_matrix(spec, np.zeros((2, 2)), np.zeros((2, 3)))

    @given(
        arrays(np.float64, 3, elements=st.floats(0, 1)),
        arrays(np.float64, 3, elements=st.floats(0, 1)),
        st.tuples(pos, pos, pos),
        st.floats(0, 1),
    )
    def test_symmetry_and_range(self, x, y, theta, g):
        spec = KernelSpec("gaussian", theta, nugget=g)
        kxy = correlation(spec, x, y)
        assert kxy == correlation(spec, y, x)
        if np.array_equal(x, y):
            assert kxy == pytest.approx(1.0 + g)
        else:
            assert 0.0 <= kxy <= 1.0
            assert correlation(KernelSpec("gaussian", theta), x, y) <= 1.0

    @given(st.floats(0.01, 5.0), st.floats(0.1, 3.0), st.floats(0.0, 1.0))
    def test_matern_symmetric_and_bounded(self, phi, nu, r):
        spec = KernelSpec("matern", nu=nu, phi=phi)
        a, b = [0.0], [r]
        assert correlation(spec, a, b) == correlation(spec, b, a)
        assert 0.0 < correlation(spec, a, b) <= 1.0 + 1e-12


class TestCrossCorrelations:
    def test_design_row_gives_column_of_k(self):
        rng = np.random.default_rng(0)
        design = rng.random((6, 2))
        spec = KernelSpec("gaussian", (2.0, 5.0), nugget=0.1)
        k = correlation_matrix(spec, design, design)
        np.testing.assert_allclose(cross_correlations(spec, design[3], design), k[:, 3], rtol=0, atol=0)

    def test_single_point_hand_value(self):
        spec = KernelSpec("gaussian", (2.0,))
        np.testing.assert_allclose(cross_correlations(spec, [0.5], [[0.0]]), [math.exp(-0.5)])

    def test_far_points_decay(self):
        spec = KernelSpec("gaussian", (500.0, 500.0))
        r = cross_correlations(spec, [1.0, 1.0], [[0.0, 0.0], [0.1, 0.2]])
        assert np.all(r < 1e-10)


class TestJacobian:
    def test_zero_column_at_design_row(self):
        design = np.array([[0.1, 0.2], [0.7, 0.4]])
        spec = KernelSpec("gaussian", (1.0, 4.0))
        jac = cross_correlation_jacobian(spec, design[1], design)
        assert jac.shape == (2, 2)
        np.testing.assert_array_equal(jac[:, 1], 0.0)

    def test_hand_value(self):
        jac = cross_correlation_jacobian(KernelSpec("gaussian", (1.0,)), [0.5], [[0.0]])
        assert jac[0, 0] == pytest.approx(-math.exp(-0.25), rel=1e-14)

    @pytest.mark.parametrize(
        "spec",
        [
            KernelSpec("gaussian", (2.0, 7.0, 0.5), nugget=1e-3),
            KernelSpec("matern", nu=2.5, phi=1.3),
            KernelSpec("matern", nu=1.5, phi=0.8),
        ],
        ids=["gaussian", "matern52", "matern32"],
    )
    def test_matches_finite_differences(self, spec):
        rng = np.random.default_rng(1)
        for _ in range(30):
            design = rng.random((5, 3))
            x = rng.uniform(0.05, 0.95, 3)
            jac = cross_correlation_jacobian(spec, x, design)
            for j in range(5):
                fd = central_difference(lambda z: correlation(spec, z, design[j]), x)
                np.testing.assert_allclose(jac[:, j], fd, rtol=1e-4, atol=1e-9)

    def test_matern_rough_is_rejected(self):
        with pytest.raises(UnsupportedKernelError):
            cross_correlation_jacobian(KernelSpec("matern", nu=0.5), [0.2], [[0.1]])


class TestSecondDerivative:
    def test_values(self):
        np.testing.assert_allclose(second_derivative_diagonal(KernelSpec("gaussian", (1.0, 1.0))), [2.0, 2.0])
        np.testing.assert_allclose(second_derivative_diagonal(KernelSpec("gaussian", (0.5, 3.0, 7.0))), [1, 6, 14])

    @given(st.tuples(pos, pos), st.floats(0.1, 10.0))
    def test_linear_in_theta(self, theta, c):
        base = second_derivative_diagonal(KernelSpec("gaussian", theta))
        scaled = second_derivative_diagonal(KernelSpec("gaussian", tuple(c * t for t in theta)))
        np.testing.assert_allclose(scaled, c * base, rtol=1e-14)

    def test_mixed_partial_finite_difference(self):
        spec = KernelSpec("gaussian", (1.5, 4.0))
        x = np.array([0.3, 0.6])
        h = 1e-4
        for i in range(2):
            e = np.zeros(2)
            e[i] = h

            def k(a, b):
                return correlation(KernelSpec("gaussian", spec.theta), a, b)

            mixed = (k(x + e, x + e) - k(x + e, x - e) - k(x - e, x + e) + k(x - e, x - e)) / (4 * h * h)
            assert mixed == pytest.approx(2 * spec.theta[i], rel=1e-3)

    def test_matern_unsupported(self):
        with pytest.raises(UnsupportedKernelError):
            second_derivative_diagonal(KernelSpec("matern", nu=2.5))
