import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad as adaptive_quad

from mzsde.basis import (
    build_hermite_basis,
    build_weighted_basis,
    gauss_quadrature,
    gram_matrix,
    orthonormality_residual,
    project_function,
    reconstruct,
)
from mzsde.errors import InsufficientRecurrenceError, NonNormalizableWeightError

# Moments of exp(-q^4/4)/Z, from adaptive quadrature (matches the Gamma
# closed form 4^{k/2} G((2k+1)/4)/G(1/4) to 14 digits).
QUARTIC_MOMENTS = {
    0: 1.0,
    2: 0.6759782400672846,
    4: 1.0,
    6: 2.027934720201854,
    8: 5.0,
    10: 14.195543041412979,
}


def quartic_log_weight(q):
    return -0.25 * q**4


class TestHermiteBasis:
    def test_first_three_functions(self):
        basis = build_hermite_basis(1.0, 3)
        x = np.linspace(-2.5, 2.5, 11)
        vals = basis.evaluate(x)[0]
        np.testing.assert_allclose(vals[0], np.ones_like(x), atol=1e-14)
        np.testing.assert_allclose(vals[1], x, atol=1e-14)
        np.testing.assert_allclose(vals[2], (x**2 - 1) / np.sqrt(2), atol=1e-13)

    def test_gram_identity_n40(self):
        basis = build_hermite_basis(1.0, 40)
        quad = gauss_quadrature(basis, 80)
        assert orthonormality_residual(basis, quad) <= 1e-10

    def test_second_moment_scale_two(self):
        basis = build_hermite_basis(2.0, 10)
        quad = gauss_quadrature(basis, 20)
        c = project_function(lambda x: x, basis, quad)
        assert c @ c == pytest.approx(4.0, abs=1e-12)

    def test_recurrence_b_positive(self):
        basis = build_hermite_basis(0.5, 12)
        assert np.all(basis.recurrence_b > 0)

    @pytest.mark.parametrize("scale,size", [(0.0, 5), (-1.0, 5), (1.0, 1)])
    def test_invalid_arguments(self, scale, size):
        with pytest.raises(ValueError):
            build_hermite_basis(scale, size)


class TestWeightedBasis:
    def test_gaussian_weight_matches_hermite(self):
        custom = build_weighted_basis(lambda q: -0.5 * q**2, 15)
        hermite = build_hermite_basis(1.0, 15)
        n = 15
        np.testing.assert_allclose(
            custom.recurrence_a[:n], hermite.recurrence_a[:n], atol=1e-8
        )
        np.testing.assert_allclose(
            custom.recurrence_b[: n + 1], hermite.recurrence_b[: n + 1], atol=1e-8
        )

    def test_quartic_gram_identity(self):
        basis = build_weighted_basis(quartic_log_weight, 20)
        quad = gauss_quadrature(basis, 40)
        assert orthonormality_residual(basis, quad) <= 1e-8

    def test_quartic_gram_against_adaptive_quadrature(self):
        # independent oracle: pairwise products integrated by scipy.quad
        basis = build_weighted_basis(quartic_log_weight, 6)
        z = adaptive_quad(lambda q: np.exp(quartic_log_weight(q)), -np.inf, np.inf)[0]
        for i in range(6):
            for j in range(i, 6):
                val = adaptive_quad(
                    lambda q, i=i, j=j: (
                        basis.evaluate(q)[0][i, 0]
                        * basis.evaluate(q)[0][j, 0]
                        * np.exp(quartic_log_weight(q))
                    ),
                    -8.0, 8.0,
                )[0] / z
                assert val == pytest.approx(1.0 if i == j else 0.0, abs=1e-8)

    def test_non_normalizable_weight_rejected(self):
        with pytest.raises(NonNormalizableWeightError):
            build_weighted_basis(lambda q: q**2, 8)


class TestGaussQuadrature:
    def test_single_node_symmetric_weight(self):
        basis = build_hermite_basis(1.0, 4)
        rule = gauss_quadrature(basis, 1)
        assert rule.nodes[0] == pytest.approx(0.0, abs=1e-14)
        assert rule.weights[0] == pytest.approx(1.0, abs=1e-14)

    def test_gaussian_second_moment(self):
        basis = build_hermite_basis(1.0, 12)
        rule = gauss_quadrature(basis, 20)
        assert np.sum(rule.weights * rule.nodes**2) == pytest.approx(1.0, abs=1e-12)

    def test_quartic_moments_vs_oracle(self):
        basis = build_weighted_basis(quartic_log_weight, 20)
        rule = gauss_quadrature(basis, 30)
        for k, expected in QUARTIC_MOMENTS.items():
            got = np.sum(rule.weights * rule.nodes**k)
            assert got == pytest.approx(expected, rel=1e-8), f"moment {k}"

    def test_insufficient_recurrence(self):
        basis = build_hermite_basis(1.0, 5, depth=12)
        with pytest.raises(InsufficientRecurrenceError):
            gauss_quadrature(basis, 13)

    @settings(max_examples=25, deadline=None)
    @given(
        degree=st.integers(min_value=0, max_value=15),
        scale=st.floats(min_value=0.3, max_value=3.0),
    )
    def test_exactness_against_gaussian_moments(self, degree, scale):
        # closed form: odd moments vanish, even are s^k (k-1)!!
        basis = build_hermite_basis(scale, 10)
        rule = gauss_quadrature(basis, 8)  # exact through degree 15
        got = np.sum(rule.weights * rule.nodes**degree)
        if degree % 2 == 1:
            expected = 0.0
        else:
            expected = scale**degree * np.prod(np.arange(degree - 1, 0, -2), dtype=float)
        # roundoff floor scales with the even-moment magnitude at this degree
        floor = 1e-10 * scale**degree * max(
            1.0, np.prod(np.arange(degree, 0, -2), dtype=float)
        )
        assert got == pytest.approx(expected, rel=1e-10, abs=floor)


class TestProjection:
    def test_basis_member_coefficients(self):
        basis = build_hermite_basis(1.0, 6)
        rule = gauss_quadrature(basis, 12)
        c = project_function(lambda x: x, basis, rule)
        np.testing.assert_allclose(c, [0, 1, 0, 0, 0, 0], atol=1e-13)

    def test_x_squared_coefficients(self):
        basis = build_hermite_basis(1.0, 6)
        rule = gauss_quadrature(basis, 12)
        c = project_function(lambda x: x**2, basis, rule)
        np.testing.assert_allclose(c, [1, 0, np.sqrt(2), 0, 0, 0], atol=1e-13)

    def test_sine_reconstruction_at_nodes(self):
        basis = build_hermite_basis(1.0, 40)
        rule = gauss_quadrature(basis, 80)
        c = project_function(np.sin, basis, rule)
        recon = reconstruct(c, basis, rule.nodes)
        # weighted least-squares sense: compare through the sqrt(w) scaling
        err = np.sqrt(rule.weights) * (recon - np.sin(rule.nodes))
        assert np.abs(err).max() <= 1e-8

    @settings(max_examples=20, deadline=None)
    @given(coeffs=st.lists(st.floats(-2, 2), min_size=1, max_size=8))
    def test_round_trip_on_polynomials(self, coeffs):
        basis = build_hermite_basis(1.0, 10)
        rule = gauss_quadrature(basis, 20)
        c = project_function(
            lambda x: np.polynomial.polynomial.polyval(x, coeffs), basis, rule
        )
        x = np.linspace(-1.5, 1.5, 7)
        np.testing.assert_allclose(
            reconstruct(c, basis, x),
            np.polynomial.polynomial.polyval(x, coeffs),
            atol=1e-10 * max(1.0, np.abs(coeffs).max() if coeffs else 1.0),
        )


class TestProductBasis:
    def test_tensor_gram(self, harmonic_ws):
        g = gram_matrix(harmonic_ws.basis, (harmonic_ws.quad_q, harmonic_ws.quad_p))
        assert np.abs(g - np.eye(g.shape[0])).max() <= 1e-10

    def test_momentum_projection_single_mode(self, harmonic_ws):
        c = project_function(
            lambda q, p: p + 0.0 * q, harmonic_ws.basis,
            (harmonic_ws.quad_q, harmonic_ws.quad_p),
        )
        n_p = harmonic_ws.basis.p.size
        expected = np.zeros_like(c)
        expected[1] = 1.0  # p = sqrt(mu/beta) * psi_1, scale 1 here
        np.testing.assert_allclose(c, expected, atol=1e-12)
        assert harmonic_ws.basis.axes == 2 and n_p == 16
