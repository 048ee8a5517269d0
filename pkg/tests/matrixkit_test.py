"""Tests for matrixkit.py."""

import numpy as np

from kssl import errors
from kssl import matrixkit
import testutil


class TestSymEig(testutil.KsslTestBase):
    def test_identity(self):
        (eigenvalues, U) = matrixkit.sym_eig(np.eye(3))
        self.assertAllClose([1, 1, 1], eigenvalues)
        self.assertAllClose(np.eye(3), U @ np.diag(eigenvalues) @ U.T)

    def test_diagonal(self):
        (eigenvalues, U) = matrixkit.sym_eig(np.diag([1.0, 3.0]))
        self.assertAllClose([3, 1], eigenvalues)
        self.assertAllClose(np.eye(2), np.abs(U[::-1]))

    def test_random_reconstruction(self):
        A = self.random_symmetric(6)
        (eigenvalues, U) = matrixkit.sym_eig(A)
        self.assertLess(np.linalg.norm(A - (U * eigenvalues) @ U.T) /
                        np.linalg.norm(A), 1e-8)
        self.assertTrue(np.all(np.diff(eigenvalues) <= 0))
        for i in range(6):
            self.assertLess(np.linalg.norm(A @ U[:, i] -
                                           eigenvalues[i] * U[:, i]),
                            1e-8 * np.linalg.norm(A))

    def test_non_symmetric(self):
        with self.assertRaises(errors.NonSymmetric):
            matrixkit.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_non_square(self):
        with self.assertRaises(errors.DimensionMismatch):
            matrixkit.sym_eig(np.ones((2, 3)))

    def test_tiny_asymmetry_is_tolerated(self):
        A = self.random_symmetric(4)
        A[0, 1] += 1e-13
        matrixkit.sym_eig(A)


class TestMatrixPowerSym(testutil.KsslTestBase):
    def test_identity(self):
        self.assertAllClose(np.eye(4),
                            matrixkit.matrix_power_sym(np.eye(4), -0.5))

    def test_diagonal_sqrt(self):
        self.assertAllClose(np.diag([2.0, 3.0]),
                            matrixkit.matrix_power_sym(np.diag([4.0, 9.0]),
                                                       0.5))

    def test_inverse_sqrt(self):
        K = self.random_spd(5)
        K_inv_half = matrixkit.matrix_power_sym(K, -0.5)
        self.assertAllClose(np.eye(5), K_inv_half @ K @ K_inv_half)
        self.assertAllClose(np.eye(5), K_inv_half @ K_inv_half @ K)

    def test_sqrt_squares_back(self):
        K = self.random_spd(7, condition=100.0)
        K_half = matrixkit.matrix_power_sym(K, 0.5)
        self.assertRelativeClose(K, K_half @ K_half)
        self.assertTrue(matrixkit.is_symmetric(K_half))

    def test_inverse(self):
        K = self.random_spd(5)
        self.assertAllClose(np.eye(5),
                            matrixkit.matrix_power_sym(K, -1.0) @ K)

    def test_sqrt_of_singular_psd(self):
        v = self.rng.standard_normal(4)
        A = np.outer(v, v)
        A_half = matrixkit.matrix_power_sym(A, 0.5)
        self.assertRelativeClose(A, A_half @ A_half)

    def test_negative_power_of_singular(self):
        with self.assertRaises(errors.SingularMatrix):
            matrixkit.matrix_power_sym(np.diag([1.0, 0.0]), -0.5)
        with self.assertRaises(errors.SingularMatrix):
            matrixkit.matrix_power_sym(np.ones((3, 3)), -1.0)

    def test_unsupported_power(self):
        with self.assertRaises(ValueError):
            matrixkit.matrix_power_sym(np.eye(2), 2.0)


class TestPinv(testutil.KsslTestBase):
    def _assert_penrose(self, A, A_plus):
        scale = max(1.0, np.linalg.norm(A), np.linalg.norm(A_plus))
        tol = 1e-8 * scale ** 3
        self.assertLess(np.linalg.norm(A @ A_plus @ A - A), tol)
        self.assertLess(np.linalg.norm(A_plus @ A @ A_plus - A_plus), tol)
        self.assertLess(np.linalg.norm((A @ A_plus).T - A @ A_plus), tol)
        self.assertLess(np.linalg.norm((A_plus @ A).T - A_plus @ A), tol)

    def test_identity(self):
        self.assertAllClose(np.eye(3), matrixkit.pinv(np.eye(3)))

    def test_zero(self):
        self.assertAllClose(np.zeros((3, 2)),
                            matrixkit.pinv(np.zeros((2, 3))))

    def test_full_column_rank(self):
        A = self.rng.standard_normal((5, 3))
        self.assertAllClose(np.eye(3), matrixkit.pinv(A) @ A)

    def test_penrose_conditions_at_every_rank(self):
        (p, q) = (5, 4)
        for rank in range(0, min(p, q) + 1):
            A = (self.rng.standard_normal((p, rank)) @
                 self.rng.standard_normal((rank, q)))
            A_plus = matrixkit.pinv(A)
            self.assertEqual((q, p), A_plus.shape)
            self._assert_penrose(A, A_plus)
            self.assertEqual(rank, matrixkit.matrix_rank(A))

    def test_truncation(self):
        A = np.diag([1.0, 1e-12])
        self.assertAllClose(np.diag([1.0, 0.0]), matrixkit.pinv(A))


class TestMatrixRank(testutil.KsslTestBase):
    def test_rank(self):
        self.assertEqual(0, matrixkit.matrix_rank(np.zeros((3, 3))))
        self.assertEqual(3, matrixkit.matrix_rank(np.eye(3)))
        self.assertEqual(1, matrixkit.matrix_rank(np.ones((4, 2))))
        self.assertEqual(1, matrixkit.matrix_rank(np.diag([1.0, 1e-11])))
        self.assertEqual(0, matrixkit.matrix_rank(np.zeros((0, 3))))


class TestCholesky(testutil.KsslTestBase):
    def test_factor(self):
        A = self.random_spd(4)
        L = matrixkit.cholesky(A)
        self.assertAllClose(A, L @ L.T)
        self.assertAllClose(np.zeros((4, 4)), np.triu(L, 1))

    def test_not_positive_definite(self):
        with self.assertRaises(errors.SingularMatrix):
            matrixkit.cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestLyapunov(testutil.KsslTestBase):
    def test_identity(self):
        rhs = self.random_symmetric(4)
        solution = matrixkit.lyapunov_solve(np.eye(4), rhs)
        self.assertAllClose(rhs / 2, solution.B)
        self.assertLess(solution.residual_norm, 1e-12)

    def test_diagonal(self):
        solution = matrixkit.lyapunov_solve(np.diag([1.0, 3.0]),
                                            np.array([[2.0, 4.0],
                                                      [4.0, 6.0]]))
        self.assertAllClose(np.ones((2, 2)), solution.B)

    def test_random(self):
        K = self.random_spd(6)
        rhs = self.random_symmetric(6)
        solution = matrixkit.lyapunov_solve(K, rhs)
        self.assertLessEqual(solution.residual_norm,
                             1e-8 * np.linalg.norm(rhs))
        self.assertAllClose(rhs, K @ solution.B + solution.B @ K.T)

    def test_many_random_instances(self):
        for _ in range(100):
            n = int(self.rng.integers(1, 51))
            K = self.random_spd(n, condition=float(self.rng.uniform(1, 100)))
            rhs = self.random_symmetric(n)
            solution = matrixkit.lyapunov_solve(K, rhs)
            self.assertLessEqual(solution.residual_norm,
                                 1e-8 * max(1.0, np.linalg.norm(rhs)))
            self.assertLessEqual(
                np.max(np.abs(solution.B - solution.B.T)), 1e-10)

    def test_agrees_with_dense_system(self):
        for n in range(1, 9):
            K = self.random_spd(n, condition=20.0)
            rhs = self.random_symmetric(n)
            spectral = matrixkit.lyapunov_solve(K, rhs).B
            dense = matrixkit.lyapunov_solve_kron(K, rhs).B
            self.assertAllClose(dense, spectral, atol=1e-9)

    def test_singular(self):
        with self.assertRaises(errors.SingularMatrix):
            matrixkit.lyapunov_solve(np.diag([1.0, 0.0]), np.eye(2))

    def test_shape_mismatch(self):
        with self.assertRaises(errors.DimensionMismatch):
            matrixkit.lyapunov_solve(np.eye(2), np.eye(3))


class TestCentering(testutil.KsslTestBase):
    def test_one_point(self):
        self.assertAllClose([[0.0]], matrixkit.centering_matrix(1))

    def test_two_points(self):
        self.assertAllClose([[0.5, -0.5], [-0.5, 0.5]],
                            matrixkit.centering_matrix(2))

    def test_algebra(self):
        H = matrixkit.centering_matrix(5)
        self.assertAllClose(np.zeros(5), H @ np.ones(5), atol=1e-12)
        self.assertAllClose(H, H @ H, atol=1e-12)
        self.assertAllClose(H, H.T, atol=0)

    def test_center_columns_matches_matrix(self):
        Z = self.rng.standard_normal((3, 6))
        self.assertAllClose(Z @ matrixkit.centering_matrix(6),
                            matrixkit.center_columns(Z), atol=1e-12)

    def test_bad_n(self):
        with self.assertRaises(ValueError):
            matrixkit.centering_matrix(0)


class TestCovariance(testutil.KsslTestBase):
    def test_constant(self):
        self.assertAllClose([[0.0]],
                            matrixkit.sample_covariance([[1.0, 1.0, 1.0]]))

    def test_hand_computed(self):
        self.assertAllClose([[1.0]],
                            matrixkit.sample_covariance([[1.0, -1.0]]))

    def test_two_pass_oracle(self):
        Z = self.rng.standard_normal((3, 7))
        expected = np.zeros((3, 3))
        means = [sum(Z[k]) / 7 for k in range(3)]
        for k in range(3):
            for l in range(3):
                expected[k, l] = sum((Z[k, i] - means[k]) *
                                     (Z[l, i] - means[l])
                                     for i in range(7)) / 7
        actual = matrixkit.sample_covariance(Z)
        self.assertAllClose(expected, actual, atol=1e-12)
        self.assertGreaterEqual(np.min(np.linalg.eigvalsh(actual)), -1e-12)

    def test_second_moment(self):
        Z = self.rng.standard_normal((2, 5))
        self.assertAllClose(Z @ Z.T / 5, matrixkit.second_moment(Z))

    def test_empty(self):
        with self.assertRaises(errors.DimensionMismatch):
            matrixkit.sample_covariance(np.zeros((2, 0)))


if __name__ == '__main__':
    testutil.main()
