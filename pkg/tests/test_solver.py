import numpy as np
import pytest
import scipy.linalg

from ccareg import (
    DegenerateDirection,
    DegenerateVariate,
    DomainError,
    ShapeError,
    SingularCovariance,
    modified_correlation,
    plain_correlation,
    solve_direct,
)
from ccareg.solver import FittedCCA, covariance_triple


def random_problem(rng, n, p, q):
    x = rng.standard_normal((n, p))
    y = rng.standard_normal((n, q))
    x -= x.mean(axis=0)
    y -= y.mean(axis=0)
    return x, y


def top_pair_by_generalized_eig(sxx, syy, sxy, kx, ky):
    """Independent oracle: the stationarity conditions of the penalized
    objective form a symmetric-definite generalized eigenproblem whose top
    eigenvalue is the first modified correlation."""
    p, q = sxy.shape
    a = np.zeros((p + q, p + q))
    a[:p, p:] = sxy
    a[p:, :p] = sxy.T
    b = scipy.linalg.block_diag(sxx + kx, syy + ky)
    w, v = scipy.linalg.eigh(a, b)
    rho = w[-1]
    vec = v[:, -1]
    # eigh normalizes v' B v = 1; at an optimum each half carries 1/2
    return rho, vec[:p] * np.sqrt(2.0), vec[p:] * np.sqrt(2.0)


class TestSolveDirect:
    def test_diagonal_cross_covariance(self):
        fit = solve_direct(np.eye(2), np.eye(2), np.diag([0.9, 0.5]), r=2)
        np.testing.assert_allclose(fit.correlations, [0.9, 0.5], atol=1e-14)
        np.testing.assert_allclose(fit.alpha, np.eye(2), atol=1e-12)
        np.testing.assert_allclose(fit.beta, np.eye(2), atol=1e-12)

    def test_self_correlation_is_one(self):
        rng = np.random.default_rng(1)
        x, _ = random_problem(rng, 12, 4, 1)
        sxx, syy, sxy = covariance_triple(x, x)
        fit = solve_direct(sxx, syy, sxy, r=4)
        np.testing.assert_allclose(fit.correlations, np.ones(4), atol=1e-9)

    def test_matches_generalized_eig_oracle(self):
        rng = np.random.default_rng(7)
        for trial in range(8):
            x, y = random_problem(rng, 8, 5, 3)
            sxx, syy, sxy = covariance_triple(x, y)
            kx = 0.1 * np.eye(5)
            ky = np.zeros((3, 3))
            fit = solve_direct(sxx, syy, sxy, kx, ky, r=3)
            rho, alpha, beta = top_pair_by_generalized_eig(
                sxx, syy, sxy, kx, ky)
            assert abs(fit.correlations[0] - rho) < 1e-10
            # oracle coefficients attain the same objective value
            attained = modified_correlation(alpha, beta, sxx, syy, sxy,
                                            kx, ky)
            assert abs(abs(attained) - fit.correlations[0]) < 1e-10

    def test_all_correlations_match_oracle_spectrum(self):
        rng = np.random.default_rng(8)
        x, y = random_problem(rng, 10, 5, 4)
        sxx, syy, sxy = covariance_triple(x, y)
        kx = 0.5 * np.eye(5)
        fit = solve_direct(sxx, syy, sxy, kx, np.zeros((4, 4)), r=4)
        p, q = 5, 4
        a = np.zeros((p + q, p + q))
        a[:p, p:] = sxy
        a[p:, :p] = sxy.T
        b = scipy.linalg.block_diag(sxx + kx, syy)
        w = scipy.linalg.eigh(a, b, eigvals_only=True)
        oracle = np.sort(w)[::-1][:4]
        np.testing.assert_allclose(fit.correlations, oracle, atol=1e-10)

    def test_constraints_and_orthogonality(self):
        rng = np.random.default_rng(3)
        for trial in range(6):
            n = int(rng.integers(8, 16))
            p = int(rng.integers(2, 7))
            q = int(rng.integers(2, 5))
            x, y = random_problem(rng, n, p, q)
            sxx, syy, sxy = covariance_triple(x, y)
            lam = float(rng.uniform(0.05, 2.0))
            kx = lam * np.eye(p)
            r = min(p, q)
            fit = solve_direct(sxx, syy, sxy, kx, None, r=r)
            gx = fit.alpha.T @ (sxx + kx) @ fit.alpha
            gy = fit.beta.T @ syy @ fit.beta
            np.testing.assert_allclose(gx, np.eye(r), atol=1e-8)
            np.testing.assert_allclose(gy, np.eye(r), atol=1e-8)
            assert np.all(fit.correlations >= 0.0)
            assert np.all(fit.correlations <= 1.0 + 1e-12)
            assert np.all(np.diff(fit.correlations) <= 1e-12)

    def test_sign_convention(self):
        rng = np.random.default_rng(5)
        x, y = random_problem(rng, 10, 6, 3)
        sxx, syy, sxy = covariance_triple(x, y)
        fit = solve_direct(sxx, syy, sxy, 0.3 * np.eye(6), None, r=3)
        for i in range(3):
            j = np.argmax(np.abs(fit.alpha[:, i]))
            assert fit.alpha[j, i] > 0
        # the cross-covariance form stays nonnegative under the pair flip
        for i in range(3):
            attained = fit.alpha[:, i] @ sxy @ fit.beta[:, i]
            assert attained >= -1e-12

    def test_singular_covariance_names_side(self):
        rng = np.random.default_rng(2)
        x, y = random_problem(rng, 5, 8, 2)  # p > n, singular without ridge
        sxx, syy, sxy = covariance_triple(x, y)
        with pytest.raises(SingularCovariance) as err:
            solve_direct(sxx, syy, sxy, None, None, r=1)
        assert err.value.side == "X"
        assert "increase the penalty" in str(err.value)

    def test_r_out_of_range(self):
        with pytest.raises(DomainError):
            solve_direct(np.eye(3), np.eye(2), np.zeros((3, 2)), r=3)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            solve_direct(np.eye(3), np.eye(2), np.zeros((2, 2)))

    def test_orthogonal_transform_invariance(self):
        rng = np.random.default_rng(17)
        x, y = random_problem(rng, 12, 6, 3)
        qmat, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        lam = 0.4
        f1 = solve_direct(*_cov3(x, y), lam * np.eye(6), None, r=3)
        f2 = solve_direct(*_cov3(x @ qmat, y), lam * np.eye(6), None, r=3)
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-9)
        # coefficients rotate contravariantly (compare up to pair sign)
        mapped = qmat.T @ f1.alpha
        for i in range(3):
            s = np.sign(mapped[np.argmax(np.abs(mapped[:, i])), i])
            np.testing.assert_allclose(s * mapped[:, i], f2.alpha[:, i],
                                       atol=1e-8)

    def test_classical_cca_mixing_invariance(self):
        rng = np.random.default_rng(19)
        x, y = random_problem(rng, 40, 5, 3)
        amat = rng.standard_normal((5, 5)) + 0.1 * np.eye(5)
        f1 = solve_direct(*_cov3(x, y), None, None, r=3)
        f2 = solve_direct(*_cov3(x @ amat, y), None, None, r=3)
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-8)


def _cov3(x, y):
    return covariance_triple(x, y)


class TestModifiedCorrelation:
    def test_consistent_with_fit(self):
        rng = np.random.default_rng(23)
        x, y = random_problem(rng, 10, 5, 3)
        sxx, syy, sxy = covariance_triple(x, y)
        kx = 0.7 * np.eye(5)
        fit = solve_direct(sxx, syy, sxy, kx, None, r=1)
        val = modified_correlation(fit.alpha[:, 0], fit.beta[:, 0],
                                   sxx, syy, sxy, kx, None)
        assert abs(val - fit.correlations[0]) < 1e-10

    def test_decreases_when_penalty_scaled(self):
        rng = np.random.default_rng(29)
        x, y = random_problem(rng, 10, 5, 3)
        sxx, syy, sxy = covariance_triple(x, y)
        alpha = rng.standard_normal(5)
        beta = rng.standard_normal(3)
        kx = np.eye(5)
        v1 = modified_correlation(alpha, beta, sxx, syy, sxy, kx, None)
        v2 = modified_correlation(alpha, beta, sxx, syy, sxy, 4.0 * kx, None)
        assert abs(v2) < abs(v1)

    def test_optimum_nonincreasing_in_lambda(self):
        rng = np.random.default_rng(31)
        for trial in range(5):
            x, y = random_problem(rng, 9, 6, 2)
            sxx, syy, sxy = covariance_triple(x, y)
            prev = None
            for lam in (0.1, 0.2, 0.8, 3.2, 12.8):
                fit = solve_direct(sxx, syy, sxy, lam * np.eye(6), None, r=1)
                if prev is not None:
                    assert fit.correlations[0] <= prev + 1e-10
                prev = fit.correlations[0]

    def test_zero_direction_raises(self):
        with pytest.raises(DegenerateDirection):
            modified_correlation(np.zeros(3), np.ones(2), np.eye(3),
                                 np.eye(2), np.zeros((3, 2)))


class TestPlainCorrelation:
    def test_perfect_match(self):
        rng = np.random.default_rng(37)
        x, _ = random_problem(rng, 10, 3, 1)
        alpha = np.array([1.0, -0.5, 2.0])
        u = x @ alpha
        y = u[:, None]  # Y beta == X alpha with beta = 1
        assert abs(plain_correlation(x, y, alpha, [1.0]) - 1.0) < 1e-12

    def test_orthogonal_variates(self):
        x = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        y = np.array([[1.0], [1.0], [-1.0], [-1.0]])
        assert abs(plain_correlation(x, y, [1.0], [1.0])) < 1e-12

    def test_matches_corrcoef_oracle(self):
        rng = np.random.default_rng(41)
        for trial in range(5):
            x, y = random_problem(rng, 15, 4, 3)
            alpha = rng.standard_normal(4)
            beta = rng.standard_normal(3)
            ours = plain_correlation(x, y, alpha, beta)
            oracle = np.corrcoef(x @ alpha, y @ beta)[0, 1]
            assert abs(ours - oracle) < 1e-12

    def test_constant_variate_raises(self):
        x = np.zeros((4, 2))
        y = np.arange(8.0).reshape(4, 2)
        with pytest.raises(DegenerateVariate):
            plain_correlation(x, y, [1.0, 1.0], [1.0, 0.0])


class TestFittedCCASerialization:
    def test_roundtrip(self):
        rng = np.random.default_rng(43)
        x, y = random_problem(rng, 10, 4, 2)
        fit = solve_direct(*covariance_triple(x, y), 0.2 * np.eye(4),
                           None, r=2, x_names=list("abcd"), y_names=["u", "v"])
        doc = fit.to_dict()
        back = FittedCCA.from_dict(doc)
        np.testing.assert_allclose(back.alpha, fit.alpha)
        np.testing.assert_allclose(back.beta, fit.beta)
        np.testing.assert_allclose(back.correlations, fit.correlations)
        assert back.x_names == fit.x_names
        assert "alpha" in fit.to_json()
