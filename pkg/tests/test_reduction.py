import numpy as np
import pytest

from ccareg import (
    CapacityError,
    DomainError,
    GroupStructure,
    IdentifiabilityError,
    MethodSpec,
    PenaltySpec,
    UnsupportedPenalty,
    build_penalty_matrix,
    coefficient_path,
    factor_group_penalty,
    factor_penalty,
    fit_direct,
    fit_partial,
    general_fit,
    general_reduce,
    grcca_fit,
    prcca_kernel_fit,
    rcca_kernel_fit,
)


def centered(rng, n, m):
    v = rng.standard_normal((n, m))
    return v - v.mean(axis=0)


def first_variates(x, fit):
    return np.asarray(x) @ fit.alpha[:, 0]


def assert_fits_agree(x, fit_a, fit_b, cor_tol=1e-8, var_tol=1e-8):
    np.testing.assert_allclose(fit_a.correlations, fit_b.correlations,
                               atol=cor_tol)
    va, vb = first_variates(x, fit_a), first_variates(x, fit_b)
    scale = max(np.linalg.norm(va), 1e-12)
    assert np.linalg.norm(va - vb) <= var_tol * scale


class TestRccaKernel:
    def test_tall_full_rank_equals_direct(self):
        rng = np.random.default_rng(0)
        x, y = centered(rng, 20, 6), centered(rng, 20, 3)
        f1 = rcca_kernel_fit(x, y, 0.3, r=3)
        f2 = fit_direct(x, y, 0.3 * np.eye(6), r=3)
        assert_fits_agree(x, f1, f2)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-8)

    def test_wide_equals_direct(self):
        rng = np.random.default_rng(1)
        x, y = centered(rng, 20, 200), centered(rng, 20, 3)
        f1 = rcca_kernel_fit(x, y, 0.5, r=3)
        f2 = fit_direct(x, y, 0.5 * np.eye(200), r=3)
        assert_fits_agree(x, f1, f2)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-8)
        assert f1.solver_dim == 20
        assert f2.solver_dim == 200

    def test_lambda_zero_wide_is_singular(self):
        from ccareg import SingularCovariance
        rng = np.random.default_rng(2)
        x, y = centered(rng, 10, 40), centered(rng, 10, 2)
        with pytest.raises(SingularCovariance):
            rcca_kernel_fit(x, y, 0.0)

    def test_negative_lambda_rejected(self):
        rng = np.random.default_rng(3)
        x, y = centered(rng, 8, 4), centered(rng, 8, 2)
        with pytest.raises(DomainError):
            rcca_kernel_fit(x, y, -0.1)

    def test_y_side_penalty_symmetry(self):
        rng = np.random.default_rng(4)
        x, y = centered(rng, 20, 6), centered(rng, 20, 4)
        f_xy = rcca_kernel_fit(x, y, 0.5, ky=0.2 * np.eye(4), r=3)
        f_yx = rcca_kernel_fit(y, x, 0.2, ky=0.5 * np.eye(6), r=3)
        np.testing.assert_allclose(f_xy.correlations, f_yx.correlations,
                                   atol=1e-9)
        # roles swap: the x coefficients of one are the y coefficients of
        # the other up to the pairwise sign convention
        for i in range(3):
            a = f_xy.alpha[:, i]
            b = f_yx.beta[:, i]
            s = np.sign(a @ b)
            np.testing.assert_allclose(a, s * b, atol=1e-8)


class TestPrccaKernel:
    def test_matches_direct_partial_penalty(self):
        rng = np.random.default_rng(10)
        n, p1, p2, q, lam = 15, 60, 4, 3, 1.0
        x1, x2, y = centered(rng, n, p1), centered(rng, n, p2), centered(rng, n, q)
        x = np.hstack([x1, x2])
        f1 = prcca_kernel_fit(x1, x2, y, lam, r=q)
        kx = np.diag([lam] * p1 + [0.0] * p2)
        f2 = fit_direct(x, y, kx, r=q)
        assert_fits_agree(x, f1, f2)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-8)
        assert f1.solver_dim == n + p2

    def test_orthogonal_blocks_no_shear(self):
        rng = np.random.default_rng(11)
        n, p2 = 16, 3
        q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
        x1 = q2[:, :8] @ rng.standard_normal((8, 30))
        x2 = q2[:, 8:8 + p2]  # exactly orthogonal to x1's column space
        x1 -= x1.mean(axis=0)
        x2 = x2 - x2.mean(axis=0)
        # re-orthogonalize after centering
        x1 = x1 - x2 @ np.linalg.lstsq(x2, x1, rcond=None)[0]
        y = centered(rng, n, 2)
        f1 = prcca_kernel_fit(x1, x2, y, 0.7, r=2)
        x = np.hstack([x1, x2])
        kx = np.diag([0.7] * 30 + [0.0] * p2)
        f2 = fit_direct(x, y, kx, r=2)
        assert_fits_agree(x, f1, f2)

    def test_empty_unpenalized_block_matches_ridge(self):
        rng = np.random.default_rng(12)
        x, y = centered(rng, 12, 25), centered(rng, 12, 2)
        f1 = prcca_kernel_fit(x, None, y, 0.9, r=2)
        f2 = rcca_kernel_fit(x, y, 0.9, r=2)
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-12)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-12)

    def test_wide_unpenalized_block_rejected(self):
        rng = np.random.default_rng(13)
        x1, y = centered(rng, 8, 20), centered(rng, 8, 2)
        x2 = centered(rng, 8, 9)
        with pytest.raises(IdentifiabilityError, match="shrink"):
            prcca_kernel_fit(x1, x2, y, 1.0)

    def test_rank_deficient_unpenalized_rejected(self):
        rng = np.random.default_rng(14)
        x1, y = centered(rng, 10, 20), centered(rng, 10, 2)
        col = centered(rng, 10, 1)
        x2 = np.hstack([col, col])  # rank 1, width 2
        with pytest.raises(IdentifiabilityError, match="collinear"):
            prcca_kernel_fit(x1, x2, y, 1.0)

    def test_fit_partial_scatters_back(self):
        rng = np.random.default_rng(15)
        n, p, q = 12, 30, 2
        x, y = centered(rng, n, p), centered(rng, n, q)
        unpen = np.array([3, 17, 28])
        f1 = fit_partial(x, y, unpen, 1.5, r=q)
        diag = np.full(p, 1.5)
        diag[unpen] = 0.0
        f2 = fit_direct(x, y, np.diag(diag), r=q)
        assert_fits_agree(x, f1, f2)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-8)


class TestGeneralReduce:
    def test_isotropic_penalty_becomes_unit_ridge(self):
        rng = np.random.default_rng(20)
        x = centered(rng, 10, 6)
        lam = 4.0
        fact = factor_penalty(PenaltySpec.ridge(lam), 6)
        plan = general_reduce(x, fact)
        assert plan.n_unpenalized == 0
        np.testing.assert_allclose(plan.transformed, x / np.sqrt(lam),
                                   atol=1e-12)

    def test_single_zero_eigenvalue_gives_one_unpenalized(self):
        rng = np.random.default_rng(21)
        x = centered(rng, 10, 5)
        a = rng.standard_normal((5, 4))
        fact = factor_penalty(PenaltySpec.general(a @ a.T), 5)
        plan = general_reduce(x, fact)
        assert plan.n_unpenalized == 1

    def test_recovery_map_consistency(self):
        rng = np.random.default_rng(22)
        x = centered(rng, 9, 12)
        a = rng.standard_normal((12, 10))
        fact = factor_penalty(PenaltySpec.general(a @ a.T), 12)
        plan = general_reduce(x, fact)
        gamma = rng.standard_normal((12, 2))
        lhs = x @ plan.recover(gamma)
        rhs = plan.transformed @ gamma
        scale = max(np.abs(rhs).max(), 1e-12)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10 * scale)

    def test_general_fit_matches_direct(self):
        rng = np.random.default_rng(23)
        x, y = centered(rng, 9, 12), centered(rng, 9, 3)
        a = rng.standard_normal((12, 12))
        k = a @ a.T / 12 + 0.05 * np.eye(12)
        f1 = general_fit(x, y, k, r=3)
        f2 = fit_direct(x, y, k, r=3)
        assert_fits_agree(x, f1, f2)
        np.testing.assert_allclose(f1.alpha, f2.alpha, atol=1e-8)

    def test_general_fit_with_zero_eigenvalues_matches_direct(self):
        rng = np.random.default_rng(24)
        x, y = centered(rng, 10, 8), centered(rng, 10, 2)
        a = rng.standard_normal((8, 6))
        k = a @ a.T  # two zero eigenvalues -> partial residual problem
        f1 = general_fit(x, y, k, r=2)
        f2 = fit_direct(x, y, k, r=2)
        assert_fits_agree(x, f1, f2)


class TestGrcca:
    def test_equal_factors_match_ridge(self):
        rng = np.random.default_rng(30)
        x, y = centered(rng, 12, 30), centered(rng, 12, 3)
        gs = GroupStructure.from_sizes([6] * 5)
        lam = 0.8
        ridge = rcca_kernel_fit(x, y, lam, r=3)
        for path in ("eigen", "extend"):
            fit = grcca_fit(x, y, gs, lam, lam, r=3, path=path)
            np.testing.assert_allclose(fit.correlations, ridge.correlations,
                                       atol=1e-9)
            np.testing.assert_allclose(first_variates(x, fit),
                                       first_variates(x, ridge), atol=1e-9)

    def test_paths_agree_with_each_other_and_direct(self):
        rng = np.random.default_rng(31)
        x, y = centered(rng, 12, 30), centered(rng, 12, 3)
        gs = GroupStructure.from_sizes([6] * 5)
        for lam, mu in ((2.0, 0.5), (1.0, 0.0), (0.3, 4.0)):
            fe = grcca_fit(x, y, gs, lam, mu, r=3, path="eigen")
            fx = grcca_fit(x, y, gs, lam, mu, r=3, path="extend")
            kd = build_penalty_matrix(PenaltySpec.group(lam, mu, gs), 30)
            fd = fit_direct(x, y, kd, r=3)
            assert_fits_agree(x, fe, fd)
            assert_fits_agree(x, fx, fd)
            np.testing.assert_allclose(fe.alpha, fx.alpha, atol=1e-8)

    def test_interleaved_groups(self):
        rng = np.random.default_rng(32)
        x, y = centered(rng, 10, 9), centered(rng, 10, 2)
        gs = GroupStructure(np.array([0, 1, 2, 0, 1, 2, 0, 1, 2]),
                            ("a", "b", "c"))
        kd = build_penalty_matrix(PenaltySpec.group(1.5, 0.2, gs), 9)
        fd = fit_direct(x, y, kd, r=2)
        for path in ("eigen", "extend"):
            fit = grcca_fit(x, y, gs, 1.5, 0.2, r=2, path=path)
            assert_fits_agree(x, fit, fd)
            np.testing.assert_allclose(fit.alpha, fd.alpha, atol=1e-8)

    def test_large_lambda_limit_matches_group_mean_model(self):
        rng = np.random.default_rng(33)
        n, k_groups, size = 12, 5, 6
        x = centered(rng, n, k_groups * size)
        y = centered(rng, n, 3)
        gs = GroupStructure.from_sizes([size] * k_groups)
        mu = 1.0
        fit = grcca_fit(x, y, gs, 1e8, mu, r=1)
        means = np.column_stack([
            np.sqrt(size) * x[:, gs.indices(k)].mean(axis=1)
            for k in range(k_groups)
        ])
        reduced = rcca_kernel_fit(means, y, mu, r=1)
        np.testing.assert_allclose(fit.correlations, reduced.correlations,
                                   atol=1e-3)

    def test_lambda_zero_rejected(self):
        rng = np.random.default_rng(34)
        x, y = centered(rng, 10, 6), centered(rng, 10, 2)
        gs = GroupStructure.from_sizes([3, 3])
        with pytest.raises(UnsupportedPenalty):
            grcca_fit(x, y, gs, 0.0, 1.0)

    def test_mu_zero_more_groups_than_rows(self):
        rng = np.random.default_rng(35)
        x, y = centered(rng, 5, 12), centered(rng, 5, 2)
        gs = GroupStructure.from_sizes([2] * 6)
        with pytest.raises(IdentifiabilityError):
            grcca_fit(x, y, gs, 1.0, 0.0)

    def test_auto_path_heuristic(self):
        rng = np.random.default_rng(36)
        # small extension: p + K < 4 (n + K)
        x, y = centered(rng, 10, 15), centered(rng, 10, 2)
        gs = GroupStructure.from_sizes([3] * 5)
        assert grcca_fit(x, y, gs, 1.0, 0.5).method_tag == "grcca-extend"
        # wide problem: eigen path
        x2 = centered(rng, 10, 120)
        gs2 = GroupStructure.from_sizes([24] * 5)
        assert grcca_fit(x2, y, gs2, 1.0, 0.5).method_tag == "grcca-eigen"


class TestPathEquivalenceSweep:
    def test_random_instances_all_paths(self):
        rng = np.random.default_rng(40)
        for trial in range(10):
            n = int(rng.integers(8, 21))
            p = int(rng.integers(2 * n, 10 * n))
            q = int(rng.integers(1, 6))
            lam = float(rng.choice([0.1, 1.0, 10.0]))
            x, y = centered(rng, n, p), centered(rng, n, q)
            fr = rcca_kernel_fit(x, y, lam, r=1)
            fd = fit_direct(x, y, lam * np.eye(p), r=1)
            assert_fits_agree(x, fr, fd)
            assert fr.solver_dim <= n

    def test_no_pxp_in_kernel_paths(self):
        rng = np.random.default_rng(41)
        n, p = 10, 400
        x, y = centered(rng, n, p), centered(rng, n, 2)
        assert rcca_kernel_fit(x, y, 1.0).solver_dim == n
        unpen = np.arange(3)
        assert fit_partial(x, y, unpen, 1.0).solver_dim == n + 3
        gs = GroupStructure.from_sizes([40] * 10)
        for path in ("eigen", "extend"):
            fit = grcca_fit(x, y, gs, 1.0, 0.5, path=path)
            assert fit.solver_dim <= n + 10

    def test_direct_capacity_guard(self):
        rng = np.random.default_rng(42)
        x, y = centered(rng, 8, 100), centered(rng, 8, 2)
        with pytest.raises(CapacityError, match="kernel"):
            fit_direct(x, y, np.eye(100), r=1, budget_bytes=1000)


class TestCoefficientPath:
    def test_ridge_path_shrinks_to_zero(self):
        rng = np.random.default_rng(50)
        x, y = centered(rng, 12, 30), centered(rng, 12, 3)
        grid = [1e-3, 1e-1, 1e1, 1e3, 1e5, 1e8]
        path = coefficient_path(x, y, "rcca", grid)
        small = np.abs(path.alpha_at(0)).max()
        large = np.abs(path.alpha_at(len(grid) - 1)).max()
        assert large <= 1e-3 * small

    def test_group_path_flattens_within_groups(self):
        rng = np.random.default_rng(51)
        x, y = centered(rng, 12, 30), centered(rng, 12, 3)
        gs = GroupStructure.from_sizes([6] * 5)
        path = coefficient_path(x, y, "grcca", [1.0, 1e4, 1e8], mu=1.0,
                                groups=gs)
        alpha = path.alpha_at(2)
        for k in range(5):
            assert alpha[gs.indices(k)].std() <= 1e-6

    def test_group_path_mu_kills_group_means(self):
        rng = np.random.default_rng(52)
        x, y = centered(rng, 12, 30), centered(rng, 12, 3)
        gs = GroupStructure.from_sizes([6] * 5)
        path = coefficient_path(x, y, "grcca", [1.0], mu=[0.1, 1e4, 1e8],
                                groups=gs)
        alpha = path.alpha_at(2)
        for k in range(5):
            assert abs(alpha[gs.indices(k)].mean()) <= 1e-6

    def test_sign_alignment_continuity(self):
        rng = np.random.default_rng(53)
        x, y = centered(rng, 12, 20), centered(rng, 12, 2)
        grid = list(np.logspace(-2, 3, 11))
        path = coefficient_path(x, y, "rcca", grid)
        for i in range(1, len(grid)):
            assert path.alpha_at(i - 1) @ path.alpha_at(i) >= 0.0

    def test_failed_point_recorded_not_fatal(self):
        rng = np.random.default_rng(54)
        x, y = centered(rng, 10, 40), centered(rng, 10, 2)
        path = coefficient_path(x, y, "rcca", [0.0, 1.0])
        assert path.fits[0] is None
        assert "covariance" in path.errors[0]
        assert path.fits[1] is not None
        rows = path.rows()
        assert len(rows) == 40  # only the successful point emits rows

    def test_unsorted_grid_rejected(self):
        rng = np.random.default_rng(55)
        x, y = centered(rng, 10, 5), centered(rng, 10, 2)
        with pytest.raises(DomainError):
            coefficient_path(x, y, "rcca", [1.0, 0.1])


class TestMethodSpec:
    def test_dispatch_matches_fitters(self):
        rng = np.random.default_rng(60)
        x, y = centered(rng, 12, 20), centered(rng, 12, 3)
        gs = GroupStructure.from_sizes([4] * 5)
        spec = MethodSpec("grcca", groups_x=gs)
        f1 = spec.fit(x, y, 2.0, 0.5, r=2)
        f2 = grcca_fit(x, y, gs, 2.0, 0.5, r=2)
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-12)

    def test_y_side_ridge(self):
        rng = np.random.default_rng(61)
        x, y = centered(rng, 12, 20), centered(rng, 12, 3)
        spec = MethodSpec("rcca")
        f0 = spec.fit(x, y, 1.0, lam2=0.0)
        f1 = spec.fit(x, y, 1.0, lam2=5.0)
        assert f1.correlations[0] < f0.correlations[0]
        f2 = rcca_kernel_fit(x, y, 1.0, ky=5.0 * np.eye(3))
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-12)

    def test_general_scaled_by_lambda(self):
        rng = np.random.default_rng(62)
        x, y = centered(rng, 10, 8), centered(rng, 10, 2)
        a = rng.standard_normal((8, 8))
        base = a @ a.T / 8 + 0.1 * np.eye(8)
        spec = MethodSpec("general", penalty_x=base)
        f1 = spec.fit(x, y, 2.0)
        f2 = general_fit(x, y, 2.0 * base)
        np.testing.assert_allclose(f1.correlations, f2.correlations,
                                   atol=1e-12)

    def test_mu_on_non_group_method_rejected(self):
        rng = np.random.default_rng(63)
        x, y = centered(rng, 10, 5), centered(rng, 10, 2)
        with pytest.raises(DomainError):
            MethodSpec("rcca").fit(x, y, 1.0, mu1=0.5)

    def test_missing_structure_rejected(self):
        with pytest.raises(DomainError):
            MethodSpec("grcca")
        with pytest.raises(DomainError):
            MethodSpec("prcca")
