"""Sampler, decorrelation, and closed-form precision checks.

Dense-solve oracles build the full covariance at tiny p and compare against
the O(p) closed forms; distributional checks run on seeded vectorized draws.
"""

import numpy as np
import pytest
from scipy.stats import ks_2samp

from corrdetect.errors import ContractError, SingularCovarianceError, UnsupportedRegimeError
from corrdetect.models import (
    Equicorrelated,
    Grouped,
    RankOne,
    covariance_apply,
    decorrelate,
    precision_apply,
    sample,
)


def dense_covariance(model) -> np.ndarray:
    """Oracle: materialize the covariance matrix."""
    p, g = model.p, model.gamma
    if isinstance(model, Equicorrelated):
        return (1 - g) * np.eye(p) + g * np.ones((p, p))
    if isinstance(model, Grouped):
        sigma = (1 - g) * np.eye(p)
        for k in range(model.R):
            ind = (model.labels == k).astype(float)
            sigma += g * np.outer(ind, ind)
        return sigma
    return (1 - g) * np.eye(p) + g * np.outer(model.v, model.v)


class TestConstruction:
    def test_grouped_requires_divisibility(self):
        with pytest.raises(ContractError):
            Grouped(10, 3, 0.5)

    def test_grouped_labels_must_balance(self):
        with pytest.raises(ContractError):
            Grouped(4, 2, 0.5, labels=np.array([0, 0, 0, 1]))

    def test_rank_one_normalization_enforced(self):
        with pytest.raises(ContractError):
            RankOne(4, 0.5, np.array([1.0, 1.0, 1.0, 2.0]))
        m = RankOne.renormalized(4, 0.5, np.array([1.0, 1.0, 1.0, 2.0]))
        assert np.isclose(m.v @ m.v, 4.0, rtol=1e-12)

    def test_gamma_range(self):
        with pytest.raises(ContractError):
            Equicorrelated(4, 1.5)
        Equicorrelated(4, 1.0)  # singular covariance is a first-class variant


class TestSampler:
    def test_gamma_zero_marginals(self):
        model = Equicorrelated(8, 0.0)
        rng = np.random.default_rng(0)
        obs = sample(model, None, rng, size=100_000)
        var = obs.x.var(axis=0)
        assert np.all(np.abs(var - 1.0) < 0.02)
        assert np.all(np.abs(obs.x.mean(axis=0)) < 0.02)

    def test_equicorrelated_pair_correlation(self):
        model = Equicorrelated(2, 0.5)
        rng = np.random.default_rng(1)
        x = sample(model, None, rng, size=100_000).x
        corr = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        assert abs(corr - 0.5) < 0.02

    def test_perfect_correlation_collapses(self):
        model = Equicorrelated(3, 1.0)
        rng = np.random.default_rng(2)
        x = sample(model, None, rng, size=200).x
        assert np.all(x[:, 0] == x[:, 1])
        assert np.all(x[:, 0] == x[:, 2])

    def test_deterministic_given_stream(self):
        model = Grouped(12, 3, 0.4)
        theta = np.arange(12.0)
        x1 = sample(model, theta, np.random.default_rng(99), size=5).x
        x2 = sample(model, theta, np.random.default_rng(99), size=5).x
        assert np.array_equal(x1, x2)

    def test_grouped_covariance_small_p(self):
        model = Grouped(4, 2, 0.6)
        rng = np.random.default_rng(3)
        x = sample(model, None, rng, size=200_000).x
        emp = np.cov(x.T)
        assert np.allclose(emp, dense_covariance(model), atol=0.03)

    def test_grouped_R_equals_p_reduces_to_iid(self):
        # Per-coordinate two-sample KS against gamma = 0 draws.
        p = 8
        x_grouped = sample(Grouped(p, p, 0.7), None, np.random.default_rng(11), size=10_000).x
        x_iid = sample(Equicorrelated(p, 0.0), None, np.random.default_rng(12), size=10_000).x
        for j in range(p):
            assert ks_2samp(x_grouped[:, j], x_iid[:, j]).pvalue > 0.001

    def test_theta_dimension_guard(self):
        with pytest.raises(ContractError):
            sample(Equicorrelated(4, 0.0), np.ones(5), np.random.default_rng(0))


class TestDecorrelate:
    @pytest.mark.parametrize("model", [
        Equicorrelated(20, 0.5),
        Grouped(24, 4, 0.75),
        RankOne.renormalized(20, 0.3, np.linspace(1.0, 2.0, 20)),
    ])
    def test_null_output_standard_normal(self, model):
        rng = np.random.default_rng(42)
        x = sample(model, None, rng, size=100_000).x
        xt = decorrelate(model, x, rng)
        n = x.shape[0]
        assert np.all(np.abs(xt.mean(axis=0)) <= 4.0 / np.sqrt(n))
        corr = np.corrcoef(xt.T)
        off = corr - np.diag(np.diag(corr))
        assert np.max(np.abs(off)) <= 0.02
        assert np.all(np.abs(corr.diagonal() - 1.0) <= 0.02)

    def test_constant_signal_annihilated(self):
        # theta = a*1 contributes nothing: same stream, shifted data,
        # identical output up to float roundoff in the mean subtraction.
        model = Equicorrelated(4, 0.5)
        x = np.array([0.3, -1.2, 0.7, 2.1])
        out0 = decorrelate(model, x, np.random.default_rng(5))
        out1 = decorrelate(model, x + 17.25, np.random.default_rng(5))
        assert np.allclose(out0, out1, atol=1e-12)

    def test_grouped_shift_formula(self):
        # p=4, R=2, theta=(1,0,0,0), gamma=0.75: the deterministic part of the
        # transform maps theta to (0.5,-0.5)/sqrt(0.25) = (1,-1) on block 1.
        model = Grouped(4, 2, 0.75)
        theta = np.array([1.0, 0.0, 0.0, 0.0])
        with_theta = decorrelate(model, theta, np.random.default_rng(7))
        without = decorrelate(model, np.zeros(4), np.random.default_rng(7))
        shift = with_theta - without
        assert np.allclose(shift, [1.0, -1.0, 0.0, 0.0], atol=1e-12)

    def test_gamma_one_unsupported(self):
        model = Equicorrelated(4, 1.0)
        with pytest.raises(UnsupportedRegimeError):
            decorrelate(model, np.zeros(4), np.random.default_rng(0))

    def test_noncontiguous_groups_match_permuted_contiguous(self):
        labels = np.array([1, 0, 1, 0, 0, 1])
        model = Grouped(6, 2, 0.5, labels=labels)
        x = np.random.default_rng(8).standard_normal(6)
        out = decorrelate(model, x, np.random.default_rng(9))
        order = np.argsort(labels, kind="stable")
        contiguous = Grouped(6, 2, 0.5)
        out_c = decorrelate(contiguous, x[order], np.random.default_rng(9))
        assert np.allclose(out[order], out_c, rtol=0, atol=1e-12)


class TestPrecision:
    def test_gamma_zero_is_identity(self):
        u = np.random.default_rng(0).standard_normal(16)
        for model in [Equicorrelated(16, 0.0), Grouped(16, 4, 0.0),
                      RankOne.renormalized(16, 0.0, np.ones(16))]:
            assert np.allclose(precision_apply(model, u), u, rtol=1e-14)

    def test_inverse_identity_equicorrelated(self):
        model = Equicorrelated(3, 0.5)
        u = np.ones(3)
        back = covariance_apply(model, precision_apply(model, u))
        assert np.allclose(back, u, atol=1e-10)

    def test_grouped_matches_dense_solve(self):
        model = Grouped(4, 2, 0.3)
        u = np.random.default_rng(4).standard_normal(4)
        expected = np.linalg.solve(dense_covariance(model), u)
        assert np.allclose(precision_apply(model, u), expected, atol=1e-10)

    def test_rank_one_matches_dense_solve(self):
        model = RankOne.renormalized(6, 0.8, np.array([1.0, -2.0, 0.5, 3.0, -1.0, 0.25]))
        u = np.random.default_rng(5).standard_normal(6)
        expected = np.linalg.solve(dense_covariance(model), u)
        assert np.allclose(precision_apply(model, u), expected, atol=1e-10)

    def test_roundtrip_property_all_families(self):
        rng = np.random.default_rng(6)
        models = []
        for g in [0.0, 0.3, 0.9, 0.999]:
            models += [Equicorrelated(40, g), Grouped(40, 5, g),
                       RankOne.renormalized(40, g, rng.standard_normal(40) + 0.1)]
        for model in models:
            for _ in range(5):
                u = rng.standard_normal(40)
                back = covariance_apply(model, precision_apply(model, u))
                assert np.max(np.abs(back - u)) <= 1e-9 * max(1.0, np.max(np.abs(u)))

    def test_singular_at_gamma_one(self):
        with pytest.raises(SingularCovarianceError):
            precision_apply(Equicorrelated(4, 1.0), np.ones(4))
