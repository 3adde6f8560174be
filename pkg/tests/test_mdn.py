from dataclasses import replace

import numpy as np
import pytest

from vehsbi.mdn import (Adam, MdnModel, forward_heads, init_mdn, log_prob,
                        loss_and_grad, mixture_logpdf, mixture_weights,
                        read_mdn, sample_mixture, write_mdn)


def small_model(seed=42, n_in=7, hidden=(12, 10), M=3, dim=4, jitter=0.05):
    gen = np.random.default_rng(seed)
    model = init_mdn(gen, n_in=n_in, hidden=hidden, n_components=M, dim=dim)
    return replace(model, params=model.params
                   + jitter * gen.standard_normal(model.params.size))


class TestDensity:
    def test_standard_normal_mode(self):
        # single component, zero mean, identity covariance, theta = 0
        m = init_mdn(np.random.default_rng(0), n_in=3, hidden=(4, 4),
                     n_components=1, dim=6)
        m = replace(m, params=np.zeros_like(m.params))
        lp = mixture_logpdf(m, np.zeros((1, 6)), np.zeros((1, 3)))[0]
        assert lp == pytest.approx(-3 * np.log(2 * np.pi), abs=1e-12)

    def test_single_hot_weight_reduces_to_gaussian(self):
        m = small_model()
        cache = forward_heads(m, np.zeros((1, 7)))
        # push all weight to component 0 via the logits bias
        W1, b1, W2, b2, W3, b3 = range(6)
        params = m.params.copy()
        # b3 slice: last n_out entries; logits are its first M entries
        n_out = m.n_out
        params[-n_out:][0] += 40.0
        m2 = replace(m, params=params)
        w = mixture_weights(m2, np.zeros(7))
        assert w[0] == pytest.approx(1.0, abs=1e-12)
        cache2 = forward_heads(m2, np.zeros((1, 7)))
        mu = cache2["means"][0, 0]
        L = cache2["L"][0, 0]
        lp = mixture_logpdf(m2, mu[None, :], np.zeros((1, 7)))[0]
        expect = -0.5 * 4 * np.log(2 * np.pi) - np.log(np.diag(L)).sum()
        assert lp == pytest.approx(expect, abs=1e-9)

    def test_monte_carlo_normalization(self):
        # integral of exp(logpdf) over a box holding all the mass is 1
        m = small_model(seed=1, jitter=0.02)
        gen = np.random.default_rng(5)
        lo, hi = -2.5, 3.5
        n = 1_000_000
        u = gen.uniform(lo, hi, (n, 4))
        x = np.zeros((n, 7))
        lp = mixture_logpdf(m, u, x)
        vol = (hi - lo) ** 4
        est = np.exp(lp).mean() * vol
        assert est == pytest.approx(1.0, rel=0.02)

    def test_physical_units_jacobian(self):
        m = small_model()
        shift = np.array([1.0, 2.0, 3.0, 4.0])
        scale = np.array([0.5, 0.4, 2.0, 1.5])
        m2 = replace(m, theta_shift=shift, theta_scale=scale)
        x = np.zeros((1, 7))
        u = np.full((1, 4), 0.3)
        theta = shift + scale * 0.3
        lp_unit = mixture_logpdf(m2, u, x)[0]
        lp_phys = log_prob(m2, theta[None, :], x)[0]
        assert lp_phys == pytest.approx(lp_unit - np.log(scale).sum(), abs=1e-12)

    def test_cholesky_positive_definite(self):
        m = small_model(seed=9, jitter=0.3)
        gen = np.random.default_rng(2)
        cache = forward_heads(m, gen.standard_normal((16, 7)))
        L = cache["L"]
        diag = np.diagonal(L, axis1=-2, axis2=-1)
        assert np.all(diag > 0)
        # weights sum to one
        logits = cache["logits"]
        w = np.exp(logits - logits.max(axis=1, keepdims=True))
        w = w / w.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


class TestGradients:
    @pytest.mark.parametrize("mode", ["nll", "atomic"])
    def test_matches_central_differences(self, mode):
        m = small_model()
        gen = np.random.default_rng(7)
        B, K = 8, 4
        X = gen.standard_normal((B, 7))
        U = gen.uniform(0.1, 0.9, (B, K, 4))
        Uk = U[:, :1, :] if mode == "nll" else U
        _, grad = loss_and_grad(m, X, Uk, mode=mode)
        idx = gen.choice(m.params.size, 100, replace=False)
        h = 1e-4
        for i in idx:
            pp, pm = m.params.copy(), m.params.copy()
            pp[i] += h
            pm[i] -= h
            lp, _ = loss_and_grad(replace(m, params=pp), X, Uk, mode=mode)
            lm, _ = loss_and_grad(replace(m, params=pm), X, Uk, mode=mode)
            fd = (lp - lm) / (2 * h)
            assert abs(fd - grad[i]) <= 1e-5 * max(abs(fd), abs(grad[i]), 1e-3)

    def test_duplicated_batch_doubles_gradient_sum(self):
        # the loss is a batch mean, so duplicating every row leaves it
        # unchanged
        m = small_model()
        gen = np.random.default_rng(8)
        X = gen.standard_normal((6, 7))
        U = gen.uniform(0.2, 0.8, (6, 1, 4))
        l1, g1 = loss_and_grad(m, X, U, mode="nll")
        l2, g2 = loss_and_grad(m, np.concatenate([X, X]),
                               np.concatenate([U, U]), mode="nll")
        assert l2 == pytest.approx(l1, rel=1e-12)
        np.testing.assert_allclose(g2, g1, rtol=1e-9, atol=1e-12)

    def test_stationary_point_of_scalar_toy(self):
        # fitting a single free mean parameter to symmetric data has zero
        # gradient at the sample mean
        gen = np.random.default_rng(3)
        m = init_mdn(gen, n_in=1, hidden=(2, 2), n_components=1, dim=1)
        params = np.zeros_like(m.params)
        m = replace(m, params=params)
        # mean head bias is b3[M + 0]; with zero weights mean == bias == 0
        U = np.array([[[0.4]], [[-0.4]]])
        X = np.zeros((2, 1))
        _, grad = loss_and_grad(m, X, U, mode="nll")
        # locate the mean-bias coordinate: last n_out entries are b3
        n_out = m.n_out
        mean_bias_index = m.params.size - n_out + 1
        assert grad[mean_bias_index] == pytest.approx(0.0, abs=1e-12)


class TestAtomicLossValues:
    def test_k1_is_zero(self):
        m = small_model()
        gen = np.random.default_rng(4)
        X = gen.standard_normal((5, 7))
        U = gen.uniform(0.2, 0.8, (5, 1, 4))
        loss, _ = loss_and_grad(m, X, U, mode="atomic")
        assert loss == 0.0

    def test_equal_density_atoms_give_log_k(self):
        # duplicate the positive atom K times: the softmax is uniform
        m = small_model()
        gen = np.random.default_rng(5)
        X = gen.standard_normal((5, 7))
        u = gen.uniform(0.2, 0.8, (5, 1, 4))
        K = 6
        U = np.repeat(u, K, axis=1)
        loss, _ = loss_and_grad(m, X, U, mode="atomic")
        assert loss == pytest.approx(np.log(K), rel=1e-12)

    def test_nonnegative(self):
        m = small_model()
        gen = np.random.default_rng(6)
        for _ in range(10):
            X = gen.standard_normal((8, 7))
            U = gen.uniform(0.0, 1.0, (8, 5, 4))
            loss, _ = loss_and_grad(m, X, U, mode="atomic")
            assert loss >= 0.0


class TestSampling:
    def test_moments_of_known_gaussian(self):
        m = init_mdn(np.random.default_rng(0), n_in=2, hidden=(3, 3),
                     n_components=1, dim=3)
        m = replace(m, params=np.zeros_like(m.params))
        # zero raw weights: mean 0, identity covariance in unit coords
        draws = sample_mixture(m, np.zeros(2), 100_000,
                               np.random.default_rng(11))
        se = 1.0 / np.sqrt(100_000)
        assert np.all(np.abs(draws.mean(axis=0)) < 4 * se)
        np.testing.assert_allclose(draws.std(axis=0), 1.0, rtol=0.02)

    def test_respects_affine_transform(self):
        m = init_mdn(np.random.default_rng(0), n_in=2, hidden=(3, 3),
                     n_components=1, dim=2,
                     theta_shift=np.array([10.0, -5.0]),
                     theta_scale=np.array([2.0, 0.5]))
        m = replace(m, params=np.zeros_like(m.params))
        draws = sample_mixture(m, np.zeros(2), 50_000, np.random.default_rng(3))
        assert draws[:, 0].mean() == pytest.approx(10.0, abs=0.05)
        assert draws[:, 1].mean() == pytest.approx(-5.0, abs=0.02)
        assert draws[:, 0].std() == pytest.approx(2.0, rel=0.03)

    def test_deterministic_given_generator_seed(self):
        m = small_model()
        a = sample_mixture(m, np.zeros(7), 64, np.random.default_rng(5))
        b = sample_mixture(m, np.zeros(7), 64, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)


class TestAdamAndIO:
    def test_adam_converges_on_quadratic(self):
        opt = Adam(2, lr=0.05)
        p = np.array([3.0, -2.0])
        for _ in range(500):
            p = opt.step(p, 2 * (p - np.array([1.0, 1.0])))
        np.testing.assert_allclose(p, [1.0, 1.0], atol=1e-3)

    def test_model_io_round_trip(self, tmp_path):
        m = small_model()
        write_mdn(m, tmp_path / "m.json")
        back = read_mdn(tmp_path / "m.json")
        np.testing.assert_array_equal(back.params, m.params)
        assert back.hidden == m.hidden
        assert back.n_components == m.n_components
        x = np.random.default_rng(0).standard_normal((4, 7))
        u = np.random.default_rng(1).uniform(0.2, 0.8, (4, 4))
        np.testing.assert_array_equal(mixture_logpdf(m, u, x),
                                      mixture_logpdf(back, u, x))
