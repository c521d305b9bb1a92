import numpy as np
import pytest
from sklearn.base import clone
from sklearn.utils.validation import check_is_fitted

from mvqlink.distortion import build_table
from mvqlink.training import (
    MultiCodebookVectorQuantizer,
    TrainConfig,
    covq_objective,
    lloyd_step,
    make_synthetic_bank,
    ramp_profile,
    refine_profile,
    regularizer,
    regularizer_grad,
    train_sequential,
)
from mvqlink.vq import Codebook, load_bank, save_bank


class TestRegularizer:
    def test_minimum_at_one_over_e(self):
        mu = np.full((3, 4), 1.0 / np.e)
        assert regularizer(mu) == pytest.approx(-1.0 / np.e, abs=1e-12)

    def test_approaches_zero_near_one(self):
        assert abs(regularizer(np.full((2, 2), 1.0 - 1e-12))) < 1e-10

    def test_at_half(self):
        assert regularizer(np.full((2, 2), 0.5)) == pytest.approx(0.5 * np.log(0.5), rel=1e-12)

    def test_rejects_boundary(self):
        with pytest.raises(ValueError):
            regularizer(np.array([[0.0, 0.5]]))
        with pytest.raises(ValueError):
            regularizer(np.array([[1.0, 0.5]]))

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(0)
        mu = rng.uniform(0.05, 0.9, size=(2, 3))
        grad = regularizer_grad(mu)
        h = 1e-7
        for idx in np.ndindex(mu.shape):
            up, dn = mu.copy(), mu.copy()
            up[idx] += h
            dn[idx] -= h
            fd = (regularizer(up) - regularizer(dn)) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-5)


class TestLloydStep:
    def test_mu_zero_reduces_to_kmeans(self):
        rng = np.random.default_rng(1)
        subs = rng.standard_normal((40, 1, 2))
        cb = Codebook(rng.standard_normal((4, 2)))
        out = lloyd_step(cb, np.zeros((1, 2)), subs)
        d2 = np.sum((subs[:, 0, None, :] - cb.codewords[None]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        for k in range(4):
            members = subs[labels == k, 0, :]
            if members.size:
                np.testing.assert_allclose(out.codewords[k], members.mean(axis=0), atol=1e-12)

    def test_one_point_per_cell(self):
        pts = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        cb = Codebook(pts - 0.1)
        out = lloyd_step(cb, np.zeros((1, 2)), pts.reshape(4, 1, 1))
        np.testing.assert_allclose(np.sort(out.codewords, axis=0), pts, atol=1e-12)

    def test_hand_weighted_means_b1(self):
        # codewords {0, 1}, mu=0.1, data {0.1, 0.2, 0.8, 0.9}:
        # cell sums are 0.3 and 1.7 with two points each, so the flip-weighted
        # centroids are (0.9*0.3 + 0.1*1.7)/2 and (0.1*0.3 + 0.9*1.7)/2
        cb = Codebook(np.array([[0.0], [1.0]]))
        subs = np.array([0.1, 0.2, 0.8, 0.9]).reshape(4, 1, 1)
        out = lloyd_step(cb, np.array([[0.1]]), subs)
        assert out.codewords[0, 0] == pytest.approx(0.22, rel=1e-12)
        assert out.codewords[1, 0] == pytest.approx(0.78, rel=1e-12)

    def test_dead_codeword_reseeded(self):
        cb = Codebook(np.array([[0.0], [100.0]]))
        subs = np.array([0.0, 0.5, 1.0]).reshape(3, 1, 1)
        out = lloyd_step(cb, np.zeros((1, 1)), subs)
        # the far codeword owns no points and lands on the worst-quantized one
        assert out.codewords[1, 0] == pytest.approx(1.0)

    def test_rejects_empty_dataset(self):
        cb = Codebook(np.zeros((2, 1)))
        with pytest.raises(ValueError):
            lloyd_step(cb, np.zeros((1, 1)), np.empty((0, 1, 1)))


class TestRefineProfile:
    def _setup(self, seed=2):
        rng = np.random.default_rng(seed)
        cb = Codebook(rng.standard_normal((4, 2)))
        subs = rng.standard_normal((30, 2, 2))
        return cb, subs

    def test_lambda_zero_descends_to_floor(self):
        cb, subs = self._setup()
        mu0 = np.full((2, 2), 0.3)
        profile = refine_profile(cb, mu0, subs, lam=0.0, mu_min=0.05,
                                 step_size=0.5, iters=200)
        np.testing.assert_allclose(profile.mu, 0.05, atol=1e-9)

    def test_huge_lambda_drives_toward_regularizer_minimum(self):
        cb, subs = self._setup()
        mu0 = np.full((2, 2), 0.05)
        profile = refine_profile(cb, mu0, subs, lam=1e6, mu_min=0.01,
                                 step_size=1e-6, iters=300)
        # the regularizer minimizer 1/e sits inside [mu_min, 0.5]
        np.testing.assert_allclose(profile.mu, 1.0 / np.e, atol=1e-4)

    def test_objective_non_increasing(self):
        cb, subs = self._setup(seed=3)
        rng = np.random.default_rng(4)
        for lam in (0.0, 0.1, 1.0):
            mu0 = rng.uniform(0.05, 0.45, size=(2, 2))
            objs = []
            mu = mu0.copy()
            for _ in range(6):
                profile = refine_profile(cb, mu, subs, lam, 0.01, 0.05, iters=1)
                objs.append(covq_objective(cb, profile.mu, subs)
                            + lam * regularizer(profile.mu))
                mu = profile.mu
            assert all(b <= a + 1e-10 for a, b in zip(objs, objs[1:]))

    def test_respects_bounds(self):
        cb, subs = self._setup(seed=5)
        profile = refine_profile(cb, np.full((2, 2), 0.2), subs, 0.5, 0.03, 0.3, 50)
        assert np.all(profile.mu >= 0.03) and np.all(profile.mu <= 0.5)


class TestTrainSequential:
    def _config(self, **kw):
        base = dict(n_codebooks=2, subvector_dim=2, index_bits=3, n_subvectors=3,
                    mu_min_list=(0.005, 0.05), lambda_list=(0.125, 0.25),
                    max_iters=30, master_seed=0)
        base.update(kw)
        return TrainConfig(**base)

    def _data(self, config, n=300, seed=6):
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, config.n_subvectors * config.subvector_dim))

    def test_v1_reduces_to_plain_lloyd(self):
        config = self._config(n_codebooks=1, mu_min_list=(0.01,), lambda_list=(0.125,))
        data = self._data(config)
        bank = train_sequential(data, config)
        assert bank.V == 1
        # one more Lloyd step barely moves the converged codebook's objective
        subs = data.reshape(-1, config.n_subvectors, config.subvector_dim)
        before = covq_objective(bank.codebooks[0], bank.profiles[0].mu, subs)
        after = covq_objective(lloyd_step(bank.codebooks[0], bank.profiles[0].mu, subs),
                               bank.profiles[0].mu, subs)
        assert before - after <= config.convergence_tol * before * 10

    def test_stage_objectives_non_increasing(self):
        config = self._config()
        data = self._data(config)
        history = []
        train_sequential(data, config, history)
        for stage in (1, 2):
            objs = [obj for s, _, obj in history if s == stage]
            assert len(objs) >= 2
            assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))

    def test_low_mu_codebook_achieves_lower_table_distortion(self):
        config = self._config(profile_mode="fixed")
        data = self._data(config, n=500)
        bank = train_sequential(data, config)
        table = build_table(data, bank)
        assert table.values[0].mean() <= table.values[-1].mean()

    def test_refined_mode_runs_and_respects_floors(self):
        config = self._config(profile_mode="refined", max_iters=10)
        data = self._data(config, n=120)
        bank = train_sequential(data, config)
        for profile, mu_min in zip(bank.profiles, bank.mu_min_list):
            assert np.all(profile.mu >= mu_min - 1e-12)

    def test_bank_round_trips_exactly(self, tmp_path):
        config = self._config(max_iters=5)
        data = self._data(config, n=100)
        bank = train_sequential(data, config)
        path = tmp_path / "bank.json"
        save_bank(path, bank)
        loaded = load_bank(path)
        for a, b in zip(loaded.codebooks, bank.codebooks):
            np.testing.assert_array_equal(a.codewords, b.codewords)
        for a, b in zip(loaded.profiles, bank.profiles):
            np.testing.assert_array_equal(a.mu, b.mu)

    def test_deterministic_given_seed(self):
        config = self._config(max_iters=8, init="random-sample")
        data = self._data(config, n=150)
        b1 = train_sequential(data, config)
        b2 = train_sequential(data, config)
        for a, b in zip(b1.codebooks, b2.codebooks):
            np.testing.assert_array_equal(a.codewords, b.codewords)

    def test_rejects_empty_dataset(self):
        config = self._config()
        with pytest.raises(ValueError):
            train_sequential(np.empty((0, 6)), config)

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            self._config(mu_min_list=(0.05, 0.005))
        with pytest.raises(ValueError):
            self._config(init="kmeans++")


class TestRampProfile:
    def test_bounds_and_determinism(self):
        mu = ramp_profile(4, 3, 0.01, 7)
        assert mu.shape == (4, 3)
        assert np.all(mu >= 0.01) and np.all(mu <= 0.04 + 1e-12)
        np.testing.assert_array_equal(mu, ramp_profile(4, 3, 0.01, 7))

    def test_cap_at_half(self):
        mu = ramp_profile(2, 2, 0.3, 0)
        assert np.all(mu <= 0.5)


class TestMakeSyntheticBank:
    def test_shapes_and_defaults(self):
        bank = make_synthetic_bank(5, 4, 9, 8, seed=1)
        assert (bank.V, bank.D, bank.B, bank.N) == (5, 4, 9, 8)
        assert bank.mu_min_list == (0.0005, 0.001, 0.0045, 0.02, 0.05)
        assert bank.lambda_list == tuple(0.125 * 2.0**v for v in range(5))


class TestEstimator:
    def test_fit_transform(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((200, 6))
        est = MultiCodebookVectorQuantizer(n_codebooks=2, subvector_dim=2,
                                           index_bits=3, max_iters=10,
                                           mu_min_list=(0.005, 0.05))
        out = est.fit(X).transform(X)
        check_is_fitted(est)
        assert out.shape == X.shape
        # quantization reduces but does not eliminate error on continuous data
        err = np.mean(np.sum((X - out) ** 2, axis=1))
        assert 0 < err < np.mean(np.sum(X**2, axis=1))

    def test_transform_is_noiseless_round_trip(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((50, 4))
        est = MultiCodebookVectorQuantizer(n_codebooks=1, subvector_dim=2,
                                           index_bits=2, max_iters=5,
                                           mu_min_list=(0.01,)).fit(X)
        out = est.transform(X)
        cw = est.bank_.codebooks[0].codewords
        for row in out.reshape(-1, 2):
            assert np.min(np.sum((cw - row) ** 2, axis=1)) == pytest.approx(0.0, abs=1e-20)

    def test_sklearn_clone_and_params(self):
        est = MultiCodebookVectorQuantizer(n_codebooks=3, index_bits=4)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()
        assert cloned.get_params()["n_codebooks"] == 3

    def test_rejects_indivisible_features(self):
        est = MultiCodebookVectorQuantizer(subvector_dim=4)
        with pytest.raises(ValueError):
            est.fit(np.zeros((10, 6)))
