import numpy as np
import pytest

from mvqlink.distortion import (
    DistortionTable,
    build_table,
    distortion_grad_mu,
    expected_distortion,
    load_table,
    save_table,
    transition_matrix,
)
from mvqlink.channel import bsc_transition_prob
from mvqlink.vq import Codebook, index_to_bits, quantize
from test_vq import make_bank


class TestExpectedDistortion:
    def test_noiseless_equals_quantization_error(self):
        rng = np.random.default_rng(0)
        cb = Codebook(rng.standard_normal((8, 2)))
        z = rng.standard_normal(2)
        _, cw = quantize(z, cb)
        d = expected_distortion(z, cb, np.zeros(3))
        assert d == pytest.approx(float(np.sum((cw - z) ** 2)), abs=1e-12)

    def test_two_term_hand_case(self):
        cb = Codebook(np.array([[0.0], [1.0]]))
        d = expected_distortion([0.2], cb, [0.1])
        assert d == pytest.approx(0.9 * 0.04 + 0.1 * 0.64, rel=1e-12)
        assert d == pytest.approx(0.1)

    def test_uniform_channel_ignores_transmitted_index(self):
        rng = np.random.default_rng(1)
        cb = Codebook(rng.standard_normal((16, 3)))
        z = rng.standard_normal(3)
        d = expected_distortion(z, cb, np.full(4, 0.5))
        expected = np.mean(np.sum((cb.codewords - z) ** 2, axis=1))
        assert d == pytest.approx(float(expected), rel=1e-12)

    def test_lower_bounded_by_quantization_error(self):
        rng = np.random.default_rng(2)
        cb = Codebook(rng.standard_normal((8, 2)))
        for _ in range(20):
            z = rng.standard_normal(2)
            mu = rng.uniform(0.0, 0.5, 3)
            _, cw = quantize(z, cb)
            assert expected_distortion(z, cb, mu) >= np.sum((cw - z) ** 2) - 1e-12


class TestDistortionGradMu:
    def test_single_bit_closed_form(self):
        cb = Codebook(np.array([[0.0], [1.0]]))
        z = np.array([0.2])
        grad = distortion_grad_mu(z, cb, [0.1])
        assert grad[0] == pytest.approx(0.64 - 0.04, rel=1e-10)

    def test_matches_central_finite_differences(self):
        rng = np.random.default_rng(3)
        cb = Codebook(rng.standard_normal((16, 3)))
        h = 1e-6
        for _ in range(20):
            z = rng.standard_normal(3)
            mu = rng.uniform(0.01, 0.4, 4)
            grad = distortion_grad_mu(z, cb, mu)
            for j in range(4):
                up, dn = mu.copy(), mu.copy()
                up[j] += h
                dn[j] -= h
                fd = (expected_distortion(z, cb, up) - expected_distortion(z, cb, dn)) / (2 * h)
                assert grad[j] == pytest.approx(fd, rel=1e-5, abs=1e-10)

    def test_zero_gradient_at_symmetric_center(self):
        # all codewords equidistant from z: flipping bits never changes the error
        cb = Codebook(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]]))
        grad = distortion_grad_mu([0.0, 0.0], cb, [0.2, 0.3])
        np.testing.assert_allclose(grad, 0.0, atol=1e-12)

    def test_rejects_boundary_mu(self):
        cb = Codebook(np.array([[0.0], [1.0]]))
        with pytest.raises(ValueError):
            distortion_grad_mu([0.2], cb, [0.0])


class TestTransitionMatrix:
    def test_rows_match_pairwise_products(self):
        rng = np.random.default_rng(4)
        mu = rng.uniform(0.0, 0.5, 3)
        trans = transition_matrix(mu, 3)
        for a in range(8):
            for b in range(8):
                direct = bsc_transition_prob(index_to_bits(a, 3), index_to_bits(b, 3), mu)
                assert trans[a, b] == pytest.approx(direct, rel=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        trans = transition_matrix(rng.uniform(0.0, 0.5, 6), 6)
        np.testing.assert_allclose(trans.sum(axis=1), 1.0, atol=1e-12)


class TestBuildTable:
    def test_single_vector_matches_expected_distortion(self):
        bank = make_bank()
        rng = np.random.default_rng(6)
        z = rng.standard_normal(bank.N * bank.D)
        table = build_table(z, bank)
        subs = z.reshape(bank.N, bank.D)
        for v in range(1, bank.V + 1):
            for i in range(bank.N):
                direct = expected_distortion(subs[i], bank.codebooks[v - 1], bank.mu(v)[i])
                assert table.entry(v, i) == pytest.approx(direct, rel=1e-12)

    def test_duplicate_dataset_idempotent(self):
        bank = make_bank()
        rng = np.random.default_rng(7)
        z = rng.standard_normal(bank.N * bank.D)
        t1 = build_table(z, bank)
        t2 = build_table(np.vstack([z, z]), bank)
        np.testing.assert_allclose(t1.values, t2.values, rtol=1e-14)
        assert t2.dataset_size == 2

    def test_matches_loop_oracle(self):
        bank = make_bank(n_codebooks=2, dim=2, bits=2, n_pos=2, seed=8)
        rng = np.random.default_rng(9)
        data = rng.standard_normal((3, bank.N * bank.D))
        table = build_table(data, bank)
        for v in range(1, bank.V + 1):
            for i in range(bank.N):
                acc = [
                    expected_distortion(row.reshape(bank.N, bank.D)[i],
                                        bank.codebooks[v - 1], bank.mu(v)[i])
                    for row in data
                ]
                assert table.entry(v, i) == pytest.approx(np.mean(acc), rel=1e-12)

    def test_rejects_empty_dataset(self):
        bank = make_bank()
        with pytest.raises(ValueError):
            build_table(np.empty((0, bank.N * bank.D)), bank)

    def test_rejects_dimension_mismatch(self):
        bank = make_bank()
        with pytest.raises(ValueError):
            build_table(np.zeros(bank.N * bank.D + 1), bank)


class TestTablePersistence:
    def test_csv_round_trip(self, tmp_path):
        bank = make_bank(seed=10)
        rng = np.random.default_rng(11)
        data = rng.standard_normal((5, bank.N * bank.D))
        table = build_table(data, bank)
        path = tmp_path / "table.csv"
        save_table(path, table)
        loaded = load_table(path, dataset_size=5)
        np.testing.assert_array_equal(loaded.values, table.values)
        assert path.read_text().splitlines()[0] == "v,i,value"

    def test_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n1,0,0.5\n")
        with pytest.raises(ValueError):
            load_table(path)

    def test_rejects_missing_cells(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("v,i,value\n1,0,0.5\n2,1,0.25\n")
        with pytest.raises(ValueError):
            load_table(path)

    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            DistortionTable(np.array([[-1.0, 0.5]]), 1)
