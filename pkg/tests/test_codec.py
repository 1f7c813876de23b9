import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmest.codec import (
    BinaryEncoder,
    EncodedVector,
    FixedEncoder,
    IdentityEncoder,
    RotatedEncoder,
    TernaryEncoder,
    TernaryParams,
    VariableEncoder,
    binary_params,
    decode_average,
    encode_binary_quant,
    encode_fixed,
    encode_ternary,
    encode_variable,
    fixed_dense,
    fwht,
    node_seeds,
    rotate,
    unrotate,
)
from dmest.core import Rng, derive_seeds, gen_synthetic, sample_subset

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def hadamard(m):
    h = np.array([[1.0]])
    while h.shape[0] < m:
        h = np.block([[h, h], [h, -h]])
    return h


class TestEncodedVector:
    def test_dense_round_trip(self):
        y = EncodedVector.from_dense([1.0, 5.0, 1.0, -2.0], 1.0, node_id=3)
        assert y.indices.tolist() == [1, 3]
        assert y.entries == [(1, 5.0), (3, -2.0)]
        assert y.dense().tolist() == [1.0, 5.0, 1.0, -2.0]

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            EncodedVector(0, 4, 0.0, [2, 1], [1.0, 1.0])
        with pytest.raises(ValueError):
            EncodedVector(0, 4, 0.0, [4], [1.0])


class TestVariable:
    def test_p_one_is_identity(self):
        x = np.array([3.0, -1.0, 0.5])
        y = encode_variable(x, 1.0, 0.7, Rng(0))
        assert np.array_equal(y.dense(), x)

    def test_all_at_center_gives_empty_support(self):
        y = encode_variable([2.0, 2.0, 2.0], 0.3, 2.0, Rng(5))
        assert y.support_size == 0 and y.dense().tolist() == [2.0] * 3

    def test_zero_probability_where_x_differs(self):
        with pytest.raises(ValueError):
            encode_variable([1.0, 2.0], [0.0, 1.0], 0.0, Rng(0))
        # a zero probability on an entry equal to the center is allowed
        y = encode_variable([0.0, 2.0], [0.0, 1.0], 0.0, Rng(0))
        assert y.dense().tolist() == [0.0, 2.0]

    def test_example_unbiased(self):
        X = np.array([[0.0, 2.0]])
        enc = VariableEncoder(np.full((1, 2), 0.5), [1.0])
        Y = enc.sample(X, derive_seeds(1, 100_000))[:, 0]
        assert set(np.unique(Y)) <= {-1.0, 1.0, 3.0}
        se = Y.std(axis=0, ddof=1) / np.sqrt(len(Y))
        assert np.all(np.abs(Y.mean(axis=0) - X[0]) <= 4 * se)

    def test_support_law(self):
        probs = np.array([0.1, 0.5, 0.9])
        X = np.array([[1.0, 2.0, 3.0]])
        Y = VariableEncoder(probs[None], [0.0]).sample(X, derive_seeds(2, 50_000))[:, 0]
        freq = (Y != 0.0).mean(axis=0)
        assert np.all(np.abs(freq - probs) <= 4 * np.sqrt(probs * (1 - probs) / 50_000))

    def test_sample_matches_per_node(self):
        X = gen_synthetic("gaussian", 3, 10, 0).values
        enc = VariableEncoder.uniform(X, 0.4)
        trial = derive_seeds(9, 4)
        dense = enc.sample(X, trial)
        seeds = node_seeds(trial, 3)
        for t in range(4):
            for i in range(3):
                assert np.array_equal(dense[t, i], enc.encode_node(X[i], i, int(seeds[t, i])).dense())

    def test_seeded_requires_uniform(self):
        with pytest.raises(ValueError):
            VariableEncoder([[0.2, 0.3]], [0.0], seeded=True)


class TestFixed:
    def test_spec_example(self):
        X = np.array([1.0, 2.0, 3.0, 4.0])
        mask = np.array([True, False, True, False])
        assert fixed_dense(X, mask, 2, 2.5).tolist() == [-0.5, 2.5, 3.5, 2.5]

    def test_k_equals_d_is_identity(self):
        x = np.array([1.0, 2.0, 4.0])
        assert np.array_equal(encode_fixed(x, 3, 0.3, seed=8).dense(), x)

    def test_support_is_the_seeded_subset(self):
        x = np.arange(1.0, 9.0)
        y = encode_fixed(x, 3, 0.0, seed=21)
        assert y.indices.tolist() == sample_subset(21, 8, 3).tolist()
        assert y.k == 3 and y.seed == 21

    def test_exhaustive_enumeration_is_unbiased(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        outcomes = []
        for sub in itertools.combinations(range(4), 2):
            mask = np.zeros(4, dtype=bool)
            mask[list(sub)] = True
            outcomes.append(fixed_dense(x, mask, 2, 2.5))
        assert np.allclose(np.mean(outcomes, axis=0), x, rtol=0, atol=1e-15)

    def test_sample_matches_per_node(self):
        X = gen_synthetic("laplace", 2, 9, 1).values
        enc = FixedEncoder.row_mean(X, 4)
        trial = derive_seeds(3, 5)
        dense = enc.sample(X, trial)
        seeds = node_seeds(trial, 2)
        for t in range(5):
            for i in range(2):
                assert np.array_equal(dense[t, i], enc.encode_node(X[i], i, int(seeds[t, i])).dense())


class TestBinary:
    def test_extremes_are_deterministic(self):
        x = np.array([0.0, 1.0, 4.0])
        for s in range(20):
            y = encode_binary_quant(x, Rng(s)).dense()
            assert y[0] == 0.0 and y[2] == 4.0 and y[1] in (0.0, 4.0)

    def test_constant_row(self):
        y = encode_binary_quant([3.0, 3.0], Rng(0))
        assert y.dense().tolist() == [3.0, 3.0]

    def test_matches_variable_encoder_by_enumeration(self):
        # every coordinate has two outcomes; compare the outcome/probability tables
        x = np.array([-1.0, 0.5, 2.0, 3.0])
        probs, centers = binary_params(x[None])
        lo, hi = x.min(), x.max()
        for j, p in enumerate(probs[0]):
            binary_table = {v: q for v, q in ((hi, p), (lo, 1 - p)) if q > 0}
            kept = x[j] / p - (1 - p) / p * centers[0] if p > 0 else None
            var_table = {}
            if p > 0:
                var_table[kept] = var_table.get(kept, 0.0) + p
            if p < 1:
                var_table[centers[0]] = var_table.get(centers[0], 0.0) + 1 - p
            assert len(binary_table) == len(var_table)
            for (v1, q1), (v2, q2) in zip(sorted(binary_table.items()), sorted(var_table.items())):
                assert v1 == pytest.approx(v2, rel=1e-12) and q1 == pytest.approx(q2, rel=1e-12)

    def test_unbiased(self):
        X = np.array([[0.0, 1.0, 3.0, 4.0]])
        Y = BinaryEncoder().sample(X, derive_seeds(4, 100_000))[:, 0]
        se = Y.std(axis=0, ddof=1) / np.sqrt(len(Y))
        inner = se > 0
        assert np.all(np.abs(Y.mean(axis=0) - X[0])[inner] <= 4 * se[inner])
        assert np.array_equal(Y.mean(axis=0)[~inner], X[0][~inner])


class TestTernary:
    def test_zero_probabilities_is_identity(self):
        x = np.array([1.0, 2.0, 3.0])
        params = TernaryParams.uniform(x[None], 0.0, 0.0)
        assert np.array_equal(encode_ternary(x, params, 0, Rng(0)), x)

    def test_third_branch_value(self):
        # X=1, lo=0, hi=2, p'=p''=1/4: third branch is (1 - 0 - 1/2)/(1/2) = 1
        params = TernaryParams.uniform([[1.0]], 0.25, 0.25, lo=0.0, hi=2.0)
        seen = {float(encode_ternary([1.0], params, 0, Rng(s))[0]) for s in range(200)}
        assert seen == {0.0, 1.0, 2.0}

    def test_invalid_probabilities(self):
        with pytest.raises(ValueError):
            TernaryParams.uniform([[1.0]], 0.5, 0.5)
        with pytest.raises(ValueError):
            TernaryParams.uniform([[1.0]], -0.1, 0.2)

    def test_unbiased(self):
        X = gen_synthetic("chi_squared", 1, 6, 3).values
        enc = TernaryEncoder(TernaryParams.uniform(X, 0.25, 0.25))
        Y = enc.sample(X, derive_seeds(5, 100_000))[:, 0]
        se = Y.std(axis=0, ddof=1) / np.sqrt(len(Y))
        assert np.all(np.abs(Y.mean(axis=0) - X[0]) <= 4 * se)


class TestDecode:
    def test_single_node(self):
        y = EncodedVector.from_dense([1.0, 2.0], 0.0)
        assert decode_average([y]).tolist() == [1.0, 2.0]

    def test_example(self):
        ys = [EncodedVector.from_dense([0.0, 2.0], 0.0, 0), EncodedVector.from_dense([2.0, 0.0], 0.0, 1)]
        assert decode_average(ys).tolist() == [1.0, 1.0]

    def test_order_invariant(self):
        X = gen_synthetic("gaussian", 5, 4, 0).values
        ys = [EncodedVector.from_dense(x, 0.0, i) for i, x in enumerate(X)]
        assert np.array_equal(decode_average(ys), decode_average(ys[::-1]))

    def test_full_probability_recovers_mean(self):
        X = gen_synthetic("gaussian", 4, 8, 0).values
        ys = [encode_variable(x, 1.0, 0.0, Rng(i), node_id=i) for i, x in enumerate(X)]
        assert np.allclose(decode_average(ys), X.mean(axis=0), rtol=0, atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            decode_average([EncodedVector.from_dense([1.0], 0.0), EncodedVector.from_dense([1.0, 2.0], 0.0)])
        with pytest.raises(ValueError):
            decode_average([])


class TestRotation:
    def test_fwht_matches_matrix(self):
        v = np.arange(8.0)
        assert np.allclose(fwht(v), hadamard(8) @ v)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.integers(1, 70), elements=finite), st.integers(0, 2**64 - 1))
    def test_inverse_and_norm(self, x, seed):
        y = rotate(x, seed)
        scale = max(1.0, float(np.abs(x).max()))
        assert y.shape[0] == 1 << (x.shape[0] - 1).bit_length()
        assert np.max(np.abs(unrotate(y, seed, x.shape[0]) - x)) <= 1e-12 * scale * np.sqrt(y.shape[0])
        assert abs(np.linalg.norm(y) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))

    def test_rotated_identity_pipeline_has_zero_error(self):
        X = gen_synthetic("gaussian", 4, 12, 0).values
        enc = RotatedEncoder(IdentityEncoder(), seed=5, d=12)
        est = enc.postprocess(enc.sample(X, derive_seeds(0, 3)).mean(axis=1))
        assert np.max(np.abs(est - X.mean(axis=0))) <= 1e-12
