import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kpid.kernels import (
    KernelSpec,
    control_embedding,
    eval_scalar,
    eval_vv_inner,
    gram_domain,
    gram_range,
    interaction,
)
from oracles import (
    gram_domain_loop,
    gram_range_loop,
    interaction_loop,
    kernel_fn,
)

E_INV = math.exp(-1.0)


def point_at_sqdist(x, sqdist):
    y = np.array(x, dtype=float)
    y[0] += math.sqrt(sqdist)
    return y


class TestKernelSpec:
    @pytest.mark.parametrize("width", [0.0, -1.0, float("nan")])
    def test_rejects_nonpositive_width(self, width):
        with pytest.raises(ValueError):
            KernelSpec.gaussian(width)

    def test_kind_from_string(self):
        assert KernelSpec("expdot", 2.0).kind.value == "expdot"


class TestEvalScalar:
    def test_gaussian_self_is_one(self, gauss):
        assert eval_scalar(gauss, [1, 2, 3], [1, 2, 3]) == 1.0

    def test_gaussian_at_width_distance(self, gauss):
        y = point_at_sqdist([0.0, 0.0], 20.0)
        assert eval_scalar(gauss, [0, 0], y) == pytest.approx(0.36787944, abs=1e-8)

    def test_expdot_zero_vector(self):
        k = KernelSpec.expdot(2.0)
        assert eval_scalar(k, [0, 0, 0], [0.3, -4.0, 7.0]) == 1.0

    def test_dimension_mismatch_names_lengths(self, gauss):
        with pytest.raises(ValueError, match="length 2.*length 3"):
            eval_scalar(gauss, [0, 0], [0, 0, 0])

    @given(arrays(float, 4, elements=st.floats(-5, 5)),
           arrays(float, 4, elements=st.floats(-5, 5)),
           st.sampled_from(["gaussian", "expdot"]))
    def test_symmetric(self, x, y, kind):
        k = KernelSpec(kind, 7.0)
        assert eval_scalar(k, x, y) == eval_scalar(k, y, x)


class TestVVInner:
    def test_same_point_unit_control(self, gauss):
        assert eval_vv_inner(gauss, [1, 1], [1, 0], [1, 1], [1, 0]) == 1.0

    def test_orthogonal_embeddings(self, gauss):
        assert eval_vv_inner(gauss, [1, 1], [1, 2], [1, 1], [1, -0.5]) == 0.0

    def test_hand_evaluated_closed_form(self, gauss):
        xj = point_at_sqdist([0.0, 0.0], 20.0)
        value = eval_vv_inner(gauss, [0, 0], [1, 1], xj, [1, 3])
        assert value == pytest.approx(1.4715177646857693, rel=1e-14)

    def test_embedding_length_mismatch(self, gauss):
        with pytest.raises(ValueError):
            eval_vv_inner(gauss, [0], [1, 2], [0], [1, 2, 3])


def test_control_embedding_prepends_one():
    assert control_embedding(2.5).tolist() == [1.0, 2.5]
    stacked = control_embedding(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert stacked[:, 0].tolist() == [1.0, 1.0]


class TestGramDomain:
    def test_single_point(self, gauss):
        assert gram_domain(gauss, [[0.3, 0.1]], 0.0).tolist() == [[1.0]]

    def test_two_points(self, gauss):
        x2 = point_at_sqdist([0.0, 0.0], 20.0)
        G = gram_domain(gauss, [[0.0, 0.0], x2], 0.0)
        np.testing.assert_allclose(G, [[1, E_INV], [E_INV, 1]], rtol=1e-15)

    @pytest.mark.parametrize("kind", ["gaussian", "expdot"])
    def test_matches_double_loop(self, rng, kind):
        X = rng.normal(size=(3, 4))
        k = KernelSpec(kind, 20.0)
        G = gram_domain(k, X, 1e-6)
        ref = gram_domain_loop(kernel_fn(kind, 20.0), X, 1e-6)
        np.testing.assert_allclose(G, ref, rtol=1e-15, atol=0)

    def test_negative_eps(self, gauss):
        with pytest.raises(ValueError):
            gram_domain(gauss, [[0.0]], -1.0)


class TestGramRange:
    def test_single_zero_control(self, gauss):
        assert gram_range(gauss, [[1.0]], [[1.0, 0.0]], 0.0).tolist() == [[1.0]]

    def test_single_nonzero_control(self, gauss):
        assert gram_range(gauss, [[1.0]], [[1.0, 2.0]], 0.0).tolist() == [[5.0]]

    def test_matches_double_loop(self, rng, gauss):
        X = rng.normal(size=(2, 3))
        Ubar = control_embedding(rng.normal(size=(2, 2)))
        G = gram_range(gauss, X, Ubar, 0.0)
        ref = gram_range_loop(kernel_fn("gaussian", 20.0), X, Ubar)
        np.testing.assert_allclose(G, ref, rtol=1e-15, atol=0)


class TestInteraction:
    def test_fixed_points_equal_gram(self, rng, gauss):
        X = rng.normal(size=(5, 2))
        np.testing.assert_array_equal(interaction(gauss, X, X), gram_domain(gauss, X, 0.0))

    def test_single_pair(self, gauss):
        y = point_at_sqdist([0.0, 0.0], 20.0)
        np.testing.assert_allclose(interaction(gauss, [[0.0, 0.0]], [y]), [[E_INV]],
                                   rtol=1e-15)

    def test_index_convention(self, rng, gauss):
        X = rng.normal(size=(2, 3))
        Y = rng.normal(size=(2, 3))
        ref = interaction_loop(kernel_fn("gaussian", 20.0), X, Y)
        np.testing.assert_allclose(interaction(gauss, X, Y), ref, rtol=1e-15, atol=0)
        assert interaction(gauss, X, Y)[0, 1] == pytest.approx(
            eval_scalar(gauss, X[0], Y[1]), rel=1e-15)

    def test_shape_mismatch(self, gauss):
        with pytest.raises(ValueError):
            interaction(gauss, np.zeros((2, 2)), np.zeros((3, 2)))


@settings(max_examples=40, deadline=None)
@given(M=st.integers(1, 50), d=st.integers(1, 5), seed=st.integers(0, 2**32 - 1),
       eps=st.sampled_from([0.0, 1e-6, 1e-3]))
def test_gram_symmetric_psd_unit_diagonal(M, d, seed, eps):
    X = np.random.default_rng(seed).uniform(-3, 3, (M, d))
    k = KernelSpec.gaussian(20.0)
    G = gram_domain(k, X, eps)
    assert np.max(np.abs(G - G.T)) == 0.0
    assert np.all(np.diag(G) == 1.0 + eps)
    assert np.linalg.eigvalsh(G).min() >= eps - 1e-10

    Ubar = control_embedding(np.random.default_rng(seed + 1).uniform(-2, 2, (M, 1)))
    Gb = gram_range(k, X, Ubar, eps)
    assert np.max(np.abs(Gb - Gb.T)) == 0.0
