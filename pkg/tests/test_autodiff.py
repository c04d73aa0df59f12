import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from side import autodiff as ad
from side.autodiff import GradTape, Matrix, backward, finite_diff_check
from side.errors import DegenerateError, DeterminismError, ShapeError, TapeError

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def rows_of(n_rows, n_cols, elements=finite):
    return arrays(np.float64, (n_rows, n_cols), elements=elements)


class TestMatmul:
    def test_identity(self):
        a = np.array([[1.5, -2.0], [0.25, 4.0]])
        np.testing.assert_array_equal(ad.matmul(np.eye(2), a).value, a)

    def test_row_times_column(self):
        out = ad.matmul([[1.0, 2.0]], [[3.0], [4.0]])
        np.testing.assert_array_equal(out.value, [[11.0]])

    def test_shape_error_names_both_operands(self):
        with pytest.raises(ShapeError, match=r"2x3.*2x3"):
            ad.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_gradient_of_sum(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
        tape = GradTape()
        grads = backward(ad.sum_all(tape.watch(a, "a") @ Matrix(b)), tape)
        np.testing.assert_allclose(grads["a"], np.ones((5, 3)) @ b.T, rtol=1e-12)
        err = finite_diff_check(lambda p: ad.sum_all(p["a"] @ p["b"]), {"a": a, "b": b})
        assert err <= 1e-6

    def test_records_both_parents(self):
        tape = GradTape()
        a, b = tape.watch(np.ones((1, 2)), "a"), tape.watch(np.ones((2, 1)), "b")
        out = a @ b
        assert set(tape.nodes[out.node][0]) == {a.node, b.node}


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax_rows([[0.0, 0.0]]).value, [[0.5, 0.5]])

    def test_ratio(self):
        out = ad.softmax_rows([[math.log(1), math.log(3)]]).value
        np.testing.assert_allclose(out, [[0.25, 0.75]], rtol=1e-15)

    def test_large_inputs_stay_finite(self):
        out = ad.softmax_rows([[1000.0, 0.0, -1000.0]]).value
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out[0, 0], 1.0)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 5))
        err = finite_diff_check(lambda p: ad.sum_all(ad.softmax_rows(p["x"]) * w), {"x": x})
        assert err <= 1e-6

    @given(rows_of(4, 5))
    def test_rows_sum_to_one(self, x):
        s = ad.softmax_rows(x).value
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)

    @given(rows_of(3, 4), st.floats(-100, 100))
    def test_shift_invariance(self, x, c):
        np.testing.assert_allclose(ad.softmax_rows(x + c).value, ad.softmax_rows(x).value, atol=1e-12)

    def test_log_softmax_consistent(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 3)) * 10
        np.testing.assert_allclose(np.exp(ad.log_softmax_rows(x).value), ad.softmax_rows(x).value, rtol=1e-12)
        w = rng.normal(size=(4, 3))
        assert finite_diff_check(lambda p: ad.sum_all(ad.log_softmax_rows(p["x"]) * w), {"x": x}) <= 1e-6


class TestNormalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(ad.l2_normalize_rows([[3.0, 4.0]]).value, [[0.6, 0.8]], rtol=1e-15)

    def test_unit_vector_fixed(self):
        v = np.array([[0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(ad.l2_normalize_rows(v).value, v)

    def test_degenerate_row_reports_index(self):
        with pytest.raises(DegenerateError) as info:
            ad.l2_normalize_rows([[1.0, 0.0], [0.0, 0.0], [2.0, 2.0]])
        assert info.value.index == 1

    def test_gradient(self):
        rng = np.random.default_rng(3)
        x, w = rng.normal(size=(4, 8)), rng.normal(size=(4, 8))
        assert finite_diff_check(lambda p: ad.sum_all(ad.l2_normalize_rows(p["x"]) * w), {"x": x}) <= 1e-6

    @given(rows_of(3, 4, st.floats(0.1, 10)))
    def test_unit_norm_and_idempotent(self, x):
        once = ad.l2_normalize_rows(x).value
        np.testing.assert_allclose(np.linalg.norm(once, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(ad.l2_normalize_rows(once).value, once, atol=1e-12)


class TestCosineDistance:
    def test_known_values(self):
        v = np.array([0.3, -1.2, 2.0])
        assert ad.cosine_distance(v, v) == pytest.approx(0.0, abs=1e-15)
        assert ad.cosine_distance([1, 0], [0, 1]) == 1.0
        assert ad.cosine_distance([1, 0], [-1, 0]) == 2.0

    def test_zero_vector(self):
        with pytest.raises(DegenerateError):
            ad.cosine_distance([0.0, 0.0], [1.0, 0.0])

    @given(
        arrays(np.float64, 5, elements=st.floats(0.5, 5)),
        arrays(np.float64, 5, elements=st.floats(-5, 5)),
        st.floats(0.01, 100),
        st.floats(0.01, 100),
    )
    def test_symmetric_and_scale_invariant(self, u, v, a, b):
        if np.linalg.norm(v) < 1e-3:
            return
        d = ad.cosine_distance(u, v)
        assert 0.0 <= d <= 2.0 + 1e-15
        assert ad.cosine_distance(v, u) == pytest.approx(d, abs=1e-12)
        assert ad.cosine_distance(a * u, b * v) == pytest.approx(d, abs=1e-12)

    def test_matrix_form_agrees_with_scalar(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(6, 3)), rng.normal(size=(4, 3))
        dm = ad.cosine_distance_matrix(a, b)
        for i in range(6):
            for j in range(4):
                assert dm[i, j] == pytest.approx(ad.cosine_distance(a[i], b[j]), abs=1e-14)


class TestBackward:
    def test_sum_gives_ones(self):
        tape = GradTape()
        w = tape.watch(np.arange(6.0).reshape(2, 3), "W")
        np.testing.assert_array_equal(backward(ad.sum_all(w), tape)["W"], np.ones((2, 3)))

    def test_half_squared_norm_gives_w(self):
        w0 = np.array([[1.0, -2.0], [0.5, 3.0]])
        tape = GradTape()
        w = tape.watch(w0, "W")
        np.testing.assert_allclose(backward(ad.sum_all(w * w) * 0.5, tape)["W"], w0)

    def test_unreachable_leaf_gets_zeros(self):
        tape = GradTape()
        w = tape.watch(np.ones((2, 2)), "w")
        tape.watch(np.ones((3, 1)), "unused")
        grads = backward(ad.sum_all(w), tape)
        np.testing.assert_array_equal(grads["unused"], np.zeros((3, 1)))

    def test_fan_out_accumulates(self):
        tape = GradTape()
        w = tape.watch([[2.0]], "w")
        grads = backward(w * w + w * 3.0, tape)
        assert grads["w"][0, 0] == 7.0

    def test_non_scalar_rejected(self):
        tape = GradTape()
        w = tape.watch(np.ones((2, 2)), "w")
        with pytest.raises(TapeError, match="1x1"):
            backward(w, tape)

    def test_second_call_rejected(self):
        tape = GradTape()
        loss = ad.sum_all(tape.watch(np.ones((2, 2)), "w"))
        backward(loss, tape)
        with pytest.raises(TapeError, match="already"):
            backward(loss, tape)

    def test_mixing_tapes_rejected(self):
        a = GradTape().watch(np.ones((1, 1)), "a")
        b = GradTape().watch(np.ones((1, 1)), "b")
        with pytest.raises(TapeError):
            a + b

    def test_broadcast_bias_gradient(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 3))
        err = finite_diff_check(
            lambda p: ad.sum_all(ad.relu(p["x"] @ p["w"] + p["b"]) * 1.5),
            {"x": x, "w": rng.normal(size=(3, 2)), "b": rng.normal(size=(1, 2))},
        )
        assert err <= 1e-6

    def test_abs_transpose_sub_gradients(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(3, 3)) + 0.1
        err = finite_diff_check(lambda p: ad.sum_all(ad.absolute(p["x"].T - np.eye(3))), {"x": x})
        assert err <= 1e-6


class TestFiniteDiffCheck:
    def test_square(self):
        err = finite_diff_check(lambda p: p["t"] * p["t"], {"t": [[3.0]]})
        assert err * 6 <= 1e-8

    def test_constant(self):
        assert finite_diff_check(lambda p: Matrix(4.0), {"t": [[1.0, 2.0]]}) == 0.0

    def test_nondeterminism_detected(self):
        rng = np.random.default_rng()

        def noisy(p):
            return ad.sum_all(p["t"]) + float(rng.normal())

        with pytest.raises(DeterminismError):
            finite_diff_check(noisy, {"t": [[1.0]]})
