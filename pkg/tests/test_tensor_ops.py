import sys
import unittest
import warnings
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from grok_lab.errors import NonFiniteError, ShapeError
from grok_lab.tensor import (
    MASK_VALUE,
    Tensor,
    add,
    causal_mask,
    concat,
    cross_entropy,
    default_dtype,
    gather_rows,
    get_default_dtype,
    grad_check,
    l2_normalize,
    layer_norm,
    matmul,
    merge_heads,
    mul,
    no_grad,
    relu,
    rms_norm,
    scale,
    softmax,
    split_heads,
    take_position,
    total,
    transpose,
)

TOL = 1e-4


def leaf(arr) -> Tensor:
    return Tensor(np.array(arr, dtype=np.float64), requires_grad=True, dtype=np.float64)


def const(arr) -> Tensor:
    return Tensor(np.array(arr, dtype=np.float64), dtype=np.float64)


def weighted(out: Tensor, rng: np.random.Generator) -> Tensor:
    # a random readout so no op is checked through a vanishing gradient (e.g. sum of softmax)
    return total(mul(out, const(rng.normal(size=out.shape))))


class TestGradientChecks(unittest.TestCase):
    def setUp(self) -> None:
        self.rng = np.random.default_rng(1234)

    def check(self, op, *arrays):
        inputs = [leaf(a) for a in arrays]
        w = const(self.rng.normal(size=op(*inputs).shape))
        err = grad_check(lambda *ts: total(mul(op(*ts), w)), inputs)
        self.assertLess(err, TOL)

    def test_matmul_variants(self):
        r = self.rng
        self.check(matmul, r.normal(size=(3, 4)), r.normal(size=(4, 5)))
        self.check(matmul, r.normal(size=(2, 3, 4)), r.normal(size=(4, 5)))
        self.check(matmul, r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 3)))
        self.check(matmul, r.normal(size=(2, 2, 3, 4)), r.normal(size=(2, 2, 4, 3)))
        self.check(matmul, r.normal(size=(2, 2, 3, 4)), r.normal(size=(4, 5)))

    def test_split_and_merge_heads(self):
        self.check(lambda x: split_heads(x, 3), self.rng.normal(size=(2, 3, 6)))
        self.check(merge_heads, self.rng.normal(size=(2, 3, 4, 2)))

    def test_add_broadcast(self):
        self.check(add, self.rng.normal(size=(2, 3, 4)), self.rng.normal(size=(4,)))
        self.check(add, self.rng.normal(size=(3, 4)), self.rng.normal(size=(3, 4)))

    def test_mul_scale_transpose(self):
        self.check(mul, self.rng.normal(size=(3, 4)), self.rng.normal(size=(3, 4)))
        self.check(lambda x: scale(x, -2.5), self.rng.normal(size=(3, 4)))
        self.check(transpose, self.rng.normal(size=(2, 3, 4)))

    def test_relu_away_from_kink(self):
        x = self.rng.uniform(0.1, 1.0, size=(4, 5)) * self.rng.choice([-1.0, 1.0], size=(4, 5))
        self.check(relu, x)

    def test_concat_and_take_position(self):
        self.check(lambda a, b: concat([a, b], axis=-1), self.rng.normal(size=(2, 3, 2)), self.rng.normal(size=(2, 3, 4)))
        self.check(lambda x: take_position(x, -1), self.rng.normal(size=(2, 3, 4)))

    def test_gather_rows_accumulates_repeated_rows(self):
        idx = np.array([[0, 2, 2], [1, 0, 2]])
        self.check(lambda t: gather_rows(t, idx), self.rng.normal(size=(4, 3)))

    def test_masked_softmax(self):
        self.check(lambda s: softmax(causal_mask(s), axis=-1), self.rng.normal(size=(2, 3, 3)))
        self.check(lambda s: softmax(s, axis=-1), self.rng.normal(size=(4, 6)))

    def test_l2_normalize(self):
        self.check(lambda x: l2_normalize(x, axis=-1), self.rng.normal(size=(2, 3, 4)))
        self.check(lambda x: l2_normalize(x, axis=0), self.rng.normal(size=(4, 6)))

    def test_norms(self):
        d = 6
        self.check(layer_norm, self.rng.normal(size=(2, 3, d)), self.rng.normal(size=(d,)), self.rng.normal(size=(d,)))
        self.check(rms_norm, self.rng.normal(size=(2, 3, d)), self.rng.normal(size=(d,)))

    def test_cross_entropy(self):
        logits = leaf(self.rng.normal(size=(5, 7)))
        labels = np.array([0, 6, 3, 3, 1])
        self.assertLess(grad_check(lambda x: cross_entropy(x, labels), [logits]), TOL)

    def test_grad_check_rejects_float32(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True, dtype=np.float32)
        with self.assertRaises(ValueError):
            grad_check(lambda t: total(t), [x])


class TestWorkedExamples(unittest.TestCase):
    def test_matmul_values(self):
        eye = const([[1, 0], [0, 1]])
        b = const([[2, 3], [4, 5]])
        np.testing.assert_array_equal(matmul(eye, b).data, [[2, 3], [4, 5]])
        self.assertEqual(matmul(const([[1, 2]]), const([[3], [4]])).data.tolist(), [[11.0]])

    def test_softmax_values(self):
        np.testing.assert_allclose(softmax(const([[0, 0, 0]])).data, [[1 / 3, 1 / 3, 1 / 3]])
        big = softmax(const([[1000, 0, 0]])).data
        np.testing.assert_allclose(big, [[1, 0, 0]], atol=1e-300)

    def test_l2_normalize_values(self):
        np.testing.assert_allclose(l2_normalize(const([[3, 4]])).data, [[0.6, 0.8]])
        unit = const([[0.6, 0.8]])
        np.testing.assert_allclose(l2_normalize(unit).data, unit.data)

    def test_l2_normalize_near_zero_backward_is_finite(self):
        x = leaf([[1e-13, 0.0, 0.0]])
        total(mul(l2_normalize(x), const([[1.0, 2.0, 3.0]]))).backward()
        self.assertTrue(np.isfinite(x.grad).all())

    def test_norm_values(self):
        d = 4
        ones, zeros = const(np.ones(d)), const(np.zeros(d))
        np.testing.assert_allclose(layer_norm(const([[7.0] * d]), ones, zeros).data, 0.0, atol=1e-12)
        unit_rms = const([[1.0, -1.0, 1.0, -1.0]])
        np.testing.assert_allclose(rms_norm(unit_rms, ones).data, unit_rms.data, rtol=1e-5)

    def test_relu_and_cross_entropy_values(self):
        self.assertEqual(relu(const([[-1.0, 2.0]])).data.tolist(), [[0.0, 2.0]])
        ce = cross_entropy(const(np.zeros((3, 114))), np.array([0, 5, 113]))
        self.assertAlmostEqual(float(ce.data), float(np.log(114)), places=12)

    def test_grad_check_on_square_sum(self):
        x = leaf([1.0, 2.0])
        self.assertLess(grad_check(lambda t: total(mul(t, t)), [x]), 1e-7)
        x.zero_grad()
        total(mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])


class TestForwardBehaviour(unittest.TestCase):
    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)))
            x = Tensor(rng.normal(scale=float(rng.uniform(0.1, 50.0)), size=shape), dtype=np.float64)
            s = softmax(x, axis=-1).data
            np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)
            self.assertTrue((s >= 0).all())

    def test_l2_normalize_unit_norm(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            x = Tensor(rng.normal(scale=float(rng.uniform(1e-3, 1e3)), size=(3, 5)), dtype=np.float64)
            norms = np.linalg.norm(l2_normalize(x, axis=-1).data, axis=-1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_l2_normalize_zero_vector_stays_zero(self):
        out = l2_normalize(Tensor(np.zeros((1, 4)), dtype=np.float64)).data
        np.testing.assert_array_equal(out, np.zeros((1, 4)))

    def test_causal_mask_blocks_future(self):
        s = causal_mask(Tensor(np.zeros((1, 3, 3)))).data
        self.assertEqual(s[0, 0, 1], np.float32(MASK_VALUE))
        self.assertEqual(s[0, 2, 1], 0.0)
        w = softmax(causal_mask(Tensor(np.zeros((1, 3, 3)))), axis=-1).data
        self.assertEqual(w[0, 0, 0], 1.0)
        self.assertEqual(w[0, 0, 2], 0.0)

    def test_shape_errors(self):
        with self.assertRaises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with self.assertRaises(ShapeError):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
        with self.assertRaises(ShapeError):
            layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(4)), Tensor(np.zeros(4)))

    def test_index_errors(self):
        with self.assertRaises(IndexError):
            gather_rows(Tensor(np.ones((3, 2))), np.array([3]))
        with self.assertRaises(IndexError):
            cross_entropy(Tensor(np.zeros((2, 4))), np.array([0, 4]))

    def test_non_finite_forward_names_op(self):
        with self.assertRaises(NonFiniteError) as ctx:
            scale(Tensor(np.array([[np.inf]]), dtype=np.float64), 1.0)
        self.assertEqual(ctx.exception.op, "scale")

    def test_split_heads_layout(self):
        x = const(np.arange(2 * 3 * 6).reshape(2, 3, 6))
        heads = split_heads(x, 2)
        self.assertEqual(heads.shape, (2, 2, 3, 3))
        np.testing.assert_array_equal(heads.data[1, 1, 2], x.data[1, 2, 3:])
        np.testing.assert_array_equal(merge_heads(heads).data, x.data)
        with self.assertRaises(ShapeError):
            split_heads(x, 4)

    def test_batched_matmul_rejects_mismatched_batch(self):
        with self.assertRaises(ShapeError):
            matmul(const(np.ones((2, 2, 3, 4))), const(np.ones((2, 3, 4, 3))))

    def test_scalar_outputs_stay_zero_dimensional(self):
        x = leaf([[1.0, 2.0], [3.0, 4.0]])
        out = total(x)
        self.assertEqual(out.shape, ())
        loss = cross_entropy(leaf(np.zeros((2, 3))), np.array([0, 2]))
        self.assertEqual(loss.shape, ())
        with warnings.catch_warnings():
            warnings.simplefilter("error", DeprecationWarning)
            self.assertEqual(out.item(), 10.0)
            self.assertAlmostEqual(float(loss.data), float(np.log(3.0)))
        out.backward()
        np.testing.assert_array_equal(x.grad, np.ones((2, 2)))

    def test_non_finite_leaf_gradient_is_reported(self):
        # forward stays finite (1e-300 * 1e300 * 1e300), d/dx = 1e600 overflows
        x = leaf([[1e-300]])
        out = total(mul(mul(x, const([[1e300]])), const([[1e300]])))
        with self.assertRaises(NonFiniteError) as ctx:
            out.backward()
        self.assertEqual(ctx.exception.op, "mul backward")

    def test_backward_needs_scalar(self):
        x = leaf(np.ones((2, 2)))
        with self.assertRaises(ShapeError):
            scale(x, 2.0).backward()

    def test_shared_input_gradients_accumulate(self):
        x = leaf([[1.0, 2.0], [3.0, 4.0]])
        total(add(mul(x, x), x)).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_no_grad_records_nothing(self):
        x = leaf(np.ones((2, 2)))
        with no_grad():
            y = scale(x, 3.0)
        self.assertFalse(y.requires_grad)
        self.assertIsNone(y._op)

    def test_default_dtype_context(self):
        self.assertEqual(get_default_dtype(), np.float32)
        with default_dtype("float64"):
            self.assertEqual(Tensor([1.0]).dtype, np.float64)
        self.assertEqual(Tensor([1.0]).dtype, np.float32)
        with self.assertRaises(ValueError):
            with default_dtype("float16"):
                pass


if __name__ == "__main__":
    unittest.main()
