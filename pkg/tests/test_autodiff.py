import numpy as np
import pytest

import winomask.numcore as nc
from winomask.numcore.tensor import Tensor, _accumulate


def param(data):
    return nc.parameter(data, dtype=np.float64)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        w = param(np.arange(4.0).reshape(2, 2))
        nc.sum_all(w).backward()
        np.testing.assert_array_equal(w.grad, np.ones((2, 2)))

    def test_softmax_sum_conservation(self):
        # rows always sum to 1, so the gradient vanishes; float summation
        # leaves a residue at machine epsilon, nothing above it
        x = param(np.random.default_rng(0).normal(size=(3, 5)))
        nc.sum_all(nc.softmax_rows(x)).backward()
        assert np.abs(x.grad).max() < 1e-15

    def test_non_scalar_loss_rejected(self):
        x = param(np.ones((2, 2)))
        with pytest.raises(nc.ShapeError, match="scalar"):
            nc.matmul(x, x).backward()

    def test_unreached_parameter_gets_zero_gradient(self):
        used = param(np.ones((2, 2)))
        unused = param(np.ones(3))
        grads = nc.backward(nc.sum_all(used), {"used": used, "unused": unused})
        np.testing.assert_array_equal(grads["used"], np.ones((2, 2)))
        np.testing.assert_array_equal(grads["unused"], np.zeros(3))

    def test_shared_subexpression_accumulates(self):
        x = param(np.full((2, 2), 3.0))
        nc.sum_all(nc.add(x, x)).backward()
        np.testing.assert_array_equal(x.grad, np.full((2, 2), 2.0))

    def test_diamond_graph(self):
        # y = sum(x*x + x): dy/dx = 2x + 1, with x reused on both branches
        x = param(np.array([[1.0, -2.0]]))
        nc.sum_all(nc.add(nc.mul(x, x), x)).backward()
        np.testing.assert_allclose(x.grad, [[3.0, -3.0]])

    def test_clear_grads(self):
        x = param(np.ones((2, 2)))
        nc.sum_all(x).backward()
        nc.clear_grads([x])
        assert x.grad is None


class TestGradcheck:
    def test_square_function(self):
        x = param(np.array(3.0))

        def f(ts):
            return nc.mul(ts[0], ts[0])

        result = nc.gradcheck(f, [x], tol=1e-4)
        assert result.passed
        assert result.max_rel_err < 1e-6

    def test_wrong_gradient_fails(self):
        # an op whose backward is off by 2x must be caught
        x = param(np.array([2.0]))

        def doubled_square(ts):
            v = ts[0]
            out = Tensor(np.asarray((v.data * v.data).sum()), requires_grad=True,
                         _parents=(v,), _backward=lambda g: _accumulate(v, 4.0 * v.data * g))
            return out

        result = nc.gradcheck(doubled_square, [x], tol=1e-4)
        assert not result.passed

    def test_requires_float64(self):
        x = nc.parameter(np.ones(2), dtype=np.float32)
        with pytest.raises(ValueError, match="float64"):
            nc.gradcheck(lambda ts: nc.sum_all(ts[0]), [x])

    def test_linear_layer(self):
        rng = np.random.default_rng(1)
        x = param(rng.normal(size=(3, 4)))
        w = param(rng.normal(size=(4, 2)))
        b = param(rng.normal(size=2))
        probe = nc.tensor(rng.normal(size=(3, 2)), dtype=np.float64)

        def f(ts):
            return nc.sum_all(nc.mul(nc.add(nc.matmul(ts[0], ts[1]), ts[2]), probe))

        assert nc.gradcheck(f, [x, w, b], tol=1e-4).passed

    def test_layer_norm(self):
        rng = np.random.default_rng(2)
        x = param(rng.normal(size=(3, 5)))
        gain = param(rng.normal(size=5))
        bias = param(rng.normal(size=5))
        probe = nc.tensor(rng.normal(size=(3, 5)), dtype=np.float64)

        def f(ts):
            return nc.sum_all(nc.mul(nc.layer_norm(ts[0], ts[1], ts[2]), probe))

        assert nc.gradcheck(f, [x, gain, bias], tol=1e-4).passed

    def test_two_layer_network(self):
        rng = np.random.default_rng(3)
        x = param(rng.normal(size=(2, 4)))
        w1 = param(rng.normal(size=(4, 6)))
        b1 = param(rng.normal(size=6))
        w2 = param(rng.normal(size=(6, 3)))
        b2 = param(rng.normal(size=3))

        def f(ts):
            h = nc.gelu(nc.add(nc.matmul(ts[0], ts[1]), ts[2]))
            logits = nc.add(nc.matmul(h, ts[3]), ts[4])
            return nc.cross_entropy_logits(logits, [0, 2])

        result = nc.gradcheck(f, [x, w1, b1, w2, b2], tol=1e-4)
        assert result.passed, f"max rel err {result.max_rel_err}"

    def test_embedding_and_take_row(self):
        rng = np.random.default_rng(4)
        table = param(rng.normal(size=(6, 3)))
        probe = nc.tensor(rng.normal(size=(1, 3)), dtype=np.float64)

        def f(ts):
            rows = nc.embedding(ts[0], [1, 3, 1])  # repeated id exercises scatter-add
            return nc.sum_all(nc.mul(nc.take_row(rows, 2), probe))

        assert nc.gradcheck(f, [table], tol=1e-4).passed

    def test_masked_attention_head(self):
        # the full single-head path: projections, scaled scores, additive
        # mask, probability-weighted values
        rng = np.random.default_rng(5)
        n, d, dk = 4, 6, 3
        h = param(rng.normal(size=(n, d)))
        wq = param(rng.normal(size=(d, dk)))
        wk = param(rng.normal(size=(d, dk)))
        wv = param(rng.normal(size=(d, dk)))
        mask = np.array([[1, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]], dtype=np.uint8)
        probe = nc.tensor(rng.normal(size=(n, dk)), dtype=np.float64)

        def f(ts):
            q, k, v = (nc.matmul(ts[0], ts[i]) for i in (1, 2, 3))
            scores = nc.scale(nc.matmul(q, nc.transpose(k)), 1.0 / np.sqrt(dk))
            probs = nc.masked_softmax(scores, mask, "additive")
            return nc.sum_all(nc.mul(nc.matmul(probs, v), probe))

        result = nc.gradcheck(f, [h, wq, wk, wv], tol=1e-4)
        assert result.passed, f"max rel err {result.max_rel_err}"

    def test_cross_entropy_matches_manual_nll(self):
        logits = param(np.array([[0.0, 0.0]]))
        loss = nc.cross_entropy_logits(logits, [1])
        assert abs(float(loss.data) - np.log(2.0)) < 1e-12
