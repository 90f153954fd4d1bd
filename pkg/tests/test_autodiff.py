import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtkd import autodiff as ad


def rand(rng, *shape):
    return rng.normal(size=shape)


class TestLogsumexp:
    def test_single_element_identity(self):
        assert ad.logsumexp(None, ad.constant([0.0])).item() == pytest.approx(0.0, abs=1e-15)

    def test_probabilities_summing_to_one(self):
        v = ad.constant([np.log(0.5), np.log(0.5)])
        assert ad.logsumexp(None, v).item() == pytest.approx(0.0, abs=1e-12)

    def test_large_inputs_do_not_overflow(self):
        v = ad.constant([1000.0, 1000.0])
        out = ad.logsumexp(None, v).item()
        assert out == pytest.approx(1000.0 + np.log(2.0), abs=1e-9)

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError, match="empty reduction"):
            ad.logsumexp(None, ad.constant(np.zeros(0)))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(deadline=None, max_examples=60)
    def test_matches_direct_evaluation(self, vals):
        got = ad.logsumexp(None, ad.constant(np.array(vals))).item()
        want = np.log(np.sum(np.exp(np.array(vals) - max(vals)))) + max(vals)
        assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


class TestSoftmax:
    def test_constant_input_uniform(self):
        out = ad.softmax(None, ad.constant([3.3, 3.3, 3.3])).values
        np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-15)

    def test_two_entry_example(self):
        out = ad.softmax(None, ad.constant([0.9, 0.7])).values
        np.testing.assert_allclose(out, [0.549834, 0.450166], atol=1e-4)

    def test_three_entry_example(self):
        out = ad.softmax(None, ad.constant([0.9, 0.8, 0.7])).values
        np.testing.assert_allclose(out, [0.367231, 0.332225, 0.300544], atol=1e-4)

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError):
            ad.softmax(None, ad.constant([np.nan, 1.0]))

    @given(st.lists(st.floats(-200, 200), min_size=1, max_size=16))
    @settings(deadline=None, max_examples=80)
    def test_sums_to_one_and_preserves_argmax(self, vals):
        v = np.array(vals)
        out = ad.softmax(None, ad.constant(v)).values
        assert abs(out.sum() - 1.0) < 1e-12
        assert np.argmax(out) == np.argmax(v)

    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=10), st.floats(-40, 40))
    @settings(deadline=None, max_examples=60)
    def test_shift_invariance(self, vals, shift):
        v = np.array(vals)
        a = ad.softmax(None, ad.constant(v)).values
        b = ad.softmax(None, ad.constant(v + shift)).values
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestBackward:
    def test_square_of_parameter(self):
        p = ad.parameter(np.array([[3.0]]))
        g = ad.Graph()
        loss = ad.mul(g, p, p)
        grads = ad.backward(loss)
        assert grads[p][0, 0] == pytest.approx(6.0)

    def test_constant_loss_gives_no_gradients(self):
        g = ad.Graph()
        loss = ad.mul(g, ad.constant([[2.0]]), ad.constant([[4.0]]))
        assert ad.backward(loss) == {}

    def test_softmax_cross_entropy_grad_is_p_minus_onehot(self):
        rng = np.random.default_rng(0)
        logits = ad.parameter(rand(rng, 1, 5))
        g = ad.Graph()
        probs = ad.softmax(g, logits, axis=1)
        picked = ad.take_per_row(g, probs, [2])
        loss = ad.mul(g, ad.sum_all(g, ad.log(g, picked)), -1.0)
        grads = ad.backward(loss)
        onehot = np.zeros(5)
        onehot[2] = 1.0
        np.testing.assert_allclose(grads[logits][0], probs.values[0] - onehot, atol=1e-12)

    def test_non_scalar_root_rejected(self):
        p = ad.parameter(np.ones((2, 2)))
        g = ad.Graph()
        out = ad.add(g, p, p)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(out)

    def test_nan_loss_names_offending_node(self):
        p = ad.parameter(np.array([[-1.0]]))
        g = ad.Graph()
        loss = ad.sum_all(g, ad.log(g, p))
        with pytest.raises(FloatingPointError, match="log"):
            ad.backward(loss)

    def test_repeated_backward_is_bit_identical(self):
        rng = np.random.default_rng(1)
        a = ad.parameter(rand(rng, 4, 3))
        b = ad.parameter(rand(rng, 3, 4))
        g = ad.Graph()
        prod = ad.matmul(g, a, b)
        loss = ad.sum_all(g, ad.mul(g, ad.tanh(g, prod), ad.sigmoid(g, prod)))
        first = ad.backward(loss)
        second = ad.backward(loss)
        assert first[a].tobytes() == second[a].tobytes()
        assert first[b].tobytes() == second[b].tobytes()

    def test_gradient_accumulates_over_shared_use(self):
        p = ad.parameter(np.array([2.0]))
        g = ad.Graph()
        loss = ad.sum_all(g, ad.add(g, ad.mul(g, p, p), p))  # p^2 + p
        grads = ad.backward(loss)
        assert grads[p][0] == pytest.approx(5.0)

    def test_detached_tensor_contributes_no_gradient(self):
        p = ad.parameter(np.array([2.0]))
        c = ad.constant(np.array([7.0]))
        g = ad.Graph()
        loss = ad.sum_all(g, ad.mul(g, p, c))
        grads = ad.backward(loss)
        assert c not in grads
        assert grads[p][0] == pytest.approx(7.0)


class TestOpGradients:
    """Finite-difference checks for every op in the graph vocabulary."""

    @pytest.mark.parametrize(
        "name",
        [
            "matmul",
            "matmul_t",
            "add",
            "add_broadcast",
            "mul",
            "tanh",
            "sigmoid",
            "log",
            "softmax",
            "logsumexp",
            "concat",
            "gather_rows",
            "take_per_row",
            "sum",
        ],
    )
    def test_op(self, name):
        rng = np.random.default_rng(hash(name) % 2**32)

        if name == "matmul":
            pts = [rand(rng, 3, 4), rand(rng, 4, 2)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.matmul(g, ps[0], ps[1])))

        elif name == "matmul_t":
            pts = [rand(rng, 4, 3), rand(rng, 4, 2)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.matmul(g, ps[0], ps[1], ta=True)))

        elif name == "add":
            pts = [rand(rng, 3, 3), rand(rng, 3, 3)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.add(g, ps[0], ps[1])))

        elif name == "add_broadcast":
            pts = [rand(rng, 3, 4), rand(rng, 4)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.add(g, ps[0], ps[1])))

        elif name == "mul":
            pts = [rand(rng, 2, 5), rand(rng, 2, 5)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.sigmoid(g, ad.mul(g, ps[0], ps[1])))

        elif name == "tanh":
            pts = [rand(rng, 6)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.mul(g, ad.tanh(g, ps[0]), ad.tanh(g, ps[0])))

        elif name == "sigmoid":
            pts = [rand(rng, 6)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.sigmoid(g, ps[0]))

        elif name == "log":
            pts = [np.abs(rand(rng, 5)) + 0.5]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.log(g, ps[0]))

        elif name == "softmax":
            pts = [rand(rng, 3, 4)]

            def fn(ps):
                g = ad.Graph()
                sm = ad.softmax(g, ps[0], axis=1)
                return ad.sum_all(g, ad.mul(g, sm, ad.constant(rand(np.random.default_rng(9), 3, 4))))

        elif name == "logsumexp":
            pts = [rand(rng, 7)]

            def fn(ps):
                g = ad.Graph()
                return ad.logsumexp(g, ps[0])

        elif name == "concat":
            pts = [rand(rng, 2, 3), rand(rng, 2, 2)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.concat(g, ps, axis=1)))

        elif name == "gather_rows":
            pts = [rand(rng, 5, 3)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.gather_rows(g, ps[0], [0, 2, 2, 4])))

        elif name == "take_per_row":
            pts = [rand(rng, 4, 3)]

            def fn(ps):
                g = ad.Graph()
                return ad.sum_all(g, ad.tanh(g, ad.take_per_row(g, ps[0], [0, 2, 1, 1])))

        else:  # sum
            pts = [rand(rng, 3, 3)]

            def fn(ps):
                g = ad.Graph()
                return ad.mul(g, ad.sum_all(g, ps[0]), ad.sum_all(g, ps[0]))

        assert ad.check_gradient(fn, pts) < 1e-4


class TestCheckGradient:
    def test_quadratic_is_nearly_exact(self):
        def fn(ps):
            g = ad.Graph()
            return ad.sum_all(g, ad.mul(g, ps[0], ps[0]))

        err = ad.check_gradient(fn, [np.array([1.0, -2.0, 3.0])])
        assert err < 1e-10

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            ad.check_gradient(lambda ps: ps[0], [np.ones(1)], step=0.0)

    def test_rejects_non_finite_loss(self):
        def fn(ps):
            g = ad.Graph()
            return ad.sum_all(g, ad.log(g, ps[0]))

        with pytest.raises(ValueError, match="finite"):
            ad.check_gradient(fn, [np.array([1e-9])], step=1e-5)
