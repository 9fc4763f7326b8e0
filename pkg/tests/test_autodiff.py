import numpy as np
import pytest

from rivercast import autodiff as ad
from rivercast.autodiff import Tensor


def fd_gradients(build_loss, tensors, h=1e-6):
    """Central finite differences of build_loss w.r.t. every tensor element."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = build_loss().item()
            flat[i] = orig - h
            lm = build_loss().item()
            flat[i] = orig
            gf[i] = (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def check_op(build_loss, tensors, tol=2e-6):
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    ad.backward(loss)
    numeric = fd_gradients(build_loss, tensors)
    for t, num in zip(tensors, numeric):
        got = t.grad if t.grad is not None else np.zeros_like(t.data)
        assert np.allclose(got, num, atol=tol, rtol=tol), f"{t.name}: {got} vs {num}"


def params(rng, *shapes):
    return [ad.parameter(rng.standard_normal(s), f"p{i}") for i, s in enumerate(shapes)]


RNG = np.random.default_rng(7)


def test_add_sub_mul_backward():
    a, b = params(RNG, (5,), (5,))
    check_op(lambda: ad.dot(ad.add(a, b), ad.mul(a, b)), [a, b])
    check_op(lambda: ad.dot(ad.sub(a, b), ad.sub(a, b)), [a, b])


def test_add_n_backward_and_value():
    ts = params(RNG, (4,), (4,), (4,))
    out = ad.add_n(ts)
    assert np.allclose(out.data, sum(t.data for t in ts))
    check_op(lambda: ad.dot(ad.add_n(ts), ts[0]), ts)


def test_const_ops_backward():
    (a,) = params(RNG, (6,))
    check_op(lambda: ad.dot(ad.add_const(a, 3.0), ad.mul_const(a, -0.5)), [a])


def test_scale_vec_backward():
    s = ad.parameter(0.3, "s")
    v = ad.parameter(RNG.standard_normal(5), "v")
    check_op(lambda: ad.dot(ad.scale_vec(s, v), ad.scale_vec(s, v)), [s, v])


def test_matvec_and_linear_backward():
    w = ad.parameter(RNG.standard_normal((4, 6)), "w")
    x = ad.parameter(RNG.standard_normal(6), "x")
    b = ad.parameter(RNG.standard_normal(4), "b")
    check_op(lambda: ad.dot(ad.matvec(w, x), ad.matvec(w, x)), [w, x])
    check_op(lambda: ad.dot(ad.linear(x, w, b), ad.linear(x, w, b)), [w, x, b])


def test_linear_gradient_analytic():
    # loss = sum(W @ x) with x fixed -> dL/dW = outer(ones, x)
    w = ad.parameter(RNG.standard_normal((3, 4)), "w")
    x = Tensor(RNG.standard_normal(4))
    ones = Tensor(np.ones(3))
    loss = ad.dot(ad.matvec(w, x), ones)
    ad.backward(loss)
    assert np.allclose(w.grad, np.outer(np.ones(3), x.data), atol=1e-12)


def test_concat_slice_select_backward():
    a, b = params(RNG, (3,), (4,))
    check_op(lambda: ad.dot(ad.slice_vec(ad.concat([a, b]), 1, 6), Tensor(np.ones(5))), [a, b])
    m = ad.parameter(RNG.standard_normal((3, 4, 4)), "m")
    check_op(lambda: ad.mul(ad.select(m, (1, 2, 3)), ad.select(m, (1, 2, 3))), [m])


def test_stack_rows_backward():
    rows = params(RNG, (4,), (4,), (4,))
    q = Tensor(RNG.standard_normal(4))
    check_op(lambda: ad.dot(ad.attend(q, ad.stack_rows(rows)), q), rows)


def test_nonlinearities_backward():
    (a,) = params(RNG, (6,))
    check_op(lambda: ad.dot(ad.tanh(a), ad.tanh(a)), [a])
    check_op(lambda: ad.dot(ad.sigmoid(a), ad.sigmoid(a)), [a])
    check_op(lambda: ad.dot(ad.softmax(a), a), [a])


def test_relu_values_and_subgradient_at_kink():
    t = ad.parameter(np.array([-1.0, 0.0, 2.0]), "t")
    out = ad.relu(t)
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])
    loss = ad.dot(out, Tensor(np.ones(3)))
    ad.backward(loss)
    assert np.array_equal(t.grad, [0.0, 0.0, 1.0])  # exactly 0 at the kink


def test_relu_backward_away_from_kink():
    (a,) = params(RNG, (6,))
    check_op(lambda: ad.dot(ad.relu(a), a), [a])


def test_softmax_properties():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = Tensor(rng.normal(0, 5, size=rng.integers(1, 9)))
        p = ad.softmax(v).data
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(p > 0.0) and np.all(p < 1.0 + 1e-15)


def test_attend_backward():
    q = ad.parameter(RNG.standard_normal(4), "q")
    keys = ad.parameter(RNG.standard_normal((5, 4)), "k")
    check_op(lambda: ad.dot(ad.attend(q, keys), q), [q, keys])


def test_shared_node_accumulates():
    x = ad.parameter(np.array([2.0]), "x")
    y = ad.add(x, x)
    ad.backward(ad.dot(y, Tensor(np.ones(1))))
    assert np.array_equal(x.grad, [2.0])


def test_backward_rejects_non_scalar():
    x = ad.parameter(np.ones(3), "x")
    with pytest.raises(ValueError):
        ad.backward(ad.add(x, x))


def test_shape_mismatches_rejected():
    a = Tensor(np.ones(3))
    b = Tensor(np.ones(4))
    for op in (ad.add, ad.sub, ad.mul, ad.dot):
        with pytest.raises(ValueError):
            op(a, b)
    with pytest.raises(ValueError):
        ad.matvec(Tensor(np.ones((2, 3))), b)
    with pytest.raises(ValueError):
        ad.attend(a, Tensor(np.ones((2, 4))))


def test_no_grad_builds_no_graph():
    x = ad.parameter(np.ones(3), "x")
    with ad.no_grad():
        y = ad.mul(x, x)
    assert y._parents == () and not y.requires_grad
    assert ad.is_grad_enabled()


def test_operations_deterministic():
    rng = np.random.default_rng(5)
    w = rng.standard_normal((8, 8))
    x = rng.standard_normal(8)

    def run():
        wt = ad.parameter(w.copy(), "w")
        xt = Tensor(x.copy())
        out = ad.tanh(ad.matvec(wt, xt))
        loss = ad.dot(out, out)
        ad.backward(loss)
        return loss.item(), out.data.copy(), wt.grad.copy()

    l1, o1, g1 = run()
    l2, o2, g2 = run()
    assert l1 == l2
    assert np.array_equal(o1, o2)
    assert np.array_equal(g1, g2)
