import math

import numpy as np
import pytest

from uniwrite import autodiff as ad
from uniwrite.errors import ContractError, DimensionError, NumericError, StateError


def test_tanh_of_zero_vector_is_zero():
    x = ad.leaf(np.zeros((1, 5)))
    y = ad.tanh(x)
    assert np.array_equal(y.data, np.zeros((1, 5)))


def test_softmax_of_zeros_is_uniform():
    x = ad.leaf(np.zeros((1, 4)))
    y = ad.softmax_rows(x)
    assert np.allclose(y.data, 0.25, atol=1e-15)


def test_scalar_tanh_chain():
    # h = tanh(1*x + 1*0) at x = 0.5
    x = ad.leaf(0.5)
    w = ad.leaf(1.0)
    h = ad.tanh(ad.add(ad.mul(w, x), ad.leaf(0.0)))
    assert h.data[0, 0] == pytest.approx(0.46211716, abs=1e-8)
    assert h.data[0, 0] == pytest.approx(math.tanh(0.5), abs=1e-12)


def test_square_gradient():
    x = ad.leaf(3.0)
    y = ad.mul(x, x)
    ad.backward(y)
    assert x.grad[0, 0] == pytest.approx(6.0, abs=1e-12)


def test_softmax_sum_has_zero_gradient():
    rng = np.random.default_rng(0)
    x = ad.leaf(rng.normal(size=(1, 6)))
    y = ad.sum_all(ad.softmax_rows(x))
    ad.backward(y)
    assert np.allclose(x.grad, 0.0, atol=1e-12)


def test_two_path_accumulation():
    # y = x*a + x*b uses x twice; gradient must be a + b exactly.
    x = ad.leaf(1.5)
    a = ad.leaf(2.0)
    b = ad.leaf(-3.0)
    y = ad.add(ad.mul(x, a), ad.mul(x, b))
    ad.backward(y)
    assert x.grad[0, 0] == -1.0


def test_adjoint_unallocated_before_backward():
    x = ad.leaf(np.ones((2, 3)))
    y = ad.tanh(x)
    assert x.grad is None and y.grad is None
    assert np.array_equal(ad.grad_of(x), np.zeros((2, 3)))


def test_random_five_node_graph_vs_finite_differences():
    rng = np.random.default_rng(7)
    point = {"a": rng.uniform(-1, 1, (2, 3)), "b": rng.uniform(-1, 1, (3, 2))}

    def fn(leaves):
        m = ad.matmul(leaves["a"], leaves["b"])
        t = ad.tanh(m)
        s = ad.sigmoid(m)
        return ad.mean_all(ad.mul(t, s))

    assert ad.grad_check(fn, point, step=1e-5) < 1e-6


@pytest.mark.parametrize(
    "name",
    [
        "add", "sub", "mul", "mul_colbcast", "scale", "matmul", "tanh", "sigmoid",
        "softplus", "softmax", "concat", "slice", "sum", "mean", "squared_error",
        "softmax_xent", "cosine",
    ],
)
def test_primitive_gradients_match_finite_differences(name):
    rng = np.random.default_rng(hash(name) % 2**32)
    a = rng.uniform(-1, 1, (3, 4))
    b = rng.uniform(-1, 1, (3, 4))

    builders = {
        "add": (lambda v: ad.mean_all(ad.add(v["a"], v["b"])), {"a": a, "b": b}),
        "sub": (lambda v: ad.mean_all(ad.sub(v["a"], v["b"])), {"a": a, "b": b}),
        "mul": (lambda v: ad.mean_all(ad.mul(v["a"], v["b"])), {"a": a, "b": b}),
        "mul_colbcast": (
            lambda v: ad.mean_all(ad.mul(v["a"], v["c"])),
            {"a": a, "c": rng.uniform(-1, 1, (3, 1))},
        ),
        "scale": (lambda v: ad.mean_all(ad.scale(v["a"], -2.5)), {"a": a}),
        "matmul": (
            lambda v: ad.mean_all(ad.matmul(v["a"], v["m"])),
            {"a": a, "m": rng.uniform(-1, 1, (4, 2))},
        ),
        "tanh": (lambda v: ad.mean_all(ad.tanh(v["a"])), {"a": a}),
        "sigmoid": (lambda v: ad.mean_all(ad.sigmoid(v["a"])), {"a": a}),
        "softplus": (lambda v: ad.mean_all(ad.softplus(v["a"])), {"a": a}),
        "softmax": (
            lambda v: ad.mean_all(ad.mul(ad.softmax_rows(v["a"]), v["b"])),
            {"a": a, "b": b},
        ),
        "concat": (
            lambda v: ad.mean_all(ad.tanh(ad.concat_cols(v["a"], v["b"]))),
            {"a": a, "b": b},
        ),
        "slice": (
            lambda v: ad.mean_all(ad.tanh(ad.slice_cols(v["a"], 1, 3))),
            {"a": a},
        ),
        "sum": (lambda v: ad.sum_all(ad.tanh(v["a"])), {"a": a}),
        "mean": (lambda v: ad.mean_all(ad.tanh(v["a"])), {"a": a}),
        "squared_error": (
            lambda v: ad.squared_error(v["a"], v["b"]),
            {"a": a, "b": b},
        ),
        "softmax_xent": (
            lambda v: ad.softmax_xent(v["a"], ad.leaf(np.eye(4)[[0, 2, 1]])),
            {"a": a},
        ),
        "cosine": (
            lambda v: ad.mean_all(ad.cosine_rows(v["a"], v["b"])),
            {"a": a, "b": b},
        ),
    }
    fn, point = builders[name]
    assert ad.grad_check(fn, point, step=1e-5) < 1e-6


def test_grad_check_is_exact_for_linear_function():
    rng = np.random.default_rng(3)

    def fn(v):
        return ad.sum_all(ad.mul(v["x"], ad.leaf(np.full((1, 4), 1.75))))

    err = ad.grad_check(fn, {"x": rng.uniform(-1, 1, (1, 4))}, step=1e-5)
    assert err < 1e-10


def test_softmax_rows_are_a_simplex():
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = ad.leaf(rng.uniform(-10, 10, (4, 7)))
        y = ad.softmax_rows(x).data
        assert np.allclose(y.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(y > 0.0) and np.all(y < 1.0)


def test_softmax_xent_is_stable_for_huge_logits():
    logits = ad.leaf(np.array([[1e4, -1e4, 0.0]]))
    onehot = ad.leaf(np.array([[0.0, 1.0, 0.0]]))
    loss = ad.softmax_xent(logits, onehot)
    assert np.isfinite(loss.data[0, 0])
    ad.backward(loss)
    assert np.all(np.isfinite(logits.grad))


def test_shape_mismatch_names_both_shapes():
    a = ad.leaf(np.zeros((2, 3)))
    b = ad.leaf(np.zeros((4, 2)))
    with pytest.raises(DimensionError) as exc:
        ad.matmul(a, b)
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)
    with pytest.raises(DimensionError):
        ad.add(a, ad.leaf(np.zeros((3, 4))))


def test_backward_twice_requires_fresh_forward():
    x = ad.leaf(2.0)
    y = ad.mul(x, x)
    ad.backward(y)
    with pytest.raises(StateError):
        ad.backward(y)
    ad.evaluate(y)
    ad.backward(y)  # re-armed
    assert x.grad[0, 0] == pytest.approx(4.0)


def test_backward_without_data_is_a_state_error():
    x = ad.leaf(1.0)
    x.data = None
    with pytest.raises(StateError):
        ad.backward(x)


def test_nonscalar_root_needs_seed():
    x = ad.leaf(np.ones((2, 3)))
    y = ad.tanh(x)
    with pytest.raises(ContractError):
        ad.backward(y)
    ad.evaluate(y)
    ad.backward(y, seed=np.ones((2, 3)))
    assert x.grad is not None


def test_backward_seed_shape_checked():
    x = ad.leaf(np.ones((2, 3)))
    y = ad.tanh(x)
    with pytest.raises(DimensionError):
        ad.backward(y, seed=np.ones((1, 3)))


def test_evaluate_replays_after_leaf_mutation():
    x = ad.leaf(1.0)
    y = ad.tanh(x)
    x.data[0, 0] = 0.0
    assert ad.evaluate(y).data[0, 0] == 0.0


def test_grad_check_reports_nonfinite_coordinate():
    def fn(v):
        # log of a negative number via softplus'ed trick is hard to force;
        # inject the non-finite value directly through a custom primitive.
        bad = ad.mul(v["x"], v["x"])
        bad.data = np.array([[np.nan]])
        bad._fwd = lambda: np.array([[np.nan]])
        return bad

    with pytest.raises(NumericError) as exc:
        ad.grad_check(fn, {"x": np.array([[1.0]])})
    assert "x" in str(exc.value)
