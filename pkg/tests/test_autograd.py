import numpy as np
import pytest

from infosum.autograd import (
    GraphError,
    Tensor,
    entropy_from_logits,
    finite_difference,
    grad_check,
    masked_mean,
    masked_sum,
    pairwise_l2,
)


def rand(rng, *shape):
    return rng.normal(0.0, 1.0, size=shape)


# -- forward fixtures ---------------------------------------------------------


def test_scalar_square():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    assert y.item() == pytest.approx(9.0)
    y.backward()
    assert x.grad == pytest.approx(6.0)


def test_softmax_uniform():
    p = Tensor(np.zeros(4)).softmax()
    np.testing.assert_allclose(p.data, 0.25)


def test_entropy_uniform_is_ln4():
    h = entropy_from_logits(Tensor(np.zeros((1, 4))))
    assert h.data[0] == pytest.approx(np.log(4.0), abs=1e-12)


def test_entropy_gradient_zero_at_uniform():
    logits = Tensor(np.zeros((1, 4)), requires_grad=True)
    entropy_from_logits(logits).sum().backward()
    np.testing.assert_allclose(logits.grad, 0.0, atol=1e-12)


def test_entropy_bounds_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        logits = Tensor(rng.normal(0, 5, size=(3, 7)))
        h = entropy_from_logits(logits).data
        assert np.all(h >= -1e-12) and np.all(h <= np.log(7) + 1e-9)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = Tensor(rng.normal(0, 10, size=(4, 6))).softmax().data
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
        assert np.all(p >= 0)


def test_forward_deterministic():
    rng = np.random.default_rng(2)
    x = rand(rng, 4, 4)
    a = (Tensor(x) @ Tensor(x.T)).softmax().data
    b = (Tensor(x) @ Tensor(x.T)).softmax().data
    np.testing.assert_array_equal(a, b)


# -- error contracts ----------------------------------------------------------


def test_matmul_shape_mismatch_names_op():
    with pytest.raises(GraphError, match="matmul"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))


def test_non_finite_intermediate_names_op():
    big = Tensor(np.full((2, 2), 1e300))
    with pytest.raises(GraphError, match="mul"):
        _ = big * big


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError):
        (x * 2.0).backward()


def test_finite_difference_rejects_bad_step():
    with pytest.raises(ValueError):
        finite_difference(lambda t: t["x"].sum(), {"x": np.ones(2)}, step=0.0)


# -- per-op gradient checks against the finite-difference oracle --------------

OPS = {
    "add": lambda t: (t["a"] + t["b"]).sum(),
    "sub": lambda t: (t["a"] - t["b"]).sum(),
    "mul": lambda t: (t["a"] * t["b"]).sum(),
    "neg": lambda t: (-t["a"]).sum(),
    "matmul": lambda t: (t["a"] @ t["b"].transpose()).sum(),
    "reshape": lambda t: t["a"].reshape(-1).sum(),
    "transpose": lambda t: (t["a"].transpose() * t["b"].transpose()).sum(),
    "mean": lambda t: t["a"].mean(),
    "sum_axis": lambda t: (t["a"].sum(axis=0) * t["b"].sum(axis=0)).sum(),
    "gelu": lambda t: t["a"].gelu().sum(),
    "log_softmax": lambda t: (t["a"].log_softmax() * t["b"]).sum(),
    "softmax": lambda t: (t["a"].softmax() * t["b"]).sum(),
    "entropy": lambda t: entropy_from_logits(t["a"]).sum(),
    "pairwise_l2": lambda t: pairwise_l2(t["a"], t["b"]).sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients_match_oracle(name):
    for seed in range(8):
        rng = np.random.default_rng(seed)
        rows = int(rng.integers(2, 7))
        cols = int(rng.integers(2, 7))
        params = {"a": rand(rng, rows, cols), "b": rand(rng, rows, cols)}
        report = grad_check(OPS[name], params, step=1e-4, tol=1e-4)
        assert report.passed, f"{name} seed {seed}: worst rel err {report.worst():.2e}"


def test_take_rows_and_pick_gradients():
    rng = np.random.default_rng(3)
    weights = rand(rng, 6, 4)
    idx = [0, 2, 2, 5]
    targets = [1, 3, 0, 2]

    def f(t):
        gathered = t["w"].take_rows(idx)
        return gathered.log_softmax().pick(targets).sum()

    assert grad_check(f, {"w": weights}).passed


def test_layer_norm_gradients():
    rng = np.random.default_rng(4)
    params = {"x": rand(rng, 3, 8), "g": rand(rng, 8), "b": rand(rng, 8)}

    def f(t):
        return (t["x"].layer_norm(t["g"], t["b"]) * 0.5).sum()

    assert grad_check(f, params).passed


def test_broadcast_add_gradients():
    rng = np.random.default_rng(5)
    params = {"x": rand(rng, 4, 6), "b": rand(rng, 6)}

    def f(t):
        return ((t["x"] + t["b"]) * (t["x"] + t["b"])).sum()

    assert grad_check(f, params).passed


# -- masked reductions --------------------------------------------------------


def test_masked_mean_all_masked_is_zero_no_grad():
    x = Tensor(np.ones(4), requires_grad=True)
    out = masked_mean(x, np.zeros(4))
    assert out.item() == 0.0
    assert not out.requires_grad


def test_masked_sum_matches_numpy():
    rng = np.random.default_rng(6)
    x = rand(rng, 5)
    mask = np.array([1, 0, 1, 1, 0], dtype=float)
    assert masked_sum(Tensor(x), mask).item() == pytest.approx(float((x * mask).sum()))


def test_masked_sum_shape_mismatch():
    with pytest.raises(GraphError):
        masked_sum(Tensor(np.ones(3)), np.ones(4))


# -- gradient accumulation over shared nodes ----------------------------------


def test_shared_subexpression_accumulates():
    x = Tensor(2.0, requires_grad=True)
    y = x * x + x * 3.0
    y.backward()
    assert x.grad == pytest.approx(2 * 2.0 + 3.0)
