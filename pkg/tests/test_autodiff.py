import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kalm import autodiff as ad
from kalm.autodiff import (
    Parameter,
    Tensor,
    analytic_gradients,
    compare_gradients,
    grad_check,
    numeric_gradients,
)
from kalm.errors import DimensionError, EmptyInputError, NumericError, StateError


def rand(rng, rows, cols):
    return rng.normal(size=(rows, cols))


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------


def test_matmul_identity():
    m = ad.constant([[3.0, -1.0], [2.0, 5.0]])
    out = ad.matmul(ad.constant(np.eye(2)), m)
    assert np.array_equal(out.value, m.value)


def test_matmul_direct_arithmetic():
    out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[0.0], [1.0]]))
    assert np.array_equal(out.value, [[2.0], [4.0]])


def test_matmul_shape_mismatch_names_both_shapes():
    a = ad.constant(np.zeros((2, 3)))
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(a, ad.constant(np.zeros((2, 3))))


def test_matmul_matches_naive_triple_loop():
    rng = np.random.default_rng(7)
    for _ in range(5):
        a, b = rand(rng, 5, 5), rand(rng, 5, 5)
        expected = np.zeros((5, 5))
        for i in range(5):
            for j in range(5):
                for k in range(5):
                    expected[i, j] += a[i, k] * b[k, j]
        out = ad.matmul(ad.constant(a), ad.constant(b)).value
        assert np.abs(out - expected).max() < 1e-12


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------


def test_softmax_symmetric_row():
    out = ad.softmax_rows(ad.constant([[0.0, 0.0]])).value
    assert np.allclose(out, [[0.5, 0.5]])


def test_softmax_extreme_logits_no_overflow():
    out = ad.softmax_rows(ad.constant([[1000.0, -1000.0]])).value
    assert np.array_equal(out, [[1.0, 0.0]])


def test_softmax_direct_arithmetic():
    out = ad.softmax_rows(ad.constant([[1.0, 2.0, 3.0]])).value
    assert np.abs(out - [[0.0900, 0.2447, 0.6652]]).max() < 1e-4


def test_softmax_empty_raises():
    with pytest.raises(EmptyInputError):
        ad.softmax_rows(ad.constant(np.zeros((0, 3))))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_softmax_rows_are_distributions(rows, cols, seed):
    logits = np.random.default_rng(seed).uniform(-50, 50, (rows, cols))
    out = ad.softmax_rows(ad.constant(logits)).value
    assert np.abs(out.sum(axis=1) - 1.0).max() < 1e-9
    assert (out > 0).all() and (out < 1).all() or cols == 1


# ---------------------------------------------------------------------------
# scaled dot attention
# ---------------------------------------------------------------------------


def test_attention_single_position_passes_value_through():
    out, weights = ad.scaled_dot_attention(
        ad.constant([[2.0]]), ad.constant([[-3.0]]), ad.constant([[7.0]]), 1
    )
    assert np.array_equal(weights.value, [[1.0]])
    assert np.array_equal(out.value, [[7.0]])


def test_attention_constant_logits_give_uniform_weights():
    q = ad.constant([[1.0, 1.0]])
    k = ad.constant([[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]])
    v = ad.constant([[3.0, 0.0], [0.0, 3.0], [3.0, 3.0]])
    out, weights = ad.scaled_dot_attention(q, k, v, 2)
    assert np.allclose(weights.value, 1.0 / 3.0)
    assert np.allclose(out.value, v.value.mean(axis=0, keepdims=True))


def test_attention_direct_arithmetic():
    out, weights = ad.scaled_dot_attention(
        ad.constant([[1.0, 0.0]]),
        ad.constant([[1.0, 0.0], [0.0, 1.0]]),
        ad.constant([[1.0, 0.0], [0.0, 1.0]]),
        2,
    )
    assert np.abs(weights.value - [[0.6698, 0.3302]]).max() < 1e-4
    assert np.abs(out.value - [[0.6698, 0.3302]]).max() < 1e-4


def test_attention_rows_sum_to_one():
    rng = np.random.default_rng(3)
    q, k, v = (ad.constant(rand(rng, 4, 8)) for _ in range(3))
    _, weights = ad.scaled_dot_attention(q, k, v, 8)
    assert np.abs(weights.value.sum(axis=1) - 1.0).max() < 1e-9


def test_attention_shape_errors():
    with pytest.raises(DimensionError):
        ad.scaled_dot_attention(
            ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((2, 4))),
            ad.constant(np.zeros((2, 4))), 3,
        )
    with pytest.raises(DimensionError):
        ad.scaled_dot_attention(
            ad.constant(np.zeros((2, 3))), ad.constant(np.zeros((4, 3))),
            ad.constant(np.zeros((5, 3))), 3,
        )


# ---------------------------------------------------------------------------
# cross entropy
# ---------------------------------------------------------------------------


def test_cross_entropy_perfect_prediction():
    loss = ad.cross_entropy(ad.constant([[1.0, 0.0]]), 0)
    assert abs(loss.value[0, 0]) < 1e-9


def test_cross_entropy_uniform():
    loss = ad.cross_entropy(ad.constant([[1 / 3, 1 / 3, 1 / 3]]), 1)
    assert abs(loss.value[0, 0] - np.log(3)) < 1e-4


def test_cross_entropy_half():
    loss = ad.cross_entropy(ad.constant([[0.5, 0.5]]), 0)
    assert abs(loss.value[0, 0] - 0.6931) < 1e-4


def test_cross_entropy_out_of_range_class():
    with pytest.raises(IndexError):
        ad.cross_entropy(ad.constant([[0.5, 0.5]]), 2)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def test_backward_sum_of_parameter_gives_ones():
    p = Parameter("p", np.arange(6.0).reshape(2, 3))
    ad.sum_all(p).backward()
    assert np.array_equal(p.grad, np.ones((2, 3)))


def test_backward_softmax_cross_entropy_identity():
    logits = Parameter("logits", [[0.3, -1.2, 2.0]])
    probs = ad.softmax_rows(logits)
    ad.cross_entropy(probs, 2).backward()
    onehot = np.array([[0.0, 0.0, 1.0]])
    assert np.abs(logits.grad - (probs.value - onehot)).max() < 1e-9


def test_backward_twice_doubles_gradients():
    p = Parameter("p", [[1.0, 2.0]])
    loss = ad.sum_all(ad.mul(p, p))
    loss.backward()
    once = p.grad.copy()
    loss.backward()
    assert np.array_equal(p.grad, 2.0 * once)


def test_backward_additivity_over_batch():
    rng = np.random.default_rng(11)
    p = Parameter("p", rand(rng, 3, 3))
    xs = [rand(rng, 3, 3) for _ in range(4)]

    def example_loss(x):
        return ad.sum_all(ad.mul(ad.matmul(p, ad.constant(x)), ad.matmul(p, ad.constant(x))))

    per_example = []
    for x in xs:
        p.zero_grad()
        example_loss(x).backward()
        per_example.append(p.grad.copy())
    p.zero_grad()
    for x in xs:
        example_loss(x).backward()
    assert np.abs(p.grad - sum(per_example)).max() < 1e-9


def test_backward_requires_scalar():
    p = Parameter("p", np.ones((2, 2)))
    with pytest.raises(StateError):
        ad.mul(p, p).backward()


def test_non_finite_values_rejected():
    with pytest.raises(NumericError):
        ad.constant([[np.inf, 1.0]])
    with pytest.raises(NumericError):
        ad.constant([[np.nan]])


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def test_grad_check_zero_parameter_model():
    report = grad_check([], lambda: ad.constant([[0.0]]))
    assert report.num_checked == 0
    assert report.max_rel_error == 0.0


def test_grad_check_composite_ops():
    rng = np.random.default_rng(5)
    p = Parameter("p", rand(rng, 4, 3))
    q = Parameter("q", rand(rng, 3, 2))
    c = ad.constant(rand(rng, 4, 2))

    def loss():
        z = ad.add(ad.matmul(p, q), c)
        s = ad.softmax_rows(z)
        ent = ad.mean_row_entropy(s)
        raw = ad.add_const(ad.mean_over_rows(ad.slice_cols(s, 0, 2)), 1e-9)
        norm = ad.div_by_scalar(raw, ad.sum_all(raw))
        kl = ad.sum_all(ad.mul(norm, ad.log(norm)))
        return ad.add(ent, ad.scale(kl, 0.5))

    report = grad_check([p, q], loss)
    assert report.max_rel_error < 1e-6


def test_grad_check_detects_corrupted_gradient():
    rng = np.random.default_rng(9)
    p = Parameter("p", rand(rng, 3, 3))

    def loss():
        return ad.sum_all(ad.mul(ad.matmul(p, ad.transpose(p)), ad.constant(rand(np.random.default_rng(1), 3, 3))))

    analytic = analytic_gradients([p], loss)
    numeric = numeric_gradients([p], loss)
    analytic["p"] *= 1.5  # deliberately corrupted backward rule
    report = compare_gradients(analytic, numeric)
    assert report.max_rel_error > 1e-2


def test_embed_rows_gradient_scatters_repeats():
    table = Parameter("emb", np.arange(12.0).reshape(4, 3))
    out = ad.embed_rows(table, [1, 1, 3])
    ad.sum_all(out).backward()
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    assert np.array_equal(table.grad, expected)
