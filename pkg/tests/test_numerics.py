import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tripleset import numerics as nx
from tripleset.numerics import Tape, Tensor


def naive_matmul(a, b):
    p, q = a.shape
    q2, r = b.shape
    out = np.zeros((p, r))
    for i in range(p):
        for j in range(r):
            acc = 0.0
            for k in range(q):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def numeric_grad(f, x: Tensor, eps=1e-6):
    g = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + eps
        up = f().item()
        flat[k] = old - eps
        down = f().item()
        flat[k] = old
        g.reshape(-1)[k] = (up - down) / (2 * eps)
    return g


def analytic_grad(f, x: Tensor):
    x.grad = None
    with Tape() as tape:
        out = f()
        tape.backward(out)
    return x.grad


class TestMatmul:
    def test_identity(self):
        out = nx.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 4], [5, 6]]))
        np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_row_times_column(self):
        assert nx.matmul(Tensor([[1, 2]]), Tensor([[3], [4]])).data.tolist() == [[11.0]]

    def test_against_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        # summation order is the same as BLAS for this size, so compare tightly
        np.testing.assert_allclose(nx.matmul(Tensor(a), Tensor(b)).data, naive_matmul(a, b), rtol=1e-14, atol=1e-15)

    def test_batched(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
        out = nx.matmul(Tensor(a), Tensor(b)).data
        for i in range(2):
            np.testing.assert_allclose(out[i], naive_matmul(a[i], b), atol=1e-12)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 2\)"):
            nx.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(nx.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_powers_of_two(self):
        out = nx.softmax(Tensor([np.log(2), 0.0, 0.0])).data
        np.testing.assert_allclose(out, [0.5, 0.25, 0.25], atol=1e-15)

    def test_no_overflow(self):
        out = nx.softmax(Tensor([1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        assert out[0] == 1.0 and out[1] < 1e-300

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (3, 5), elements=st.floats(-50, 50)), st.floats(-100, 100), st.sampled_from([0, 1]))
    def test_normalised_and_shift_invariant(self, x, c, axis):
        a = nx.softmax(Tensor(x), axis=axis).data
        b = nx.softmax(Tensor(x + c), axis=axis).data
        np.testing.assert_allclose(a.sum(axis=axis), 1.0, atol=1e-12)
        assert np.all(a > 0)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        g = analytic_grad(lambda: nx.sum(w), w)
        np.testing.assert_array_equal(g, np.ones((2, 3)))

    def test_sum_of_squares(self):
        w = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        g = analytic_grad(lambda: nx.sum(w * w), w)
        np.testing.assert_array_equal(g, [2.0, 4.0, 6.0])

    def test_non_scalar_rejected(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = w * 2.0
            with pytest.raises(ValueError, match="scalar"):
                tape.backward(y)

    def test_nothing_recorded_without_tape(self):
        w = Tensor([1.0], requires_grad=True)
        y = w * 3.0
        assert y.is_leaf and not y.requires_grad

    def test_tape_is_topologically_ordered(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            nx.sum(nx.tanh(w * w) + w)
        seen = {id(w)}
        for node in tape.nodes:
            for t in node.inputs:
                assert id(t) in seen or not t.requires_grad or t.is_leaf
            seen.add(id(node.out))

    def test_shared_input_accumulates(self):
        w = Tensor([3.0], requires_grad=True)
        g = analytic_grad(lambda: nx.sum(w * w * w + w), w)
        np.testing.assert_allclose(g, [3 * 9.0 + 1.0])


RNG = np.random.default_rng(11)
X = Tensor(RNG.normal(size=(3, 4)), requires_grad=True)
Y = Tensor(RNG.normal(size=(4,)), requires_grad=True)
W = Tensor(RNG.normal(size=(4, 2)), requires_grad=True)
POS = Tensor(RNG.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
GAMMA = Tensor(RNG.normal(size=(4,)), requires_grad=True)
BETA = Tensor(RNG.normal(size=(4,)), requires_grad=True)
TABLE = Tensor(RNG.normal(size=(5, 3)), requires_grad=True)
IDS = np.array([[0, 2, 2], [4, 0, 1]])
WEIGHTS = RNG.normal(size=(3, 4))

OP_CASES = {
    "add_broadcast": (lambda: nx.sum((X + Y) * WEIGHTS), [X, Y]),
    "sub_mul": (lambda: nx.sum((X - Y) * X * WEIGHTS), [X, Y]),
    "div": (lambda: nx.sum(X / POS * WEIGHTS), [X, POS]),
    "matmul": (lambda: nx.sum(nx.matmul(X, W) * nx.matmul(X, W)), [X, W]),
    "tanh": (lambda: nx.sum(nx.tanh(X) * WEIGHTS), [X]),
    "gelu": (lambda: nx.sum(nx.gelu(X) * WEIGHTS), [X]),
    "log": (lambda: nx.sum(nx.log(POS) * WEIGHTS), [POS]),
    "exp": (lambda: nx.sum(nx.exp(X) * WEIGHTS), [X]),
    "softmax_last": (lambda: nx.sum(nx.softmax(X, -1) * WEIGHTS), [X]),
    "softmax_first": (lambda: nx.sum(nx.softmax(X, 0) * WEIGHTS), [X]),
    "layer_norm": (lambda: nx.sum(nx.layer_norm(X, GAMMA, BETA) * WEIGHTS), [X, GAMMA, BETA]),
    "embedding": (lambda: nx.sum(nx.embedding(TABLE, IDS) * nx.embedding(TABLE, IDS)), [TABLE]),
    "index_repeat": (lambda: nx.sum(nx.index(X, (np.array([0, 0, 2]), np.array([1, 1, 3]))) * 2.0), [X]),
    "transpose_reshape": (lambda: nx.sum(nx.reshape(nx.transpose(X), (2, 6)) * WEIGHTS.reshape(2, 6)), [X]),
    "mean_axis": (lambda: nx.sum(nx.mean(X * X, axis=1)), [X]),
    "concat_stack": (lambda: nx.sum(nx.stack([nx.concat([X, X], 0), nx.concat([X, POS], 0)]) * 1.5), [X, POS]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    f, inputs = OP_CASES[name]
    for x in inputs:
        a = analytic_grad(f, x)
        n = numeric_grad(f, x)
        np.testing.assert_allclose(a, n, rtol=1e-5, atol=1e-7)


def test_log_rejects_non_positive():
    with pytest.raises(ValueError):
        nx.log(Tensor([1.0, 0.0]))
    with pytest.raises(ValueError):
        nx.log(Tensor([-1.0]))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (7,), elements=st.floats(-30, 30)))
def test_tanh_open_interval(x):
    out = nx.tanh(Tensor(x)).data
    assert np.all(np.abs(out) <= 1.0)
    small = np.abs(x) < 15
    assert np.all(np.abs(out[small]) < 1.0)


def test_clamp_min_blocks_gradient_below_floor():
    x = Tensor([1e-20, 0.5], requires_grad=True)
    g = analytic_grad(lambda: nx.sum(nx.clamp_min(x, 1e-12)), x)
    np.testing.assert_array_equal(g, [0.0, 1.0])


class TestDropout:
    def test_eval_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert nx.dropout(x, 0.5, None, train=False) is x

    def test_inverted_scaling(self):
        rng = np.random.default_rng(0)
        out = nx.dropout(Tensor(np.ones(100_000)), 0.1, rng, train=True).data
        kept = out[out > 0]
        np.testing.assert_allclose(kept, 1 / 0.9)
        assert abs(out.mean() - 1.0) < 0.01

    def test_train_needs_generator(self):
        with pytest.raises(ValueError):
            nx.dropout(Tensor(np.ones(3)), 0.1, None, train=True)


class TestAdamW:
    def test_zero_gradient_no_decay_leaves_params(self):
        p = Tensor(np.array([0.3, -1.2]), requires_grad=True)
        p.grad = np.zeros(2)
        state = nx.OptimizerState.single([p], lr=0.1, weight_decay=0.0)
        nx.adamw_step([p], state)
        np.testing.assert_array_equal(p.data, [0.3, -1.2])

    def test_one_step_hand_formula(self):
        p0, lr, wd = 0.5, 0.1, 0.01
        b1, b2, eps = 0.9, 0.999, 1e-8
        p = Tensor(np.array([p0]), requires_grad=True)
        p.grad = np.array([1.0])
        state = nx.OptimizerState.single([p], lr=lr, weight_decay=wd, betas=(b1, b2), eps=eps, clip_norm=None)
        nx.adamw_step([p], state)
        m_hat = (1 - b1) * 1.0 / (1 - b1)
        v_hat = (1 - b2) * 1.0 / (1 - b2)
        expected = p0 - lr * wd * p0 - lr * m_hat / (np.sqrt(v_hat) + eps)
        assert p.data[0] == pytest.approx(expected, abs=1e-15)
        assert state.step == 1

    def test_clipping_scales_gradient(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([6.0, 8.0])  # norm 10
        norm = nx.clip_grad_norm([p], 1.0)
        assert norm == pytest.approx(10.0)
        np.testing.assert_allclose(p.grad, [0.6, 0.8], rtol=1e-10)

    def test_clip_applied_before_update(self):
        # with clipping, the first moment sees the clipped gradient
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([6.0, 8.0])
        state = nx.OptimizerState.single([p], lr=0.1, weight_decay=0.0, clip_norm=1.0)
        norm = nx.adamw_step([p], state)
        assert norm == pytest.approx(10.0)
        np.testing.assert_allclose(state.exp_avg[id(p)], 0.1 * np.array([0.6, 0.8]), rtol=1e-9)

    def test_missing_grad_rejected(self):
        p = Tensor(np.zeros(2), requires_grad=True, name="w")
        with pytest.raises(ValueError, match="w"):
            nx.adamw_step([p], nx.OptimizerState.single([p], lr=0.1))

    def test_step_counter_increases(self):
        p = Tensor(np.ones(1), requires_grad=True)
        state = nx.OptimizerState.single([p], lr=0.01)
        for k in range(1, 4):
            p.grad = np.ones(1)
            nx.adamw_step([p], state)
            assert state.step == k


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    params = {"a": rng.normal(size=(3, 4)), "b.c": np.array([np.pi, -0.0, 1e-310]), "scalar": np.array(2.5)}
    nx.save_params(tmp_path / "p.bin", params)
    back = nx.load_params(tmp_path / "p.bin")
    assert list(back) == list(params)
    for k in params:
        assert back[k].shape == params[k].shape
        assert back[k].tobytes() == np.asarray(params[k], dtype="<f8").tobytes()


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"nope")
    with pytest.raises(nx.CheckpointError):
        nx.load_params(tmp_path / "x.bin")
    nx.save_params(tmp_path / "y.bin", {"a": np.ones(4)})
    raw = (tmp_path / "y.bin").read_bytes()
    (tmp_path / "y.bin").write_bytes(raw[:-3])
    with pytest.raises(nx.CheckpointError):
        nx.load_params(tmp_path / "y.bin")
