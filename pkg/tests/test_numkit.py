import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from gradcases import KERNEL_CASES, TOLERANCE, gcae_model_error, transformer_model_error, worst_kernel_error
from oracles import naive_conv1d
from shopformer import numkit as nk
from shopformer.errors import ConfigError, DataError, ShapeError
from shopformer.gcae import GCAE, GCAEConfig
from shopformer.numkit import Tensor, backend
from shopformer.numkit import checkpoint as ckpt_io
from shopformer.numkit.gradcheck import check_gradients, check_model_gradients

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("kernel", sorted(KERNEL_CASES))
def test_kernel_gradients_match_finite_differences(kernel):
    assert worst_kernel_error(kernel) <= TOLERANCE


def test_tiny_gcae_gradients():
    assert gcae_model_error() <= TOLERANCE


def test_tiny_transformer_gradients():
    assert transformer_model_error() <= TOLERANCE


def test_pooled_gcae_gradients():
    cfg = GCAEConfig(num_nodes=17, window=4, num_tokens=2, channels=2, hidden=(2,), dropout=0.0,
                     downsample="pool", residual=False)
    rng = np.random.default_rng(1)
    model = GCAE(cfg, rng).eval()
    x = rng.normal(size=(1, 2, 4, 17))
    err, _ = check_model_gradients(lambda: nk.mse(model(Tensor(x)), Tensor(x)), model.named_parameters())
    assert err <= TOLERANCE


def test_joint_error_tolerates_parameters_with_zero_gradient():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    dead = Tensor(np.array([3.0]), requires_grad=True)
    # shifting all logits together leaves softmax unchanged, so d/d(dead) is exactly zero
    f = lambda: nk.reduce_sum(nk.mul(nk.softmax(nk.add(w, dead)), np.array([1.0, -2.0])))  # noqa: E731
    err, gaps = check_model_gradients(f, {"w": w, "dead": dead})
    assert err <= TOLERANCE and gaps["dead"] < 1e-9


def test_conv1d_matches_direct_loops():
    rng = np.random.default_rng(0)
    for _ in range(30):
        B, cin, cout, V = rng.integers(1, 4, size=4)
        k = int(rng.choice([1, 3, 5]))
        stride, padding = int(rng.integers(1, 4)), int(rng.integers(0, k // 2 + 1))
        T = int(rng.integers(max(1, k - 2 * padding), 9))
        x, w, b = rng.normal(size=(B, cin, T, V)), rng.normal(size=(cout, cin, k)), rng.normal(size=cout)
        got = nk.temporal_conv1d(x, w, b, stride, padding).data
        np.testing.assert_allclose(got, naive_conv1d(x, w, b, stride, padding), rtol=1e-12, atol=1e-12)


def test_conv1d_rejects_channel_mismatch():
    with pytest.raises(ShapeError):
        nk.temporal_conv1d(np.zeros((1, 2, 5, 3)), np.zeros((4, 3, 3)))


def test_backends_agree_bitwise():
    found = backend.available()
    rng = np.random.default_rng(3)
    x, w, b = rng.normal(size=(2, 3, 9, 5)), rng.normal(size=(4, 3, 3)), rng.normal(size=4)
    g = rng.normal(size=(2, 4, 5, 5))
    results = {}
    prev = backend.NAME
    try:
        for name in found:
            backend.use(name)
            xt, wt = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
            out = nk.temporal_conv1d(xt, wt, b, stride=2, padding=1)
            nk.backward(nk.reduce_sum(nk.mul(out, g)))
            results[name] = (out.data, xt.grad, wt.grad)
    finally:
        backend.use(prev)
    ref = results["python"]
    for name, res in results.items():
        for a, r in zip(res, ref):
            np.testing.assert_array_equal(a, r, err_msg=name)


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        backend.use("fortran")


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=5), elements=finite))
def test_softmax_rows_sum_to_one(x):
    y = nk.softmax(x, axis=-1).data
    np.testing.assert_allclose(y.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
    assert np.all(y >= 0)


def test_softmax_gives_zero_weight_to_masked_entries():
    y = nk.softmax(np.array([[0.0, -np.inf, 1.0]])).data
    assert y[0, 1] == 0.0
    np.testing.assert_allclose(y[0, [0, 2]], np.exp([0, 1]) / np.exp([0, 1]).sum())


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (3, 4), elements=finite), st.floats(0.0, 0.9))
def test_dropout_is_identity_at_inference(x, p):
    t = Tensor(x)
    assert nk.dropout(t, p, None, training=False) is t
    assert nk.dropout(t, 0.0, None, training=True) is t


def test_dropout_needs_rng_in_training():
    with pytest.raises(ConfigError):
        nk.dropout(np.ones(3), 0.5, None, training=True)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=3, max_dims=3, max_side=4), elements=finite),
       st.permutations([0, 1, 2]))
def test_reshape_and_transpose_round_trip(x, perm):
    t = nk.transpose(x, perm)
    back = nk.transpose(t, np.argsort(perm))
    np.testing.assert_array_equal(back.data, x)
    np.testing.assert_array_equal(nk.reshape(nk.reshape(x, (-1,)), x.shape).data, x)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, (2, 5), elements=finite))
def test_layer_norm_output_is_standardized(x):
    x = x + np.arange(5) * 0.37  # avoid constant rows
    y = nk.layer_norm(x, np.ones(5), np.zeros(5)).data
    np.testing.assert_allclose(y.mean(axis=-1), 0.0, atol=1e-9)


def test_adam_first_step_moves_by_lr_times_sign():
    p = {"w": np.array([1.0, -2.0, 0.5])}
    g = {"w": np.array([0.3, -4.0, 1e-3])}
    nk.adam_step(p, g, nk.AdamState(), lr=0.1)
    # with bias correction the first update is lr * g/(|g| + eps)
    step = 0.1 * g["w"] / (np.abs(g["w"]) + 1e-8)
    np.testing.assert_allclose(p["w"], np.array([1.0, -2.0, 0.5]) - step, rtol=1e-12)


def test_adam_two_steps_match_hand_computation():
    p, state = {"w": np.array([0.0])}, nk.AdamState()
    b1, b2, lr, eps = 0.9, 0.999, 0.01, 1e-8
    nk.adam_step(p, {"w": np.array([1.0])}, state, lr, b1, b2, eps)
    nk.adam_step(p, {"w": np.array([-2.0])}, state, lr, b1, b2, eps)
    m = b1 * (1 - b1) * 1.0 + (1 - b1) * -2.0
    v = b2 * (1 - b2) * 1.0 + (1 - b2) * 4.0
    expected = -lr * 1.0 / (1.0 + eps) - lr * (m / (1 - b1 ** 2)) / (np.sqrt(v / (1 - b2 ** 2)) + eps)
    np.testing.assert_allclose(p["w"], [expected], rtol=1e-12)
    assert state.step == 2


def test_adam_skips_parameters_without_gradient():
    p = {"a": np.array([1.0]), "b": np.array([2.0])}
    state = nk.AdamState()
    nk.adam_step(p, {"a": np.array([1.0])}, state, lr=0.1)
    assert p["b"][0] == 2.0 and "b" not in state.m


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {"enc.w": rng.normal(size=(3, 4)), "dec.b": rng.normal(size=(5,)), "s": np.array(np.pi)}
    ck = nk.ModelCheckpoint("gcae", {"window": 12, "hidden": [32, 64]}, params, {"seed": 4})
    path = tmp_path / "m.ckpt"
    ckpt_io.save(ck, path)
    back = ckpt_io.load(path)
    assert back.kind == "gcae" and back.config == ck.config and back.meta == ck.meta
    for k, v in params.items():
        assert back.params[k].tobytes() == np.asarray(v).tobytes()
        assert back.params[k].shape == np.asarray(v).shape
    assert back.checksum() == ck.checksum()
    assert ckpt_io.dumps(back) == path.read_bytes()


def test_checkpoint_rejects_bad_magic_and_truncation():
    ck = nk.ModelCheckpoint("x", {}, {"w": np.ones(4)})
    blob = ckpt_io.dumps(ck)
    with pytest.raises(DataError):
        ckpt_io.loads(b"NOTACKPT" + blob[8:])
    with pytest.raises(DataError):
        ckpt_io.loads(blob[:-8])


def test_checksum_prefix_selects_subset():
    ck = nk.ModelCheckpoint("x", {}, {"enc.a": np.ones(2), "dec.a": np.zeros(2)})
    assert ck.checksum("enc.") == nk.params_checksum({"enc.a": np.ones(2)})
    assert ck.checksum("enc.") != ck.checksum()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with nk.no_grad():
        y = nk.mul(x, 2.0)
    assert not y.requires_grad


def test_gradients_accumulate_over_shared_use():
    x = Tensor(np.array([2.0]), requires_grad=True)
    nk.backward(nk.reduce_sum(nk.mul(x, x)))
    assert x.grad[0] == pytest.approx(4.0)


def test_check_gradients_catches_a_wrong_backward():
    from shopformer.numkit.tensor import make_node

    def bad_square(x):
        return make_node(x.data ** 2, (x,), lambda g: (g * x.data,), "bad")  # missing factor 2

    x = Tensor(np.array([1.5, -0.5]), requires_grad=True)
    assert check_gradients(lambda: nk.reduce_sum(bad_square(x)), [x]) > 0.1
