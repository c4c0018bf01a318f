"""Randomized gradient-check cases for every differentiable kernel and both full models."""

import numpy as np

from shopformer import numkit as nk
from shopformer.gcae import GCAE, GCAEConfig
from shopformer.numkit import Tensor
from shopformer.numkit.gradcheck import check_gradients, check_model_gradients
from shopformer.transformer import ReconstructionTransformer, TransformerConfig, encode_positions

CASES_PER_KERNEL = 100
TOLERANCE = 1e-4


def _t(rng, *shape, away_from_zero=False):
    data = rng.normal(size=shape)
    if away_from_zero:
        # keep relu inputs outside the finite-difference step around the kink
        data = np.where(np.abs(data) < 0.05, np.sign(data + 1e-12) * 0.05, data)
    return Tensor(data, requires_grad=True)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    """Contract with fixed random weights so every output element matters."""
    return nk.reduce_sum(nk.mul(out, w))


def _small_shape(rng, ndim):
    return tuple(int(d) for d in rng.integers(1, 4, size=ndim))


def case_add(rng):
    shape = _small_shape(rng, 3)
    a, b = _t(rng, *shape), _t(rng, 1, shape[1], 1)  # broadcast
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.add(a, b), w)), [a, b]


def case_sub(rng):
    shape = _small_shape(rng, 2)
    a, b = _t(rng, *shape), _t(rng, shape[1])
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.sub(a, b), w)), [a, b]


def case_mul(rng):
    shape = _small_shape(rng, 3)
    a, b = _t(rng, *shape), _t(rng, shape[0], 1, shape[2])
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.mul(a, b), w)), [a, b]


def case_scale(rng):
    shape = _small_shape(rng, 2)
    a, s = _t(rng, *shape), float(rng.normal())
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.scale(a, s), w)), [a]


def case_matmul(rng):
    m, k, n = (int(v) for v in rng.integers(1, 4, size=3))
    kind = int(rng.integers(0, 4))
    batch = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    if kind == 0:
        a_shape, b_shape = (m, k), (k, n)
    elif kind == 1:
        a_shape, b_shape = batch + (m, k), batch + (k, n)
    elif kind == 2:
        a_shape, b_shape = (m, k), batch + (k, n)   # shared left operand
    else:
        a_shape, b_shape = batch + (m, k), (k, n)   # shared right operand
    a, b = _t(rng, *a_shape), _t(rng, *b_shape)
    w = rng.normal(size=np.matmul(a.data, b.data).shape)
    return (lambda: _weighted(nk.matmul(a, b), w)), [a, b]


def case_graph_aggregate(rng):
    B, C, T, V = (int(v) for v in rng.integers(1, 4, size=4))
    x = _t(rng, B, C, T, V)
    A = _t(rng, V, V) if rng.random() < 0.5 else _t(rng, B, V, V)
    w = rng.normal(size=(B, C, T, V))
    return (lambda: _weighted(nk.graph_aggregate(x, A), w)), [x, A]


def case_relu(rng):
    shape = _small_shape(rng, 3)
    x = _t(rng, *shape, away_from_zero=True)
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.relu(x), w)), [x]


def case_dropout(rng):
    shape = _small_shape(rng, 3)
    x = _t(rng, *shape)
    w = rng.normal(size=shape)
    p = float(rng.uniform(0.1, 0.6))
    seed = int(rng.integers(1 << 30))
    # same mask on every call: re-seed the dropout stream per evaluation
    return (lambda: _weighted(nk.dropout(x, p, np.random.default_rng(seed), True), w)), [x]


def case_sum(rng):
    shape = _small_shape(rng, 3)
    x = _t(rng, *shape)
    axis = [None, 0, 1, 2, (0, 2)][int(rng.integers(0, 5))]
    keep = bool(rng.integers(0, 2))
    w = rng.normal(size=np.sum(x.data, axis=axis, keepdims=keep).shape)
    return (lambda: _weighted(nk.reduce_sum(x, axis=axis, keepdims=keep), w)), [x]


def case_mean(rng):
    shape = _small_shape(rng, 3)
    x = _t(rng, *shape)
    axis = [None, 0, 1, 2, (1, 2)][int(rng.integers(0, 5))]
    keep = bool(rng.integers(0, 2))
    w = rng.normal(size=np.mean(x.data, axis=axis, keepdims=keep).shape)
    return (lambda: _weighted(nk.mean(x, axis=axis, keepdims=keep), w)), [x]


def case_reshape(rng):
    a, b, c = _small_shape(rng, 3)
    x = _t(rng, a, b, c)
    w = rng.normal(size=(a * b, c))
    return (lambda: _weighted(nk.reshape(x, (a * b, c)), w)), [x]


def case_transpose(rng):
    shape = _small_shape(rng, 3)
    x = _t(rng, *shape)
    axes = tuple(int(v) for v in rng.permutation(3))
    w = rng.normal(size=np.transpose(x.data, axes).shape)
    return (lambda: _weighted(nk.transpose(x, axes), w)), [x]


def case_concat(rng):
    a0, b, c = _small_shape(rng, 3)
    axis = int(rng.integers(0, 3))
    shp2 = [a0, b, c]
    shp2[axis] = int(rng.integers(1, 4))
    x, y = _t(rng, a0, b, c), _t(rng, *shp2)
    w = rng.normal(size=np.concatenate([x.data, y.data], axis=axis).shape)
    return (lambda: _weighted(nk.concat([x, y], axis=axis), w)), [x, y]


def case_repeat(rng):
    shape = _small_shape(rng, 3)
    axis, reps = int(rng.integers(0, 3)), int(rng.integers(1, 4))
    x = _t(rng, *shape)
    w = rng.normal(size=np.repeat(x.data, reps, axis=axis).shape)
    return (lambda: _weighted(nk.repeat(x, reps, axis), w)), [x]


def case_softmax(rng):
    shape = _small_shape(rng, 2) + (int(rng.integers(2, 5)),)
    x = _t(rng, *shape)
    mask = None
    if rng.random() < 0.3:  # additive -inf entries, as in causal attention
        mask = np.zeros(shape)
        mask[..., 1:][rng.random(mask[..., 1:].shape) < 0.4] = -np.inf
    w = rng.normal(size=shape)

    def f():
        z = x if mask is None else nk.add(x, mask)
        return _weighted(nk.softmax(z, axis=-1), w)
    return f, [x]


def case_layer_norm(rng):
    shape = _small_shape(rng, 2) + (int(rng.integers(2, 6)),)
    x = _t(rng, *shape)
    gamma, beta = _t(rng, shape[-1]), _t(rng, shape[-1])
    w = rng.normal(size=shape)
    return (lambda: _weighted(nk.layer_norm(x, gamma, beta), w)), [x, gamma, beta]


def case_temporal_conv1d(rng):
    B, cin, cout, V = (int(v) for v in rng.integers(1, 4, size=4))
    k = int(rng.choice([1, 3, 5]))
    stride = int(rng.integers(1, 4))
    padding = int(rng.integers(0, k // 2 + 1))
    T = int(rng.integers(max(1, k - 2 * padding), 8))
    x, wk, b = _t(rng, B, cin, T, V), _t(rng, cout, cin, k), _t(rng, cout)
    t_out = nk.conv_out_len(T, k, stride, padding)
    w = rng.normal(size=(B, cout, t_out, V))
    return (lambda: _weighted(nk.temporal_conv1d(x, wk, b, stride, padding), w)), [x, wk, b]


def case_mse(rng):
    shape = _small_shape(rng, 3)
    a, b = _t(rng, *shape), _t(rng, *shape)
    return (lambda: nk.mse(a, b)), [a, b]


KERNEL_CASES = {
    "add": case_add, "sub": case_sub, "mul": case_mul, "scale": case_scale,
    "matmul": case_matmul, "graph_aggregate": case_graph_aggregate, "relu": case_relu,
    "dropout": case_dropout, "sum": case_sum, "mean": case_mean, "reshape": case_reshape,
    "transpose": case_transpose, "concat": case_concat, "repeat": case_repeat,
    "softmax": case_softmax, "layer_norm": case_layer_norm,
    "temporal_conv1d": case_temporal_conv1d, "mse": case_mse,
}


def worst_kernel_error(name: str, cases: int = CASES_PER_KERNEL, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, len(name), sum(map(ord, name))])
    worst = 0.0
    for _ in range(cases):
        f, inputs = KERNEL_CASES[name](rng)
        worst = max(worst, check_gradients(f, inputs))
    return worst


TINY_GCAE = GCAEConfig(
    num_nodes=5, window=4, num_tokens=2, channels=2, hidden=(3,), dropout=0.0,
    keypoints=(0, 5, 6, 11, 12), bones=((0, 1), (0, 2), (1, 3), (2, 4)),
)
TINY_TRANSFORMER = TransformerConfig(d_model=8, layers=1, heads=2, ff_dim=8, dropout=0.0)


def gcae_model_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    model = GCAE(TINY_GCAE, rng).eval()
    x = rng.normal(size=(2, 2, TINY_GCAE.window, TINY_GCAE.num_nodes))
    err, _ = check_model_gradients(lambda: nk.mse(model(Tensor(x)), Tensor(x)), model.named_parameters())
    return err


def transformer_model_error(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    model = ReconstructionTransformer(TINY_TRANSFORMER, rng).eval()
    x = encode_positions(rng.normal(size=(2, 2, TINY_TRANSFORMER.d_model)))
    err, _ = check_model_gradients(lambda: nk.mse(model(Tensor(x)), Tensor(x)), model.named_parameters())
    return err
