import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rfgan.autodiff import (
    Adam,
    AdamState,
    CheckpointError,
    ComputeGraph,
    NonFiniteError,
    Parameter,
    ShapeError,
    Streams,
    Tensor,
    adam_step,
    backward,
    debug_checks,
    forward,
    grad,
    make_rng,
    no_grad,
)
from rfgan.autodiff import tensor as T
from rfgan.autodiff.checkpoint import dumps, load_checkpoint, loads, save_checkpoint

from fd_cases import CASES, check_case
from oracles import adam_reference, central_difference, rel_error

SEEDS = range(20)


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_matches_central_differences(name):
    worst = max(check_case(name, seed) for seed in SEEDS)
    assert worst < 1e-4, f"{name}: relative error {worst:.2e}"


def test_second_order_through_gradient_norm():
    # d/dx ||d f / d x||^2 with f = sum(tanh(x @ W)): double backprop vs FD of the
    # first-order gradient (itself FD-checked above)
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x0, w = rng.standard_normal((3, 4)), rng.standard_normal((4, 5))

        def sq_norm(x_arr, create_graph):
            x = Tensor(x_arr, requires_grad=True)
            (g,) = grad(T.tanh(x @ Tensor(w)).sum(), [x], create_graph=create_graph)
            return x, (g * g).sum()

        x, obj = sq_norm(x0, True)
        (g2,) = grad(obj, [x])
        fd = central_difference(lambda a: sq_norm(a, False)[1].item(), x0)
        assert rel_error(g2.data, fd) < 1e-4


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x + x
    (g,) = grad(y.sum(), [x])
    np.testing.assert_allclose(g.data, 2 * x.data + 1)


def test_unused_input_gets_zero_gradient():
    a = Tensor(np.ones(3), requires_grad=True)
    b = Tensor(np.ones((2, 2)), requires_grad=True)
    ga, gb = grad((a * 2.0).sum(), [a, b])
    np.testing.assert_array_equal(ga.data, 2.0)
    np.testing.assert_array_equal(gb.data, np.zeros((2, 2)))


def test_grad_requires_scalar_or_grad_outputs():
    a = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        grad(a * 2.0, [a])
    (g,) = grad(a * 2.0, [a], grad_outputs=[Tensor(np.array([1.0, 0.0, 3.0]))])
    np.testing.assert_array_equal(g.data, [2.0, 0.0, 6.0])


def test_backward_accumulates_into_grad():
    p = Parameter(np.array([1.0, 2.0]), name="p")
    backward((p * 3.0).sum())
    backward((p * 3.0).sum())
    np.testing.assert_array_equal(p.grad.data, [6.0, 6.0])
    with pytest.raises(ShapeError):
        backward(p * 1.0)


def test_no_grad_records_nothing():
    a = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        b = a * 2.0
    assert not b.requires_grad and b._parents == ()
    assert (a * 2.0).requires_grad


def test_debug_checks_flag_non_finite():
    a = Tensor(np.array([0.0, 1.0]))
    with np.errstate(divide="ignore"):
        T.log(a)  # allowed outside debug mode
        with debug_checks(), pytest.raises(NonFiniteError):
            T.log(a)


def test_item_rejects_non_scalar():
    assert Tensor(np.array([[2.5]])).item() == 2.5
    with pytest.raises(ValueError):
        Tensor(np.ones(2)).item()


def test_matmul_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_sqrt_subgradient_at_zero_is_zero():
    x = Tensor(np.array([0.0, 4.0]), requires_grad=True)
    (g,) = grad(T.sqrt(x).sum(), [x])
    np.testing.assert_array_equal(g.data, [0.0, 0.25])


def test_tensor_keeps_float32():
    t = Tensor(np.ones(3, dtype=np.float32))
    assert (t * 2.0).dtype == np.float32
    assert Tensor(np.arange(3)).dtype == np.float64


# -- parameters and Adam -----------------------------------------------------

def test_frozen_parameter_gets_no_gradient_and_no_update():
    p = Parameter(np.array([1.0, -1.0]), name="w")
    p.freeze()
    x = Tensor(np.array([2.0, 3.0]), requires_grad=True)
    gp, gx = grad((p * x).sum(), [p, x])
    np.testing.assert_array_equal(gp.data, 0.0)
    np.testing.assert_array_equal(gx.data, [1.0, -1.0])
    before = p.data.tobytes()
    opt = Adam([p], lr=0.1)
    assert opt.params == []
    state = AdamState.fresh(p)
    p.grad = Tensor(np.ones(2))
    adam_step(p, state)
    assert p.data.tobytes() == before and state.t == 0


@pytest.mark.parametrize("seed", range(5))
def test_adam_matches_textbook_reference(seed):
    rng = np.random.default_rng(seed)
    theta0 = rng.standard_normal()
    grads = rng.standard_normal(30) * rng.uniform(0.01, 10)
    p = Parameter(np.array([theta0]), name="theta")
    opt = Adam([p], lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8)
    expected = adam_reference(theta0, grads, 2e-4, 0.5, 0.999, 1e-8)
    for g, want in zip(grads, expected):
        opt.step([Tensor(np.array([g]))])
        assert p.data[0] == pytest.approx(want, rel=1e-12, abs=1e-15)
    assert opt.steps == 30


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first step lr * sign(g) up to eps
    p = Parameter(np.array([0.0, 0.0]), name="p")
    Adam([p], lr=0.01).step([Tensor(np.array([3.0, -0.2]))])
    np.testing.assert_allclose(p.data, [-0.01, 0.01], rtol=1e-6)


def test_adam_zero_lr_leaves_parameters_bit_identical():
    p = Parameter(np.random.default_rng(0).standard_normal(5).astype(np.float32), name="p")
    before = p.data.tobytes()
    opt = Adam([p], lr=0.0)
    for _ in range(10):
        opt.step([Tensor(np.ones(5, dtype=np.float32))])
    assert p.data.tobytes() == before
    assert opt.steps == 10


def test_adam_rejects_non_finite_gradient():
    p = Parameter(np.zeros(2), name="p")
    with pytest.raises(NonFiniteError):
        Adam([p]).step([Tensor(np.array([np.nan, 0.0]))])


def test_adam_default_hyperparameters():
    opt = Adam([Parameter(np.zeros(1))])
    assert (opt.lr, opt.beta1, opt.beta2, opt.eps) == (2e-4, 0.5, 0.999, 1e-8)


def test_assign_copies_and_checks_shape():
    p = Parameter(np.zeros(3), name="p")
    src = np.ones(3)
    p.assign(src)
    src[0] = 5.0
    assert p.data[0] == 1.0
    with pytest.raises(ShapeError):
        p.assign(np.zeros(4))


# -- RNG streams -----------------------------------------------------------------

def test_streams_are_reproducible_and_independent():
    a, b = Streams(7), Streams(7)
    b["eval"].standard_normal(1000)  # extra draws on another stream
    np.testing.assert_array_equal(a["z"].standard_normal(10), b["z"].standard_normal(10))
    assert not np.array_equal(make_rng(7, "z").standard_normal(5),
                              make_rng(8, "z").standard_normal(5))
    assert not np.array_equal(make_rng(7, "z").standard_normal(5),
                              make_rng(7, "data").standard_normal(5))


# -- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"G.0.weight": rng.standard_normal((2, 3)).astype(np.float32),
               "head.bias": np.array([0.5], dtype=np.float32),
               "E.scalar": np.array(3.25),
               "empty": np.zeros((0, 4), dtype=np.float32)}
    path = tmp_path / "x.rfgn"
    save_checkpoint(path, tensors)
    back = load_checkpoint(path)
    assert list(back) == list(tensors)
    for k in tensors:
        assert back[k].dtype == tensors[k].dtype
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_byte_layout():
    blob = dumps({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
    expected = (b"RFGN" + struct.pack("<II", 1, 1) + struct.pack("<H", 2) + b"ab"
                + struct.pack("<B", 2) + struct.pack("<II", 1, 2) + struct.pack("<B", 0)
                + struct.pack("<2f", 1.0, 2.0))
    assert blob == expected


@pytest.mark.parametrize("mutate, message", [
    (lambda b: b"XXXX" + b[4:], "magic"),
    (lambda b: b[:4] + struct.pack("<I", 2) + b[8:], "version"),
    (lambda b: b[:-1], "truncated"),
    (lambda b: b + b"\x00", "trailing"),
    (lambda b: b[:-9] + b"\x07" + b[-8:], "dtype tag"),
])
def test_checkpoint_corruption_is_detected(mutate, message):
    blob = dumps({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
    with pytest.raises(CheckpointError, match=message):
        loads(mutate(blob))


def test_checkpoint_duplicate_names_rejected():
    one = dumps({"w": np.zeros(1, dtype=np.float32)})
    entry = one[12:]
    with pytest.raises(CheckpointError, match="duplicate"):
        loads(b"RFGN" + struct.pack("<II", 1, 2) + entry + entry)


def test_checkpoint_rejects_unsupported_dtype():
    with pytest.raises(CheckpointError):
        dumps({"i": np.arange(3)})


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(
    st.text(min_size=1, max_size=12),
    hnp.arrays(st.sampled_from([np.float32, np.float64]),
               hnp.array_shapes(min_dims=0, max_dims=3, min_side=0, max_side=4)),
    max_size=4))
def test_checkpoint_round_trip_property(tensors):
    back = loads(dumps(tensors))
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].shape == v.shape
        assert back[k].tobytes() == np.ascontiguousarray(v).tobytes()


# -- compute graphs -------------------------------------------------------------

def test_compute_graph_checks_names_and_shapes():
    w = Parameter(np.ones((3, 2)), name="w")
    g = ComputeGraph(lambda x: {"y": x @ w}, {"x": (None, 3)}, [w])
    out = forward(g, {"x": np.ones((5, 3))})
    assert out["y"].shape == (5, 2)
    with pytest.raises(KeyError):
        forward(g, {"x": np.ones((5, 3)), "z": 1})
    with pytest.raises(KeyError):
        forward(g, {})
    with pytest.raises(ShapeError):
        forward(g, {"x": np.ones((5, 4))})
    w.freeze()
    assert g.trainable() == []


@settings(max_examples=50, deadline=None)
@given(hnp.array_shapes(min_dims=1, max_dims=3, max_side=4), st.data())
def test_broadcast_gradients_have_operand_shapes(shape, data):
    # any broadcast-compatible second operand: its gradient sums over broadcast axes
    other = tuple(data.draw(st.sampled_from([1, n])) for n in shape)
    other = other[data.draw(st.integers(0, len(other))):]
    a = Tensor(np.ones(shape), requires_grad=True)
    b = Tensor(np.full(other, 2.0), requires_grad=True)
    ga, gb = grad((a * b).sum(), [a, b])
    assert ga.shape == a.shape and gb.shape == b.shape
    np.testing.assert_array_equal(gb.data, np.prod(shape) / max(np.prod(other), 1))
