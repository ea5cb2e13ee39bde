import threading

import numpy as np
import pytest

from onlinevis.config import CONSTANTS
from onlinevis.misc.errors import ConfigurationError, ContractError, DimensionError, FormatError, NumericError
from onlinevis.tensorcore import (
    F, Linear, MLP, Module, RngState, Tensor, backward, check_mode, get_precision, is_grad_enabled, no_grad, parameter,
)
from onlinevis.tensorcore.gradcheck import GRADCHECK_REGISTRY, finite_diff_check, run_gradcheck
from onlinevis.tensorcore.serialization import (
    decode_tensor, encode_tensor, load_checkpoint, read_tensor, save_checkpoint, write_tensor,
)


def test_matmul_identity_and_scalar():
    b = np.arange(12, dtype=np.float64).reshape(3, 4)
    np.testing.assert_allclose(F.matmul(np.eye(3), b).data, b)
    assert F.matmul([[2.0]], [[3.0]]).data.tolist() == [[6.0]]


def test_matmul_matches_triple_loop():
    rng = RngState(0)
    with check_mode():
        a, b = rng.normal((5, 4)), rng.normal((4, 3))
        expected = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for r in range(4):
                    expected[i, j] += a[i, r] * b[r, j]
        np.testing.assert_allclose(F.matmul(a, b).data, expected, atol=1e-6)


def test_matmul_is_associative():
    rng = RngState(1)
    a, b, c = (rng.normal((8, 8)) for _ in range(3))
    left = F.matmul(F.matmul(a, b), c).data
    right = F.matmul(a, F.matmul(b, c)).data
    np.testing.assert_allclose(left, right, atol=1e-5 * np.abs(left).max())


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError) as err:
        F.matmul(np.ones((2, 3)), np.ones((4, 5)))
    assert '(2, 3)' in str(err.value) and '(4, 5)' in str(err.value)


def test_softmax_closed_forms():
    with check_mode():
        np.testing.assert_allclose(F.softmax([0.0, 0.0, 0.0]).data, [1 / 3] * 3)
        x = np.array([1.0, 2.0, 3.0])
        np.testing.assert_allclose(F.softmax(x).data, np.exp(x) / np.exp(x).sum(), atol=1e-7)
        np.testing.assert_allclose(F.softmax(x + 7.5).data, F.softmax(x).data, atol=1e-12)


def test_softmax_rows_sum_to_one():
    rng = RngState(2)
    for _ in range(50):
        x = rng.uniform(-50, 50, (6, 9))
        np.testing.assert_allclose(F.softmax(x, axis=-1).data.sum(axis=-1), 1.0, atol=1e-6)


def test_softmax_rejects_non_finite_input():
    with pytest.raises(NumericError):
        F.softmax([0.0, np.nan, 1.0])


def test_sigmoid_values_and_gradient():
    assert F.sigmoid(0.0).item() == pytest.approx(0.5)
    x = np.linspace(-4, 4, 9)
    np.testing.assert_allclose(F.sigmoid(-x).data, 1 - F.sigmoid(x).data, atol=1e-6)

    with check_mode():
        x = parameter(0.0)
        F.sigmoid(x).backward()
        assert float(x.grad) == pytest.approx(0.25)
        assert finite_diff_check(lambda t: F.sum(F.sigmoid(t)), parameter([0.0])) <= 1e-6


def test_bilinear_sample_on_texel_centres_equals_indexing():
    rng = RngState(3)
    with check_mode():
        feat = rng.normal((3, 4, 4))
        ys, xs = np.mgrid[0:4, 0:4]
        pts = np.stack([(xs.ravel() + 0.5) / 4, (ys.ravel() + 0.5) / 4], axis=1)
        sampled = F.bilinear_sample(feat, pts).data
        np.testing.assert_array_equal(sampled, feat[:, ys.ravel(), xs.ravel()].T)


def test_bilinear_sample_midpoint_and_zero_padding():
    rng = RngState(4)
    with check_mode():
        feat = rng.normal((2, 4, 4))
        midpoint = F.bilinear_sample(feat, [[2 / 4, 1.5 / 4]]).data[0]
        np.testing.assert_allclose(midpoint, (feat[:, 1, 1] + feat[:, 1, 2]) / 2, atol=1e-12)
        outside = F.bilinear_sample(feat, [[-1.0, -1.0]]).data[0]
        np.testing.assert_array_equal(outside, np.zeros(2))


def test_backward_simple_gradients():
    x = parameter(5.0)
    backward(F.mul(x, 1.0))
    assert float(x.grad) == pytest.approx(1.0)

    x = parameter(3.0)
    (x * x).backward()
    assert float(x.grad) == pytest.approx(6.0)


def test_backward_accumulates_until_cleared():
    x = parameter(3.0)
    (x * x).backward()
    (x * x).backward()
    assert float(x.grad) == pytest.approx(12.0)
    x.zero_grad()
    (x * x).backward()
    assert float(x.grad) == pytest.approx(6.0)


def test_backward_into_grads_dict_leaves_params_untouched():
    x = parameter([1.0, 2.0])
    grads = {}
    backward(F.sum(x * x), grads=grads)
    assert x.grad is None
    np.testing.assert_allclose(grads[x], [2.0, 4.0])


def test_backward_rejects_non_scalar_and_unrecorded():
    with pytest.raises(ContractError):
        backward(parameter([1.0, 2.0]) * 2.0)
    with pytest.raises(ContractError):
        backward(Tensor(1.0))


def test_detach_cuts_the_graph():
    x = parameter(3.0)
    y = x * x
    assert x.is_leaf and not y.is_leaf
    d = y.detach()
    assert d.is_leaf and not d.requires_grad
    (x * d).backward()
    assert float(x.grad) == pytest.approx(9.0)


def test_composite_gradient_matches_finite_differences():
    rng = RngState(5)
    with check_mode():
        net = MLP(4, 6, 2, num_layers=3, rng=rng)
        x = parameter(rng.normal((3, 4)))
        err = finite_diff_check(lambda *_: F.sum(F.sigmoid(net(x))), [x, *net.parameters()])
    assert err <= 1e-3


def test_finite_diff_check_contracts():
    with check_mode():
        assert finite_diff_check(lambda t: F.sum(t), parameter(np.ones((2, 3)))) <= 1e-8
        with pytest.raises(ContractError):
            finite_diff_check(lambda t: t * 2.0, parameter(np.ones(3)))
    assert get_precision() == 'f32'
    with pytest.raises(ContractError):
        finite_diff_check(lambda t: F.sum(t), parameter(np.ones(3)))


def test_no_grad_is_thread_local():
    seen = {}

    def worker():
        seen['enabled'] = is_grad_enabled()

    with no_grad():
        assert F.mul(parameter(2.0), 3.0).requires_grad is False
        thread = threading.Thread(target=worker)
        thread.start()
        thread.join()
    assert seen['enabled'] is True
    assert is_grad_enabled()


def test_check_mode_switches_storage_precision():
    assert Tensor([1.0]).dtype == np.float32
    with check_mode():
        assert Tensor([1.0]).dtype == np.float64
    assert get_precision() == 'f32'


def test_rng_state_is_reproducible():
    a, b = RngState(42), RngState(42)
    np.testing.assert_array_equal(a.normal((3,)), b.normal((3,)))
    assert a.integers(0, 100) == b.integers(0, 100)
    assert a.counter == 2
    assert not np.array_equal(a.spawn(0).normal((4,)), a.spawn(1).normal((4,)))


def test_linear_state_dict_names_and_strict_load():
    class Head(Module):
        def __init__(self, rng):
            self.proj = Linear(3, 2, rng)

    head = Head(RngState(0))
    assert sorted(head.state_dict()) == ['proj.bias', 'proj.weight']
    with pytest.raises(ConfigurationError):
        head.load_state_dict({'proj.weight': np.zeros((3, 2))})
    with pytest.raises(ConfigurationError):
        head.load_state_dict({'proj.weight': np.zeros((2, 2)), 'proj.bias': np.zeros(2)})


def test_tensor_file_header_layout():
    data = encode_tensor(np.zeros((2, 3), dtype=np.float32))
    assert data[:4] == CONSTANTS.TENSOR_MAGIC
    assert data[4] == 0 and data[5] == 2
    assert np.frombuffer(data[6:22], dtype='<u8').tolist() == [2, 3]
    assert len(data) == 22 + 2 * 3 * 4

    labels = np.array([[0, 1], [513, 2]], dtype=np.uint16)
    decoded, end = decode_tensor(encode_tensor(labels))
    assert end == 6 + 16 + 8
    np.testing.assert_array_equal(decoded, labels)


def test_tensor_file_errors(tmp_path):
    good = encode_tensor(np.ones(4, dtype=np.float64))
    with pytest.raises(FormatError) as err:
        decode_tensor(b'XXXX' + good[4:])
    assert '@0' in str(err.value) or 'offset 0' in str(err.value)
    with pytest.raises(FormatError):
        decode_tensor(good[:-3])
    with pytest.raises(FormatError):
        decode_tensor(good[:4] + bytes([9]) + good[5:])

    path = tmp_path / 'x.ift'
    write_tensor(path, np.ones(4))
    path.write_bytes(path.read_bytes() + b'\x00')
    with pytest.raises(FormatError):
        read_tensor(path)
    with pytest.raises(FormatError):
        read_tensor(tmp_path / 'missing.ift')


def test_checkpoint_preserves_every_tensor(tmp_path):
    state = {'b.weight': np.arange(6, dtype=np.float32).reshape(2, 3), 'a.bias': np.array([0.5, -1.0])}
    save_checkpoint(tmp_path, state, metadata={'iteration': 7})
    loaded, metadata = load_checkpoint(tmp_path)
    assert metadata['iteration'] == 7
    assert sorted(loaded) == ['a.bias', 'b.weight']
    np.testing.assert_array_equal(loaded['b.weight'], state['b.weight'])
    assert loaded['a.bias'].dtype == np.float64


@pytest.mark.parametrize('name', ['matmul', 'softmax', 'log_softmax', 'layer_norm', 'conv2d', 'bilinear_sample', 'bce_with_logits', 'l2_normalize'])
def test_primitive_gradchecks_pass(name):
    result = run_gradcheck(name, seeds=[0, 1, 2])
    assert result.passed, result
    assert result.seeds == 3


def test_gradcheck_registry_covers_primitives():
    for name in ('add', 'mul', 'div', 'exp', 'log', 'sigmoid', 'relu', 'getitem', 'concat', 'stack', 'upsample_nearest'):
        assert name in GRADCHECK_REGISTRY
