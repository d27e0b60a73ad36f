"""Layers, parameter registry, and the SGD update."""

import numpy as np
import pytest

from modality_gate import autodiff as ad
from modality_gate.nn import (LayerNorm, Linear, Mlp, Module, MultiHeadSelfAttention,
                              Parameter, SgdConfig, sgd_step, trunc_normal)


class TestSgd:
    def test_plain_update(self):
        p = Parameter(np.array([1.0]), name="p")
        p.tensor.grad = np.array([1.0])
        sgd_step([p], SgdConfig(learning_rate=0.1))
        np.testing.assert_allclose(p.data, [0.9])
        assert p.tensor.grad is None

    def test_frozen_parameter_untouched(self):
        p = Parameter(np.array([1.0]), name="p", frozen=True)
        p.tensor.grad = np.array([5.0])
        before = p.data.tobytes()
        sgd_step([p], SgdConfig(learning_rate=0.1))
        assert p.data.tobytes() == before

    def test_weight_decay_update(self):
        # p - lr * (grad + wd * p) = 2 - 0.005 * (0 + 1e-4 * 2)
        p = Parameter(np.array([2.0]), name="p")
        p.tensor.grad = np.array([0.0])
        sgd_step([p], SgdConfig(learning_rate=0.005, weight_decay=1e-4))
        np.testing.assert_allclose(p.data, [2.0 - 0.005 * 2e-4], rtol=0, atol=0)
        assert p.data[0] == pytest.approx(1.999999, abs=1e-9)

    def test_missing_gradient_raises(self):
        p = Parameter(np.array([1.0]), name="p")
        with pytest.raises(ValueError, match="missing gradient"):
            sgd_step([p], SgdConfig(learning_rate=0.1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            SgdConfig(learning_rate=0.1, weight_decay=-1.0)


class TestModules:
    def test_named_parameters_unique_paths(self):
        rng = np.random.default_rng(0)

        class Net(Module):
            def __init__(self):
                self.fc = Linear(3, 4, rng)
                self.blocks = [Mlp(4, rng), Mlp(4, rng)]

        net = Net()
        names = [n for n, _ in net.named_parameters()]
        assert len(names) == len(set(names))
        assert "fc.weight" in names and "blocks.1.fc2.bias" in names
        net.assign_names("net")
        assert all(p.name.startswith("net.") for p in net.parameters())

    def test_layer_norm_affine(self):
        ln = LayerNorm(4)
        ln.gamma.tensor.data[:] = 2.0
        ln.beta.tensor.data[:] = 1.0
        out = ln(ad.Tensor([[1.0, 2.0, 3.0, 4.0]]))
        normalized = ad.layer_norm(ad.Tensor([[1.0, 2.0, 3.0, 4.0]])).data
        np.testing.assert_allclose(out.data, 2.0 * normalized + 1.0)

    def test_linear_zero(self):
        rng = np.random.default_rng(1)
        fc = Linear(3, 2, rng)
        fc.zero_()
        out = fc(ad.Tensor(rng.normal(size=(5, 3))))
        np.testing.assert_allclose(out.data, 0.0)

    def test_attention_preserves_shape(self):
        rng = np.random.default_rng(2)
        attn = MultiHeadSelfAttention(8, 4, rng)
        x = ad.Tensor(rng.normal(size=(2, 3, 5, 8)))
        assert attn(x).shape == (2, 3, 5, 8)

    def test_attention_rejects_bad_heads(self):
        with pytest.raises(ValueError):
            MultiHeadSelfAttention(6, 4, np.random.default_rng(0))

    def test_single_token_attention_is_value_projection(self):
        # softmax over one key is 1, so output = out(v(x))
        rng = np.random.default_rng(3)
        attn = MultiHeadSelfAttention(4, 2, rng)
        x = ad.Tensor(rng.normal(size=(1, 1, 4)))
        expected = attn.out(attn.v(x)).data
        np.testing.assert_allclose(attn(x).data, expected, atol=1e-12)

    def test_trunc_normal_bounds(self):
        rng = np.random.default_rng(4)
        draw = trunc_normal(rng, (2000,), std=0.5)
        assert np.abs(draw).max() <= 1.0 + 1e-12
