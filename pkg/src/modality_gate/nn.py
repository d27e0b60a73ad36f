"""Parameters, layers, and the SGD update used by the recognizer.

Layers follow the pre-norm transformer idiom: a residual branch computes
``f(LN(x))`` and is added back to ``x``. Initialization is truncated normal
(std 0.02) for projection weights and zeros for biases and positional
tables, so freshly built residual branches start near the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal draw with resampling outside two standard deviations."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


class Parameter:
    """A named, trainable (unless frozen) tensor."""

    def __init__(self, data, name: str = "", frozen: bool = False):
        self.tensor = Tensor(data, requires_grad=True)
        self.name = name
        self.frozen = frozen

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray | None:
        return self.tensor.grad

    def __repr__(self) -> str:
        return f"Parameter({self.name or '<unnamed>'}, shape={self.tensor.shape}, frozen={self.frozen})"


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float
    weight_decay: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def sgd_step(params: Iterable[Parameter], config: SgdConfig) -> None:
    """Apply ``p -= lr * (grad + wd * p)`` and clear gradients.

    Frozen parameters are skipped entirely; a missing gradient on a
    non-frozen parameter is an error.
    """
    for p in params:
        if p.frozen:
            continue
        if p.tensor.grad is None:
            raise ValueError(f"missing gradient for parameter {p.name or '<unnamed>'}")
        update = p.tensor.grad + config.weight_decay * p.tensor.data
        p.tensor.data -= config.learning_rate * update
        ad._check_finite(p.tensor.data, f"sgd_step({p.name})")
        p.tensor.grad = None


class Module:
    """Container with recursive parameter discovery by attribute path."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            path = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        """Stamp dotted path names onto parameters; names must be unique."""
        seen: set[str] = set()
        for name, p in self.named_parameters(prefix):
            if name in seen:
                raise ValueError(f"duplicate parameter name {name}")
            seen.add(name)
            p.name = name


class Linear(Module):
    """Affine layer; ``std=None`` selects fan-in-scaled init (1/sqrt(fan_in)),
    which keeps activations near unit scale at desk widths."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator,
                 bias: bool = True, std: float | None = None):
        scale = std if std is not None else fan_in ** -0.5
        self.weight = Parameter(trunc_normal(rng, (fan_in, fan_out), std=scale))
        self.bias = Parameter(np.zeros(fan_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight.tensor, self.bias.tensor if self.bias else None)

    def named_parameters(self, prefix: str = ""):
        yield (f"{prefix}.weight" if prefix else "weight"), self.weight
        if self.bias is not None:
            yield (f"{prefix}.bias" if prefix else "bias"), self.bias

    def zero_(self) -> None:
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.layer_norm(x, axis=-1) * self.gamma.tensor + self.beta.tensor


class Mlp(Module):
    """Two linear layers with a ReLU in between."""

    def __init__(self, dim: int, rng: np.random.Generator, hidden: int | None = None,
                 out: int | None = None, std: float | None = None):
        hidden = hidden if hidden is not None else dim
        self.fc1 = Linear(dim, hidden, rng, std=std)
        self.fc2 = Linear(hidden, out if out is not None else dim, rng, std=std)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).relu())


class MultiHeadSelfAttention(Module):
    """Self-attention over the second-to-last axis, any leading shape."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, std: float | None = None):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.dim = dim
        self.q = Linear(dim, dim, rng, std=std)
        self.k = Linear(dim, dim, rng, std=std)
        self.v = Linear(dim, dim, rng, std=std)
        self.out = Linear(dim, dim, rng, std=std)

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-2]
        seq = x.shape[-2]
        nd = len(lead) + 3
        # leading dims stay put; swap the sequence and head axes
        perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)

        def heads_first(t: Tensor) -> Tensor:
            return t.reshape(*lead, seq, self.heads, self.head_dim).transpose(perm)

        q = heads_first(self.q(x))
        k = heads_first(self.k(x))
        v = heads_first(self.v(x))
        scores = (q @ k.transpose(tuple(range(nd - 2)) + (nd - 1, nd - 2))) * (self.head_dim ** -0.5)
        attn = scores.softmax(axis=-1)
        mixed = (attn @ v).transpose(perm).reshape(*lead, seq, self.dim)
        return self.out(mixed)
