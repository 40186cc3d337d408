"""Small layer library on top of the autodiff engine.

Modules own named parameter tensors and child modules. `set_trainable(False)`
flips `requires_grad` off for a whole subtree, which both excludes the
parameters from optimizer steps and prunes them out of backward graphs (the
freezing contract used when visual tokenizers are held fixed during
prompt tuning).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}

    def param(self, name, array):
        t = Tensor(np.asarray(array, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def add_module(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        out = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for cname, child in self._children.items():
            out.update(child.named_parameters(prefix=prefix + cname + "."))
        return out

    def trainable_parameters(self, prefix=""):
        return {n: p for n, p in self.named_parameters(prefix).items() if p.requires_grad}

    def set_trainable(self, flag):
        for p in self.named_parameters().values():
            p.requires_grad = bool(flag)
        return self

    @property
    def trainable(self):
        params = self.named_parameters()
        return any(p.requires_grad for p in params.values()) if params else True

    def state(self):
        """Name -> float64 array copy of every parameter."""
        return {n: p.data.copy() for n, p in self.named_parameters().items()}

    def load_state(self, state, strict=True):
        params = self.named_parameters()
        for name, p in params.items():
            if name in state:
                arr = np.asarray(state[name], dtype=np.float64)
                if arr.shape != p.data.shape:
                    raise ValueError(f"shape mismatch for '{name}': {arr.shape} vs {p.data.shape}")
                p.data = arr.copy()
            elif strict:
                raise KeyError(f"missing parameter '{name}' in state")
        if strict:
            unknown = set(state) - set(params)
            if unknown:
                raise KeyError(f"unknown parameters in state: {sorted(unknown)[:4]}...")
        return self


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True, scale=None):
        super().__init__()
        std = scale if scale is not None else 1.0 / np.sqrt(d_in)
        self.w = self.param("w", rng.normal(0.0, std, size=(d_in, d_out)))
        self.b = self.param("b", np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d):
        super().__init__()
        self.gamma = self.param("gamma", np.ones(d))
        self.beta = self.param("beta", np.zeros(d))

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta)


class Embedding(Module):
    def __init__(self, n, d, rng, std=0.02):
        super().__init__()
        self.table = self.param("table", rng.normal(0.0, std, size=(n, d)))

    def __call__(self, idx):
        return ad.embedding(self.table, idx)


class MLP(Module):
    """Two-layer GELU feed-forward block."""

    def __init__(self, d, rng, hidden_mult=4, d_out=None):
        super().__init__()
        self.fc1 = self.add_module("fc1", Linear(d, hidden_mult * d, rng))
        self.fc2 = self.add_module("fc2", Linear(hidden_mult * d, d_out or d, rng))

    def __call__(self, x):
        return self.fc2(ad.gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Full (non-causal) multi-head self-attention over (B, S, d) tokens."""

    def __init__(self, d, heads, rng):
        super().__init__()
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.d, self.heads, self.dh = d, heads, d // heads
        self.wq = self.add_module("wq", Linear(d, d, rng, bias=False))
        self.wk = self.add_module("wk", Linear(d, d, rng, bias=False))
        self.wv = self.add_module("wv", Linear(d, d, rng, bias=False))
        self.wo = self.add_module("wo", Linear(d, d, rng, bias=False))

    def __call__(self, x, mask=None):
        B, S, d = x.shape
        h, dh = self.heads, self.dh

        def split(t):
            return ad.transpose(ad.reshape(t, (B, S, h, dh)), (0, 2, 1, 3))

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        if mask is not None:
            # mask: (B, S) keep-flags -> additive -inf-ish on masked keys
            bias = np.where(np.asarray(mask, dtype=bool), 0.0, -1e9)
            scores = ad.add(scores, Tensor(bias[:, None, None, :]))
        attn = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(attn, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (B, S, d))
        return self.wo(ctx)


class TransformerBlock(Module):
    """Pre-norm attention + feed-forward residual block."""

    def __init__(self, d, heads, rng):
        super().__init__()
        self.ln1 = self.add_module("ln1", LayerNorm(d))
        self.attn = self.add_module("attn", MultiHeadAttention(d, heads, rng))
        self.ln2 = self.add_module("ln2", LayerNorm(d))
        self.mlp = self.add_module("mlp", MLP(d, rng))

    def __call__(self, x, mask=None):
        x = ad.add(x, self.attn(self.ln1(x), mask=mask))
        return ad.add(x, self.mlp(self.ln2(x)))


class Transformer(Module):
    """Stack of blocks with a final layer norm; returns all positions."""

    def __init__(self, d, layers, heads, rng):
        super().__init__()
        self.blocks = [
            self.add_module(f"block{i}", TransformerBlock(d, heads, rng)) for i in range(layers)
        ]
        self.ln_f = self.add_module("ln_f", LayerNorm(d))

    def __call__(self, x, mask=None):
        for block in self.blocks:
            x = block(x, mask=mask)
        return self.ln_f(x)


def sinusoidal_embedding(t, d):
    """Classic sin/cos timestep embedding; plain numpy (not differentiated)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = d // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
