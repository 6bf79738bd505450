# -*- coding: utf-8 -*-
"""
One-layer transformer with four switchable axes:

- norm_mode: pre-norm LayerNorm / RMSNorm block, or the spherical stream where
  every residual sum is projected back onto the unit sphere (no affine params).
- unembed_mode: plain linear readout, or tau * cosine(h, W_unembed column).
- attention_mode: learned QK routing, or scores forced to zero before the
  causal mask (uniform averaging over visible positions).
- fourier_init: cos/sin rows written into the numeric token embeddings.

Prediction is read from the final ("=") position only.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from grok_lab.errors import ShapeError
from grok_lab.schemas import ModelConfig
from grok_lab.tensor import (
    Tensor,
    add,
    causal_mask,
    concat,
    gather_rows,
    get_default_dtype,
    l2_normalize,
    layer_norm,
    matmul,
    merge_heads,
    relu,
    rms_norm,
    scale,
    softmax,
    split_heads,
    take_position,
    transpose,
)

INIT_STD = 0.02
NORM_SITES = ("ln1", "ln2", "ln_final")


@dataclass
class Params:
    token_embed: Tensor
    pos_embed: Tensor
    W_Q: List[Tensor]
    W_K: List[Tensor]
    W_V: List[Tensor]
    W_O: Tensor
    W_in: Tensor
    b_in: Tensor
    W_out: Tensor
    b_out: Tensor
    W_unembed: Tensor
    # "<site>.gamma" / "<site>.beta"; empty in spherical mode
    norm: Dict[str, Tensor] = field(default_factory=dict)

    def named_tensors(self) -> Dict[str, Tensor]:
        out: Dict[str, Tensor] = {
            "token_embed": self.token_embed,
            "pos_embed": self.pos_embed,
        }
        for h in range(len(self.W_Q)):
            out[f"attn.{h}.W_Q"] = self.W_Q[h]
            out[f"attn.{h}.W_K"] = self.W_K[h]
            out[f"attn.{h}.W_V"] = self.W_V[h]
        out["attn.W_O"] = self.W_O
        out["mlp.W_in"] = self.W_in
        out["mlp.b_in"] = self.b_in
        out["mlp.W_out"] = self.W_out
        out["mlp.b_out"] = self.b_out
        for name in sorted(self.norm):
            out[name] = self.norm[name]
        out["W_unembed"] = self.W_unembed
        return out

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_tensors().items()}

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: Dict[str, np.ndarray]) -> "Params":
        expected = _expected_shapes(config)
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        if missing or extra:
            raise ShapeError(f"parameter names do not match config (missing={missing}, unexpected={extra})")
        for name, shape in expected.items():
            if tuple(arrays[name].shape) != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {tuple(arrays[name].shape)}")

        def leaf(name: str) -> Tensor:
            arr = arrays[name]
            return Tensor(np.array(arr, copy=True), requires_grad=True, dtype=arr.dtype)

        heads = range(config.n_heads)
        return cls(
            token_embed=leaf("token_embed"),
            pos_embed=leaf("pos_embed"),
            W_Q=[leaf(f"attn.{h}.W_Q") for h in heads],
            W_K=[leaf(f"attn.{h}.W_K") for h in heads],
            W_V=[leaf(f"attn.{h}.W_V") for h in heads],
            W_O=leaf("attn.W_O"),
            W_in=leaf("mlp.W_in"),
            b_in=leaf("mlp.b_in"),
            W_out=leaf("mlp.W_out"),
            b_out=leaf("mlp.b_out"),
            W_unembed=leaf("W_unembed"),
            norm={name: leaf(name) for name in expected if name.split(".")[0] in NORM_SITES},
        )


def _expected_shapes(config: ModelConfig) -> Dict[str, tuple]:
    d, v = config.d_model, config.vocab_size
    shapes = {"token_embed": (v, d), "pos_embed": (config.seq_len, d)}
    for h in range(config.n_heads):
        for w in ("W_Q", "W_K", "W_V"):
            shapes[f"attn.{h}.{w}"] = (d, config.d_head)
    shapes["attn.W_O"] = (config.n_heads * config.d_head, d)
    shapes["mlp.W_in"] = (d, config.d_mlp)
    shapes["mlp.b_in"] = (config.d_mlp,)
    shapes["mlp.W_out"] = (config.d_mlp, d)
    shapes["mlp.b_out"] = (d,)
    if config.norm_mode == "layernorm":
        for site in NORM_SITES:
            shapes[f"{site}.gamma"] = (d,)
            shapes[f"{site}.beta"] = (d,)
    elif config.norm_mode == "rmsnorm":
        for site in NORM_SITES:
            shapes[f"{site}.gamma"] = (d,)
    shapes["W_unembed"] = (d, v)
    return shapes


def init_params(config: ModelConfig, dtype=None) -> Params:
    """
    Seeded i.i.d. N(0, 0.02^2) weights, zero biases, unit norm gains.

    With fourier_init, numeric token x (0 <= x < p, p = vocab_size - 1) gets
    dims (2j, 2j+1) = 0.02 * (cos, sin)(2*pi*k_j*x/p) for the j-th frequency.
    The operator token row keeps its random draw.
    """
    dt = np.dtype(dtype) if dtype is not None else get_default_dtype()
    rng = np.random.default_rng(config.init_seed)
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in _expected_shapes(config).items():
        if name.startswith("mlp.b_") or name.endswith(".beta"):
            arrays[name] = np.zeros(shape)
        elif name.endswith(".gamma"):
            arrays[name] = np.ones(shape)
        else:
            arrays[name] = rng.normal(0.0, INIT_STD, size=shape)

    if config.fourier_init:
        p = config.vocab_size - 1
        x = np.arange(p)
        emb = arrays["token_embed"]
        for j, k in enumerate(config.fourier_freqs):
            angle = 2.0 * np.pi * k * x / p
            emb[:p, 2 * j] = INIT_STD * np.cos(angle)
            emb[:p, 2 * j + 1] = INIT_STD * np.sin(angle)

    return Params.from_arrays(config, {name: arr.astype(dt) for name, arr in arrays.items()})


@dataclass
class ForwardTrace:
    logits: Tensor
    mlp_hidden: Tensor  # post-ReLU, (batch, seq, d_mlp)
    attention: List[np.ndarray]  # per head, (batch, seq, seq)
    # residual stream checkpoints: x0/x1/x2 (pre-norm) or h_in/h_mid/h_l (spherical)
    stream: Dict[str, Tensor]
    final: Tensor  # the stream fed to the unembedding

    @property
    def residual(self) -> Tensor:
        """Last residual state before any readout normalization."""
        return self.stream["h_l"] if "h_l" in self.stream else self.stream["x2"]


def _norm(x: Tensor, params: Params, config: ModelConfig, site: str) -> Tensor:
    if config.norm_mode == "layernorm":
        return layer_norm(x, params.norm[f"{site}.gamma"], params.norm[f"{site}.beta"])
    return rms_norm(x, params.norm[f"{site}.gamma"])


def _attention(x: Tensor, params: Params, config: ModelConfig, weights_out: List[np.ndarray]) -> Tensor:
    batch, seq = x.shape[0], x.shape[1]
    n_heads = config.n_heads
    inv_sqrt = 1.0 / float(np.sqrt(config.d_head))
    # per-head weights side by side, so all heads share one projection
    v = split_heads(matmul(x, concat(params.W_V, axis=-1)), n_heads)
    if config.attention_mode == "uniform":
        scores = Tensor(np.zeros((batch, n_heads, seq, seq)), dtype=x.dtype)
    else:
        q = split_heads(matmul(x, concat(params.W_Q, axis=-1)), n_heads)
        k = split_heads(matmul(x, concat(params.W_K, axis=-1)), n_heads)
        scores = scale(matmul(q, transpose(k)), inv_sqrt)
    weights = softmax(causal_mask(scores), axis=-1)
    weights_out.extend(weights.data[:, h] for h in range(n_heads))
    return matmul(merge_heads(matmul(weights, v)), params.W_O)


def _mlp(x: Tensor, params: Params) -> Tuple[Tensor, Tensor]:
    hidden = relu(add(matmul(x, params.W_in), params.b_in))
    return add(matmul(hidden, params.W_out), params.b_out), hidden


def trace(params: Params, config: ModelConfig, tokens) -> ForwardTrace:
    toks = np.asarray(tokens, dtype=np.int64)
    if toks.ndim != 2 or toks.shape[1] != config.seq_len:
        raise ShapeError(f"tokens must have shape (batch, {config.seq_len}), got {toks.shape}")

    x0 = add(gather_rows(params.token_embed, toks), params.pos_embed)
    attn_weights: List[np.ndarray] = []

    if config.norm_mode == "spherical":
        h_in = l2_normalize(x0, axis=-1)
        h_mid = l2_normalize(add(h_in, _attention(h_in, params, config, attn_weights)), axis=-1)
        mlp_out, hidden = _mlp(h_mid, params)
        h_l = l2_normalize(add(h_mid, mlp_out), axis=-1)
        stream = {"h_in": h_in, "h_mid": h_mid, "h_l": h_l}
        final = h_l
    else:
        x1 = add(x0, _attention(_norm(x0, params, config, "ln1"), params, config, attn_weights))
        mlp_out, hidden = _mlp(_norm(x1, params, config, "ln2"), params)
        x2 = add(x1, mlp_out)
        stream = {"x0": x0, "x1": x1, "x2": x2}
        final = _norm(x2, params, config, "ln_final")

    last = take_position(final, -1)
    if config.unembed_mode == "bounded_cosine":
        cos = matmul(l2_normalize(last, axis=-1), l2_normalize(params.W_unembed, axis=0))
        logits = scale(cos, config.tau)
    else:
        logits = matmul(last, params.W_unembed)

    return ForwardTrace(logits=logits, mlp_hidden=hidden, attention=attn_weights, stream=stream, final=final)


def forward(params: Params, config: ModelConfig, tokens) -> Tensor:
    return trace(params, config, tokens).logits


def mlp_activations(params: Params, config: ModelConfig, tokens) -> np.ndarray:
    """Post-ReLU MLP activations at the final position, (batch, d_mlp)."""
    return trace(params, config, tokens).mlp_hidden.data[:, -1, :]


def unembed_columns(params: Params, config: ModelConfig) -> np.ndarray:
    """W_unembed as used at inference: column-normalized for bounded_cosine."""
    w = params.W_unembed.data
    if config.unembed_mode == "bounded_cosine":
        norms = np.sqrt((w * w).sum(axis=0, keepdims=True))
        return w / np.maximum(norms, 1e-12)
    return w
