"""Trainable building blocks on the autodiff tape.

Parameters live in a ``ParamStore`` as plain float64 arrays together with
their Adam moments; a store is bound to a tape per forward pass, which
registers each used parameter as a leaf exactly once.  All stochastic pieces
(init, sampling) take explicit seeds through :mod:`textmotion.seeding`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .seeding import stream

CHECKPOINT_MAGIC = b"IAKT"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Named parameter tensors with Adam moment buffers."""

    def __init__(self):
        self.params = {}
        self.m = {}
        self.v = {}
        self.step = 0

    def add(self, name, value):
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        value = np.asarray(value, dtype=np.float64)
        self.params[name] = value
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def bind(self, tape):
        return BoundParams(self, tape)

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))


class BoundParams:
    """Per-tape view of a store: each parameter becomes one leaf tensor.

    Binding with ``tape=None`` hands back the raw arrays, so the same forward
    code runs tape-free (and gradient-free) at inference time.
    """

    def __init__(self, store, tape):
        self.store = store
        self.tape = tape
        self._leaves = {}

    def __getitem__(self, name):
        if self.tape is None:
            return self.store.params[name]
        leaf = self._leaves.get(name)
        if leaf is None:
            leaf = self.tape.leaf(self.store.params[name])
            self._leaves[name] = leaf
        return leaf

    def gradients(self, grads):
        """Collect adjoints for every bound parameter, keyed by name."""
        return {name: grads.wrt(leaf) for name, leaf in self._leaves.items()}


def adam_step(store, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard Adam with bias correction; ``grads`` is keyed like the store."""
    store.step += 1
    t = store.step
    for name, g in grads.items():
        if name not in store.params:
            raise KeyError(f"gradient for unknown parameter {name}")
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        store.params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# initializers and simple layers

def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_mlp(store, prefix, dims, seed):
    """Affine stack ``dims[0] -> ... -> dims[-1]``, tanh between layers."""
    for i in range(len(dims) - 1):
        rng = stream(seed, f"{prefix}.layer", i)
        store.add(f"{prefix}.w{i}", glorot(rng, dims[i], dims[i + 1]))
        store.add(f"{prefix}.b{i}", np.zeros(dims[i + 1]))


def mlp_forward(bound, prefix, x, n_layers, activation="tanh"):
    """Affine stack with the given hidden nonlinearity; linear output layer."""
    act = ad.relu if activation == "relu" else ad.tanh
    for i in range(n_layers):
        x = ad.add(ad.matmul(x, bound[f"{prefix}.w{i}"]), bound[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            x = act(x)
    return x


def layer_norm(bound, prefix, x, eps=1e-5):
    mu = ad.mean(x, axis=-1, keepdims=True)
    centered = ad.sub(x, mu)
    var = ad.mean(ad.mul(centered, centered), axis=-1, keepdims=True)
    normed = ad.div(centered, ad.sqrt(ad.add(var, eps)))
    return ad.add(ad.mul(normed, bound[f"{prefix}.g"]), bound[f"{prefix}.b"])


def _init_layer_norm(store, prefix, width):
    store.add(f"{prefix}.g", np.ones(width))
    store.add(f"{prefix}.b", np.zeros(width))


# ---------------------------------------------------------------------------
# gaussian heads

@dataclass
class GaussianParams:
    """Diagonal Gaussian; log-variance clamped to [-10, 4]."""

    mean: object
    logvar: object

    def __post_init__(self):
        self.logvar = ad.clamp(self.logvar, -10.0, 4.0)


def sample_gaussian(params, noise):
    """Reparameterized draw ``mean + exp(logvar/2) * noise``."""
    return ad.add(params.mean, ad.mul(ad.exp(ad.mul(params.logvar, 0.5)), noise))


# ---------------------------------------------------------------------------
# instruction encoder

@dataclass(frozen=True)
class TextEncoderConfig:
    vocab_size: int
    embed_dim: int = 64
    hidden: int = 128
    out_dim: int = 64


def init_text_encoder(store, cfg, seed):
    rng = stream(seed, "textenc.embed")
    store.add("textenc.embed", rng.normal(0.0, 0.3, size=(cfg.vocab_size, cfg.embed_dim)))
    init_mlp(store, "textenc.mlp", [cfg.embed_dim, cfg.hidden, cfg.out_dim], seed)


def encode_instruction(bound, token_ids):
    """Mean-pooled embeddings of non-pad tokens through a 2-layer MLP.

    All-padding input pools to the zero vector before the MLP.
    """
    ids = np.asarray(token_ids, dtype=np.intp)
    if ids.ndim == 1:
        ids = ids[None, :]
    B, T = ids.shape
    emb = ad.reshape(ad.take(bound["textenc.embed"], ids.reshape(-1)), (B, T, -1))
    mask = (ids != 0).astype(np.float64)[:, :, None]
    count = np.maximum(mask.sum(axis=1), 1.0)
    pooled = ad.div(ad.sum_(ad.mul(emb, mask), axis=1), count)
    return mlp_forward(bound, "textenc.mlp", pooled, 2)


# ---------------------------------------------------------------------------
# trajectory denoiser: per-frame embedding + self-attention blocks

@dataclass(frozen=True)
class DenoiserConfig:
    frame_dim: int
    cond_dim: int = 64
    width: int = 128
    heads: int = 4
    blocks: int = 4
    ff_mult: int = 4
    max_len: int = 256


def sinusoidal_table(n_positions, width):
    """Fixed sin/cos features, one row per position."""
    half = width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = np.arange(n_positions)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


def init_denoiser(store, cfg, seed):
    rng = stream(seed, "denoiser.in")
    store.add("denoiser.win", glorot(rng, cfg.frame_dim, cfg.width))
    store.add("denoiser.bin", np.zeros(cfg.width))
    rng = stream(seed, "denoiser.cond")
    store.add("denoiser.wc", glorot(rng, cfg.cond_dim, cfg.width))
    init_mlp(store, "denoiser.tmlp", [cfg.width, cfg.width, cfg.width], seed)
    w = cfg.width
    for i in range(cfg.blocks):
        rng = stream(seed, "denoiser.block", i)
        _init_layer_norm(store, f"denoiser.b{i}.ln1", w)
        store.add(f"denoiser.b{i}.wqkv", glorot(rng, w, 3 * w, shape=(w, 3 * w)))
        store.add(f"denoiser.b{i}.wo", glorot(rng, w, w))
        _init_layer_norm(store, f"denoiser.b{i}.ln2", w)
        store.add(f"denoiser.b{i}.wf1", glorot(rng, w, cfg.ff_mult * w, shape=(w, cfg.ff_mult * w)))
        store.add(f"denoiser.b{i}.bf1", np.zeros(cfg.ff_mult * w))
        store.add(f"denoiser.b{i}.wf2", glorot(rng, cfg.ff_mult * w, w, shape=(cfg.ff_mult * w, w)))
        store.add(f"denoiser.b{i}.bf2", np.zeros(w))
    _init_layer_norm(store, "denoiser.lnf", w)
    rng = stream(seed, "denoiser.out")
    store.add("denoiser.wout", glorot(rng, w, cfg.frame_dim))
    store.add("denoiser.bout", np.zeros(cfg.frame_dim))


def _attention(bound, prefix, x, cfg, B, L):
    w, H = cfg.width, cfg.heads
    dh = w // H
    qkv = ad.matmul(x, bound[f"{prefix}.wqkv"])              # (B, L, 3w)
    qkv = ad.swapaxes(ad.reshape(qkv, (B, L, 3, H, dh)), 1, 3)  # (B, H, 3, L, dh)
    q = qkv[:, :, 0]
    k = qkv[:, :, 1]
    v = qkv[:, :, 2]
    scores = ad.mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / np.sqrt(dh))
    att = ad.softmax(scores, axis=-1)
    ctx = ad.reshape(ad.swapaxes(ad.matmul(att, v), 1, 2), (B, L, w))
    return ad.matmul(ctx, bound[f"{prefix}.wo"])


def denoiser_forward(bound, cfg, noisy, t, cond):
    """Predict the clean trajectory from (noisy trajectory, step, condition).

    ``noisy`` is (L, D) or (B, L, D); ``t`` is an int or (B,) ints; ``cond``
    is the (B, cond_dim) instruction embedding, broadcast-added per frame.
    """
    data = ad._data(noisy)
    squeeze = data.ndim == 2
    if squeeze:
        noisy = ad.reshape(noisy, (1,) + data.shape)
    B, L, D = ad._data(noisy).shape
    if D != cfg.frame_dim:
        raise ad.ShapeError(f"frame dim {D} != configured {cfg.frame_dim}")

    h = ad.add(ad.matmul(noisy, bound["denoiser.win"]), bound["denoiser.bin"])
    h = ad.add(h, sinusoidal_table(cfg.max_len, cfg.width)[:L])

    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if t_arr.size == 1:
        t_arr = np.full(B, float(t_arr[0]))
    half = cfg.width // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t_arr[:, None] * freqs[None, :]
    t_feats = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    t_emb = mlp_forward(bound, "denoiser.tmlp", t_feats, 2)
    h = ad.add(h, ad.reshape(t_emb, (B, 1, cfg.width)))

    if cond is not None:
        c_emb = ad.matmul(cond if ad._data(cond).ndim == 2 else ad.reshape(cond, (1, -1)),
                          bound["denoiser.wc"])
        h = ad.add(h, ad.reshape(c_emb, (B, 1, cfg.width)))

    for i in range(cfg.blocks):
        p = f"denoiser.b{i}"
        h = ad.add(h, _attention(bound, p, layer_norm(bound, f"{p}.ln1", h), cfg, B, L))
        f = layer_norm(bound, f"{p}.ln2", h)
        f = ad.tanh(ad.add(ad.matmul(f, bound[f"{p}.wf1"]), bound[f"{p}.bf1"]))
        f = ad.add(ad.matmul(f, bound[f"{p}.wf2"]), bound[f"{p}.bf2"])
        h = ad.add(h, f)

    h = layer_norm(bound, "denoiser.lnf", h)
    out = ad.add(ad.matmul(h, bound["denoiser.wout"]), bound["denoiser.bout"])
    if squeeze:
        out = ad.reshape(out, (L, D))
    return out


# ---------------------------------------------------------------------------
# checkpoint io: magic IAKT + versioned named float64 records

def save_checkpoint(path, stores, normalizer=None, extra=None):
    """Serialize named stores (dict name -> ParamStore) plus the normalizer."""
    records = {}
    for store_name, store in stores.items():
        for pname, value in store.params.items():
            records[f"{store_name}/{pname}"] = value
    if normalizer is not None:
        records["normalizer/mean"] = normalizer.mean
        records["normalizer/std"] = normalizer.std
    for key, value in (extra or {}).items():
        records[f"extra/{key}"] = np.asarray(value, dtype=np.float64)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, value in records.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<BI", 0, value.ndim))
            fh.write(struct.pack(f"<{value.ndim}I", *value.shape))
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Records keyed by full name; callers regroup into stores."""
    records = {}
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            dtype_tag, rank = struct.unpack("<BI", fh.read(5))
            if dtype_tag != 0:
                raise ValueError(f"unknown dtype tag {dtype_tag}")
            dims = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(dims)
            records[name] = data.astype(np.float64)
    return records


def store_from_records(records, store_name):
    store = ParamStore()
    prefix = store_name + "/"
    for key, value in records.items():
        if key.startswith(prefix):
            store.add(key[len(prefix):], value)
    return store
