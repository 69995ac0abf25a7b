"""A small MLP encoder with hand-written backprop, Adam and EMA updates.

The online copy is trained by gradient descent; the momentum copy tracks it
through an exponential moving average and is the one used at inference.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .errors import DimMismatch, ParseError, ShapeMismatch

XPCK_MAGIC = b"XPCK"
XPCK_VERSION = 1


def act(z):
    return np.tanh(z)


def act_grad(z):
    return 1.0 - np.tanh(z) ** 2


@dataclass
class EncoderParams:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @classmethod
    def init(cls, dims: Sequence[int], seed: int) -> "EncoderParams":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            ws.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
            bs.append(np.zeros(d_out))
        return cls(ws, bs)

    @property
    def dims(self) -> List[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def check_compatible(self, other: "EncoderParams") -> None:
        if len(self.weights) != len(other.weights) or any(
            a.shape != b.shape for a, b in zip(self.arrays(), other.arrays())
        ):
            raise ShapeMismatch("encoder parameter shapes differ")

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]   # input of each affine layer
    pre: List[np.ndarray]      # pre-activation of each affine layer
    out: np.ndarray            # unit-norm embedding
    norm: np.ndarray           # norm of the final pre-activation


def forward_cached(params: EncoderParams, x) -> ForwardCache:
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if h.shape[1] != params.weights[0].shape[1]:
        raise DimMismatch(f"encoder expects dim {params.weights[0].shape[1]}, got {h.shape[1]}")
    inputs, pre = [], []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = z if i == last else act(z)
    norm = np.sqrt(np.einsum("ij,ij->i", h, h))
    return ForwardCache(inputs, pre, h / norm[:, None], norm)


def forward(params: EncoderParams, x) -> np.ndarray:
    """Unit-norm embedding(s); a 1-D input gives a 1-D output."""
    y = forward_cached(params, x).out
    return y[0] if np.ndim(x) == 1 else y


def backward(params: EncoderParams, x, grad_embedding, cache: Optional[ForwardCache] = None) -> EncoderParams:
    """Gradients of ``sum_i grad_embedding[i] . forward(x[i])`` w.r.t. every parameter."""
    if cache is None:
        cache = forward_cached(params, x)
    g = np.atleast_2d(np.asarray(grad_embedding, dtype=np.float64))
    if g.shape != cache.out.shape:
        raise DimMismatch(f"grad shape {g.shape} vs embedding shape {cache.out.shape}")
    y = cache.out
    # Jacobian of z -> z/|z| is (I - y y^T)/|z|
    dz = (g - y * np.einsum("ij,ij->i", g, y)[:, None]) / cache.norm[:, None]
    n_layers = len(params.weights)
    dws, dbs = [None] * n_layers, [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        dws[i] = dz.T @ cache.inputs[i]
        dbs[i] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ params.weights[i]) * act_grad(cache.pre[i - 1])
    return EncoderParams(dws, dbs)


def ema_update(phi_m: EncoderParams, phi_0: EncoderParams, beta: float) -> EncoderParams:
    """In place: phi_m <- beta * phi_m + (1 - beta) * phi_0."""
    phi_m.check_compatible(phi_0)
    for a, b in zip(phi_m.arrays(), phi_0.arrays()):
        a *= beta
        a += (1.0 - beta) * b
    return phi_m


# --- optimiser ------------------------------------------------------------------

def lr_at(epoch: int, base: float = 3.5e-4, decay: float = 0.1, period: int = 20) -> float:
    return base * decay ** (epoch // period)


@dataclass
class OptimizerState:
    m: EncoderParams
    v: EncoderParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: EncoderParams, **kw) -> "OptimizerState":
        return cls(params.zeros_like(), params.zeros_like(), **kw)


def adam_step(params: EncoderParams, grads: EncoderParams, state: OptimizerState, lr: float) -> EncoderParams:
    """One bias-corrected Adam update, applied in place."""
    params.check_compatible(grads)
    params.check_compatible(state.m)
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    phi_0: EncoderParams
    phi_m: EncoderParams
    optimizer: OptimizerState
    epoch: int
    step: int
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Layout (little-endian): magic, u32 version, u32 epoch, u32 step, u32 layers,
    per-layer (u32 out, u32 in), then f32 blocks for phi_0, phi_m, adam m, adam v."""
    dims = ckpt.phi_0.dims
    parts = [XPCK_MAGIC, struct.pack("<IIII", XPCK_VERSION, ckpt.epoch, ckpt.step, len(dims) - 1)]
    for w in ckpt.phi_0.weights:
        parts.append(struct.pack("<II", *w.shape))
    for p in (ckpt.phi_0, ckpt.phi_m, ckpt.optimizer.m, ckpt.optimizer.v):
        ckpt.phi_0.check_compatible(p)
        for a in p.arrays():
            parts.append(np.ascontiguousarray(a, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> Checkpoint:
    blob = open(path, "rb").read()
    if blob[:4] != XPCK_MAGIC:
        raise ParseError(f"{path}: bad checkpoint magic {blob[:4]!r} at offset 0")
    if len(blob) < 20:
        raise ParseError(f"{path}: truncated checkpoint header")
    version, epoch, step, n_layers = struct.unpack_from("<IIII", blob, 4)
    if version != XPCK_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version} (offset 4)")
    off = 20
    shapes = []
    for _ in range(n_layers):
        shapes.append(struct.unpack_from("<II", blob, off))
        off += 8

    def read_params():
        nonlocal off
        ws, bs = [], []
        for d_out, d_in in shapes:
            for shape in ((d_out, d_in), (d_out,)):
                size = int(np.prod(shape)) * 4
                if off + size > len(blob):
                    raise ParseError(f"{path}: truncated parameter block at offset {off}")
                a = np.frombuffer(blob, dtype="<f4", count=size // 4, offset=off).astype(np.float64).reshape(shape)
                (ws if len(shape) == 2 else bs).append(a)
                off += size
        return EncoderParams(ws, bs)

    phi_0, phi_m, m, v = read_params(), read_params(), read_params(), read_params()
    if off != len(blob):
        raise ParseError(f"{path}: {len(blob) - off} trailing bytes at offset {off}")
    return Checkpoint(phi_0, phi_m, OptimizerState(m, v, t=step), epoch, step)
