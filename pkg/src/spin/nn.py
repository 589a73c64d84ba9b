"""Dense MLP layers with hand-written reverse-mode gradients, losses and Adam."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator; ``keys`` derive independent streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class Activation:
    kind: str = "relu"  # "relu" | "leaky_relu" | "identity"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ("relu", "leaky_relu", "identity"):
            raise ValueError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not self.slope > 0:
            raise ValueError("leaky ReLU slope must be positive")

    def forward(self, x):
        if self.kind == "relu":
            return np.where(x > 0, x, 0.0).astype(x.dtype, copy=False)
        if self.kind == "leaky_relu":
            return np.where(x > 0, x, self.slope * x).astype(x.dtype, copy=False)
        return x

    def backward(self, pre, upstream):
        # Gradient at exactly 0 is taken as the negative-side slope.
        if self.kind == "relu":
            return np.where(pre > 0, upstream, 0.0).astype(upstream.dtype, copy=False)
        if self.kind == "leaky_relu":
            return np.where(pre > 0, upstream, self.slope * upstream).astype(upstream.dtype, copy=False)
        return upstream


RELU = Activation("relu")
IDENTITY = Activation("identity")


@dataclass
class Layer:
    weight: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)


@dataclass
class MlpParams:
    layers: list
    activation: Activation = RELU
    final_activation: Activation = IDENTITY

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")

    @classmethod
    def init(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        activation: Activation = RELU,
        final_activation: Activation = IDENTITY,
        dtype=np.float64,
    ) -> "MlpParams":
        """Glorot-uniform weights, zero biases."""
        layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / (d_in + d_out))
            w = rng.uniform(-bound, bound, size=(d_in, d_out)).astype(dtype)
            layers.append(Layer(w, np.zeros(d_out, dtype=dtype)))
        return cls(layers, activation, final_activation)

    @classmethod
    def identity(cls, dim: int, depth: int = 1, activation: Activation = IDENTITY) -> "MlpParams":
        return cls([Layer(np.eye(dim), np.zeros(dim)) for _ in range(depth)], activation, IDENTITY)

    @property
    def d_in(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def d_out(self) -> int:
        return self.layers[-1].weight.shape[1]

    def arrays(self) -> list:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            [Layer(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in self.layers],
            self.activation,
            self.final_activation,
        )

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(
            [Layer(l.weight.astype(dtype), l.bias.astype(dtype)) for l in self.layers],
            self.activation,
            self.final_activation,
        )


@dataclass
class MlpCache:
    inputs: list  # input to each layer
    pre: list  # pre-activation of each layer


@dataclass
class GradientTape:
    """Gradients of one MLP: ``layers`` mirrors the parameters, ``input`` the batch."""

    layers: list
    input: np.ndarray

    def arrays(self) -> list:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out


def mlp_forward(p: MlpParams, x: np.ndarray):
    assert x.ndim == 2 and x.shape[1] == p.d_in, f"expected (*, {p.d_in}) input, got {x.shape}"
    cache = MlpCache([], [])
    h = x
    last = len(p.layers) - 1
    for i, layer in enumerate(p.layers):
        cache.inputs.append(h)
        pre = h @ layer.weight + layer.bias
        cache.pre.append(pre)
        h = (p.final_activation if i == last else p.activation).forward(pre)
    return h, cache


def mlp_backward(p: MlpParams, cache: MlpCache, upstream: np.ndarray) -> GradientTape:
    grads = [None] * len(p.layers)
    g = upstream
    last = len(p.layers) - 1
    for i in range(last, -1, -1):
        act = p.final_activation if i == last else p.activation
        g = act.backward(cache.pre[i], g)
        grads[i] = Layer(cache.inputs[i].T @ g, g.sum(axis=0))
        g = g @ p.layers[i].weight.T
    return GradientTape(grads, g)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def softmax_cross_entropy(logits: np.ndarray, one_hot: np.ndarray):
    """Mean cross-entropy over rows and its gradient w.r.t. ``logits``."""
    if logits.shape != one_hot.shape:
        raise ValueError("logits and labels differ in shape")
    m = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-(one_hot * logp).sum() / m)
    grad = (np.exp(logp) - one_hot) / m
    return loss, grad


def one_hot(labels, num_classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1
    return out


def dropout(x: np.ndarray, rate: float, rng: Optional[np.random.Generator], training: bool):
    """Inverted dropout; returns ``(y, mask)`` with the 1/(1-rate) scale folded into ``mask``."""
    if not 0 <= rate < 1:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0:
        return x, None
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * mask, mask


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, l2: float = 0.0) -> None:
    """One in-place Adam update; ``l2 * theta`` is added to each gradient first."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter, gradient and state lists differ in length")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for theta, g, m, v in zip(params, grads, state.m, state.v):
        if l2:
            g = g + l2 * theta
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        theta -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --- finite differences ----------------------------------------------------

def numerical_gradient(f: Callable[[], float], arrays: Sequence[np.ndarray], eps: float = 1e-5) -> list:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = f()
            flat[i] = old - eps
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * eps)
        out.append(g)
    return out


def max_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                       floor: float = 1e-6) -> float:
    """``max |a - n| / max(|a|, |n|, floor)`` over all entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def group_relative_error(analytic: Sequence[np.ndarray], numeric: Sequence[np.ndarray],
                         floor: float = 1e-12) -> float:
    """Worst per-array ``||a - n||_inf / max(||a||_inf, ||n||_inf)``."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
        if a.size == 0:
            continue
        scale = max(np.abs(a).max(), np.abs(n).max(), floor)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


# --- checkpoint file -------------------------------------------------------

CKPT_MAGIC = b"SPINCKPT"
CKPT_VERSION = 1


def save_checkpoint(path, config_text: str, arrays: Sequence[np.ndarray]) -> None:
    """Write ``magic | version | config text | arrays`` (all little-endian, f64 data)."""
    cfg = config_text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(cfg)))
        fh.write(cfg)
        fh.write(struct.pack("<I", len(arrays)))
        for a in arrays:
            a = np.asarray(a, dtype="<f8")
            fh.write(struct.pack("<I", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
            fh.write(np.ascontiguousarray(a).tobytes())


def load_checkpoint(path):
    """Return ``(config_text, arrays)`` from a checkpoint written by :func:`save_checkpoint`."""
    data = Path(path).read_bytes()
    if data[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a SPINCKPT file")
    version, n_cfg = struct.unpack_from("<II", data, 8)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    pos = 16
    cfg = data[pos:pos + n_cfg].decode("utf-8")
    pos += n_cfg
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy())
        pos += 8 * size
    return cfg, arrays
