"""Small 1D convolutional classifier with hand-written backpropagation.

Layer stack (index = layer number)::

    0 conv      d -> 6d channels, kernel S0, 'SAME' padding, tanh
    1 maxpool   pool size R1
    2 conv      6d -> 18d channels, kernel S2, 'SAME' padding, tanh
    3 dense     N3 = 18d * T3 -> N4, tanh
    4 dense     N4 -> n logits

Arrays are float64 throughout.  Convolution follows the true-convolution
index convention ``x[i, t + S - 1 - s] * k[i, j, s]`` on the zero-padded
input, i.e. the kernel is applied reversed relative to correlation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

PARAM_NAMES = ("k0", "b0", "k2", "b2", "a3", "b3", "a4", "b4")
FORMAT = "phaseanomaly-model/1"


@dataclass(frozen=True)
class NetworkSpec:
    d: int
    T: int
    n: int
    S0: int
    M1: int
    R1: int
    T2: int
    S2: int
    M3: int
    N3: int
    N4: int

    @property
    def N5(self) -> int:
        return self.n

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {
            "k0": (self.d, self.M1, self.S0),
            "b0": (self.M1,),
            "k2": (self.M1, self.M3, self.S2),
            "b2": (self.M3,),
            "a3": (self.N3, self.N4),
            "b3": (self.N4,),
            "a4": (self.N4, self.n),
            "b4": (self.n,),
        }


def layout(d: int, T: int, n: int) -> NetworkSpec:
    """Layer sizes for input dimension d, window length T and n classes.

    Pooling by 3 is applied only when the window holds at least three full
    pooling blocks (T >= 9); shorter windows are not pooled.
    """
    if d < 1 or T < 2 or n < 2:
        raise ValueError(f"degenerate layout request d={d}, T={T}, n={n}")
    S0 = (T // 6 + 1) * 2 + 1
    M1 = 6 * d
    S2 = (T // 12 + 1) * 2 + 1
    R1 = 3 if T // 3 >= 3 else 1
    T2 = -(-T // R1)
    M3 = 3 * M1
    N3 = M3 * T2
    N4 = math.isqrt(N3 * n)
    return NetworkSpec(d=d, T=T, n=n, S0=S0, M1=M1, R1=R1, T2=T2, S2=S2, M3=M3, N3=N3, N4=N4)


# ---------------------------------------------------------------- layers

def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    return (x[np.newaxis], True) if x.ndim == 2 else (x, False)


def _conv_windows(x: np.ndarray, S: int) -> np.ndarray:
    pad = (S - 1) // 2
    B, M, T = x.shape
    xp = np.zeros((B, M, T + 2 * pad))
    xp[:, :, pad : pad + T] = x
    # (B, T, M, S) with w[b, t, i, u] = xp[b, i, t + u]
    sb, sm, st = xp.strides
    return as_strided(xp, (B, T, M, S), (sb, st, sm, st), writeable=False)


def conv1d_pre(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Pre-activation of a 'SAME' padded convolution, x of shape (B, M, T)."""
    B, M, T = x.shape
    Mi, Mo, S = kernels.shape
    if Mi != M or S % 2 == 0 or bias.shape != (Mo,):
        raise ValueError(f"shape mismatch: x {x.shape}, kernels {kernels.shape}, bias {bias.shape}")
    w = _conv_windows(x, S).reshape(B * T, M * S)
    kmat = kernels[:, :, ::-1].transpose(0, 2, 1).reshape(M * S, Mo)
    return (w @ kmat + bias).reshape(B, T, Mo).transpose(0, 2, 1)


def conv1d_forward(x, kernels, bias) -> np.ndarray:
    """tanh('SAME' convolution + bias) for x of shape (M, T) or (B, M, T)."""
    xb, single = _batched(x)
    out = np.tanh(conv1d_pre(xb, np.asarray(kernels, float), np.asarray(bias, float)))
    return out[0] if single else out


def conv1d_backward(x: np.ndarray, kernels: np.ndarray, grad_pre: np.ndarray):
    """Gradients (dx, dkernels, dbias) given the gradient of the pre-activation."""
    B, M, T = x.shape
    _, Mo, S = kernels.shape
    pad = (S - 1) // 2
    g = grad_pre.transpose(0, 2, 1).reshape(B * T, Mo)
    w = _conv_windows(x, S).reshape(B * T, M * S)
    dkmat = w.T @ g
    dk = dkmat.reshape(M, S, Mo).transpose(0, 2, 1)[:, :, ::-1]
    db = grad_pre.sum(axis=(0, 2))
    kmat = kernels[:, :, ::-1].transpose(0, 2, 1).reshape(M * S, Mo)
    dw = (g @ kmat.T).reshape(B, T, M, S)
    dxp = np.zeros((B, M, T + 2 * pad))
    for u in range(S):
        dxp[:, :, u : u + T] += dw[:, :, :, u].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + T], np.ascontiguousarray(dk), db


def maxpool_forward(x, R: int, return_index: bool = False):
    """Block maxima over the time axis; the final block may be shorter than R."""
    if R < 1:
        raise ValueError("pool size must be >= 1")
    xb, single = _batched(x)
    B, M, T = xb.shape
    To = -(-T // R)
    padded = np.full((B, M, To * R), -np.inf)
    padded[:, :, :T] = xb
    blocks = padded.reshape(B, M, To, R)
    idx = blocks.argmax(axis=3)
    out = np.take_along_axis(blocks, idx[..., np.newaxis], axis=3)[..., 0]
    if single:
        out, idx = out[0], idx[0]
    return (out, idx) if return_index else out


def maxpool_backward(grad: np.ndarray, idx: np.ndarray, T: int, R: int) -> np.ndarray:
    B, M, To = grad.shape
    full = np.zeros((B, M, To, R))
    np.put_along_axis(full, idx[..., np.newaxis], grad[..., np.newaxis], axis=3)
    return full.reshape(B, M, To * R)[:, :, :T]


def dense_forward(x, weights, bias, activation: str = "tanh") -> np.ndarray:
    pre = np.asarray(x, float) @ np.asarray(weights, float) + np.asarray(bias, float)
    if activation == "tanh":
        return np.tanh(pre)
    if activation == "identity":
        return pre
    raise ValueError(f"unknown activation {activation!r}")


def log_softmax(y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    shifted = y - y.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(y: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(y))


def weighted_cross_entropy(y, z: int, w) -> float:
    """-w[z] * log softmax(y)[z]."""
    return float(-np.asarray(w, float)[z] * log_softmax(y)[z])


def batch_losses(logits: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-sample weighted cross-entropy for a batch."""
    lsm = log_softmax(logits)
    return -weights[labels] * lsm[np.arange(len(labels)), labels]


# --------------------------------------------------------------- network

class Network:
    def __init__(self, spec: NetworkSpec, params: dict[str, np.ndarray]):
        shapes = spec.shapes()
        for name in PARAM_NAMES:
            if params[name].shape != shapes[name]:
                raise ValueError(f"parameter {name} has shape {params[name].shape}, expected {shapes[name]}")
        self.spec = spec
        self.params = {k: np.asarray(params[k], dtype=np.float64) for k in PARAM_NAMES}

    def forward(self, x: np.ndarray, keep: bool = False):
        """Logits for a batch (B, d, T); with ``keep`` also the activations."""
        p, sp = self.params, self.spec
        x0, _ = _batched(x)
        x1 = np.tanh(conv1d_pre(x0, p["k0"], p["b0"]))
        x2, pidx = maxpool_forward(x1, sp.R1, return_index=True)
        x3 = np.tanh(conv1d_pre(x2, p["k2"], p["b2"]))
        h = x3.reshape(len(x0), -1)
        x4 = np.tanh(h @ p["a3"] + p["b3"])
        logits = x4 @ p["a4"] + p["b4"]
        if keep:
            return logits, (x0, x1, x2, pidx, x3, h, x4)
        return logits

    def predict(self, x: np.ndarray, batch: int = 2048) -> np.ndarray:
        x, _ = _batched(x)
        out = [np.argmax(self.forward(x[i : i + batch]), axis=1) for i in range(0, len(x), batch)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def loss(self, x: np.ndarray, labels: np.ndarray, weights: np.ndarray) -> float:
        return float(batch_losses(self.forward(x), labels, weights).mean())

    def loss_and_grad(self, x, labels, weights):
        """Mean weighted loss over the batch, its gradient, and the logits."""
        p, sp = self.params, self.spec
        labels = np.asarray(labels, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        logits, (x0, x1, x2, pidx, x3, h, x4) = self.forward(x, keep=True)
        B = len(labels)
        losses = batch_losses(logits, labels, weights)
        dlogits = softmax(logits)
        dlogits[np.arange(B), labels] -= 1.0
        dlogits *= (weights[labels] / B)[:, np.newaxis]

        g = {}
        g["a4"] = x4.T @ dlogits
        g["b4"] = dlogits.sum(axis=0)
        d4 = (dlogits @ p["a4"].T) * (1.0 - x4 * x4)
        g["a3"] = h.T @ d4
        g["b3"] = d4.sum(axis=0)
        d3 = (d4 @ p["a3"].T).reshape(x3.shape) * (1.0 - x3 * x3)
        dx2, g["k2"], g["b2"] = conv1d_backward(x2, p["k2"], d3)
        d1 = maxpool_backward(dx2, pidx, x1.shape[2], sp.R1) * (1.0 - x1 * x1)
        _, g["k0"], g["b0"] = conv1d_backward(x0, p["k0"], d1)
        return float(losses.mean()), g, logits

    def to_dict(self) -> dict:
        return {"spec": asdict(self.spec), "params": {k: self.params[k].tolist() for k in PARAM_NAMES}}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        spec = NetworkSpec(**d["spec"])
        return cls(spec, {k: np.array(v, dtype=np.float64) for k, v in d["params"].items()})


def init_parameters(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights and zero biases, reproducible per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params = {}
    for name, shape in spec.shapes().items():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
            continue
        if len(shape) == 3:
            fan_in, fan_out = shape[0] * shape[2], shape[1] * shape[2]
        else:
            fan_in, fan_out = shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def new_network(d: int, T: int, n: int, seed: int) -> Network:
    spec = layout(d, T, n)
    return Network(spec, init_parameters(spec, seed))


class Adam:
    """ADAM with bias correction; state is reset whenever a network is rebuilt."""

    def __init__(self, params: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def adam_step(params, grads, state: Adam | None = None, lr: float = 1e-3) -> Adam:
    """Functional wrapper: update ``params`` in place and return the optimizer state."""
    if state is None:
        state = Adam(params, lr=lr)
    state.step(params, grads)
    return state
